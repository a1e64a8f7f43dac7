#include "scmcf/model.hpp"

#include <algorithm>
#include <map>
#include <queue>

namespace scmcf {

// ---------------------------------------------------------------------------
// Assignment

Assignment::Assignment(std::initializer_list<Entry> entries) {
  for (const auto& [name, value] : entries) set(name, value);
}

void Assignment::set(const std::string& name, double value) {
  for (auto& e : entries_) {
    if (e.first == name) {
      e.second = value;
      return;
    }
  }
  entries_.emplace_back(name, value);
}

std::optional<double> Assignment::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  return std::nullopt;
}

double Assignment::at(const std::string& name) const {
  if (auto v = get(name)) return *v;
  throw Error(ErrorKind::UnknownVariable, "assignment has no value for '" + name + "'");
}

bool Assignment::contains(const std::string& name) const { return get(name).has_value(); }

std::vector<std::string> Assignment::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

bool Assignment::operator==(const Assignment& other) const {
  if (size() != other.size()) return false;
  for (const auto& [name, value] : entries_) {
    auto v = other.get(name);
    if (!v || *v != value) return false;
  }
  return true;
}

std::string to_string(const Assignment& a) {
  std::string out = "(";
  bool first = true;
  for (const auto& [name, value] : a) {
    if (!first) out += ", ";
    first = false;
    out += name + "=" + format_number(value);
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// CausalModel construction and validation

CausalModel::CausalModel(std::vector<VariableDecl> exogenous,
                         std::vector<VariableDecl> endogenous, std::vector<StructuralLaw> laws)
    : exogenous_(std::move(exogenous)), endogenous_(std::move(endogenous)), laws_(std::move(laws)) {
  try {
    check();
    compile();
  } catch (const Error& e) {
    error_kind_ = e.kind();
    error_message_ = e.what();
  }
}

namespace {

// Stop exhaustive closure checks beyond this many input combinations; larger
// laws are taken on contract like continuous ones.
constexpr std::size_t kClosureLimit = std::size_t{1} << 20;

}  // namespace

void CausalModel::check() {
  std::set<std::string> names;
  for (const auto* group : {&exogenous_, &endogenous_}) {
    for (const auto& d : *group) {
      if (d.name.empty()) throw Error(ErrorKind::ValidationError, "empty variable name");
      if (!names.insert(d.name).second) {
        throw Error(ErrorKind::DuplicateVariable, "variable '" + d.name + "' declared twice");
      }
    }
  }

  law_of_.assign(endogenous_.size(), laws_.size());
  for (std::size_t li = 0; li < laws_.size(); ++li) {
    const auto& law = laws_[li];
    auto idx = endogenous_index(law.target);
    if (!idx) {
      if (exogenous_index(law.target)) {
        throw Error(ErrorKind::ValidationError,
                    "law targets exogenous variable '" + law.target + "'");
      }
      throw Error(ErrorKind::UnknownVariable, "law targets undeclared variable '" + law.target + "'");
    }
    if (law_of_[*idx] != laws_.size()) {
      throw Error(ErrorKind::ValidationError, "variable '" + law.target + "' has two laws");
    }
    law_of_[*idx] = li;
    for (const auto& ref : law.function.variables()) {
      if (!names.count(ref)) {
        throw Error(ErrorKind::UnknownVariable,
                    "law for '" + law.target + "' references undeclared variable '" + ref + "'");
      }
      if (ref == law.target) {
        throw Error(ErrorKind::CyclicModel, "law for '" + law.target + "' references itself");
      }
    }
  }
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    if (law_of_[i] == laws_.size()) {
      throw Error(ErrorKind::MissingLaw, "no law for '" + endogenous_[i].name + "'");
    }
  }

  // Kahn's algorithm; the ready set is ordered by declaration index.
  std::vector<std::vector<std::size_t>> children(endogenous_.size());
  std::vector<std::size_t> indegree(endogenous_.size(), 0);
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    for (const auto& ref : laws_[law_of_[i]].function.variables()) {
      if (auto p = endogenous_index(ref)) {
        children[*p].push_back(i);
        ++indegree[i];
      }
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  order_.clear();
  while (!ready.empty()) {
    std::size_t i = ready.top();
    ready.pop();
    order_.push_back(i);
    for (std::size_t c : children[i]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order_.size() != endogenous_.size()) {
    std::string cyc;
    for (std::size_t i = 0; i < endogenous_.size(); ++i) {
      if (indegree[i] > 0) cyc += (cyc.empty() ? "" : ", ") + endogenous_[i].name;
    }
    throw Error(ErrorKind::CyclicModel, "dependency cycle among {" + cyc + "}");
  }

  // Finite closure: every law maps every combination of finite inputs into
  // its target's domain.
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    const auto& target = endogenous_[i];
    if (target.domain.is_real_line()) continue;
    const auto& law = laws_[law_of_[i]];
    auto refs = law.function.variables();
    std::vector<const Domain*> doms;
    std::size_t combos = 1;
    bool checkable = true;
    for (const auto& r : refs) {
      const Domain& d = find(r)->domain;
      if (!d.is_finite() || combos > kClosureLimit / d.size()) {
        checkable = false;
        break;
      }
      combos *= d.size();
      doms.push_back(&d);
    }
    if (!checkable) continue;
    CompiledExpression prog(law.function, [&](const std::string& n) {
      return static_cast<std::size_t>(std::find(refs.begin(), refs.end(), n) - refs.begin());
    });
    std::vector<std::size_t> digit(refs.size(), 0);
    std::vector<double> vals(refs.size());
    for (std::size_t c = 0; c < combos; ++c) {
      for (std::size_t k = 0; k < refs.size(); ++k) vals[k] = doms[k]->values()[digit[k]];
      double out = prog.evaluate(vals);
      if (!target.domain.contains(out)) {
        Assignment at;
        for (std::size_t k = 0; k < refs.size(); ++k) at.set(refs[k], vals[k]);
        throw Error(ErrorKind::DomainMismatch, "law for '" + target.name + "' yields " +
                                                   format_number(out) + " outside its domain at " +
                                                   to_string(at));
      }
      for (std::size_t k = refs.size(); k-- > 0;) {
        if (++digit[k] < doms[k]->size()) break;
        digit[k] = 0;
      }
    }
  }
}

void CausalModel::compile() {
  compiled_.clear();
  compiled_.reserve(endogenous_.size());
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    compiled_.emplace_back(laws_[law_of_[i]].function,
                           [&](const std::string& n) { return slot_of(n); });
  }
}

void CausalModel::validate() const {
  if (error_kind_) throw Error(*error_kind_, error_message_.substr(error_message_.find(": ") + 2));
}

void CausalModel::require_valid() const { validate(); }

// ---------------------------------------------------------------------------
// lookups

const VariableDecl* CausalModel::find(const std::string& name) const {
  for (const auto* group : {&exogenous_, &endogenous_}) {
    for (const auto& d : *group) {
      if (d.name == name) return &d;
    }
  }
  return nullptr;
}

std::optional<VariableKind> CausalModel::kind_of(const std::string& name) const {
  if (exogenous_index(name)) return VariableKind::Exogenous;
  if (endogenous_index(name)) return VariableKind::Endogenous;
  return std::nullopt;
}

const Domain& CausalModel::domain(const std::string& name) const {
  if (const auto* d = find(name)) return d->domain;
  throw Error(ErrorKind::UnknownVariable, "unknown variable '" + name + "'");
}

const StructuralLaw& CausalModel::law_for(const std::string& target) const {
  require_valid();
  auto idx = endogenous_index(target);
  if (!idx) throw Error(ErrorKind::UnknownVariable, "no endogenous variable '" + target + "'");
  return laws_[law_of_[*idx]];
}

std::optional<std::size_t> CausalModel::exogenous_index(const std::string& name) const {
  for (std::size_t i = 0; i < exogenous_.size(); ++i) {
    if (exogenous_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> CausalModel::endogenous_index(const std::string& name) const {
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    if (endogenous_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t CausalModel::slot_of(const std::string& name) const {
  if (auto i = exogenous_index(name)) return *i;
  if (auto i = endogenous_index(name)) return exogenous_.size() + *i;
  throw Error(ErrorKind::UnknownVariable, "unknown variable '" + name + "'");
}

std::vector<std::string> CausalModel::parents(const std::string& target) const {
  std::vector<std::string> out;
  for (const auto& r : law_for(target).function.variables()) {
    if (endogenous_index(r)) out.push_back(r);
  }
  return out;
}

std::vector<std::string> CausalModel::noises(const std::string& target) const {
  std::vector<std::string> out;
  for (const auto& r : law_for(target).function.variables()) {
    if (exogenous_index(r)) out.push_back(r);
  }
  return out;
}

bool CausalModel::all_finite() const {
  for (const auto* group : {&exogenous_, &endogenous_}) {
    for (const auto& d : *group) {
      if (!d.domain.is_finite()) return false;
    }
  }
  return true;
}

bool CausalModel::operator==(const CausalModel& other) const {
  if (exogenous_ != other.exogenous_ || endogenous_ != other.endogenous_) return false;
  if (laws_.size() != other.laws_.size()) return false;
  // Compare laws per target so law order in the source does not matter.
  for (const auto& law : laws_) {
    auto it = std::find_if(other.laws_.begin(), other.laws_.end(),
                           [&](const StructuralLaw& l) { return l.target == law.target; });
    if (it == other.laws_.end() || !(it->function == law.function)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// solving and surgery

std::vector<std::string> CausalModel::topological_order() const {
  require_valid();
  std::vector<std::string> out;
  out.reserve(order_.size());
  for (std::size_t i : order_) out.push_back(endogenous_[i].name);
  return out;
}

void CausalModel::solve_slots(std::span<double> slots) const {
  const std::size_t base = exogenous_.size();
  for (std::size_t i : order_) {
    double v = compiled_[i].evaluate(slots);
    slots[base + i] = endogenous_[i].domain.snap(v);
  }
}

Assignment CausalModel::solve(const Assignment& u) const {
  require_valid();
  std::vector<double> slots(slot_count(), 0.0);
  std::vector<bool> seen(exogenous_.size(), false);
  for (const auto& [name, value] : u) {
    auto i = exogenous_index(name);
    if (!i) {
      if (endogenous_index(name)) {
        throw Error(ErrorKind::ValidationError,
                    "solve takes exogenous values only, got '" + name + "'");
      }
      throw Error(ErrorKind::UnknownVariable, "unknown variable '" + name + "'");
    }
    if (!exogenous_[*i].domain.contains(value)) {
      throw Error(ErrorKind::DomainMismatch,
                  format_number(value) + " is outside the domain of '" + name + "'");
    }
    slots[*i] = exogenous_[*i].domain.snap(value);
    seen[*i] = true;
  }
  for (std::size_t i = 0; i < exogenous_.size(); ++i) {
    if (!seen[i]) {
      throw Error(ErrorKind::IncompleteAssignment,
                  "no value for exogenous variable '" + exogenous_[i].name + "'");
    }
  }
  solve_slots(slots);
  Assignment out;
  for (std::size_t i = 0; i < endogenous_.size(); ++i) {
    out.set(endogenous_[i].name, slots[exogenous_.size() + i]);
  }
  return out;
}

CausalModel CausalModel::submodel(const Assignment& x) const {
  require_valid();
  std::vector<StructuralLaw> laws = laws_;
  for (const auto& [name, value] : x) {
    auto i = endogenous_index(name);
    if (!i) {
      if (exogenous_index(name)) {
        throw Error(ErrorKind::ValidationError,
                    "cannot intervene on exogenous variable '" + name + "'");
      }
      throw Error(ErrorKind::UnknownVariable, "unknown variable '" + name + "'");
    }
    const Domain& d = endogenous_[*i].domain;
    if (!d.contains(value)) {
      throw Error(ErrorKind::DomainMismatch,
                  format_number(value) + " is outside the domain of '" + name + "'");
    }
    laws[law_of_[*i]].function = Expression::constant(d.snap(value));
  }
  return CausalModel(exogenous_, endogenous_, std::move(laws));
}

std::set<std::string> CausalModel::ancestors(const std::vector<std::string>& targets) const {
  require_valid();
  std::set<std::string> out;
  std::vector<std::string> stack;
  for (const auto& t : targets) {
    if (!find(t)) throw Error(ErrorKind::UnknownVariable, "unknown variable '" + t + "'");
    stack.push_back(t);
  }
  while (!stack.empty()) {
    std::string v = std::move(stack.back());
    stack.pop_back();
    if (!out.insert(v).second) continue;
    if (auto i = endogenous_index(v)) {
      for (const auto& r : laws_[law_of_[*i]].function.variables()) stack.push_back(r);
    }
  }
  return out;
}

std::set<std::string> CausalModel::descendants(const std::vector<std::string>& roots) const {
  require_valid();
  std::set<std::string> out;
  for (const auto& r : roots) {
    if (!find(r)) throw Error(ErrorKind::UnknownVariable, "unknown variable '" + r + "'");
    out.insert(r);
  }
  for (std::size_t i : order_) {
    if (out.count(endogenous_[i].name)) continue;
    for (const auto& r : laws_[law_of_[i]].function.variables()) {
      if (out.count(r)) {
        out.insert(endogenous_[i].name);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// affine reduced form

std::optional<AffineReducedForm> affine_reduced_form(const CausalModel& model) {
  model.validate();
  for (const auto* group : {&model.exogenous(), &model.endogenous()}) {
    for (const auto& d : *group) {
      if (!d.domain.is_real_line()) return std::nullopt;
    }
  }
  const std::size_t m = model.exogenous().size();
  const std::size_t n = model.endogenous().size();
  AffineReducedForm form;
  for (const auto& d : model.exogenous()) form.exogenous.push_back(d.name);
  for (const auto& d : model.endogenous()) form.endogenous.push_back(d.name);
  form.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  form.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (const auto& name : model.topological_order()) {
    auto row = static_cast<Eigen::Index>(*model.endogenous_index(name));
    auto af = affine_form(model.law_for(name).function);
    if (!af) return std::nullopt;
    form.b(row) = af->constant;
    for (const auto& [ref, c] : af->coefficients) {
      if (auto u = model.exogenous_index(ref)) {
        form.A(row, static_cast<Eigen::Index>(*u)) += c;
      } else {
        auto p = static_cast<Eigen::Index>(*model.endogenous_index(ref));
        form.A.row(row) += c * form.A.row(p);
        form.b(row) += c * form.b(p);
      }
    }
  }
  return form;
}

LinearGaussianCheck is_linear_additive_gaussian_compatible(const CausalModel& model) {
  LinearGaussianCheck out;
  auto form = affine_reduced_form(model);
  if (!form) {
    out.reason = "a law is not affine or a variable is not real-valued";
    return out;
  }
  std::map<std::string, std::string> owner;
  for (const auto& law : model.laws()) {
    auto af = affine_form(law.function);
    std::size_t noise_terms = 0;
    for (const auto& [ref, c] : af->coefficients) {
      if (!model.exogenous_index(ref) || c == 0.0) continue;
      ++noise_terms;
      if (c != 1.0) {
        out.reason = "noise '" + ref + "' enters '" + law.target + "' with coefficient " +
                     format_number(c);
        return out;
      }
      auto [it, fresh] = owner.emplace(ref, law.target);
      if (!fresh) {
        out.reason = "noise '" + ref + "' feeds both '" + it->second + "' and '" + law.target + "'";
        return out;
      }
    }
    if (noise_terms > 1) {
      out.reason = "law for '" + law.target + "' has more than one noise term";
      return out;
    }
  }
  out.compatible = true;
  out.form = std::move(*form);
  return out;
}

}  // namespace scmcf
