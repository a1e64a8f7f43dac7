#include "scmcf/model_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace scmcf {

namespace {

// Shortest text that parses back to the same double; files must round-trip.
std::string exact_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

[[noreturn]] void parse_fail(int line, int column, const std::string& message) {
  throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message);
}

// Cursor over one line of a model file.
class LineReader {
 public:
  LineReader(std::string_view text, int line) : text_(text), line_(line) {}

  int line() const { return line_; }
  int column() const { return static_cast<int>(pos_) + 1; }
  std::string_view rest() const { return text_.substr(pos_); }
  void advance(std::size_t n) { pos_ += n; }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  bool peek(char c) {
    skip_space();
    return pos_ < text_.size() && text_[pos_] == c;
  }
  bool accept(std::string_view tok) {
    skip_space();
    if (text_.substr(pos_, tok.size()) != tok) return false;
    pos_ += tok.size();
    return true;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }
  void expect_end() {
    if (!at_end()) fail("unexpected text '" + std::string(rest()) + "'");
  }

  std::string identifier() {
    skip_space();
    std::size_t start = pos_;
    if (pos_ >= text_.size() || !is_identifier_start(text_[pos_])) fail("expected a name");
    while (pos_ < text_.size() && is_identifier_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  double number() {
    skip_space();
    double value = 0.0;
    const char* begin = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(begin, text_.data() + text_.size(), value);
    if (ec != std::errc() || ptr == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  // A bare word or number as written, for values read through a domain.
  std::string word() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ':' || c == ')' || c == ']' || c == '}')
        break;
      ++pos_;
    }
    if (start == pos_) fail("expected a value");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::vector<double> number_list(char open, char close) {
    expect(std::string(1, open));
    std::vector<double> out;
    if (accept(std::string(1, close))) return out;
    do {
      out.push_back(number());
    } while (accept(","));
    expect(std::string(1, close));
    return out;
  }

  Eigen::MatrixXd matrix() {
    if (accept("diag")) {
      auto d = number_list('(', ')');
      Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
      return v.asDiagonal();
    }
    expect("[");
    std::vector<std::vector<double>> rows;
    do {
      rows.push_back(number_list('[', ']'));
    } while (accept(","));
    expect("]");
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) fail("matrix rows differ in length");
      for (Eigen::Index j = 0; j < m; ++j) out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& message) const { parse_fail(line_, column(), message); }

 private:
  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

struct Line {
  std::string text;
  int number;
};

struct Section {
  std::string name;
  int line;
  std::vector<Line> body;
};

std::vector<Section> split_sections(std::string_view text) {
  static const std::set<std::string> kKnown{"exogenous", "endogenous", "laws", "prior", "backtracking", "regime"};
  std::vector<Section> out;
  std::set<std::string> seen;
  Section* open = nullptr;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    LineReader r(line, number);
    if (r.at_end()) {
      if (end == text.size()) break;
      continue;
    }
    if (open) {
      if (r.accept("}")) {
        r.expect_end();
        open = nullptr;
      } else {
        open->body.push_back({line, number});
      }
    } else {
      std::string name = r.identifier();
      if (!kKnown.count(name)) r.fail("unknown section '" + name + "'");
      if (!seen.insert(name).second) r.fail("section '" + name + "' appears twice");
      r.expect("{");
      r.expect_end();
      out.push_back({name, number, {}});
      open = &out.back();
    }
    if (end == text.size()) break;
  }
  if (open) parse_fail(open->line, 1, "section '" + open->name + "' is not closed");
  return out;
}

Domain parse_domain(LineReader& r) {
  if (r.accept("real")) return Domain::real();
  if (r.accept("bool")) return Domain::boolean();
  if (r.peek('[')) {
    auto b = r.number_list('[', ']');
    if (b.size() != 2) r.fail("an interval needs two bounds");
    try {
      return Domain::interval(b[0], b[1]);
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
  if (r.accept("{")) {
    std::vector<std::string> words;
    do {
      words.push_back(r.word());
    } while (r.accept(","));
    r.expect("}");
    std::vector<double> numbers;
    for (const auto& w : words) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
      if (ec == std::errc() && ptr == w.data() + w.size()) numbers.push_back(v);
    }
    try {
      if (numbers.size() == words.size()) return Domain::finite(numbers);
      if (!numbers.empty()) r.fail("a finite domain mixes numbers and labels");
      for (const auto& w : words) {
        if (w.empty() || !is_identifier_start(w[0]) ||
            !std::all_of(w.begin(), w.end(), [](char c) { return is_identifier_char(c); }))
          r.fail("'" + w + "' is not a valid label");
      }
      return Domain::labelled(words);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ParseError) throw;
      r.fail(e.what());
    }
  }
  r.fail("expected a domain: real, bool, [lo, hi] or {values}");
}

std::string domain_text(const Domain& d) {
  switch (d.kind()) {
    case Domain::Kind::Real: return "real";
    case Domain::Kind::Interval: return "[" + exact_number(d.lo()) + ", " + exact_number(d.hi()) + "]";
    case Domain::Kind::Finite: break;
  }
  if (d == Domain::boolean()) return "bool";
  std::string out = "{";
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i) out += ", ";
    out += d.format_value(d.values()[i]);
  }
  return out + "}";
}

std::vector<VariableDecl> parse_decls(const Section& s) {
  std::vector<VariableDecl> out;
  for (const auto& line : s.body) {
    LineReader r(line.text, line.number);
    std::string name = r.identifier();
    r.expect(":");
    Domain d = parse_domain(r);
    r.expect_end();
    out.push_back({name, d});
  }
  return out;
}

struct PendingLaw {
  std::string target;
  Expression expr;
  int line;
  int column;
};

std::vector<PendingLaw> parse_laws(const Section& s) {
  std::vector<PendingLaw> out;
  for (const auto& line : s.body) {
    LineReader r(line.text, line.number);
    int column = r.column();
    std::string target = r.identifier();
    r.expect(":=");
    r.skip_space();
    int expr_column = r.column();
    std::string expr(r.rest());
    out.push_back({target, parse_expression(expr, line.number, expr_column), line.number, column});
  }
  return out;
}

std::vector<std::string> name_list(LineReader& r) {
  std::vector<std::string> out;
  if (r.accept("(")) {
    do {
      out.push_back(r.identifier());
    } while (r.accept(","));
    r.expect(")");
  } else {
    out.push_back(r.identifier());
  }
  return out;
}

double parse_value_for(LineReader& r, const Domain& d, const std::string& name) {
  std::string w = r.word();
  auto v = d.parse_value(w);
  if (!v || !d.contains(*v)) r.fail("'" + w + "' is not a value of " + name);
  return *v;
}

bool near_one(double s) { return std::abs(s - 1.0) <= 1e-9; }

void check_weights(LineReader& r, const std::vector<double>& w) {
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) r.fail("probabilities must be nonnegative");
    s += x;
  }
  if (!near_one(s))
    throw Error(ErrorKind::ValidationError,
                "line " + std::to_string(r.line()) + ": probabilities sum to " + format_number(s) + ", not 1");
}

std::vector<PriorFactor> parse_prior(const Section& s, const CausalModel& model) {
  std::vector<PriorFactor> out;
  std::set<std::string> covered;
  for (const auto& line : s.body) {
    LineReader r(line.text, line.number);
    PriorFactor f;
    int column = r.column();
    f.variables = name_list(r);
    std::vector<Domain> domains;
    for (const auto& v : f.variables) {
      if (model.kind_of(v) != VariableKind::Exogenous) parse_fail(line.number, column, "'" + v + "' is not an exogenous variable");
      if (!covered.insert(v).second) parse_fail(line.number, column, "'" + v + "' has two prior statements");
      domains.push_back(model.domain(v));
    }
    r.expect("~");
    std::string kind = r.identifier();
    const bool single = f.variables.size() == 1;
    if (kind == "bernoulli") {
      if (!single || domains[0] != Domain::boolean()) r.fail("bernoulli needs one bool variable");
      f.kind = PriorFactor::Kind::Bernoulli;
      f.weights = r.number_list('(', ')');
      if (f.weights.size() != 1 || !(f.weights[0] >= 0.0 && f.weights[0] <= 1.0)) r.fail("bernoulli takes one probability");
    } else if (kind == "categorical") {
      if (!single || !domains[0].is_finite()) r.fail("categorical needs one finite variable");
      f.kind = PriorFactor::Kind::Categorical;
      f.weights = r.number_list('(', ')');
      if (f.weights.size() != domains[0].size()) r.fail("categorical needs one probability per domain value");
      check_weights(r, f.weights);
    } else if (kind == "normal") {
      if (!single || domains[0].is_finite()) r.fail("normal needs one real-valued variable");
      f.kind = PriorFactor::Kind::Normal;
      auto p = r.number_list('(', ')');
      if (p.size() != 2 || !(p[1] >= 0.0)) r.fail("normal takes a mean and a nonnegative variance");
      f.mean = Eigen::VectorXd::Constant(1, p[0]);
      f.covariance = Eigen::MatrixXd::Constant(1, 1, p[1]);
    } else if (kind == "gaussian") {
      for (const auto& d : domains)
        if (d.is_finite()) r.fail("gaussian needs real-valued variables");
      f.kind = PriorFactor::Kind::Gaussian;
      r.expect("(");
      auto m = r.number_list('[', ']');
      r.expect(",");
      f.covariance = r.matrix();
      r.expect(")");
      f.mean = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
      const auto n = static_cast<Eigen::Index>(f.variables.size());
      if (f.mean.size() != n || f.covariance.rows() != n || f.covariance.cols() != n)
        r.fail("gaussian dimensions do not match the variable list");
      if ((f.covariance - f.covariance.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance)
        r.fail("covariance must be symmetric");
    } else if (kind == "table") {
      for (const auto& d : domains)
        if (!d.is_finite()) r.fail("table needs finite variables");
      f.kind = PriorFactor::Kind::Table;
      r.expect("(");
      do {
        for (std::size_t j = 0; j < domains.size(); ++j) f.rows.push_back(parse_value_for(r, domains[j], f.variables[j]));
        r.expect(":");
        f.weights.push_back(r.number());
      } while (r.accept(","));
      r.expect(")");
      check_weights(r, f.weights);
    } else {
      r.fail("unknown distribution '" + kind + "'");
    }
    r.expect_end();
    out.push_back(std::move(f));
  }
  for (const auto& d : model.exogenous())
    if (!covered.count(d.name))
      throw Error(ErrorKind::ValidationError, "line " + std::to_string(s.line) + ": the prior does not cover " + d.name);
  bool finite = false, real = false;
  for (const auto& f : out) {
    bool is_finite = f.kind == PriorFactor::Kind::Bernoulli || f.kind == PriorFactor::Kind::Categorical ||
                     f.kind == PriorFactor::Kind::Table;
    (is_finite ? finite : real) = true;
  }
  if (finite && real)
    throw Error(ErrorKind::UnsupportedBackend,
                "line " + std::to_string(s.line) + ": priors mixing finite and real-valued factors are not supported");
  return out;
}

KernelKind kernel_kind(LineReader& r) {
  std::string k = r.identifier();
  for (auto kind : {KernelKind::SharedWorlds, KernelKind::PriorIndependent, KernelKind::DistanceBased,
                    KernelKind::GaussianKernel, KernelKind::GeneralizedPriorDistance, KernelKind::StabilityMixture})
    if (to_string(kind) == k) return kind;
  r.fail("unknown kernel kind '" + k + "'");
}

KernelProperty kernel_property(LineReader& r) {
  std::string k = r.identifier();
  for (auto p : {KernelProperty::Closeness, KernelProperty::Symmetry, KernelProperty::Decomposability})
    if (to_string(p) == k) return p;
  r.fail("unknown kernel property '" + k + "'");
}

std::vector<DistanceTerm> distance_terms(LineReader& r, const CausalModel& model) {
  std::vector<DistanceTerm> out;
  do {
    DistanceTerm t;
    std::string kind = r.identifier();
    if (kind == "squared") t.kind = DistanceTerm::Kind::Squared;
    else if (kind == "absolute") t.kind = DistanceTerm::Kind::Absolute;
    else if (kind == "mismatch") t.kind = DistanceTerm::Kind::Mismatch;
    else r.fail("unknown distance term '" + kind + "'");
    r.expect("(");
    int column = r.column();
    t.variable = r.identifier();
    if (model.kind_of(t.variable) != VariableKind::Exogenous)
      parse_fail(r.line(), column, "'" + t.variable + "' is not an exogenous variable");
    if (r.accept(",")) t.scale = r.number();
    r.expect(")");
    out.push_back(t);
  } while (r.accept("+"));
  return out;
}

KernelSpec parse_kernel(const Section& s, const CausalModel& model) {
  KernelSpec k;
  std::map<std::string, int> keys;  // key -> line
  for (const auto& line : s.body) {
    LineReader r(line.text, line.number);
    int column = r.column();
    std::string key = r.identifier();
    if (keys.count(key)) parse_fail(line.number, column, "key '" + key + "' appears twice");
    keys[key] = line.number;
    r.expect("=");
    if (key == "kind") k.kind = kernel_kind(r);
    else if (key == "sigma") k.sigma = r.matrix();
    else if (key == "distance") k.distance.terms = distance_terms(r, model);
    else if (key == "mahalanobis") k.distance.covariance = r.matrix();
    else if (key == "alpha") k.alpha = r.number();
    else if (key == "beta") k.beta = r.number();
    else if (key == "stability") k.stability = r.peek('[') ? r.number_list('[', ']') : std::vector<double>{r.number()};
    else if (key == "declare") {
      do {
        k.declared.push_back(kernel_property(r));
      } while (r.accept(","));
    } else {
      parse_fail(line.number, column, "unknown key '" + key + "'");
    }
    r.expect_end();
  }
  if (!keys.count("kind")) parse_fail(s.line, 1, "the backtracking section needs a kind");
  std::set<std::string> allowed{"kind", "declare"};
  switch (k.kind) {
    case KernelKind::DistanceBased: allowed.insert({"distance", "mahalanobis"}); break;
    case KernelKind::GaussianKernel: allowed.insert("sigma"); break;
    case KernelKind::GeneralizedPriorDistance: allowed.insert({"distance", "mahalanobis", "alpha", "beta"}); break;
    case KernelKind::StabilityMixture: allowed.insert("stability"); break;
    default: break;
  }
  for (const auto& [key, line] : keys)
    if (!allowed.count(key))
      parse_fail(line, 1, "key '" + key + "' does not apply to kind " + std::string(to_string(k.kind)));
  return k;
}

std::optional<double> regime_value(LineReader& r, const Domain& d, const std::string& name) {
  if (r.accept(kObsLabel)) return std::nullopt;
  return parse_value_for(r, d, name);
}

RegimeConfig parse_regime(const Section& s, const CausalModel& model) {
  RegimeConfig c;
  for (const auto& line : s.body) {
    LineReader r(line.text, line.number);
    int column = r.column();
    std::string name = r.identifier();
    if (model.kind_of(name) != VariableKind::Endogenous)
      parse_fail(line.number, column, "'" + name + "' is not an endogenous variable");
    const Domain& d = model.domain(name);
    std::string key = r.identifier();
    r.expect("=");
    if (key == "levels") {
      if (c.levels.count(name)) r.fail("levels for " + name + " given twice");
      auto& out = c.levels[name];
      do {
        out.push_back(parse_value_for(r, d, name));
      } while (r.accept(","));
    } else if (key == "prior") {
      if (c.prior.count(name)) r.fail("regime prior for " + name + " given twice");
      auto& out = c.prior[name];
      std::vector<double> w;
      do {
        auto v = regime_value(r, d, name);
        r.expect(":");
        w.push_back(r.number());
        out.push_back({v, w.back()});
      } while (r.accept(","));
      check_weights(r, w);
    } else if (key == "flip") {
      if (c.flip.count(name)) r.fail("flip for " + name + " given twice");
      double rho = r.number();
      if (!(rho >= 0.0 && rho <= 1.0)) r.fail("flip must lie in [0, 1]");
      c.flip[name] = rho;
    } else {
      parse_fail(line.number, column, "unknown regime key '" + key + "'");
    }
    r.expect_end();
  }
  return c;
}

std::string matrix_text(const Eigen::MatrixXd& m, bool allow_diag) {
  bool diagonal = allow_diag && m.rows() == m.cols();
  for (Eigen::Index i = 0; diagonal && i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) != 0.0) diagonal = false;
  std::string out;
  if (diagonal) {
    out = "diag(";
    for (Eigen::Index i = 0; i < m.rows(); ++i) out += (i ? ", " : "") + exact_number(m(i, i));
    return out + ")";
  }
  out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += i ? ", [" : "[";
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? ", " : "") + exact_number(m(i, j));
    out += "]";
  }
  return out + "]";
}

std::string join_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + exact_number(v[i]);
  return out;
}

std::string regime_text(const std::optional<double>& v, const Domain& d) {
  return v ? d.format_value(*v) : std::string(kObsLabel);
}

std::string assignment_text(const Assignment& a, const CausalModel& model, bool star) {
  std::string out;
  for (const auto& [n, v] : a) {
    if (!out.empty()) out += ", ";
    out += (star ? starred(n) : n) + "=" + model.domain(n).format_value(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query tokens: words (names, numbers, labels, keywords), '=' and ','.

struct Token {
  std::string text;
  int line;
  int column;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1, column = 1;
  std::size_t i = 0;
  auto step = [&] {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
    ++i;
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '#') {
      while (i < text.size() && text[i] != '\n') step();
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      step();
    } else if (c == '=' || c == ',') {
      out.push_back({std::string(1, c), line, column});
      step();
    } else {
      Token t{"", line, column};
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != '=' &&
             text[i] != ',' && text[i] != '#') {
        t.text += text[i];
        step();
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

class QueryParser {
 public:
  QueryParser(std::vector<Token> tokens, const CausalModel& model) : tokens_(std::move(tokens)), model_(model) {}

  // Bare "A=1, B=low" list over variables of either kind.
  Assignment assignment_list() {
    any_kind_ = true;
    Assignment out = assignments(false, false);
    if (pos_ < tokens_.size()) fail(tokens_[pos_], "unexpected '" + tokens_[pos_].text + "'");
    return out;
  }

  QueryDocument parse() {
    QueryDocument q;
    const Token& head = next("a query selector");
    if (head.text == "observe") q.semantics = Semantics::Observe;
    else if (head.text == "intervene") q.semantics = Semantics::Intervene;
    else if (head.text == "backtrack") q.semantics = Semantics::Backtrack;
    else if (head.text == "unified") q.semantics = Semantics::Unified;
    else fail(head, "unknown query selector '" + head.text + "'");
    std::set<std::string> seen;
    bool found = false;
    while (pos_ < tokens_.size()) {
      const Token& kw = tokens_[pos_++];
      std::string key = kw.text;
      if (key == "regime") {
        const Token& world = next("'factual' or 'counterfactual'");
        if (world.text != "factual" && world.text != "counterfactual") fail(world, "expected 'factual' or 'counterfactual'");
        key += " " + world.text;
      }
      if (!seen.insert(key).second) fail(kw, "clause '" + key + "' appears twice");
      if (key == "given") {
        q.given = assignments(false, false);
      } else if (key == "do") {
        if (q.semantics != Semantics::Intervene) mismatch(kw, "'do' needs an intervene query; unified queries use regime clauses");
        q.intervention = assignments(false, false);
      } else if (key == "had") {
        if (q.semantics != Semantics::Backtrack && q.semantics != Semantics::Unified)
          mismatch(kw, "'had' needs a backtrack or unified query");
        q.had = assignments(true, false);
      } else if (key == "regime factual" || key == "regime counterfactual") {
        if (q.semantics != Semantics::Unified) mismatch(kw, "regime clauses need a unified query");
        (key == "regime factual" ? q.factual_regimes : q.counterfactual_regimes) = regimes();
      } else if (key == "find") {
        q.targets = targets(q.semantics);
        found = true;
      } else if (key == "using") {
        const Token& b = next("a backend");
        if (b.text == "auto") q.backend = Backend::Auto;
        else if (b.text == "exact") q.backend = Backend::Exact;
        else if (b.text == "gaussian") q.backend = Backend::Gaussian;
        else if (b.text == "mc") q.backend = Backend::MonteCarlo;
        else fail(b, "unknown backend '" + b.text + "'");
      } else if (key == "samples") {
        q.samples = static_cast<std::size_t>(integer());
      } else if (key == "seed") {
        q.seed = integer();
      } else {
        fail(kw, "unknown clause '" + kw.text + "'");
      }
    }
    if (!found) {
      const Token& last = tokens_.back();
      fail(last, "the query needs a 'find' clause");
    }
    return q;
  }

 private:
  [[noreturn]] void fail(const Token& t, const std::string& message) const { parse_fail(t.line, t.column, message); }
  [[noreturn]] void mismatch(const Token& t, const std::string& message) const {
    throw Error(ErrorKind::TypeMismatch,
                "line " + std::to_string(t.line) + ", column " + std::to_string(t.column) + ": " + message);
  }

  const Token& next(const std::string& what) {
    if (pos_ >= tokens_.size()) {
      if (tokens_.empty()) parse_fail(1, 1, "expected " + what);
      const Token& last = tokens_.back();
      parse_fail(last.line, last.column + static_cast<int>(last.text.size()), "expected " + what);
    }
    return tokens_[pos_++];
  }
  bool accept(const std::string& text) {
    if (pos_ < tokens_.size() && tokens_[pos_].text == text) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(const std::string& text) {
    const Token& t = next("'" + text + "'");
    if (t.text != text) fail(t, "expected '" + text + "', found '" + t.text + "'");
  }

  std::uint64_t integer() {
    const Token& t = next("an integer");
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size()) fail(t, "expected an integer, found '" + t.text + "'");
    return v;
  }

  // Name with an optional star; returns the unstarred name.
  std::string name(const Token& t, bool star_allowed, bool regime_names) {
    std::string n = t.text;
    bool star = !n.empty() && n.back() == '*';
    if (star) n.pop_back();
    if (star && !star_allowed) mismatch(t, "'" + t.text + "' is starred, but this clause is read in the factual world");
    if (regime_names && n.rfind("R_", 0) == 0 && model_.kind_of(n.substr(2)) == VariableKind::Endogenous &&
        !model_.find(n))
      return n;
    if (!model_.find(n)) fail(t, "unknown variable '" + n + "'");
    if (!any_kind_ && model_.kind_of(n) != VariableKind::Endogenous) mismatch(t, "'" + n + "' is not an endogenous variable");
    return n;
  }

  double value(const Token& t, const std::string& var) {
    const Domain& d = model_.domain(var);
    std::string text = t.text;
    if (d == Domain::boolean() && (text == "true" || text == "false")) text = text == "true" ? "1" : "0";
    auto v = d.parse_value(text);
    if (!v) {
      double probe = 0.0;
      auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), probe);
      if (ec != std::errc() || ptr != t.text.data() + t.text.size())
        mismatch(t, "'" + t.text + "' is not a value of " + var);
    }
    if (!v || !d.contains(*v)) mismatch(t, "'" + t.text + "' is not a value of " + var);
    return d.snap(*v);
  }

  Assignment assignments(bool star_allowed, bool) {
    Assignment out;
    do {
      const Token& n = next("a variable name");
      std::string var = name(n, star_allowed, false);
      if (out.contains(var)) fail(n, "'" + var + "' is assigned twice");
      expect("=");
      out.set(var, value(next("a value"), var));
    } while (accept(","));
    return out;
  }

  RegimeClauses regimes() {
    RegimeClauses out;
    do {
      const Token& n = next("a variable name");
      std::string var = name(n, false, false);
      if (out.count(var)) fail(n, "'" + var + "' has two regime clauses");
      expect("=");
      const Token& v = next("a regime value");
      out[var] = v.text == kObsLabel ? std::nullopt : std::optional<double>(value(v, var));
    } while (accept(","));
    return out;
  }

  std::vector<std::string> targets(Semantics s) {
    std::vector<std::string> out;
    do {
      const Token& n = next("a target");
      bool starred_name = !n.text.empty() && n.text.back() == '*';
      if (starred_name && s == Semantics::Observe) mismatch(n, "observational targets are not starred");
      std::string var = name(n, true, s == Semantics::Unified);
      if (std::find(out.begin(), out.end(), var) != out.end()) fail(n, "target '" + var + "' listed twice");
      out.push_back(var);
    } while (accept(","));
    return out;
  }

  std::vector<Token> tokens_;
  const CausalModel& model_;
  std::size_t pos_ = 0;
  bool any_kind_ = false;
};

// ---------------------------------------------------------------------------
// Rendering

std::string pad(const std::string& s, std::size_t width) { return s + std::string(width > s.size() ? width - s.size() : 0, ' '); }

std::string table_text(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (width.size() <= j) width.push_back(0);
      width[j] = std::max(width[j], row[j].size());
    }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t j = 0; j < row.size(); ++j) line += (j ? "  " : "") + (j + 1 < row.size() ? pad(row[j], width[j]) : row[j]);
    out += line + "\n";
  }
  return out;
}

bool point_gaussian(const GaussianDistribution& g) {
  double scale = std::max(1.0, g.mean.size() ? g.mean.cwiseAbs().maxCoeff() : 0.0);
  return g.covariance.size() == 0 || g.covariance.cwiseAbs().maxCoeff() <= kSymmetryTolerance * scale;
}

std::string number_list_text(const Eigen::VectorXd& v, const char* sep, bool exact = false) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? sep : "") + (exact ? exact_number(v[i]) : format_number(v[i]));
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

// Values close to an integer multiple of 1e-12 relative noise are cleaned
// so exact answers print exactly.
double clean(double v) {
  double r = std::round(v);
  if (std::abs(v - r) <= 1e-10 * std::max(1.0, std::abs(v))) return r == 0.0 ? 0.0 : r;
  return v;
}

void header_lines(std::string& out, const RenderContext& ctx, const char* kv_sep) {
  if (!ctx.provenance.empty()) out += std::string("provenance") + kv_sep + ctx.provenance + "\n";
  for (const auto& n : ctx.notes) out += n + "\n";
}

void diagnostic_lines(std::string& out, const RenderContext& ctx, const std::vector<std::string>& more) {
  for (const auto& d : ctx.diagnostics) out += "diagnostic: " + d + "\n";
  for (const auto& d : more) out += "diagnostic: " + d + "\n";
}

std::string moments_text(const std::vector<std::string>& vars, const Moments& m) {
  std::vector<std::vector<std::string>> mean{{"mean"}};
  std::string out = "mean\n";
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < vars.size(); ++i) rows.push_back({"  " + vars[i], format_number(clean(m.mean[static_cast<Eigen::Index>(i)]))});
  out += table_text(rows);
  out += "covariance\n";
  rows.clear();
  std::vector<std::string> head{" "};
  for (const auto& v : vars) head.push_back(v);
  rows.push_back(head);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    std::vector<std::string> row{"  " + vars[i]};
    for (std::size_t j = 0; j < vars.size(); ++j)
      row.push_back(format_number(clean(m.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))));
    rows.push_back(row);
  }
  out += table_text(rows);
  return out;
}

std::vector<std::string> formatted_row(const TabularDistribution& t, std::size_t r) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < t.variables.size(); ++j) out.push_back(t.domains[j].format_value(t.row(r)[j]));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

bool PriorFactor::operator==(const PriorFactor& o) const {
  auto same = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return kind == o.kind && variables == o.variables && weights == o.weights && rows == o.rows &&
         same(mean, o.mean) && same(covariance, o.covariance);
}

bool ModelDocument::operator==(const ModelDocument& o) const {
  return model == o.model && prior == o.prior && kernel == o.kernel && regimes == o.regimes;
}

ModelDocument parse_model(std::string_view text) {
  auto sections = split_sections(text);
  auto find = [&](const std::string& name) -> const Section* {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  };
  const Section* exo_s = find("exogenous");
  const Section* endo_s = find("endogenous");
  const Section* laws_s = find("laws");
  if (!exo_s) parse_fail(1, 1, "the model has no exogenous section");
  if (!endo_s) parse_fail(1, 1, "the model has no endogenous section");
  if (!laws_s) parse_fail(1, 1, "the model has no laws section");
  auto exo = parse_decls(*exo_s);
  auto endo = parse_decls(*endo_s);
  auto pending = parse_laws(*laws_s);

  std::set<std::string> exo_names, endo_names;
  for (const auto& d : exo) exo_names.insert(d.name);
  for (const auto& d : endo) endo_names.insert(d.name);
  std::vector<StructuralLaw> laws;
  for (const auto& l : pending) {
    if (!endo_names.count(l.target))
      parse_fail(l.line, l.column, "law target '" + l.target + "' is not a declared endogenous variable");
    for (const auto& v : l.expr.variables())
      if (!exo_names.count(v) && !endo_names.count(v))
        parse_fail(l.line, l.column, "law for " + l.target + " uses undeclared symbol '" + v + "'");
    laws.push_back({l.target, l.expr});
  }
  ModelDocument doc;
  doc.model = CausalModel(exo, endo, laws);
  try {
    doc.model.validate();
  } catch (const Error& e) {
    throw Error(e.kind(), "line " + std::to_string(laws_s->line) + ": " + e.what());
  }
  if (const Section* s = find("prior")) doc.prior = parse_prior(*s, doc.model);
  if (const Section* s = find("backtracking")) doc.kernel = parse_kernel(*s, doc.model);
  if (const Section* s = find("regime")) doc.regimes = parse_regime(*s, doc.model);
  return doc;
}

std::string serialize_model(const ModelDocument& doc) {
  const auto& m = doc.model;
  std::ostringstream out;
  out << "exogenous {\n";
  for (const auto& d : m.exogenous()) out << "  " << d.name << " : " << domain_text(d.domain) << "\n";
  out << "}\n\nendogenous {\n";
  for (const auto& d : m.endogenous()) out << "  " << d.name << " : " << domain_text(d.domain) << "\n";
  out << "}\n\nlaws {\n";
  for (const auto& l : m.laws()) out << "  " << l.target << " := " << to_string(l.function) << "\n";
  out << "}\n";
  if (!doc.prior.empty()) {
    out << "\nprior {\n";
    for (const auto& f : doc.prior) {
      out << "  " << (f.variables.size() == 1 ? f.variables[0] : "(" + join(f.variables, ", ") + ")") << " ~ ";
      switch (f.kind) {
        case PriorFactor::Kind::Bernoulli: out << "bernoulli(" << exact_number(f.weights[0]) << ")"; break;
        case PriorFactor::Kind::Categorical: out << "categorical(" << join_numbers(f.weights) << ")"; break;
        case PriorFactor::Kind::Normal:
          out << "normal(" << exact_number(f.mean[0]) << ", " << exact_number(f.covariance(0, 0)) << ")";
          break;
        case PriorFactor::Kind::Gaussian:
          out << "gaussian([" << number_list_text(f.mean, ", ", true) << "], " << matrix_text(f.covariance, false) << ")";
          break;
        case PriorFactor::Kind::Table: {
          out << "table(";
          const std::size_t n = f.variables.size();
          for (std::size_t r = 0; r < f.weights.size(); ++r) {
            if (r) out << ", ";
            for (std::size_t j = 0; j < n; ++j)
              out << (j ? " " : "") << m.domain(f.variables[j]).format_value(f.rows[r * n + j]);
            out << ": " << exact_number(f.weights[r]);
          }
          out << ")";
          break;
        }
      }
      out << "\n";
    }
    out << "}\n";
  }
  if (doc.kernel) {
    const auto& k = *doc.kernel;
    out << "\nbacktracking {\n  kind = " << to_string(k.kind) << "\n";
    auto distance = [&] {
      if (!k.distance.terms.empty()) {
        out << "  distance = ";
        for (std::size_t i = 0; i < k.distance.terms.size(); ++i) {
          const auto& t = k.distance.terms[i];
          const char* name = t.kind == DistanceTerm::Kind::Squared ? "squared"
                             : t.kind == DistanceTerm::Kind::Absolute ? "absolute"
                                                                      : "mismatch";
          out << (i ? " + " : "") << name << "(" << t.variable;
          if (t.scale != 1.0) out << ", " << exact_number(t.scale);
          out << ")";
        }
        out << "\n";
      }
      if (k.distance.covariance) out << "  mahalanobis = " << matrix_text(*k.distance.covariance, true) << "\n";
    };
    switch (k.kind) {
      case KernelKind::DistanceBased: distance(); break;
      case KernelKind::GaussianKernel:
        if (k.sigma.size()) out << "  sigma = " << matrix_text(k.sigma, true) << "\n";
        break;
      case KernelKind::GeneralizedPriorDistance:
        distance();
        out << "  alpha = " << exact_number(k.alpha) << "\n  beta = " << exact_number(k.beta) << "\n";
        break;
      case KernelKind::StabilityMixture:
        out << "  stability = [" << join_numbers(k.stability) << "]\n";
        break;
      default: break;
    }
    if (!k.declared.empty()) {
      out << "  declare = ";
      for (std::size_t i = 0; i < k.declared.size(); ++i) out << (i ? ", " : "") << to_string(k.declared[i]);
      out << "\n";
    }
    out << "}\n";
  }
  if (!doc.regimes.empty()) {
    out << "\nregime {\n";
    for (const auto& v : m.endogenous()) {
      const Domain& d = v.domain;
      if (auto it = doc.regimes.levels.find(v.name); it != doc.regimes.levels.end()) {
        out << "  " << v.name << " levels = ";
        for (std::size_t i = 0; i < it->second.size(); ++i) out << (i ? ", " : "") << d.format_value(it->second[i]);
        out << "\n";
      }
      if (auto it = doc.regimes.prior.find(v.name); it != doc.regimes.prior.end()) {
        out << "  " << v.name << " prior = ";
        for (std::size_t i = 0; i < it->second.size(); ++i)
          out << (i ? ", " : "") << regime_text(it->second[i].first, d) << ": " << exact_number(it->second[i].second);
        out << "\n";
      }
      if (auto it = doc.regimes.flip.find(v.name); it != doc.regimes.flip.end())
        out << "  " << v.name << " flip = " << exact_number(it->second) << "\n";
    }
    out << "}\n";
  }
  return out.str();
}

Distribution prior_distribution(const ModelDocument& doc) {
  if (doc.prior.empty()) throw Error(ErrorKind::ValidationError, "the model has no prior section");
  std::vector<Distribution> factors;
  for (const auto& f : doc.prior) {
    std::vector<Domain> domains;
    for (const auto& v : f.variables) domains.push_back(doc.model.domain(v));
    switch (f.kind) {
      case PriorFactor::Kind::Bernoulli:
        factors.push_back(make_tabular(f.variables, domains, {0.0, 1.0}, {1.0 - f.weights[0], f.weights[0]}));
        break;
      case PriorFactor::Kind::Categorical:
        factors.push_back(make_tabular(f.variables, domains, {domains[0].values().begin(), domains[0].values().end()},
                                       f.weights));
        break;
      case PriorFactor::Kind::Table:
        factors.push_back(make_tabular(f.variables, domains, f.rows, f.weights));
        break;
      case PriorFactor::Kind::Normal:
      case PriorFactor::Kind::Gaussian:
        factors.push_back(GaussianDistribution{f.variables, f.mean, f.covariance});
        break;
    }
  }
  Distribution joint = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) joint = product(joint, factors[i]);
  std::vector<std::string> order;
  for (const auto& d : doc.model.exogenous()) order.push_back(d.name);
  return reorder(joint, order);
}

AugmentedModel augment_document(const ModelDocument& doc, const std::map<std::string, std::vector<double>>& extra) {
  auto levels = doc.regimes.levels;
  for (const auto& [v, xs] : extra) levels[v].insert(levels[v].end(), xs.begin(), xs.end());
  for (const auto& [v, entries] : doc.regimes.prior)
    for (const auto& [value, w] : entries)
      if (value) levels[v].push_back(*value);
  return augment(doc.model, levels);
}

Distribution regime_prior_distribution(const ModelDocument& doc, const AugmentedModel& aug) {
  std::vector<Distribution> factors;
  for (const auto& reg : aug.regimes()) {
    std::vector<double> w(reg.domain.size(), 0.0);
    auto it = doc.regimes.prior.find(reg.variable);
    if (it == doc.regimes.prior.end()) {
      w[0] = 1.0;
    } else {
      for (const auto& [value, p] : it->second) {
        std::size_t idx = value ? *reg.index_of_level(*value) : 0;
        w[idx] += p;
      }
    }
    std::vector<double> values(reg.domain.values().begin(), reg.domain.values().end());
    factors.push_back(make_tabular({reg.name}, {reg.domain}, values, w));
  }
  if (factors.empty()) return make_tabular({}, {}, {}, {1.0});
  Distribution joint = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) joint = product(joint, factors[i]);
  return joint;
}

std::string_view to_string(Semantics s) {
  switch (s) {
    case Semantics::Observe: return "observe";
    case Semantics::Intervene: return "intervene";
    case Semantics::Backtrack: return "backtrack";
    case Semantics::Unified: return "unified";
  }
  return "?";
}

QueryDocument parse_query(std::string_view text, const CausalModel& model) {
  auto tokens = tokenize(text);
  if (tokens.empty()) parse_fail(1, 1, "empty query");
  return QueryParser(std::move(tokens), model).parse();
}

Assignment parse_assignment(std::string_view text, const CausalModel& model) {
  auto tokens = tokenize(text);
  if (tokens.empty()) return {};
  return QueryParser(std::move(tokens), model).assignment_list();
}

std::string serialize_query(const QueryDocument& q, const CausalModel& model) {
  std::string out(to_string(q.semantics));
  const bool star = q.semantics == Semantics::Backtrack || q.semantics == Semantics::Unified;
  if (!q.given.empty()) out += " given " + assignment_text(q.given, model, false);
  if (!q.intervention.empty()) out += " do " + assignment_text(q.intervention, model, false);
  if (!q.had.empty()) out += " had " + assignment_text(q.had, model, true);
  auto regimes = [&](const RegimeClauses& r) {
    std::string s;
    for (const auto& [v, value] : r) s += (s.empty() ? "" : ", ") + v + "=" + regime_text(value, model.domain(v));
    return s;
  };
  if (!q.factual_regimes.empty()) out += " regime factual " + regimes(q.factual_regimes);
  if (!q.counterfactual_regimes.empty()) out += " regime counterfactual " + regimes(q.counterfactual_regimes);
  out += " find ";
  for (std::size_t i = 0; i < q.targets.size(); ++i) {
    const bool cf = star || q.semantics == Semantics::Intervene;
    out += (i ? ", " : "") + (cf ? starred(q.targets[i]) : q.targets[i]);
  }
  if (q.backend) {
    const char* names[] = {"auto", "exact", "gaussian", "mc"};
    out += std::string(" using ") + names[static_cast<int>(*q.backend)];
  }
  if (q.samples) out += " samples " + std::to_string(*q.samples);
  if (q.seed) out += " seed " + std::to_string(*q.seed);
  return out + "\n";
}

std::vector<std::string> deterministic_relations(const GaussianDistribution& g) {
  const auto n = g.covariance.rows();
  if (n == 0) return {};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.covariance);
  const double scale = std::max(1.0, g.covariance.cwiseAbs().maxCoeff());
  std::vector<Eigen::VectorXd> null;
  for (Eigen::Index i = 0; i < n; ++i)
    if (eig.eigenvalues()[i] <= kSymmetryTolerance * scale) null.push_back(eig.eigenvectors().col(i));
  if (null.empty()) return {};
  // Reduced row echelon form with pivots taken from the rightmost columns.
  const auto k = static_cast<Eigen::Index>(null.size());
  Eigen::MatrixXd a(k, n);
  for (Eigen::Index r = 0; r < k; ++r) a.row(r) = null[static_cast<std::size_t>(r)].transpose();
  Eigen::VectorXd rhs = a * g.mean;
  std::vector<Eigen::Index> pivots;
  Eigen::Index row = 0;
  for (Eigen::Index col = n - 1; col >= 0 && row < k; --col) {
    Eigen::Index best = row;
    for (Eigen::Index r = row; r < k; ++r)
      if (std::abs(a(r, col)) > std::abs(a(best, col))) best = r;
    if (std::abs(a(best, col)) <= 1e-9) continue;
    a.row(row).swap(a.row(best));
    std::swap(rhs[row], rhs[best]);
    double p = a(row, col);
    a.row(row) /= p;
    rhs[row] /= p;
    for (Eigen::Index r = 0; r < k; ++r) {
      if (r == row) continue;
      double f = a(r, col);
      a.row(r) -= f * a.row(row);
      rhs[r] -= f * rhs[row];
    }
    pivots.push_back(col);
    ++row;
  }
  std::vector<std::string> out;
  for (Eigen::Index r = 0; r < row; ++r) {
    Eigen::Index p = pivots[static_cast<std::size_t>(r)];
    std::string text = g.variables[static_cast<std::size_t>(p)] + " = ";
    std::string terms;
    double c = clean(rhs[r]);
    if (c != 0.0) terms = format_number(c);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == p) continue;
      double coef = clean(-a(r, j));
      if (std::abs(coef) <= 1e-12) continue;
      std::string mag = std::abs(coef) == 1.0 ? "" : format_number(std::abs(coef)) + " ";
      const auto& name = g.variables[static_cast<std::size_t>(j)];
      if (terms.empty()) terms = (coef < 0 ? "-" : "") + mag + name;
      else terms += (coef < 0 ? " - " : " + ") + mag + name;
    }
    out.push_back(text + (terms.empty() ? "0" : terms));
  }
  return out;
}

std::string render_result(const Distribution& dist, OutputFormat format, const RenderContext& ctx) {
  std::string out;
  const auto& vars = dist.variables();
  std::vector<std::string> more_diagnostics;
  if (dist.kind() == Distribution::Kind::Particle) more_diagnostics = dist.particles().diagnostics;

  if (format == OutputFormat::Machine) {
    out += "format=scmcf-result/1\n";
    out += "kind=" + std::string(to_string(dist.kind())) + "\n";
    if (!ctx.provenance.empty()) out += "provenance=" + ctx.provenance + "\n";
    out += "variables=" + join(vars, ",") + "\n";
    switch (dist.kind()) {
      case Distribution::Kind::Tabular: {
        const auto& t = dist.tabular();
        out += "rows=" + std::to_string(t.rows()) + "\n";
        for (std::size_t r = 0; r < t.rows(); ++r) {
          out += "row." + std::to_string(r) + "=" + join(formatted_row(t, r), ",") + "\n";
          out += "probability." + std::to_string(r) + "=" + format_number(t.weights[r]) + "\n";
        }
        break;
      }
      case Distribution::Kind::Gaussian:
      case Distribution::Kind::Particle: {
        auto m = moments(dist);
        if (dist.kind() == Distribution::Kind::Particle) {
          const auto& p = dist.particles();
          out += "samples=" + std::to_string(p.rows()) + "\n";
          out += "seed=" + std::to_string(p.seed) + "\n";
          out += "ess=" + format_number(p.ess) + "\n";
        }
        Eigen::VectorXd mean = m.mean.unaryExpr([](double v) { return clean(v); });
        out += "mean=" + number_list_text(mean, ",") + "\n";
        for (Eigen::Index i = 0; i < m.covariance.rows(); ++i) {
          Eigen::VectorXd row = m.covariance.row(i).transpose().unaryExpr([](double v) { return clean(v); });
          out += "covariance." + std::to_string(i) + "=" + number_list_text(row, ",") + "\n";
        }
        if (dist.kind() == Distribution::Kind::Gaussian) {
          auto rel = deterministic_relations(dist.gaussian());
          for (std::size_t i = 0; i < rel.size(); ++i) out += "relation." + std::to_string(i) + "=" + rel[i] + "\n";
        }
        break;
      }
    }
    for (std::size_t i = 0; i < ctx.notes.size(); ++i) out += "note." + std::to_string(i) + "=" + ctx.notes[i] + "\n";
    std::vector<std::string> diags = ctx.diagnostics;
    diags.insert(diags.end(), more_diagnostics.begin(), more_diagnostics.end());
    for (std::size_t i = 0; i < diags.size(); ++i) out += "diagnostic." + std::to_string(i) + "=" + diags[i] + "\n";
    return out;
  }

  header_lines(out, ctx, ": ");
  const bool gaussian_point = dist.kind() == Distribution::Kind::Gaussian && point_gaussian(dist.gaussian());
  if (format == OutputFormat::Table && dist.kind() == Distribution::Kind::Tabular) {
    const auto& t = dist.tabular();
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head = vars;
    head.push_back("probability");
    cells.push_back(head);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto row = formatted_row(t, r);
      row.push_back(format_number(t.weights[r]));
      cells.push_back(row);
    }
    out += table_text(cells);
  } else if (format == OutputFormat::Table && gaussian_point) {
    const auto& g = dist.gaussian();
    std::vector<std::string> head = vars, row;
    head.push_back("probability");
    for (Eigen::Index i = 0; i < g.mean.size(); ++i) row.push_back(format_number(clean(g.mean[i])));
    row.push_back("1");
    out += table_text({head, row});
  } else {
    if (dist.kind() == Distribution::Kind::Particle) {
      const auto& p = dist.particles();
      out += "samples: " + std::to_string(p.rows()) + "\n";
      out += "ess: " + format_number(p.ess) + "\n";
    }
    out += moments_text(vars, moments(dist));
    if (dist.kind() == Distribution::Kind::Gaussian)
      for (const auto& rel : deterministic_relations(dist.gaussian())) out += "relation: " + rel + "\n";
  }
  diagnostic_lines(out, ctx, more_diagnostics);
  return out;
}

}  // namespace scmcf
