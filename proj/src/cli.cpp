#include "scmcf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "scmcf/backtracking.hpp"
#include "scmcf/explain.hpp"
#include "scmcf/interventional.hpp"
#include "scmcf/model_io.hpp"
#include "scmcf/unified.hpp"

namespace scmcf::cli {

namespace {

constexpr int kUsage = 1;

struct Common {
  std::string model_path;
  std::string query;
  std::string backend = "auto";
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string format = "table";
  bool backend_set = false;
  bool samples_set = false;
  bool seed_set = false;
};

struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Usage("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A query argument is a file when one exists at that path, inline text otherwise.
std::string query_text(const std::string& arg) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(arg, ec)) return read_file(arg);
  return arg;
}

Backend backend_of(const std::string& s) {
  if (s == "auto") return Backend::Auto;
  if (s == "exact") return Backend::Exact;
  if (s == "gaussian") return Backend::Gaussian;
  if (s == "mc") return Backend::MonteCarlo;
  throw Usage("unknown backend '" + s + "'");
}

OutputFormat format_of(const std::string& s) {
  if (s == "table") return OutputFormat::Table;
  if (s == "moments") return OutputFormat::Moments;
  if (s == "machine") return OutputFormat::Machine;
  throw Usage("unknown format '" + s + "'");
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  return out;
}

std::string provenance_of(const Distribution& d) {
  switch (d.kind()) {
    case Distribution::Kind::Tabular: return "exact";
    case Distribution::Kind::Gaussian: return "gaussian";
    case Distribution::Kind::Particle: return "monte-carlo";
  }
  return "unknown";
}

struct Loaded {
  ModelDocument doc;
  std::optional<Distribution> prior;
};

Loaded load(const Common& c) {
  if (c.model_path.empty()) throw Usage("--model is required");
  Loaded l{parse_model(read_file(c.model_path)), std::nullopt};
  if (!l.doc.prior.empty()) l.prior = prior_distribution(l.doc);
  return l;
}

const Distribution& need_prior(const Loaded& l) {
  if (!l.prior) throw Error(ErrorKind::ValidationError, "the model file has no prior section");
  return *l.prior;
}

BacktrackingConditional need_kernel(const Loaded& l) {
  if (!l.doc.kernel) throw Error(ErrorKind::ValidationError, "the model file has no backtracking section");
  return BacktrackingConditional::bind(*l.doc.kernel, l.doc.model.exogenous(), need_prior(l));
}

EngineOptions options_of(const Common& c, const QueryDocument* q) {
  EngineOptions o;
  o.backend = backend_of(c.backend);
  o.samples = c.samples;
  o.seed = c.seed;
  o.workers = std::max(1u, c.workers);
  // Flags given on the command line win over hints written in the query.
  if (q) {
    if (q->backend && !c.backend_set) o.backend = *q->backend;
    if (q->samples && !c.samples_set) o.samples = *q->samples;
    if (q->seed && !c.seed_set) o.seed = *q->seed;
  }
  return o;
}

// ---------------------------------------------------------------------------

std::string cmd_validate(const Common& c) {
  auto l = load(c);
  std::ostringstream out;
  const auto& m = l.doc.model;
  out << "model: ok\n";
  out << "exogenous: " << m.exogenous().size() << "\n";
  out << "endogenous: " << m.endogenous().size() << "\n";
  out << "prior: " << (l.prior ? std::string(to_string(l.prior->kind())) : "none") << "\n";
  if (l.doc.kernel) {
    need_kernel(l);
    out << "kernel: " << to_string(l.doc.kernel->kind) << "\n";
  } else {
    out << "kernel: none\n";
  }
  if (!l.doc.regimes.empty()) {
    auto aug = augment_document(l.doc);
    out << "regimes: " << aug.regimes().size() << "\n";
  }
  return out.str();
}

std::string cmd_solve(const Common& c, const std::string& world, const std::string& intervention) {
  auto l = load(c);
  const auto& m = l.doc.model;
  Assignment u = parse_assignment(world, m);
  for (const auto& [n, v] : u)
    if (m.kind_of(n) != VariableKind::Exogenous) throw Error(ErrorKind::TypeMismatch, "'" + n + "' is not exogenous");
  Assignment x = parse_assignment(intervention, m);
  Assignment v = potential_response(m, u, x);
  std::vector<std::string> names;
  std::vector<Domain> domains;
  std::vector<double> values;
  for (const auto& d : m.endogenous()) {
    names.push_back(d.name);
    domains.push_back(d.domain);
    values.push_back(v.at(d.name));
  }
  std::ostringstream out;
  if (format_of(c.format) == OutputFormat::Machine) {
    out << "format=scmcf-solve/1\n";
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << "=" << domains[i].format_value(values[i]) << "\n";
    return out.str();
  }
  std::size_t w = std::string("variable").size();
  for (const auto& n : names) w = std::max(w, n.size());
  out << "variable" << std::string(w - 8 + 2, ' ') << "value\n";
  for (std::size_t i = 0; i < names.size(); ++i)
    out << names[i] << std::string(w - names[i].size() + 2, ' ') << domains[i].format_value(values[i]) << "\n";
  return out.str();
}

std::string cmd_query(const Common& c, Semantics selector) {
  auto l = load(c);
  const auto& m = l.doc.model;
  std::string text = query_text(c.query);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw Usage("--query is required");
  {
    std::istringstream lines(text);
    std::string line, word;
    while (word.empty() && std::getline(lines, line)) std::istringstream(line.substr(0, line.find('#'))) >> word;
    if (word != "observe" && word != "intervene" && word != "backtrack" && word != "unified")
      text = std::string(to_string(selector)) + " " + text;
  }
  QueryDocument q = parse_query(text, m);
  if (q.semantics != selector)
    throw Usage("the query is a '" + std::string(to_string(q.semantics)) + "' query, not '" +
                std::string(to_string(selector)) + "'");
  auto opts = options_of(c, &q);
  RenderContext ctx;
  std::optional<Distribution> result;
  switch (q.semantics) {
    case Semantics::Observe:
      result = observational_query(m, need_prior(l), q.given, q.targets, opts);
      break;
    case Semantics::Intervene:
      result = interventional_counterfactual(m, need_prior(l), {q.given, q.intervention, q.targets}, opts);
      break;
    case Semantics::Backtrack:
      result = backtracking_counterfactual(m, need_kernel(l), {q.given, q.had, q.targets}, opts);
      break;
    case Semantics::Unified: {
      std::map<std::string, std::vector<double>> extra;
      for (const auto* clauses : {&q.factual_regimes, &q.counterfactual_regimes})
        for (const auto& [v, value] : *clauses)
          if (value) extra[v].push_back(*value);
      auto aug = augment_document(l.doc, extra);
      RegimeKernel rk{l.doc.regimes.flip};
      UnifiedQuery uq{q.factual_regimes, q.counterfactual_regimes, q.given, q.had, q.targets};
      auto r = unified_counterfactual(aug, need_kernel(l), regime_prior_distribution(l.doc, aug), rk, uq, opts);
      ctx.provenance = r.provenance;
      ctx.notes.push_back("regime configurations: " + std::to_string(r.configurations));
      ctx.diagnostics = r.diagnostics;
      result = r.distribution;
      break;
    }
  }
  if (ctx.provenance.empty()) ctx.provenance = provenance_of(*result);
  ctx.notes.insert(ctx.notes.begin(), "semantics: " + std::string(to_string(q.semantics)));
  if (result->kind() == Distribution::Kind::Particle) ctx.notes.push_back("seed: " + std::to_string(opts.seed));
  return render_result(*result, format_of(c.format), ctx);
}

// ---------------------------------------------------------------------------
// explain

struct ExplainArgs {
  std::string target;
  std::string factual;
  std::string desired;
  std::size_t k = 1;
  double alpha = 0.0;
  std::string subset;
};

ExplanationTask explanation_task(const Loaded& l, const ExplainArgs& a) {
  const auto& m = l.doc.model;
  if (a.target.empty()) throw Usage("--target is required");
  if (m.kind_of(a.target) != VariableKind::Endogenous)
    throw Error(ErrorKind::InvalidTask, "'" + a.target + "' is not an endogenous variable");
  const StructuralLaw* law = nullptr;
  for (const auto& s : m.laws())
    if (s.target == a.target) law = &s;
  std::vector<std::string> features;
  auto inputs = law->function.variables();
  for (const auto& d : m.endogenous())
    if (std::find(inputs.begin(), inputs.end(), d.name) != inputs.end()) features.push_back(d.name);
  ExplanationTask t{m, need_kernel(l), features, a.target, parse_assignment(a.factual, m), 0.0};
  Assignment want = parse_assignment(a.target + "=" + a.desired, m);
  t.desired = want.at(a.target);
  validate(t);
  return t;
}

std::string assignment_cells(const Assignment& a, const CausalModel& m) {
  std::string out;
  for (const auto& [n, v] : a) {
    std::string base = n.back() == '*' ? n.substr(0, n.size() - 1) : n;
    out += (out.empty() ? "" : ",") + n + "=" + m.domain(base).format_value(v);
  }
  return out;
}

std::string aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (w.size() <= j) w.push_back(0);
      w[j] = std::max(w[j], r[j].size());
    }
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      out += r[j];
      if (j + 1 < r.size()) out += std::string(w[j] - r[j].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

std::string render_assignment(const std::string& kind, const Assignment& a, const CausalModel& m, OutputFormat f) {
  if (f == OutputFormat::Machine) {
    std::string out = "format=scmcf-explain/1\nkind=" + kind + "\n";
    for (const auto& [n, v] : a) {
      std::string base = n.back() == '*' ? n.substr(0, n.size() - 1) : n;
      out += n + "=" + m.domain(base).format_value(v) + "\n";
    }
    return out;
  }
  std::vector<std::vector<std::string>> rows{{"variable", "value"}};
  for (const auto& [n, v] : a) {
    std::string base = n.back() == '*' ? n.substr(0, n.size() - 1) : n;
    rows.push_back({n, m.domain(base).format_value(v)});
  }
  return "explanation: " + kind + "\n" + aligned(rows);
}

std::string cmd_explain_map(const Common& c, const ExplainArgs& a) {
  auto l = load(c);
  auto t = explanation_task(l, a);
  return render_assignment("map", map_explanation(t, options_of(c, nullptr)), t.model, format_of(c.format));
}

std::string cmd_explain_fixed(const Common& c, const ExplainArgs& a) {
  auto l = load(c);
  auto t = explanation_task(l, a);
  auto z = split_names(a.subset);
  return render_assignment("fixed", fixed_remainder_explanation(t, z, options_of(c, nullptr)), t.model,
                           format_of(c.format));
}

std::string cmd_explain_sparse(const Common& c, const ExplainArgs& a) {
  auto l = load(c);
  auto t = explanation_task(l, a);
  auto opts = options_of(c, nullptr);
  auto list = sparse_explanations(t, a.k, a.alpha, opts);
  const double rest = unchanged_mass(t, opts);
  std::ostringstream out;
  if (format_of(c.format) == OutputFormat::Machine) {
    out << "format=scmcf-explain/1\nkind=sparse\ncount=" << list.size() << "\n";
    for (std::size_t i = 0; i < list.size(); ++i) {
      std::string subset;
      for (const auto& s : list[i].subset) subset += (subset.empty() ? "" : ",") + s;
      out << "subset." << i << "=" << subset << "\n";
      out << "values." << i << "=" << assignment_cells(list[i].values, t.model) << "\n";
      out << "score." << i << "=" << format_number(list[i].score) << "\n";
    }
    out << "unchanged=" << format_number(rest) << "\n";
    return out.str();
  }
  std::vector<std::vector<std::string>> rows{{"subset", "values", "score"}};
  for (const auto& e : list) {
    std::string subset;
    for (const auto& s : e.subset) subset += (subset.empty() ? "" : ",") + s;
    rows.push_back({subset, assignment_cells(e.values, t.model), format_number(e.score)});
  }
  out << "explanation: sparse (k=" << a.k << ", alpha=" << format_number(a.alpha) << ")\n";
  out << aligned(rows);
  out << "unchanged: " << format_number(rest) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// attribution

Calibration calibration_of(const std::string& s) {
  Calibration c;
  if (s == "identity") return c;
  if (s == "negate") {
    c.kind = Calibration::Kind::Negate;
    return c;
  }
  if (s == "exp") {
    c.kind = Calibration::Kind::Exp;
    return c;
  }
  if (s.rfind("affine:", 0) == 0) {
    auto parts = split_names(s.substr(7));
    if (parts.size() == 2) {
      try {
        c.kind = Calibration::Kind::Affine;
        c.a = std::stod(parts[0]);
        c.b = std::stod(parts[1]);
        if (c.a != 0.0) return c;
      } catch (const std::exception&) {
      }
    }
  }
  throw Usage("--tau must be identity, negate, exp or affine:A,B with A != 0");
}

std::string cmd_attribute(const Common& c, const std::string& target, const std::string& observation,
                          const std::string& tau, const std::string& subset, bool shapley,
                          std::size_t permutations, bool subset_given) {
  auto l = load(c);
  const auto& m = l.doc.model;
  if (target.empty()) throw Usage("--target is required");
  if (shapley == subset_given) throw Usage("give exactly one of --subset and --shapley");
  if (m.kind_of(target) != VariableKind::Endogenous)
    throw Error(ErrorKind::InvalidTask, "'" + target + "' is not an endogenous variable");
  AttributionTask task{m, need_prior(l), target, parse_assignment(observation, m), calibration_of(tau)};
  auto opts = options_of(c, nullptr);
  const bool machine = format_of(c.format) == OutputFormat::Machine;
  std::ostringstream out;
  if (!shapley) {
    auto s = split_names(subset);
    double score = attribution_score(task, s, opts);
    std::string joined;
    for (const auto& n : s) joined += (joined.empty() ? "" : ",") + n;
    if (machine) {
      out << "format=scmcf-attribution/1\nkind=subset\nsubset=" << joined << "\nscore=" << format_number(score) << "\n";
    } else {
      out << aligned({{"subset", "score"}, {joined.empty() ? "{}" : joined, format_number(score)}});
    }
    return out.str();
  }
  auto r = shapley_attribution(task, permutations, opts.seed, opts);
  if (machine) {
    out << "format=scmcf-attribution/1\nkind=shapley\npermutations=" << r.permutations << "\nseed=" << opts.seed
        << "\napproximate=" << (r.approximate ? "true" : "false") << "\n";
    for (std::size_t i = 0; i < r.variables.size(); ++i) out << r.variables[i] << "=" << format_number(r.values[i]) << "\n";
    return out.str();
  }
  std::vector<std::vector<std::string>> rows{{"variable", "shapley"}};
  for (std::size_t i = 0; i < r.variables.size(); ++i) rows.push_back({r.variables[i], format_number(r.values[i])});
  out << "attribution: shapley (" << (r.approximate ? "approximate, " : "") << r.permutations
      << " permutations, seed " << opts.seed << ")\n";
  out << aligned(rows);
  return out.str();
}

// ---------------------------------------------------------------------------

std::string cmd_check_kernel(const Common& c) {
  auto l = load(c);
  auto k = need_kernel(l);
  auto verdict = [](const std::function<bool()>& f) -> std::string {
    try {
      return f() ? "true" : "false";
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Undecidable) return "undecidable";
      throw;
    }
  };
  std::string closeness = verdict([&] { return check_closeness(k); });
  std::string symmetry = verdict([&] { return check_symmetry(k); });
  std::string decomposability = verdict([&] { return check_decomposability(k); });
  std::string tv = k.finite() ? format_number(marginal_match_tv(k)) : "n/a";
  std::ostringstream out;
  if (format_of(c.format) == OutputFormat::Machine) {
    out << "format=scmcf-kernel/1\nkind=" << to_string(k.spec().kind) << "\ncloseness=" << closeness
        << "\nsymmetry=" << symmetry << "\ndecomposability=" << decomposability << "\nmarginal_match_tv=" << tv << "\n";
    return out.str();
  }
  out << "kernel: " << to_string(k.spec().kind) << "\n";
  out << aligned({{"closeness:", closeness},
                  {"symmetry:", symmetry},
                  {"decomposability:", decomposability},
                  {"marginal-match tv:", tv}});
  return out.str();
}

void add_common(CLI::App* app, Common& c, bool query, bool engine) {
  app->add_option("--model,-m", c.model_path, "Model file (.model)")->required();
  if (query) app->add_option("--query,-q", c.query, "Query file (.query) or inline query text")->required();
  if (engine) {
    app->add_option("--backend", c.backend, "auto, exact, gaussian or mc")
        ->check(CLI::IsMember({"auto", "exact", "gaussian", "mc"}))
        ->each([&c](const std::string&) { c.backend_set = true; });
    app->add_option("--samples", c.samples, "Monte Carlo sample count")
        ->check(CLI::PositiveNumber)
        ->each([&c](const std::string&) { c.samples_set = true; });
    app->add_option("--seed", c.seed, "Random seed")->each([&c](const std::string&) { c.seed_set = true; });
    app->add_option("--workers", c.workers, "Upper bound on worker threads")->check(CLI::PositiveNumber);
  }
  app->add_option("--format", c.format, "table, moments or machine")
      ->check(CLI::IsMember({"table", "moments", "machine"}));
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::CounterlegalAntecedent:
    case ErrorKind::ZeroProbabilityEvidence:
    case ErrorKind::NonInvertibleAtObservation:
      return 2;
    case ErrorKind::UnsupportedBackend:
    case ErrorKind::FeatureSpaceTooLarge:
      return 3;
    default:
      return kUsage;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interventional, backtracking and unified counterfactuals over structural causal models", "scmcf"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common c;
  std::function<std::string()> action;

  auto* validate_cmd = app.add_subcommand("validate", "Parse and check a model file, its prior and its kernel");
  add_common(validate_cmd, c, false, false);
  validate_cmd->callback([&] { action = [&] { return cmd_validate(c); }; });

  std::string world, intervention;
  auto* solve_cmd = app.add_subcommand("solve", "Endogenous values for one exogenous assignment");
  add_common(solve_cmd, c, false, false);
  solve_cmd->add_option("--world,-u", world, "Exogenous assignment, e.g. U_X=1,U_Y=0")->required();
  solve_cmd->add_option("--do", intervention, "Optional intervention, e.g. X=0");
  solve_cmd->callback([&] { action = [&] { return cmd_solve(c, world, intervention); }; });

  auto* query_cmd = app.add_subcommand("query", "Answer a query under one of four semantics");
  query_cmd->require_subcommand(1);
  for (auto s : {Semantics::Observe, Semantics::Intervene, Semantics::Backtrack, Semantics::Unified}) {
    static const char* descriptions[] = {
        "P(targets | evidence) under the model",
        "Abduction, action, prediction with do-clauses",
        "Cross-world abduction with the model's backtracking kernel",
        "Backtracking over exogenous and regime variables",
    };
    auto* sub = query_cmd->add_subcommand(std::string(to_string(s)), descriptions[static_cast<int>(s)]);
    add_common(sub, c, true, true);
    sub->callback([&, s] { action = [&, s] { return cmd_query(c, s); }; });
  }

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Counterfactual explanations of a prediction Y = f(X)");
  explain_cmd->require_subcommand(1);
  auto explain_leaf = [&](const std::string& name, const std::string& description) {
    auto* sub = explain_cmd->add_subcommand(name, description);
    add_common(sub, c, false, true);
    sub->add_option("--target,-y", ex.target, "Predicted variable Y")->required();
    sub->add_option("--given", ex.factual, "Factual values of every feature and Y")->required();
    sub->add_option("--desired", ex.desired, "Desired value y*")->required();
    return sub;
  };
  auto* map_cmd = explain_leaf("map", "Most probable counterfactual features x*");
  map_cmd->callback([&] { action = [&] { return cmd_explain_map(c, ex); }; });
  auto* sparse_cmd = explain_leaf("sparse", "Ranked sparse explanations (subset, values, score)");
  sparse_cmd->add_option("--k", ex.k, "Largest subset size")->check(CLI::NonNegativeNumber);
  sparse_cmd->add_option("--alpha", ex.alpha, "Keep scores above this threshold")->check(CLI::Range(0.0, 1.0));
  sparse_cmd->callback([&] { action = [&] { return cmd_explain_sparse(c, ex); }; });
  auto* fixed_cmd = explain_leaf("fixed", "MAP over a chosen feature subset, the rest held factual");
  fixed_cmd->add_option("--features", ex.subset, "Features allowed to change, e.g. X1,X3")->required();
  fixed_cmd->callback([&] { action = [&] { return cmd_explain_fixed(c, ex); }; });

  std::string target, observation, tau = "identity", subset;
  bool shapley = false;
  std::size_t permutations = 200;
  auto* attribute_cmd = app.add_subcommand("attribute", "Outlier attribution to exogenous variables");
  add_common(attribute_cmd, c, false, true);
  attribute_cmd->add_option("--target,-y", target, "Outlying variable")->required();
  attribute_cmd->add_option("--observation", observation, "Observed endogenous values")->required();
  attribute_cmd->add_option("--tau", tau, "identity, negate, exp or affine:A,B");
  auto* subset_opt = attribute_cmd->add_option("--subset", subset, "Exogenous variables held at their abducted values");
  attribute_cmd->add_flag("--shapley", shapley, "Permutation-sampled Shapley values");
  attribute_cmd->add_option("--permutations", permutations, "Shapley permutations")->check(CLI::PositiveNumber);
  attribute_cmd->callback([&] {
    action = [&] {
      return cmd_attribute(c, target, observation, tau, subset, shapley, permutations, subset_opt->count() > 0);
    };
  });

  auto* check_cmd = app.add_subcommand("check-kernel", "Closeness, symmetry and decomposability verdicts");
  add_common(check_cmd, c, false, false);
  check_cmd->callback([&] { action = [&] { return cmd_check_kernel(c); }; });

  std::ostringstream buffered;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, buffered, err);
    return kUsage;
  }

  try {
    std::string text = action();
    out << text;
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Usage& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace scmcf::cli
