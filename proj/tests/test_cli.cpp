#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "scmcf/cli.hpp"
#include "scmcf/model_io.hpp"

using namespace scmcf;

namespace {

const std::filesystem::path kRoot = SCMCF_SOURCE_DIR;

std::string path(const std::string& rel) { return (kRoot / rel).string(); }

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A scratch model file removed at scope exit.
struct TempModel {
  std::filesystem::path file;
  explicit TempModel(const std::string& text) {
    file = std::filesystem::temp_directory_path() /
           ("scmcf_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + ".model");
    std::ofstream(file) << text;
  }
  ~TempModel() { std::filesystem::remove(file); }
};

const char* kNonuniformIndependent = R"(exogenous {
  U : bool
}
endogenous {
  X : bool
}
laws {
  X := U
}
prior {
  U ~ bernoulli(0.3)
}
backtracking {
  kind = prior_independent
}
)";

}  // namespace

TEST(Cli, BacktrackOnLinearChainGivesTheClosedForm) {
  auto r = run({"query", "backtrack", "--model", path("models/linear_gaussian.model"), "--query",
                path("queries/linear_backtrack.query"), "--format", "machine"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mean=1.5,3.5\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("covariance.0=0.5,0.5\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("covariance.1=0.5,1.5\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("provenance=gaussian\n"), std::string::npos);
}

TEST(Cli, InterventionRevivesTheExecution) {
  auto r = run({"query", "intervene", "-m", path("models/firing_squad.model"), "-q",
                path("queries/squad_intervene.query")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("P*  probability\n1   1\n"), std::string::npos) << r.out;
}

TEST(Cli, CounterlegalAntecedentExitsWithTwo) {
  auto r = run({"query", "backtrack", "-m", path("models/copy.model"), "-q", path("queries/copy_counterlegal.query")});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("CounterlegalAntecedent"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("Y*=1, X*=0"), std::string::npos) << r.err;

  auto rescued = run({"query", "unified", "-m", path("models/copy.model"), "-q", path("queries/copy_rescue.query")});
  ASSERT_EQ(rescued.code, 0) << rescued.err;
  EXPECT_NE(rescued.out.find("0   1   1     1\n"), std::string::npos) << rescued.out;
}

TEST(Cli, ExactBackendOnContinuousModelExitsWithThree) {
  auto r = run({"query", "backtrack", "-m", path("models/linear_gaussian.model"), "-q",
                path("queries/linear_backtrack.query"), "--backend", "exact"});
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(r.out.empty());
  auto o = run({"query", "observe", "-m", path("models/linear_gaussian.model"), "-q", "given Y=3 find X", "--backend",
                "exact"});
  EXPECT_EQ(o.code, 3);
}

TEST(Cli, UsageErrorsExitWithOne) {
  for (std::vector<std::string> args : {
           std::vector<std::string>{},
           std::vector<std::string>{"frobnicate"},
           std::vector<std::string>{"query", "observe", "-q", "given P=1 find C"},
           std::vector<std::string>{"query", "observe", "-m", path("models/firing_squad.model"), "-q", "given Q=1 find C"},
           std::vector<std::string>{"query", "intervene", "-m", path("models/firing_squad.model"), "-q",
                                    path("queries/squad_backtrack.query")},
           std::vector<std::string>{"validate", "-m", path("models/missing.model")},
           std::vector<std::string>{"query", "observe", "-m", path("models/firing_squad.model"), "-q", "given P=1 find C",
                                    "--backend", "quantum"},
       }) {
    auto r = run(args);
    EXPECT_EQ(r.code, 1) << r.err;
    EXPECT_TRUE(r.out.empty()) << r.out;
  }
}

TEST(Cli, HelpForEverySubcommand) {
  for (std::vector<std::string> args : {std::vector<std::string>{"--help"}, std::vector<std::string>{"query", "backtrack", "--help"},
                                        std::vector<std::string>{"explain", "sparse", "--help"},
                                        std::vector<std::string>{"check-kernel", "--help"}}) {
    auto r = run(args);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("--"), std::string::npos);
  }
}

TEST(Cli, SameSeedSameBytes) {
  std::vector<std::string> args{"query", "backtrack", "-m", path("models/linear_gaussian.model"), "-q",
                                path("queries/linear_backtrack_mc.query"), "--format", "machine"};
  auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("ess="), std::string::npos);
  args.push_back("--seed");
  args.push_back("8");
  EXPECT_NE(run(args).out, a.out);
}

TEST(Cli, CheckKernelVerdicts) {
  auto g = run({"check-kernel", "-m", path("models/linear_gaussian.model"), "--format", "machine"});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_NE(g.out.find("closeness=true\nsymmetry=true\ndecomposability=true\n"), std::string::npos) << g.out;

  TempModel independent(kNonuniformIndependent);
  auto p = run({"check-kernel", "-m", independent.file.string(), "--format", "machine"});
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_NE(p.out.find("symmetry=false\n"), std::string::npos) << p.out;

  std::string shared = kNonuniformIndependent;
  shared.replace(shared.find("prior_independent"), 17, "shared");
  TempModel shared_file(shared);
  auto s = run({"check-kernel", "-m", shared_file.file.string(), "--format", "machine"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("closeness=true\nsymmetry=true\ndecomposability=true\nmarginal_match_tv=0\n"), std::string::npos)
      << s.out;
}

TEST(Cli, BundledModelsRoundTrip) {
  for (const auto& entry : std::filesystem::directory_iterator(kRoot / "models")) {
    auto doc = parse_model(read(entry.path()));
    EXPECT_EQ(parse_model(serialize_model(doc)), doc) << entry.path();
  }
  for (const auto& entry : std::filesystem::directory_iterator(kRoot / "queries")) {
    auto name = entry.path().stem().string();
    std::string model = name.substr(0, name.find('_'));
    std::map<std::string, std::string> models{{"linear", "linear_gaussian"}, {"squad", "firing_squad"},
                                              {"copy", "copy"}, {"shared", "shared_form_x_to_y"}, {"loan", "loan"}};
    ASSERT_TRUE(models.count(model)) << name;
    auto doc = parse_model(read(kRoot / "models" / (models[model] + ".model")));
    auto q = parse_query(read(entry.path()), doc.model);
    EXPECT_EQ(parse_query(serialize_query(q, doc.model), doc.model), q) << name;
  }
}

// Every case in tests/golden/cases.txt must reproduce its recorded output
// byte for byte. SCMCF_UPDATE_GOLDEN=1 rewrites the files instead.
TEST(Golden, BundledInvocations) {
  std::ifstream cases(kRoot / "tests/golden/cases.txt");
  ASSERT_TRUE(cases) << "missing tests/golden/cases.txt";
  const bool update = std::getenv("SCMCF_UPDATE_GOLDEN") != nullptr;
  std::string line;
  int count = 0;
  while (std::getline(cases, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream words(line);
    std::string name, word;
    words >> name;
    std::vector<std::string> args;
    while (words >> word) {
      if (word.rfind("models/", 0) == 0 || word.rfind("queries/", 0) == 0) word = path(word);
      args.push_back(word);
    }
    auto r = run(args);
    std::string recorded = "exit: " + std::to_string(r.code) + "\n" + r.out + (r.err.empty() ? "" : "stderr:\n" + r.err);
    auto file = kRoot / "tests/golden" / (name + ".out");
    if (update) {
      std::ofstream(file, std::ios::binary) << recorded;
    } else {
      EXPECT_EQ(recorded, read(file)) << name;
    }
    ++count;
  }
  EXPECT_GT(count, 0);
}
