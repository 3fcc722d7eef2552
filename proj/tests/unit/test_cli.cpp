#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "retain/cli.hpp"
#include "retain/common.hpp"
#include "retain/learners/rule_tree.hpp"
#include "support.hpp"

using namespace retain;
using namespace retain::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

// Output file name -> digest, from a manifest.
std::map<std::string, std::string> output_digests(const fs::path& manifest) {
  std::map<std::string, std::string> m;
  const auto j = read_json(manifest);
  for (const auto& f : j["outputs"]) m[f["path"].get<std::string>()] = f["sha256"].get<std::string>();
  return m;
}

std::set<std::string> tree_files(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).generic_string());
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    input_ = (*dir_ / "ev.jsonl").string();
    const Outcome o = call({"synth", "--players", "400", "--seed", "7", "--out", input_, "--threads", "1"});
    ASSERT_EQ(o.code, 0) << o.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static TempDir* dir_;
  static std::string input_;
};

TempDir* CliTest::dir_ = nullptr;
std::string CliTest::input_;

struct Command {
  std::string name;
  std::vector<std::string> args;  // without the output flag
  bool single_file;               // output flag names a file rather than a directory
  std::string out_flag;
};

std::vector<Command> commands() {
  const std::vector<std::string> fast = {"--trees", "16", "--svm-rows", "200", "--lr-rows", "300"};
  auto with = [&](std::vector<std::string> a, bool learners) {
    if (learners) a.insert(a.end(), fast.begin(), fast.end());
    return a;
  };
  return {
      {"ingest", {}, false, "--out-dir"},
      {"featurize", {"--feature-window", "7d"}, true, "--out"},
      {"train", with({"--model", "ensemble"}, true), true, "--out"},
      {"tune", {"--family", "rf", "--subsample", "200", "--folds", "3"}, true, "--out"},
      {"evaluate", with({"--models", "tree,lr,svm,rf,ensemble", "--cv", "3"}, true), false, "--out-dir"},
      {"heuristic", {"--max-rules", "4", "--cv", "3"}, true, "--export"},
      {"robustness", {"--levels", "5"}, false, "--out-dir"},
      {"report", with({"--cv", "3", "--models", "tree,lr"}, true), false, "--out-dir"},
  };
}

}  // namespace

TEST(CliUnits, Sha256KnownVectors) {
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir d;
  std::ofstream(d / "f") << "abc";
  EXPECT_EQ(cli::sha256_file(d / "f"), cli::sha256_hex("abc"));
  EXPECT_THROW(cli::sha256_file(d / "missing"), IoError);
}

TEST(CliUnits, ConfigFileParsing) {
  TempDir d;
  std::ofstream(d / "ok.cfg") << "# comment\n\nseed = 5\n--players = \"60\"\nfeature-window=7d\n";
  const auto c = cli::read_config(d / "ok.cfg");
  EXPECT_EQ(c.at("seed"), "5");
  EXPECT_EQ(c.at("players"), "60");
  EXPECT_EQ(c.at("feature-window"), "7d");
  std::ofstream(d / "bad.cfg") << "seed 5\n";
  EXPECT_THROW(cli::read_config(d / "bad.cfg"), InputError);
  std::ofstream(d / "dup.cfg") << "seed = 5\nseed = 6\n";
  EXPECT_THROW(cli::read_config(d / "dup.cfg"), InputError);
  EXPECT_THROW(cli::read_config(d / "none.cfg"), InputError);
}

TEST(CliUnits, ArgumentResolutionOrder) {
  TempDir d;
  std::ofstream(d / "c.cfg") << "seed = 5\nplayers = 60\n";
  const std::string cfg = (d / "c.cfg").string();
  using V = std::vector<std::string>;
  EXPECT_EQ(cli::resolve_arguments(V{"synth", "--config", cfg, "--players", "70"}, "9"),
            (V{"synth", "--players=60", "--seed=5", "--players", "70"}));
  EXPECT_EQ(cli::resolve_arguments(V{"synth", "--players", "70"}, "9"), (V{"synth", "--seed=9", "--players", "70"}));
  EXPECT_EQ(cli::resolve_arguments(V{"synth", "--seed", "3"}, "9"), (V{"synth", "--seed", "3"}));
  EXPECT_EQ(cli::resolve_arguments(V{"synth"}, ""), (V{"synth"}));
  std::ofstream(d / "loop.cfg") << "config = other.cfg\n";
  EXPECT_THROW(cli::resolve_arguments(V{"synth", "--config=" + (d / "loop.cfg").string()}, ""), InputError);
}

TEST(CliUnits, ManifestRoundTrip) {
  cli::RunManifest m;
  m.subcommand = "synth";
  m.parameters = {{"players", "10"}};
  m.seed = 4;
  m.tool_version = "x";
  m.started_at = cli::utc_timestamp();
  m.finished_at = m.started_at;
  m.outputs.push_back({"a.csv", cli::sha256_hex("a"), 1});
  const auto back = cli::RunManifest::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_EQ(m.started_at.size(), 20u);
  EXPECT_EQ(m.started_at.back(), 'Z');
  EXPECT_THROW(cli::RunManifest::from_json(nlohmann::json::object()), InputError);
}

TEST_F(CliTest, SynthIsDeterministicAndRecordsDigests) {
  const std::string again = (*dir_ / "again" / "ev.jsonl").string();
  ASSERT_EQ(call({"synth", "--players", "400", "--seed", "7", "--out", again, "--threads", "2"}).code, 0);
  EXPECT_EQ(read_text(input_), read_text(again));
  const auto digests = output_digests(again + ".manifest.json");
  ASSERT_EQ(digests.size(), 2u);
  EXPECT_EQ(digests.at("ev.jsonl"), cli::sha256_hex(read_text(again)));
  EXPECT_EQ(digests.at("ev.jsonl.truth.jsonl"), cli::sha256_hex(read_text(again + ".truth.jsonl")));
  EXPECT_EQ(digests, output_digests(input_ + ".manifest.json"));

  const std::string other = (*dir_ / "other" / "ev.jsonl").string();
  ASSERT_EQ(call({"synth", "--players", "400", "--seed", "8", "--out", other}).code, 0);
  EXPECT_NE(read_text(input_), read_text(other));
}

TEST_F(CliTest, EverySubcommandIsDeterministicAndStaysInItsDirectory) {
  for (const Command& c : commands()) {
    std::map<std::string, std::string> first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out_dir = *dir_ / ("det_" + c.name + "_" + std::to_string(rep));
      const fs::path target = c.single_file ? out_dir / (c.name + ".out") : out_dir;
      std::vector<std::string> args = {c.name, "--input", input_, "--seed", "11", c.out_flag, target.string(),
                                       "--threads", rep == 0 ? "1" : "2"};
      args.insert(args.end(), c.args.begin(), c.args.end());

      const auto before = tree_files(dir_->path());
      const Outcome o = call(args);
      ASSERT_EQ(o.code, 0) << c.name << ": " << o.err;
      for (const auto& f : tree_files(dir_->path())) {
        if (before.count(f)) continue;
        EXPECT_EQ(f.rfind(out_dir.filename().string() + "/", 0), 0u) << c.name << " wrote " << f;
      }

      const fs::path manifest = c.single_file ? fs::path(target.string() + ".manifest.json") : out_dir / "manifest.json";
      ASSERT_TRUE(fs::exists(manifest)) << c.name;
      const auto j = read_json(manifest);
      EXPECT_EQ(j["subcommand"], c.name);
      EXPECT_EQ(j["seed"], 11u);
      ASSERT_FALSE(j["inputs"].empty());
      EXPECT_EQ(j["inputs"][0]["sha256"], cli::sha256_hex(read_text(input_)));
      const auto digests = output_digests(manifest);
      EXPECT_FALSE(digests.empty()) << c.name;
      for (const auto& [name, sha] : digests) {
        EXPECT_EQ(cli::sha256_hex(read_text(out_dir / name)), sha) << c.name << " " << name;
      }
      if (rep == 0) {
        first = digests;
      } else {
        EXPECT_EQ(digests, first) << c.name << " differs between runs";
      }
    }
  }
}

TEST_F(CliTest, HeuristicExportReclassifiesFeatureRows) {
  const fs::path rules = *dir_ / "heur" / "rules.json";
  ASSERT_EQ(call({"heuristic", "--input", input_, "--max-rules", "4", "--cv", "0", "--export", rules.string()}).code, 0);
  const RuleSet set = RuleSet::from_json(read_json(rules));
  EXPECT_LE(read_json(rules)["rules"].size(), 5u);

  const fs::path feats = *dir_ / "heur" / "feat.csv";
  ASSERT_EQ(call({"featurize", "--input", input_, "--out", feats.string()}).code, 0);
  std::ifstream in(feats);
  const auto rows = read_features_csv(in);
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    const int c = set.classify(r);
    ASSERT_TRUE(c == 0 || c == 1);
  }
}

TEST_F(CliTest, EvaluateEmitsOneRowPerModel) {
  const fs::path out = *dir_ / "eval_rows";
  ASSERT_EQ(call({"evaluate", "--input", input_, "--feature-window", "7d", "--eval-window", "8:14", "--models",
                  "lr,svm,rf,ensemble", "--cv", "3", "--trees", "16", "--svm-rows", "200", "--out-dir", out.string()})
                .code,
            0);
  std::istringstream csv(read_text(out / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("window,eval_window,model,accuracy", 0), 0u);
  std::vector<std::string> models;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string window, eval, model;
    std::getline(ls, window, ',');
    std::getline(ls, eval, ',');
    std::getline(ls, model, ',');
    EXPECT_EQ(window, "7d");
    EXPECT_EQ(eval, "8:14");
    models.push_back(model);
  }
  EXPECT_NE(std::find(models.begin(), models.end(), "lr"), models.end());
  EXPECT_NE(std::find(models.begin(), models.end(), "svm"), models.end());
  EXPECT_NE(std::find(models.begin(), models.end(), "rf"), models.end());
  EXPECT_NE(std::find(models.begin(), models.end(), "ensemble"), models.end());
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  const fs::path cfg = *dir_ / "synth.cfg";
  std::ofstream(cfg) << "players = 50\nseed = 7\n";
  const fs::path a = *dir_ / "cfg" / "a.jsonl";
  ASSERT_EQ(call({"synth", "--config", cfg.string(), "--out", a.string()}).code, 0);
  auto j = read_json(a.string() + ".manifest.json");
  EXPECT_EQ(j["parameters"]["players"], "50");
  EXPECT_EQ(j["seed"], 7u);

  const fs::path b = *dir_ / "cfg" / "b.jsonl";
  ASSERT_EQ(call({"synth", "--config", cfg.string(), "--players", "60", "--out", b.string()}).code, 0);
  j = read_json(b.string() + ".manifest.json");
  EXPECT_EQ(j["parameters"]["players"], "60");
  EXPECT_EQ(j["seed"], 7u);

  // Defaults apply when neither flag nor file sets a value.
  const fs::path c = *dir_ / "cfg" / "c.jsonl";
  ASSERT_EQ(call({"synth", "--seed", "7", "--out", c.string()}).code, 0);
  EXPECT_EQ(read_json(c.string() + ".manifest.json")["parameters"]["players"], "1000");
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  const fs::path a = *dir_ / "env" / "a.jsonl", b = *dir_ / "env" / "b.jsonl", c = *dir_ / "env" / "c.jsonl";
  ASSERT_EQ(setenv("RETAIN_SEED", "23", 1), 0);
  const int ca = call({"synth", "--players", "80", "--out", a.string()}).code;
  const int cc = call({"synth", "--players", "80", "--seed", "24", "--out", c.string()}).code;
  unsetenv("RETAIN_SEED");
  ASSERT_EQ(ca, 0);
  ASSERT_EQ(cc, 0);
  ASSERT_EQ(call({"synth", "--players", "80", "--seed", "23", "--out", b.string()}).code, 0);
  EXPECT_EQ(read_json(a.string() + ".manifest.json")["seed"], 23u);
  EXPECT_EQ(read_text(a), read_text(b));
  EXPECT_EQ(read_json(c.string() + ".manifest.json")["seed"], 24u);
}

TEST_F(CliTest, ExitCodes) {
  const Outcome help = call({"--help"});
  EXPECT_EQ(help.code, cli::kExitOk);
  EXPECT_NE(help.out.find("synth"), std::string::npos);

  EXPECT_EQ(call({}).code, cli::kExitUsage);
  EXPECT_EQ(call({"frobnicate"}).code, cli::kExitUsage);
  const Outcome unknown = call({"synth", "--out", (*dir_ / "u.jsonl").string(), "--no-such-flag"});
  EXPECT_EQ(unknown.code, cli::kExitUsage);
  EXPECT_FALSE(unknown.err.empty());
  EXPECT_EQ(call({"synth"}).code, cli::kExitUsage);  // --out is required
  EXPECT_EQ(call({"evaluate", "--input", input_, "--cv", "1"}).code, cli::kExitUsage);

  const Outcome missing = call({"ingest", "--input", (*dir_ / "nope.jsonl").string(), "--out-dir", (*dir_ / "x").string()});
  EXPECT_EQ(missing.code, cli::kExitInput);
  EXPECT_NE(missing.err.find("nope.jsonl"), std::string::npos);
  EXPECT_EQ(call({"evaluate", "--input", input_, "--models", "knn", "--out-dir", (*dir_ / "x").string()}).code,
            cli::kExitInput);
  EXPECT_EQ(call({"featurize", "--input", input_, "--eval-window", "14:8", "--out", (*dir_ / "x" / "f.csv").string()}).code,
            cli::kExitInput);

  // An output path below a regular file cannot be created.
  std::ofstream(*dir_ / "plain") << "x";
  EXPECT_EQ(call({"synth", "--players", "10", "--out", (*dir_ / "plain" / "sub" / "o.jsonl").string()}).code,
            cli::kExitInternal);
}
