#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "trident/container.hpp"
#include "trident/pipeline.hpp"

using namespace trident;
using namespace trident::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kToy = fs::path(TRIDENT_CONFIG_DIR) / "toy.json";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("trident_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> toy_overrides(const fs::path& out) {
  return {"output_dir=" + out.string(), "train.max_steps_phase1=20", "train.max_steps_phase2=20"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

int run(const std::string& cmd, const std::vector<std::string>& overrides,
        const fs::path& config = kToy) {
  std::ostringstream log;
  return run_command(cmd, config, overrides, log);
}

}  // namespace

TEST(Overrides, DottedPathsAndValueParsing) {
  json j = json::object();
  j["train"] = {{"lambda", 0.6}};
  apply_override(j, "train.lambda=1");
  apply_override(j, "decode.constrained=false");
  apply_override(j, "output_dir=runs/x");
  apply_override(j, "decode.directions=[\"qb\"]");
  EXPECT_EQ(j["train"]["lambda"], 1);
  EXPECT_EQ(j["decode"]["constrained"], false);
  EXPECT_EQ(j["output_dir"], "runs/x");
  EXPECT_EQ(j["decode"]["directions"], json::array({"qb"}));
  EXPECT_THROW(apply_override(j, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(j, "output_dir.inner=1"), ConfigError);
}

TEST(Config, LoadsToyAndRejectsUnknownOrInvalidValues) {
  const auto c = load_config(kToy);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.data.spec.n_topics, 2);
  EXPECT_THROW(load_config(kToy, {"train.lamda=0.5"}), ConfigError);
  EXPECT_THROW(load_config(kToy, {"train.lambda=2"}), ConfigError);
  EXPECT_THROW(load_config(kToy, {"model.heads=3"}), ConfigError);
  EXPECT_THROW(load_config(kToy, {"decode.directions=[\"ba\"]"}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
  json round = c;
  EXPECT_EQ(json(config_from_json(round)), round);
}

TEST(Config, SeedsFlowFromTheRunSeed) {
  auto c = load_config(kToy, {"seed=3", "train.seed=99", "data.spec.seed=42"});
  EXPECT_EQ(c.train_config().seed, 3u);
  EXPECT_EQ(c.corpus_spec().seed, derive_seed(3, "corpus"));
}

TEST(Config, OutputRootEnvironmentVariable) {
  auto c = load_config(kToy, {"output_dir=runs/a"});
  ::setenv(kOutputRootEnv, "/tmp/root", 1);
  EXPECT_EQ(c.output_path(), fs::path("/tmp/root/runs/a"));
  c.output_dir = "/abs/dir";
  EXPECT_EQ(c.output_path(), fs::path("/abs/dir"));
  ::unsetenv(kOutputRootEnv);
  c.output_dir = "runs/a";
  EXPECT_EQ(c.output_path(), fs::path("runs/a"));
}

TEST(ExitCodes, DistinctPerFailureKind) {
  const auto out = scratch("exit");
  EXPECT_EQ(run("frobnicate", toy_overrides(out)), kExitUsage);
  EXPECT_EQ(run("train", {"train.lambda=7"}), kExitInvalidConfig);
  EXPECT_EQ(run("evaluate", toy_overrides(out)), kExitMissingCheckpoint);
  EXPECT_EQ(run("generate", toy_overrides(out)), kExitMissingCheckpoint);
  fs::remove_all(out);
}

TEST(GenData, IdenticalFilesOnRepeat) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(run("gen-data", toy_overrides(a)), kExitOk);
  ASSERT_EQ(run("gen-data", toy_overrides(b)), kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a / "data")) {
    EXPECT_EQ(slurp(e.path()), slurp(b / "data" / e.path().filename())) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 11u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, SourcesGoldAndFractions) {
  const auto c = load_config(kToy);
  const auto data = make_dataset(c);
  const auto sources = test_sources(data, "ab", 0);
  std::set<corpus::Tokens> distinct;
  for (const auto& p : data.corpus.select(corpus::PairKind::kAB, corpus::Split::kTest)) {
    distinct.insert(p.source);
  }
  EXPECT_EQ(sources.size(), distinct.size());
  for (const auto& s : sources) {
    for (const auto& g : s.gold) {
      bool clean = false;
      for (const auto& p : data.corpus.ab) {
        clean |= p.source == s.tokens && p.target == g && !p.noisy && p.split == corpus::Split::kTest;
      }
      EXPECT_TRUE(clean);
    }
  }
  EXPECT_EQ(test_sources(data, "qb", 5).size(), 5u);

  const auto full = training_data(data, c, 1.0);
  const auto half = training_data(data, c, 0.5);
  const auto quarter = training_data(data, c, 0.25);
  EXPECT_EQ(half.aq_train.size(), (full.aq_train.size() + 1) / 2);
  EXPECT_EQ(half.ab_train.size(), full.ab_train.size());
  // Smaller fractions are nested subsets of larger ones.
  const auto as_set = [](const std::vector<train::IdPair>& v) {
    std::multiset<std::pair<std::vector<int>, std::vector<int>>> s;
    for (const auto& p : v) s.insert({p.source, p.target});
    return s;
  };
  const auto f = as_set(full.aq_train), h = as_set(half.aq_train), q = as_set(quarter.aq_train);
  EXPECT_TRUE(std::includes(f.begin(), f.end(), h.begin(), h.end()));
  EXPECT_TRUE(std::includes(h.begin(), h.end(), q.begin(), q.end()));
}

TEST(Manifest, HashesMatchFiles) {
  const auto out = scratch("manifest");
  ASSERT_EQ(run("gen-data", toy_overrides(out)), kExitOk);
  const auto m = read_json(out / "manifests" / "gen-data.json");
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_EQ(m["seed"], 7);
  EXPECT_TRUE(m["config"].is_object());
  ASSERT_FALSE(m["artifacts"].empty());
  for (const auto& a : m["artifacts"]) {
    const fs::path p = out / a["path"].get<std::string>();
    EXPECT_EQ(a["sha256"], sha256_file(p));
    EXPECT_EQ(a["bytes"], fs::file_size(p));
  }
  fs::remove_all(out);
}

TEST(Sha256, KnownDigest) {
  const auto p = fs::temp_directory_path() / "trident_sha_test.txt";
  std::ofstream(p, std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}

class ToyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    out_ = scratch("toy");
    auto o = toy_overrides(out_);
    o.push_back("decode.beam=3");
    overrides_ = o;
    for (const char* cmd : {"train", "generate", "evaluate", "ablate-beam"}) {
      codes_.push_back(run(cmd, overrides_));
    }
  }
  static void TearDownTestSuite() { fs::remove_all(out_); }

  static inline fs::path out_;
  static inline std::vector<std::string> overrides_;
  static inline std::vector<int> codes_;
};

TEST_F(ToyPipeline, EveryCommandSucceedsAndWritesArtifacts) {
  for (int c : codes_) EXPECT_EQ(c, kExitOk);
  for (const char* f : {"checkpoints/phase1.ckpt", "checkpoints/phase2.ckpt", "losses.csv",
                        "candidates.ab.tsv", "candidates.qb.tsv", "metrics.json", "metrics.txt",
                        "ablate_beam.json", "manifests/train.json", "manifests/evaluate.json"}) {
    EXPECT_TRUE(fs::exists(out_ / f)) << f;
  }
}

TEST_F(ToyPipeline, ConstrainedCandidatesHaveDistinctHeads) {
  std::map<std::string, std::set<std::string>> heads;
  std::map<std::string, int> counts;
  std::ifstream in(out_ / "candidates.qb.tsv");
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    ASSERT_EQ(fields.size(), 4u);
    const auto words = corpus::split_whitespace(fields[3]);
    ASSERT_FALSE(words.empty());
    heads[fields[0]].insert(words.front());
    ++counts[fields[0]];
  }
  ASSERT_FALSE(counts.empty());
  for (const auto& [src, n] : counts) {
    EXPECT_EQ(n, 3);
    EXPECT_EQ(heads[src].size(), static_cast<std::size_t>(n)) << src;
  }
}

TEST_F(ToyPipeline, MetricsReportFullyPopulated) {
  const auto m = read_json(out_ / "metrics.json");
  for (const char* d : {"ab", "qb"}) {
    ASSERT_TRUE(m.contains(d));
    ASSERT_EQ(m[d].size(), 4u);  // model plus three matching baselines
    for (const auto& r : m[d]) {
      for (const char* f : {"system", "bleu", "self_bleu", "distinct_3", "distinct_4", "precision",
                            "recall", "f1", "topic_relevance", "sources", "candidates"}) {
        EXPECT_TRUE(r.contains(f)) << f;
      }
      for (const char* f : {"bleu", "self_bleu", "distinct_3", "distinct_4", "precision",
                            "recall", "f1", "topic_relevance"}) {
        const double v = r[f].get<double>();
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      EXPECT_GT(r["sources"].get<int>(), 0);
    }
    EXPECT_EQ(m[d][0]["system"], "TRIDENT-A");
  }
}

TEST_F(ToyPipeline, LossCsvHasBothPhases) {
  std::ifstream in(out_ / "losses.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,phase,L_MLE,L_TRI,L");
  std::set<char> phases;
  while (std::getline(in, line)) phases.insert(line[line.find(',') + 1]);
  EXPECT_EQ(phases, (std::set<char>{'1', '2'}));
}

TEST(SystemName, TakenFromTheCheckpoint) {
  const auto out = scratch("direct");
  auto o = toy_overrides(out);
  o.push_back("train.lambda=1");
  o.push_back("eval.baselines=false");
  ASSERT_EQ(run("train", o), kExitOk);
  o.pop_back();
  o.pop_back();
  o.push_back("eval.baselines=false");
  ASSERT_EQ(run("evaluate", o), kExitOk);
  const auto m = read_json(out / "metrics.json");
  EXPECT_EQ(m["ab"][0]["system"], "direct");
  EXPECT_EQ(read_container(out / "checkpoints" / "phase2.ckpt").header["system"], "direct");
  fs::remove_all(out);
}
