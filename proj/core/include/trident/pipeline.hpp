#pragma once

// End-to-end runs driven by one JSON config: data generation, training,
// generation, evaluation and the two experiment protocols.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trident/corpus.hpp"
#include "trident/decoding.hpp"
#include "trident/evaluation.hpp"
#include "trident/seq2seq.hpp"
#include "trident/tokenizer.hpp"
#include "trident/training.hpp"

namespace trident::pipeline {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitInvalidConfig = 3,
  kExitMissingCheckpoint = 4,
  kExitFailure = 5,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Environment variable that replaces the directory relative output_dir
// values are resolved against (default: the working directory).
inline constexpr const char* kOutputRootEnv = "TRIDENT_OUTPUT_ROOT";

struct DataConfig {
  corpus::GenSpec spec;  // spec.seed is ignored; derived from the run seed
  std::size_t valid_per_kind = 100;
  std::size_t test_per_kind = 200;
  int min_freq = 1;
  int merges = 0;
};

struct DecodeConfig {
  int beam = 32;
  int max_len = 6;  // twice the mean bidword length
  bool constrained = true;
  bool length_normalize = false;
  std::vector<std::string> directions{"ab", "qb"};  // ab: ad->bidword, qb: query->bidword
  std::string input;  // optional source file for `generate`, one source per line
};

struct EvalConfig {
  std::size_t max_sources = 0;  // 0 = every distinct test source
  bool baselines = true;
  int embedding_dim = 32;
};

struct SweepConfig {
  std::vector<double> fractions{0.25, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  DataConfig data;
  model::ModelConfig model;  // vocab_size is filled from the vocabulary
  train::TrainConfig train;  // train.seed is ignored; the run seed is used
  DecodeConfig decode;
  EvalConfig eval;
  SweepConfig sweep;

  void validate() const;  // throws ConfigError
  std::filesystem::path output_path() const;
  corpus::GenSpec corpus_spec() const;
  train::TrainConfig train_config() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Sets `dotted.path` in `config` to `value` parsed as JSON, falling back to
// the raw string when it does not parse.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Parses, rejects keys the config does not know, applies overrides and
// validates. Throws ConfigError.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});
RunConfig config_from_json(nlohmann::json j, const std::vector<std::string>& overrides = {});

// ---- building blocks ---------------------------------------------------------

struct Dataset {
  corpus::TriCorpus corpus;  // split
  corpus::Grammar grammar;
  tok::Vocab vocab;
  tok::SubwordMerges merges;
};

Dataset make_dataset(const RunConfig& config);
void save_dataset(const Dataset& data, const RunConfig& config,
                  const std::filesystem::path& dir);
Dataset load_dataset(const RunConfig& config, const std::filesystem::path& dir);

std::vector<int> encode_tokens(const Dataset& data, const corpus::Tokens& words,
                               std::size_t max_tokens);
corpus::Tokens decode_ids(const Dataset& data, std::span<const int> ids);

// Train/valid id pairs. The aq training split keeps the first
// ceil(aq_fraction * n) pairs of a seeded permutation.
train::TrainingData training_data(const Dataset& data, const RunConfig& config,
                                  double aq_fraction = 1.0);

model::ModelConfig model_config(const RunConfig& config, const Dataset& data);

// Display name of the trained system, e.g. "TRIDENT-A" or "direct".
std::string system_name(const RunConfig& config);

struct Candidate {
  std::string text;
  double score = 0.0;
};

// Distinct test sources of a direction ("ab" or "qb") with topic and the
// clean gold bidwords.
struct Source {
  corpus::Tokens tokens;
  int topic = 0;
  std::vector<corpus::Tokens> gold;
};
std::vector<Source> test_sources(const Dataset& data, const std::string& direction,
                                 std::size_t max_sources);

std::vector<Candidate> generate_candidates(const model::ModelBundle& bundle,
                                           const Dataset& data, const std::string& direction,
                                           const corpus::Tokens& source,
                                           const DecodeConfig& decode);

eval::MetricsReport evaluate_bundle(const model::ModelBundle& bundle, const Dataset& data,
                                    const std::string& direction, const DecodeConfig& decode,
                                    const EvalConfig& eval, const std::string& system);

std::vector<eval::MetricsReport> evaluate_baselines(const Dataset& data,
                                                    const std::string& direction,
                                                    const DecodeConfig& decode,
                                                    const EvalConfig& eval);

// ---- manifest ------------------------------------------------------------------

std::string sha256_file(const std::filesystem::path& path);

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& config, std::filesystem::path root);
  void add(const std::filesystem::path& artifact);
  // Re-hashes every artifact, checks it is non-empty and writes
  // manifests/<command>.json. Returns the manifest path.
  std::filesystem::path write();

 private:
  std::string command_;
  nlohmann::json config_;
  std::uint64_t seed_;
  std::filesystem::path root_;
  std::vector<std::filesystem::path> artifacts_;
};

// ---- subcommands ---------------------------------------------------------------

int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& log);

void cmd_gen_data(const RunConfig& config, std::ostream& log);
void cmd_train(const RunConfig& config, std::ostream& log);
void cmd_generate(const RunConfig& config, std::ostream& log);
void cmd_evaluate(const RunConfig& config, std::ostream& log);
void cmd_sweep_aq_size(const RunConfig& config, std::ostream& log);
void cmd_ablate_beam(const RunConfig& config, std::ostream& log);

}  // namespace trident::pipeline
