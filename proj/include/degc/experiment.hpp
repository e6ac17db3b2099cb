#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "degc/checkpoint.hpp"
#include "degc/methods.hpp"
#include "degc/stream_data.hpp"
#include "degc/synthetic.hpp"

namespace degc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat experiment configuration. Every field is reachable through a
/// documented key; see `config_keys()`.
struct ExperimentConfig {
  std::string profile = "paper";

  // Data: a delimited file, or the synthetic generator when `data_path` is empty.
  std::string data_path;
  char delimiter = ',';
  bool skip_header = false;
  std::size_t min_count = 0;
  SyntheticConfig synthetic;
  std::optional<std::uint64_t> synthetic_seed;  // defaults to the run seed
  int segments = 10;

  Method method = Method::kDegcFinetune;
  Variant variant = Variant::kNgcf;
  int dim = 128;
  int layers = 2;
  std::vector<int> widths;  // empty: every layer as wide as `dim`
  SurgeryConfig surgery;
  TrainConfig train;
  int co_threshold = 1;
  double replay_fraction = 1.0;

  std::vector<std::uint64_t> seeds{1};
  std::string out = "runs/degc";

  /// Throws ConfigError with the offending key.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError.
  void validate() const;
  /// Canonical "key = value" lines, sorted by key.
  std::string to_text() const;
  MethodConfig method_config() const;
  SyntheticConfig synthetic_for(std::uint64_t seed) const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

/// Defaults of a named profile ("paper" or "desk").
ExperimentConfig profile_config(const std::string& profile);

/// Parses "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Segmented stream for one seed: the file, or the synthetic generator.
struct StreamData {
  std::vector<Segment> segments;
  IdVocabulary users;
  IdVocabulary items;
};
StreamData load_stream(const ExperimentConfig& config, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<SegmentOutcome> outcomes;
};

/// Runs every seed and writes the result bundle under `config.out`.
std::vector<SeedResult> run_experiment(const ExperimentConfig& config);

struct MetricsRow {
  int segment = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double n_users = 0.0;
};

MetricsRow to_row(const SegmentMetrics& m);
/// "segment,recall@k,ndcg@k,n_users" plus one line per row.
std::string format_metrics(const std::vector<MetricsRow>& rows, int k);
/// Throws DataError on a malformed file.
std::vector<MetricsRow> parse_metrics(const std::string& text);
/// Seed-wise arithmetic mean per segment.
std::vector<MetricsRow> average_metrics(const std::vector<std::vector<MetricsRow>>& runs);

/// Moves a checkpoint's rows onto another vocabulary by external id; rows
/// whose id the vocabulary lacks are dropped.
StreamState remap_checkpoint(const Checkpoint& ckpt, const IdVocabulary& users,
                             const IdVocabulary& items);

/// Re-scores a saved model on segment `segment` of the stream the config
/// describes for `seed`.
SegmentMetrics rescore_checkpoint(const ExperimentConfig& config,
                                  const std::filesystem::path& checkpoint, int segment,
                                  std::uint64_t seed);

/// Writes series/<method>_<metric>.tsv (segment, mean, min, max over seeds)
/// for every bundle into `out`. Returns the written paths.
std::vector<std::filesystem::path> emit_plot_data(
    const std::vector<std::filesystem::path>& bundles, const std::filesystem::path& out);

}  // namespace degc
