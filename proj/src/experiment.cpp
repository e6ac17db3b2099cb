#include "degc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "degc/checkpoint.hpp"
#include "degc/io.hpp"
#include "json.hpp"

namespace degc {

namespace {

using Json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("bad value for '" + key + "': '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad value for '" + key + "': '" + value + "'");
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct KeyDef {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T, typename Field>
KeyDef number_key(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [name, field](ExperimentConfig& c, const std::string& v) {
            field(c) = parse_number<T>(name, v);
          },
          [field](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(field(const_cast<ExperimentConfig&>(c)));
            } else {
              return std::to_string(field(const_cast<ExperimentConfig&>(c)));
            }
          }};
}

#define FIELD(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = [] {
    std::vector<KeyDef> d;
    d.push_back({"profile", "defaults preset: paper | desk",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v != "paper" && v != "desk") throw ConfigError("unknown profile '" + v + "'");
                   c.profile = v;
                 },
                 [](const ExperimentConfig& c) { return c.profile; }});
    d.push_back({"data", "interaction file (user,item,timestamp); empty = synthetic",
                 [](ExperimentConfig& c, const std::string& v) { c.data_path = v; },
                 [](const ExperimentConfig& c) { return c.data_path; }});
    d.push_back({"delimiter", "field delimiter of the data file; 'tab' for a tab",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "tab") {
                     c.delimiter = '\t';
                   } else if (v.size() == 1) {
                     c.delimiter = v[0];
                   } else {
                     throw ConfigError("delimiter must be one character or 'tab'");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return c.delimiter == '\t' ? std::string("tab") : std::string(1, c.delimiter);
                 }});
    d.push_back({"header", "skip the first line of the data file",
                 [](ExperimentConfig& c, const std::string& v) { c.skip_header = parse_bool("header", v); },
                 [](const ExperimentConfig& c) { return std::string(c.skip_header ? "true" : "false"); }});
    d.push_back(number_key<std::size_t>("min_count", "drop users/items with fewer interactions",
                                        FIELD(c.min_count)));
    d.push_back(number_key<std::size_t>("syn_users", "synthetic users", FIELD(c.synthetic.n_users)));
    d.push_back(number_key<std::size_t>("syn_items", "synthetic items", FIELD(c.synthetic.n_items)));
    d.push_back(number_key<double>("syn_drift", "synthetic preference drift per segment",
                                   FIELD(c.synthetic.drift_rate)));
    d.push_back(number_key<std::size_t>("syn_clusters", "synthetic item clusters",
                                        FIELD(c.synthetic.n_clusters)));
    d.push_back(number_key<double>("syn_activity", "chance an existing user is active",
                                   FIELD(c.synthetic.activity)));
    d.push_back({"syn_seed", "generator seed; default: the run seed",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty())
                     c.synthetic_seed.reset();
                   else
                     c.synthetic_seed = parse_number<std::uint64_t>("syn_seed", v);
                 },
                 [](const ExperimentConfig& c) {
                   return c.synthetic_seed ? std::to_string(*c.synthetic_seed) : std::string();
                 }});
    d.push_back(number_key<int>("segments", "number of time segments T", FIELD(c.segments)));
    d.push_back({"method", "degc_finetune | finetune | uniform | inverse | static | degc_no_hcp | degc_no_tpm",
                 [](ExperimentConfig& c, const std::string& v) {
                   const auto m = parse_method(v);
                   if (!m) throw ConfigError("unknown method '" + v + "'");
                   c.method = *m;
                 },
                 [](const ExperimentConfig& c) { return method_name(c.method); }});
    d.push_back({"variant", "ngcf | lightgcn",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "ngcf") {
                     c.variant = Variant::kNgcf;
                   } else if (v == "lightgcn") {
                     c.variant = Variant::kLightGcnDense;
                   } else {
                     throw ConfigError("unknown variant '" + v + "'");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.variant == Variant::kNgcf ? "ngcf" : "lightgcn");
                 }});
    d.push_back(number_key<int>("dim", "embedding dimension d", FIELD(c.dim)));
    d.push_back(number_key<int>("layers", "convolution layers K", FIELD(c.layers)));
    d.push_back({"widths", "initial layer widths, comma separated; default: dim per layer",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.widths.clear();
                   if (v.empty()) return;
                   for (const auto& w : split(v, ',')) c.widths.push_back(parse_number<int>("widths", w));
                 },
                 [](const ExperimentConfig& c) { return join(c.widths); }});
    d.push_back(number_key<int>("expansion", "filters added per layer and segment (N)",
                                FIELD(c.surgery.expansion)));
    d.push_back(number_key<double>("l1", "L1 coefficient", FIELD(c.surgery.reg.l1)));
    d.push_back(number_key<double>("l2", "L2 coefficient", FIELD(c.surgery.reg.l2)));
    d.push_back(number_key<double>("lg", "group-sparsity coefficient", FIELD(c.surgery.reg.group)));
    d.push_back(number_key<double>("epsilon", "dead-weight threshold", FIELD(c.surgery.reg.epsilon)));
    d.push_back(number_key<double>("ta_ridge", "ridge term of the temporal attention fit",
                                   FIELD(c.surgery.ta_ridge)));
    d.push_back(number_key<double>("init_scale", "half-width of cold-start and expansion init",
                                   FIELD(c.surgery.init_half_width)));
    d.push_back(number_key<int>("co_threshold", "shared items linking two users",
                                FIELD(c.co_threshold)));
    d.push_back(number_key<int>("k", "cutoff of Recall@k / NDCG@k", FIELD(c.train.eval_k)));
    d.push_back(number_key<double>("lr", "Adam learning rate", FIELD(c.train.learning_rate)));
    d.push_back({"prox", "proximal threshold scaling: adam (per-coordinate Adam metric) | plain (lr * lambda)",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "adam") {
                     c.train.prox_scaling = ProxScaling::kAdam;
                   } else if (v == "plain") {
                     c.train.prox_scaling = ProxScaling::kPlain;
                   } else {
                     throw ConfigError("unknown prox scaling '" + v + "'");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.train.prox_scaling == ProxScaling::kAdam ? "adam" : "plain");
                 }});
    d.push_back(number_key<std::size_t>("batch", "BPR batch size", FIELD(c.train.batch_size)));
    d.push_back(number_key<int>("epochs", "epoch cap per training phase", FIELD(c.train.max_epochs)));
    d.push_back(number_key<int>("patience", "early-stopping patience in epochs",
                                FIELD(c.train.patience)));
    d.push_back(number_key<int>("negatives", "negatives per positive",
                                FIELD(c.train.negatives_per_positive)));
    d.push_back(number_key<double>("replay", "replay budget as a multiple of the segment's train rows",
                                   FIELD(c.replay_fraction)));
    d.push_back({"seeds", "comma separated run seeds",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds.clear();
                   for (const auto& s : split(v, ',')) c.seeds.push_back(parse_number<std::uint64_t>("seeds", s));
                 },
                 [](const ExperimentConfig& c) { return join(c.seeds); }});
    d.push_back({"seed", "single run seed (same as seeds=<n>)",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds = {parse_number<std::uint64_t>("seed", v)};
                 },
                 nullptr});
    d.push_back({"out", "output directory",
                 [](ExperimentConfig& c, const std::string& v) { c.out = v; },
                 [](const ExperimentConfig& c) { return c.out; }});
    return d;
  }();
  return defs;
}

#undef FIELD

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& d : key_defs()) k.push_back({d.name, d.help});
    return k;
  }();
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& d : key_defs()) {
    if (d.name == key) {
      d.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  try {
    train.validate();
    surgery.reg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (segments < 1) throw ConfigError("segments must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (!widths.empty() && static_cast<int>(widths.size()) != layers)
    throw ConfigError("widths must list one value per layer");
  for (int w : widths)
    if (w < 1) throw ConfigError("widths must be >= 1");
  if (surgery.expansion < 0) throw ConfigError("expansion must be >= 0");
  if (surgery.ta_ridge < 0.0) throw ConfigError("ta_ridge must be >= 0");
  if (!(surgery.init_half_width > 0.0)) throw ConfigError("init_scale must be > 0");
  if (co_threshold < 1) throw ConfigError("co_threshold must be >= 1");
  if (train.eval_k < 1) throw ConfigError("k must be >= 1");
  if (replay_fraction < 0.0) throw ConfigError("replay must be >= 0");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds must be distinct");
  if (out.empty()) throw ConfigError("out must be set");
  if (data_path.empty()) {
    if (synthetic.drift_rate < 0.0 || synthetic.drift_rate > 1.0)
      throw ConfigError("syn_drift must lie in [0, 1]");
    if (synthetic.n_users < 1 || synthetic.n_items < 1 || synthetic.n_clusters < 1)
      throw ConfigError("synthetic sizes must be >= 1");
    if (synthetic.activity < 0.0 || synthetic.activity > 1.0)
      throw ConfigError("syn_activity must lie in [0, 1]");
  }
}

std::string ExperimentConfig::to_text() const {
  std::vector<std::pair<std::string, std::string>> lines;
  for (const auto& d : key_defs())
    if (d.get) lines.emplace_back(d.name, d.get(*this));
  std::sort(lines.begin(), lines.end());
  std::string s;
  for (const auto& [k, v] : lines) s += k + " = " + v + "\n";
  return s;
}

MethodConfig ExperimentConfig::method_config() const {
  MethodConfig m;
  m.method = method;
  m.model.variant = variant;
  m.model.embedding_dim = dim;
  m.model.widths = widths.empty() ? std::vector<int>(static_cast<std::size_t>(layers), dim) : widths;
  m.surgery = surgery;
  m.train = train;
  m.replay_fraction = replay_fraction;
  return m;
}

SyntheticConfig ExperimentConfig::synthetic_for(std::uint64_t seed) const {
  SyntheticConfig s = synthetic;
  s.num_segments = segments;
  s.seed = synthetic_seed.value_or(seed);
  return s;
}

ExperimentConfig profile_config(const std::string& profile) {
  ExperimentConfig c;
  c.set("profile", profile);
  // Both profiles start from the paper's hyperparameters.
  c.dim = 128;
  c.layers = 2;
  c.surgery.expansion = 30;
  c.surgery.reg = RegConfig{0.001, 0.01, 0.01, 1e-8};
  c.train.learning_rate = 0.001;
  c.train.batch_size = 1000;
  c.train.eval_k = 20;
  if (profile == "desk") {
    c.dim = 16;
    c.surgery.expansion = 4;
    c.train.batch_size = 128;
    c.synthetic.n_users = 500;
    c.synthetic.n_items = 300;
    c.synthetic.drift_rate = 0.3;
    c.segments = 10;
    c.out = "runs/desk";
  }
  return c;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

StreamData load_stream(const ExperimentConfig& config, std::uint64_t seed) {
  StreamData s;
  if (config.data_path.empty()) {
    auto syn = generate_synthetic_stream(config.synthetic_for(seed));
    s.segments = syn.segments();
    s.users = syn.users();
    s.items = syn.items();
    return s;
  }
  ColumnMapping columns;
  columns.delimiter = config.delimiter;
  columns.skip_header = config.skip_header;
  auto log = load_interactions(config.data_path, columns);
  auto rows = filter_by_count(std::move(log.rows), config.min_count);
  if (rows.empty()) throw DataError("no interactions left after min_count filtering");
  s.segments = segment_stream(rows, config.segments);
  s.users = std::move(log.users);
  s.items = std::move(log.items);
  return s;
}

MetricsRow to_row(const SegmentMetrics& m) {
  return {m.segment, m.recall, m.ndcg, static_cast<double>(m.n_users)};
}

std::string format_metrics(const std::vector<MetricsRow>& rows, int k) {
  const auto ks = std::to_string(k);
  std::string s = "segment,recall@" + ks + ",ndcg@" + ks + ",n_users\n";
  for (const auto& r : rows) {
    s += std::to_string(r.segment) + ',' + format_double(r.recall) + ',' +
         format_double(r.ndcg) + ',' + format_double(r.n_users) + '\n';
  }
  return s;
}

std::vector<MetricsRow> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("segment,", 0) != 0)
    throw DataError("metrics file has no header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw DataError("bad metrics line: " + line);
    try {
      rows.push_back({parse_number<int>("segment", f[0]), parse_number<double>("recall", f[1]),
                      parse_number<double>("ndcg", f[2]), parse_number<double>("n_users", f[3])});
    } catch (const ConfigError&) {
      throw DataError("bad metrics line: " + line);
    }
  }
  return rows;
}

std::vector<MetricsRow> average_metrics(const std::vector<std::vector<MetricsRow>>& runs) {
  if (runs.empty()) throw std::invalid_argument("nothing to average");
  std::vector<MetricsRow> mean = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != mean.size()) throw DataError("seed runs disagree on segment count");
    for (std::size_t i = 0; i < mean.size(); ++i) {
      if (runs[r][i].segment != mean[i].segment) throw DataError("seed runs disagree on segments");
      mean[i].recall += runs[r][i].recall;
      mean[i].ndcg += runs[r][i].ndcg;
      mean[i].n_users += runs[r][i].n_users;
    }
  }
  const double n = static_cast<double>(runs.size());
  for (auto& m : mean) {
    m.recall /= n;
    m.ndcg /= n;
    m.n_users /= n;
  }
  return mean;
}

namespace {

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

Json trace_line(std::uint64_t seed, int segment, const EpochRecord& r) {
  Json j;
  j["seed"] = seed;
  j["segment"] = segment;
  j["phase"] = r.phase;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_recall"] = r.val_recall;
  j["zero_fraction"] = r.zero_fraction;
  return j;
}

}  // namespace

std::vector<SeedResult> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::filesystem::path out = config.out;
  std::filesystem::create_directories(out);
  const auto method_cfg = config.method_config();

  std::vector<SeedResult> results;
  std::vector<std::vector<MetricsRow>> per_seed;
  std::string surgery_log, trace;
  Json outputs = Json::object();

  for (const auto seed : config.seeds) {
    const auto stream = load_stream(config, seed);
    const auto inputs = prepare_segments(stream.segments, SplitRatios{}, seed, config.co_threshold);
    StreamState final_state;
    SeedResult r{seed, run_method(inputs, method_cfg, seed, &final_state)};

    std::vector<MetricsRow> rows;
    for (const auto& o : r.outcomes) {
      rows.push_back(to_row(o.metrics));
      for (const auto& e : o.trace) trace += trace_line(seed, o.metrics.segment, e).dump() + '\n';
      if (o.surgery) surgery_log += "seed " + std::to_string(seed) + ' ' + format_surgery_record(*o.surgery);
    }
    const auto dir = out / seed_dir(seed);
    std::filesystem::create_directories(dir);
    const auto text = format_metrics(rows, config.train.eval_k);
    write_file_atomic(dir / "metrics.csv", text);
    outputs[seed_dir(seed) + "/metrics.csv"] = content_hash(text);

    Checkpoint ckpt;
    ckpt.model = std::move(final_state.model);
    ckpt.embeddings = std::move(final_state.embeddings);
    ckpt.temporal = std::move(final_state.temporal);
    ckpt.users = stream.users;
    ckpt.items = stream.items;
    ckpt.segment = config.segments;
    save_checkpoint(ckpt, dir / "model.ckpt");

    per_seed.push_back(std::move(rows));
    results.push_back(std::move(r));
  }

  const auto metrics = format_metrics(average_metrics(per_seed), config.train.eval_k);
  write_file_atomic(out / "metrics.csv", metrics);
  outputs["metrics.csv"] = content_hash(metrics);
  write_file_atomic(out / "surgery.log", surgery_log);
  write_file_atomic(out / "trace.jsonl", trace);

  Json manifest;
  manifest["tool"] = "degc";
  manifest["method"] = method_name(config.method);
  manifest["seeds"] = config.seeds;
  manifest["k"] = config.train.eval_k;
  Json cfg = Json::object();
  for (const auto& [k, v] : parse_config_text(config.to_text())) cfg[k] = v;
  manifest["config"] = cfg;
  manifest["config_hash"] = content_hash(config.to_text());
  manifest["outputs"] = outputs;
  write_file_atomic(out / "manifest.json", manifest.dump(2) + '\n');

  emit_plot_data({out}, out / "series");
  return results;
}

std::vector<std::filesystem::path> emit_plot_data(
    const std::vector<std::filesystem::path>& bundles, const std::filesystem::path& out) {
  std::vector<std::filesystem::path> written;
  std::set<std::string> methods;
  std::filesystem::create_directories(out);
  for (const auto& bundle : bundles) {
    Json manifest;
    try {
      manifest = Json::parse(read_file(bundle / "manifest.json"));
    } catch (const Json::exception& e) {
      throw DataError("bad manifest in " + bundle.string() + ": " + e.what());
    }
    const auto method = manifest.at("method").get<std::string>();
    if (!methods.insert(method).second)
      throw DataError("two bundles for method '" + method + "'");
    std::vector<std::vector<MetricsRow>> runs;
    for (const auto& seed : manifest.at("seeds"))
      runs.push_back(parse_metrics(read_file(bundle / seed_dir(seed.get<std::uint64_t>()) / "metrics.csv")));
    const auto mean = average_metrics(runs);

    for (const auto* metric : {"recall", "ndcg"}) {
      const bool recall = std::string(metric) == "recall";
      std::string text = "segment\tmean\tmin\tmax\n";
      for (std::size_t i = 0; i < mean.size(); ++i) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& run : runs) {
          const double v = recall ? run[i].recall : run[i].ndcg;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        text += std::to_string(mean[i].segment) + '\t' +
                format_double(recall ? mean[i].recall : mean[i].ndcg) + '\t' +
                format_double(lo) + '\t' + format_double(hi) + '\n';
      }
      const auto path = out / (method + "_" + metric + ".tsv");
      write_file_atomic(path, text);
      written.push_back(path);
    }
  }
  return written;
}

StreamState remap_checkpoint(const Checkpoint& ckpt, const IdVocabulary& users,
                             const IdVocabulary& items) {
  StreamState s;
  s.model = ckpt.model;
  const int d = ckpt.embeddings.dim;
  s.embeddings = EmbeddingTable(d, users.size(), items.size());
  s.temporal = TemporalAttention(d);
  s.temporal.w_ta = ckpt.temporal.w_ta;
  for (NodeId u = 0; u < ckpt.users.size(); ++u) {
    const auto to = users.find(ckpt.users.name(u));
    if (!to) continue;
    if (ckpt.embeddings.has_user(u)) s.embeddings.set_user(*to, ckpt.embeddings.users.row(u).transpose());
    if (const auto it = ckpt.temporal.last_seen.find(u); it != ckpt.temporal.last_seen.end()) {
      s.temporal.last_seen[*to] = it->second;
      s.temporal.prev_embeddings[*to] = ckpt.temporal.prev_embeddings.at(u);
    }
  }
  for (NodeId i = 0; i < ckpt.items.size(); ++i) {
    const auto to = items.find(ckpt.items.name(i));
    if (to && ckpt.embeddings.has_item(i))
      s.embeddings.set_item(*to, ckpt.embeddings.items.row(i).transpose());
  }
  return s;
}

SegmentMetrics rescore_checkpoint(const ExperimentConfig& config,
                                  const std::filesystem::path& checkpoint, int segment,
                                  std::uint64_t seed) {
  config.validate();
  const auto ckpt = load_checkpoint(checkpoint);
  const auto stream = load_stream(config, seed);
  if (segment < 1 || segment > static_cast<int>(stream.segments.size()))
    throw ConfigError("segment must lie in 1.." + std::to_string(stream.segments.size()));
  const auto inputs = prepare_segments(stream.segments, SplitRatios{}, seed, config.co_threshold);
  auto state = remap_checkpoint(ckpt, stream.users, stream.items);
  const auto& input = inputs[static_cast<std::size_t>(segment - 1)];
  // Nodes the checkpoint never saw score with a zero embedding.
  state.embeddings.reserve(stream.users.size(), stream.items.size());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(state.embeddings.dim);
  for (NodeId u = 0; u < stream.users.size(); ++u)
    if (!state.embeddings.has_user(u)) state.embeddings.set_user(u, zero);
  for (NodeId i = 0; i < stream.items.size(); ++i)
    if (!state.embeddings.has_item(i)) state.embeddings.set_item(i, zero);
  return evaluate_state(state, input, config.train.eval_k);
}

}  // namespace degc
