#include <iostream>
#include <map>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "degc/experiment.hpp"
#include "degc/io.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kRuntime = 3 };

struct ConfigOptions {
  std::string config_file;
  std::string profile;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_config_options(CLI::App& app, ConfigOptions& opts) {
  app.add_option("--config", opts.config_file, "key = value config file");
  app.add_option("--profile", opts.profile, "defaults preset: paper | desk");
  for (const auto& key : degc::config_keys()) {
    if (key.name == "profile") continue;
    opts.options[key.name] = app.add_option("--" + key.name, opts.values[key.name], key.help);
  }
}

degc::ExperimentConfig resolve(const ConfigOptions& opts) {
  std::map<std::string, std::string> file;
  if (!opts.config_file.empty()) {
    try {
      file = degc::parse_config_text(degc::read_file(opts.config_file));
    } catch (const degc::ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw degc::ConfigError(e.what());
    }
  }
  std::string profile = "paper";
  if (const auto it = file.find("profile"); it != file.end()) profile = it->second;
  if (!opts.profile.empty()) profile = opts.profile;
  auto config = degc::profile_config(profile);
  for (const auto& [k, v] : file)
    if (k != "profile") config.set(k, v);
  for (const auto& [k, opt] : opts.options)
    if (opt->count() > 0) config.set(k, opts.values.at(k));
  config.validate();
  return config;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const degc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const degc::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual graph-recommender experiments"};
  app.require_subcommand(1);

  ConfigOptions run_opts, synth_opts, eval_opts;

  auto* run = app.add_subcommand("run", "run one method over every seed and write a result bundle");
  add_config_options(*run, run_opts);

  auto* synth = app.add_subcommand("synth", "write the synthetic stream to disk");
  add_config_options(*synth, synth_opts);

  auto* eval = app.add_subcommand("eval", "re-score a checkpoint on one segment");
  add_config_options(*eval, eval_opts);
  std::string checkpoint;
  int segment = 0;
  eval->add_option("--checkpoint", checkpoint, "model.ckpt to load")->required();
  eval->add_option("--segment", segment, "1-based segment index")->required();

  auto* plot = app.add_subcommand("plot-data", "write per-method series from result bundles");
  std::vector<std::string> bundles;
  std::string plot_out;
  plot->add_option("--bundle", bundles, "result directory; repeatable")->required();
  plot->add_option("--out", plot_out, "series directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (run->parsed()) {
    return guarded([&] {
      const auto config = resolve(run_opts);
      const auto results = degc::run_experiment(config);
      std::cout << degc::read_file(std::filesystem::path(config.out) / "metrics.csv");
      std::cerr << "wrote " << config.out << " (" << results.size() << " seed"
                << (results.size() == 1 ? "" : "s") << ")\n";
    });
  }
  if (synth->parsed()) {
    return guarded([&] {
      auto config = resolve(synth_opts);
      if (!config.data_path.empty()) throw degc::ConfigError("synth needs an empty data key");
      const auto seed = config.seeds.front();
      const auto stream = degc::generate_synthetic_stream(config.synthetic_for(seed));
      const std::filesystem::path out = config.out;
      std::filesystem::create_directories(out);
      std::string rows;
      for (const auto& r : stream.interactions())
        rows += stream.users().name(r.user) + ',' + stream.items().name(r.item) + ',' +
                std::to_string(r.timestamp) + '\n';
      degc::write_file_atomic(out / "interactions.csv", rows);
      degc::dump_segments(stream.segments(), stream.users(), stream.items(), out / "segments");
      std::cerr << "wrote " << (out / "interactions.csv").string() << '\n';
    });
  }
  if (eval->parsed()) {
    return guarded([&] {
      const auto config = resolve(eval_opts);
      const auto m = degc::rescore_checkpoint(config, checkpoint, segment, config.seeds.front());
      std::cout << degc::format_metrics({degc::to_row(m)}, config.train.eval_k);
    });
  }
  return guarded([&] {
    std::vector<std::filesystem::path> paths(bundles.begin(), bundles.end());
    for (const auto& p : degc::emit_plot_data(paths, plot_out)) std::cout << p.string() << '\n';
  });
}
