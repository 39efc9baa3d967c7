// padprobe command line: pretrain encoders, train probes, dump patterns and
// run experiment suites from a JSON config.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "padprobe/experiments.hpp"

namespace fs = std::filesystem;
using namespace padprobe;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--seed", c.seed, "Override the config seed");
}

ExperimentConfig resolve_config(const Common& c, ExperimentKind kind) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig::defaults(kind) : load_config(c.config, kind);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

LogFn stderr_log() {
  const auto start = std::chrono::steady_clock::now();
  return [start](const std::string& msg) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[%8.1fs] %s\n", t, msg.c_str());
  };
}

int run(const ExperimentConfig& cfg, const std::string& out) {
  const auto result = run_experiment(cfg, out, stderr_log());
  std::size_t skipped = 0;
  for (const auto& r : result.rows) skipped += r.status != "ok";
  std::cout << "wrote " << (fs::path(out) / "report.csv").string() << " (" << result.rows.size() << " rows";
  if (skipped) std::cout << ", " << skipped << " skipped";
  std::cout << ")\n";
  return 0;
}

int write_patterns(const Common& c, std::optional<std::size_t> side_override) {
  const ExperimentConfig cfg = resolve_config(c, ExperimentKind::Existence);
  const std::size_t side = side_override.value_or(cfg.data.side);
  const fs::path out = c.out;
  fs::create_directories(out / "maps");
  std::string csv = "pattern,height,width,min,max,mean\n";
  for (PatternKind k : kAllPatterns) {
    const PositionMap map = generate_pattern(k, side, side, cfg.pattern_params);
    const auto& v = map.values();
    double sum = 0.0;
    float lo = v.front();
    float hi = v.front();
    for (float x : v) {
      sum += x;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    const std::string name(pattern_name(k));
    write_pgm(map, out / "maps" / (name + ".pgm"));
    csv += name + ',' + std::to_string(side) + ',' + std::to_string(side) + ',' + format_metric(lo) + ',' +
           format_metric(hi) + ',' + format_metric(sum / static_cast<double>(v.size())) + '\n';
  }
  std::FILE* f = std::fopen((out / "patterns.csv").c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write patterns.csv");
  std::fputs(csv.c_str(), f);
  std::fclose(f);
  std::cout << "wrote 5 patterns at " << side << " x " << side << " to " << (out / "maps").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"padprobe: probing position information in CNN encoders"};
  app.require_subcommand(1);

  Common pre;
  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the config's encoders on synthetic shapes");
  add_common(pretrain, pre, false);

  Common pr;
  auto* probe = app.add_subcommand("probe", "Train and save one probe per (model, pattern)");
  add_common(probe, pr, false);

  Common pat;
  std::optional<std::size_t> side;
  auto* patterns = app.add_subcommand("patterns", "Write the ground-truth position patterns");
  add_common(patterns, pat, false);
  patterns->add_option("--side", side, "Map side (default: config data.side)")->check(CLI::PositiveNumber);

  Common ex;
  std::string kind_name;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment suite");
  experiment->add_option("kind", kind_name, "existence|layers|kernels|per-layer|padding|heatmap|pretrain")
      ->required();
  add_common(experiment, ex, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) return run(resolve_config(pre, ExperimentKind::Pretrain), pre.out);
    if (*probe) {
      ExperimentConfig cfg = resolve_config(pr, ExperimentKind::Existence);
      cfg.save_probes = true;
      return run(cfg, pr.out);
    }
    if (*patterns) return write_patterns(pat, side);
    const auto kind = parse_experiment(kind_name);
    if (!kind) {
      std::cerr << "error: unknown experiment kind '" << kind_name << "'\n";
      return 2;
    }
    return run(resolve_config(ex, *kind), ex.out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
