#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "padprobe/data.hpp"
#include "padprobe/encoder.hpp"
#include "padprobe/metrics.hpp"
#include "padprobe/patterns.hpp"
#include "padprobe/probe.hpp"
#include "padprobe/training.hpp"

namespace padprobe {

enum class ExperimentKind { Existence, Layers, Kernels, PerLayer, Padding, Heatmap, Pretrain };

std::string_view experiment_name(ExperimentKind kind);
std::optional<ExperimentKind> parse_experiment(std::string_view name);

/// One encoder taking part in an experiment.
struct EncoderEntry {
  std::string name;
  EncoderSpec spec;
  /// PTW weights. When absent (or the file is missing) and `pretrain` is set,
  /// the encoder is pretrained on synthetic shapes and saved under
  /// <out>/encoders/<name>.ptw.
  std::optional<std::filesystem::path> weights;
  bool pretrain = false;
};

struct PretrainSettings {
  TrainConfig train{.epochs = 15, .learning_rate = 0.002F};
  std::size_t images = 512;
  int classes = 4;
  std::uint64_t data_seed = 1;
  /// Fixed seed so every experiment builds the same encoder from a config.
  std::uint64_t init_seed = 7;
};

struct DataSettings {
  /// Folder of natural images. Without one, synthetic shape scenes stand in.
  std::optional<std::filesystem::path> folder;
  /// Scene count when no folder is given; split 80/20 like a folder.
  std::size_t natural_images = 512;
  std::uint64_t natural_seed = 11;
  int natural_classes = 4;
  /// Images per synthetic evaluation source (black, white, noise).
  std::size_t synthetic_images = 8;
  /// Side for the standalone probe (encoders use their own input side).
  std::size_t side = 64;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Existence;
  std::uint64_t seed = 1;
  std::vector<EncoderEntry> encoders;
  bool include_standalone = true;
  /// Base probe. align_side 0 means input side / 8 for each model.
  ProbeSpec probe{.align_side = 0};
  TrainConfig train;
  PretrainSettings pretrain;
  DataSettings data;
  std::vector<PatternKind> patterns{PatternKind::H, PatternKind::V, PatternKind::G,
                                    PatternKind::HS, PatternKind::VS};
  std::vector<ImageSource> sources{ImageSource::Natural, ImageSource::Black, ImageSource::White,
                                   ImageSource::Noise};
  PatternParams pattern_params;
  std::vector<std::size_t> layer_variants{1, 2, 3};
  std::vector<std::size_t> kernel_variants{1, 3, 7};
  std::vector<std::size_t> padding_variants{0, 1, 2};
  /// Predicted maps written per (model, variant, pattern, source).
  std::size_t maps_per_source = 1;
  /// Also write every trained probe to <out>/probes/<model>_<variant>_<pattern>.ptw.
  bool save_probes = false;

  /// Defaults for a kind: tiny-vgg and tiny-resnet (both pretrained on
  /// demand), standalone probe included.
  static ExperimentConfig defaults(ExperimentKind kind);
};

/// Parses JSON text; unknown keys are errors. Missing keys keep defaults.
/// Relative weight / folder paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view json_text, ExperimentKind kind,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentKind kind);
/// Resolved config as pretty JSON (the run.json payload).
std::string config_to_json(const ExperimentConfig& config);

/// Row of report.csv.
struct ReportRow {
  std::string experiment;
  std::string model;
  std::string variant;
  std::string pattern;
  std::string source;
  std::size_t param_count = 0;
  double spc_mean = 0.0;
  double mae_mean = 0.0;
  std::size_t n_images = 0;
  std::string status = "ok";
  std::string reason;
};

struct HistoryRow {
  std::string model;
  std::string variant;
  std::string pattern;
  std::size_t epoch = 0;
  double loss = 0.0;
};

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<HistoryRow> history;
  /// Extra CSV tables, file name -> contents (e.g. heatmap.csv, pretrain.csv).
  std::vector<std::pair<std::string, std::string>> tables;

  /// First ok row matching all given fields; nullptr otherwise.
  [[nodiscard]] const ReportRow* find(std::string_view model, std::string_view variant,
                                      std::string_view pattern,
                                      std::string_view source = "natural") const;
};

std::string report_csv(const std::vector<ReportRow>& rows);
std::string history_csv(const std::vector<HistoryRow>& rows);

using LogFn = std::function<void(const std::string&)>;

/// Runs the experiment and writes report.csv, history.csv, run.json and
/// maps/*.pgm under `out_dir` (created if needed). Throws ConfigError for
/// invalid configurations.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir, const LogFn& log = {});

/// Encoder for an entry: loaded from its weights file, or pretrained when the
/// entry allows it (saved to <out_dir>/encoders/<name>.ptw). Returned frozen.
Encoder obtain_encoder(const EncoderEntry& entry, const PretrainSettings& settings,
                       const std::filesystem::path& out_dir, const LogFn& log = {},
                       std::vector<HistoryRow>* history = nullptr,
                       std::string* summary_csv_row = nullptr);

}  // namespace padprobe
