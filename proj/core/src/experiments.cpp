#include "padprobe/experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace padprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<ExperimentKind, std::string_view>, 7> kKindNames{{
    {ExperimentKind::Existence, "existence"},
    {ExperimentKind::Layers, "layers"},
    {ExperimentKind::Kernels, "kernels"},
    {ExperimentKind::PerLayer, "per-layer"},
    {ExperimentKind::Padding, "padding"},
    {ExperimentKind::Heatmap, "heatmap"},
    {ExperimentKind::Pretrain, "pretrain"},
}};

constexpr const char* kStandalone = "standalone";

EncoderEntry default_entry(std::string name, EncoderFamily family, PaddingMode padding) {
  EncoderEntry e;
  e.name = std::move(name);
  e.spec = EncoderSpec::defaults(family);
  e.spec.padding = padding;
  e.pretrain = true;
  return e;
}

}  // namespace

std::string_view experiment_name(ExperimentKind kind) {
  for (const auto& [k, n] : kKindNames) {
    if (k == kind) return n;
  }
  return "?";
}

std::optional<ExperimentKind> parse_experiment(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  const auto vgg = default_entry("tiny-vgg", EncoderFamily::TinyVgg, PaddingMode::Zero);
  const auto resnet = default_entry("tiny-resnet", EncoderFamily::TinyResnet, PaddingMode::Zero);
  const std::vector<PatternKind> hvg{PatternKind::H, PatternKind::V, PatternKind::G};
  switch (kind) {
    case ExperimentKind::Existence:
    case ExperimentKind::Pretrain:
      c.encoders = {vgg, resnet};
      break;
    case ExperimentKind::Layers:
    case ExperimentKind::Kernels:
    case ExperimentKind::PerLayer:
      c.encoders = {vgg};
      c.include_standalone = kind != ExperimentKind::PerLayer;
      c.patterns = hvg;
      c.sources = {ImageSource::Natural};
      break;
    case ExperimentKind::Padding: {
      // Without padding a 64 px input collapses before block 5; 140 px keeps
      // the last tap at 1 x 1.
      auto nopad = default_entry("tiny-vgg-nopad", EncoderFamily::TinyVgg, PaddingMode::None);
      nopad.spec.input_side = 140;
      auto resnet_nopad = default_entry("tiny-resnet-nopad", EncoderFamily::TinyResnet, PaddingMode::None);
      c.encoders = {vgg, nopad, resnet_nopad};
      c.patterns = hvg;
      c.sources = {ImageSource::Natural};
      break;
    }
    case ExperimentKind::Heatmap:
      c.encoders = {vgg};
      c.patterns = hvg;
      c.sources = {ImageSource::Natural};
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_to(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_size(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

std::vector<std::size_t> read_sizes(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array");
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<std::int64_t>() < 0) {
      throw ConfigError(where + " entries must be non-negative integers");
    }
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

TrainConfig parse_train(const json& j, TrainConfig t, const std::string& where) {
  check_keys(j, {"epochs", "learning_rate", "momentum", "weight_decay", "batch_size", "lr_step", "lr_gamma"},
             where);
  read_size(j, "epochs", t.epochs, where);
  read_to(j, "learning_rate", t.learning_rate, where);
  read_to(j, "momentum", t.momentum, where);
  read_to(j, "weight_decay", t.weight_decay, where);
  read_size(j, "batch_size", t.batch_size, where);
  read_size(j, "lr_step", t.lr_step, where);
  read_to(j, "lr_gamma", t.lr_gamma, where);
  t.validate();
  return t;
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},         {"learning_rate", t.learning_rate}, {"momentum", t.momentum},
          {"weight_decay", t.weight_decay}, {"batch_size", t.batch_size},  {"lr_step", t.lr_step},
          {"lr_gamma", t.lr_gamma}};
}

EncoderEntry parse_encoder(const json& j, const fs::path& base, std::size_t index) {
  const std::string where = "encoders[" + std::to_string(index) + "]";
  check_keys(j,
             {"name", "family", "channels", "convs_per_block", "padding", "input_side", "init_gain",
              "input_mean", "input_std", "weights", "pretrain"},
             where);
  EncoderFamily family = EncoderFamily::TinyVgg;
  if (j.contains("family")) {
    const auto f = parse_family(j.at("family").get<std::string>());
    if (!f) throw ConfigError(where + ".family: unknown family '" + j.at("family").get<std::string>() + "'");
    family = *f;
  }
  EncoderEntry e;
  e.name = std::string(family_name(family));
  e.spec = EncoderSpec::defaults(family);
  read_to(j, "name", e.name, where);
  if (e.name.empty() || e.name == kStandalone) throw ConfigError(where + ".name is empty or reserved");
  if (j.contains("channels")) e.spec.channels = read_sizes(j.at("channels"), where + ".channels");
  read_size(j, "convs_per_block", e.spec.convs_per_block, where);
  if (j.contains("padding")) {
    const auto p = parse_padding(j.at("padding").get<std::string>());
    if (!p) throw ConfigError(where + ".padding must be \"zero\" or \"none\"");
    e.spec.padding = *p;
  }
  read_size(j, "input_side", e.spec.input_side, where);
  read_to(j, "init_gain", e.spec.init_gain, where);
  read_to(j, "input_mean", e.spec.input_mean, where);
  read_to(j, "input_std", e.spec.input_std, where);
  if (j.contains("weights") && !j.at("weights").is_null()) {
    e.weights = resolve(j.at("weights").get<std::string>(), base);
  }
  e.pretrain = !e.weights.has_value();
  read_to(j, "pretrain", e.pretrain, where);
  return e;
}

json encoder_to_json(const EncoderEntry& e) {
  json j{{"name", e.name},
         {"family", family_name(e.spec.family)},
         {"channels", e.spec.channels},
         {"convs_per_block", e.spec.convs_per_block},
         {"padding", padding_name(e.spec.padding)},
         {"input_side", e.spec.input_side},
         {"init_gain", e.spec.init_gain},
         {"input_mean", e.spec.input_mean},
         {"input_std", e.spec.input_std},
         {"pretrain", e.pretrain}};
  j["weights"] = e.weights ? json(e.weights->generic_string()) : json(nullptr);
  return j;
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text, ExperimentKind kind, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"experiment", "seed", "encoders", "include_standalone", "probe", "train", "pretrain", "data",
              "patterns", "sources", "pattern_params", "layer_variants", "kernel_variants",
              "padding_variants", "maps_per_source", "save_probes"},
             "config");
  if (j.contains("experiment")) {
    const auto named = parse_experiment(j.at("experiment").get<std::string>());
    if (!named) throw ConfigError("config.experiment: unknown kind");
    if (*named != kind) {
      throw ConfigError("config is for experiment '" + std::string(experiment_name(*named)) +
                        "', not '" + std::string(experiment_name(kind)) + "'");
    }
  }
  ExperimentConfig c = ExperimentConfig::defaults(kind);
  read_to(j, "seed", c.seed, "config");
  read_to(j, "include_standalone", c.include_standalone, "config");
  if (j.contains("encoders")) {
    if (!j.at("encoders").is_array()) throw ConfigError("config.encoders must be an array");
    c.encoders.clear();
    std::set<std::string> names;
    for (std::size_t i = 0; i < j.at("encoders").size(); ++i) {
      c.encoders.push_back(parse_encoder(j.at("encoders")[i], base_dir, i));
      if (!names.insert(c.encoders.back().name).second) {
        throw ConfigError("duplicate encoder name '" + c.encoders.back().name + "'");
      }
    }
  }
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    check_keys(p, {"kernel", "layers", "padding", "align_side", "mid_channels", "taps"}, "config.probe");
    read_size(p, "kernel", c.probe.kernel, "probe");
    read_size(p, "layers", c.probe.layers, "probe");
    read_size(p, "padding", c.probe.padding, "probe");
    read_size(p, "align_side", c.probe.align_side, "probe");
    read_size(p, "mid_channels", c.probe.mid_channels, "probe");
    if (p.contains("taps")) {
      c.probe.taps.clear();
      for (std::size_t t : read_sizes(p.at("taps"), "probe.taps")) {
        if (t < 1 || t > kNumTaps) throw ConfigError("probe.taps entries are 1..5");
        c.probe.taps.push_back(t - 1);
      }
    }
  }
  if (j.contains("train")) c.train = parse_train(j.at("train"), c.train, "config.train");
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    check_keys(p, {"train", "images", "classes", "data_seed", "init_seed"}, "config.pretrain");
    if (p.contains("train")) c.pretrain.train = parse_train(p.at("train"), c.pretrain.train, "pretrain.train");
    read_size(p, "images", c.pretrain.images, "pretrain");
    read_to(p, "classes", c.pretrain.classes, "pretrain");
    read_to(p, "data_seed", c.pretrain.data_seed, "pretrain");
    read_to(p, "init_seed", c.pretrain.init_seed, "pretrain");
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"folder", "natural_images", "natural_seed", "natural_classes", "synthetic_images", "side"},
               "config.data");
    if (d.contains("folder") && !d.at("folder").is_null()) {
      c.data.folder = resolve(d.at("folder").get<std::string>(), base_dir);
      if (!fs::is_directory(*c.data.folder)) {
        throw ConfigError("data.folder does not exist: " + c.data.folder->string());
      }
    }
    read_size(d, "natural_images", c.data.natural_images, "data");
    read_to(d, "natural_seed", c.data.natural_seed, "data");
    read_to(d, "natural_classes", c.data.natural_classes, "data");
    read_size(d, "synthetic_images", c.data.synthetic_images, "data");
    read_size(d, "side", c.data.side, "data");
  }
  if (j.contains("patterns")) {
    c.patterns.clear();
    for (const auto& p : j.at("patterns")) {
      const auto k = parse_pattern(p.get<std::string>());
      if (!k) throw ConfigError("unknown pattern '" + p.get<std::string>() + "' (expected H, V, G, HS, VS)");
      c.patterns.push_back(*k);
    }
  }
  if (j.contains("sources")) {
    c.sources.clear();
    for (const auto& s : j.at("sources")) {
      const auto k = parse_source(s.get<std::string>());
      if (!k) throw ConfigError("unknown image source '" + s.get<std::string>() + "'");
      c.sources.push_back(*k);
    }
  }
  if (j.contains("pattern_params")) {
    const json& p = j.at("pattern_params");
    check_keys(p, {"sigma_fraction", "periods"}, "config.pattern_params");
    read_to(p, "sigma_fraction", c.pattern_params.sigma_fraction, "pattern_params");
    read_size(p, "periods", c.pattern_params.periods, "pattern_params");
  }
  if (j.contains("layer_variants")) c.layer_variants = read_sizes(j.at("layer_variants"), "layer_variants");
  if (j.contains("kernel_variants")) c.kernel_variants = read_sizes(j.at("kernel_variants"), "kernel_variants");
  if (j.contains("padding_variants")) {
    c.padding_variants = read_sizes(j.at("padding_variants"), "padding_variants");
  }
  read_size(j, "maps_per_source", c.maps_per_source, "config");
  read_to(j, "save_probes", c.save_probes, "config");

  for (const auto& e : c.encoders) {
    if (e.weights && !e.pretrain && !fs::exists(*e.weights)) {
      throw ConfigError("missing encoder weights for '" + e.name + "': " + e.weights->string());
    }
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, ExperimentKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), kind, path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = experiment_name(c.kind);
  j["seed"] = c.seed;
  j["include_standalone"] = c.include_standalone;
  j["encoders"] = json::array();
  for (const auto& e : c.encoders) j["encoders"].push_back(encoder_to_json(e));
  std::vector<std::size_t> taps;
  for (std::size_t t : c.probe.taps) taps.push_back(t + 1);
  j["probe"] = {{"kernel", c.probe.kernel},         {"layers", c.probe.layers},
                {"padding", c.probe.padding},       {"align_side", c.probe.align_side},
                {"mid_channels", c.probe.mid_channels}, {"taps", taps}};
  j["train"] = train_to_json(c.train);
  j["pretrain"] = {{"train", train_to_json(c.pretrain.train)},
                   {"images", c.pretrain.images},
                   {"classes", c.pretrain.classes},
                   {"data_seed", c.pretrain.data_seed},
                   {"init_seed", c.pretrain.init_seed}};
  j["data"] = {{"folder", c.data.folder ? json(c.data.folder->generic_string()) : json(nullptr)},
               {"natural_images", c.data.natural_images},
               {"natural_seed", c.data.natural_seed},
               {"natural_classes", c.data.natural_classes},
               {"synthetic_images", c.data.synthetic_images},
               {"side", c.data.side}};
  j["patterns"] = json::array();
  for (auto p : c.patterns) j["patterns"].push_back(pattern_name(p));
  j["sources"] = json::array();
  for (auto s : c.sources) j["sources"].push_back(source_name(s));
  j["pattern_params"] = {{"sigma_fraction", c.pattern_params.sigma_fraction},
                         {"periods", c.pattern_params.periods}};
  j["layer_variants"] = c.layer_variants;
  j["kernel_variants"] = c.kernel_variants;
  j["padding_variants"] = c.padding_variants;
  j["maps_per_source"] = c.maps_per_source;
  j["save_probes"] = c.save_probes;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV

const ReportRow* ExperimentResult::find(std::string_view model, std::string_view variant,
                                        std::string_view pattern, std::string_view source) const {
  for (const auto& r : rows) {
    if (r.status == "ok" && r.model == model && r.variant == variant && r.pattern == pattern &&
        r.source == source) {
      return &r;
    }
  }
  return nullptr;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "experiment,model,variant,pattern,source,param_count,spc_mean,mae_mean,n_images,status,reason\n";
  for (const auto& r : rows) {
    const bool ok = r.status == "ok";
    out += csv_field(r.experiment) + ',' + csv_field(r.model) + ',' + csv_field(r.variant) + ',' + r.pattern +
           ',' + r.source + ',' + std::to_string(r.param_count) + ',' +
           (ok ? format_metric(r.spc_mean) : "") + ',' + (ok ? format_metric(r.mae_mean) : "") + ',' +
           std::to_string(r.n_images) + ',' + r.status + ',' + csv_field(r.reason) + '\n';
  }
  return out;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "model,variant,pattern,epoch,loss\n";
  for (const auto& r : rows) {
    out += csv_field(r.model) + ',' + csv_field(r.variant) + ',' + r.pattern + ',' + std::to_string(r.epoch) +
           ',' + format_metric(r.loss) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoders

namespace {

void emit(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::vector<ImageRecord> pretrain_set(const PretrainSettings& s, std::size_t side, std::uint64_t seed) {
  return synth_shapes(s.images, side, s.classes, seed);
}

}  // namespace

Encoder obtain_encoder(const EncoderEntry& entry, const PretrainSettings& settings, const fs::path& out_dir,
                       const LogFn& log, std::vector<HistoryRow>* history, std::string* summary_csv_row) {
  tap_shapes(entry.spec);  // rejects unsupported specs before any work
  Encoder encoder = Encoder::build(entry.spec, settings.init_seed);
  const fs::path cached = out_dir / "encoders" / (entry.name + ".ptw");
  // A forced pretrain never overwrites a weights file named in the config.
  const bool force = summary_csv_row != nullptr;
  const fs::path source = force ? cached : entry.weights.value_or(cached);

  if (!force && fs::exists(source)) {
    emit(log, "loading " + entry.name + " from " + source.string());
    encoder.load_weights(source);
    return encoder;
  }
  if (!entry.pretrain) {
    throw ConfigError("missing encoder weights for '" + entry.name + "': " + source.string());
  }
  if (entry.spec.family == EncoderFamily::Vgg16Import) {
    throw ConfigError("vgg16-import encoder '" + entry.name + "' needs a weights file; it is never pretrained here");
  }

  emit(log, "pretraining " + entry.name + " (" + std::to_string(settings.train.epochs) + " epochs, " +
                std::to_string(settings.images) + " images)");
  const auto train = pretrain_set(settings, entry.spec.input_side, settings.data_seed);
  ClassifierHead head = ClassifierHead::build(encoder, settings.classes, settings.init_seed + 1);
  TrainConfig cfg = settings.train;
  cfg.seed = settings.init_seed + 2;
  const PretrainResult result = pretrain_classifier(
      encoder, head, train, cfg, [&](std::size_t epoch, double loss) {
        emit(log, "  " + entry.name + " epoch " + std::to_string(epoch + 1) + " loss " + format_metric(loss));
        if (history) history->push_back({entry.name, "pretrain", "-", epoch + 1, loss});
      });
  encoder.freeze();

  if (summary_csv_row) {
    const auto held_out = synth_shapes(std::max<std::size_t>(settings.images / 4, 16), entry.spec.input_side,
                                       settings.classes, settings.data_seed + 1000003);
    const double eval_acc = classifier_accuracy(encoder, head, held_out, cfg.batch_size);
    *summary_csv_row = csv_field(entry.name) + ',' + std::string(family_name(entry.spec.family)) + ',' +
                       std::string(padding_name(entry.spec.padding)) + ',' +
                       std::to_string(entry.spec.input_side) + ',' + std::to_string(cfg.epochs) + ',' +
                       format_metric(result.epoch_loss.back()) + ',' + format_metric(result.train_accuracy) +
                       ',' + format_metric(eval_acc) + ',' + weight_fingerprint(encoder);
  }
  fs::create_directories(source.parent_path().empty() ? fs::path(".") : source.parent_path());
  encoder.save(source);
  emit(log, "saved " + entry.name + " to " + source.string() + " (train accuracy " +
                format_metric(result.train_accuracy) + ")");
  return encoder;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct Split {
  std::vector<ImageRecord> train;
  std::map<ImageSource, std::vector<ImageRecord>> eval;
};

/// One probed model: the standalone probe (no encoder) or a frozen encoder
/// with its aligned taps cached per image set.
struct Model {
  std::string name;
  std::unique_ptr<Encoder> encoder;
  std::size_t side = 0;
  std::size_t align_side = 0;
  std::vector<std::vector<Tensor>> train_taps;
  std::map<ImageSource, std::vector<std::vector<Tensor>>> eval_taps;
  std::string fingerprint;
};

std::string sanitize(std::string s) {
  for (char& ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '-' || ch == '.';
    if (!ok) ch = '_';
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

class Runner {
 public:
  Runner(const ExperimentConfig& config, fs::path out_dir, LogFn log)
      : cfg_(config), out_(std::move(out_dir)), log_(std::move(log)) {}

  ExperimentResult run();

 private:
  const Split& split_for(std::size_t side);
  Model& standalone();
  Model* encoder_model(const EncoderEntry& entry, std::string* skip_reason);

  ProbeSpec base_spec(const Model& m) const;
  std::uint64_t seed_for(const std::string& tag) const;
  /// Trains one probe and appends a row per source. Returns eval predictions
  /// on the natural split when `natural_preds` is given.
  void probe_run(Model& m, const ProbeSpec& spec, const std::string& variant, PatternKind pattern,
                 std::vector<PositionMap>* natural_preds = nullptr);
  void skip_rows(const std::string& model, const std::string& variant, std::size_t params,
                 const std::string& reason);
  std::vector<Model*> models(bool with_standalone);

  void run_existence();
  void run_layers();
  void run_kernels();
  void run_per_layer();
  void run_padding();
  void run_heatmap();
  void run_pretrain();

  const ExperimentConfig& cfg_;
  fs::path out_;
  LogFn log_;
  ExperimentResult result_;
  std::map<std::size_t, Split> splits_;
  std::unique_ptr<Model> standalone_;
  std::map<std::string, std::unique_ptr<Model>> encoders_;
};

const Split& Runner::split_for(std::size_t side) {
  auto it = splits_.find(side);
  if (it != splits_.end()) return it->second;
  Split s;
  std::vector<ImageRecord> natural;
  if (cfg_.data.folder) {
    natural = load_folder(*cfg_.data.folder, side);
  } else {
    natural = synth_shapes(cfg_.data.natural_images, side, cfg_.data.natural_classes, cfg_.data.natural_seed);
  }
  auto& eval_natural = s.eval[ImageSource::Natural];
  for (auto& r : natural) {
    const std::string key = cfg_.data.folder ? fs::path(r.origin).filename().string() : r.origin;
    (in_train_split(key) ? s.train : eval_natural).push_back(std::move(r));
  }
  if (s.train.empty() || eval_natural.empty()) {
    throw ConfigError("natural images give an empty train or eval split (" + std::to_string(s.train.size()) +
                      "/" + std::to_string(eval_natural.size()) + ")");
  }
  const std::pair<ImageSource, SynthKind> synth[] = {
      {ImageSource::Black, SynthKind::Black},
      {ImageSource::White, SynthKind::White},
      {ImageSource::Noise, SynthKind::Noise}};
  for (const auto& [source, kind] : synth) {
    auto& v = s.eval[source];
    for (std::size_t i = 0; i < cfg_.data.synthetic_images; ++i) {
      v.push_back(synth_image(kind, side, cfg_.seed * 1000 + i));
    }
  }
  return splits_.emplace(side, std::move(s)).first->second;
}

Model& Runner::standalone() {
  if (!standalone_) {
    standalone_ = std::make_unique<Model>();
    standalone_->name = kStandalone;
    standalone_->side = cfg_.data.side;
    standalone_->align_side = cfg_.probe.align_side ? cfg_.probe.align_side : cfg_.data.side / 8;
  }
  return *standalone_;
}

Model* Runner::encoder_model(const EncoderEntry& entry, std::string* skip_reason) {
  auto it = encoders_.find(entry.name);
  if (it != encoders_.end()) return it->second.get();
  auto m = std::make_unique<Model>();
  m->name = entry.name;
  try {
    m->encoder = std::make_unique<Encoder>(
        obtain_encoder(entry, cfg_.pretrain, out_, log_, &result_.history));
  } catch (const ConfigError& e) {
    if (skip_reason == nullptr) throw;
    *skip_reason = e.what();
    return nullptr;
  }
  m->side = entry.spec.input_side;
  m->align_side = cfg_.probe.align_side ? cfg_.probe.align_side : m->side / 8;
  const Split& s = split_for(m->side);
  emit(log_, "computing taps for " + m->name);
  const std::size_t batch = cfg_.train.batch_size;
  m->train_taps = compute_aligned_taps(*m->encoder, s.train, m->align_side, batch);
  for (auto source : cfg_.sources) {
    m->eval_taps[source] = compute_aligned_taps(*m->encoder, s.eval.at(source), m->align_side, batch);
  }
  m->fingerprint = weight_fingerprint(*m->encoder);
  return encoders_.emplace(entry.name, std::move(m)).first->second.get();
}

std::vector<Model*> Runner::models(bool with_standalone) {
  std::vector<Model*> out;
  if (with_standalone) out.push_back(&standalone());
  for (const auto& e : cfg_.encoders) out.push_back(encoder_model(e, nullptr));
  return out;
}

ProbeSpec Runner::base_spec(const Model& m) const {
  ProbeSpec spec = cfg_.probe;
  spec.align_side = m.align_side;
  spec.standalone = m.encoder == nullptr;
  return spec;
}

std::uint64_t Runner::seed_for(const std::string& tag) const {
  return stable_hash(tag + "#" + std::to_string(cfg_.seed));
}

void Runner::probe_run(Model& m, const ProbeSpec& spec, const std::string& variant, PatternKind pattern,
                       std::vector<PositionMap>* natural_preds) {
  const std::string pname(pattern_name(pattern));
  const std::string tag = m.name + "/" + variant + "/" + pname;
  const Split& s = split_for(m.side);
  try {
    validate_probe_spec(spec);
  } catch (const ConfigError& e) {
    skip_rows(m.name, variant, 0, e.what());
    return;
  }
  emit(log_, "probe " + tag);

  const auto features_of = [&](const std::vector<ImageRecord>& images,
                               const std::vector<std::vector<Tensor>>& taps) {
    return spec.standalone ? probe_features(spec, images) : probe_features(spec, taps);
  };
  Probe probe = Probe::build(spec, probe_input_channels(spec, m.encoder.get()), seed_for(tag));
  TrainConfig train = cfg_.train;
  train.seed = seed_for(tag + "/order");
  const PositionMap target = generate_pattern(pattern, m.side, m.side, cfg_.pattern_params);
  const auto losses = fit_probe(probe, features_of(s.train, m.train_taps), target, train);
  for (std::size_t e = 0; e < losses.size(); ++e) result_.history.push_back({m.name, variant, pname, e + 1, losses[e]});
  if (m.encoder && weight_fingerprint(*m.encoder) != m.fingerprint) {
    throw ContractError("encoder " + m.name + " changed during probe training");
  }

  if (cfg_.save_probes) {
    fs::create_directories(out_ / "probes");
    probe.save(out_ / "probes" / (sanitize(m.name) + "_" + sanitize(variant) + "_" + pname + ".ptw"));
  }
  fs::create_directories(out_ / "maps");
  const fs::path gt_path = out_ / "maps" / ("gt_" + pname + "_" + std::to_string(m.side) + ".pgm");
  if (!fs::exists(gt_path)) write_pgm(target, gt_path);

  for (auto source : cfg_.sources) {
    const auto& images = s.eval.at(source);
    const auto preds = predict_all(probe, features_of(images, spec.standalone ? std::vector<std::vector<Tensor>>{}
                                                                               : m.eval_taps.at(source)),
                                   m.side, m.side, train.batch_size);
    MetricReport report;
    for (const auto& p : preds) report.add_image(pattern, source, p, target);
    const auto& entry = report.at(pattern, source);
    ReportRow row;
    row.experiment = std::string(experiment_name(cfg_.kind));
    row.model = m.name;
    row.variant = variant;
    row.pattern = pname;
    row.source = std::string(source_name(source));
    row.param_count = probe.param_count();
    row.spc_mean = entry.spc_mean();
    row.mae_mean = entry.mae_mean();
    row.n_images = entry.count();
    result_.rows.push_back(row);
    for (std::size_t i = 0; i < std::min(cfg_.maps_per_source, preds.size()); ++i) {
      const std::string file = sanitize(m.name) + "_" + sanitize(variant) + "_" + pname + "_" + row.source +
                               "_" + std::to_string(i) + ".pgm";
      write_pgm(preds[i], out_ / "maps" / file);
    }
    if (source == ImageSource::Natural && natural_preds) *natural_preds = preds;
  }
}

void Runner::skip_rows(const std::string& model, const std::string& variant, std::size_t params,
                       const std::string& reason) {
  emit(log_, "skipped " + model + "/" + variant + ": " + reason);
  for (auto pattern : cfg_.patterns) {
    for (auto source : cfg_.sources) {
      ReportRow row;
      row.experiment = std::string(experiment_name(cfg_.kind));
      row.model = model;
      row.variant = variant;
      row.pattern = std::string(pattern_name(pattern));
      row.source = std::string(source_name(source));
      row.param_count = params;
      row.status = "skipped";
      row.reason = reason;
      result_.rows.push_back(row);
    }
  }
}

void Runner::run_existence() {
  for (Model* m : models(cfg_.include_standalone)) {
    for (auto pattern : cfg_.patterns) probe_run(*m, base_spec(*m), "base", pattern);
  }
}

void Runner::run_layers() {
  for (Model* m : models(cfg_.include_standalone)) {
    for (std::size_t layers : cfg_.layer_variants) {
      ProbeSpec spec = base_spec(*m);
      spec.kernel = 3;
      spec.layers = layers;
      for (auto pattern : cfg_.patterns) probe_run(*m, spec, "L" + std::to_string(layers), pattern);
    }
  }
}

void Runner::run_kernels() {
  for (Model* m : models(cfg_.include_standalone)) {
    for (std::size_t k : cfg_.kernel_variants) {
      ProbeSpec spec = base_spec(*m);
      spec.kernel = k;
      spec.layers = 1;
      for (auto pattern : cfg_.patterns) probe_run(*m, spec, "k" + std::to_string(k), pattern);
    }
  }
}

void Runner::run_per_layer() {
  if (cfg_.include_standalone) {
    skip_rows(kStandalone, "per-layer", 0, "the standalone probe reads no encoder taps");
  }
  for (Model* m : models(false)) {
    for (std::size_t t = 0; t <= kNumTaps; ++t) {
      ProbeSpec spec = base_spec(*m);
      std::string variant = "all";
      if (t < kNumTaps) {
        spec.taps = {t};
        variant = "f" + std::to_string(t + 1);
      } else {
        spec.taps = {0, 1, 2, 3, 4};
      }
      for (auto pattern : cfg_.patterns) probe_run(*m, spec, variant, pattern);
    }
  }
}

void Runner::run_padding() {
  if (cfg_.include_standalone) {
    Model& m = standalone();
    for (std::size_t p : cfg_.padding_variants) {
      ProbeSpec spec = base_spec(m);
      spec.padding = p;
      for (auto pattern : cfg_.patterns) probe_run(m, spec, "p" + std::to_string(p), pattern);
    }
  }
  for (const auto& entry : cfg_.encoders) {
    const std::string variant = "padding-" + std::string(padding_name(entry.spec.padding));
    std::string reason;
    Model* m = encoder_model(entry, &reason);
    if (m == nullptr) {
      skip_rows(entry.name, variant, 0, reason);
      continue;
    }
    for (auto pattern : cfg_.patterns) probe_run(*m, base_spec(*m), variant, pattern);
  }
}

void Runner::run_heatmap() {
  for (PatternKind needed : {PatternKind::H, PatternKind::V, PatternKind::G}) {
    if (std::find(cfg_.patterns.begin(), cfg_.patterns.end(), needed) == cfg_.patterns.end()) {
      throw ConfigError("heatmap needs probes for H, V and G; pattern " + std::string(pattern_name(needed)) +
                        " is missing from the config");
    }
  }
  if (std::find(cfg_.sources.begin(), cfg_.sources.end(), ImageSource::Natural) == cfg_.sources.end()) {
    throw ConfigError("heatmap evaluates natural images; add \"natural\" to sources");
  }
  std::string detail = "model,image,origin,mean_loss,mean_unclamped_mae,corner_mean,center_mean\n";
  std::string summary = "model,n_images,mean_loss,corner_mean,center_mean\n";
  for (Model* m : models(cfg_.include_standalone)) {
    std::map<PatternKind, std::vector<PositionMap>> preds;
    for (auto pattern : cfg_.patterns) {
      std::vector<PositionMap>* sink = nullptr;
      if (pattern == PatternKind::H || pattern == PatternKind::V || pattern == PatternKind::G) sink = &preds[pattern];
      probe_run(*m, base_spec(*m), "base", pattern, sink);
    }
    const std::size_t side = m->side;
    const PositionMap gh = generate_pattern(PatternKind::H, side, side, cfg_.pattern_params);
    const PositionMap gv = generate_pattern(PatternKind::V, side, side, cfg_.pattern_params);
    const PositionMap gg = generate_pattern(PatternKind::G, side, side, cfg_.pattern_params);

    // Corner / centre regions: the 10% of pixels farthest from / nearest to
    // the image centre.
    std::vector<std::size_t> by_dist(side * side);
    std::iota(by_dist.begin(), by_dist.end(), 0);
    const double mid = (static_cast<double>(side) - 1.0) / 2.0;
    const auto dist = [&](std::size_t i) {
      const double r = static_cast<double>(i / side) - mid;
      const double c = static_cast<double>(i % side) - mid;
      return r * r + c * c;
    };
    std::stable_sort(by_dist.begin(), by_dist.end(),
                     [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
    const std::size_t region = std::max<std::size_t>(1, by_dist.size() / 10);

    const auto& images = split_for(side).eval.at(ImageSource::Natural);
    double total = 0.0;
    double corner_total = 0.0;
    double center_total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& ph = preds.at(PatternKind::H)[i];
      const auto& pv = preds.at(PatternKind::V)[i];
      const auto& pg = preds.at(PatternKind::G)[i];
      const PositionMap loss = content_loss_map(ph, pv, pg, gh, gv, gg);
      const auto& v = loss.values();
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      const double mae3 = (mae_raw(ph, gh) + mae_raw(pv, gv) + mae_raw(pg, gg)) / 3.0;
      double center = 0.0;
      double corner = 0.0;
      for (std::size_t k = 0; k < region; ++k) {
        center += v[by_dist[k]];
        corner += v[by_dist[by_dist.size() - 1 - k]];
      }
      center /= static_cast<double>(region);
      corner /= static_cast<double>(region);
      total += mean;
      corner_total += corner;
      center_total += center;
      detail += csv_field(m->name) + ',' + std::to_string(i) + ',' + csv_field(images[i].origin) + ',' +
                format_metric(mean) + ',' + format_metric(mae3) + ',' + format_metric(corner) + ',' +
                format_metric(center) + '\n';

      PositionMap shown = loss;
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      const float span = *hi - *lo;
      for (float& x : shown.values()) x = span > 0.0F ? (x - *lo) / span : 0.0F;
      write_pgm(shown, out_ / "maps" / ("heatmap_" + sanitize(m->name) + "_" + std::to_string(i) + ".pgm"));
    }
    const double n = static_cast<double>(images.size());
    summary += csv_field(m->name) + ',' + std::to_string(images.size()) + ',' + format_metric(total / n) + ',' +
               format_metric(corner_total / n) + ',' + format_metric(center_total / n) + '\n';
  }
  result_.tables.emplace_back("heatmap.csv", detail);
  result_.tables.emplace_back("heatmap_summary.csv", summary);
}

void Runner::run_pretrain() {
  std::string table = "model,family,padding,input_side,epochs,final_loss,train_accuracy,eval_accuracy,fingerprint\n";
  for (const auto& entry : cfg_.encoders) {
    EncoderEntry forced = entry;
    forced.pretrain = true;
    std::string row;
    obtain_encoder(forced, cfg_.pretrain, out_, log_, &result_.history, &row);
    table += row + '\n';
  }
  result_.tables.emplace_back("pretrain.csv", table);
}

ExperimentResult Runner::run() {
  if (cfg_.patterns.empty()) throw ConfigError("config lists no patterns");
  if (cfg_.sources.empty()) throw ConfigError("config lists no image sources");
  if (cfg_.kind != ExperimentKind::Pretrain && cfg_.encoders.empty() && !cfg_.include_standalone) {
    throw ConfigError("config has neither encoders nor the standalone probe");
  }
  fs::create_directories(out_ / "maps");
  write_text(out_ / "run.json", config_to_json(cfg_));
  switch (cfg_.kind) {
    case ExperimentKind::Existence: run_existence(); break;
    case ExperimentKind::Layers: run_layers(); break;
    case ExperimentKind::Kernels: run_kernels(); break;
    case ExperimentKind::PerLayer: run_per_layer(); break;
    case ExperimentKind::Padding: run_padding(); break;
    case ExperimentKind::Heatmap: run_heatmap(); break;
    case ExperimentKind::Pretrain: run_pretrain(); break;
  }
  write_text(out_ / "report.csv", report_csv(result_.rows));
  write_text(out_ / "history.csv", history_csv(result_.history));
  for (const auto& [name, text] : result_.tables) write_text(out_ / name, text);
  return std::move(result_);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir, const LogFn& log) {
  return Runner(config, out_dir, log).run();
}

}  // namespace padprobe
