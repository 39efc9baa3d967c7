// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Encoders are pretrained once into <work>/encoders and
// shared by every experiment.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "padprobe/experiments.hpp"
#include "padprobe/gradcheck.hpp"
#include "padprobe/ptw.hpp"

using namespace padprobe;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr float kGradEps = 1e-3F;
constexpr double kGradTol = 1e-3;
constexpr int kGradInstances = 5;
constexpr double kMetricTol = 1e-6;
constexpr int kMetricPairs = 100;
constexpr double kStandaloneMax = 0.2;
constexpr double kVggMin = 0.6;
constexpr double kResnetSlack = 0.1;
constexpr double kPaddingStep = 0.05;
constexpr double kPaddedMargin = 0.2;
constexpr double kLayerSlack = 0.05;
constexpr double kPretrainAccuracy = 0.9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const Outcome& o, double seconds) {
  std::printf("%s  %-22s %s  (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

void criterion(const std::string& name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  report(name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Property criteria

Outcome gradients() {
  std::vector<GradCheckCase> cases;
  for (int i = 0; i < kGradInstances; ++i) {
    const std::size_t n = 1 + i % 2, c = 1 + i % 3, s = 4 + i;
    cases.push_back({.kind = OpKind::Conv2d, .input_dims = {n, c, s, s}, .kernel = std::size_t(1 + 2 * (i % 3)),
                     .padding = std::size_t(i % 3), .stride = std::size_t(1 + i % 2)});
    cases.push_back({.kind = OpKind::Relu, .input_dims = {n, c, s, s}});
    cases.push_back({.kind = OpKind::MaxPool2, .input_dims = {n, c, s, s + 1}});
    cases.push_back({.kind = OpKind::BilinearResize, .input_dims = {n, c, s - 1, s},
                     .out_h = std::size_t(2 * s + i), .out_w = std::size_t(s + 3)});
    cases.push_back({.kind = OpKind::ConcatChannels, .input_dims = {n, c, s, s}});
    cases.push_back({.kind = OpKind::Add, .input_dims = {n, c, s, s}});
    cases.push_back({.kind = OpKind::GlobalAvgPool, .input_dims = {n, c, s, s}});
    cases.push_back({.kind = OpKind::Affine, .input_dims = {n, std::size_t(3 + i)}, .out_channels = 4});
    // A float32 scalar loss rounds to ~6e-8 absolute, which after dividing by
    // 2 * eps sits near 3e-4 * rows * classes relative to the smallest entry of
    // (p - y) / rows. Small batches keep that floor well under the tolerance.
    cases.push_back({.kind = OpKind::SoftmaxXent, .input_dims = {std::size_t(1 + i % 2), std::size_t(2 + i % 2)}});
    cases.push_back({.kind = OpKind::MseHalf, .input_dims = {n, 1, s, s}});
  }
  double worst = 0.0;
  std::string worst_op;
  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    const auto r = grad_check(c, kGradEps, seed++);
    if (r.checked == 0) return {false, std::string(op_name(c.kind)) + " checked nothing"};
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_op = op_name(c.kind);
    }
  }
  return {worst < kGradTol, std::to_string(cases.size()) + " instances, worst rel err " + fmt("%.2e", worst) +
                                " (" + worst_op + ")"};
}

// Brute-force O(n^2) average ranks and Pearson, all in double.
double spc_oracle(const std::vector<float>& a, const std::vector<float>& b) {
  const auto ranks = [](const std::vector<float>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (float x : v) {
        less += x < v[i];
        equal += x == v[i];
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Outcome metrics() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> side(3, 14);
  std::uniform_real_distribution<float> val(-0.3F, 1.3F);
  std::uniform_int_distribution<int> level(0, 4);
  double worst_spc = 0, worst_mae = 0, worst_loss = 0;
  for (int pair = 0; pair < kMetricPairs; ++pair) {
    const std::size_t h = side(rng), w = side(rng);
    auto draw = [&] {
      std::vector<float> v(h * w);
      // Every third pair uses a coarse grid so ties are common.
      for (float& x : v) x = pair % 3 == 0 ? 0.25F * float(level(rng)) : val(rng);
      return PositionMap(h, w, v);
    };
    const PositionMap a = draw(), b = draw();
    worst_spc = std::max(worst_spc, std::abs(spc(a, b) - spc_oracle(a.values(), b.values())));

    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      m += std::abs(std::clamp(double(a.values()[i]), 0.0, 1.0) - double(b.values()[i]));
    }
    worst_mae = std::max(worst_mae, std::abs(mae(a, b) - m / double(a.size())));

    const PositionMap ph = draw(), pv = draw(), pg = draw(), gh = draw(), gv = draw(), gg = draw();
    const PositionMap loss = content_loss_map(ph, pv, pg, gh, gv, gg);
    for (std::size_t i = 0; i < loss.size(); ++i) {
      const auto d = [&](const PositionMap& p, const PositionMap& g) {
        return std::abs(double(g.values()[i]) - double(p.values()[i]));
      };
      const double want = (d(ph, gh) + d(pv, gv) + d(pg, gg)) / 3.0;
      worst_loss = std::max(worst_loss, std::abs(double(loss.values()[i]) - want));
    }
  }
  const bool ok = worst_spc <= kMetricTol && worst_mae <= kMetricTol && worst_loss <= kMetricTol;
  return {ok, std::to_string(kMetricPairs) + " pairs, max diff spc " + fmt("%.1e", worst_spc) + " mae " +
                  fmt("%.1e", worst_mae) + " loss " + fmt("%.1e", worst_loss)};
}

Outcome patterns() {
  int checks = 0;
  const auto fail = [&](const std::string& what) { return Outcome{false, what}; };
  const std::size_t sizes[][2] = {{5, 9}, {16, 16}, {17, 40}, {64, 64}, {31, 7}, {8, 5}};
  for (const auto& [h, w] : sizes) {
    const auto hm = generate_pattern(PatternKind::H, h, w);
    const auto vt = generate_pattern(PatternKind::V, w, h);
    const auto hs = generate_pattern(PatternKind::HS, h, w);
    const auto vst = generate_pattern(PatternKind::VS, w, h);
    const auto g = generate_pattern(PatternKind::G, h, w);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        if (hm.at(r, c) != vt.at(c, r)) return fail("H/V transpose at " + std::to_string(h) + "x" + std::to_string(w));
        if (hs.at(r, c) != vst.at(c, r)) return fail("HS/VS transpose");
        if (g.at(r, c) != g.at(h - 1 - r, c) || g.at(r, c) != g.at(r, w - 1 - c)) return fail("G flip symmetry");
        checks += 4;
      }
    }
    // Four stripes: the period is ceil(w / 4).
    const std::size_t period = (w + 3) / 4;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c + period < w; ++c) {
        if (hs.at(r, c) != hs.at(r, c + period)) return fail("HS period");
        ++checks;
      }
    }
    for (auto k : {PatternKind::H, PatternKind::V, PatternKind::G, PatternKind::HS, PatternKind::VS}) {
      const auto p = generate_pattern(k, h, w);
      const auto [lo, hi] = std::minmax_element(p.values().begin(), p.values().end());
      if (*lo != 0.0F || *hi != 1.0F) return fail(std::string(pattern_name(k)) + " bounds");
      ++checks;
    }
  }
  return {true, std::to_string(checks) + " exact checks"};
}

Outcome ptw_round_trip(const fs::path& encoder_file, const fs::path& work) {
  const fs::path a = work / "ptw" / "a.ptw", b = work / "ptw" / "b.ptw";
  fs::create_directories(a.parent_path());
  write_ptw(read_ptw(encoder_file), a);
  write_ptw(read_ptw(a), b);
  const auto bytes_a = read_file_bytes(a);
  if (bytes_a != read_file_bytes(b) || bytes_a != read_file_bytes(encoder_file)) {
    return {false, "rewritten file differs"};
  }
  auto corrupt = bytes_a;
  corrupt[corrupt.size() / 2] ^= 0x10;
  write_file_bytes(work / "ptw" / "corrupt.ptw", corrupt);
  try {
    read_ptw(work / "ptw" / "corrupt.ptw");
  } catch (const PtwError& e) {
    const bool crc = e.kind() == PtwError::Kind::CrcMismatch;
    return {crc, std::to_string(bytes_a.size()) + " bytes identical; flipped byte -> " +
                     (crc ? "CRC error" : std::string("other error: ") + e.what())};
  }
  return {false, "corrupted file was accepted"};
}

// ---------------------------------------------------------------------------
// Experiment criteria

struct Shared {
  fs::path work;
  fs::path cli;
  fs::path encoders;
  ExperimentConfig pretrain = ExperimentConfig::defaults(ExperimentKind::Pretrain);
};

void point_at_shared(ExperimentConfig& cfg, const Shared& s) {
  for (auto& e : cfg.encoders) {
    e.weights = s.encoders / (e.name + ".ptw");
    e.pretrain = true;  // only if the shared file is still missing
  }
  cfg.pretrain = s.pretrain.pretrain;
}

LogFn logger(const std::string& tag) {
  return [tag](const std::string& msg) { std::fprintf(stderr, "  [%s] %s\n", tag.c_str(), msg.c_str()); };
}

const ReportRow& need(const ExperimentResult& r, const std::string& model, const std::string& variant,
                      const std::string& pattern) {
  const ReportRow* row = r.find(model, variant, pattern);
  if (row == nullptr) throw std::runtime_error("no ok row for " + model + "/" + variant + "/" + pattern);
  return *row;
}

// report.csv produced by the CLI, parsed back into rows.
ExperimentResult read_report(const fs::path& path) {
  ExperimentResult r;
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (f.size() < 10) continue;
    ReportRow row{.experiment = f[0], .model = f[1], .variant = f[2], .pattern = f[3], .source = f[4], .reason = {}};
    row.status = f[9];
    if (row.status == "ok") {
      row.spc_mean = std::stod(f[6]);
      row.mae_mean = std::stod(f[7]);
    }
    r.rows.push_back(row);
  }
  return r;
}

int run_cli(const Shared& s, const fs::path& config, const fs::path& out) {
  fs::remove_all(out);
  const std::string cmd = "\"" + s.cli.string() + "\" experiment existence --config \"" + config.string() +
                          "\" --out \"" + out.string() + "\" --seed 1 2>\"" + (out.string() + ".log") + "\"";
  return std::system(cmd.c_str());
}

std::vector<std::string> differing_files(const fs::path& a, const fs::path& b) {
  std::vector<std::string> diff;
  std::vector<fs::path> names{"report.csv"};
  for (const auto& e : fs::directory_iterator(a / "maps")) names.push_back(fs::path("maps") / e.path().filename());
  std::size_t maps_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b / "maps")) ++maps_b;
  if (maps_b + 1 != names.size()) diff.push_back("map count");
  for (const auto& n : names) {
    if (!fs::exists(b / n) || read_file_bytes(a / n) != read_file_bytes(b / n)) diff.push_back(n.string());
  }
  return diff;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"padprobe acceptance suite"};
  Shared s;
  app.add_option("--work", s.work, "Scratch directory (pretrained encoders are kept here)")->required();
  app.add_option("--cli", s.cli, "Path to the padprobe executable")->required()->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);
  s.work = fs::absolute(s.work);
  s.encoders = s.work / "encoders";
  fs::create_directories(s.encoders);
  std::printf("padprobe acceptance (work dir %s)\n", s.work.string().c_str());

  criterion("gradient-correctness", gradients);
  criterion("metric-oracles", metrics);
  criterion("pattern-invariants", patterns);

  // Shared encoders: 512 synthetic 4-class shape images, 64 px, 15 epochs.
  // The padding-free tiny-vgg runs at 140 px so that block 5 keeps a 1 x 1 map.
  ExperimentConfig pre = ExperimentConfig::defaults(ExperimentKind::Pretrain);
  auto nopad = ExperimentConfig::defaults(ExperimentKind::Padding).encoders.at(1);
  pre.encoders.push_back(nopad);
  s.pretrain = pre;
  // Summary rows of earlier runs in this work dir, keyed by model. An encoder
  // file is only reused together with its row, so the accuracy is still checked.
  // model,family,padding,input_side,epochs,final_loss,train_accuracy,eval_accuracy,fingerprint
  std::map<std::string, std::vector<std::string>> summary;
  const fs::path summary_file = s.work / "pretrain.csv";
  if (std::ifstream in(summary_file); in) {
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> f;
      std::stringstream ls(line);
      for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
      if (f.size() == 9) summary[f[0]] = f;
    }
  }
  criterion("pretrain-accuracy", [&]() -> Outcome {
    std::string detail;
    bool ok = true;
    for (auto entry : pre.encoders) {
      const fs::path file = s.encoders / (entry.name + ".ptw");
      if (!fs::exists(file) || !summary.count(entry.name)) {
        entry.weights = file;
        std::string row;
        obtain_encoder(entry, pre.pretrain, s.work / "pretrain", logger("pretrain"), nullptr, &row);
        fs::copy_file(s.work / "pretrain" / "encoders" / (entry.name + ".ptw"), file,
                      fs::copy_options::overwrite_existing);
        std::vector<std::string> f;
        std::stringstream ls(row);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        summary[entry.name] = f;
      }
      const auto& f = summary.at(entry.name);
      const double eval_acc = std::stod(f.at(7));
      detail += entry.name + " train acc " + f.at(6).substr(0, 5) + " eval " + f.at(7).substr(0, 5) + "; ";
      if (entry.name == "tiny-vgg" && eval_acc <= kPretrainAccuracy) ok = false;
    }
    std::ofstream out(summary_file);
    for (const auto& [name, f] : summary) {
      for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
      out << "\n";
    }
    return {ok, detail + "(tiny-vgg held-out acc needs > 0.9)"};
  });

  const fs::path vgg_file = s.encoders / "tiny-vgg.ptw";
  const auto vgg_bytes = fs::exists(vgg_file) ? read_file_bytes(vgg_file) : std::vector<std::uint8_t>{};

  criterion("ptw-round-trip", [&] { return ptw_round_trip(vgg_file, s.work); });

  criterion("freeze-contract", [&]() -> Outcome {
    auto spec = EncoderSpec::defaults(EncoderFamily::TinyVgg);
    Encoder enc = Encoder::build(spec, 0);
    enc.load_weights(vgg_file);
    enc.freeze();
    const std::string before = weight_fingerprint(enc);
    const auto data = synth_shapes(48, spec.input_side, 4, 5);
    const ProbeSpec ps{.kernel = 3, .layers = 2, .align_side = 8};
    Probe probe = Probe::build(ps, probe_input_channels(ps, &enc), 3);
    train_probe(&enc, probe, data, PatternKind::G, {.epochs = 2, .seed = 1});
    const std::string after = weight_fingerprint(enc);
    return {before == after, "sha256 " + before.substr(0, 12) + (before == after ? " == " : " != ") +
                                 after.substr(0, 12) + " after 2 probe epochs"};
  });

  // Existence: the CLI runs twice with the shared encoders; run A feeds the
  // existence and pattern-difficulty criteria.
  ExperimentConfig existence = ExperimentConfig::defaults(ExperimentKind::Existence);
  point_at_shared(existence, s);
  const fs::path ex_cfg = s.work / "existence.json";
  std::ofstream(ex_cfg) << config_to_json(existence);
  const fs::path run_a = s.work / "existence_a", run_b = s.work / "existence_b";
  int status_a = -1;
  int status_b = -1;
  criterion("determinism", [&]() -> Outcome {
    status_a = run_cli(s, ex_cfg, run_a);
    status_b = run_cli(s, ex_cfg, run_b);
    if (status_a != 0 || status_b != 0) {
      return {false, "cli exit " + std::to_string(status_a) + "/" + std::to_string(status_b) + ", see " +
                         run_a.string() + ".log"};
    }
    const auto diff = differing_files(run_a, run_b);
    std::size_t maps = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(run_a / "maps")) ++maps;
    if (!diff.empty()) return {false, std::to_string(diff.size()) + " files differ, first " + diff[0]};
    return {true, "report.csv and " + std::to_string(maps) + " maps byte-identical"};
  });

  criterion("existence", [&]() -> Outcome {
    if (status_a != 0) return {false, "existence run failed"};
    const auto r = read_report(run_a / "report.csv");
    const double sa = need(r, "standalone", "base", "H").spc_mean;
    const double vgg = need(r, "tiny-vgg", "base", "H").spc_mean;
    const double res = need(r, "tiny-resnet", "base", "H").spc_mean;
    const bool ok = sa <= kStandaloneMax && vgg >= kVggMin && res >= vgg - kResnetSlack;
    return {ok, "SPC(H) standalone " + fmt("%.3f", sa) + " (<= 0.2), tiny-vgg " + fmt("%.3f", vgg) +
                    " (>= 0.6), tiny-resnet " + fmt("%.3f", res) + " (>= vgg - 0.1)"};
  });

  criterion("pattern-difficulty", [&]() -> Outcome {
    if (status_a != 0) return {false, "existence run failed"};
    const auto r = read_report(run_a / "report.csv");
    const double h = need(r, "tiny-vgg", "base", "H").spc_mean, hs = need(r, "tiny-vgg", "base", "HS").spc_mean;
    const double v = need(r, "tiny-vgg", "base", "V").spc_mean, vs = need(r, "tiny-vgg", "base", "VS").spc_mean;
    return {hs < h && vs < v, "tiny-vgg HS " + fmt("%.3f", hs) + " < H " + fmt("%.3f", h) + ", VS " +
                                  fmt("%.3f", vs) + " < V " + fmt("%.3f", v)};
  });

  criterion("padding", [&]() -> Outcome {
    ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentKind::Padding);
    cfg.encoders.resize(2);  // tiny-vgg and its padding-free twin
    cfg.patterns = {PatternKind::H};
    point_at_shared(cfg, s);
    const auto r = run_experiment(cfg, s.work / "padding", logger("padding"));
    const double p0 = need(r, "standalone", "p0", "H").spc_mean;
    const double p1 = need(r, "standalone", "p1", "H").spc_mean;
    const double p2 = need(r, "standalone", "p2", "H").spc_mean;
    const double pad = need(r, "tiny-vgg", "padding-zero", "H").spc_mean;
    const double nopad = need(r, "tiny-vgg-nopad", "padding-none", "H").spc_mean;
    const bool ok = p1 - p0 >= kPaddingStep && p2 - p1 >= kPaddingStep && pad - nopad >= kPaddedMargin;
    return {ok, "standalone p0/p1/p2 " + fmt("%.3f", p0) + "/" + fmt("%.3f", p1) + "/" + fmt("%.3f", p2) +
                    " (steps >= 0.05); tiny-vgg padded " + fmt("%.3f", pad) + " vs none " + fmt("%.3f", nopad) +
                    " (margin >= 0.2)"};
  });

  criterion("depth", [&]() -> Outcome {
    ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentKind::PerLayer);
    cfg.patterns = {PatternKind::H};
    point_at_shared(cfg, s);
    const auto r = run_experiment(cfg, s.work / "per-layer", logger("per-layer"));
    const double f1 = need(r, "tiny-vgg", "f1", "H").spc_mean;
    const double f5 = need(r, "tiny-vgg", "f5", "H").spc_mean;
    return {f5 > f1, "tiny-vgg SPC(H) f5 " + fmt("%.3f", f5) + " > f1 " + fmt("%.3f", f1)};
  });

  criterion("capacity", [&]() -> Outcome {
    ExperimentConfig k = ExperimentConfig::defaults(ExperimentKind::Kernels);
    k.include_standalone = false;
    k.patterns = {PatternKind::H};
    k.kernel_variants = {1, 7};
    point_at_shared(k, s);
    const auto rk = run_experiment(k, s.work / "kernels", logger("kernels"));
    ExperimentConfig l = ExperimentConfig::defaults(ExperimentKind::Layers);
    l.include_standalone = false;
    l.patterns = {PatternKind::H};
    l.layer_variants = {1, 3};
    point_at_shared(l, s);
    const auto rl = run_experiment(l, s.work / "layers", logger("layers"));
    const double k1 = need(rk, "tiny-vgg", "k1", "H").spc_mean, k7 = need(rk, "tiny-vgg", "k7", "H").spc_mean;
    const double l1 = need(rl, "tiny-vgg", "L1", "H").spc_mean, l3 = need(rl, "tiny-vgg", "L3", "H").spc_mean;
    const bool ok = k7 >= k1 && l3 >= l1 - kLayerSlack;
    return {ok, "k7 " + fmt("%.3f", k7) + " >= k1 " + fmt("%.3f", k1) + "; L3 " + fmt("%.3f", l3) +
                    " >= L1 " + fmt("%.3f", l1) + " - 0.05"};
  });

  // Every experiment above ran probes against the shared tiny-vgg file.
  criterion("freeze-contract-file", [&]() -> Outcome {
    const bool same = !vgg_bytes.empty() && read_file_bytes(vgg_file) == vgg_bytes;
    return {same, same ? "shared tiny-vgg weights unchanged by all probe runs" : "weights file changed"};
  });

  std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
