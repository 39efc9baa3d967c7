#include "padprobe/data.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "padprobe/kernels.hpp"

namespace fs = std::filesystem;

namespace padprobe {

namespace {

Tensor from_rgb8(const std::uint8_t* rgb, std::size_t h, std::size_t w, unsigned maxval = 255) {
  Tensor t({1, 3, h, w});
  const float scale = static_cast<float>(maxval);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        t.at(0, c, y, x) = static_cast<float>(rgb[(y * w + x) * 3 + c]) / scale;
      }
    }
  }
  return t;
}

Tensor decode_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw DecodeError(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr) == 0) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DecodeError(path.string() + ": " + msg);
  }
  return from_rgb8(buf.data(), img.height, img.width);
}

// Reads one header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch) != 0) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && std::isspace(ch) == 0 && ch != '#') {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (tok.empty()) throw DecodeError(path.string() + ": truncated PPM header");
  if (ch == '#') in.unget();
  return tok;
}

std::size_t ppm_number(std::istream& in, const fs::path& path, const char* what) {
  const std::string tok = ppm_token(in, path);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }) ||
      tok.size() > 9) {
    throw DecodeError(path.string() + ": bad PPM " + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

Tensor decode_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  if (ppm_token(in, path) != "P6") throw DecodeError(path.string() + ": only binary P6 PPM is supported");
  const std::size_t w = ppm_number(in, path, "width");
  const std::size_t h = ppm_number(in, path, "height");
  const std::size_t maxval = ppm_number(in, path, "maxval");
  if (w == 0 || h == 0) throw DecodeError(path.string() + ": empty PPM");
  if (maxval == 0 || maxval > 255) throw DecodeError(path.string() + ": only 8-bit PPM is supported");
  std::vector<std::uint8_t> buf(w * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw DecodeError(path.string() + ": truncated PPM raster");
  }
  return from_rgb8(buf.data(), h, w, static_cast<unsigned>(maxval));
}

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm";
}

std::uint8_t quantize(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

}  // namespace

Tensor decode_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  const auto got = static_cast<std::size_t>(in.gcount());
  in.close();
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (got == 8 && std::equal(magic, magic + 8, reinterpret_cast<const char*>(kPngSig))) {
    return decode_png(path);
  }
  if (got >= 2 && magic[0] == 'P' && magic[1] == '6') return decode_ppm(path);
  throw DecodeError(path.string() + ": not a PNG or P6 PPM image");
}

ImageRecord load_image(const fs::path& path, std::size_t side) {
  if (side == 0) throw std::invalid_argument("load_image: side must be >= 1");
  Tensor raw = decode_image(path);
  ImageRecord rec;
  rec.origin = path.string();
  rec.image = kernels::bilinear_resize(raw, side, side);
  return rec;
}

void write_ppm(const Tensor& image, const fs::path& path) {
  require_rank(image, 4, "write_ppm");
  if (image.dim(0) != 1 || image.dim(1) != 3) throw DimensionError("write_ppm expects 1x3xHxW");
  const std::size_t h = image.dim(2), w = image.dim(3);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<std::uint8_t> buf(w * h * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) buf[(y * w + x) * 3 + c] = quantize(image.at(0, c, y, x));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string_view synth_name(SynthKind kind) {
  switch (kind) {
    case SynthKind::Black: return "black";
    case SynthKind::White: return "white";
    case SynthKind::Noise: return "noise";
  }
  return "?";
}

ImageRecord synth_image(SynthKind kind, std::size_t side, std::uint64_t seed) {
  if (side == 0) throw std::invalid_argument("synth_image: side must be >= 1");
  ImageRecord rec;
  rec.origin = "synth:" + std::string(synth_name(kind)) + ":" + std::to_string(seed);
  switch (kind) {
    case SynthKind::Black: rec.image = Tensor({1, 3, side, side}, 0.0F); break;
    case SynthKind::White: rec.image = Tensor({1, 3, side, side}, 1.0F); break;
    case SynthKind::Noise: {
      rec.image = Tensor({1, 3, side, side});
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> dist(0.5, 0.25);
      for (float& v : rec.image.values()) v = static_cast<float>(std::clamp(dist(rng), 0.0, 1.0));
      break;
    }
  }
  return rec;
}

namespace {

// Membership of the point (dx, dy), relative to the shape center, for a shape
// of radius r. `vertical` only matters for the bar.
bool inside_shape(int cls, double dx, double dy, double r, bool vertical) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (cls) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return ax <= 0.8 * r && ay <= 0.8 * r;
    case 2: {
      // Upright triangle: apex (0, -r), base y = 0.8 r from x = -r to r.
      if (dy > 0.8 * r || dy < -r) return false;
      const double half = r * (dy + r) / (1.8 * r);
      return ax <= half;
    }
    case 3: {
      const double t = r / 3.0;
      return (ax <= t && ay <= r) || (ay <= t && ax <= r);
    }
    case 4: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case 5: return vertical ? (ax <= 0.3 * r && ay <= r) : (ax <= r && ay <= 0.3 * r);
    default: return false;
  }
}

}  // namespace

std::vector<ImageRecord> synth_shapes(std::size_t count, std::size_t side, int num_classes,
                                      std::uint64_t seed) {
  if (num_classes < 2 || num_classes > 6) {
    throw std::invalid_argument("synth_shapes: num_classes must be in 2..6, got " +
                                std::to_string(num_classes));
  }
  if (side < 8) throw std::invalid_argument("synth_shapes: side must be >= 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls_dist(0, num_classes - 1);
  const double s = static_cast<double>(side);

  std::vector<ImageRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int cls = cls_dist(rng);
    const double r = s * (0.15 + 0.15 * unit(rng));
    const double cx = r + (s - 2.0 * r) * unit(rng);
    const double cy = r + (s - 2.0 * r) * unit(rng);
    const bool vertical = unit(rng) < 0.5;
    double bg[3], fg[3];
    for (double& c : bg) c = unit(rng);
    double contrast = 0.0;
    do {
      for (double& c : fg) c = unit(rng);
      contrast = (std::abs(fg[0] - bg[0]) + std::abs(fg[1] - bg[1]) + std::abs(fg[2] - bg[2])) / 3.0;
    } while (contrast < 0.5);

    Tensor img({1, 3, side, side});
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        // 2x2 supersampling for soft edges.
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const double px = static_cast<double>(x) + 0.25 + 0.5 * sx;
            const double py = static_cast<double>(y) + 0.25 + 0.5 * sy;
            hits += inside_shape(cls, px - cx, py - cy, r, vertical) ? 1 : 0;
          }
        }
        const double a = hits / 4.0;
        for (std::size_t c = 0; c < 3; ++c) {
          img.at(0, c, y, x) = static_cast<float>(a * fg[c] + (1.0 - a) * bg[c]);
        }
      }
    }
    ImageRecord rec;
    rec.origin = "synth:shape:" + std::to_string(seed) + ":" + std::to_string(i);
    rec.image = std::move(img);
    rec.label = cls;
    rec.shape = ShapePlacement{cx, cy, r};
    out.push_back(std::move(rec));
  }
  return out;
}

void write_pgm(const PositionMap& map, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  std::vector<std::uint8_t> buf(map.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize(map.values()[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PositionMap read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  if (ppm_token(in, path) != "P5") throw DecodeError(path.string() + ": not a binary PGM");
  const std::size_t w = ppm_number(in, path, "width");
  const std::size_t h = ppm_number(in, path, "height");
  const std::size_t maxval = ppm_number(in, path, "maxval");
  if (w == 0 || h == 0 || maxval != 255) throw DecodeError(path.string() + ": unsupported PGM");
  std::vector<std::uint8_t> buf(w * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw DecodeError(path.string() + ": truncated PGM raster");
  }
  PositionMap m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.values()[i] = static_cast<float>(buf[i]) / 255.0F;
  return m;
}

std::uint64_t stable_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool in_train_split(std::string_view file_name) { return stable_hash(file_name) % 100 < 80; }

std::vector<ImageRecord> load_folder(const fs::path& dir, std::size_t side) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  std::map<std::string, int> labels;
  const fs::path labels_path = dir / "labels.csv";
  if (fs::exists(labels_path)) {
    std::ifstream in(labels_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto comma = line.rfind(',');
      if (comma == std::string::npos) {
        throw DecodeError(labels_path.string() + ":" + std::to_string(lineno) + ": expected filename,label");
      }
      const std::string name = line.substr(0, comma);
      const std::string value = line.substr(comma + 1);
      try {
        std::size_t used = 0;
        const int label = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        labels[name] = label;
      } catch (const std::exception&) {
        if (lineno == 1) continue;  // header
        throw DecodeError(labels_path.string() + ":" + std::to_string(lineno) + ": bad label '" + value + "'");
      }
    }
  }

  std::vector<ImageRecord> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    ImageRecord rec = load_image(f, side);
    if (auto it = labels.find(f.filename().string()); it != labels.end()) rec.label = it->second;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace padprobe
