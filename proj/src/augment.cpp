#include "cxr/augment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <vector>

#include "cxr/digest.hpp"
#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace fs = std::filesystem;

namespace cxr {

void AugmentConfig::validate() const {
  if (target_count == 0) throw ValidationError("augment: target_count must be positive");
  if (!(rotation_max_deg > 0.0) || !std::isfinite(rotation_max_deg)) {
    throw ValidationError("augment: rotation_max_deg must be > 0");
  }
  if (!(distortion_amplitude_px >= 0.0) || !std::isfinite(distortion_amplitude_px)) {
    throw ValidationError("augment: distortion_amplitude_px must be >= 0");
  }
  if (max_variants_per_image == 0) {
    throw ValidationError("augment: max_variants_per_image must be positive");
  }
}

// ---------------------------------------------------------------------------
// Transform chain text form

std::string TransformChain::describe() const {
  std::string out;
  auto append = [&out](const std::string& part) {
    if (!out.empty()) out.push_back(';');
    out += part;
  };
  char buf[64];
  if (duplicate) {
    append("dup=" + std::to_string(*duplicate));
  }
  if (hflip) append("hflip");
  if (rotation_deg) {
    std::snprintf(buf, sizeof buf, "rot=%.3f", *rotation_deg);
    append(buf);
  }
  if (distortion) {
    std::snprintf(buf, sizeof buf, "dist=%.3f@%016llx", distortion->amplitude_px,
                  static_cast<unsigned long long>(distortion->field_seed));
    append(buf);
  }
  return out;
}

namespace {

double parse_double(std::string_view s, std::string_view token) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError("transform: bad number in '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

TransformChain TransformChain::parse(std::string_view text) {
  TransformChain chain;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const std::string_view token = text.substr(0, semi);
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);

    if (token == "hflip") {
      chain.hflip = true;
    } else if (token.starts_with("rot=")) {
      chain.rotation_deg = parse_double(token.substr(4), token);
    } else if (token.starts_with("dist=")) {
      const std::string_view body = token.substr(5);
      const auto at = body.find('@');
      if (at == std::string_view::npos) throw ValidationError("transform: missing field seed in '" + std::string(token) + "'");
      Distortion d;
      d.amplitude_px = parse_double(body.substr(0, at), token);
      const std::string_view hex = body.substr(at + 1);
      auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), d.field_seed, 16);
      if (ec != std::errc() || ptr != hex.data() + hex.size()) {
        throw ValidationError("transform: bad field seed in '" + std::string(token) + "'");
      }
      chain.distortion = d;
    } else if (token.starts_with("dup=")) {
      unsigned k = 0;
      const std::string_view num = token.substr(4);
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), k);
      if (ec != std::errc() || ptr != num.data() + num.size() || k == 0) {
        throw ValidationError("transform: bad duplicate index in '" + std::string(token) + "'");
      }
      chain.duplicate = k;
    } else {
      throw ValidationError("transform: unknown step '" + std::string(token) + "'");
    }
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Pixel operations

namespace {

std::uint8_t to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear sample; out-of-image neighbours read as black.
double sample_black(const Image& img, double x, double y, int c) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  if (fx0 < -1.0 || fy0 < -1.0 || fx0 >= img.width || fy0 >= img.height) return 0.0;
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = x - fx0;
  const double ay = y - fy0;
  auto px = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= img.width || yi >= img.height) return 0.0;
    return img.at(xi, yi, c);
  };
  const double top = px(x0, y0) + ax * (px(x0 + 1, y0) - px(x0, y0));
  const double bot = px(x0, y0 + 1) + ax * (px(x0 + 1, y0 + 1) - px(x0, y0 + 1));
  return top + ay * (bot - top);
}

// Bilinear sample with coordinates clamped to the image.
double sample_clamped(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = img.at(x0, y0, c) + ax * (img.at(x1, y0, c) - img.at(x0, y0, c));
  const double bot = img.at(x0, y1, c) + ax * (img.at(x1, y1, c) - img.at(x0, y1, c));
  return top + ay * (bot - top);
}

struct Wave {
  double weight, freq_u, freq_v, phase;
};

constexpr int kWavesPerAxis = 3;

std::array<std::array<Wave, kWavesPerAxis>, 2> field_waves(std::uint64_t field_seed) {
  Rng rng(field_seed);
  std::array<std::array<Wave, kWavesPerAxis>, 2> waves{};
  for (auto& axis : waves) {
    double total = 0.0;
    for (auto& w : axis) {
      w.weight = rng.uniform(0.2, 1.0);
      w.freq_u = rng.uniform(-2.0, 2.0);
      w.freq_v = rng.uniform(-2.0, 2.0);
      w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      total += w.weight;
    }
    for (auto& w : axis) w.weight /= total;
  }
  return waves;
}

}  // namespace

Image hflip(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(image.width - 1 - x, y, c);
  return out;
}

Image rotate(const Image& image, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = to_pixel(sample_black(image, sx, sy, c));
    }
  }
  return out;
}

Image distort(const Image& image, const Distortion& d) {
  const auto waves = field_waves(d.field_seed);
  const double axis_amp = d.amplitude_px / std::numbers::sqrt2;
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    const double v = static_cast<double>(y) / image.height;
    for (int x = 0; x < image.width; ++x) {
      const double u = static_cast<double>(x) / image.width;
      std::array<double, 2> disp{};
      for (int a = 0; a < 2; ++a) {
        for (const auto& w : waves[a]) {
          disp[a] += w.weight * std::sin(2.0 * std::numbers::pi * (w.freq_u * u + w.freq_v * v) + w.phase);
        }
        disp[a] *= axis_amp;
      }
      for (int c = 0; c < image.channels; ++c) {
        out.at(x, y, c) = to_pixel(sample_clamped(image, x + disp[0], y + disp[1], c));
      }
    }
  }
  return out;
}

Image apply_transform(const Image& image, const TransformChain& chain) {
  Image out = image;
  if (chain.duplicate) return out;
  if (chain.hflip) out = hflip(out);
  if (chain.rotation_deg) out = rotate(out, *chain.rotation_deg);
  if (chain.distortion && chain.distortion->amplitude_px > 0.0) out = distort(out, *chain.distortion);
  return out;
}

// ---------------------------------------------------------------------------
// Minority augmentation

TransformChain draw_transform(const AugmentConfig& cfg, std::string_view image_path, std::size_t replica) {
  Sha256 h;
  h.update_u64(cfg.seed).update(image_path).update_u64(replica);
  Rng rng(leading_u64(h.finish()));

  TransformChain chain;
  // Fixed draw order: flip, rotation, distortion amplitude, field seed.
  const bool flip = rng.below(2) == 1;
  chain.hflip = cfg.enable_hflip && flip;

  const auto max_milli = static_cast<std::int64_t>(std::llround(cfg.rotation_max_deg * 1000.0));
  const auto milli = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * max_milli + 1))) - max_milli;
  if (milli != 0) chain.rotation_deg = static_cast<double>(milli) / 1000.0;

  const auto amp_milli = static_cast<std::uint64_t>(std::llround(cfg.distortion_amplitude_px * 1000.0));
  const std::uint64_t amp = rng.below(amp_milli + 1);
  const std::uint64_t field_seed = rng.next_u64();
  if (amp > 0) chain.distortion = Distortion{static_cast<double>(amp) / 1000.0, field_seed};
  return chain;
}

namespace {

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

}  // namespace

DatasetManifest augment_minority(const DatasetManifest& manifest, const AugmentConfig& cfg,
                                 const fs::path& out_dir) {
  cfg.validate();
  std::vector<const ImageRecord*> originals;
  for (const auto& r : manifest.records) {
    if (r.split != Split::Train || r.label != Label::Covid) continue;
    if (r.is_augmented) throw ValidationError("augment: manifest already contains augmented COVID images");
    originals.push_back(&r);
  }
  const std::size_t n = originals.size();
  if (cfg.target_count < n) {
    throw ValidationError("augment: target_count " + std::to_string(cfg.target_count) +
                          " is below the source count " + std::to_string(n));
  }
  if (cfg.target_count == n) return manifest;
  if (n == 0) throw ValidationError("augment: no TRAIN/COVID images to augment");

  ensure_writable_dir(out_dir);

  const std::size_t extra = cfg.target_count - n;
  std::vector<ImageRecord> records = manifest.records;
  std::set<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    const ImageRecord& original = *originals[i];
    const std::size_t replicas = extra / n + (i < extra % n ? 1 : 0);
    if (replicas == 0) continue;
    const Image source = load_image(original.image_path);
    const std::string stem = fs::path(original.image_path).stem().string();
    for (std::size_t j = 1; j <= replicas; ++j) {
      TransformChain chain;
      if (j > cfg.max_variants_per_image) {
        chain.duplicate = static_cast<unsigned>(j - cfg.max_variants_per_image);
      } else {
        chain = draw_transform(cfg, original.image_path, j);
      }
      const std::string name = stem + "__aug" + std::to_string(j) + ".png";
      if (!names.insert(name).second) {
        throw ValidationError("augment: two source images share the stem '" + stem + "'");
      }
      const fs::path out_path = out_dir / name;
      save_png(apply_transform(source, chain), out_path);

      ImageRecord rec = original;
      rec.image_path = out_path.lexically_normal().generic_string();
      rec.is_augmented = true;
      rec.augmentation_desc = chain.describe();
      records.push_back(std::move(rec));
    }
  }
  return make_manifest(std::move(records));
}

const ImageRecord* augmentation_source(const DatasetManifest& manifest, const ImageRecord& augmented) {
  if (!augmented.is_augmented) return nullptr;
  const std::string stem = fs::path(augmented.image_path).stem().string();
  const auto marker = stem.rfind("__aug");
  if (marker == std::string::npos) return nullptr;
  const std::string source_stem = stem.substr(0, marker);
  for (const auto& r : manifest.records) {
    if (!r.is_augmented && r.split == augmented.split && r.label == augmented.label &&
        fs::path(r.image_path).stem().string() == source_stem) {
      return &r;
    }
  }
  return nullptr;
}

}  // namespace cxr
