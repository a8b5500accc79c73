#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "cxr/image.hpp"
#include "cxr/manifest.hpp"

namespace cxr {

struct AugmentConfig {
  std::uint64_t seed = 0;
  std::size_t target_count = 496;  // TRAIN/COVID images after augmentation
  double rotation_max_deg = 10.0;
  double distortion_amplitude_px = 3.0;
  bool enable_hflip = true;
  // Replicas of one source image beyond this number are exact duplicates
  // (over-sampling) instead of new transforms.
  std::size_t max_variants_per_image = 8;

  void validate() const;  // throws ValidationError
};

// Smooth displacement field: a few low-frequency sinusoids per axis whose
// parameters are drawn from `field_seed`. The displacement magnitude never
// exceeds `amplitude_px`.
struct Distortion {
  double amplitude_px = 0.0;
  std::uint64_t field_seed = 0;

  friend bool operator==(const Distortion&, const Distortion&) = default;
};

// Transforms applied in order hflip -> rotation -> distortion. A duplicate
// chain (`dup=k`) copies the source pixels unchanged.
struct TransformChain {
  bool hflip = false;
  std::optional<double> rotation_deg;  // counter-clockwise, multiples of 0.001
  std::optional<Distortion> distortion;
  std::optional<unsigned> duplicate;

  bool empty() const { return !hflip && !rotation_deg && !distortion && !duplicate; }

  // Text form such as `hflip;rot=-7.312;dist=2.481@00ff00ff00ff00ff` or
  // `dup=3`. parse(describe()) reproduces the chain exactly.
  std::string describe() const;
  static TransformChain parse(std::string_view text);

  friend bool operator==(const TransformChain&, const TransformChain&) = default;
};

// Output has the input's dimensions. Rotation is about the image centre with
// black fill; distortion clamps samples to the image border.
Image apply_transform(const Image& image, const TransformChain& chain);

Image rotate(const Image& image, double degrees);
Image hflip(const Image& image);
Image distort(const Image& image, const Distortion& d);

// The transform for replica `replica` (1-based) of `image_path`. The random
// stream is seeded from (seed, image_path, replica) only.
TransformChain draw_transform(const AugmentConfig& cfg, std::string_view image_path,
                              std::size_t replica);

// Returns a manifest with exactly cfg.target_count TRAIN/COVID records. New
// images are written to out_dir as `<stem>__aug<j>.png`. When target_count
// equals the current count the input is returned unchanged and nothing is
// written.
DatasetManifest augment_minority(const DatasetManifest& manifest, const AugmentConfig& cfg,
                                 const std::filesystem::path& out_dir);

// The original record an augmented record was derived from, matched by the
// `<stem>__aug<j>` naming scheme.
const ImageRecord* augmentation_source(const DatasetManifest& manifest, const ImageRecord& augmented);

}  // namespace cxr
