#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cxr {

enum class Label : std::uint8_t { NonCovid = 0, Covid = 1 };

enum class Subgroup : std::uint8_t { Covid = 0, Normal = 1, OtherDisease = 2 };

enum class Split : std::uint8_t { Train = 0, Test = 1 };

enum class Source : std::uint8_t { CovidCorpus = 0, NegativeCorpus = 1 };

// The numeric values are the on-disk backbone codes of feature and head files.
enum class Backbone : std::uint8_t {
  ResNet18 = 0,
  ResNet50 = 1,
  SqueezeNet = 2,
  DenseNet121 = 3,
  Synthetic = 255,  // generated fixture features, no network involved
};

inline constexpr int kNumSubgroups = 3;
inline constexpr int kNumSplits = 2;

std::string_view to_string(Label v);
std::string_view to_string(Subgroup v);
std::string_view to_string(Split v);
std::string_view to_string(Source v);
std::string_view to_string(Backbone v);

// Parsers accept exactly the strings produced by to_string and throw
// ValidationError otherwise.
Label parse_label(std::string_view s);
Subgroup parse_subgroup(std::string_view s);
Split parse_split(std::string_view s);
Source parse_source(std::string_view s);
Backbone parse_backbone(std::string_view s);
Backbone backbone_from_code(std::uint8_t code);

constexpr Label label_of(Subgroup s) {
  return s == Subgroup::Covid ? Label::Covid : Label::NonCovid;
}

}  // namespace cxr
