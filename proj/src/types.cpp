#include "cxr/types.hpp"

#include <array>
#include <utility>

#include "cxr/error.hpp"

namespace cxr {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table,
                std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw ValidationError("invalid " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum v, const std::array<std::pair<Enum, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "UNKNOWN";
}

constexpr std::array<std::pair<Label, std::string_view>, 2> kLabels{{
    {Label::NonCovid, "NON_COVID"},
    {Label::Covid, "COVID"},
}};

constexpr std::array<std::pair<Subgroup, std::string_view>, 3> kSubgroups{{
    {Subgroup::Covid, "COVID"},
    {Subgroup::Normal, "NORMAL"},
    {Subgroup::OtherDisease, "OTHER_DISEASE"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 2> kSplits{{
    {Split::Train, "TRAIN"},
    {Split::Test, "TEST"},
}};

constexpr std::array<std::pair<Source, std::string_view>, 2> kSources{{
    {Source::CovidCorpus, "COVID_CORPUS"},
    {Source::NegativeCorpus, "NEGATIVE_CORPUS"},
}};

constexpr std::array<std::pair<Backbone, std::string_view>, 5> kBackbones{{
    {Backbone::ResNet18, "RESNET18"},
    {Backbone::ResNet50, "RESNET50"},
    {Backbone::SqueezeNet, "SQUEEZENET"},
    {Backbone::DenseNet121, "DENSENET121"},
    {Backbone::Synthetic, "SYNTHETIC"},
}};

}  // namespace

std::string_view to_string(Label v) { return name_of(v, kLabels); }
std::string_view to_string(Subgroup v) { return name_of(v, kSubgroups); }
std::string_view to_string(Split v) { return name_of(v, kSplits); }
std::string_view to_string(Source v) { return name_of(v, kSources); }
std::string_view to_string(Backbone v) { return name_of(v, kBackbones); }

Label parse_label(std::string_view s) { return parse_enum(s, kLabels, "label"); }
Subgroup parse_subgroup(std::string_view s) { return parse_enum(s, kSubgroups, "subgroup"); }
Split parse_split(std::string_view s) { return parse_enum(s, kSplits, "split"); }
Source parse_source(std::string_view s) { return parse_enum(s, kSources, "source"); }
Backbone parse_backbone(std::string_view s) { return parse_enum(s, kBackbones, "backbone"); }

Backbone backbone_from_code(std::uint8_t code) {
  for (const auto& [value, name] : kBackbones) {
    if (static_cast<std::uint8_t>(value) == code) return value;
  }
  throw ValidationError("unknown backbone code " + std::to_string(code));
}

}  // namespace cxr
