#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "exnet/bmlr.hpp"
#include "exnet/corpus.hpp"
#include "exnet/layout.hpp"
#include "exnet/netstats.hpp"

namespace exnet::encode {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// CIELAB under D65, and its cylindrical form with hue in degrees [0, 360).
struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

struct Lch {
  double l = 0.0;
  double c = 0.0;
  double h = 0.0;
};

Rgb parse_hex(std::string_view hex);
std::string to_hex(Rgb c);

Lab srgb_to_lab(Rgb c);
Lch lab_to_lch(Lab c);
Lab lch_to_lab(Lch c);

/// Linear-light sRGB channels of a Lab colour, unclipped.
std::array<double, 3> lab_to_linear_rgb(Lab c);
bool in_srgb_gamut(Lab c);

/// Quantises an LCH colour to sRGB, first reducing chroma at constant
/// lightness and hue until it fits the gamut.
Rgb to_srgb(Lch c);

/// Linear interpolation with hue along the shorter arc. An achromatic end
/// takes the hue of the other end.
Lch interpolate(const Lch& from, const Lch& to, double t);

struct ColorScale {
  Rgb low = {0xd7, 0x30, 0x30};
  Rgb mid = {0x99, 0x99, 0x99};
  Rgb high = {0x30, 0x68, 0xd7};
  double min_rate = 0.0;
  double avg_rate = 0.5;
  double max_rate = 1.0;

  /// Domain (min, avg, max) of `rates` with `average` clamped into it.
  static ColorScale from_rates(std::span<const double> rates, double average);
  void validate() const;
};

/// Diverging colour: low anchor at min_rate, mid at avg_rate, high at
/// max_rate; values outside the domain are clamped.
Rgb color_for(double value, const ColorScale& scale);

/// Fixed 20-colour categorical palette indexed by a hash of the country code.
Rgb country_color(std::string_view country);

inline constexpr double kRadiusMin = 3.0;
inline constexpr double kRadiusMax = 30.0;

enum class SizeMode { overview, selected };

/// Area-proportional radius in [kRadiusMin, kRadiusMax]; `max_value` maps to
/// kRadiusMax and zero (or a non-positive maximum) to kRadiusMin.
double radius_for(double value, double max_value);

/// Radii for every node of `stats` in node order: betweenness for overview,
/// collaboration totals for selected.
std::vector<double> radii(const net::NetworkStats& stats, SizeMode mode);

/// `value` rounded to `digits` significant decimal digits.
double round_sig(double value, int digits = 6);

inline constexpr int kBundleSchemaVersion = 1;

struct ExportError : std::runtime_error {
  std::vector<std::string> offenders;
  ExportError(const std::string& what, std::vector<std::string> offenders);
};

struct ExportInputs {
  const SubjectAreaDataset* data = nullptr;
  const bmlr::FitResult* fit = nullptr;
  const net::NetworkStats* stats = nullptr;
  const layout::LayoutResult* network = nullptr;
  const layout::LayoutResult* geographic = nullptr;
  ColorScale palette;  // anchors; domains are taken from the fit
};

/// Builds the self-contained visualisation bundle for one subject area.
/// Throws ExportError when the inputs disagree on subjects, institutions or
/// edges.
nlohmann::ordered_json export_subject(const ExportInputs& in);

/// Serialisation used for bundle files (two-space indent, trailing newline).
std::string dump_bundle(const nlohmann::ordered_json& bundle);

}  // namespace exnet::encode
