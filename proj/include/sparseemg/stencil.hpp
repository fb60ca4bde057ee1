#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparseemg/dataset.hpp"

namespace sparseemg {

struct ArmMeasurements {
  double forearm_length_mm = 0.0;
  /// (distance from wrist, circumference), strictly increasing distances.
  std::vector<std::pair<double, double>> circumference_samples;

  void validate() const;
  /// Linear interpolation, held constant beyond the first and last samples.
  double circumference_at(double distance_mm) const;
};

ArmMeasurements measurements_from_json(const nlohmann::json& j);
nlohmann::json measurements_to_json(const ArmMeasurements& m);

/// Position of an electrode on a unit forearm: u along the length from the
/// wrist, v as a fraction of the circumference from the ulnar seam.
struct NormalizedSite {
  int electrode = 0;
  double u = 0.0;
  double v = 0.0;
};

/// Map coordinates are read in the manifest's flattened frame. The electrode
/// grid is taken as centred along a reference forearm of length
/// min_x + max_x, and as wrapping a reference circumference of
/// (max_y - min_y) + inter_electrode_spacing_mm with half a spacing of margin
/// at the seam. A full ring of n electrodes therefore lands at
/// v = (ring_index + 0.5) / n.
std::vector<NormalizedSite> normalized_sites(const DatasetManifest& manifest);

struct StencilHole {
  int electrode = 0;
  double x_mm = 0.0;  ///< from the wrist line
  double y_mm = 0.0;  ///< from the seam
};

struct Stencil {
  ArmMeasurements measurements;
  std::vector<StencilHole> holes;  ///< layout order
  double hole_diameter_mm = 0.0;
  double margin_mm = 10.0;
  double page_width_mm = 0.0;
  double page_height_mm = 0.0;
};

/// Unrolls the forearm as a truncated cone: x = u * length, y = v * C(x).
/// Throws if a hole does not fit inside the outline.
Stencil plan_stencil(std::span<const int> layout, const DatasetManifest& manifest,
                     const ArmMeasurements& measurements);

/// Standalone SVG in millimetres: outline, wrist line, ulna notch, one
/// circle and one label per hole.
std::string render_stencil_svg(const Stencil& stencil);

std::string generate_stencil(std::span<const int> layout, const DatasetManifest& manifest,
                             const ArmMeasurements& measurements);

/// Electrode map for selection UIs: one circle per electrode with
/// id="e<ID>" and data-electrode-id. Highlighted ids get class "selected".
std::string render_electrode_map(const DatasetManifest& manifest,
                                 std::span<const int> highlighted = {});

}  // namespace sparseemg
