#include "sparseemg/stencil.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "sparseemg/error.hpp"

namespace sparseemg {

void ArmMeasurements::validate() const {
  if (!(forearm_length_mm > 0.0) || !std::isfinite(forearm_length_mm))
    throw ValidationError("forearm_length_mm", "must be positive");
  if (circumference_samples.size() < 2)
    throw ValidationError("circumference_samples", "need at least two measurement levels");
  for (std::size_t i = 0; i < circumference_samples.size(); ++i) {
    const auto [d, c] = circumference_samples[i];
    const auto field = fmt::format("circumference_samples[{}]", i);
    if (!(d >= 0.0) || !std::isfinite(d) || d > forearm_length_mm)
      throw ValidationError(field, "distance must lie within the forearm length");
    if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError(field, "circumference must be positive");
    if (i > 0 && !(d > circumference_samples[i - 1].first))
      throw ValidationError(field, "distances must be strictly increasing");
  }
}

double ArmMeasurements::circumference_at(double distance_mm) const {
  const auto& s = circumference_samples;
  if (distance_mm <= s.front().first) return s.front().second;
  if (distance_mm >= s.back().first) return s.back().second;
  auto hi = std::upper_bound(s.begin(), s.end(), distance_mm,
                             [](double d, const auto& p) { return d < p.first; });
  auto lo = hi - 1;
  const double t = (distance_mm - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

ArmMeasurements measurements_from_json(const nlohmann::json& j) {
  ArmMeasurements m;
  try {
    m.forearm_length_mm = j.at("forearm_length_mm").get<double>();
    for (const auto& s : j.at("circumference_samples")) {
      if (s.is_array()) m.circumference_samples.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
      else
        m.circumference_samples.emplace_back(s.at("distance_from_wrist_mm").get<double>(),
                                             s.at("circumference_mm").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("measurements", e.what());
  }
  m.validate();
  return m;
}

nlohmann::json measurements_to_json(const ArmMeasurements& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& [d, c] : m.circumference_samples)
    samples.push_back({{"distance_from_wrist_mm", d}, {"circumference_mm", c}});
  return {{"forearm_length_mm", m.forearm_length_mm}, {"circumference_samples", std::move(samples)}};
}

std::vector<NormalizedSite> normalized_sites(const DatasetManifest& manifest) {
  const auto& es = manifest.electrodes;
  if (es.empty()) return {};
  auto [min_x, max_x] = std::minmax_element(es.begin(), es.end(),
                                            [](const auto& a, const auto& b) { return a.x_mm < b.x_mm; });
  auto [min_y, max_y] = std::minmax_element(es.begin(), es.end(),
                                            [](const auto& a, const auto& b) { return a.y_mm < b.y_mm; });
  const double length_ref = min_x->x_mm + max_x->x_mm;
  const double spacing = manifest.inter_electrode_spacing_mm;
  const double circ_ref = (max_y->y_mm - min_y->y_mm) + spacing;
  std::vector<NormalizedSite> out;
  out.reserve(es.size());
  for (const auto& e : es) {
    const double u = length_ref > 0.0 ? e.x_mm / length_ref : 0.5;
    const double v = (e.y_mm - min_y->y_mm + 0.5 * spacing) / circ_ref;
    out.push_back({e.id, u, v});
  }
  return out;
}

Stencil plan_stencil(std::span<const int> layout, const DatasetManifest& manifest,
                     const ArmMeasurements& measurements) {
  measurements.validate();
  if (layout.empty()) throw ValidationError("layout", "must be non-empty");
  if (std::set<int>(layout.begin(), layout.end()).size() != layout.size())
    throw ValidationError("layout", "duplicate electrode id");
  const auto sites = normalized_sites(manifest);

  Stencil st;
  st.measurements = measurements;
  st.hole_diameter_mm = manifest.electrode_diameter_mm;
  if (!(st.hole_diameter_mm > 0.0)) throw ValidationError("electrode_diameter_mm", "must be positive");
  const double L = measurements.forearm_length_mm;
  const double r = 0.5 * st.hole_diameter_mm;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    auto it = std::find_if(sites.begin(), sites.end(),
                           [&](const NormalizedSite& s) { return s.electrode == layout[i]; });
    if (it == sites.end())
      throw ValidationError(fmt::format("layout[{}]", i), fmt::format("unknown electrode {}", layout[i]));
    const double x = it->u * L;
    const double c = measurements.circumference_at(x);
    const double y = it->v * c;
    if (x - r < 0.0 || x + r > L || y - r < 0.0 || y + r > c)
      throw ValidationError(fmt::format("layout[{}]", i),
                            fmt::format("electrode {} maps outside the arm outline", layout[i]));
    st.holes.push_back({layout[i], x, y});
  }
  double max_c = 0.0;
  for (const auto& [d, c] : measurements.circumference_samples) max_c = std::max(max_c, c);
  st.page_width_mm = L + 2.0 * st.margin_mm;
  st.page_height_mm = max_c + 2.0 * st.margin_mm;
  return st;
}

std::string render_stencil_svg(const Stencil& st) {
  const double m = st.margin_mm;
  const double L = st.measurements.forearm_length_mm;
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  fmt::format_to(out,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}mm\" height=\"{1}mm\" "
                 "viewBox=\"0 0 {0} {1}\">\n",
                 st.page_width_mm, st.page_height_mm);
  fmt::format_to(out, "  <title>Electrode placement stencil</title>\n");

  // outline: seam along y = 0, circumference profile along the other edge
  fmt::format_to(out, "  <path id=\"outline\" fill=\"none\" stroke=\"#000\" stroke-width=\"0.3\" d=\"M {} {} L {} {}",
                 m, m, m + L, m);
  fmt::format_to(out, " L {} {}", m + L, m + st.measurements.circumference_at(L));
  const auto& samples = st.measurements.circumference_samples;
  for (auto it = samples.rbegin(); it != samples.rend(); ++it)
    if (it->first > 0.0 && it->first < L) fmt::format_to(out, " L {} {}", m + it->first, m + it->second);
  fmt::format_to(out, " L {} {} Z\"/>\n", m, m + st.measurements.circumference_at(0.0));

  fmt::format_to(out, "  <g id=\"registration\" stroke=\"#c00\" stroke-width=\"0.3\">\n");
  fmt::format_to(out,
                 "    <line id=\"wrist-line\" x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" "
                 "stroke-dasharray=\"2 1\"/>\n",
                 m, m - 0.5 * m, m + st.measurements.circumference_at(0.0) + 0.5 * m);
  fmt::format_to(out, "    <path id=\"ulna-notch\" fill=\"none\" d=\"M {} {} L {} {} L {} {}\"/>\n",
                 m + 0.5 * L - 3.0, m, m + 0.5 * L, m + 4.0, m + 0.5 * L + 3.0, m);
  fmt::format_to(out,
                 "    <text x=\"{}\" y=\"{}\" font-size=\"3\" stroke=\"none\" fill=\"#c00\">wrist</text>\n",
                 m + 1.0, m - 0.5 * m + 3.0);
  fmt::format_to(out, "  </g>\n");

  const double r = 0.5 * st.hole_diameter_mm;
  fmt::format_to(out, "  <g id=\"holes\" fill=\"none\" stroke=\"#000\" stroke-width=\"0.3\">\n");
  for (const auto& h : st.holes)
    fmt::format_to(out,
                   "    <circle id=\"hole-{0}\" data-electrode-id=\"{0}\" cx=\"{1}\" cy=\"{2}\" r=\"{3}\"/>\n",
                   h.electrode, m + h.x_mm, m + h.y_mm, r);
  fmt::format_to(out, "  </g>\n");
  fmt::format_to(out, "  <g id=\"labels\" font-size=\"3\" text-anchor=\"middle\">\n");
  for (const auto& h : st.holes)
    fmt::format_to(out, "    <text id=\"label-{0}\" x=\"{1}\" y=\"{2}\">{0}</text>\n", h.electrode,
                   m + h.x_mm, m + h.y_mm + r + 3.5);
  fmt::format_to(out, "  </g>\n</svg>\n");
  return fmt::to_string(buf);
}

std::string generate_stencil(std::span<const int> layout, const DatasetManifest& manifest,
                             const ArmMeasurements& measurements) {
  return render_stencil_svg(plan_stencil(layout, manifest, measurements));
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_electrode_map(const DatasetManifest& manifest, std::span<const int> highlighted) {
  const std::set<int> selected(highlighted.begin(), highlighted.end());
  const double r = 0.5 * manifest.electrode_diameter_mm;
  const double pad = r + 5.0;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (std::size_t i = 0; i < manifest.electrodes.size(); ++i) {
    const auto& e = manifest.electrodes[i];
    if (i == 0) {
      min_x = max_x = e.x_mm;
      min_y = max_y = e.y_mm;
    }
    min_x = std::min(min_x, e.x_mm);
    max_x = std::max(max_x, e.x_mm);
    min_y = std::min(min_y, e.y_mm);
    max_y = std::max(max_y, e.y_mm);
  }
  const double w = max_x - min_x + 2 * pad;
  const double h = max_y - min_y + 2 * pad;
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  fmt::format_to(out,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}mm\" height=\"{1}mm\" "
                 "viewBox=\"0 0 {0} {1}\">\n",
                 w, h);
  fmt::format_to(out, "  <title>{} electrode map</title>\n", xml_escape(manifest.name));
  fmt::format_to(out, "  <g id=\"electrodes\">\n");
  for (const auto& e : manifest.electrodes) {
    const double cx = e.x_mm - min_x + pad;
    const double cy = e.y_mm - min_y + pad;
    fmt::format_to(out,
                   "    <circle id=\"e{0}\" class=\"electrode{1}\" data-electrode-id=\"{0}\" "
                   "cx=\"{2}\" cy=\"{3}\" r=\"{4}\"/>\n",
                   e.id, selected.count(e.id) ? " selected" : "", cx, cy, r);
    fmt::format_to(out, "    <text x=\"{}\" y=\"{}\" font-size=\"3\" text-anchor=\"middle\">{}</text>\n",
                   cx, cy + 1.0, e.id);
  }
  fmt::format_to(out, "  </g>\n</svg>\n");
  return fmt::to_string(buf);
}

}  // namespace sparseemg
