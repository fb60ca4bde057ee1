#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sparseemg/error.hpp"
#include "sparseemg/stencil.hpp"
#include "support.hpp"
#include "svg.hpp"

using namespace sparseemg;

namespace {

DatasetManifest ring_manifest(int n, double diameter = 10.0) {
  auto m = generate_synthetic(testing::synthetic(n, {}, 0.05, 1)).manifest;
  m.electrode_diameter_mm = diameter;
  return m;
}

ArmMeasurements constant_arm(double circumference, double length = 250.0) {
  return {length, {{0.0, circumference}, {length, circumference}}};
}

ArmMeasurements tapered_arm() { return {260.0, {{0.0, 160.0}, {90.0, 210.0}, {200.0, 255.0}}}; }

}  // namespace

TEST_CASE("measurement validation and interpolation") {
  CHECK_NOTHROW(tapered_arm().validate());
  CHECK(tapered_arm().circumference_at(45.0) == doctest::Approx(185.0));
  CHECK(tapered_arm().circumference_at(145.0) == doctest::Approx(232.5));
  CHECK(tapered_arm().circumference_at(250.0) == 255.0);

  ArmMeasurements one{200.0, {{10.0, 200.0}}};
  CHECK_THROWS_AS(one.validate(), ValidationError);
  ArmMeasurements unordered{200.0, {{50.0, 200.0}, {50.0, 210.0}}};
  CHECK_THROWS_AS(unordered.validate(), ValidationError);
  ArmMeasurements beyond{200.0, {{0.0, 200.0}, {210.0, 210.0}}};
  CHECK_THROWS_AS(beyond.validate(), ValidationError);
  ArmMeasurements negative{200.0, {{0.0, -1.0}, {100.0, 210.0}}};
  CHECK_THROWS_AS(negative.validate(), ValidationError);
  ArmMeasurements no_length{0.0, {{0.0, 200.0}, {100.0, 210.0}}};
  CHECK_THROWS_AS(no_length.validate(), ValidationError);

  const auto j = measurements_to_json(tapered_arm());
  const auto back = measurements_from_json(j);
  CHECK(back.forearm_length_mm == 260.0);
  CHECK(back.circumference_samples == tapered_arm().circumference_samples);
  CHECK(measurements_from_json(nlohmann::json::parse(
                                   R"({"forearm_length_mm": 200, "circumference_samples": [[0, 180], [150, 230]]})"))
            .circumference_samples.size() == 2);
}

TEST_CASE("a full ring on a constant arm is spaced C / k") {
  const auto m = ring_manifest(8);
  const auto st = plan_stencil(testing::iota_ids(8), m, constant_arm(240.0));
  REQUIRE(st.holes.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(st.holes[i].x_mm == 125.0);
    CHECK(std::abs(st.holes[i].y_mm - 30.0 * (static_cast<double>(i) + 0.5)) <= 1e-9);
    if (i > 0) CHECK(std::abs(st.holes[i].y_mm - st.holes[i - 1].y_mm - 30.0) <= 1e-9);
  }
}

TEST_CASE("stencil SVG: well formed, one sized hole and one label per electrode") {
  const auto m = ring_manifest(16);
  const std::vector<int> layout{3, 11, 7, 0};
  const auto doc = generate_stencil(layout, m, tapered_arm());
  const auto all = testing::svg_elements(doc);
  const auto svg = testing::elements_named(all, "svg");
  REQUIRE(svg.size() == 1);
  CHECK(svg[0].attr("width").ends_with("mm"));
  CHECK(svg[0].attr("height").ends_with("mm"));
  CHECK(svg[0].attr("viewBox").starts_with("0 0 "));

  const auto circles = testing::elements_named(all, "circle");
  REQUIRE(circles.size() == layout.size());
  std::multiset<int> circle_ids, label_ids;
  for (const auto& c : circles) {
    CHECK(2.0 * c.number("r") == 10.0);
    circle_ids.insert(c.attributes.get<int>("data-electrode-id"));
  }
  for (const auto& t : testing::elements_named(all, "text"))
    if (t.attr("id").starts_with("label-")) label_ids.insert(std::stoi(t.text));
  const std::multiset<int> expected(layout.begin(), layout.end());
  CHECK(circle_ids == expected);
  CHECK(label_ids == expected);

  std::set<std::string> ids;
  for (const auto& e : all) ids.insert(e.attr("id"));
  CHECK(ids.count("outline"));
  CHECK(ids.count("wrist-line"));
  CHECK(ids.count("ulna-notch"));

  CHECK(generate_stencil(layout, m, tapered_arm()) == doc);
}

TEST_CASE("hole diameter follows the manifest") {
  const auto m = ring_manifest(8, 12.5);
  const auto all = testing::svg_elements(generate_stencil(std::vector<int>{1, 2}, m, constant_arm(240)));
  for (const auto& c : testing::elements_named(all, "circle")) CHECK(c.number("r") == 6.25);
}

TEST_CASE("scaling circumferences scales y only") {
  const auto m = ring_manifest(12);
  const auto layout = testing::iota_ids(12);
  const auto base = plan_stencil(layout, m, tapered_arm());
  for (double alpha : {0.9, 1.3, 2.0}) {
    auto arm = tapered_arm();
    for (auto& [d, c] : arm.circumference_samples) c *= alpha;
    const auto scaled = plan_stencil(layout, m, arm);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      CHECK(scaled.holes[i].x_mm == base.holes[i].x_mm);
      CHECK(scaled.holes[i].y_mm == doctest::Approx(alpha * base.holes[i].y_mm).epsilon(1e-12));
    }
  }
}

TEST_CASE("grid positions map along the forearm") {
  DatasetManifest m = ring_manifest(4);
  // two rows along the forearm, two columns around it
  m.electrodes[0].x_mm = 50, m.electrodes[0].y_mm = 0;
  m.electrodes[1].x_mm = 50, m.electrodes[1].y_mm = 20;
  m.electrodes[2].x_mm = 150, m.electrodes[2].y_mm = 0;
  m.electrodes[3].x_mm = 150, m.electrodes[3].y_mm = 20;
  const auto sites = normalized_sites(m);
  CHECK(sites[0].u == 0.25);
  CHECK(sites[2].u == 0.75);
  CHECK(sites[0].v == 0.25);
  CHECK(sites[1].v == 0.75);
  const auto st = plan_stencil(testing::iota_ids(4), m, tapered_arm());
  CHECK(st.holes[2].x_mm == 195.0);
  CHECK(st.holes[2].y_mm == doctest::Approx(0.25 * tapered_arm().circumference_at(195.0)));
}

TEST_CASE("stencil errors") {
  const auto m = ring_manifest(8);
  CHECK_THROWS_AS(plan_stencil(std::vector<int>{}, m, constant_arm(240)), ValidationError);
  CHECK_THROWS_AS(plan_stencil(std::vector<int>{1, 1}, m, constant_arm(240)), ValidationError);
  CHECK_THROWS_AS(plan_stencil(std::vector<int>{42}, m, constant_arm(240)), ValidationError);
  // on a 40 mm arm electrode 0 sits 2.5 mm from the seam, inside a 5 mm radius
  try {
    plan_stencil(std::vector<int>{0}, m, constant_arm(40));
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("outside") != std::string::npos);
  }
  CHECK_THROWS_AS(plan_stencil(std::vector<int>{0}, m, ArmMeasurements{}), ValidationError);
}

TEST_CASE("electrode map has one id-labelled element per electrode") {
  const auto m = ring_manifest(16);
  const std::vector<int> selected{2, 9};
  const auto all = testing::svg_elements(render_electrode_map(m, selected));
  const auto circles = testing::elements_named(all, "circle");
  REQUIRE(circles.size() == 16);
  std::set<std::string> ids;
  for (const auto& c : circles) {
    ids.insert(c.attr("id"));
    const int id = c.attributes.get<int>("data-electrode-id");
    CHECK(c.attr("id") == fmt::format("e{}", id));
    CHECK((c.attr("class").find("selected") != std::string::npos) == (id == 2 || id == 9));
  }
  CHECK(ids.size() == 16);
}
