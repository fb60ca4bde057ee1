#pragma once

// Minimal SVG inspection on top of Boost.PropertyTree's XML reader.

#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace testing {

struct SvgElement {
  std::string tag;
  boost::property_tree::ptree attributes;
  std::string text;

  std::string attr(const std::string& name) const { return attributes.get<std::string>(name, ""); }
  double number(const std::string& name) const { return attributes.get<double>(name); }
};

/// Parses the document (throws on malformed XML) and returns every element
/// below <svg> in document order.
inline std::vector<SvgElement> svg_elements(const std::string& doc) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(doc);
  pt::read_xml(in, tree);
  std::vector<SvgElement> out;
  auto walk = [&](auto&& self, const pt::ptree& node) -> void {
    for (const auto& [tag, child] : node) {
      if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
      SvgElement e;
      e.tag = tag;
      if (auto attrs = child.get_child_optional("<xmlattr>")) e.attributes = *attrs;
      e.text = child.data();
      out.push_back(e);
      self(self, child);
    }
  };
  walk(walk, tree);
  return out;
}

inline std::vector<SvgElement> elements_named(const std::vector<SvgElement>& all, const std::string& tag) {
  std::vector<SvgElement> out;
  for (const auto& e : all)
    if (e.tag == tag) out.push_back(e);
  return out;
}

}  // namespace testing
