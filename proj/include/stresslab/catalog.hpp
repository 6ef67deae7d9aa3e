#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "stresslab/geometry.hpp"

namespace stresslab {

struct CatalogEntry {
  std::string id;
  GeometryFamily family;
};

/// Parsed geometry catalog. File format: one `[entry]` section per shape,
/// `key = value` lines, `#` comments. Keys: id, family, left_height,
/// right_height, sagitta, hole_shape, hole_cx, hole_cy, hole_radius,
/// hole_side. Unknown keys are rejected.
class GeometryCatalog {
 public:
  static GeometryCatalog load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io-error", "cannot open catalog file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  static GeometryCatalog parse(const std::string& text,
                               const std::string& origin = "<string>") {
    GeometryCatalog cat;
    CatalogEntry cur;
    bool open = false;
    std::unordered_set<std::string> ids;
    int lineno = 0;

    auto flush = [&]() {
      if (!open) return;
      if (cur.id.empty())
        fail("catalog-parse-error", origin + ": entry without an id");
      if (!ids.insert(cur.id).second)
        fail("catalog-parse-error", origin + ": duplicate id '" + cur.id + "'");
      cat.entries_.push_back(cur);
      cur = CatalogEntry{};
    };

    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line == "[entry]") {
        flush();
        open = true;
        continue;
      }
      auto eq = line.find('=');
      if (!open || eq == std::string::npos)
        fail("catalog-parse-error",
             origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      apply(cur, key, value, origin, lineno);
    }
    flush();
    if (cat.entries_.empty())
      fail("catalog-parse-error", origin + ": catalog has no entries");
    return cat;
  }

  const std::vector<CatalogEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  const CatalogEntry& find(const std::string& id) const {
    for (const auto& e : entries_)
      if (e.id == id) return e;
    fail("invalid-parameters", "catalog has no entry '" + id + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static double num(const std::string& v, const std::string& origin, int ln) {
    try {
      size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      fail("catalog-parse-error",
           origin + ":" + std::to_string(ln) + ": bad number '" + v + "'");
    }
  }

  static void apply(CatalogEntry& e, const std::string& key,
                    const std::string& value, const std::string& origin,
                    int ln) {
    GeometryFamily& f = e.family;
    if (key == "id") e.id = value;
    else if (key == "family") f.family = family_from_name(value);
    else if (key == "left_height") f.left_height = num(value, origin, ln);
    else if (key == "right_height") f.right_height = num(value, origin, ln);
    else if (key == "sagitta") f.sagitta = num(value, origin, ln);
    else if (key == "hole_shape") {
      if (value == "circle") f.hole_shape = HoleShape::kCircle;
      else if (value == "square") f.hole_shape = HoleShape::kSquare;
      else fail("catalog-parse-error",
                origin + ":" + std::to_string(ln) + ": hole_shape must be circle or square");
    } else if (key == "hole_cx") f.hole_cx = num(value, origin, ln);
    else if (key == "hole_cy") f.hole_cy = num(value, origin, ln);
    else if (key == "hole_radius" || key == "hole_side") f.hole_size = num(value, origin, ln);
    else fail("catalog-parse-error",
              origin + ":" + std::to_string(ln) + ": unknown key '" + key + "'");
  }

  std::vector<CatalogEntry> entries_;
};

}  // namespace stresslab
