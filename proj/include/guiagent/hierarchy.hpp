#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "guiagent/errors.hpp"

namespace guiagent {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Screen rectangle in pixels, half-open on the right and bottom edges.
struct Bounds {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;

  int width() const { return right - left; }
  int height() const { return bottom - top; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  Point center() const { return {(left + right) / 2, (top + bottom) / 2}; }
  bool contains(Point p) const { return p.x >= left && p.x < right && p.y >= top && p.y < bottom; }

  friend bool operator==(const Bounds&, const Bounds&) = default;
  friend auto operator<=>(const Bounds&, const Bounds&) = default;
};

// Parses "[L,T][R,B]". Rejects reversed or negative rectangles.
Bounds parse_bounds(std::string_view literal);
std::string format_bounds(const Bounds& b);

double intersection_over_union(const Bounds& a, const Bounds& b);

struct NodeFlags {
  bool clickable = false;
  bool enabled = false;
  bool scrollable = false;
  bool long_clickable = false;
  bool editable = false;
  friend bool operator==(const NodeFlags&, const NodeFlags&) = default;
};

struct UiNode {
  std::string class_name;
  std::string text;
  std::string content_desc;
  std::string resource_id;
  Bounds bounds;
  NodeFlags flags;
  std::vector<UiNode> children;

  friend bool operator==(const UiNode&, const UiNode&) = default;
};

class EmptyTreeError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Parses a uiautomator dump. When the document root is <hierarchy>, the
// returned root stands for it: class_name "hierarchy", no flags, bounds equal
// to the union of its children.
UiNode parse_hierarchy(std::string_view document);

// Number of <node> elements below (and including, unless it is the synthetic
// hierarchy root) the given node.
std::size_t count_nodes(const UiNode& root);

enum class PredicateMode { Strict, Literal };
PredicateMode parse_predicate_mode(std::string_view name);

// Literal mode: clickable || enabled || scrollable || long_clickable.
// Strict mode: same without enabled. Depth-first document order.
std::vector<UiNode> extract_interactive_nodes(const UiNode& root, PredicateMode mode = PredicateMode::Strict);

// Serializes nodes as a uiautomator-style document, one <node> per entry
// directly under <hierarchy>.
std::string write_hierarchy(const std::vector<UiNode>& nodes, std::string_view package = "");

std::string xml_escape(std::string_view text);

}  // namespace guiagent
