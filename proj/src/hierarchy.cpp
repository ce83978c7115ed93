#include "guiagent/hierarchy.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace guiagent {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void bounds_error(std::string_view literal, std::size_t pos, std::string_view what) {
  std::string span(literal.substr(std::min(pos, literal.size())));
  throw ParseError("bounds literal '" + std::string(literal) + "': " + std::string(what) + " at offset " +
                   std::to_string(pos) + " ('" + span + "')");
}

}  // namespace

Bounds parse_bounds(std::string_view literal) {
  std::size_t pos = 0;
  auto expect = [&](char c) {
    if (pos >= literal.size() || literal[pos] != c) bounds_error(literal, pos, std::string("expected '") + c + "'");
    ++pos;
  };
  auto number = [&]() {
    int value = 0;
    const char* first = literal.data() + pos;
    const char* last = literal.data() + literal.size();
    if (first == last || !(std::isdigit(static_cast<unsigned char>(*first)) || *first == '-')) {
      bounds_error(literal, pos, "expected integer");
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc()) bounds_error(literal, pos, "integer out of range");
    pos = static_cast<std::size_t>(ptr - literal.data());
    return value;
  };
  Bounds b;
  expect('[');
  b.left = number();
  expect(',');
  b.top = number();
  expect(']');
  expect('[');
  b.right = number();
  expect(',');
  b.bottom = number();
  expect(']');
  if (pos != literal.size()) bounds_error(literal, pos, "trailing characters");
  if (b.left < 0 || b.top < 0 || b.right < 0 || b.bottom < 0) bounds_error(literal, 0, "negative coordinate");
  if (b.right < b.left) bounds_error(literal, 0, "right < left");
  if (b.bottom < b.top) bounds_error(literal, 0, "bottom < top");
  return b;
}

std::string format_bounds(const Bounds& b) {
  return "[" + std::to_string(b.left) + "," + std::to_string(b.top) + "][" + std::to_string(b.right) + "," +
         std::to_string(b.bottom) + "]";
}

double intersection_over_union(const Bounds& a, const Bounds& b) {
  long long iw = std::max(0, std::min(a.right, b.right) - std::max(a.left, b.left));
  long long ih = std::max(0, std::min(a.bottom, b.bottom) - std::max(a.top, b.top));
  long long inter = iw * ih;
  long long uni = a.area() + b.area() - inter;
  return uni <= 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

bool attr_bool(const pt::ptree& attrs, const char* name) {
  return attrs.get<std::string>(name, "false") == "true";
}

UiNode convert_node(const pt::ptree& element) {
  UiNode node;
  if (auto attrs = element.get_child_optional("<xmlattr>")) {
    node.class_name = attrs->get<std::string>("class", "");
    node.text = attrs->get<std::string>("text", "");
    node.content_desc = attrs->get<std::string>("content-desc", "");
    node.resource_id = attrs->get<std::string>("resource-id", "");
    auto bounds = attrs->get_optional<std::string>("bounds");
    node.bounds = bounds ? parse_bounds(*bounds) : Bounds{};
    node.flags.clickable = attr_bool(*attrs, "clickable");
    node.flags.enabled = attr_bool(*attrs, "enabled");
    node.flags.scrollable = attr_bool(*attrs, "scrollable");
    node.flags.long_clickable = attr_bool(*attrs, "long-clickable");
    if (auto editable = attrs->get_optional<std::string>("editable")) {
      node.flags.editable = *editable == "true";
    } else {
      node.flags.editable = node.class_name.find("EditText") != std::string::npos;
    }
  }
  for (const auto& [name, child] : element) {
    if (name == "node") node.children.push_back(convert_node(child));
  }
  return node;
}

Bounds union_of(const std::vector<UiNode>& nodes) {
  if (nodes.empty()) return {};
  Bounds u = nodes.front().bounds;
  for (const auto& n : nodes) {
    u.left = std::min(u.left, n.bounds.left);
    u.top = std::min(u.top, n.bounds.top);
    u.right = std::max(u.right, n.bounds.right);
    u.bottom = std::max(u.bottom, n.bounds.bottom);
  }
  return u;
}

void collect(const UiNode& node, PredicateMode mode, std::vector<UiNode>& out) {
  const auto& f = node.flags;
  bool hit = f.clickable || f.scrollable || f.long_clickable || (mode == PredicateMode::Literal && f.enabled);
  if (hit) {
    UiNode copy = node;
    copy.children.clear();
    out.push_back(std::move(copy));
  }
  for (const auto& c : node.children) collect(c, mode, out);
}

std::size_t count_below(const UiNode& node) {
  std::size_t n = 0;
  for (const auto& c : node.children) n += 1 + count_below(c);
  return n;
}

}  // namespace

UiNode parse_hierarchy(std::string_view document) {
  if (document.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw EmptyTreeError("hierarchy document is empty");
  }
  pt::ptree tree;
  std::istringstream in{std::string(document)};
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed hierarchy document: ") + e.what());
  }
  for (const auto& [name, element] : tree) {
    if (name == "hierarchy") {
      UiNode root;
      root.class_name = "hierarchy";
      for (const auto& [child_name, child] : element) {
        if (child_name == "node") root.children.push_back(convert_node(child));
      }
      root.bounds = union_of(root.children);
      return root;
    }
    if (name == "node") return convert_node(element);
  }
  throw EmptyTreeError("hierarchy document has no <hierarchy> or <node> root");
}

std::size_t count_nodes(const UiNode& root) {
  return count_below(root) + (root.class_name == "hierarchy" ? 0 : 1);
}

PredicateMode parse_predicate_mode(std::string_view name) {
  if (name == "strict") return PredicateMode::Strict;
  if (name == "literal") return PredicateMode::Literal;
  throw ConfigError("predicate mode must be 'strict' or 'literal', got '" + std::string(name) + "'");
}

std::vector<UiNode> extract_interactive_nodes(const UiNode& root, PredicateMode mode) {
  std::vector<UiNode> out;
  collect(root, mode, out);
  return out;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\n': out += "&#10;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string write_hierarchy(const std::vector<UiNode>& nodes, std::string_view package) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream out;
  out << "<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>\n<hierarchy rotation=\"0\">\n";
  int index = 0;
  for (const auto& n : nodes) {
    out << "  <node index=\"" << index++ << "\" text=\"" << xml_escape(n.text) << "\" resource-id=\""
        << xml_escape(n.resource_id) << "\" class=\"" << xml_escape(n.class_name) << "\" package=\""
        << xml_escape(package) << "\" content-desc=\"" << xml_escape(n.content_desc)
        << "\" clickable=\"" << b(n.flags.clickable) << "\" enabled=\"" << b(n.flags.enabled)
        << "\" scrollable=\"" << b(n.flags.scrollable) << "\" long-clickable=\"" << b(n.flags.long_clickable)
        << "\" editable=\"" << b(n.flags.editable) << "\" bounds=\"" << format_bounds(n.bounds) << "\" />\n";
  }
  out << "</hierarchy>\n";
  return out.str();
}

}  // namespace guiagent
