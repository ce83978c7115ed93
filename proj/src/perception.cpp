#include "guiagent/perception.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

const char* element_source_name(ElementSource s) {
  switch (s) {
    case ElementSource::Hierarchy: return "hierarchy";
    case ElementSource::Vision: return "vision";
    case ElementSource::Merged: return "merged";
  }
  return "hierarchy";
}

ElementSource parse_element_source(std::string_view name) {
  if (name == "vision") return ElementSource::Vision;
  if (name == "merged") return ElementSource::Merged;
  if (name == "hierarchy") return ElementSource::Hierarchy;
  throw ParseError("unknown element source '" + std::string(name) + "'");
}

std::string ElementDescriptor::function_text() const {
  if (inferred_function && !inferred_function->empty()) return *inferred_function;
  if (function_hint && !function_hint->empty()) return *function_hint;
  return class_name;
}

const ElementDescriptor* Observation::find(int marker_id) const {
  for (const auto& e : elements) {
    if (e.marker_id == marker_id) return &e;
  }
  return nullptr;
}

std::optional<std::string> class_function_hint(std::string_view cls, const NodeFlags& flags) {
  auto has = [&](std::string_view s) { return cls.find(s) != std::string_view::npos; };
  if (has("EditText") || flags.editable) return "text input field";
  if (has("CheckBox")) return "checkbox";
  if (has("Switch") || has("ToggleButton")) return "toggle switch";
  if (has("RadioButton")) return "radio option";
  if (has("SeekBar")) return "slider";
  if (has("ImageButton")) return "icon button";
  if (has("Button")) return "button";
  if (has("RecyclerView") || has("ListView") || has("ScrollView") || has("ViewPager")) return "scrollable container";
  if (has("ImageView") && flags.clickable) return "clickable image or icon";
  if (has("WebView")) return "embedded web content";
  return std::nullopt;
}

namespace {

Bounds clip(const Bounds& b, ScreenSize s) {
  return {std::clamp(b.left, 0, s.width), std::clamp(b.top, 0, s.height), std::clamp(b.right, 0, s.width),
          std::clamp(b.bottom, 0, s.height)};
}

}  // namespace

std::vector<ElementDescriptor> merge_detections(std::vector<ElementDescriptor> elements,
                                                const std::vector<VisionDetection>& detections,
                                                double iou_threshold) {
  for (const auto& d : detections) {
    ElementDescriptor* best = nullptr;
    double best_iou = 0.0;
    for (auto& e : elements) {
      double iou = intersection_over_union(e.bounds, d.bounds);
      if (iou > best_iou) {
        best_iou = iou;
        best = &e;
      }
    }
    if (best != nullptr && best_iou >= iou_threshold) {
      if (best->text.empty() && !d.text.empty()) {
        best->text = d.text;
        if (best->source == ElementSource::Hierarchy) best->source = ElementSource::Merged;
      }
      continue;
    }
    ElementDescriptor v;
    v.bounds = d.bounds;
    v.text = d.text;
    v.class_name = "vision.Element";
    v.flags.clickable = true;
    v.source = ElementSource::Vision;
    elements.push_back(std::move(v));
  }
  return elements;
}

void assign_markers(std::vector<ElementDescriptor>& elements) {
  std::stable_sort(elements.begin(), elements.end(), [](const ElementDescriptor& a, const ElementDescriptor& b) {
    return std::tie(a.bounds.top, a.bounds.left, a.bounds.bottom, a.bounds.right) <
           std::tie(b.bounds.top, b.bounds.left, b.bounds.bottom, b.bounds.right);
  });
  for (std::size_t i = 0; i < elements.size(); ++i) elements[i].marker_id = static_cast<int>(i + 1);
}

std::vector<ElementDescriptor> enumerate_elements(const UiNode& tree, const std::vector<VisionDetection>& detections,
                                                  const EnumerateOptions& options) {
  std::vector<ElementDescriptor> out;
  for (const auto& node : extract_interactive_nodes(tree, options.mode)) {
    Bounds b = options.screen ? clip(node.bounds, *options.screen) : node.bounds;
    if (b.area() <= 0) continue;
    // Nested containers often repeat a child's rectangle; keep one element
    // per rectangle, filling empty text from the later node.
    auto same = std::find_if(out.begin(), out.end(), [&](const ElementDescriptor& e) { return e.bounds == b; });
    if (same != out.end()) {
      if (same->text.empty()) same->text = node.text;
      if (same->content_desc.empty()) same->content_desc = node.content_desc;
      if (same->resource_id.empty()) same->resource_id = node.resource_id;
      same->flags.clickable |= node.flags.clickable;
      same->flags.scrollable |= node.flags.scrollable;
      same->flags.long_clickable |= node.flags.long_clickable;
      same->flags.editable |= node.flags.editable;
      if (!same->function_hint) same->function_hint = class_function_hint(node.class_name, node.flags);
      continue;
    }
    ElementDescriptor e;
    e.bounds = b;
    e.text = node.text;
    e.content_desc = node.content_desc;
    e.class_name = node.class_name;
    e.resource_id = node.resource_id;
    e.flags = node.flags;
    e.function_hint = class_function_hint(node.class_name, node.flags);
    out.push_back(std::move(e));
  }
  std::vector<VisionDetection> dets = detections;
  if (options.screen) {
    for (auto& d : dets) d.bounds = clip(d.bounds, *options.screen);
    std::erase_if(dets, [](const VisionDetection& d) { return d.bounds.area() <= 0; });
  }
  out = merge_detections(std::move(out), dets, options.iou_threshold);
  assign_markers(out);
  return out;
}

Point label_anchor(const Bounds& r) {
  return {std::clamp(r.left + 2, r.left, std::max(r.left, r.right - 1)),
          std::clamp(r.top + 2, r.top, std::max(r.top, r.bottom - 1))};
}

std::pair<Raster, std::vector<OverlayEntry>> annotate_screenshot(const Raster& screenshot,
                                                                 const std::vector<ElementDescriptor>& elements) {
  constexpr Rgb kBox{220, 40, 40};
  constexpr Rgb kLabelInk{255, 255, 255};
  constexpr int kScale = 2;
  Raster out = screenshot;
  std::vector<OverlayEntry> meta;
  for (const auto& e : elements) {
    const Bounds& b = e.bounds;
    if (b.right > screenshot.width() || b.bottom > screenshot.height() || b.left < 0 || b.top < 0) {
      throw AnnotationError("element " + std::to_string(e.marker_id) + " bounds " + format_bounds(b) +
                            " outside the " + std::to_string(screenshot.width()) + "x" +
                            std::to_string(screenshot.height()) + " screenshot");
    }
    out.stroke_rect(b.left, b.top, b.right, b.bottom, 3, kBox);
    Point anchor = label_anchor(b);
    std::string label = std::to_string(e.marker_id);
    out.fill_rect(anchor.x, anchor.y, anchor.x + text_width(label, kScale) + 6,
                  anchor.y + kGlyphHeight * kScale + 6, kBox);
    out.draw_text(anchor.x + 3, anchor.y + 3, label, kScale, kLabelInk);
    meta.push_back({e.marker_id, anchor, b});
  }
  return {std::move(out), std::move(meta)};
}

// ---------------------------------------------------------------------------
// Knowledge base

KnowledgeBase::KnowledgeBase(std::vector<KnowledgeBaseEntry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.entry_id.empty() || e.image.empty() || e.appearance_description.empty() || e.function.empty()) {
      throw KbError("knowledge base entry '" + e.entry_id + "' has an empty field");
    }
  }
}

KnowledgeBase KnowledgeBase::load(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw KbError("cannot read knowledge base manifest in " + dir.string());
  std::vector<KnowledgeBaseEntry> entries;
  try {
    json doc;
    in >> doc;
    for (const auto& e : doc.at("entries")) {
      KnowledgeBaseEntry entry;
      entry.entry_id = e.at("entry_id").get<std::string>();
      entry.appearance_description = e.at("appearance_description").get<std::string>();
      entry.function = e.at("function").get<std::string>();
      std::ifstream img(dir / e.at("image_file").get<std::string>(), std::ios::binary);
      if (!img) throw KbError("cannot read image for knowledge base entry '" + entry.entry_id + "'");
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(img)), std::istreambuf_iterator<char>());
      entry.image = decode_png(bytes);
      entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw KbError("bad knowledge base manifest: " + std::string(e.what()));
  } catch (const ImageError& e) {
    throw KbError("bad knowledge base image: " + std::string(e.what()));
  }
  return KnowledgeBase(std::move(entries));
}

const KnowledgeBaseEntry* KnowledgeBase::find(std::string_view entry_id) const {
  for (const auto& e : entries_) {
    if (e.entry_id == entry_id) return &e;
  }
  return nullptr;
}

std::vector<double> SignatureEmbedder::embed(const Raster& image, std::string_view text) {
  std::vector<double> v;
  v.reserve(kDims);
  const int w = image.width();
  const int h = image.height();
  for (int gy = 0; gy < 4; ++gy) {
    for (int gx = 0; gx < 4; ++gx) {
      int x0 = gx * w / 4, x1 = (gx + 1) * w / 4;
      int y0 = gy * h / 4, y1 = (gy + 1) * h / 4;
      double sum[3] = {0, 0, 0};
      long count = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          Rgb c = image.at(x, y);
          sum[0] += c.r;
          sum[1] += c.g;
          sum[2] += c.b;
          ++count;
        }
      }
      for (double s : sum) v.push_back(count == 0 ? 0.0 : (s / count - 128.0) / 128.0);
    }
  }
  v.push_back(w + h == 0 ? 0.0 : static_cast<double>(w - h) / (w + h));
  std::vector<double> hist(37, 0.0);
  double total = 0;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(ch)));
    if (std::isspace(c)) continue;
    if (c >= 'a' && c <= 'z') hist[c - 'a'] += 1;
    else if (c >= '0' && c <= '9') hist[26 + c - '0'] += 1;
    else hist[36] += 1;
    total += 1;
  }
  for (double x : hist) v.push_back(total == 0 ? 0.0 : x / total);
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

HttpEmbedder::HttpEmbedder(std::string endpoint) : endpoint_(std::move(endpoint)) {}

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

json post_png(const std::string& endpoint, const Raster& image, const httplib::Headers& extra = {}) {
  auto [origin, path] = split_url(endpoint);
  httplib::Client client(origin);
  client.set_read_timeout(60, 0);
  auto png = encode_png(image);
  std::string body(png.begin(), png.end());
  auto res = client.Post(path, extra, body, "image/png");
  if (!res) throw Error("POST " + endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("POST " + endpoint + " returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error("POST " + endpoint + " returned invalid JSON: " + e.what());
  }
}

}  // namespace

std::vector<double> HttpEmbedder::embed(const Raster& image, std::string_view text) {
  json doc = post_png(endpoint_, image, {{"X-Element-Text", std::string(text)}});
  try {
    return doc.at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw KbError("embedding service returned no embedding: " + std::string(e.what()));
  }
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  if (a == b) return 1.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<KbMatch> match_knowledge_base(const std::vector<ElementDescriptor>& elements, const Raster& screenshot,
                                          const KnowledgeBase& kb, Embedder& embedder, double threshold) {
  std::vector<KbMatch> out;
  if (kb.empty()) return out;
  std::vector<std::pair<const KnowledgeBaseEntry*, std::vector<double>>> kb_vectors;
  for (const auto& entry : kb.entries()) kb_vectors.emplace_back(&entry, embedder.embed(entry.image, ""));
  for (const auto& e : elements) {
    const Bounds& b = e.bounds;
    if (b.area() <= 0 || b.right > screenshot.width() || b.bottom > screenshot.height()) continue;
    auto crop = screenshot.crop(b.left, b.top, b.right, b.bottom);
    auto vec = embedder.embed(crop, "");
    const KnowledgeBaseEntry* best = nullptr;
    double best_sim = -2.0;
    for (const auto& [entry, kv] : kb_vectors) {
      double sim = cosine_similarity(vec, kv);
      // Equal similarity keeps the lexicographically smaller id.
      if (sim > best_sim || (sim == best_sim && best != nullptr && entry->entry_id < best->entry_id)) {
        best_sim = sim;
        best = entry;
      }
    }
    // Guard against rounding just under 1.0 for identical inputs.
    if (best != nullptr && best_sim >= threshold - 1e-12) {
      out.push_back({e.marker_id, best->entry_id, std::min(best_sim, 1.0)});
    }
  }
  return out;
}

HttpVisionDetector::HttpVisionDetector(std::string endpoint) : endpoint_(std::move(endpoint)) {}

std::vector<VisionDetection> HttpVisionDetector::detect(const Raster& screenshot) {
  json doc = post_png(endpoint_, screenshot);
  std::vector<VisionDetection> out;
  try {
    for (const auto& d : doc.at("detections")) {
      out.push_back({parse_bounds(d.at("bounds").get<std::string>()), d.value("text", std::string())});
    }
  } catch (const json::exception& e) {
    throw Error("vision detector returned an unexpected body: " + std::string(e.what()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Function inference

namespace {

constexpr const char* kObserverSystem =
    "You observe one screen of a mobile app. The screenshot has every interactive element boxed and "
    "numbered. For each numbered element, state its function in a short phrase. Also summarize the "
    "page: its structure (for example form, list, detail) and its category (for example search, "
    "product, cart, payment, advertisement).";

constexpr const char* kObserverSchema =
    R"({"page_summary": "<page structure and category>", "functions": {"<marker id>": "<function>"}})";

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\\\"";
    else if (c == '\n') out += ' ';
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

ChatRequest build_observer_request(const Observation& obs, const KnowledgeBase* kb) {
  std::ostringstream table;
  table << "Elements on this screen:\n";
  for (const auto& e : obs.elements) {
    table << "[" << e.marker_id << "] class=" << e.class_name << " text=" << quoted(e.text)
          << " content-desc=" << quoted(e.content_desc) << " bounds=" << format_bounds(e.bounds);
    if (e.function_hint) table << " hint=" << quoted(*e.function_hint);
    if (e.flags.editable) table << " editable";
    if (e.flags.scrollable) table << " scrollable";
    if (kb != nullptr) {
      for (const auto& m : obs.kb_matches) {
        if (m.marker_id != e.marker_id) continue;
        if (const auto* entry = kb->find(m.entry_id)) {
          table << " known-element: appearance=" << quoted(entry->appearance_description)
                << " function=" << quoted(entry->function);
        }
      }
    }
    table << "\n";
  }
  if (obs.elements.empty()) table << "(no interactive elements)\n";

  ChatRequest req;
  req.agent = "observer";
  req.structured_mode = true;
  req.schema_hint = kObserverSchema;
  req.messages.push_back(Message::text(Role::System, kObserverSystem));
  Message user;
  user.role = Role::User;
  user.parts.emplace_back(ImagePart{encode_png(obs.annotated_screenshot), "image/png"});
  user.parts.emplace_back(TextPart{table.str() + "Answer as JSON: " + kObserverSchema});
  req.messages.push_back(std::move(user));
  return req;
}

Observation infer_functions(Observation obs, Gateway& gateway, const KnowledgeBase* kb) {
  ChatRequest req = build_observer_request(obs, kb);
  json doc;
  try {
    auto resp = gateway.chat(req, [](const json& d) -> std::string {
      if (d.contains("functions") && !d["functions"].is_object()) return "'functions' must be an object";
      return {};
    });
    doc = *extract_json_document(resp.text);
  } catch (const MalformedResponseError& e) {
    obs.warnings.push_back(std::string("function inference unavailable: ") + e.what());
    return obs;
  }
  if (doc.contains("page_summary") && doc["page_summary"].is_string()) {
    obs.page_summary = doc["page_summary"].get<std::string>();
  }
  if (doc.contains("functions")) {
    for (auto& e : obs.elements) {
      auto it = doc["functions"].find(std::to_string(e.marker_id));
      if (it != doc["functions"].end() && it->is_string() && !it->get<std::string>().empty()) {
        e.inferred_function = it->get<std::string>();
      }
    }
  }
  return obs;
}

Observer::Observer(Gateway& gateway, ObserverOptions options) : gateway_(gateway), options_(std::move(options)) {}

void Observer::set_knowledge_base(std::shared_ptr<const KnowledgeBase> kb, std::shared_ptr<Embedder> embedder) {
  kb_ = std::move(kb);
  embedder_ = embedder ? std::move(embedder) : std::make_shared<SignatureEmbedder>();
}

Observation Observer::observe(Device& device) {
  Observation obs;
  obs.screenshot = device.capture_screenshot();
  EnumerateOptions opts = options_.enumerate;
  opts.screen = ScreenSize{obs.screenshot.width(), obs.screenshot.height()};

  UiNode tree;
  try {
    tree = parse_hierarchy(device.dump_hierarchy());
  } catch (const Error& e) {
    // Vision detections, when configured, still cover the page.
    obs.warnings.push_back(std::string("hierarchy unavailable: ") + e.what());
  }
  std::vector<VisionDetection> detections;
  if (detector_) {
    try {
      detections = detector_->detect(obs.screenshot);
    } catch (const Error& e) {
      obs.warnings.push_back(std::string("vision detector failed: ") + e.what());
    }
  }
  obs.elements = enumerate_elements(tree, detections, opts);
  auto [annotated, meta] = annotate_screenshot(obs.screenshot, obs.elements);
  obs.annotated_screenshot = std::move(annotated);
  obs.overlay_metadata = std::move(meta);
  if (kb_ && embedder_) {
    obs.kb_matches = match_knowledge_base(obs.elements, obs.screenshot, *kb_, *embedder_, options_.kb_threshold);
  }
  return infer_functions(std::move(obs), gateway_, kb_.get());
}

}  // namespace guiagent
