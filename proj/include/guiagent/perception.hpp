#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "guiagent/device.hpp"
#include "guiagent/gateway.hpp"
#include "guiagent/hierarchy.hpp"
#include "guiagent/raster.hpp"

namespace guiagent {

enum class ElementSource { Hierarchy, Vision, Merged };
const char* element_source_name(ElementSource s);
ElementSource parse_element_source(std::string_view name);

struct ElementDescriptor {
  int marker_id = 0;
  Bounds bounds;
  std::string text;
  std::string content_desc;
  std::string class_name;
  std::string resource_id;
  NodeFlags flags;
  ElementSource source = ElementSource::Hierarchy;
  std::optional<std::string> function_hint;
  std::optional<std::string> inferred_function;

  // Best available description: inferred function, else hint, else class.
  std::string function_text() const;

  friend bool operator==(const ElementDescriptor&, const ElementDescriptor&) = default;
};

struct VisionDetection {
  Bounds bounds;
  std::string text;
};

struct OverlayEntry {
  int marker_id = 0;
  Point anchor;
  Bounds rect;
};

struct KbMatch {
  int marker_id = 0;
  std::string entry_id;
  double similarity = 0.0;
};

struct Observation {
  std::vector<ElementDescriptor> elements;
  Raster screenshot;
  Raster annotated_screenshot;
  std::vector<OverlayEntry> overlay_metadata;
  std::vector<KbMatch> kb_matches;
  std::optional<std::string> page_summary;
  std::vector<std::string> warnings;

  const ElementDescriptor* find(int marker_id) const;
};

// Hint derived from the widget class, e.g. EditText -> "text input field".
std::optional<std::string> class_function_hint(std::string_view class_name, const NodeFlags& flags);

// Detections whose IoU with any element is at least the threshold are
// dropped (the hierarchy wins; an empty hierarchy text is filled from the
// detection). Survivors are appended as clickable vision elements.
// Marker ids are not assigned here.
std::vector<ElementDescriptor> merge_detections(std::vector<ElementDescriptor> elements,
                                                const std::vector<VisionDetection>& detections,
                                                double iou_threshold = 0.5);

// Sorts by (top, left, bottom, right) and numbers 1..N.
void assign_markers(std::vector<ElementDescriptor>& elements);

struct EnumerateOptions {
  PredicateMode mode = PredicateMode::Strict;
  double iou_threshold = 0.5;
  std::optional<ScreenSize> screen;  // clip bounds to the screen when set
};

std::vector<ElementDescriptor> enumerate_elements(const UiNode& tree,
                                                  const std::vector<VisionDetection>& detections,
                                                  const EnumerateOptions& options = {});

class AnnotationError : public Error {
 public:
  using Error::Error;
};

// Label anchor rule: (left + 2, top + 2) clamped into the rectangle.
Point label_anchor(const Bounds& rect);

std::pair<Raster, std::vector<OverlayEntry>> annotate_screenshot(const Raster& screenshot,
                                                                 const std::vector<ElementDescriptor>& elements);

// ---------------------------------------------------------------------------
// Knowledge base

class KbError : public Error {
 public:
  using Error::Error;
};

struct KnowledgeBaseEntry {
  std::string entry_id;
  Raster image;
  std::string appearance_description;
  std::string function;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::vector<KnowledgeBaseEntry> entries);
  // Reads <dir>/manifest.json: {"entries": [{entry_id, image_file,
  // appearance_description, function}]}, images as PNG.
  static KnowledgeBase load(const std::filesystem::path& dir);

  const std::vector<KnowledgeBaseEntry>& entries() const { return entries_; }
  const KnowledgeBaseEntry* find(std::string_view entry_id) const;
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<KnowledgeBaseEntry> entries_;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const Raster& image, std::string_view text) = 0;
};

// Fixed-length signature: 4x4 grid of mean colors (centered to [-1, 1]),
// aspect term (w - h) / (w + h), and a 37-bin character histogram of the
// text, concatenated and L2-normalized.
class SignatureEmbedder : public Embedder {
 public:
  static constexpr std::size_t kDims = 4 * 4 * 3 + 1 + 37;
  std::vector<double> embed(const Raster& image, std::string_view text) override;
};

// POSTs a PNG to an embedding service that answers {"embedding": [...]}.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(std::string endpoint);
  std::vector<double> embed(const Raster& image, std::string_view text) override;

 private:
  std::string endpoint_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

std::vector<KbMatch> match_knowledge_base(const std::vector<ElementDescriptor>& elements, const Raster& screenshot,
                                          const KnowledgeBase& kb, Embedder& embedder, double threshold = 0.90);

// ---------------------------------------------------------------------------
// Vision detector

class VisionDetector {
 public:
  virtual ~VisionDetector() = default;
  virtual std::vector<VisionDetection> detect(const Raster& screenshot) = 0;
};

// POSTs the screenshot as PNG; expects {"detections": [{"bounds": "[L,T][R,B]", "text": "..."}]}.
class HttpVisionDetector : public VisionDetector {
 public:
  explicit HttpVisionDetector(std::string endpoint);
  std::vector<VisionDetection> detect(const Raster& screenshot) override;

 private:
  std::string endpoint_;
};

// ---------------------------------------------------------------------------
// Function inference

// Builds the Observer request. Exposed for tests.
ChatRequest build_observer_request(const Observation& obs, const KnowledgeBase* kb);

// One gateway call; fills inferred_function and page_summary. Never throws
// on model failure: the observation comes back with a warning instead.
Observation infer_functions(Observation obs, Gateway& gateway, const KnowledgeBase* kb = nullptr);

struct ObserverOptions {
  EnumerateOptions enumerate;
  double kb_threshold = 0.90;
};

class Observer {
 public:
  Observer(Gateway& gateway, ObserverOptions options = {});

  void set_knowledge_base(std::shared_ptr<const KnowledgeBase> kb, std::shared_ptr<Embedder> embedder);
  void set_detector(std::shared_ptr<VisionDetector> detector) { detector_ = std::move(detector); }

  Observation observe(Device& device);

 private:
  Gateway& gateway_;
  ObserverOptions options_;
  std::shared_ptr<const KnowledgeBase> kb_;
  std::shared_ptr<Embedder> embedder_;
  std::shared_ptr<VisionDetector> detector_;
};

}  // namespace guiagent
