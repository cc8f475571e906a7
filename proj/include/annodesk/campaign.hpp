#pragma once

// Campaign definition files: domain types, parsing/validation and
// serialization back to the same JSON schema.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "annodesk/errors.hpp"
#include "annodesk/text.hpp"

namespace annodesk {

using Json = nlohmann::ordered_json;

enum class Assignment { task_based, single_stream, dynamic };
enum class Protocol { da, esa, mqm, esa_ai };
enum class ContentKind { text, audio, video, html };
enum class Severity { minor, major };
enum class SpanOrigin { human, prefilled, prefilled_edited };

inline const char* to_string(Assignment a) {
  switch (a) {
    case Assignment::task_based: return "task-based";
    case Assignment::single_stream: return "single-stream";
    case Assignment::dynamic: return "dynamic";
  }
  return "";
}

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::da: return "DA";
    case Protocol::esa: return "ESA";
    case Protocol::mqm: return "MQM";
    case Protocol::esa_ai: return "ESA^AI";
  }
  return "";
}

inline const char* to_string(ContentKind k) {
  switch (k) {
    case ContentKind::text: return "text";
    case ContentKind::audio: return "audio";
    case ContentKind::video: return "video";
    case ContentKind::html: return "html";
  }
  return "";
}

inline const char* to_string(Severity s) { return s == Severity::minor ? "minor" : "major"; }

inline const char* to_string(SpanOrigin o) {
  switch (o) {
    case SpanOrigin::human: return "human";
    case SpanOrigin::prefilled: return "prefilled";
    case SpanOrigin::prefilled_edited: return "prefilled-edited";
  }
  return "";
}

inline std::optional<Severity> severity_from_string(std::string_view s) {
  if (s == "minor") return Severity::minor;
  if (s == "major") return Severity::major;
  return std::nullopt;
}

inline std::optional<SpanOrigin> origin_from_string(std::string_view s) {
  if (s == "human") return SpanOrigin::human;
  if (s == "prefilled") return SpanOrigin::prefilled;
  if (s == "prefilled-edited") return SpanOrigin::prefilled_edited;
  return std::nullopt;
}

struct Content {
  ContentKind kind = ContentKind::text;
  std::string value;

  bool operator==(const Content&) const = default;
};

/// Inclusive integer range.
struct IndexRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  bool contains(std::int64_t v) const { return lo <= v && v <= hi; }
  bool operator==(const IndexRange&) const = default;
};

struct ExpectedSpan {
  IndexRange start_range;
  IndexRange end_range;
  Severity severity = Severity::minor;

  bool operator==(const ExpectedSpan&) const = default;
};

/// An annotated (or prefilled) error span. `start` and `end` are inclusive
/// Unicode scalar offsets into the target text.
struct ErrorSpan {
  std::int64_t start = 0;
  std::int64_t end = 0;
  Severity severity = Severity::minor;
  std::optional<std::string> category;  // MQM only
  SpanOrigin origin = SpanOrigin::human;

  bool operator==(const ErrorSpan&) const = default;
};

struct ScoreRange {
  double min = 0;
  double max = 100;

  bool operator==(const ScoreRange&) const = default;
};

struct ValidationRule {
  std::optional<std::string> warning;
  std::optional<ScoreRange> score;
  std::optional<std::vector<ExpectedSpan>> error_spans;
  std::optional<std::string> score_greaterthan;
  bool allow_skip = false;

  /// Rules with a warning are tutorials; without one they are silent checks.
  bool blocking() const { return warning.has_value(); }
  bool operator==(const ValidationRule&) const = default;
};

struct ModelContent {
  std::string model;
  Content content;

  bool operator==(const ModelContent&) const = default;
};

struct ModelRules {
  std::string model;
  std::vector<ValidationRule> rules;

  bool operator==(const ModelRules&) const = default;
};

struct ModelSpans {
  std::string model;
  std::vector<ErrorSpan> spans;

  bool operator==(const ModelSpans&) const = default;
};

struct SegmentItem {
  Content src;
  std::optional<Content> ref;
  std::vector<ModelContent> tgt;  // campaign-file order
  std::vector<ModelRules> validation;
  std::vector<ModelSpans> prefilled_spans;

  const Content* target(std::string_view model) const {
    for (const auto& t : tgt)
      if (t.model == model) return &t.content;
    return nullptr;
  }

  const std::vector<ValidationRule>* rules_for(std::string_view model) const {
    for (const auto& r : validation)
      if (r.model == model) return &r.rules;
    return nullptr;
  }

  const std::vector<ErrorSpan>* prefilled_for(std::string_view model) const {
    for (const auto& p : prefilled_spans)
      if (p.model == model) return &p.spans;
    return nullptr;
  }

  bool operator==(const SegmentItem&) const = default;
};

struct Document {
  std::vector<SegmentItem> segments;
  std::optional<std::string> instructions;

  /// Model ids in campaign-file order of the first segment.
  std::vector<std::string> model_ids() const {
    std::vector<std::string> ids;
    if (segments.empty()) return ids;
    for (const auto& t : segments.front().tgt) ids.push_back(t.model);
    return ids;
  }

  bool has_model(std::string_view model) const {
    return !segments.empty() && segments.front().target(model) != nullptr;
  }

  bool contrastive() const { return !segments.empty() && segments.front().tgt.size() >= 2; }

  bool operator==(const Document&) const = default;
};

struct CustomSlider {
  std::string name;
  std::vector<std::string> anchors;

  bool operator==(const CustomSlider&) const = default;
};

struct CampaignInfo {
  Assignment assignment = Assignment::single_stream;
  Protocol protocol = Protocol::esa;
  std::optional<std::size_t> users;
  bool shuffle = true;
  std::size_t dynamic_top = 2;
  std::size_t dynamic_first = 5;
  double dynamic_backoff = 0.0;
  std::size_t dynamic_contrastive_models = 1;
  std::vector<CustomSlider> custom_sliders;
  bool allow_postedit = false;
  double attention_threshold = 0.8;

  bool operator==(const CampaignInfo&) const = default;
};

struct CampaignDefinition {
  std::string campaign_id;
  CampaignInfo info;
  /// Every document, flattened in file order; indices are global document ids.
  std::vector<Document> documents;
  /// Task-based only: per task, the global indices of its documents.
  std::vector<std::vector<std::size_t>> tasks;

  bool task_based() const { return info.assignment == Assignment::task_based; }

  std::size_t annotator_count() const {
    return task_based() ? tasks.size() : info.users.value_or(0);
  }

  /// Distinct model ids in order of first appearance.
  std::vector<std::string> model_ids() const {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& doc : documents) {
      if (doc.segments.empty()) continue;
      for (const auto& t : doc.segments.front().tgt)
        if (!seen.count(t.model) && seen.insert(t.model).second) ids.push_back(t.model);
    }
    return ids;
  }

  bool operator==(const CampaignDefinition&) const = default;
};

namespace detail {

class Parser {
 public:
  CampaignDefinition parse(const Json& root) {
    if (!root.is_object()) throw ValidationError("$", "campaign file must be a JSON object");
    check_keys(root, "", {"info", "campaign_id", "data"});

    CampaignDefinition def;
    const Json& id = require(root, "", "campaign_id");
    if (!id.is_string()) throw ValidationError("campaign_id", "must be a string");
    def.campaign_id = id.get<std::string>();
    validate_campaign_id(def.campaign_id);

    def.info = parse_info(require(root, "", "info"));
    protocol_ = def.info.protocol;

    const Json& data = require(root, "", "data");
    if (!data.is_array() || data.empty())
      throw ValidationError("data", "must be a non-empty list");

    if (def.task_based()) {
      for (std::size_t t = 0; t < data.size(); ++t) {
        const std::string task_path = "data[" + std::to_string(t) + "]";
        const Json& task = data[t];
        if (!task.is_array() || task.empty())
          throw ValidationError(task_path, "a task must be a non-empty list of documents");
        std::vector<std::size_t> indices;
        for (std::size_t d = 0; d < task.size(); ++d) {
          indices.push_back(def.documents.size());
          def.documents.push_back(
              parse_document(task[d], task_path + "[" + std::to_string(d) + "]"));
        }
        def.tasks.push_back(std::move(indices));
      }
      if (def.info.users && *def.info.users != def.tasks.size())
        throw ValidationError("info.users", "must equal the number of tasks (" +
                                                std::to_string(def.tasks.size()) + ")");
    } else {
      for (std::size_t d = 0; d < data.size(); ++d)
        def.documents.push_back(parse_document(data[d], "data[" + std::to_string(d) + "]"));
      if (!def.info.users)
        throw ValidationError("info.users", "required for pooled assignment");
    }

    check_dynamic(def);
    return def;
  }

 private:
  Protocol protocol_ = Protocol::esa;

  static void validate_campaign_id(const std::string& id) {
    if (id.empty()) throw ValidationError("campaign_id", "must be non-empty");
    if (id.front() == '.') throw ValidationError("campaign_id", "must not start with '.'");
    for (char c : id) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '_' || c == '-' || c == '.';
      if (!ok)
        throw ValidationError("campaign_id", "only letters, digits, '_', '-' and '.' are allowed");
    }
  }

  static std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }

  static void check_keys(const Json& obj, const std::string& path,
                         std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ValidationError(join(path, key), "unknown key");
    }
  }

  static const Json& require(const Json& obj, const std::string& path, std::string_view key) {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) throw ValidationError(join(path, key), "required field is missing");
    return *it;
  }

  static std::size_t get_count(const Json& v, const std::string& path, std::size_t min) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < static_cast<std::int64_t>(min))
      throw ValidationError(path, "must be an integer >= " + std::to_string(min));
    return v.get<std::size_t>();
  }

  static bool get_bool(const Json& v, const std::string& path) {
    if (!v.is_boolean()) throw ValidationError(path, "must be a boolean");
    return v.get<bool>();
  }

  static double get_number(const Json& v, const std::string& path) {
    if (!v.is_number()) throw ValidationError(path, "must be a number");
    return v.get<double>();
  }

  static std::string get_string(const Json& v, const std::string& path) {
    if (!v.is_string()) throw ValidationError(path, "must be a string");
    return v.get<std::string>();
  }

  static CampaignInfo parse_info(const Json& j) {
    const std::string path = "info";
    if (!j.is_object()) throw ValidationError(path, "must be an object");
    check_keys(j, path,
               {"assignment", "protocol", "users", "shuffle", "dynamic_top", "dynamic_first",
                "dynamic_backoff", "dynamic_contrastive_models", "custom_sliders", "allow_postedit",
                "attention_threshold"});
    CampaignInfo info;

    const std::string assignment = get_string(require(j, path, "assignment"), "info.assignment");
    if (assignment == "task-based") {
      info.assignment = Assignment::task_based;
    } else if (assignment == "single-stream") {
      info.assignment = Assignment::single_stream;
    } else if (assignment == "dynamic") {
      info.assignment = Assignment::dynamic;
    } else {
      throw ValidationError("info.assignment", "unknown assignment '" + assignment + "'");
    }

    const std::string protocol = get_string(require(j, path, "protocol"), "info.protocol");
    if (protocol == "DA") {
      info.protocol = Protocol::da;
    } else if (protocol == "ESA") {
      info.protocol = Protocol::esa;
    } else if (protocol == "MQM") {
      info.protocol = Protocol::mqm;
    } else if (protocol == "ESA^AI" || protocol == "ESAAI") {
      info.protocol = Protocol::esa_ai;
    } else {
      throw ValidationError("info.protocol", "unknown protocol '" + protocol + "'");
    }

    if (j.contains("users")) info.users = get_count(j["users"], "info.users", 1);
    if (j.contains("shuffle")) info.shuffle = get_bool(j["shuffle"], "info.shuffle");
    if (j.contains("allow_postedit"))
      info.allow_postedit = get_bool(j["allow_postedit"], "info.allow_postedit");
    if (j.contains("attention_threshold")) {
      info.attention_threshold = get_number(j["attention_threshold"], "info.attention_threshold");
      if (info.attention_threshold < 0 || info.attention_threshold > 1)
        throw ValidationError("info.attention_threshold", "must lie in [0, 1]");
    }

    const bool dynamic = info.assignment == Assignment::dynamic;
    for (const char* key :
         {"dynamic_top", "dynamic_first", "dynamic_backoff", "dynamic_contrastive_models"}) {
      if (j.contains(key) && !dynamic)
        throw ValidationError(join(path, key), "only valid with assignment 'dynamic'");
    }
    if (j.contains("dynamic_top"))
      info.dynamic_top = get_count(j["dynamic_top"], "info.dynamic_top", 1);
    if (j.contains("dynamic_first"))
      info.dynamic_first = get_count(j["dynamic_first"], "info.dynamic_first", 0);
    if (j.contains("dynamic_backoff")) {
      info.dynamic_backoff = get_number(j["dynamic_backoff"], "info.dynamic_backoff");
      if (info.dynamic_backoff < 0 || info.dynamic_backoff > 1)
        throw ValidationError("info.dynamic_backoff", "must be a probability in [0, 1]");
    }
    if (j.contains("dynamic_contrastive_models"))
      info.dynamic_contrastive_models =
          get_count(j["dynamic_contrastive_models"], "info.dynamic_contrastive_models", 1);

    if (j.contains("custom_sliders")) {
      const Json& sliders = j["custom_sliders"];
      if (!sliders.is_array() || sliders.empty())
        throw ValidationError("info.custom_sliders", "must be a non-empty list");
      for (std::size_t i = 0; i < sliders.size(); ++i) {
        const std::string sp = "info.custom_sliders[" + std::to_string(i) + "]";
        const Json& s = sliders[i];
        if (!s.is_object()) throw ValidationError(sp, "must be an object");
        check_keys(s, sp, {"name", "anchors"});
        CustomSlider slider;
        slider.name = get_string(require(s, sp, "name"), sp + ".name");
        if (text::is_blank(slider.name)) throw ValidationError(sp + ".name", "must be non-empty");
        if (s.contains("anchors")) {
          if (!s["anchors"].is_array()) throw ValidationError(sp + ".anchors", "must be a list");
          for (const auto& a : s["anchors"]) slider.anchors.push_back(get_string(a, sp + ".anchors"));
        }
        for (const auto& other : info.custom_sliders)
          if (other.name == slider.name) throw ValidationError(sp + ".name", "duplicate slider name");
        info.custom_sliders.push_back(std::move(slider));
      }
    }
    return info;
  }

  static Content parse_content(const Json& j, const std::string& path) {
    Content c;
    if (j.is_string()) {
      c.kind = ContentKind::text;
      c.value = j.get<std::string>();
    } else if (j.is_object()) {
      check_keys(j, path, {"kind", "value"});
      const std::string kind = get_string(require(j, path, "kind"), path + ".kind");
      if (kind == "text") {
        c.kind = ContentKind::text;
      } else if (kind == "audio") {
        c.kind = ContentKind::audio;
      } else if (kind == "video") {
        c.kind = ContentKind::video;
      } else if (kind == "html") {
        c.kind = ContentKind::html;
      } else {
        throw ValidationError(path + ".kind", "unknown content kind '" + kind + "'");
      }
      c.value = get_string(require(j, path, "value"), path + ".value");
    } else {
      throw ValidationError(path, "must be a string or a {kind, value} object");
    }
    if (text::is_blank(c.value)) throw ValidationError(path, "content must be non-empty");
    return c;
  }

  static IndexRange parse_range(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
      throw ValidationError(path, "must be an integer pair [lo, hi]");
    IndexRange r{j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
    if (r.lo < 0 || r.lo > r.hi) throw ValidationError(path, "requires 0 <= lo <= hi");
    return r;
  }

  static Severity parse_severity(const Json& j, const std::string& path) {
    auto s = severity_from_string(get_string(j, path));
    if (!s) throw ValidationError(path, "severity must be 'minor' or 'major'");
    return *s;
  }

  ValidationRule parse_rule(const Json& j, const std::string& path, const SegmentItem& seg,
                            const std::string& model) {
    if (!j.is_object()) throw ValidationError(path, "must be an object");
    check_keys(j, path, {"warning", "score", "error_spans", "score_greaterthan", "allow_skip"});
    ValidationRule rule;
    if (j.contains("warning")) rule.warning = get_string(j["warning"], path + ".warning");
    if (j.contains("score")) {
      const Json& s = j["score"];
      if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number())
        throw ValidationError(path + ".score", "must be a pair [min, max]");
      ScoreRange r{s[0].get<double>(), s[1].get<double>()};
      if (r.min < 0 || r.max > 100 || r.min > r.max)
        throw ValidationError(path + ".score", "requires 0 <= min <= max <= 100");
      rule.score = r;
    }
    if (j.contains("error_spans")) {
      const Json& spans = j["error_spans"];
      if (!spans.is_array()) throw ValidationError(path + ".error_spans", "must be a list");
      const Content* target = seg.target(model);
      if (target->kind != ContentKind::text)
        throw ValidationError(path + ".error_spans", "spans require text content");
      std::vector<ExpectedSpan> expected;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        const std::string sp = path + ".error_spans[" + std::to_string(i) + "]";
        const Json& e = spans[i];
        if (!e.is_object()) throw ValidationError(sp, "must be an object");
        check_keys(e, sp, {"start_i", "end_i", "severity"});
        ExpectedSpan x;
        x.start_range = parse_range(require(e, sp, "start_i"), sp + ".start_i");
        x.end_range = parse_range(require(e, sp, "end_i"), sp + ".end_i");
        x.severity = parse_severity(require(e, sp, "severity"), sp + ".severity");
        if (x.start_range.lo > x.end_range.hi)
          throw ValidationError(sp, "start_i.lo must not exceed end_i.hi");
        const auto length = static_cast<std::int64_t>(text::scalar_length(target->value));
        if (x.start_range.lo >= length || x.end_range.lo >= length)
          throw ValidationError(sp, "span indices out of bounds for target of length " +
                                        std::to_string(length));
        expected.push_back(x);
      }
      rule.error_spans = std::move(expected);
    }
    if (j.contains("score_greaterthan")) {
      rule.score_greaterthan = get_string(j["score_greaterthan"], path + ".score_greaterthan");
      if (*rule.score_greaterthan == model || seg.target(*rule.score_greaterthan) == nullptr)
        throw ValidationError(path + ".score_greaterthan",
                              "must name another model on the same segment");
    }
    if (j.contains("allow_skip")) rule.allow_skip = get_bool(j["allow_skip"], path + ".allow_skip");
    return rule;
  }

  ErrorSpan parse_prefilled(const Json& j, const std::string& path, std::size_t length) {
    if (!j.is_object()) throw ValidationError(path, "must be an object");
    check_keys(j, path, {"start_i", "end_i", "severity"});
    ErrorSpan s;
    const Json& start = require(j, path, "start_i");
    const Json& end = require(j, path, "end_i");
    if (!start.is_number_integer() || !end.is_number_integer())
      throw ValidationError(path, "start_i and end_i must be integers");
    s.start = start.get<std::int64_t>();
    s.end = end.get<std::int64_t>();
    if (s.start < 0 || s.start > s.end || s.end >= static_cast<std::int64_t>(length))
      throw ValidationError(path, "span indices out of bounds for target of length " +
                                      std::to_string(length));
    s.severity = parse_severity(require(j, path, "severity"), path + ".severity");
    s.origin = SpanOrigin::prefilled;
    return s;
  }

  SegmentItem parse_segment(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ValidationError(path, "a segment must be an object");
    check_keys(j, path, {"src", "ref", "tgt", "validation", "instructions", "prefilled_spans"});
    SegmentItem seg;
    seg.src = parse_content(require(j, path, "src"), path + ".src");
    if (j.contains("ref")) seg.ref = parse_content(j["ref"], path + ".ref");

    const Json& tgt = require(j, path, "tgt");
    if (!tgt.is_object() || tgt.empty())
      throw ValidationError(path + ".tgt", "must be a non-empty object of model outputs");
    for (const auto& [model, value] : tgt.items()) {
      if (model.empty()) throw ValidationError(path + ".tgt", "model id must be non-empty");
      seg.tgt.push_back({model, parse_content(value, path + ".tgt." + model)});
    }

    if (j.contains("validation")) {
      const Json& v = j["validation"];
      if (!v.is_object()) throw ValidationError(path + ".validation", "must be an object");
      for (const auto& [model, rules] : v.items()) {
        const std::string mp = path + ".validation." + model;
        if (seg.target(model) == nullptr)
          throw ValidationError(mp, "model is not present in tgt");
        if (!rules.is_array()) throw ValidationError(mp, "must be a list of rules");
        ModelRules mr{model, {}};
        for (std::size_t i = 0; i < rules.size(); ++i)
          mr.rules.push_back(parse_rule(rules[i], mp + "[" + std::to_string(i) + "]", seg, model));
        seg.validation.push_back(std::move(mr));
      }
    }

    if (j.contains("prefilled_spans")) {
      const std::string pp = path + ".prefilled_spans";
      if (protocol_ != Protocol::esa_ai)
        throw ValidationError(pp, "prefilled spans require protocol ESA^AI");
      const Json& p = j["prefilled_spans"];
      if (!p.is_object()) throw ValidationError(pp, "must be an object");
      for (const auto& [model, spans] : p.items()) {
        const std::string mp = pp + "." + model;
        const Content* target = seg.target(model);
        if (target == nullptr) throw ValidationError(mp, "model is not present in tgt");
        if (target->kind != ContentKind::text)
          throw ValidationError(mp, "spans require text content");
        if (!spans.is_array()) throw ValidationError(mp, "must be a list of spans");
        ModelSpans ms{model, {}};
        const std::size_t length = text::scalar_length(target->value);
        for (std::size_t i = 0; i < spans.size(); ++i)
          ms.spans.push_back(parse_prefilled(spans[i], mp + "[" + std::to_string(i) + "]", length));
        seg.prefilled_spans.push_back(std::move(ms));
      }
    }
    return seg;
  }

  Document parse_document(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
      throw ValidationError(path, "a document must be a non-empty list of segments");
    Document doc;
    for (std::size_t s = 0; s < j.size(); ++s) {
      const std::string sp = path + "[" + std::to_string(s) + "]";
      if (j[s].is_object() && j[s].contains("instructions")) {
        if (s != 0)
          throw ValidationError(sp + ".instructions", "only allowed on the first segment");
        doc.instructions = get_string(j[s]["instructions"], sp + ".instructions");
      }
      doc.segments.push_back(parse_segment(j[s], sp));
    }
    std::set<std::string> first;
    for (const auto& t : doc.segments.front().tgt) first.insert(t.model);
    for (std::size_t s = 1; s < doc.segments.size(); ++s) {
      std::set<std::string> ids;
      for (const auto& t : doc.segments[s].tgt) ids.insert(t.model);
      if (ids != first)
        throw ValidationError(path + "[" + std::to_string(s) + "].tgt",
                              "all segments of a document must have the same models");
    }
    return doc;
  }

  static void check_dynamic(const CampaignDefinition& def) {
    if (def.info.assignment != Assignment::dynamic) return;
    const auto models = def.model_ids();
    if (def.info.dynamic_top > models.size())
      throw ValidationError("info.dynamic_top", "exceeds the number of distinct models (" +
                                                    std::to_string(models.size()) + ")");
    const std::size_t width = def.info.dynamic_contrastive_models;
    if (width > models.size())
      throw ValidationError("info.dynamic_contrastive_models",
                            "exceeds the number of distinct models (" +
                                std::to_string(models.size()) + ")");
    if (width >= 2) {
      for (std::size_t d = 0; d < def.documents.size(); ++d) {
        if (def.documents[d].model_ids().size() != models.size())
          throw ValidationError("data[" + std::to_string(d) + "]",
                                "contrastive dynamic assignment needs every model in every document");
      }
    }
  }
};

inline Json content_to_json(const Content& c) {
  if (c.kind == ContentKind::text) return c.value;
  Json j;
  j["kind"] = to_string(c.kind);
  j["value"] = c.value;
  return j;
}

}  // namespace detail

/// Parses and validates a campaign file. Accepts `//` and `/* */` comments
/// and trailing commas. Throws ParseError on malformed syntax and
/// ValidationError (with the offending path) on schema violations.
inline CampaignDefinition parse_campaign(std::string_view raw) {
  const std::string cleaned = text::blank_trailing_commas(raw);
  Json root;
  try {
    root = Json::parse(cleaned, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    auto [line, column] = text::line_column(raw, offset);
    throw ParseError(line, column, e.what());
  }
  return detail::Parser{}.parse(root);
}

inline Json to_json(const ErrorSpan& s) {
  Json j;
  j["start_i"] = s.start;
  j["end_i"] = s.end;
  j["severity"] = to_string(s.severity);
  if (s.category) j["category"] = *s.category;
  return j;
}

inline Json to_json(const ValidationRule& r) {
  Json j = Json::object();
  if (r.warning) j["warning"] = *r.warning;
  if (r.score) j["score"] = Json::array({r.score->min, r.score->max});
  if (r.error_spans) {
    Json spans = Json::array();
    for (const auto& e : *r.error_spans) {
      Json x;
      x["start_i"] = Json::array({e.start_range.lo, e.start_range.hi});
      x["end_i"] = Json::array({e.end_range.lo, e.end_range.hi});
      x["severity"] = to_string(e.severity);
      spans.push_back(std::move(x));
    }
    j["error_spans"] = std::move(spans);
  }
  if (r.score_greaterthan) j["score_greaterthan"] = *r.score_greaterthan;
  if (r.allow_skip) j["allow_skip"] = true;
  return j;
}

inline Json to_json(const Document& doc) {
  Json segments = Json::array();
  for (std::size_t s = 0; s < doc.segments.size(); ++s) {
    const SegmentItem& seg = doc.segments[s];
    Json j;
    if (s == 0 && doc.instructions) j["instructions"] = *doc.instructions;
    j["src"] = detail::content_to_json(seg.src);
    if (seg.ref) j["ref"] = detail::content_to_json(*seg.ref);
    Json tgt = Json::object();
    for (const auto& t : seg.tgt) tgt[t.model] = detail::content_to_json(t.content);
    j["tgt"] = std::move(tgt);
    if (!seg.validation.empty()) {
      Json v = Json::object();
      for (const auto& mr : seg.validation) {
        Json rules = Json::array();
        for (const auto& r : mr.rules) rules.push_back(to_json(r));
        v[mr.model] = std::move(rules);
      }
      j["validation"] = std::move(v);
    }
    if (!seg.prefilled_spans.empty()) {
      Json p = Json::object();
      for (const auto& ms : seg.prefilled_spans) {
        Json spans = Json::array();
        for (const auto& sp : ms.spans) spans.push_back(to_json(sp));
        p[ms.model] = std::move(spans);
      }
      j["prefilled_spans"] = std::move(p);
    }
    segments.push_back(std::move(j));
  }
  return segments;
}

inline Json to_json(const CampaignInfo& info) {
  Json j;
  j["assignment"] = to_string(info.assignment);
  j["protocol"] = to_string(info.protocol);
  if (info.users) j["users"] = *info.users;
  j["shuffle"] = info.shuffle;
  if (info.assignment == Assignment::dynamic) {
    j["dynamic_top"] = info.dynamic_top;
    j["dynamic_first"] = info.dynamic_first;
    j["dynamic_backoff"] = info.dynamic_backoff;
    j["dynamic_contrastive_models"] = info.dynamic_contrastive_models;
  }
  if (!info.custom_sliders.empty()) {
    Json sliders = Json::array();
    for (const auto& s : info.custom_sliders) {
      Json x;
      x["name"] = s.name;
      x["anchors"] = s.anchors;
      sliders.push_back(std::move(x));
    }
    j["custom_sliders"] = std::move(sliders);
  }
  j["allow_postedit"] = info.allow_postedit;
  j["attention_threshold"] = info.attention_threshold;
  return j;
}

/// Serializes back into the campaign-file schema; `parse_campaign` of the
/// result yields an equal definition.
inline Json to_json(const CampaignDefinition& def) {
  Json j;
  j["info"] = to_json(def.info);
  j["campaign_id"] = def.campaign_id;
  Json data = Json::array();
  if (def.task_based()) {
    for (const auto& task : def.tasks) {
      Json t = Json::array();
      for (std::size_t idx : task) t.push_back(to_json(def.documents[idx]));
      data.push_back(std::move(t));
    }
  } else {
    for (const auto& doc : def.documents) data.push_back(to_json(doc));
  }
  j["data"] = std::move(data);
  return j;
}

/// Display order for the models of one document. With `shuffle` off the
/// campaign-file order is returned unchanged; otherwise a Fisher-Yates
/// permutation driven only by `seed`.
inline std::vector<std::string> shuffle_model_order(const Document& doc, std::uint64_t seed,
                                                    bool shuffle = true) {
  std::vector<std::string> ids = doc.model_ids();
  if (!shuffle || ids.size() < 2) return ids;
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(ids[i], ids[pick(rng)]);
  }
  return ids;
}

}  // namespace annodesk
