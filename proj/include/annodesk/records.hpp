#pragma once

// Annotation records and the per-action timeline that accompanies them,
// with their JSON form (shared by the event log and the export).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annodesk/campaign.hpp"
#include "annodesk/errors.hpp"

namespace annodesk {

enum class ActionKind {
  span_create,
  span_delete,
  severity_change,
  score_set,
  comment_set,
  tutorial_fail,
  tutorial_skip,
  submit,
};

inline const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::span_create: return "span_create";
    case ActionKind::span_delete: return "span_delete";
    case ActionKind::severity_change: return "severity_change";
    case ActionKind::score_set: return "score_set";
    case ActionKind::comment_set: return "comment_set";
    case ActionKind::tutorial_fail: return "tutorial_fail";
    case ActionKind::tutorial_skip: return "tutorial_skip";
    case ActionKind::submit: return "submit";
  }
  return "";
}

inline std::optional<ActionKind> action_kind_from_string(std::string_view s) {
  for (ActionKind k : {ActionKind::span_create, ActionKind::span_delete,
                       ActionKind::severity_change, ActionKind::score_set,
                       ActionKind::comment_set, ActionKind::tutorial_fail,
                       ActionKind::tutorial_skip, ActionKind::submit})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct ActionEvent {
  std::int64_t timestamp = 0;  // ms since campaign start
  std::string user_id;
  std::size_t document_index = 0;
  std::size_t segment_index = 0;
  std::string model;
  ActionKind kind = ActionKind::submit;
  Json payload = Json::object();

  bool operator==(const ActionEvent&) const = default;
};

struct SegmentAnnotation {
  double score = 0;
  std::vector<std::pair<std::string, double>> sliders;  // custom sliders, campaign order
  std::vector<ErrorSpan> spans;
  std::optional<std::string> postedit;
  bool missing_at_end = false;

  bool operator==(const SegmentAnnotation&) const = default;
};

struct AnnotationRecord {
  std::uint64_t sequence = 0;  // log sequence of the submission
  std::int64_t submitted_at = 0;
  std::string user_id;
  std::size_t document_index = 0;
  std::string model;
  std::vector<SegmentAnnotation> segments;
  std::string comment;
  std::vector<ActionEvent> events;
  std::optional<std::uint64_t> superseded_by;

  std::vector<double> scores() const {
    std::vector<double> out;
    for (const auto& s : segments) out.push_back(s.score);
    return out;
  }

  bool operator==(const AnnotationRecord&) const = default;
};

inline Json to_json(const ActionEvent& e) {
  Json j;
  j["timestamp"] = e.timestamp;
  j["user_id"] = e.user_id;
  j["document_index"] = e.document_index;
  j["segment_index"] = e.segment_index;
  j["model"] = e.model;
  j["kind"] = to_string(e.kind);
  j["payload"] = e.payload;
  return j;
}

inline Json span_to_json(const ErrorSpan& s) {
  Json j;
  j["start_i"] = s.start;
  j["end_i"] = s.end;
  j["severity"] = to_string(s.severity);
  if (s.category) j["category"] = *s.category;
  j["origin"] = to_string(s.origin);
  return j;
}

inline Json to_json(const SegmentAnnotation& s) {
  Json j;
  j["score"] = s.score;
  if (!s.sliders.empty()) {
    Json sl = Json::object();
    for (const auto& [name, v] : s.sliders) sl[name] = v;
    j["sliders"] = std::move(sl);
  }
  Json spans = Json::array();
  for (const auto& sp : s.spans) spans.push_back(span_to_json(sp));
  j["error_spans"] = std::move(spans);
  j["postedit"] = s.postedit ? Json(*s.postedit) : Json(nullptr);
  j["missing"] = s.missing_at_end;
  return j;
}

inline Json to_json(const AnnotationRecord& r) {
  Json j;
  j["sequence"] = r.sequence;
  j["submitted_at"] = r.submitted_at;
  j["user_id"] = r.user_id;
  j["document_index"] = r.document_index;
  j["model"] = r.model;
  Json segs = Json::array();
  for (const auto& s : r.segments) segs.push_back(to_json(s));
  j["segments"] = std::move(segs);
  j["comment"] = r.comment;
  Json events = Json::array();
  for (const auto& e : r.events) events.push_back(to_json(e));
  j["events"] = std::move(events);
  j["superseded_by"] = r.superseded_by ? Json(*r.superseded_by) : Json(nullptr);
  return j;
}

namespace detail {

template <typename T>
T field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::validation, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::validation, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ErrorSpan span_from_json(const Json& j) {
  ErrorSpan s;
  s.start = detail::field<std::int64_t>(j, "start_i");
  s.end = detail::field<std::int64_t>(j, "end_i");
  auto sev = severity_from_string(detail::field<std::string>(j, "severity"));
  if (!sev) throw Error(ErrorKind::validation, "severity must be 'minor' or 'major'");
  s.severity = *sev;
  if (j.contains("category") && !j["category"].is_null())
    s.category = detail::field<std::string>(j, "category");
  if (j.contains("origin")) {
    auto o = origin_from_string(detail::field<std::string>(j, "origin"));
    if (!o) throw Error(ErrorKind::validation, "unknown span origin");
    s.origin = *o;
  }
  return s;
}

inline ActionEvent action_from_json(const Json& j) {
  ActionEvent e;
  e.timestamp = detail::field<std::int64_t>(j, "timestamp");
  e.user_id = j.value("user_id", std::string());
  e.document_index = j.value("document_index", std::size_t{0});
  e.segment_index = j.value("segment_index", std::size_t{0});
  e.model = j.value("model", std::string());
  auto kind = action_kind_from_string(detail::field<std::string>(j, "kind"));
  if (!kind) throw Error(ErrorKind::validation, "unknown action kind");
  e.kind = *kind;
  if (j.contains("payload")) e.payload = j["payload"];
  return e;
}

inline SegmentAnnotation segment_from_json(const Json& j) {
  SegmentAnnotation s;
  s.score = detail::field<double>(j, "score");
  if (j.contains("sliders"))
    for (const auto& [name, v] : j["sliders"].items()) s.sliders.emplace_back(name, v.get<double>());
  if (j.contains("error_spans"))
    for (const auto& sp : j["error_spans"]) s.spans.push_back(span_from_json(sp));
  if (j.contains("postedit") && !j["postedit"].is_null())
    s.postedit = detail::field<std::string>(j, "postedit");
  s.missing_at_end = j.value("missing", false);
  return s;
}

inline AnnotationRecord record_from_json(const Json& j) {
  AnnotationRecord r;
  r.sequence = j.value("sequence", std::uint64_t{0});
  r.submitted_at = j.value("submitted_at", std::int64_t{0});
  r.user_id = detail::field<std::string>(j, "user_id");
  r.document_index = detail::field<std::size_t>(j, "document_index");
  r.model = detail::field<std::string>(j, "model");
  if (!j.contains("segments") || !j["segments"].is_array())
    throw Error(ErrorKind::validation, "missing field 'segments'");
  for (const auto& s : j["segments"]) r.segments.push_back(segment_from_json(s));
  r.comment = j.value("comment", std::string());
  if (j.contains("events"))
    for (const auto& e : j["events"]) r.events.push_back(action_from_json(e));
  if (j.contains("superseded_by") && !j["superseded_by"].is_null())
    r.superseded_by = j["superseded_by"].get<std::uint64_t>();
  return r;
}

}  // namespace annodesk
