#pragma once

// Live campaigns: in-memory state behind a single writer, every mutation
// logged and flushed before it is applied, plus the on-disk registry.

#include <sodium.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "annodesk/analytics.hpp"
#include "annodesk/state.hpp"
#include "annodesk/text.hpp"

namespace annodesk {

inline std::int64_t system_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

/// Default quality slider anchors (value, label).
inline const std::vector<std::pair<int, std::string>>& default_slider_anchors() {
  static const std::vector<std::pair<int, std::string>> anchors = {
      {0, "Nonsense: most information is lost."},
      {33, "Broken: major gaps and narrative issues."},
      {66, "Middling: minor issues with grammar or consistency."},
      {100, "Perfect: meaning and grammar align completely with the source."}};
  return anchors;
}

inline constexpr const char* kAnnotatorGuidance =
    "Select an error by clicking where it starts and again where it ends. Click a highlight to "
    "switch it between minor and major or to delete it. Minor errors are about style, grammar "
    "or wording; major errors change the meaning or make the text hard to follow. Rough "
    "boundaries are fine, one highlight per error. Mark omitted content with [missing] at the "
    "end of the segment. Then set the score so that better translations get higher scores.";

struct CampaignOptions {
  std::function<std::int64_t()> clock = system_clock_ms;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> secret;
};

class Campaign {
 public:
  using Clock = std::function<std::int64_t()>;

  struct Hooks {
    /// Runs once the record is durable, before the in-memory state changes.
    std::function<void(const StoredEvent&)> after_flush;
    /// Runs after the state has absorbed the record (writer lock held).
    std::function<void(const StoredEvent&, const CampaignState&)> after_apply;
  };

  /// A new campaign: logs campaign_added and links_generated. Without a
  /// writer the log is kept in memory (see memory_log()).
  static std::unique_ptr<Campaign> create(const CampaignDefinition& def,
                                          std::optional<LogWriter> writer,
                                          CampaignOptions opts = {},
                                          const std::set<std::string>& taken_tokens = {}) {
    std::unique_ptr<Campaign> c(new Campaign(std::move(writer), opts.clock));
    std::unique_lock lock(c->mutex_);
    Json added;
    added["definition"] = to_json(def);
    added["secret"] = opts.secret ? *opts.secret : random_hex(32);
    if (opts.seed) {
      added["seed"] = *opts.seed;
    } else {
      detail::ensure_sodium();
      std::uint64_t seed = 0;
      randombytes_buf(&seed, sizeof seed);
      added["seed"] = seed;
    }
    c->commit(EventKind::campaign_added, std::move(added), def.campaign_id);

    CampaignLinks links;
    for (;;) {
      links = generate_links(def, "");
      bool clash = taken_tokens.count(links.manager.identity.token) > 0;
      for (const auto& l : links.annotators) clash = clash || taken_tokens.count(l.identity.token);
      if (!clash) break;
    }
    Json body;
    Json annotators = Json::array();
    for (const auto& l : links.annotators) annotators.push_back(detail::identity_json(l.identity));
    body["annotators"] = std::move(annotators);
    body["manager"] = detail::identity_json(links.manager.identity);
    c->commit(EventKind::links_generated, std::move(body));
    return c;
  }

  /// Rebuilds a campaign from its log contents.
  static std::unique_ptr<Campaign> restore(const LogContents& log, std::optional<LogWriter> writer,
                                           Clock clock = system_clock_ms) {
    std::unique_ptr<Campaign> c(new Campaign(std::move(writer), std::move(clock)));
    for (const auto& e : log.events) apply(c->state_, e);
    if (!c->writer_) {
      if (log.frames.size() == log.valid_bytes && !log.frames.empty()) {
        c->memory_ = log.frames;
      } else {
        for (const auto& e : log.events) c->memory_ += encode_frame(e);
      }
    }
    return c;
  }

  Campaign(const Campaign&) = delete;
  Campaign& operator=(const Campaign&) = delete;

  std::string id() const {
    std::shared_lock lock(mutex_);
    return state_.def.campaign_id;
  }

  void set_hooks(Hooks hooks) {
    std::unique_lock lock(mutex_);
    hooks_ = std::move(hooks);
  }

  void set_clock(Clock clock) {
    std::unique_lock lock(mutex_);
    clock_ = std::move(clock);
  }

  CampaignState snapshot() const {
    std::shared_lock lock(mutex_);
    return state_;
  }

  /// Frames written so far, for campaigns without a log file.
  std::string memory_log() const {
    std::shared_lock lock(mutex_);
    return memory_;
  }

  CampaignLinks links(std::string_view base_url) const {
    std::shared_lock lock(mutex_);
    CampaignLinks out;
    for (const auto& u : state_.annotators) out.annotators.push_back({u, magic_link_url(base_url, u.token)});
    if (state_.manager) out.manager = {*state_.manager, magic_link_url(base_url, state_.manager->token)};
    return out;
  }

  std::pair<std::size_t, std::size_t> progress() const {
    std::shared_lock lock(mutex_);
    return campaign_progress(state_.def, state_.assignment);
  }

  /// Opaque per-document name for a model, derived from the campaign secret.
  std::string alias(std::size_t doc, const std::string& model) const {
    return alias_for(state_, doc, model);
  }

  // -------------------------------------------------------------------------
  // Annotator operations

  Json next_item(const std::string& user) {
    std::unique_lock lock(mutex_);
    const std::int64_t now = clock_();
    Rng rng(decision_seed(user));
    NextItem next = decide_next(state_.def, state_.assignment, user, now, rng);
    if (auto* item = std::get_if<ItemRef>(&next)) {
      if (!state_.def.task_based() && needs_issue(user, *item, now)) {
        Json body;
        body["user_id"] = user;
        body["document_index"] = item->document_index;
        body["model_ids"] = item->model_ids;
        body["issued_at"] = now;
        commit(EventKind::item_issued, std::move(body));
      }
      return item_payload(*item, user, false);
    }
    const auto& done = std::get<CampaignComplete>(next);
    const CompletionToken token =
        completion_token(state_.ledger, state_.secret, state_.def.campaign_id, user, true);
    Json j;
    j["status"] = "complete";
    j["campaign_id"] = state_.def.campaign_id;
    j["progress"] = progress_json(done.progress);
    j["verdict"] = to_string(token.verdict);
    j["token"] = token.token;
    return j;
  }

  /// The payload for re-doing a document the user already submitted.
  Json redo_item(const std::string& user, std::size_t doc) {
    std::shared_lock lock(mutex_);
    detail::require_annotator(state_.assignment, state_.def, user);
    if (doc >= state_.def.documents.size())
      throw Error(ErrorKind::not_found, "document index out of range");
    std::vector<std::string> models;
    for (const auto& m : state_.def.documents[doc].model_ids())
      if (state_.assignment.completed.count({doc, m, user})) models.push_back(m);
    if (models.empty()) throw Error(ErrorKind::state, "nothing to redo for this document");
    ItemRef item{doc, detail::display_order(state_.def, doc, models, user),
                 user_progress(state_.def, state_.assignment, user)};
    return item_payload(item, user, true);
  }

  Json submit(const std::string& user, const Json& request) {
    std::unique_lock lock(mutex_);
    const std::int64_t now = clock_();
    Submission sub = parse_submission(user, request, now);

    std::vector<ModelScores> scores;
    for (const auto& m : sub.models) {
      std::vector<double> v;
      for (const auto& s : m.segments) v.push_back(s.score);
      scores.push_back({m.model, std::move(v)});
    }
    check_completion(state_.def, state_.assignment, user, sub.doc, scores, sub.redo);

    Json outcomes = Json::array();
    Json warnings = Json::array();
    Json skipped = Json::array();
    Json failed = Json::array();
    evaluate_rules(sub, outcomes, warnings, skipped, failed);

    if (!warnings.empty()) {
      Json body;
      body["user_id"] = user;
      body["document_index"] = sub.doc;
      body["outcomes"] = failed;
      commit(EventKind::rule_outcome, std::move(body));
      Json j;
      j["status"] = "blocked";
      j["warnings"] = std::move(warnings);
      return j;
    }

    if (!skipped.empty()) {
      Json body;
      body["user_id"] = user;
      body["document_index"] = sub.doc;
      body["rules"] = skipped;
      commit(EventKind::tutorial_skip, std::move(body));
    }

    Json body;
    body["user_id"] = user;
    body["document_index"] = sub.doc;
    body["redo"] = sub.redo;
    Json records = Json::array();
    for (const auto& m : sub.models) {
      AnnotationRecord r;
      r.user_id = user;
      r.document_index = sub.doc;
      r.model = m.model;
      r.segments = m.segments;
      r.comment = m.comment;
      r.events = m.events;
      Json rj = to_json(r);
      rj.erase("sequence");
      rj.erase("submitted_at");
      rj.erase("superseded_by");
      records.push_back(std::move(rj));
    }
    body["records"] = std::move(records);
    body["rule_outcomes"] = std::move(outcomes);
    commit(EventKind::annotation_submitted, std::move(body));

    Json j;
    j["status"] = "accepted";
    j["progress"] = progress_json(user_progress(state_.def, state_.assignment, user));
    return j;
  }

  // -------------------------------------------------------------------------
  // Manager operations

  /// Progress, timing, attention rates and the annotations themselves.
  /// Never contains rankings or model means.
  Json dashboard() const {
    std::shared_lock lock(mutex_);
    const CampaignState& s = state_;
    Json j;
    j["campaign_id"] = s.def.campaign_id;
    j["assignment"] = to_string(s.def.info.assignment);
    j["protocol"] = to_string(s.def.info.protocol);
    j["progress"] = progress_json(campaign_progress(s.def, s.assignment));
    Json users = Json::array();
    for (const auto& p : progress_report(s.def, s.assignment, s.ledger, s.annotator_ids(), s.submit_times))
      users.push_back(to_json(p));
    j["users"] = std::move(users);
    Json annotators = Json::array();
    for (const auto& u : s.annotators) annotators.push_back(detail::identity_json(u));
    j["annotators"] = std::move(annotators);
    if (s.def.task_based()) {
      Json tasks = Json::object();
      for (const auto& u : s.annotators) tasks[u.user_id] = s.assignment.tasks.at(u.user_id);
      j["tasks"] = std::move(tasks);
    }
    Json annotations = Json::array();
    for (const auto& r : s.records) annotations.push_back(to_json(r));
    j["annotations"] = std::move(annotations);
    j["attention_threshold"] = s.ledger.threshold;
    return j;
  }

  /// Ranking and agreement; the reveal itself is logged.
  Json reveal(const std::string& manager, double alpha = kDefaultAlpha) {
    std::unique_lock lock(mutex_);
    Json body;
    body["user_id"] = manager;
    body["alpha"] = alpha;
    commit(EventKind::results_revealed, std::move(body));
    Json j = to_json(build_ranking(state_.records, alpha, state_.def.info.assignment));
    j["agreement"] = to_json(iaa_report(state_.records));
    return j;
  }

  Json redistribute(const std::string& manager, const std::string& from_user,
                    const std::string& to_user, std::size_t first, std::size_t last) {
    std::unique_lock lock(mutex_);
    AssignmentState trial = state_.assignment;
    redistribute_tasks(state_.def, trial, from_user, to_user, first, last);
    Json body;
    body["user_id"] = manager;
    body["from_user"] = from_user;
    body["to_user"] = to_user;
    body["first"] = first;
    body["last"] = last;
    commit(EventKind::tasks_redistributed, std::move(body));
    Json j;
    j["tasks"] = Json::object();
    for (const auto& u : {from_user, to_user}) {
      j["tasks"][u] = state_.assignment.tasks.at(u);
      j["progress"][u] = progress_json(user_progress(state_.def, state_.assignment, u));
    }
    return j;
  }

  Json export_annotations() const {
    std::shared_lock lock(mutex_);
    return annodesk::export_annotations(state_);
  }

  Json export_state() const {
    std::shared_lock lock(mutex_);
    return annodesk::export_state(state_);
  }

 private:
  Campaign(std::optional<LogWriter> writer, Clock clock)
      : writer_(std::move(writer)), clock_(std::move(clock)) {}

  struct SubmittedModel {
    std::string model;
    std::vector<SegmentAnnotation> segments;
    std::string comment;
    std::vector<ActionEvent> events;
  };

  struct Submission {
    std::size_t doc = 0;
    bool redo = false;
    bool skip_tutorial = false;
    std::vector<SubmittedModel> models;  // sorted by model id
  };

  static std::string alias_for(const CampaignState& s, std::size_t doc, const std::string& model) {
    return "m" + hmac_hex(s.secret, std::to_string(doc) + "\n" + model, 6);
  }

  static Json progress_json(std::pair<std::size_t, std::size_t> p) {
    Json j;
    j["done"] = p.first;
    j["total"] = p.second;
    return j;
  }

  /// Log first, then apply. A failed write leaves the state untouched.
  void commit(EventKind kind, Json body, std::string campaign_id = {}) {
    StoredEvent e;
    e.sequence = state_.last_sequence + 1;
    e.campaign_id = campaign_id.empty() ? state_.def.campaign_id : std::move(campaign_id);
    e.timestamp = clock_();
    e.kind = kind;
    e.body = std::move(body);
    if (writer_) {
      writer_->append(e);
    } else {
      memory_ += encode_frame(e);
    }
    if (hooks_.after_flush) hooks_.after_flush(e);
    apply(state_, e);
    if (hooks_.after_apply) hooks_.after_apply(e, state_);
  }

  std::uint64_t decision_seed(const std::string& user) const {
    return state_.seed ^ ((state_.last_sequence + 1) * 0x9E3779B97F4A7C15ULL) ^ text::fnv1a(user);
  }

  bool needs_issue(const std::string& user, const ItemRef& item, std::int64_t now) const {
    for (const auto& m : item.model_ids) {
      auto it = state_.assignment.in_flight.find({item.document_index, m, user});
      if (it == state_.assignment.in_flight.end() || now - it->second >= kInFlightTimeoutMs)
        return true;
    }
    return false;
  }

  Json sliders_json() const {
    Json out = Json::array();
    if (state_.def.info.custom_sliders.empty()) {
      Json s;
      s["name"] = "score";
      s["min"] = 0;
      s["max"] = 100;
      Json anchors = Json::array();
      for (const auto& [v, label] : default_slider_anchors()) {
        Json a;
        a["value"] = v;
        a["label"] = label;
        anchors.push_back(std::move(a));
      }
      s["anchors"] = std::move(anchors);
      out.push_back(std::move(s));
      return out;
    }
    for (const auto& cs : state_.def.info.custom_sliders) {
      Json s;
      s["name"] = cs.name;
      s["min"] = 0;
      s["max"] = 100;
      Json anchors = Json::array();
      const std::size_t n = cs.anchors.size();
      for (std::size_t i = 0; i < n; ++i) {
        Json a;
        a["value"] = n == 1 ? 0.0 : 100.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        a["label"] = cs.anchors[i];
        anchors.push_back(std::move(a));
      }
      s["anchors"] = std::move(anchors);
      out.push_back(std::move(s));
    }
    return out;
  }

  static Json content_json(const Content& c) {
    Json j;
    j["kind"] = to_string(c.kind);
    j["value"] = c.value;
    return j;
  }

  /// Annotator-facing item. Model ids are replaced by aliases; validation
  /// rules are never sent.
  Json item_payload(const ItemRef& item, const std::string& user, bool redo) const {
    const CampaignDefinition& def = state_.def;
    const Document& doc = def.documents[item.document_index];
    const Protocol protocol = def.info.protocol;
    std::vector<std::string> aliases;
    for (const auto& m : item.model_ids) aliases.push_back(alias_for(state_, item.document_index, m));

    Json j;
    j["status"] = "item";
    j["campaign_id"] = def.campaign_id;
    j["user_id"] = user;
    j["protocol"] = to_string(protocol);
    j["document_index"] = item.document_index;
    j["redo"] = redo;
    j["instructions"] = doc.instructions ? Json(*doc.instructions) : Json(nullptr);
    j["guidance"] = kAnnotatorGuidance;
    j["progress"] = progress_json(item.progress);
    j["models"] = aliases;
    Json segments = Json::array();
    for (const auto& seg : doc.segments) {
      Json s;
      s["src"] = content_json(seg.src);
      s["ref"] = seg.ref ? content_json(*seg.ref) : Json(nullptr);
      Json tgt = Json::object();
      Json prefilled = Json::object();
      for (std::size_t i = 0; i < item.model_ids.size(); ++i) {
        tgt[aliases[i]] = content_json(*seg.target(item.model_ids[i]));
        if (protocol == Protocol::esa_ai) {
          Json spans = Json::array();
          if (const auto* p = seg.prefilled_for(item.model_ids[i]))
            for (const auto& sp : *p) spans.push_back(span_to_json(sp));
          prefilled[aliases[i]] = std::move(spans);
        }
      }
      s["tgt"] = std::move(tgt);
      if (protocol == Protocol::esa_ai) s["prefilled_spans"] = std::move(prefilled);
      segments.push_back(std::move(s));
    }
    j["segments"] = std::move(segments);
    j["sliders"] = sliders_json();
    Json flags;
    flags["error_spans"] = protocol != Protocol::da;
    flags["error_categories"] = protocol == Protocol::mqm;
    flags["granularity_toggle"] = protocol != Protocol::da;
    flags["alignment_hover"] = true;
    flags["postedit"] = def.info.allow_postedit;
    flags["comment_box"] = true;
    flags["contrastive"] = item.model_ids.size() >= 2;
    j["flags"] = std::move(flags);
    return j;
  }

  // -------------------------------------------------------------------------
  // Submission parsing

  ErrorSpan parse_span(const Json& j, const Content& target, const std::string& where) const {
    if (!j.is_object()) throw ValidationError(where, "span must be an object");
    ErrorSpan span;
    try {
      span = span_from_json(j);
    } catch (const Error& e) {
      throw ValidationError(where, e.what());
    }
    const Protocol protocol = state_.def.info.protocol;
    if (target.kind != ContentKind::text)
      throw ValidationError(where, "error spans need a text target");
    const auto length = static_cast<std::int64_t>(text::scalar_length(target.value));
    if (span.start < 0 || span.start > span.end || span.end >= length)
      throw ValidationError(where, "span [" + std::to_string(span.start) + ", " +
                                       std::to_string(span.end) + "] outside target of length " +
                                       std::to_string(length));
    if (protocol == Protocol::mqm && (!span.category || text::is_blank(*span.category)))
      throw ValidationError(where, "MQM spans need a category");
    if (protocol != Protocol::mqm && span.category)
      throw ValidationError(where, "categories are only allowed under MQM");
    if (protocol != Protocol::esa_ai && span.origin != SpanOrigin::human)
      throw ValidationError(where, "prefilled origins are only allowed under ESA^AI");
    return span;
  }

  SegmentAnnotation parse_segment_annotation(const Json& j, const SegmentItem& seg,
                                             const std::string& model,
                                             const std::string& where) const {
    if (!j.is_object()) throw ValidationError(where, "segment annotation must be an object");
    static const std::set<std::string> kKeys = {"score", "sliders", "error_spans", "postedit",
                                                "missing"};
    for (const auto& [k, v] : j.items())
      if (!kKeys.count(k)) throw ValidationError(where + "." + k, "unknown key");
    const CampaignInfo& info = state_.def.info;
    const Content& target = *seg.target(model);
    SegmentAnnotation a;

    if (j.contains("sliders") && !j["sliders"].is_null()) {
      if (info.custom_sliders.empty())
        throw ValidationError(where + ".sliders", "campaign has no custom sliders");
      const Json& sl = j["sliders"];
      if (!sl.is_object() || sl.size() != info.custom_sliders.size())
        throw ValidationError(where + ".sliders", "expected one value per custom slider");
      for (const auto& cs : info.custom_sliders) {
        if (!sl.contains(cs.name) || !sl[cs.name].is_number())
          throw ValidationError(where + ".sliders." + cs.name, "missing slider value");
        const double v = sl[cs.name].get<double>();
        if (!(v >= 0 && v <= 100))
          throw ValidationError(where + ".sliders." + cs.name, "slider value outside [0, 100]");
        a.sliders.emplace_back(cs.name, v);
      }
    } else if (!info.custom_sliders.empty()) {
      throw ValidationError(where + ".sliders", "custom slider values are required");
    }

    if (j.contains("score")) {
      if (!j["score"].is_number()) throw ValidationError(where + ".score", "score must be a number");
      a.score = j["score"].get<double>();
    } else if (!a.sliders.empty()) {
      a.score = a.sliders.front().second;
    } else {
      throw ValidationError(where + ".score", "missing score");
    }
    if (!(a.score >= 0 && a.score <= 100))
      throw ValidationError(where + ".score", "score outside [0, 100]");

    if (j.contains("error_spans") && !j["error_spans"].is_null()) {
      const Json& spans = j["error_spans"];
      if (!spans.is_array()) throw ValidationError(where + ".error_spans", "expected a list");
      if (info.protocol == Protocol::da && !spans.empty())
        throw ValidationError(where + ".error_spans", "DA campaigns take no error spans");
      for (std::size_t i = 0; i < spans.size(); ++i)
        a.spans.push_back(parse_span(spans[i], target, where + ".error_spans[" + std::to_string(i) + "]"));
    }
    if (j.contains("postedit") && !j["postedit"].is_null()) {
      if (!info.allow_postedit) throw ValidationError(where + ".postedit", "post-editing is disabled");
      if (!j["postedit"].is_string()) throw ValidationError(where + ".postedit", "expected text");
      a.postedit = j["postedit"].get<std::string>();
    }
    if (j.contains("missing")) {
      if (!j["missing"].is_boolean()) throw ValidationError(where + ".missing", "expected a boolean");
      a.missing_at_end = j["missing"].get<bool>();
      if (a.missing_at_end && info.protocol == Protocol::da)
        throw ValidationError(where + ".missing", "DA campaigns take no error spans");
    }
    return a;
  }

  Submission parse_submission(const std::string& user, const Json& req, std::int64_t now) const {
    if (!req.is_object()) throw ValidationError("$", "request body must be an object");
    static const std::set<std::string> kKeys = {"document_index", "redo", "skip_tutorial",
                                                "comment", "models", "events"};
    for (const auto& [k, v] : req.items())
      if (!kKeys.count(k)) throw ValidationError(k, "unknown key");
    detail::require_annotator(state_.assignment, state_.def, user);

    Submission sub;
    if (!req.contains("document_index") || !req["document_index"].is_number_unsigned())
      throw ValidationError("document_index", "expected a document index");
    sub.doc = req["document_index"].get<std::size_t>();
    if (sub.doc >= state_.def.documents.size())
      throw ValidationError("document_index", "document index out of range");
    auto flag = [&](const char* key) {
      if (!req.contains(key)) return false;
      if (!req[key].is_boolean()) throw ValidationError(key, "expected a boolean");
      return req[key].get<bool>();
    };
    sub.redo = flag("redo");
    sub.skip_tutorial = flag("skip_tutorial");
    std::string comment;
    if (req.contains("comment") && !req["comment"].is_null()) {
      if (!req["comment"].is_string()) throw ValidationError("comment", "expected text");
      comment = req["comment"].get<std::string>();
    }

    const Document& doc = state_.def.documents[sub.doc];
    std::map<std::string, std::string> by_alias;
    for (const auto& m : doc.model_ids()) by_alias[alias_for(state_, sub.doc, m)] = m;

    if (!req.contains("models") || !req["models"].is_object() || req["models"].empty())
      throw ValidationError("models", "expected an object keyed by model");
    for (const auto& [alias, body] : req["models"].items()) {
      const std::string where = "models." + alias;
      auto it = by_alias.find(alias);
      if (it == by_alias.end()) throw ValidationError(where, "unknown model");
      if (!body.is_object()) throw ValidationError(where, "expected an object");
      for (const auto& [k, v] : body.items())
        if (k != "segments" && k != "comment") throw ValidationError(where + "." + k, "unknown key");
      SubmittedModel m;
      m.model = it->second;
      m.comment = comment;
      if (body.contains("comment") && !body["comment"].is_null()) {
        if (!body["comment"].is_string()) throw ValidationError(where + ".comment", "expected text");
        m.comment = body["comment"].get<std::string>();
      }
      if (!body.contains("segments") || !body["segments"].is_array())
        throw ValidationError(where + ".segments", "expected a list");
      const Json& segs = body["segments"];
      if (segs.size() != doc.segments.size())
        throw ValidationError(where + ".segments", "expected " + std::to_string(doc.segments.size()) +
                                                       " segment annotations");
      for (std::size_t i = 0; i < segs.size(); ++i)
        m.segments.push_back(parse_segment_annotation(segs[i], doc.segments[i], m.model,
                                                      where + ".segments[" + std::to_string(i) + "]"));
      sub.models.push_back(std::move(m));
    }
    std::sort(sub.models.begin(), sub.models.end(),
              [](const SubmittedModel& a, const SubmittedModel& b) { return a.model < b.model; });

    if (req.contains("events") && !req["events"].is_null()) {
      const Json& events = req["events"];
      if (!events.is_array()) throw ValidationError("events", "expected a list");
      for (std::size_t i = 0; i < events.size(); ++i) {
        const std::string where = "events[" + std::to_string(i) + "]";
        const Json& ej = events[i];
        if (!ej.is_object()) throw ValidationError(where, "expected an object");
        ActionEvent e;
        try {
          Json copy = ej;
          copy.erase("model");
          e = action_from_json(copy);
        } catch (const Error& err) {
          throw ValidationError(where, err.what());
        }
        e.timestamp -= state_.created_at;
        e.user_id = user;
        e.document_index = sub.doc;
        if (e.segment_index >= doc.segments.size())
          throw ValidationError(where + ".segment_index", "segment index out of range");
        SubmittedModel* owner = &sub.models.front();
        if (ej.contains("model") && !ej["model"].is_null()) {
          auto it = by_alias.find(ej.value("model", std::string()));
          if (it == by_alias.end()) throw ValidationError(where + ".model", "unknown model");
          owner = nullptr;
          for (auto& m : sub.models)
            if (m.model == it->second) owner = &m;
          if (!owner) throw ValidationError(where + ".model", "model is not part of the submission");
        }
        e.model = owner->model;
        owner->events.push_back(std::move(e));
      }
    }
    for (auto& m : sub.models) {
      const bool has_submit = std::any_of(m.events.begin(), m.events.end(), [](const ActionEvent& e) {
        return e.kind == ActionKind::submit;
      });
      if (!has_submit) {
        ActionEvent e;
        e.timestamp = now - state_.created_at;
        e.user_id = user;
        e.document_index = sub.doc;
        e.model = m.model;
        e.kind = ActionKind::submit;
        m.events.push_back(std::move(e));
      }
    }
    return sub;
  }

  /// Runs every rule attached to the submitted models. Rules comparing
  /// against a model that is not part of the submission are not evaluated.
  void evaluate_rules(const Submission& sub, Json& outcomes, Json& warnings, Json& skipped,
                      Json& failed) const {
    const Document& doc = state_.def.documents[sub.doc];
    for (const auto& m : sub.models) {
      for (std::size_t si = 0; si < doc.segments.size(); ++si) {
        const auto* rules = doc.segments[si].rules_for(m.model);
        if (!rules) continue;
        RuleSubmission rs;
        rs.score = m.segments[si].score;
        rs.spans = m.segments[si].spans;
        for (const auto& other : sub.models)
          if (other.model != m.model) rs.comparator_scores[other.model] = other.segments[si].score;
        for (std::size_t ri = 0; ri < rules->size(); ++ri) {
          const ValidationRule& rule = (*rules)[ri];
          if (rule.score_greaterthan && !rs.comparator_scores.count(*rule.score_greaterthan))
            continue;
          const RuleOutcome o = evaluate_rule(rule, rs);
          Json oj;
          oj["model"] = m.model;
          oj["segment_index"] = si;
          oj["rule_index"] = ri;
          oj["passed"] = o.passed;
          oj["blocking"] = o.blocking;
          oj["failed_conditions"] = o.failed_conditions;
          if (o.blocking && !o.passed) {
            if (sub.skip_tutorial && rule.allow_skip) {
              oj["skipped"] = true;
              Json s;
              s["model"] = m.model;
              s["segment_index"] = si;
              s["rule_index"] = ri;
              skipped.push_back(std::move(s));
            } else {
              Json w;
              w["model"] = alias_for(state_, sub.doc, m.model);
              w["segment_index"] = si;
              w["warning"] = *o.warning;
              w["allow_skip"] = rule.allow_skip;
              warnings.push_back(std::move(w));
              failed.push_back(oj);
            }
          }
          outcomes.push_back(std::move(oj));
        }
      }
    }
  }

  mutable std::shared_mutex mutex_;
  CampaignState state_;
  std::optional<LogWriter> writer_;
  std::string memory_;
  Clock clock_;
  Hooks hooks_;
};

// ---------------------------------------------------------------------------

/// All campaigns of one data directory, one `<campaign_id>.log` each.
class Registry {
 public:
  struct Resolved {
    Campaign* campaign = nullptr;
    std::string user_id;
    Role role = Role::annotator;
  };

  enum class Access { read_write, read_only };

  explicit Registry(std::string data_dir, Campaign::Clock clock = system_clock_ms,
                    Access access = Access::read_write)
      : data_dir_(std::move(data_dir)), clock_(std::move(clock)), access_(access) {}

  const std::string& data_dir() const { return data_dir_; }

  std::string log_path(const std::string& campaign_id) const {
    return (std::filesystem::path(data_dir_) / (campaign_id + ".log")).string();
  }

  /// Replays every log in the data directory. Torn tails are cut and
  /// reported; any other damage throws Error(io) naming file and sequence.
  std::vector<std::string> load() { return scan(true); }

  /// Picks up logs created since the last scan (e.g. by `add` in another
  /// process). Logs still locked by their writer are skipped.
  std::vector<std::string> refresh() { return scan(false); }

  /// Parses, validates and persists a new campaign. Nothing is written when
  /// the file is invalid; an existing campaign id is a conflict.
  Campaign& add(std::string_view raw, CampaignOptions opts = {}) {
    return add(parse_campaign(raw), std::move(opts));
  }

  Campaign& add(const CampaignDefinition& def, CampaignOptions opts = {}) {
    std::unique_lock lock(mutex_);
    if (access_ == Access::read_only) throw Error(ErrorKind::state, "registry is read-only");
    if (campaigns_.count(def.campaign_id))
      throw Error(ErrorKind::conflict, "campaign '" + def.campaign_id + "' already exists");
    std::filesystem::create_directories(data_dir_);
    const std::string path = log_path(def.campaign_id);
    if (std::filesystem::exists(path))
      throw Error(ErrorKind::conflict, "campaign '" + def.campaign_id + "' already exists in " + data_dir_);
    LogWriter writer(path, LogWriter::Mode::create_new);
    std::set<std::string> taken;
    for (const auto& [token, r] : tokens_) taken.insert(token);
    if (!opts.clock) opts.clock = clock_;
    auto campaign = Campaign::create(def, std::move(writer), std::move(opts), taken);
    Campaign& ref = *campaign;
    index(ref);
    campaigns_.emplace(def.campaign_id, std::move(campaign));
    return ref;
  }

  std::optional<Resolved> resolve(std::string_view token) const {
    std::shared_lock lock(mutex_);
    auto it = tokens_.find(std::string(token));
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

  Campaign* find(const std::string& campaign_id) const {
    std::shared_lock lock(mutex_);
    auto it = campaigns_.find(campaign_id);
    return it == campaigns_.end() ? nullptr : it->second.get();
  }

  std::vector<Campaign*> campaigns() const {
    std::shared_lock lock(mutex_);
    std::vector<Campaign*> out;
    for (const auto& [id, c] : campaigns_) out.push_back(c.get());
    return out;
  }

 private:
  void index(const Campaign& c) {
    const CampaignLinks links = c.links("");
    for (const auto& l : links.annotators)
      tokens_[l.identity.token] = {const_cast<Campaign*>(&c), l.identity.user_id, Role::annotator};
    if (!links.manager.identity.token.empty())
      tokens_[links.manager.identity.token] = {const_cast<Campaign*>(&c),
                                               links.manager.identity.user_id, Role::manager};
  }

  std::vector<std::string> scan(bool strict) {
    std::unique_lock lock(mutex_);
    std::vector<std::string> warnings;
    namespace fs = std::filesystem;
    if (!fs::exists(data_dir_)) {
      if (strict) fs::create_directories(data_dir_);
      return warnings;
    }
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(data_dir_))
      if (entry.is_regular_file() && entry.path().extension() == ".log") logs.push_back(entry.path());
    std::sort(logs.begin(), logs.end());

    for (const auto& path : logs) {
      const std::string id = path.stem().string();
      if (campaigns_.count(id)) continue;
      std::optional<LogWriter> writer;
      if (access_ == Access::read_write) {
        try {
          writer.emplace(path.string(), LogWriter::Mode::open_existing);
        } catch (const Error&) {
          if (strict) throw;
          continue;
        }
      }
      LogContents log;
      try {
        log = read_log(read_file(path.string()));
      } catch (const Error& e) {
        throw Error(ErrorKind::io, path.string() + ": " + e.what());
      }
      for (const auto& w : log.warnings) warnings.push_back(path.string() + ": " + w);
      if (log.events.empty()) {
        warnings.push_back(path.string() + ": no intact records, ignored");
        continue;
      }
      if (log.events.front().campaign_id != id)
        throw Error(ErrorKind::io, path.string() + ": log belongs to campaign '" +
                                       log.events.front().campaign_id + "'");
      if (writer) writer->truncate(log.valid_bytes);
      std::unique_ptr<Campaign> c;
      try {
        c = Campaign::restore(log, std::move(writer), clock_);
      } catch (const Error& e) {
        throw Error(ErrorKind::io, path.string() + ": " + e.what());
      }
      index(*c);
      campaigns_.emplace(id, std::move(c));
    }
    return warnings;
  }

  std::string data_dir_;
  Campaign::Clock clock_;
  Access access_ = Access::read_write;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Campaign>> campaigns_;
  std::map<std::string, Resolved> tokens_;
};

}  // namespace annodesk
