#pragma once

// Per-campaign server state and the deterministic function that folds one
// log event into it. Replaying a log from the start reproduces the state.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annodesk/assignment.hpp"
#include "annodesk/campaign.hpp"
#include "annodesk/event_log.hpp"
#include "annodesk/identity.hpp"
#include "annodesk/quality.hpp"
#include "annodesk/records.hpp"

namespace annodesk {

struct CampaignState {
  CampaignDefinition def;
  std::string secret;  // hex; keys completion tokens and model aliases
  std::uint64_t seed = 0;
  std::int64_t created_at = 0;
  std::vector<UserIdentity> annotators;  // link order
  std::optional<UserIdentity> manager;
  AssignmentState assignment;
  QualityLedger ledger;
  std::vector<AnnotationRecord> records;  // submission order, superseded ones included
  std::vector<Json> rule_outcomes;
  std::vector<Json> audit;  // skips, redistributions, reveals
  std::map<std::string, std::vector<std::int64_t>> submit_times;
  std::uint64_t last_sequence = 0;

  std::vector<std::string> annotator_ids() const {
    std::vector<std::string> out;
    for (const auto& u : annotators) out.push_back(u.user_id);
    return out;
  }
};

namespace detail {

inline Json identity_json(const UserIdentity& u) {
  Json j;
  j["user_id"] = u.user_id;
  j["token"] = u.token;
  return j;
}

inline UserIdentity identity_from_json(const Json& j, Role role) {
  return {field<std::string>(j, "user_id"), field<std::string>(j, "token"), role};
}

inline Json audit_entry(const StoredEvent& e) {
  Json j;
  j["sequence"] = e.sequence;
  j["timestamp"] = e.timestamp;
  j["kind"] = to_string(e.kind);
  j["body"] = e.body;
  return j;
}

inline void record_outcomes(CampaignState& s, const StoredEvent& e, const Json& outcomes,
                            bool count) {
  const std::string user = field<std::string>(e.body, "user_id");
  for (const auto& o : outcomes) {
    Json entry;
    entry["sequence"] = e.sequence;
    entry["timestamp"] = e.timestamp;
    entry["user_id"] = user;
    entry["document_index"] = e.body.at("document_index");
    for (const auto& [k, v] : o.items()) entry[k] = v;
    entry["counted"] = count && !o.value("skipped", false);
    s.rule_outcomes.push_back(entry);
    if (!entry["counted"].get<bool>()) continue;
    RuleOutcome r;
    r.passed = field<bool>(o, "passed");
    r.blocking = field<bool>(o, "blocking");
    s.ledger.record(user, r);
  }
}

inline void apply_submission(CampaignState& s, const StoredEvent& e) {
  const std::string user = field<std::string>(e.body, "user_id");
  const auto doc = field<std::size_t>(e.body, "document_index");
  const bool redo = e.body.value("redo", false);

  std::vector<AnnotationRecord> incoming;
  std::vector<ModelScores> scores;
  for (const auto& rj : e.body.at("records")) {
    AnnotationRecord r = record_from_json(rj);
    r.sequence = e.sequence;
    r.submitted_at = e.timestamp;
    r.user_id = user;
    r.document_index = doc;
    r.superseded_by.reset();
    scores.push_back({r.model, r.scores()});
    incoming.push_back(std::move(r));
  }
  record_completion(s.def, s.assignment, user, doc, scores, redo);

  if (redo) {
    for (auto& old : s.records) {
      if (old.superseded_by || old.user_id != user || old.document_index != doc) continue;
      for (const auto& r : incoming)
        if (r.model == old.model) old.superseded_by = e.sequence;
    }
  } else {
    s.submit_times[user].push_back(e.timestamp);
  }
  for (auto& r : incoming) s.records.push_back(std::move(r));
  if (e.body.contains("rule_outcomes")) record_outcomes(s, e, e.body["rule_outcomes"], !redo);
}

}  // namespace detail

/// Folds one event into `s`. Throws Error(io) when the event cannot follow
/// the current state (wrong sequence, wrong campaign, inconsistent body).
inline void apply(CampaignState& s, const StoredEvent& e) {
  if (e.sequence != s.last_sequence + 1)
    throw Error(ErrorKind::io, "event sequence " + std::to_string(e.sequence) + " follows " +
                                   std::to_string(s.last_sequence));
  if (e.sequence > 1 && e.campaign_id != s.def.campaign_id)
    throw Error(ErrorKind::io, "event for campaign '" + e.campaign_id + "' in log of '" +
                                   s.def.campaign_id + "'");
  if ((e.sequence == 1) != (e.kind == EventKind::campaign_added))
    throw Error(ErrorKind::io, "campaign_added must be the first and only first event");

  try {
    switch (e.kind) {
      case EventKind::campaign_added: {
        s.def = parse_campaign(e.body.at("definition").dump());
        if (s.def.campaign_id != e.campaign_id)
          throw Error(ErrorKind::io, "campaign id mismatch in campaign_added");
        s.secret = detail::field<std::string>(e.body, "secret");
        s.seed = detail::field<std::uint64_t>(e.body, "seed");
        s.created_at = e.timestamp;
        s.ledger.threshold = s.def.info.attention_threshold;
        break;
      }
      case EventKind::links_generated: {
        if (!s.annotators.empty() || s.manager)
          throw Error(ErrorKind::io, "links generated twice");
        for (const auto& a : e.body.at("annotators"))
          s.annotators.push_back(detail::identity_from_json(a, Role::annotator));
        s.manager = detail::identity_from_json(e.body.at("manager"), Role::manager);
        s.assignment = initial_state(s.def, s.annotator_ids());
        break;
      }
      case EventKind::item_issued: {
        ItemRef item;
        item.document_index = detail::field<std::size_t>(e.body, "document_index");
        item.model_ids = detail::field<std::vector<std::string>>(e.body, "model_ids");
        const auto user = detail::field<std::string>(e.body, "user_id");
        detail::require_annotator(s.assignment, s.def, user);
        if (item.document_index >= s.def.documents.size())
          throw Error(ErrorKind::io, "issued document out of range");
        mark_issued(s.def, s.assignment, user, item,
                    detail::field<std::int64_t>(e.body, "issued_at"));
        break;
      }
      case EventKind::rule_outcome:
        detail::record_outcomes(s, e, e.body.at("outcomes"), true);
        break;
      case EventKind::tutorial_skip: {
        const auto user = detail::field<std::string>(e.body, "user_id");
        for (std::size_t i = 0; i < e.body.at("rules").size(); ++i) s.ledger.record_skip(user);
        s.audit.push_back(detail::audit_entry(e));
        break;
      }
      case EventKind::annotation_submitted:
        detail::apply_submission(s, e);
        break;
      case EventKind::tasks_redistributed:
        redistribute_tasks(s.def, s.assignment, detail::field<std::string>(e.body, "from_user"),
                           detail::field<std::string>(e.body, "to_user"),
                           detail::field<std::size_t>(e.body, "first"),
                           detail::field<std::size_t>(e.body, "last"));
        s.audit.push_back(detail::audit_entry(e));
        break;
      case EventKind::results_revealed:
        s.audit.push_back(detail::audit_entry(e));
        break;
    }
  } catch (const Error& err) {
    if (err.kind() == ErrorKind::io) throw;
    throw Error(ErrorKind::io, "cannot apply event " + std::to_string(e.sequence) + " (" +
                                   to_string(e.kind) + "): " + err.what());
  } catch (const nlohmann::json::exception& err) {
    throw Error(ErrorKind::io, "malformed body in event " + std::to_string(e.sequence) + ": " +
                                   err.what());
  }
  s.last_sequence = e.sequence;
}

inline CampaignState replay(const std::vector<StoredEvent>& events) {
  CampaignState s;
  for (const auto& e : events) apply(s, e);
  return s;
}

// ---------------------------------------------------------------------------
// Exports

/// Annotation export: live records, superseded history, rule outcomes and
/// the audit trail, in a fixed key order.
inline Json export_annotations(const CampaignState& s) {
  Json j;
  j["format"] = "annodesk-export/1";
  j["campaign_id"] = s.def.campaign_id;
  j["assignment"] = to_string(s.def.info.assignment);
  j["protocol"] = to_string(s.def.info.protocol);
  j["models"] = s.def.model_ids();
  Json live = Json::array();
  Json superseded = Json::array();
  for (const auto& r : s.records) (r.superseded_by ? superseded : live).push_back(to_json(r));
  j["records"] = std::move(live);
  j["superseded"] = std::move(superseded);
  j["rule_outcomes"] = s.rule_outcomes;
  j["audit"] = s.audit;
  return j;
}

/// Everything replay reconstructs, for equality checks between a live
/// server and a replayed one.
inline Json export_state(const CampaignState& s) {
  Json j;
  j["definition"] = to_json(s.def);
  j["secret"] = s.secret;
  j["seed"] = s.seed;
  j["created_at"] = s.created_at;
  Json annotators = Json::array();
  for (const auto& u : s.annotators) annotators.push_back(detail::identity_json(u));
  j["annotators"] = std::move(annotators);
  j["manager"] = s.manager ? detail::identity_json(*s.manager) : Json(nullptr);

  const AssignmentState& a = s.assignment;
  Json as;
  Json completed = Json::array();
  for (const auto& [k, v] : a.completed)
    completed.push_back(Json::array({std::get<0>(k), std::get<1>(k), std::get<2>(k), v}));
  as["completed"] = std::move(completed);
  Json in_flight = Json::array();
  for (const auto& [k, t] : a.in_flight)
    in_flight.push_back(Json::array({std::get<0>(k), std::get<1>(k), std::get<2>(k), t}));
  as["in_flight"] = std::move(in_flight);
  Json stats = Json::object();
  for (const auto& [m, st] : a.per_model_stats)
    stats[m] = Json::array({st.n, st.sum, st.documents});
  as["per_model_stats"] = std::move(stats);
  Json tasks = Json::object();
  for (const auto& [u, t] : a.tasks) tasks[u] = t;
  as["tasks"] = std::move(tasks);
  Json cursors = Json::object();
  for (const auto& [u, c] : a.task_cursors) cursors[u] = c;
  as["task_cursors"] = std::move(cursors);
  as["annotators"] = Json(std::vector<std::string>(a.annotators.begin(), a.annotators.end()));
  j["assignment"] = std::move(as);

  Json ledger;
  ledger["threshold"] = s.ledger.threshold;
  Json users = Json::object();
  for (const auto& [u, q] : s.ledger.users)
    users[u] = Json::array({q.checks_seen, q.checks_passed, q.tutorial_attempts,
                            q.tutorial_failures, q.tutorial_skips});
  ledger["users"] = std::move(users);
  j["ledger"] = std::move(ledger);

  j["export"] = export_annotations(s);
  Json times = Json::object();
  for (const auto& [u, t] : s.submit_times) times[u] = t;
  j["submit_times"] = std::move(times);
  j["last_sequence"] = s.last_sequence;
  return j;
}

}  // namespace annodesk
