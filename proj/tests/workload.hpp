#pragma once

// Randomized campaign driver: annotators fetch items and submit (sometimes
// failing tutorials, skipping them or re-doing earlier work) while a
// manager reveals results and moves tasks around.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "annodesk/store.hpp"
#include "support.hpp"

namespace testing_support {

/// Task-based campaign with a skippable tutorial per task, comparisons and silent checks.
inline Json workload_task_campaign(const std::string& id, std::size_t tasks, std::size_t docs) {
  Json j = task_campaign(id, tasks, docs, {"A", "B"}, 2);
  for (auto& task : j["data"]) {
    for (std::size_t d = 0; d < task.size(); ++d) {
      Json& seg = task[d][0];
      if (d == 0) {
        seg["validation"]["A"] = Json::parse(
            R"([{"warning": "Score this between 60 and 90.", "score": [60, 90],
                 "error_spans": [{"start_i": [0, 3], "end_i": [4, 9], "severity": "minor"}],
                 "allow_skip": true}])");
      } else if (d % 4 == 1) {
        seg["validation"]["A"] = Json::parse(R"([{"warning": "A is weak here.", "score": [10, 40]}])");
        seg["validation"]["B"] = Json::parse(
            R"([{"warning": "B beats A.", "score": [50, 100], "score_greaterthan": "A"}])");
      } else if (d % 4 == 2) {
        seg["validation"]["B"] = Json::parse(R"([{"score": [0, 50]}])");
      }
    }
  }
  return j;
}

/// Pooled campaign (single-stream or dynamic) with silent checks.
inline Json workload_pooled_campaign(const std::string& id, const std::string& assignment,
                                     std::size_t users, std::size_t docs) {
  Json j = pooled_campaign(id, assignment, users, docs, {"A", "B", "C"}, 1);
  for (std::size_t d = 0; d < docs; d += 3) j["data"][d][0]["validation"]["C"] = Json::parse(R"([{"score": [0, 60]}])");
  if (assignment == "dynamic") {
    j["info"]["dynamic_first"] = 2;
    j["info"]["dynamic_backoff"] = 0.2;
  }
  return j;
}

class Workload {
 public:
  Workload(annodesk::Campaign& campaign, std::uint64_t seed) : c_(campaign), rng_(seed) {
    const annodesk::CampaignState s = c_.snapshot();
    for (const auto& u : s.annotators) users_.push_back(u.user_id);
    manager_ = s.manager->user_id;
    def_ = s.def;
    created_at_ = s.created_at;
  }

  /// One random action; returns false once every annotator is done.
  bool step() {
    const double r = uniform();
    if (r < 0.03) {
      c_.reveal(manager_);
      return true;
    }
    if (r < 0.14) {
      const annodesk::CampaignState s = c_.snapshot();
      if (r < 0.06 && def_.task_based() && users_.size() >= 2) {
        redistribute(s);
        return true;
      }
      if (redo(s)) return true;
    }
    return annotate();
  }

  std::size_t finished_users() const { return finished_.size(); }
  const std::vector<std::string>& users() const { return users_; }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0, 1)(rng_); }
  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  bool annotate() {
    std::vector<std::string> active;
    for (const auto& u : users_)
      if (!finished_.count(u)) active.push_back(u);
    if (active.empty()) return false;
    const std::string user = active[below(active.size())];
    const Json item = c_.next_item(user);
    if (item["status"] == "complete") {
      finished_.insert(user);
      return true;
    }
    if (uniform() < 0.1) return true;  // looked at it, did not submit yet
    submit(user, item, false);
    return true;
  }

  bool redo(const annodesk::CampaignState& s) {
    std::vector<std::pair<std::string, std::size_t>> done;
    for (const auto& [key, scores] : s.assignment.completed) done.emplace_back(std::get<2>(key), std::get<0>(key));
    if (done.empty()) return false;
    const auto& [user, doc] = done[below(done.size())];
    submit(user, c_.redo_item(user, doc), true);
    return true;
  }

  void redistribute(const annodesk::CampaignState& s) {
    const std::string from = users_[below(users_.size())];
    std::string to = users_[below(users_.size())];
    if (to == from) to = users_[(std::find(users_.begin(), users_.end(), from) - users_.begin() + 1) % users_.size()];
    const auto& task = s.assignment.tasks.at(from);
    const std::size_t cursor = s.assignment.task_cursors.at(from);
    const std::size_t first = std::min(task.size(), cursor + 1);
    const std::size_t last = std::min(task.size(), first + below(3));
    c_.redistribute(manager_, from, to, first, last);
    if (first < last) finished_.erase(to);
  }

  /// Scores that satisfy the document's rules (or deliberately random ones).
  void submit(const std::string& user, const Json& item, bool redo) {
    const std::size_t doc = item["document_index"].get<std::size_t>();
    const annodesk::Document& d = def_.documents[doc];
    const bool comply = uniform() < 0.75;
    Json body;
    body["document_index"] = doc;
    if (redo) body["redo"] = true;
    if (uniform() < 0.2) body["skip_tutorial"] = true;
    if (uniform() < 0.3) body["comment"] = "looks fine";
    Json models = Json::object();
    for (const auto& alias : item["models"]) {
      std::string model;
      for (const auto& m : d.model_ids())
        if (c_.alias(doc, m) == alias.get<std::string>()) model = m;
      Json segments = Json::array();
      for (std::size_t si = 0; si < d.segments.size(); ++si) {
        Json seg;
        double score = static_cast<double>(below(101));
        Json spans = Json::array();
        const auto* rules = d.segments[si].rules_for(model);
        if (comply && rules) {
          for (const auto& rule : *rules) {
            if (rule.score) score = (rule.score->min + rule.score->max) / 2;
            if (rule.error_spans)
              for (const auto& e : *rule.error_spans) {
                Json sp;
                sp["start_i"] = e.start_range.lo;
                sp["end_i"] = std::max(e.end_range.lo, e.start_range.lo);
                sp["severity"] = annodesk::to_string(e.severity);
                spans.push_back(sp);
              }
          }
        }
        const auto length = annodesk::text::scalar_length(d.segments[si].target(model)->value);
        if (uniform() < 0.4) {
          const std::size_t a = below(length);
          Json sp;
          sp["start_i"] = a;
          sp["end_i"] = a + below(length - a);
          sp["severity"] = uniform() < 0.5 ? "minor" : "major";
          spans.push_back(sp);
        }
        seg["score"] = score;
        seg["error_spans"] = spans;
        if (uniform() < 0.1) seg["missing"] = true;
        segments.push_back(seg);
      }
      models[alias.get<std::string>()]["segments"] = segments;
      if (uniform() < 0.3) {
        Json ev;
        ev["timestamp"] = created_at_ + 500;
        ev["kind"] = "score_set";
        ev["segment_index"] = 0;
        ev["model"] = alias;
        ev["payload"] = {{"score", 42}};
        body["events"].push_back(ev);
      }
    }
    body["models"] = models;
    c_.submit(user, body);
  }

  annodesk::Campaign& c_;
  std::mt19937_64 rng_;
  std::vector<std::string> users_;
  std::string manager_;
  annodesk::CampaignDefinition def_;
  std::int64_t created_at_ = 0;
  std::set<std::string> finished_;
};

}  // namespace testing_support
