#pragma once

// Model ranking with significance lines, inter-annotator agreement and
// per-user progress diagnostics.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "annodesk/assignment.hpp"
#include "annodesk/quality.hpp"
#include "annodesk/records.hpp"
#include "annodesk/stats.hpp"

namespace annodesk {

inline constexpr double kDefaultAlpha = 0.05;

inline constexpr const char* kDynamicBiasDisclaimer =
    "Items were assigned dynamically, so stronger models received more annotations. "
    "The t-tests shown assume randomized assignment; export the data and correct for the "
    "sampling bias (for example with inverse propensity weighting) before reporting.";

struct RankingRow {
  std::string model;
  double mean = 0;
  std::size_t n = 0;

  bool operator==(const RankingRow&) const = default;
};

struct RankingReport {
  std::vector<RankingRow> rows;  // descending by mean
  /// Index i means rows[i] and rows[i + 1] are significantly different.
  std::vector<std::size_t> separations;
  /// Two-sided p-values indexed like `rows`; nullopt when fewer than two
  /// shared items make the test indeterminate.
  std::vector<std::vector<std::optional<double>>> pairwise_p;
  double alpha = kDefaultAlpha;
  Assignment assignment = Assignment::single_stream;
  bool bias_disclaimer = false;

  bool operator==(const RankingReport&) const = default;
};

namespace detail {

/// (user, document, segment) -> score, per model. Superseded records are skipped.
using PairKey = std::tuple<std::string, std::size_t, std::size_t>;

inline std::map<std::string, std::map<PairKey, double>> scores_by_model(
    const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::map<PairKey, double>> out;
  for (const auto& r : records) {
    if (r.superseded_by) continue;
    auto& m = out[r.model];
    for (std::size_t s = 0; s < r.segments.size(); ++s)
      m[{r.user_id, r.document_index, s}] = r.segments[s].score;
  }
  return out;
}

}  // namespace detail

/// Means over all segment scores; pairwise two-sided paired t-tests over the
/// segments both models received from the same annotator; a separation
/// between adjacent rows when p < alpha.
inline RankingReport build_ranking(const std::vector<AnnotationRecord>& records,
                                   double alpha = kDefaultAlpha,
                                   Assignment assignment = Assignment::single_stream) {
  RankingReport report;
  report.alpha = alpha;
  report.assignment = assignment;
  report.bias_disclaimer = assignment == Assignment::dynamic;

  const auto by_model = detail::scores_by_model(records);
  for (const auto& [model, scores] : by_model) {
    if (scores.empty()) continue;
    std::vector<double> v;
    for (const auto& [k, s] : scores) v.push_back(s);
    std::sort(v.begin(), v.end());
    double sum = 0;
    for (double x : v) sum += x;
    report.rows.push_back({model, sum / static_cast<double>(v.size()), v.size()});
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const RankingRow& a, const RankingRow& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.model < b.model;
  });

  const std::size_t k = report.rows.size();
  report.pairwise_p.assign(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i) {
    report.pairwise_p[i][i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      const auto& a = by_model.at(report.rows[i].model);
      const auto& b = by_model.at(report.rows[j].model);
      std::vector<double> xs, ys;
      for (const auto& [key, score] : a) {
        auto it = b.find(key);
        if (it == b.end()) continue;
        xs.push_back(score);
        ys.push_back(it->second);
      }
      if (xs.size() < 2) continue;
      const double p = stats::paired_t_test(xs, ys).p;
      report.pairwise_p[i][j] = p;
      report.pairwise_p[j][i] = p;
    }
  }
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const auto& p = report.pairwise_p[i][i + 1];
    if (p && *p < alpha) report.separations.push_back(i);
  }
  return report;
}

inline Json to_json(const RankingReport& r) {
  Json j;
  j["alpha"] = r.alpha;
  j["assignment"] = to_string(r.assignment);
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json x;
    x["model"] = row.model;
    x["mean"] = row.mean;
    x["n"] = row.n;
    rows.push_back(std::move(x));
  }
  j["rows"] = std::move(rows);
  j["separations"] = r.separations;
  Json p = Json::array();
  for (const auto& line : r.pairwise_p) {
    Json l = Json::array();
    for (const auto& v : line) l.push_back(v ? Json(*v) : Json(nullptr));
    p.push_back(std::move(l));
  }
  j["pairwise_p"] = std::move(p);
  j["bias_disclaimer"] = r.bias_disclaimer;
  if (r.bias_disclaimer) j["bias_disclaimer_text"] = kDynamicBiasDisclaimer;
  return j;
}

// ---------------------------------------------------------------------------
// Inter-annotator agreement

struct IaaReport {
  std::optional<double> global;    // Pearson over all shared segment scores
  std::optional<double> by_model;  // mean of per-model Pearson
  std::optional<double> by_item;   // mean of per-document Kendall tau-b across models

  bool operator==(const IaaReport&) const = default;
};

namespace detail {

using SegmentKey = std::tuple<std::size_t, std::string, std::size_t>;  // doc, model, segment

inline std::map<std::string, std::map<SegmentKey, double>> scores_by_user(
    const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::map<SegmentKey, double>> out;
  for (const auto& r : records) {
    if (r.superseded_by) continue;
    for (std::size_t s = 0; s < r.segments.size(); ++s)
      out[r.user_id][{r.document_index, r.model, s}] = r.segments[s].score;
  }
  return out;
}

template <typename F>
std::optional<double> guarded(F&& f) {
  try {
    return f();
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline IaaReport pair_agreement(const std::map<SegmentKey, double>& a,
                                const std::map<SegmentKey, double>& b) {
  std::vector<double> xs, ys;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_model;
  // doc -> model -> (sum a, sum b, count)
  std::map<std::size_t, std::map<std::string, std::tuple<double, double, std::size_t>>> per_doc;
  for (const auto& [key, sa] : a) {
    auto it = b.find(key);
    if (it == b.end()) continue;
    const double sb = it->second;
    xs.push_back(sa);
    ys.push_back(sb);
    auto& pm = per_model[std::get<1>(key)];
    pm.first.push_back(sa);
    pm.second.push_back(sb);
    auto& cell = per_doc[std::get<0>(key)][std::get<1>(key)];
    std::get<0>(cell) += sa;
    std::get<1>(cell) += sb;
    std::get<2>(cell) += 1;
  }

  IaaReport out;
  out.global = guarded([&] { return stats::pearson(xs, ys); });

  std::vector<double> model_values;
  for (const auto& [model, v] : per_model)
    if (auto r = guarded([&] { return stats::pearson(v.first, v.second); })) model_values.push_back(*r);
  out.by_model = mean_of(model_values);

  std::vector<double> item_values;
  for (const auto& [doc, models] : per_doc) {
    std::vector<double> da, db;
    for (const auto& [model, cell] : models) {
      const double n = static_cast<double>(std::get<2>(cell));
      da.push_back(std::get<0>(cell) / n);
      db.push_back(std::get<1>(cell) / n);
    }
    if (auto t = guarded([&] { return stats::kendall_tau_b(da, db); })) item_values.push_back(*t);
  }
  out.by_item = mean_of(item_values);
  return out;
}

}  // namespace detail

/// Agreement averaged over annotator pairs. With no explicit pairs every
/// pair of annotators present in `records` is used. Components that no pair
/// can determine stay nullopt.
inline IaaReport iaa_report(const std::vector<AnnotationRecord>& records,
                            std::vector<std::pair<std::string, std::string>> pairs = {}) {
  const auto by_user = detail::scores_by_user(records);
  if (pairs.empty()) {
    for (auto i = by_user.begin(); i != by_user.end(); ++i)
      for (auto j = std::next(i); j != by_user.end(); ++j) pairs.emplace_back(i->first, j->first);
  }
  std::vector<double> g, m, it;
  static const std::map<detail::SegmentKey, double> kEmpty;
  for (const auto& [u, v] : pairs) {
    auto a = by_user.find(u);
    auto b = by_user.find(v);
    const auto r = detail::pair_agreement(a == by_user.end() ? kEmpty : a->second,
                                          b == by_user.end() ? kEmpty : b->second);
    if (r.global) g.push_back(*r.global);
    if (r.by_model) m.push_back(*r.by_model);
    if (r.by_item) it.push_back(*r.by_item);
  }
  return {detail::mean_of(g), detail::mean_of(m), detail::mean_of(it)};
}

inline Json to_json(const IaaReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json j;
  j["global"] = opt(r.global);
  j["by_model"] = opt(r.by_model);
  j["by_item"] = opt(r.by_item);
  return j;
}

// ---------------------------------------------------------------------------
// Progress

struct UserProgress {
  std::string user_id;
  std::size_t done = 0;
  std::size_t total = 0;
  std::optional<double> mean_seconds_per_item;
  std::optional<double> attention_pass_rate;
  UserQuality quality;

  bool operator==(const UserProgress&) const = default;
};

/// `submit_times` holds each user's submission timestamps in ms. Time per
/// item is the mean gap between consecutive submissions.
inline std::vector<UserProgress> progress_report(
    const CampaignDefinition& def, const AssignmentState& state, const QualityLedger& ledger,
    const std::vector<std::string>& users,
    const std::map<std::string, std::vector<std::int64_t>>& submit_times) {
  std::vector<UserProgress> out;
  for (const auto& user : users) {
    UserProgress p;
    p.user_id = user;
    std::tie(p.done, p.total) = user_progress(def, state, user);
    auto it = submit_times.find(user);
    if (it != submit_times.end() && it->second.size() >= 2) {
      std::vector<std::int64_t> t = it->second;
      std::sort(t.begin(), t.end());
      p.mean_seconds_per_item =
          static_cast<double>(t.back() - t.front()) / 1000.0 / static_cast<double>(t.size() - 1);
    }
    p.attention_pass_rate = ledger.pass_rate(user);
    p.quality = ledger.of(user);
    out.push_back(std::move(p));
  }
  return out;
}

inline Json to_json(const UserProgress& p) {
  Json j;
  j["user_id"] = p.user_id;
  j["done"] = p.done;
  j["total"] = p.total;
  j["seconds_per_item"] = p.mean_seconds_per_item ? Json(*p.mean_seconds_per_item) : Json(nullptr);
  j["attention_pass_rate"] = p.attention_pass_rate ? Json(*p.attention_pass_rate) : Json(nullptr);
  j["attention_checks_seen"] = p.quality.checks_seen;
  j["attention_checks_passed"] = p.quality.checks_passed;
  j["tutorial_attempts"] = p.quality.tutorial_attempts;
  j["tutorial_failures"] = p.quality.tutorial_failures;
  j["tutorial_skips"] = p.quality.tutorial_skips;
  return j;
}

}  // namespace annodesk
