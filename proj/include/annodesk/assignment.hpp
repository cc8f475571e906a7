#pragma once

// Item assignment: task-based, single-stream and dynamic (epsilon-greedy)
// strategies over an AssignmentState. Decisions are pure functions of
// (definition, state, params, rng); issuing and completion mutate the state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "annodesk/campaign.hpp"
#include "annodesk/errors.hpp"

namespace annodesk {

using Rng = std::mt19937_64;

/// In-flight items older than this return to the pool.
inline constexpr std::int64_t kInFlightTimeoutMs = 30LL * 60LL * 1000LL;

/// (document, model, user)
using CompletionKey = std::tuple<std::size_t, std::string, std::string>;

struct ModelStats {
  std::size_t n = 0;          // segment scores
  double sum = 0;             // of segment scores
  std::size_t documents = 0;  // completed (document, model) evaluations

  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
  bool operator==(const ModelStats&) const = default;
};

struct AssignmentState {
  std::map<CompletionKey, std::vector<double>> completed;
  std::map<CompletionKey, std::int64_t> in_flight;  // -> issued-at, ms
  std::map<std::string, ModelStats> per_model_stats;
  /// Task-based: each annotator's ordered document list (global indices).
  std::map<std::string, std::vector<std::size_t>> tasks;
  std::map<std::string, std::size_t> task_cursors;
  /// Pooled modes: annotators allowed to draw from the pool.
  std::set<std::string> annotators;

  bool operator==(const AssignmentState&) const = default;
};

struct ItemRef {
  std::size_t document_index = 0;
  std::vector<std::string> model_ids;  // display order
  std::pair<std::size_t, std::size_t> progress{0, 0};

  bool operator==(const ItemRef&) const = default;
};

struct CampaignComplete {
  std::pair<std::size_t, std::size_t> progress{0, 0};
  bool operator==(const CampaignComplete&) const = default;
};

using NextItem = std::variant<ItemRef, CampaignComplete>;

struct DynamicParams {
  std::size_t top = 2;
  std::size_t first = 5;
  double backoff = 0.0;
  std::size_t width = 1;  // models shown together; >= 2 means contrastive

  static DynamicParams from(const CampaignInfo& info) {
    return {info.dynamic_top, info.dynamic_first, info.dynamic_backoff,
            info.dynamic_contrastive_models};
  }
};

/// Sets up an empty state for a campaign and its annotators (in link order).
inline AssignmentState initial_state(const CampaignDefinition& def,
                                     const std::vector<std::string>& annotator_ids) {
  AssignmentState state;
  for (const auto& m : def.model_ids()) state.per_model_stats[m];
  if (def.task_based()) {
    for (std::size_t i = 0; i < annotator_ids.size() && i < def.tasks.size(); ++i) {
      state.tasks[annotator_ids[i]] = def.tasks[i];
      state.task_cursors[annotator_ids[i]] = 0;
    }
  } else {
    state.annotators.insert(annotator_ids.begin(), annotator_ids.end());
  }
  return state;
}

namespace detail {

inline bool unit_completed(const AssignmentState& s, std::size_t doc, const std::string& model) {
  auto it = s.completed.lower_bound({doc, model, std::string()});
  return it != s.completed.end() && std::get<0>(it->first) == doc && std::get<1>(it->first) == model;
}

inline bool unit_busy(const AssignmentState& s, std::size_t doc, const std::string& model,
                      std::int64_t now) {
  for (auto it = s.in_flight.lower_bound({doc, model, std::string()});
       it != s.in_flight.end() && std::get<0>(it->first) == doc && std::get<1>(it->first) == model;
       ++it) {
    if (now - it->second < kInFlightTimeoutMs) return true;
  }
  return false;
}

inline bool unit_available(const AssignmentState& s, std::size_t doc, const std::string& model,
                           std::int64_t now) {
  return !unit_completed(s, doc, model) && !unit_busy(s, doc, model, now);
}

inline void require_annotator(const AssignmentState& s, const CampaignDefinition& def,
                              const std::string& user) {
  const bool known = def.task_based() ? s.tasks.count(user) > 0 : s.annotators.count(user) > 0;
  if (!known) throw Error(ErrorKind::authorization, "unknown annotator");
}

inline std::uint64_t display_seed(std::size_t doc, const std::string& user) {
  return text::fnv1a(user, 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(doc));
}

/// Display order: the (optionally shuffled) document order filtered to `selected`.
inline std::vector<std::string> display_order(const CampaignDefinition& def, std::size_t doc,
                                              const std::vector<std::string>& selected,
                                              const std::string& user) {
  std::vector<std::string> order =
      shuffle_model_order(def.documents[doc], display_seed(doc, user), def.info.shuffle);
  std::vector<std::string> out;
  for (const auto& m : order)
    if (std::find(selected.begin(), selected.end(), m) != selected.end()) out.push_back(m);
  return out;
}

template <typename T>
const T& pick_uniform(const std::vector<T>& xs, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, xs.size() - 1);
  return xs[d(rng)];
}

/// Models the user currently holds (issued, not yet submitted), grouped per document.
inline std::optional<std::pair<std::size_t, std::vector<std::string>>> held_item(
    const AssignmentState& s, const std::string& user) {
  std::optional<std::pair<std::size_t, std::vector<std::string>>> held;
  for (const auto& [key, issued] : s.in_flight) {
    const auto& [doc, model, holder] = key;
    if (holder != user) continue;
    if (unit_completed(s, doc, model)) continue;
    if (!held) {
      held.emplace(doc, std::vector<std::string>{model});
    } else if (held->first == doc) {
      held->second.push_back(model);
    }
  }
  return held;
}

/// Oldest in-flight (document, models) held by someone else and not yet
/// completed by anyone; this is what pooled modes hand out as a double annotation.
inline std::optional<std::pair<std::size_t, std::vector<std::string>>> stalest_in_flight(
    const AssignmentState& s, const std::string& user) {
  std::optional<std::tuple<std::int64_t, std::size_t, std::string>> best;
  for (const auto& [key, issued] : s.in_flight) {
    const auto& [doc, model, holder] = key;
    if (holder == user || unit_completed(s, doc, model)) continue;
    if (s.completed.count({doc, model, user})) continue;
    auto candidate = std::make_tuple(issued, doc, holder);
    if (!best || candidate < *best) best = candidate;
  }
  if (!best) return std::nullopt;
  const auto& [issued, doc, holder] = *best;
  std::vector<std::string> models;
  for (const auto& [key, t] : s.in_flight) {
    if (std::get<0>(key) == doc && std::get<2>(key) == holder && t == issued &&
        !unit_completed(s, doc, std::get<1>(key)))
      models.push_back(std::get<1>(key));
  }
  return std::make_pair(doc, models);
}

inline std::size_t total_units(const CampaignDefinition& def) {
  std::size_t n = 0;
  for (const auto& d : def.documents)
    if (!d.segments.empty()) n += d.segments.front().tgt.size();
  return n;
}

}  // namespace detail

/// (items done, items total) for one annotator.
inline std::pair<std::size_t, std::size_t> user_progress(const CampaignDefinition& def,
                                                         const AssignmentState& s,
                                                         const std::string& user) {
  switch (def.info.assignment) {
    case Assignment::task_based: {
      auto t = s.tasks.find(user);
      if (t == s.tasks.end()) return {0, 0};
      auto c = s.task_cursors.find(user);
      return {c == s.task_cursors.end() ? 0 : c->second, t->second.size()};
    }
    case Assignment::single_stream: {
      std::set<std::size_t> docs;
      for (const auto& [key, scores] : s.completed)
        if (std::get<2>(key) == user) docs.insert(std::get<0>(key));
      return {docs.size(), def.documents.size()};
    }
    case Assignment::dynamic: {
      std::size_t done = 0;
      for (const auto& [key, scores] : s.completed)
        if (std::get<2>(key) == user) ++done;
      return {done, detail::total_units(def)};
    }
  }
  return {0, 0};
}

/// Completed and total (document, model) units across the whole campaign.
inline std::pair<std::size_t, std::size_t> campaign_progress(const CampaignDefinition& def,
                                                             const AssignmentState& s) {
  std::set<std::pair<std::size_t, std::string>> done;
  for (const auto& [key, scores] : s.completed) done.emplace(std::get<0>(key), std::get<1>(key));
  return {done.size(), detail::total_units(def)};
}

// ---------------------------------------------------------------------------
// Decisions (pure)

inline NextItem decide_task_based(const CampaignDefinition& def, const AssignmentState& s,
                                  const std::string& user) {
  detail::require_annotator(s, def, user);
  const auto& task = s.tasks.at(user);
  const std::size_t cursor = s.task_cursors.count(user) ? s.task_cursors.at(user) : 0;
  if (cursor >= task.size()) return CampaignComplete{{cursor, task.size()}};
  const std::size_t doc = task[cursor];
  ItemRef ref;
  ref.document_index = doc;
  ref.model_ids = detail::display_order(def, doc, def.documents[doc].model_ids(), user);
  ref.progress = {cursor, task.size()};
  return ref;
}

inline NextItem decide_single_stream(const CampaignDefinition& def, const AssignmentState& s,
                                     const std::string& user, std::int64_t now, Rng& rng) {
  detail::require_annotator(s, def, user);
  const auto progress = user_progress(def, s, user);
  auto make = [&](std::size_t doc, const std::vector<std::string>& models) {
    return ItemRef{doc, detail::display_order(def, doc, models, user), progress};
  };

  if (auto held = detail::held_item(s, user)) return make(held->first, held->second);

  std::vector<std::size_t> pool;
  for (std::size_t d = 0; d < def.documents.size(); ++d) {
    bool available = true;
    for (const auto& m : def.documents[d].model_ids())
      available = available && detail::unit_available(s, d, m, now);
    if (available) pool.push_back(d);
  }
  if (!pool.empty()) {
    const std::size_t doc = detail::pick_uniform(pool, rng);
    return make(doc, def.documents[doc].model_ids());
  }
  if (auto stale = detail::stalest_in_flight(s, user)) return make(stale->first, stale->second);
  return CampaignComplete{progress};
}

/// Models ranked by running mean, best first. Ties: fewer segment scores
/// first, then model id. Models without scores rank ahead of everything.
inline std::vector<std::string> rank_by_mean(const AssignmentState& s,
                                             std::vector<std::string> models) {
  auto stats = [&](const std::string& m) {
    auto it = s.per_model_stats.find(m);
    return it == s.per_model_stats.end() ? ModelStats{} : it->second;
  };
  std::sort(models.begin(), models.end(), [&](const std::string& a, const std::string& b) {
    const ModelStats sa = stats(a), sb = stats(b);
    const double ma = sa.n == 0 ? std::numeric_limits<double>::infinity() : sa.mean();
    const double mb = sb.n == 0 ? std::numeric_limits<double>::infinity() : sb.mean();
    if (ma != mb) return ma > mb;
    if (sa.n != sb.n) return sa.n < sb.n;
    return a < b;
  });
  return models;
}

/// Epsilon-greedy model choice among `candidates` (models that still have
/// unannotated documents). Warm-up first: any candidate with fewer than
/// `first` completed documents is chosen uniformly. Afterwards, with
/// probability `backoff` uniformly over all candidates, else uniformly over
/// the `top` best by running mean.
inline std::string select_dynamic_model(const AssignmentState& s, const DynamicParams& p,
                                        const std::vector<std::string>& candidates, Rng& rng) {
  std::vector<std::string> warmup;
  for (const auto& m : candidates) {
    auto it = s.per_model_stats.find(m);
    const std::size_t docs = it == s.per_model_stats.end() ? 0 : it->second.documents;
    if (docs < p.first) warmup.push_back(m);
  }
  if (!warmup.empty()) return detail::pick_uniform(warmup, rng);

  std::bernoulli_distribution explore(p.backoff);
  if (explore(rng)) return detail::pick_uniform(candidates, rng);
  std::vector<std::string> ranked = rank_by_mean(s, candidates);
  ranked.resize(std::min(p.top, ranked.size()));
  return detail::pick_uniform(ranked, rng);
}

/// The `width` models whose running means are mutually closest: among the
/// contiguous windows of the mean-ranked list, the one with the smallest
/// max - min (ties go to the higher-ranked window). Warm-up puts an
/// under-sampled model into the set; backoff draws a uniformly random window.
/// `feasible` may veto windows that have no document to show.
template <typename Feasible>
std::optional<std::vector<std::string>> dynamic_contrastive_select(
    const AssignmentState& s, const DynamicParams& p, const std::vector<std::string>& models,
    std::size_t width, Rng& rng, Feasible&& feasible) {
  if (width < 2 || width > models.size())
    throw Error(ErrorKind::configuration, "contrastive width must lie in [2, model count]");
  const std::vector<std::string> ranked = rank_by_mean(s, models);

  std::vector<std::vector<std::string>> windows;
  for (std::size_t i = 0; i + width <= ranked.size(); ++i) {
    std::vector<std::string> w(ranked.begin() + i, ranked.begin() + i + width);
    if (feasible(w)) windows.push_back(std::move(w));
  }
  if (windows.empty()) return std::nullopt;

  std::vector<std::vector<std::string>> warm;
  for (const auto& w : windows) {
    for (const auto& m : w) {
      auto it = s.per_model_stats.find(m);
      if (it == s.per_model_stats.end() || it->second.documents < p.first) {
        warm.push_back(w);
        break;
      }
    }
  }
  if (!warm.empty()) return detail::pick_uniform(warm, rng);

  std::bernoulli_distribution explore(p.backoff);
  if (explore(rng)) return detail::pick_uniform(windows, rng);

  auto mean_of = [&](const std::string& m) { return s.per_model_stats.at(m).mean(); };
  std::size_t best = 0;
  double best_spread = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& m : windows[i]) {
      hi = std::max(hi, mean_of(m));
      lo = std::min(lo, mean_of(m));
    }
    if (hi - lo < best_spread) {
      best_spread = hi - lo;
      best = i;
    }
  }
  return windows[best];
}

inline std::optional<std::vector<std::string>> dynamic_contrastive_select(
    const AssignmentState& s, const DynamicParams& p, const std::vector<std::string>& models,
    std::size_t width, Rng& rng) {
  return dynamic_contrastive_select(s, p, models, width, rng,
                                    [](const std::vector<std::string>&) { return true; });
}

inline NextItem decide_dynamic(const CampaignDefinition& def, const AssignmentState& s,
                               const DynamicParams& p, const std::string& user, std::int64_t now,
                               Rng& rng) {
  detail::require_annotator(s, def, user);
  const std::vector<std::string> models = def.model_ids();
  if (p.top > models.size() || p.width > models.size())
    throw Error(ErrorKind::configuration, "dynamic_top exceeds the number of models");
  const auto progress = user_progress(def, s, user);
  auto make = [&](std::size_t doc, const std::vector<std::string>& shown) {
    return ItemRef{doc, detail::display_order(def, doc, shown, user), progress};
  };

  if (auto held = detail::held_item(s, user)) return make(held->first, held->second);

  auto fits = [&](std::size_t d, const std::vector<std::string>& set) {
    for (const auto& m : set)
      if (!def.documents[d].has_model(m) || !detail::unit_available(s, d, m, now)) return false;
    return true;
  };
  auto docs_for = [&](const std::vector<std::string>& set) {
    std::vector<std::size_t> docs;
    for (std::size_t d = 0; d < def.documents.size(); ++d)
      if (fits(d, set)) docs.push_back(d);
    return docs;
  };
  auto any_for = [&](const std::vector<std::string>& set) {
    for (std::size_t d = 0; d < def.documents.size(); ++d)
      if (fits(d, set)) return true;
    return false;
  };

  if (p.width <= 1) {
    std::vector<std::string> candidates;
    for (const auto& m : models)
      if (any_for({m})) candidates.push_back(m);
    if (!candidates.empty()) {
      const std::string model = select_dynamic_model(s, p, candidates, rng);
      const auto docs = docs_for({model});
      return make(detail::pick_uniform(docs, rng), {model});
    }
  } else {
    auto chosen = dynamic_contrastive_select(
        s, p, models, p.width, rng,
        [&](const std::vector<std::string>& w) { return any_for(w); });
    if (chosen) {
      const auto docs = docs_for(*chosen);
      return make(detail::pick_uniform(docs, rng), *chosen);
    }
  }
  if (auto stale = detail::stalest_in_flight(s, user)) return make(stale->first, stale->second);
  return CampaignComplete{progress};
}

inline NextItem decide_next(const CampaignDefinition& def, const AssignmentState& s,
                            const std::string& user, std::int64_t now, Rng& rng) {
  switch (def.info.assignment) {
    case Assignment::task_based: return decide_task_based(def, s, user);
    case Assignment::single_stream: return decide_single_stream(def, s, user, now, rng);
    case Assignment::dynamic:
      return decide_dynamic(def, s, DynamicParams::from(def.info), user, now, rng);
  }
  return CampaignComplete{};
}

// ---------------------------------------------------------------------------
// Mutations

/// Marks an item in flight for `user`. Task-based items are not tracked in
/// flight; the cursor alone determines them.
inline void mark_issued(const CampaignDefinition& def, AssignmentState& s, const std::string& user,
                        const ItemRef& item, std::int64_t now) {
  if (def.task_based()) return;
  for (const auto& m : item.model_ids) {
    auto [it, inserted] = s.in_flight.try_emplace({item.document_index, m, user}, now);
    if (!inserted) it->second = std::max(it->second, now);
  }
}

inline NextItem task_based_next(const CampaignDefinition& def, AssignmentState& s,
                                const std::string& user) {
  return decide_task_based(def, s, user);
}

inline NextItem single_stream_next(const CampaignDefinition& def, AssignmentState& s,
                                   const std::string& user, std::int64_t now, Rng& rng) {
  NextItem next = decide_single_stream(def, s, user, now, rng);
  if (auto* item = std::get_if<ItemRef>(&next)) mark_issued(def, s, user, *item, now);
  return next;
}

inline NextItem dynamic_next(const CampaignDefinition& def, AssignmentState& s,
                             const DynamicParams& p, const std::string& user, std::int64_t now,
                             Rng& rng) {
  NextItem next = decide_dynamic(def, s, p, user, now, rng);
  if (auto* item = std::get_if<ItemRef>(&next)) mark_issued(def, s, user, *item, now);
  return next;
}

struct ModelScores {
  std::string model;
  std::vector<double> segment_scores;
};

/// Throws unless `record_completion` would accept the submission.
inline void check_completion(const CampaignDefinition& def, const AssignmentState& s,
                             const std::string& user, std::size_t doc,
                             const std::vector<ModelScores>& submission, bool redo = false) {
  detail::require_annotator(s, def, user);
  if (doc >= def.documents.size()) throw Error(ErrorKind::validation, "document index out of range");
  if (submission.empty()) throw Error(ErrorKind::validation, "empty submission");

  const Document& document = def.documents[doc];
  std::set<std::string> seen;
  for (const auto& ms : submission) {
    if (!document.has_model(ms.model))
      throw Error(ErrorKind::validation, "model is not part of the document");
    if (!seen.insert(ms.model).second) throw Error(ErrorKind::validation, "model submitted twice");
    if (ms.segment_scores.size() != document.segments.size())
      throw Error(ErrorKind::validation, "expected one score per segment");
    for (double v : ms.segment_scores)
      if (!(v >= 0 && v <= 100)) throw Error(ErrorKind::validation, "scores must lie in [0, 100]");
    const bool done = s.completed.count({doc, ms.model, user}) > 0;
    if (done && !redo) throw Error(ErrorKind::conflict, "document already submitted by this user");
    if (!done && redo) throw Error(ErrorKind::state, "nothing to redo for this document");
  }

  if (!redo) {
    if (def.task_based()) {
      const auto& task = s.tasks.at(user);
      auto c = s.task_cursors.find(user);
      const std::size_t cursor = c == s.task_cursors.end() ? 0 : c->second;
      if (cursor >= task.size() || task[cursor] != doc)
        throw Error(ErrorKind::state, "document is not the user's current task item");
      if (seen.size() != document.model_ids().size())
        throw Error(ErrorKind::validation, "every model of the document must be scored");
    } else {
      std::set<std::string> held;
      for (auto it = s.in_flight.begin(); it != s.in_flight.end(); ++it)
        if (std::get<0>(it->first) == doc && std::get<2>(it->first) == user)
          held.insert(std::get<1>(it->first));
      if (held.empty()) throw Error(ErrorKind::state, "document was not issued to this user");
      if (held != seen)
        throw Error(ErrorKind::validation, "submission must cover exactly the issued models");
    }
  }
}

/// Moves a submitted document into `completed` and updates the running
/// per-model statistics. With `redo` the user's earlier scores for the same
/// (document, model) are replaced; otherwise a repeat is a conflict. Throws
/// before touching the state when anything is invalid.
inline void record_completion(const CampaignDefinition& def, AssignmentState& s,
                              const std::string& user, std::size_t doc,
                              const std::vector<ModelScores>& submission, bool redo = false) {
  check_completion(def, s, user, doc, submission, redo);
  for (const auto& ms : submission) {
    ModelStats& st = s.per_model_stats[ms.model];
    auto& slot = s.completed[{doc, ms.model, user}];
    if (redo) {
      for (double v : slot) st.sum -= v;
      st.n -= slot.size();
      st.documents -= 1;
    }
    slot = ms.segment_scores;
    for (double v : slot) st.sum += v;
    st.n += slot.size();
    st.documents += 1;
    s.in_flight.erase({doc, ms.model, user});
  }
  if (def.task_based() && !redo) s.task_cursors[user] += 1;
}

/// Moves not-yet-completed documents at positions [first, last) of
/// `from_user`'s task to the tail of `to_user`'s task.
inline void redistribute_tasks(const CampaignDefinition& def, AssignmentState& s,
                               const std::string& from_user, const std::string& to_user,
                               std::size_t first, std::size_t last) {
  if (!def.task_based())
    throw Error(ErrorKind::unsupported_mode, "redistribution needs task-based assignment");
  if (!s.tasks.count(from_user) || !s.tasks.count(to_user))
    throw Error(ErrorKind::validation, "unknown annotator");
  if (from_user == to_user) throw Error(ErrorKind::validation, "from_user equals to_user");
  auto& from = s.tasks[from_user];
  const std::size_t cursor = s.task_cursors[from_user];
  if (first > last || last > from.size()) throw Error(ErrorKind::validation, "invalid document range");
  if (first < cursor) throw Error(ErrorKind::validation, "range contains completed documents");
  auto& to = s.tasks[to_user];
  to.insert(to.end(), from.begin() + static_cast<std::ptrdiff_t>(first),
            from.begin() + static_cast<std::ptrdiff_t>(last));
  from.erase(from.begin() + static_cast<std::ptrdiff_t>(first),
             from.begin() + static_cast<std::ptrdiff_t>(last));
}

}  // namespace annodesk
