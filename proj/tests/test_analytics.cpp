#include <gtest/gtest.h>

#include <algorithm>
#include <queue>
#include <random>

#include "annodesk/analytics.hpp"
#include "annodesk/capacity.hpp"
#include "support.hpp"

using namespace annodesk;
using namespace testing_support;

namespace {

AnnotationRecord rec(const std::string& user, std::size_t doc, const std::string& model,
                     std::vector<double> scores) {
  AnnotationRecord r;
  r.user_id = user;
  r.document_index = doc;
  r.model = model;
  for (double s : scores) r.segments.push_back(SegmentAnnotation{s, {}, {}, std::nullopt, false});
  return r;
}

/// Three models with the given true means, one annotator, `items` documents of one segment.
std::vector<AnnotationRecord> synthetic(const std::vector<double>& means, double sigma,
                                        std::size_t items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0, sigma);
  std::vector<AnnotationRecord> out;
  for (std::size_t d = 0; d < items; ++d)
    for (std::size_t m = 0; m < means.size(); ++m)
      out.push_back(rec("ann", d, model_name(m), {std::clamp(means[m] + noise(rng), 0.0, 100.0)}));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Ranking

TEST(Ranking, IdenticalScoresHaveNoSeparation) {
  std::vector<AnnotationRecord> rs;
  for (std::size_t d = 0; d < 10; ++d) {
    rs.push_back(rec("u", d, "A", {static_cast<double>(d * 7 % 100)}));
    rs.push_back(rec("u", d, "B", {static_cast<double>(d * 7 % 100)}));
  }
  const RankingReport r = build_ranking(rs);
  EXPECT_TRUE(r.separations.empty());
  ASSERT_TRUE(r.pairwise_p[0][1]);
  EXPECT_EQ(*r.pairwise_p[0][1], 1.0);
}

TEST(Ranking, AllHundredVersusAllZeroSeparates) {
  std::vector<AnnotationRecord> rs;
  std::vector<double> a, b;
  for (std::size_t d = 0; d < 10; ++d) {
    rs.push_back(rec("u", d, "A", {100}));
    rs.push_back(rec("u", d, "B", {0}));
    a.push_back(100);
    b.push_back(0);
  }
  const RankingReport r = build_ranking(rs);
  EXPECT_LT(paired_t_oracle(a, b).p, 0.05);
  EXPECT_EQ(r.rows[0].model, "A");
  EXPECT_EQ(r.separations, (std::vector<std::size_t>{0}));
}

TEST(Ranking, SyntheticThreeModelsOrderAndLines) {
  const RankingReport r = build_ranking(synthetic({95, 69, 33}, 5, 30, 42));
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].model, "modelA");
  EXPECT_EQ(r.rows[1].model, "modelB");
  EXPECT_EQ(r.rows[2].model, "modelC");
  EXPECT_EQ(r.separations, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.rows[0].n, 30u);
}

TEST(Ranking, TooFewSharedItemsIsIndeterminate) {
  std::vector<AnnotationRecord> rs{rec("u", 0, "A", {90}), rec("u", 0, "B", {10}), rec("v", 1, "C", {50})};
  const RankingReport r = build_ranking(rs);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_FALSE(r.pairwise_p[0][1]);
  EXPECT_TRUE(r.separations.empty());
  EXPECT_TRUE(to_json(r)["pairwise_p"][0][1].is_null());
}

TEST(Ranking, OnlySameAnnotatorPairsCount) {
  std::vector<AnnotationRecord> rs;
  for (std::size_t d = 0; d < 5; ++d) {
    rs.push_back(rec("u", d, "A", {90}));
    rs.push_back(rec("v", d, "B", {10}));
  }
  EXPECT_FALSE(build_ranking(rs).pairwise_p[0][1]);
}

TEST(Ranking, InvariantToRecordOrder) {
  auto rs = synthetic({80, 60, 40}, 15, 12, 3);
  const RankingReport base = build_ranking(rs);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    std::shuffle(rs.begin(), rs.end(), rng);
    EXPECT_EQ(build_ranking(rs), base);
  }
}

TEST(Ranking, SupersededRecordsAreIgnored) {
  std::vector<AnnotationRecord> rs{rec("u", 0, "A", {10}), rec("u", 0, "A", {90})};
  rs[0].superseded_by = 7;
  const RankingReport r = build_ranking(rs);
  EXPECT_DOUBLE_EQ(r.rows[0].mean, 90);
}

TEST(Ranking, DynamicCarriesBiasDisclaimer) {
  const RankingReport r = build_ranking({}, 0.05, Assignment::dynamic);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_TRUE(r.bias_disclaimer);
  EXPECT_TRUE(to_json(r).contains("bias_disclaimer_text"));
  EXPECT_FALSE(build_ranking({}).bias_disclaimer);
}

// ---------------------------------------------------------------------------
// Agreement

namespace {

/// Three documents, three models, two segments each.
std::vector<AnnotationRecord> annotator(const std::string& user, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> s(0, 100);
  std::vector<AnnotationRecord> out;
  for (std::size_t d = 0; d < 3; ++d)
    for (const char* m : {"A", "B", "C"}) {
      out.push_back(rec(user, d, m, {static_cast<double>(s(rng)), static_cast<double>(s(rng))}));
    }
  return out;
}

struct PairOracle {
  std::optional<double> global, by_model, by_item;
};

PairOracle pair_oracle(const std::vector<AnnotationRecord>& rs, const std::string& u, const std::string& v) {
  std::map<std::tuple<std::size_t, std::string, std::size_t>, double> a, b;
  for (const auto& r : rs)
    for (std::size_t s = 0; s < r.segments.size(); ++s) {
      if (r.user_id == u) a[{r.document_index, r.model, s}] = r.segments[s].score;
      if (r.user_id == v) b[{r.document_index, r.model, s}] = r.segments[s].score;
    }
  std::vector<double> xs, ys;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> pm;
  std::map<std::size_t, std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>> pd;
  for (const auto& [k, x] : a) {
    if (!b.count(k)) continue;
    xs.push_back(x);
    ys.push_back(b.at(k));
    pm[std::get<1>(k)].first.push_back(x);
    pm[std::get<1>(k)].second.push_back(b.at(k));
    pd[std::get<0>(k)][std::get<1>(k)].first.push_back(x);
    pd[std::get<0>(k)][std::get<1>(k)].second.push_back(b.at(k));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  PairOracle o;
  o.global = pearson_oracle(xs, ys);
  std::vector<double> models;
  for (const auto& [m, p] : pm) models.push_back(pearson_oracle(p.first, p.second));
  o.by_model = mean(models);
  std::vector<double> items;
  for (const auto& [d, cells] : pd) {
    std::vector<double> da, db;
    for (const auto& [m, p] : cells) {
      da.push_back(mean(p.first));
      db.push_back(mean(p.second));
    }
    items.push_back(kendall_oracle(da, db));
  }
  o.by_item = mean(items);
  return o;
}

}  // namespace

TEST(Agreement, IdenticalAnnotatorsAgreePerfectly) {
  std::mt19937_64 rng(1);
  auto a = annotator("u", rng);
  auto b = a;
  for (auto& r : b) r.user_id = "v";
  a.insert(a.end(), b.begin(), b.end());
  const IaaReport r = iaa_report(a);
  EXPECT_NEAR(*r.global, 1.0, 1e-12);
  EXPECT_NEAR(*r.by_model, 1.0, 1e-12);
  EXPECT_NEAR(*r.by_item, 1.0, 1e-12);
}

TEST(Agreement, MirroredScoresAntiAgree) {
  std::mt19937_64 rng(2);
  auto a = annotator("u", rng);
  auto b = a;
  for (auto& r : b) {
    r.user_id = "v";
    for (auto& s : r.segments) s.score = 100 - s.score;
  }
  a.insert(a.end(), b.begin(), b.end());
  const IaaReport r = iaa_report(a);
  EXPECT_NEAR(*r.global, -1.0, 1e-12);
  EXPECT_NEAR(*r.by_model, -1.0, 1e-12);
  EXPECT_NEAR(*r.by_item, -1.0, 1e-12);
}

TEST(Agreement, ThreeAnnotatorsAverageThePairs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<AnnotationRecord> all;
    for (const char* u : {"u1", "u2", "u3"}) {
      auto rs = annotator(u, rng);
      all.insert(all.end(), rs.begin(), rs.end());
    }
    const IaaReport r = iaa_report(all);
    double g = 0, m = 0, it = 0;
    for (auto [u, v] : std::vector<std::pair<const char*, const char*>>{{"u1", "u2"}, {"u1", "u3"}, {"u2", "u3"}}) {
      const PairOracle o = pair_oracle(all, u, v);
      g += *o.global / 3;
      m += *o.by_model / 3;
      it += *o.by_item / 3;
    }
    EXPECT_NEAR(*r.global, g, 1e-9);
    EXPECT_NEAR(*r.by_model, m, 1e-9);
    EXPECT_NEAR(*r.by_item, it, 1e-9);
  }
}

TEST(Agreement, InsufficientOverlapIsIndeterminate) {
  const IaaReport r = iaa_report({rec("u", 0, "A", {50}), rec("v", 1, "A", {60})});
  EXPECT_FALSE(r.global);
  EXPECT_FALSE(r.by_model);
  EXPECT_FALSE(r.by_item);
  const Json j = to_json(r);
  EXPECT_TRUE(j["global"].is_null());
  EXPECT_FALSE(iaa_report({}).global);
}

// ---------------------------------------------------------------------------
// Progress

TEST(Progress, TimingAndPassRate) {
  const auto def = parse(pooled_campaign("c", "single-stream", 2, 3, {"A"}));
  auto s = initial_state(def, {"u", "fresh"});
  Rng rng(1);
  for (int i = 0; i < 3; ++i) {
    const auto item = std::get<ItemRef>(single_stream_next(def, s, "u", 1000, rng));
    record_completion(def, s, "u", item.document_index, {{"A", {50}}});
  }
  QualityLedger ledger;
  for (int i = 0; i < 5; ++i) {
    RuleOutcome o;
    o.passed = i < 3;
    ledger.record("u", o);
  }
  const std::map<std::string, std::vector<std::int64_t>> times{{"u", {0, 130000, 260000}}};
  const auto rows = progress_report(def, s, ledger, {"u", "fresh"}, times);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].done, 3u);
  EXPECT_EQ(rows[0].total, 3u);
  ASSERT_TRUE(rows[0].mean_seconds_per_item);
  EXPECT_DOUBLE_EQ(*rows[0].mean_seconds_per_item, 130.0);
  ASSERT_TRUE(rows[0].attention_pass_rate);
  EXPECT_DOUBLE_EQ(*rows[0].attention_pass_rate, 0.6);
  EXPECT_EQ(rows[1].done, 0u);
  EXPECT_EQ(rows[1].total, 3u);
  EXPECT_FALSE(rows[1].mean_seconds_per_item);
  EXPECT_FALSE(rows[1].attention_pass_rate);
  const Json j = to_json(rows[1]);
  EXPECT_TRUE(j["seconds_per_item"].is_null());
}

// ---------------------------------------------------------------------------
// Capacity

TEST(Capacity, DeskScaleExample) {
  const CapacityResult r = mm1_capacity({0.050, 130, 1.0, 0.99});
  EXPECT_DOUBLE_EQ(r.mu, 20);
  EXPECT_NEAR(r.lambda_max, 15.39482981401191, 1e-9);
  EXPECT_NEAR(r.lambda_max, 20.0 + std::log(0.01), 1e-12);
  EXPECT_EQ(r.max_users, 2001u);
  EXPECT_EQ(r.naive_throughput, 2600u);
  EXPECT_TRUE(r.feasible);
}

TEST(Capacity, UnattainableSla) {
  const CapacityResult r = mm1_capacity({1.0, 50, 1.0, 0.99});
  EXPECT_LT(r.lambda_max, 0);
  EXPECT_EQ(r.max_users, 0u);
  EXPECT_FALSE(r.feasible);
}

TEST(Capacity, DomainErrors) {
  EXPECT_THROW(mm1_capacity({0, 1, 1, 0.5}), Error);
  EXPECT_THROW(mm1_capacity({1, 0, 1, 0.5}), Error);
  EXPECT_THROW(mm1_capacity({1, 1, 0, 0.5}), Error);
  EXPECT_THROW(mm1_capacity({1, 1, 1, 1.0}), Error);
  EXPECT_THROW(mm1_capacity({1, 1, 1, 0.0}), Error);
}

namespace {

/// Closed-loop FCFS single server: `users` clients alternate exponential
/// think time and an exponential service request. Returns the q-quantile
/// of response time (queueing + service).
double simulate_quantile(std::size_t users, double think, double service, double q,
                         std::size_t requests, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> think_d(1.0 / think), service_d(1.0 / service);
  std::priority_queue<double, std::vector<double>, std::greater<>> arrivals;
  for (std::size_t u = 0; u < users; ++u) arrivals.push(think_d(rng));
  double server_free = 0;
  std::vector<double> response;
  response.reserve(requests);
  const std::size_t warmup = requests / 10;
  for (std::size_t i = 0; i < requests + warmup; ++i) {
    const double a = arrivals.top();
    arrivals.pop();
    const double finish = std::max(a, server_free) + service_d(rng);
    server_free = finish;
    if (i >= warmup) response.push_back(finish - a);
    arrivals.push(finish + think_d(rng));
  }
  const auto k = static_cast<std::size_t>(q * static_cast<double>(response.size()));
  std::nth_element(response.begin(), response.begin() + static_cast<std::ptrdiff_t>(k), response.end());
  return response[k];
}

}  // namespace

TEST(Capacity, SimulationConfirmsComputedUserCount) {
  const CapacityResult r = mm1_capacity({0.1, 100, 1.0, 0.99});
  EXPECT_NEAR(r.lambda_max, 10 + std::log(0.01), 1e-12);
  EXPECT_EQ(r.max_users, 539u);
  const double p99 = simulate_quantile(539, 100, 0.1, 0.99, 4'000'000, 2025);
  EXPECT_LE(p99, 1.0);
  // Well past capacity the SLA breaks.
  EXPECT_GT(simulate_quantile(800, 100, 0.1, 0.99, 1'000'000, 2026), 1.0);
}

TEST(Capacity, MonotoneInQuantileAndLatency) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> svc(0.001, 0.5), think(1, 300), t(0.05, 5), q(0.5, 0.999);
  for (int i = 0; i < 2000; ++i) {
    const CapacityQuery base{svc(rng), think(rng), t(rng), q(rng)};
    CapacityQuery stricter_q = base, tighter_t = base;
    stricter_q.sla_quantile = std::min(0.9999, base.sla_quantile + 0.01);
    tighter_t.sla_latency = base.sla_latency * 0.9;
    const auto n = mm1_capacity(base).max_users;
    EXPECT_LE(mm1_capacity(stricter_q).max_users, n);
    EXPECT_LE(mm1_capacity(tighter_t).max_users, n);
  }
}
