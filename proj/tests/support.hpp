#pragma once

// Shared helpers for the test suites: temporary directories, campaign
// builders, a fake clock and independent reference implementations.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "annodesk/campaign.hpp"

namespace testing_support {

using annodesk::Json;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "annodesk-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return (std::filesystem::path(path_) / name).string(); }

 private:
  std::string path_;
};

/// Deterministic clock advancing by `step` ms per call.
struct FakeClock {
  std::int64_t now = 1'700'000'000'000;
  std::int64_t step = 1000;
  std::int64_t operator()() { return now += step; }
};

inline std::string model_name(std::size_t i) { return "model" + std::string(1, static_cast<char>('A' + i)); }

/// One segment: `src`, one target per model.
inline Json segment(const std::vector<std::string>& models, const std::string& src = "Source text.",
                    const std::string& tgt = "Target text here.") {
  Json s;
  s["src"] = src;
  Json t = Json::object();
  for (const auto& m : models) t[m] = tgt + " (" + m + ")";
  s["tgt"] = std::move(t);
  return s;
}

inline Json document(const std::vector<std::string>& models, std::size_t segments) {
  Json d = Json::array();
  for (std::size_t i = 0; i < segments; ++i)
    d.push_back(segment(models, "Source sentence " + std::to_string(i) + ".",
                        "Zielsatz nummer " + std::to_string(i) + "."));
  return d;
}

/// Pooled campaign where every document shows all `models`.
inline Json pooled_campaign(const std::string& id, const std::string& assignment, std::size_t users,
                            std::size_t docs, const std::vector<std::string>& models,
                            std::size_t segments = 1, const std::string& protocol = "ESA") {
  Json j;
  j["info"]["assignment"] = assignment;
  j["info"]["protocol"] = protocol;
  j["info"]["users"] = users;
  j["campaign_id"] = id;
  Json data = Json::array();
  for (std::size_t d = 0; d < docs; ++d) data.push_back(document(models, segments));
  j["data"] = std::move(data);
  return j;
}

/// Task-based campaign with `tasks` tasks of `docs_per_task` documents each.
inline Json task_campaign(const std::string& id, std::size_t tasks, std::size_t docs_per_task,
                          const std::vector<std::string>& models, std::size_t segments = 1) {
  Json j;
  j["info"]["assignment"] = "task-based";
  j["info"]["protocol"] = "ESA";
  j["campaign_id"] = id;
  Json data = Json::array();
  for (std::size_t t = 0; t < tasks; ++t) {
    Json task = Json::array();
    for (std::size_t d = 0; d < docs_per_task; ++d) task.push_back(document(models, segments));
    data.push_back(std::move(task));
  }
  j["data"] = std::move(data);
  return j;
}

inline annodesk::CampaignDefinition parse(const Json& j) { return annodesk::parse_campaign(j.dump()); }

inline std::string repo_path(const std::string& rel) {
  return (std::filesystem::path(ANNODESK_SOURCE_DIR) / rel).string();
}

// ---------------------------------------------------------------------------
// Reference implementations (deliberately different algorithms)

/// Two-sided Student-t tail for integer degrees of freedom from the finite
/// trigonometric series for the t distribution function.
inline double t_two_sided_exact(double t, int df) {
  if (std::isinf(t)) return 0.0;
  const long double theta = std::atan(std::fabs(t) / std::sqrt(static_cast<long double>(df)));
  const long double s = std::sin(theta), c = std::cos(theta);
  long double a;
  if (df % 2 == 1) {
    long double sum = 0;
    if (df > 1) {
      long double term = 1;
      sum = 1;
      for (int k = 3; k <= df - 2; k += 2) {
        term *= static_cast<long double>(k - 1) / k * c * c;
        sum += term;
      }
      sum *= s * c;
    }
    a = 2.0L / std::numbers::pi_v<long double> * (theta + sum);
  } else {
    long double term = 1, sum = 1;
    for (int k = 2; k <= df - 2; k += 2) {
      term *= static_cast<long double>(k - 1) / k * c * c;
      sum += term;
    }
    a = s * sum;
  }
  return static_cast<double>(1.0L - a);
}

struct PairedT {
  double t;
  double p;
};

/// Paired t via sums of squares in long double, p from the exact series.
inline PairedT paired_t_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long double s = 0, ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double d = static_cast<long double>(x[i]) - y[i];
    s += d;
    ss += d * d;
  }
  const long double mean = s / n;
  long double var = (ss - s * s / n) / (n - 1);
  if (var < 1e-18L) var = 0;
  if (var == 0) {
    if (mean == 0) return {0.0, 1.0};
    return {mean > 0 ? INFINITY : -INFINITY, 0.0};
  }
  const double t = static_cast<double>(mean / std::sqrt(var / n));
  return {t, t_two_sided_exact(t, static_cast<int>(n - 1))};
}

/// Pearson via the pairwise-difference identity.
inline double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const long double dx = static_cast<long double>(x[i]) - x[j];
      const long double dy = static_cast<long double>(y[i]) - y[j];
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
    }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

/// Kendall tau-b by enumerating all pairs.
inline double kendall_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long long c = 0, d = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++c;
      } else {
        ++d;
      }
    }
  return static_cast<double>(c - d) /
         std::sqrt(static_cast<double>(c + d + tx) * static_cast<double>(c + d + ty));
}

/// Random integer-valued vector (ties are common).
inline std::vector<double> random_scores(std::mt19937_64& rng, std::size_t n, int lo = 0, int hi = 10) {
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace testing_support
