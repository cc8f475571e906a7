#pragma once

// Capacity planning with an M/M/1 single-server queue. Response time in
// M/M/1 is exponential with rate (mu - lambda), so the SLA "a fraction q of
// requests finish within t seconds" holds up to lambda = mu + ln(1 - q) / t.

#include <cmath>
#include <cstddef>

#include "annodesk/errors.hpp"

namespace annodesk {

struct CapacityQuery {
  double service_time = 0;  // seconds per request, 1/mu
  double think_time = 0;    // seconds between one user's requests
  double sla_latency = 0;   // t, seconds
  double sla_quantile = 0;  // q in (0, 1)
};

struct CapacityResult {
  double mu = 0;          // requests/s
  double lambda_max = 0;  // requests/s
  std::size_t max_users = 0;
  std::size_t naive_throughput = 0;  // think_time / service_time
  bool feasible = true;
};

inline CapacityResult mm1_capacity(const CapacityQuery& q) {
  if (!(q.service_time > 0) || !(q.think_time > 0) || !(q.sla_latency > 0))
    throw Error(ErrorKind::input, "service time, think time and SLA latency must be positive");
  if (!(q.sla_quantile > 0 && q.sla_quantile < 1))
    throw Error(ErrorKind::input, "SLA quantile must lie in (0, 1)");

  CapacityResult r;
  r.mu = 1.0 / q.service_time;
  r.lambda_max = r.mu + std::log1p(-q.sla_quantile) / q.sla_latency;
  r.naive_throughput = static_cast<std::size_t>(std::floor(q.think_time / q.service_time));
  if (r.lambda_max <= 0) {
    r.feasible = false;
    r.max_users = 0;
    return r;
  }
  // lambda_user = 1 / think_time, so N = lambda_max / lambda_user.
  r.max_users = static_cast<std::size_t>(std::floor(r.lambda_max * q.think_time));
  return r;
}

}  // namespace annodesk
