#pragma once

// Tutorials and attention checks: rule evaluation, the per-user pass-rate
// ledger and accept/reject completion tokens.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "annodesk/campaign.hpp"
#include "annodesk/errors.hpp"
#include "annodesk/identity.hpp"

namespace annodesk {

struct RuleOutcome {
  bool passed = true;
  bool blocking = false;
  std::optional<std::string> warning;
  std::vector<std::string> failed_conditions;  // score_range, expected_span, score_greaterthan

  bool operator==(const RuleOutcome&) const = default;
};

struct RuleSubmission {
  double score = 0;
  std::vector<ErrorSpan> spans;
  std::map<std::string, double> comparator_scores;  // other models on the same segment
};

/// True iff some submitted span starts inside the expected start range,
/// ends inside the expected end range and has the same severity.
inline bool match_expected_span(const ExpectedSpan& expected, const std::vector<ErrorSpan>& spans) {
  return std::any_of(spans.begin(), spans.end(), [&](const ErrorSpan& s) {
    return expected.start_range.contains(s.start) && expected.end_range.contains(s.end) &&
           s.severity == expected.severity;
  });
}

inline RuleOutcome evaluate_rule(const ValidationRule& rule, const RuleSubmission& sub) {
  RuleOutcome out;
  out.blocking = rule.blocking();
  out.warning = rule.warning;

  if (rule.score && !(sub.score >= rule.score->min && sub.score <= rule.score->max))
    out.failed_conditions.push_back("score_range");

  if (rule.error_spans) {
    for (const auto& expected : *rule.error_spans) {
      if (!match_expected_span(expected, sub.spans)) {
        out.failed_conditions.push_back("expected_span");
        break;
      }
    }
  }

  if (rule.score_greaterthan) {
    auto it = sub.comparator_scores.find(*rule.score_greaterthan);
    if (it == sub.comparator_scores.end())
      throw Error(ErrorKind::evaluation,
                  "no score for comparison model '" + *rule.score_greaterthan + "'");
    if (!(sub.score > it->second)) out.failed_conditions.push_back("score_greaterthan");
  }

  out.passed = out.failed_conditions.empty();
  return out;
}

struct UserQuality {
  std::size_t checks_seen = 0;
  std::size_t checks_passed = 0;
  std::size_t tutorial_attempts = 0;
  std::size_t tutorial_failures = 0;
  std::size_t tutorial_skips = 0;

  bool operator==(const UserQuality&) const = default;
};

/// Only silent (non-blocking) checks count toward the accept/reject verdict.
struct QualityLedger {
  double threshold = 0.8;
  std::map<std::string, UserQuality> users;

  void record(const std::string& user, const RuleOutcome& outcome) {
    UserQuality& q = users[user];
    if (outcome.blocking) {
      ++q.tutorial_attempts;
      if (!outcome.passed) ++q.tutorial_failures;
    } else {
      ++q.checks_seen;
      if (outcome.passed) ++q.checks_passed;
    }
  }

  void record_skip(const std::string& user) { ++users[user].tutorial_skips; }

  UserQuality of(const std::string& user) const {
    auto it = users.find(user);
    return it == users.end() ? UserQuality{} : it->second;
  }

  std::optional<double> pass_rate(const std::string& user) const {
    const UserQuality q = of(user);
    if (q.checks_seen == 0) return std::nullopt;
    return static_cast<double>(q.checks_passed) / static_cast<double>(q.checks_seen);
  }

  bool operator==(const QualityLedger&) const = default;
};

enum class Verdict { accept, reject };

inline const char* to_string(Verdict v) { return v == Verdict::accept ? "accept" : "reject"; }

struct CompletionToken {
  Verdict verdict = Verdict::accept;
  std::string token;
};

inline Verdict verdict_for(const QualityLedger& ledger, const std::string& user) {
  const UserQuality q = ledger.of(user);
  if (q.checks_seen == 0) return Verdict::accept;
  const double rate = static_cast<double>(q.checks_passed) / static_cast<double>(q.checks_seen);
  return rate >= ledger.threshold ? Verdict::accept : Verdict::reject;
}

/// `<verdict>-<24 hex>`: HMAC-SHA256 over campaign, user and verdict,
/// truncated to 96 bits. Anyone holding the campaign key can recompute it.
inline std::string completion_digest(std::string_view key, std::string_view campaign_id,
                                     std::string_view user_id, Verdict verdict) {
  const std::string message = std::string(campaign_id) + '\n' + std::string(user_id) + '\n' +
                              to_string(verdict);
  return std::string(to_string(verdict)) + "-" + hmac_hex(key, message, 12);
}

inline CompletionToken completion_token(const QualityLedger& ledger, std::string_view key,
                                        std::string_view campaign_id, const std::string& user,
                                        bool user_complete) {
  if (!user_complete) throw Error(ErrorKind::state, "annotator has not completed the campaign");
  const Verdict v = verdict_for(ledger, user);
  return {v, completion_digest(key, campaign_id, user, v)};
}

inline bool verify_completion_token(std::string_view key, std::string_view campaign_id,
                                    std::string_view user_id, std::string_view token) {
  for (Verdict v : {Verdict::accept, Verdict::reject})
    if (completion_digest(key, campaign_id, user_id, v) == token) return true;
  return false;
}

}  // namespace annodesk
