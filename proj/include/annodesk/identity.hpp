#pragma once

// Magic-link identities: human-readable user ids and 96-bit URL-safe tokens.

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <sodium.h>

#include "annodesk/campaign.hpp"

namespace annodesk {

enum class Role { annotator, manager };

inline const char* to_string(Role r) { return r == Role::annotator ? "annotator" : "manager"; }

struct UserIdentity {
  std::string user_id;
  std::string token;
  Role role = Role::annotator;

  bool operator==(const UserIdentity&) const = default;
};

struct MagicLink {
  UserIdentity identity;
  std::string url;
};

struct CampaignLinks {
  std::vector<MagicLink> annotators;
  MagicLink manager;
};

inline constexpr std::size_t kTokenEntropyBits = 96;
inline constexpr std::size_t kTokenBytes = kTokenEntropyBits / 8;
/// base64url symbols carry 6 bits each, so 96 bits need exactly 16 symbols.
inline constexpr std::size_t kTokenLength = kTokenEntropyBits / 6;

namespace detail {

inline void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}

inline constexpr std::array<std::string_view, 48> kAdjectives = {
    "amber",  "bold",   "brisk",  "calm",   "clever", "cosmic", "crisp",  "dapper",
    "eager",  "fair",   "fancy",  "gentle", "glad",   "golden", "happy",  "humble",
    "jolly",  "keen",   "kind",   "lively", "lucid",  "lucky",  "mellow", "merry",
    "mighty", "modest", "neat",   "noble",  "polite", "proud",  "quick",  "quiet",
    "rapid",  "robust", "rosy",   "shiny",  "silent", "silver", "smooth", "snowy",
    "solid",  "steady", "sunny",  "swift",  "tidy",   "vivid",  "warm",   "witty"};

inline constexpr std::array<std::string_view, 48> kNouns = {
    "acorn",  "anchor", "badger", "beacon", "birch",  "canyon", "cedar",  "comet",
    "coral",  "delta",  "ember",  "falcon", "fern",   "fjord",  "garnet", "glacier",
    "harbor", "heron",  "island", "jasper", "kernel", "lagoon", "lantern", "ligand",
    "maple",  "meadow", "nebula", "otter",  "pebble", "pepper", "quartz", "quill",
    "raven",  "reef",   "river",  "saffron", "sparrow", "spruce", "summit", "thistle",
    "tundra", "umber",  "valley", "walnut", "willow", "yarrow", "zenith", "zephyr"};

inline std::uint32_t random_below(std::uint32_t bound) { return randombytes_uniform(bound); }

}  // namespace detail

/// 16-character base64url string carrying 96 bits from the system CSPRNG.
inline std::string generate_token() {
  detail::ensure_sodium();
  std::array<unsigned char, kTokenBytes> bytes{};
  randombytes_buf(bytes.data(), bytes.size());
  std::array<char, kTokenLength + 1> encoded{};
  sodium_bin2base64(encoded.data(), encoded.size(), bytes.data(), bytes.size(),
                    sodium_base64_VARIANT_URLSAFE_NO_PADDING);
  return std::string(encoded.data(), kTokenLength);
}

/// word-word-number, e.g. `calm-ligand-106`.
inline std::string generate_user_id() {
  detail::ensure_sodium();
  const auto& adj = detail::kAdjectives[detail::random_below(detail::kAdjectives.size())];
  const auto& noun = detail::kNouns[detail::random_below(detail::kNouns.size())];
  const std::uint32_t number = 100 + detail::random_below(900);
  return std::string(adj) + "-" + std::string(noun) + "-" + std::to_string(number);
}

/// Hex of the first `bytes` bytes of HMAC-SHA256(key, message).
inline std::string hmac_hex(std::string_view key, std::string_view message, std::size_t bytes) {
  detail::ensure_sodium();
  crypto_auth_hmacsha256_state st;
  unsigned char mac[crypto_auth_hmacsha256_BYTES];
  crypto_auth_hmacsha256_init(&st, reinterpret_cast<const unsigned char*>(key.data()), key.size());
  crypto_auth_hmacsha256_update(&st, reinterpret_cast<const unsigned char*>(message.data()),
                                message.size());
  crypto_auth_hmacsha256_final(&st, mac);
  return text::to_hex(mac, std::min<std::size_t>(bytes, sizeof mac));
}

/// Hex string of `bytes` random bytes; used for per-campaign secrets.
inline std::string random_hex(std::size_t bytes) {
  detail::ensure_sodium();
  std::vector<unsigned char> buf(bytes);
  randombytes_buf(buf.data(), buf.size());
  return text::to_hex(buf.data(), buf.size());
}

inline std::string magic_link_url(std::string_view base_url, std::string_view token) {
  std::string url(base_url);
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url + "/?token=" + std::string(token);
}

/// One annotator link per task (task-based) or per `info.users` (pooled),
/// plus one manager link for the dashboard.
inline CampaignLinks generate_links(const CampaignDefinition& def, std::string_view base_url) {
  CampaignLinks links;
  std::set<std::string> ids;
  std::set<std::string> tokens;
  auto make = [&](Role role) {
    UserIdentity u;
    u.role = role;
    do {
      u.user_id = generate_user_id();
    } while (!ids.insert(u.user_id).second);
    do {
      u.token = generate_token();
    } while (!tokens.insert(u.token).second);
    std::string url = magic_link_url(base_url, u.token);
    return MagicLink{std::move(u), std::move(url)};
  };
  const std::size_t count = def.annotator_count();
  for (std::size_t i = 0; i < count; ++i) links.annotators.push_back(make(Role::annotator));
  links.manager = make(Role::manager);
  return links;
}

}  // namespace annodesk
