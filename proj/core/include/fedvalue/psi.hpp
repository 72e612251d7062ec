#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "fedvalue/errors.hpp"
#include "fedvalue/infotheory.hpp"
#include "fedvalue/tabular.hpp"

namespace fedvalue {

/// Keyed pseudorandom tag standing in for one encryption ID.
struct EncryptedId {
  std::array<unsigned char, 32> bytes{};

  auto operator<=>(const EncryptedId&) const = default;
};

struct EncryptedIdHash {
  std::size_t operator()(const EncryptedId& id) const {
    std::size_t h;
    std::memcpy(&h, id.bytes.data(), sizeof(h));
    return h;
  }
};

using IdSet = std::unordered_set<EncryptedId, EncryptedIdHash>;
using GroupToken = EncryptedId;  // same digest shape, separate key

struct PsiConfig {
  std::uint32_t q = 3;       // encryption IDs per sample
  std::uint32_t n_r_min = 0; // adversarial sample count range, drawn per query
  std::uint32_t n_r_max = 0;
  std::string shared_key;  // parties only
  std::string group_key;   // parties + validation server

  void validate() const;
};

/// What one party ships out for one query: the flat tag set for the
/// computation server and the duplicate-group map for the validation server.
struct IdSubmission {
  IdSet flat_set;
  std::map<GroupToken, std::vector<EncryptedId>> grouping;
};

struct CountQuery {
  std::uint64_t query_id = 0;
  std::map<int, ValueAssignment> selections;  // party id -> local filter
  PsiConfig config;
  std::uint32_t n_r = 0;  // concrete draw for this query
};

enum class Verdict { Verified, ServerMisbehavior };

struct CountResult {
  std::int64_t n_c = 0;
  std::int64_t n_v = 0;  // -1 signals validation failure
  Verdict verdict = Verdict::ServerMisbehavior;
  std::uint64_t cardinality = 0;  // valid iff verdict == Verified
};

/// Deterministic keyed digest of (sample_id, copy_index); identical across
/// parties for identical inputs, unlinkable without the key.
EncryptedId encrypt_id(const std::string& sample_id, std::uint32_t copy_index,
                       const std::string& shared_key);

/// Group token disclosed to the validation server: keyed digest of the
/// sample id under the group key, hiding the raw id.
GroupToken group_token(const std::string& sample_id,
                       const std::string& group_key);

/// The shared adversarial sample IDs for one query, derived from
/// (shared_key, query_id) so every party generates the same set without
/// extra rounds.
std::vector<std::string> adversarial_ids(const PsiConfig& config,
                                         std::uint64_t query_id,
                                         std::uint32_t n_r);

/// Per-query n_r, drawn deterministically from [n_r_min, n_r_max] using the
/// shared key so all parties agree; servers never see it.
std::uint32_t draw_n_r(const PsiConfig& config, std::uint64_t query_id);

/// Rows of `party` matching `selection` (codes over this party's columns;
/// the label entry applies when the party holds the label).
std::vector<std::string> matching_sample_ids(const PartyData& party,
                                             const ValueAssignment& selection);

IdSubmission prepare_submission(const PartyData& party,
                                const ValueAssignment& selection,
                                const CountQuery& query);

/// Exact intersection of >= 2 flat sets; returns the set and its cardinality.
std::pair<std::vector<EncryptedId>, std::int64_t> compute_intersection(
    const std::vector<const IdSet*>& submissions);

/// Validation-server check: does I_inter partition into complete groups of
/// size q under the merged group map? Returns |I_inter| on success, -1
/// otherwise.
std::int64_t validate_intersection(
    const std::vector<EncryptedId>& i_inter,
    const std::map<GroupToken, std::vector<EncryptedId>>& groups,
    std::uint32_t q);

/// Party-side cross check of the two servers' reports.
CountResult verify_result(std::int64_t n_c, std::int64_t n_v, std::uint32_t q,
                          std::uint32_t n_r);

// --- adversary harness (tests and attack-sim only) ---

struct Honest {};
struct ForgeCardinality {
  std::uint64_t forged_size = 1;  // fabricated |I_inter| of random digests
  std::uint64_t seed = 0;
};
struct DropRandom {
  double fraction = 0.5;
  std::uint64_t seed = 0;
};
struct InjectRandom {
  std::uint64_t count = 1;
  std::uint64_t seed = 0;
};
struct ReportZero {};

using ServerBehavior =
    std::variant<Honest, ForgeCardinality, DropRandom, InjectRandom, ReportZero>;

ServerBehavior parse_behavior(const std::string& name);
std::string behavior_name(const ServerBehavior& b);

/// Applies a malicious perturbation to an honestly computed intersection;
/// returns the (possibly forged) I_inter and reported n_c.
std::pair<std::vector<EncryptedId>, std::int64_t> apply_behavior(
    const ServerBehavior& behavior, std::vector<EncryptedId> i_inter);

}  // namespace fedvalue
