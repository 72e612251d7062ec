#include "fedvalue/psi.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

#include "fedvalue/rng.hpp"

namespace fedvalue {

namespace {

// domain-separation tags for the keyed digests
constexpr unsigned char kTagEncryptId = 0x01;
constexpr unsigned char kTagGroupToken = 0x02;
constexpr unsigned char kTagAdversarialId = 0x04;
constexpr unsigned char kTagNrDraw = 0x05;

std::array<unsigned char, 32> derive_key(const std::string& key_material) {
  std::array<unsigned char, 32> key;
  crypto_hash_sha256(key.data(),
                     reinterpret_cast<const unsigned char*>(key_material.data()),
                     key_material.size());
  return key;
}

EncryptedId hmac(const std::array<unsigned char, 32>& key,
                 const std::vector<unsigned char>& msg) {
  EncryptedId out;
  crypto_auth_hmacsha256(out.bytes.data(), msg.data(), msg.size(), key.data());
  return out;
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) buf.push_back((v >> (8 * i)) & 0xff);
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) buf.push_back((v >> (8 * i)) & 0xff);
}

std::string hex(const unsigned char* data, std::size_t len) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    s += digits[data[i] >> 4];
    s += digits[data[i] & 0xf];
  }
  return s;
}

}  // namespace

void PsiConfig::validate() const {
  if (q < 1) throw DomainError("q must be >= 1");
  if (n_r_max < n_r_min) throw DomainError("n_r range is inverted");
  if (shared_key.empty() || group_key.empty()) {
    throw DomainError("keys must be non-empty");
  }
  if (shared_key == group_key) {
    throw DomainError("shared_key and group_key must differ");
  }
}

EncryptedId encrypt_id(const std::string& sample_id, std::uint32_t copy_index,
                       const std::string& shared_key) {
  std::vector<unsigned char> msg;
  msg.push_back(kTagEncryptId);
  put_u32(msg, copy_index);
  msg.insert(msg.end(), sample_id.begin(), sample_id.end());
  return hmac(derive_key(shared_key), msg);
}

GroupToken group_token(const std::string& sample_id,
                       const std::string& group_key) {
  std::vector<unsigned char> msg;
  msg.push_back(kTagGroupToken);
  msg.insert(msg.end(), sample_id.begin(), sample_id.end());
  return hmac(derive_key(group_key), msg);
}

std::vector<std::string> adversarial_ids(const PsiConfig& config,
                                         std::uint64_t query_id,
                                         std::uint32_t n_r) {
  const auto key = derive_key(config.shared_key);
  std::vector<std::string> ids;
  ids.reserve(n_r);
  for (std::uint32_t j = 0; j < n_r; ++j) {
    std::vector<unsigned char> msg;
    msg.push_back(kTagAdversarialId);
    put_u64(msg, query_id);
    put_u32(msg, j);
    EncryptedId digest = hmac(key, msg);
    ids.push_back("adv-" + hex(digest.bytes.data(), 16));
  }
  return ids;
}

std::uint32_t draw_n_r(const PsiConfig& config, std::uint64_t query_id) {
  if (config.n_r_max == config.n_r_min) return config.n_r_min;
  std::vector<unsigned char> msg;
  msg.push_back(kTagNrDraw);
  put_u64(msg, query_id);
  EncryptedId digest = hmac(derive_key(config.shared_key), msg);
  std::uint64_t x;
  std::memcpy(&x, digest.bytes.data(), sizeof(x));
  const std::uint64_t span = config.n_r_max - config.n_r_min + 1;
  return config.n_r_min + static_cast<std::uint32_t>(x % span);
}

std::vector<std::string> matching_sample_ids(const PartyData& party,
                                             const ValueAssignment& selection) {
  for (const auto& e : selection.entries) {
    if (e.party_id != party.party_id) {
      throw SelectionError("selection references party " +
                           std::to_string(e.party_id) + " from party " +
                           std::to_string(party.party_id));
    }
    if (e.column == kLabelColumn) {
      if (!party.label) throw SelectionError("party has no label column");
    } else if (e.column < 0 ||
               static_cast<std::size_t>(e.column) >= party.table.columns.size()) {
      throw SelectionError("selection column out of range");
    }
  }
  std::vector<std::string> out;
  const std::size_t n = party.table.n_rows();
  for (std::size_t r = 0; r < n; ++r) {
    bool match = true;
    for (const auto& e : selection.entries) {
      const auto& codes = (e.column == kLabelColumn)
                              ? party.label->codes
                              : party.table.columns[e.column].codes;
      if (codes[r] != e.code) {
        match = false;
        break;
      }
    }
    if (match) out.push_back(party.table.sample_ids[r]);
  }
  return out;
}

IdSubmission prepare_submission(const PartyData& party,
                                const ValueAssignment& selection,
                                const CountQuery& query) {
  query.config.validate();
  std::vector<std::string> ids = matching_sample_ids(party, selection);
  const auto adv = adversarial_ids(query.config, query.query_id, query.n_r);
  ids.insert(ids.end(), adv.begin(), adv.end());

  IdSubmission sub;
  for (const auto& id : ids) {
    GroupToken token = group_token(id, query.config.group_key);
    auto& group = sub.grouping[token];
    for (std::uint32_t k = 1; k <= query.config.q; ++k) {
      EncryptedId eid = encrypt_id(id, k, query.config.shared_key);
      group.push_back(eid);
      sub.flat_set.insert(eid);
    }
  }
  return sub;
}

std::pair<std::vector<EncryptedId>, std::int64_t> compute_intersection(
    const std::vector<const IdSet*>& submissions) {
  if (submissions.size() < 2) {
    throw ProtocolError("intersection needs at least 2 submissions");
  }
  const IdSet* smallest = submissions.front();
  for (const auto* s : submissions) {
    if (s->size() < smallest->size()) smallest = s;
  }
  std::vector<EncryptedId> inter;
  for (const auto& id : *smallest) {
    bool in_all = true;
    for (const auto* s : submissions) {
      if (s == smallest) continue;
      if (!s->contains(id)) {
        in_all = false;
        break;
      }
    }
    if (in_all) inter.push_back(id);
  }
  return {std::move(inter), static_cast<std::int64_t>(inter.size())};
}

std::int64_t validate_intersection(
    const std::vector<EncryptedId>& i_inter,
    const std::map<GroupToken, std::vector<EncryptedId>>& groups,
    std::uint32_t q) {
  std::unordered_map<EncryptedId, const GroupToken*, EncryptedIdHash> member_of;
  for (const auto& [token, members] : groups) {
    for (const auto& m : members) member_of.emplace(m, &token);
  }
  std::map<GroupToken, std::uint32_t> present;
  for (const auto& id : i_inter) {
    auto it = member_of.find(id);
    if (it == member_of.end()) return -1;  // unmappable encryption ID
    ++present[*it->second];
  }
  for (const auto& [token, count] : present) {
    if (count != q) return -1;  // partial duplicate group
  }
  return static_cast<std::int64_t>(i_inter.size());
}

CountResult verify_result(std::int64_t n_c, std::int64_t n_v, std::uint32_t q,
                          std::uint32_t n_r) {
  CountResult r;
  r.n_c = n_c;
  r.n_v = n_v;
  const bool ok = n_c >= 0 && n_c == n_v && q > 0 && n_c % q == 0 &&
                  n_c / q >= static_cast<std::int64_t>(n_r);
  if (ok) {
    r.verdict = Verdict::Verified;
    r.cardinality = static_cast<std::uint64_t>(n_c / q - n_r);
  } else {
    r.verdict = Verdict::ServerMisbehavior;
  }
  return r;
}

ServerBehavior parse_behavior(const std::string& name) {
  if (name == "honest") return Honest{};
  if (name == "forge") return ForgeCardinality{};
  if (name == "drop") return DropRandom{};
  if (name == "inject") return InjectRandom{};
  if (name == "zero") return ReportZero{};
  throw DomainError("unknown behavior: " + name +
                    " (expected honest|forge|drop|inject|zero)");
}

std::string behavior_name(const ServerBehavior& b) {
  switch (b.index()) {
    case 0: return "honest";
    case 1: return "forge";
    case 2: return "drop";
    case 3: return "inject";
    case 4: return "zero";
  }
  return "?";
}

namespace {

EncryptedId random_digest(Rng& rng) {
  EncryptedId id;
  for (std::size_t i = 0; i < id.bytes.size(); i += 8) {
    std::uint64_t x = rng.next();
    std::memcpy(id.bytes.data() + i, &x, 8);
  }
  return id;
}

}  // namespace

std::pair<std::vector<EncryptedId>, std::int64_t> apply_behavior(
    const ServerBehavior& behavior, std::vector<EncryptedId> i_inter) {
  if (std::holds_alternative<Honest>(behavior)) {
    auto n = static_cast<std::int64_t>(i_inter.size());
    return {std::move(i_inter), n};
  }
  if (const auto* forge = std::get_if<ForgeCardinality>(&behavior)) {
    Rng rng(forge->seed);
    std::vector<EncryptedId> fake;
    fake.reserve(forge->forged_size);
    for (std::uint64_t i = 0; i < forge->forged_size; ++i) {
      fake.push_back(random_digest(rng));
    }
    auto n = static_cast<std::int64_t>(fake.size());
    return {std::move(fake), n};
  }
  if (const auto* drop = std::get_if<DropRandom>(&behavior)) {
    Rng rng(drop->seed);
    std::vector<EncryptedId> kept;
    for (auto& id : i_inter) {
      if (rng.unit() >= drop->fraction) kept.push_back(id);
    }
    auto n = static_cast<std::int64_t>(kept.size());
    return {std::move(kept), n};
  }
  if (const auto* inject = std::get_if<InjectRandom>(&behavior)) {
    Rng rng(inject->seed);
    for (std::uint64_t i = 0; i < inject->count; ++i) {
      i_inter.push_back(random_digest(rng));
    }
    auto n = static_cast<std::int64_t>(i_inter.size());
    return {std::move(i_inter), n};
  }
  // ReportZero
  return {{}, 0};
}

}  // namespace fedvalue
