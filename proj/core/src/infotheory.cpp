#include "fedvalue/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace fedvalue {

namespace {
constexpr double kClampTolerance = 1e-9;
}

void ValueAssignment::add(int party_id, int column, std::uint32_t code) {
  entries.push_back({party_id, column, code});
}

void ValueAssignment::normalize() {
  std::sort(entries.begin(), entries.end());
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].party_id == entries[i - 1].party_id &&
        entries[i].column == entries[i - 1].column) {
      throw OverlapError("duplicate (party, column) in assignment");
    }
  }
}

double CmiValue::in_bits() const { return nats / std::log(2.0); }

CountTable joint_counts(std::span<const PartyData* const> parties,
                        const std::vector<FeatureSelection>& feature_sets,
                        bool include_label) {
  if (parties.empty()) throw AlignmentError("no parties");
  const auto& ids0 = parties.front()->table.sample_ids;
  for (const auto* p : parties) {
    if (p->table.sample_ids != ids0) {
      throw AlignmentError("parties are not row-aligned");
    }
  }

  auto find_party = [&](int id) -> const PartyData* {
    for (const auto* p : parties) {
      if (p->party_id == id) return p;
    }
    throw AlignmentError("unknown party id " + std::to_string(id));
  };

  CountTable table;
  std::vector<const std::vector<std::uint32_t>*> cols;
  for (const auto& sel : feature_sets) {
    const PartyData* p = find_party(sel.party_id);
    for (int c : sel.columns) {
      if (c < 0 || static_cast<std::size_t>(c) >= p->table.columns.size()) {
        throw SchemaError("column index out of range for party " +
                          std::to_string(sel.party_id));
      }
      table.layout.push_back({sel.party_id, c});
      cols.push_back(&p->table.columns[c].codes);
    }
  }
  if (include_label) {
    const PartyData* task = nullptr;
    for (const auto* p : parties) {
      if (p->is_task()) task = p;
    }
    if (!task || !task->label) throw SchemaError("no task party with a label");
    table.layout.push_back({task->party_id, kLabelColumn});
    cols.push_back(&task->label->codes);
  }

  const std::size_t n = ids0.size();
  std::vector<std::uint32_t> key(cols.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) key[c] = (*cols[c])[r];
    ++table.counts[key];
  }
  table.n_total = n;
  return table;
}

CentralizedCounts::CentralizedCounts(std::vector<const PartyData*> parties)
    : parties_(std::move(parties)) {}

CountTable CentralizedCounts::joint_counts_for(
    const std::vector<FeatureSelection>& target,
    const std::vector<FeatureSelection>& conditioning) {
  std::vector<FeatureSelection> all = target;
  all.insert(all.end(), conditioning.begin(), conditioning.end());
  return joint_counts(parties_, all, /*include_label=*/true);
}

CmiValue cmi_from_counts(const CountTable& table, std::size_t n_target_cols) {
  if (table.n_total == 0) return {0.0};
  if (table.layout.empty() ||
      table.layout.back().column != kLabelColumn) {
    throw SchemaError("count table layout must end with the label");
  }
  const std::size_t m = table.layout.size();
  const std::size_t n_cond = m - 1 - n_target_cols;

  // subkey maps: conditioning only, conditioning+target, conditioning+label
  std::unordered_map<std::vector<std::uint32_t>, std::uint64_t, KeyHash> n_c,
      n_ct, n_cy;
  std::vector<std::uint32_t> kc(n_cond), kct(n_cond + n_target_cols),
      kcy(n_cond + 1);
  auto split = [&](const std::vector<std::uint32_t>& key) {
    for (std::size_t i = 0; i < n_cond; ++i) kc[i] = key[n_target_cols + i];
    for (std::size_t i = 0; i < n_target_cols; ++i) kct[n_cond + i] = key[i];
    std::copy(kc.begin(), kc.end(), kct.begin());
    std::copy(kc.begin(), kc.end(), kcy.begin());
    kcy[n_cond] = key[m - 1];
  };
  for (const auto& [key, n] : table.counts) {
    split(key);
    n_c[kc] += n;
    n_ct[kct] += n;
    n_cy[kcy] += n;
  }

  double sum = 0.0;
  for (const auto& [key, n] : table.counts) {
    if (n == 0) continue;
    split(key);
    const double num = static_cast<double>(n) * static_cast<double>(n_c[kc]);
    const double den =
        static_cast<double>(n_ct[kct]) * static_cast<double>(n_cy[kcy]);
    sum += static_cast<double>(n) * std::log(num / den);
  }
  double nats = sum / static_cast<double>(table.n_total);
  if (nats < 0.0 && nats > -kClampTolerance) nats = 0.0;
  return {nats};
}

CmiValue cmi(CountSource& counts, const std::vector<FeatureSelection>& target,
             const std::vector<FeatureSelection>& conditioning) {
  std::size_t n_target_cols = 0;
  for (const auto& s : target) n_target_cols += s.columns.size();
  if (n_target_cols == 0) return {0.0};
  CountTable table = counts.joint_counts_for(target, conditioning);
  return cmi_from_counts(table, n_target_cols);
}

namespace {

void check_disjoint(const std::vector<FeatureSelection>& a,
                    const std::vector<FeatureSelection>& b) {
  for (const auto& sa : a) {
    for (const auto& sb : b) {
      if (sa.party_id != sb.party_id) continue;
      for (int ca : sa.columns) {
        for (int cb : sb.columns) {
          if (ca == cb) {
            throw OverlapError("feature sets overlap at party " +
                               std::to_string(sa.party_id) + " column " +
                               std::to_string(ca));
          }
        }
      }
    }
  }
}

std::vector<FeatureSelection> concat(const std::vector<FeatureSelection>& a,
                                     const std::vector<FeatureSelection>& b) {
  std::vector<FeatureSelection> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

std::tuple<CmiValue, CmiValue, CmiValue> cmi_chain_decompose(
    CountSource& counts, const std::vector<FeatureSelection>& set_a,
    const std::vector<FeatureSelection>& set_b,
    const std::vector<FeatureSelection>& conditioning) {
  check_disjoint(set_a, set_b);
  CmiValue whole = cmi(counts, concat(set_a, set_b), conditioning);
  CmiValue base = cmi(counts, set_b, conditioning);
  CmiValue marginal = cmi(counts, set_a, concat(set_b, conditioning));
  return {whole, base, marginal};
}

}  // namespace fedvalue
