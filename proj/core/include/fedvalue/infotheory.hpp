#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedvalue/errors.hpp"
#include "fedvalue/tabular.hpp"

namespace fedvalue {

/// Sentinel column index for the task party's label.
inline constexpr int kLabelColumn = -1;

struct FeatureRef {
  int party_id = 0;
  int column = 0;  // kLabelColumn for the label

  auto operator<=>(const FeatureRef&) const = default;
};

/// A concrete joint value over a fixed feature set.
struct AssignmentEntry {
  int party_id = 0;
  int column = 0;
  std::uint32_t code = 0;

  auto operator<=>(const AssignmentEntry&) const = default;
};

struct ValueAssignment {
  std::vector<AssignmentEntry> entries;

  void add(int party_id, int column, std::uint32_t code);
  /// Sorts by (party, column); throws OverlapError on a duplicate pair.
  void normalize();

  auto operator<=>(const ValueAssignment&) const = default;
};

struct KeyHash {
  std::size_t operator()(const std::vector<std::uint32_t>& key) const {
    std::size_t h = 1469598103934665603ull;
    for (auto v : key) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return h;
  }
};

/// Exact joint counts over a fixed column layout. Keys are code vectors in
/// layout order; absent combinations are implicit zeros.
struct CountTable {
  std::vector<FeatureRef> layout;
  std::unordered_map<std::vector<std::uint32_t>, std::uint64_t, KeyHash> counts;
  std::uint64_t n_total = 0;
};

/// Which columns of one party participate in a query.
struct FeatureSelection {
  int party_id = 0;
  std::vector<int> columns;
};

struct CmiValue {
  double nats = 0.0;

  double in_bits() const;
};

/// Tallies the joint distribution of the selected columns across row-aligned
/// parties. include_label appends the task party's label as the last layout
/// entry.
CountTable joint_counts(std::span<const PartyData* const> parties,
                        const std::vector<FeatureSelection>& feature_sets,
                        bool include_label);

/// Abstract joint-count provider: the centralized tally or the federated
/// protocol sit behind this.
class CountSource {
 public:
  virtual ~CountSource() = default;

  /// Layout contract: target columns first, then conditioning columns, then
  /// the label (always included).
  virtual CountTable joint_counts_for(
      const std::vector<FeatureSelection>& target,
      const std::vector<FeatureSelection>& conditioning) = 0;
};

class CentralizedCounts : public CountSource {
 public:
  explicit CentralizedCounts(std::vector<const PartyData*> parties);

  CountTable joint_counts_for(
      const std::vector<FeatureSelection>& target,
      const std::vector<FeatureSelection>& conditioning) override;

 private:
  std::vector<const PartyData*> parties_;
};

/// I(target; label | conditioning) from a joint table laid out as
/// [target..., conditioning..., label]. Marginals are summed from the joint
/// table. Zero-count joints contribute nothing; tiny negative rounding
/// residue is clamped to 0.
CmiValue cmi_from_counts(const CountTable& table, std::size_t n_target_cols);

/// Maximum-likelihood I(target; Y_t | conditioning) in nats.
CmiValue cmi(CountSource& counts, const std::vector<FeatureSelection>& target,
             const std::vector<FeatureSelection>& conditioning);

/// Chain-rule split: returns (I(A,B;Y|C), I(B;Y|C), I(A;Y|B,C)).
/// The first equals the sum of the other two up to rounding.
std::tuple<CmiValue, CmiValue, CmiValue> cmi_chain_decompose(
    CountSource& counts, const std::vector<FeatureSelection>& set_a,
    const std::vector<FeatureSelection>& set_b,
    const std::vector<FeatureSelection>& conditioning);

}  // namespace fedvalue
