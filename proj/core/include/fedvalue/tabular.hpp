#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedvalue/errors.hpp"

namespace fedvalue {

/// A raw column is either numeric or string-categorical.
struct RawColumn {
  std::string name;
  std::variant<std::vector<double>, std::vector<std::string>> cells;

  bool is_numeric() const { return cells.index() == 0; }
  std::size_t size() const;
};

/// Parsed but not yet discretized table: aligned sample ids plus named columns.
struct RawTable {
  std::vector<std::string> sample_ids;
  std::vector<RawColumn> columns;
  std::optional<std::string> label_column;

  std::size_t n_rows() const { return sample_ids.size(); }
  const RawColumn& column(const std::string& name) const;
};

/// One discretized column: dense category codes in [0, arity).
struct CategoricalColumn {
  std::string name;
  std::vector<std::uint32_t> codes;
  std::uint32_t arity = 1;
};

struct CategoricalTable {
  std::vector<std::string> sample_ids;
  std::vector<CategoricalColumn> columns;

  std::size_t n_rows() const { return sample_ids.size(); }
};

enum class PartyRole { TaskParty, DataParty };

/// One participant's vertical slice: aligned ids, its feature columns, and
/// (task party only) the label codes.
struct PartyData {
  PartyRole role = PartyRole::DataParty;
  int party_id = 0;
  CategoricalTable table;
  std::optional<CategoricalColumn> label;

  bool is_task() const { return role == PartyRole::TaskParty; }
};

struct BinningSpec {
  std::uint32_t bins_per_feature = 5;
};

RawTable load_csv(const std::string& path,
                  const std::optional<std::string>& label = std::nullopt,
                  const std::optional<std::string>& id_column = std::nullopt);

/// Equal-width binning of numeric columns; dense re-coding of categorical ones.
/// The column maximum falls in the last bin.
CategoricalTable discretize(const RawTable& table, const BinningSpec& spec);

/// Per-party PCA on the mean-centered column matrix (covariance
/// eigendecomposition, no variance scaling). Component signs are
/// canonicalized so the largest-magnitude loading is positive.
RawTable local_pca(const RawTable& table, std::size_t components);

/// Randomly assigns (n_parties + 1) * features_per_party distinct columns:
/// the first block plus the label goes to the task party, the rest to data
/// parties. Deterministic for a fixed seed.
std::pair<PartyData, std::vector<PartyData>> partition(
    const CategoricalTable& table, const std::string& label_column,
    int n_parties, int features_per_party, std::uint64_t seed);

}  // namespace fedvalue
