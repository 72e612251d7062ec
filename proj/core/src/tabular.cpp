#include "fedvalue/tabular.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "fedvalue/rng.hpp"

namespace fedvalue {

std::size_t RawColumn::size() const {
  return std::visit([](const auto& v) { return v.size(); }, cells);
}

const RawColumn& RawTable::column(const std::string& name) const {
  for (const auto& c : columns) {
    if (c.name == name) return c;
  }
  throw SchemaError("no such column: " + name);
}

namespace {

// RFC-4180-ish: quoted fields, doubled quotes, CRLF tolerated.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // trailing CR from CRLF
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

RawTable load_csv(const std::string& path,
                  const std::optional<std::string>& label,
                  const std::optional<std::string>& id_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path);
  const auto header = split_csv_line(line);

  std::vector<std::vector<std::string>> raw_cols(header.size());
  std::size_t n_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("ragged row " + std::to_string(n_rows + 2) + " in " +
                       path + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      raw_cols[c].push_back(std::move(fields[c]));
    }
    ++n_rows;
  }

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };

  RawTable table;
  std::optional<std::size_t> id_idx;
  if (id_column) {
    id_idx = find_col(*id_column);
    table.sample_ids = raw_cols[*id_idx];
    std::unordered_set<std::string> seen;
    for (const auto& id : table.sample_ids) {
      if (!seen.insert(id).second) throw DuplicateIdError("duplicate id: " + id);
    }
  } else {
    table.sample_ids.reserve(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
      table.sample_ids.push_back(std::to_string(i));
    }
  }

  if (label) {
    find_col(*label);  // validates presence
    table.label_column = *label;
  }

  for (std::size_t c = 0; c < header.size(); ++c) {
    if (id_idx && c == *id_idx) continue;
    RawColumn col;
    col.name = header[c];
    std::vector<double> nums(n_rows);
    bool numeric = n_rows > 0;
    for (std::size_t r = 0; r < n_rows; ++r) {
      if (!parse_double(raw_cols[c][r], nums[r])) {
        numeric = false;
        break;
      }
    }
    if (numeric) {
      col.cells = std::move(nums);
    } else {
      col.cells = std::move(raw_cols[c]);
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

CategoricalTable discretize(const RawTable& table, const BinningSpec& spec) {
  if (spec.bins_per_feature < 1) throw DomainError("bins_per_feature must be >= 1");
  CategoricalTable out;
  out.sample_ids = table.sample_ids;
  for (const auto& col : table.columns) {
    CategoricalColumn cc;
    cc.name = col.name;
    if (col.is_numeric()) {
      const auto& vals = std::get<std::vector<double>>(col.cells);
      for (double v : vals) {
        if (!std::isfinite(v)) {
          throw DomainError("non-finite cell in column " + col.name);
        }
      }
      double lo = vals.empty() ? 0.0 : *std::min_element(vals.begin(), vals.end());
      double hi = vals.empty() ? 0.0 : *std::max_element(vals.begin(), vals.end());
      if (hi <= lo) {
        cc.codes.assign(vals.size(), 0);
        cc.arity = 1;
      } else {
        const std::uint32_t bins = spec.bins_per_feature;
        const double width = (hi - lo) / bins;
        cc.codes.reserve(vals.size());
        for (double v : vals) {
          auto k = static_cast<std::int64_t>((v - lo) / width);
          if (k >= bins) k = bins - 1;  // hi lands in the last bin
          if (k < 0) k = 0;
          cc.codes.push_back(static_cast<std::uint32_t>(k));
        }
        cc.arity = bins;
      }
    } else {
      // dense re-coding in first-appearance order
      const auto& vals = std::get<std::vector<std::string>>(col.cells);
      std::map<std::string, std::uint32_t> codes;
      cc.codes.reserve(vals.size());
      for (const auto& v : vals) {
        auto [it, inserted] =
            codes.emplace(v, static_cast<std::uint32_t>(codes.size()));
        (void)inserted;
        cc.codes.push_back(it->second);
      }
      cc.arity = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(codes.size()));
    }
    out.columns.push_back(std::move(cc));
  }
  return out;
}

RawTable local_pca(const RawTable& table, std::size_t components) {
  const std::size_t n = table.n_rows();
  const std::size_t p = table.columns.size();
  if (components > p) {
    throw DimensionError("components " + std::to_string(components) +
                         " exceeds column count " + std::to_string(p));
  }
  Eigen::MatrixXd x(n, p);
  for (std::size_t c = 0; c < p; ++c) {
    if (!table.columns[c].is_numeric()) {
      throw DomainError("PCA requires numeric columns; column " +
                        table.columns[c].name + " is categorical");
    }
    const auto& vals = std::get<std::vector<double>>(table.columns[c].cells);
    for (std::size_t r = 0; r < n; ++r) x(r, c) = vals[r];
  }
  x.rowwise() -= x.colwise().mean();

  const Eigen::MatrixXd cov =
      (n > 1) ? Eigen::MatrixXd(x.transpose() * x / double(n - 1))
              : Eigen::MatrixXd::Zero(p, p);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // eigenvalues ascending; take the top `components` in descending order
  Eigen::MatrixXd loadings(p, components);
  for (std::size_t k = 0; k < components; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(p - 1 - k);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;  // canonical sign
    loadings.col(k) = v;
  }
  Eigen::MatrixXd scores = x * loadings;

  RawTable out;
  out.sample_ids = table.sample_ids;
  out.label_column = table.label_column;
  for (std::size_t k = 0; k < components; ++k) {
    RawColumn col;
    col.name = "pc" + std::to_string(k + 1);
    std::vector<double> vals(n);
    for (std::size_t r = 0; r < n; ++r) vals[r] = scores(r, k);
    col.cells = std::move(vals);
    out.columns.push_back(std::move(col));
  }
  return out;
}

std::pair<PartyData, std::vector<PartyData>> partition(
    const CategoricalTable& table, const std::string& label_column,
    int n_parties, int features_per_party, std::uint64_t seed) {
  if (n_parties < 1 || features_per_party < 1) {
    throw PartitionError("n_parties and features_per_party must be positive");
  }
  std::vector<std::size_t> feature_idx;
  std::optional<std::size_t> label_idx;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (table.columns[i].name == label_column) {
      label_idx = i;
    } else {
      feature_idx.push_back(i);
    }
  }
  if (!label_idx) throw SchemaError("missing label column: " + label_column);

  const std::size_t need =
      static_cast<std::size_t>(n_parties + 1) * features_per_party;
  if (feature_idx.size() < need) {
    throw PartitionError("need " + std::to_string(need) + " feature columns, have " +
                         std::to_string(feature_idx.size()));
  }

  Rng rng(seed);
  rng.shuffle(feature_idx);

  auto make_party = [&](int id, PartyRole role, std::size_t offset) {
    PartyData party;
    party.role = role;
    party.party_id = id;
    party.table.sample_ids = table.sample_ids;
    for (int k = 0; k < features_per_party; ++k) {
      party.table.columns.push_back(table.columns[feature_idx[offset + k]]);
    }
    return party;
  };

  PartyData task = make_party(0, PartyRole::TaskParty, 0);
  task.label = table.columns[*label_idx];

  std::vector<PartyData> data_parties;
  data_parties.reserve(n_parties);
  for (int d = 0; d < n_parties; ++d) {
    data_parties.push_back(make_party(
        d + 1, PartyRole::DataParty,
        static_cast<std::size_t>(d + 1) * features_per_party));
  }
  return {std::move(task), std::move(data_parties)};
}

}  // namespace fedvalue
