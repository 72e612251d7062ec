#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "fedvalue/rng.hpp"
#include "fedvalue/tabular.hpp"

namespace fedvalue::testutil {

struct Fixture {
  PartyData task;
  std::vector<PartyData> parties;

  std::vector<int> party_ids() const {
    std::vector<int> ids;
    for (const auto& p : parties) ids.push_back(p.party_id);
    return ids;
  }
};

inline CategoricalColumn random_column(Rng& rng, const std::string& name,
                                       std::size_t n, std::uint32_t arity) {
  CategoricalColumn col;
  col.name = name;
  col.arity = arity;
  col.codes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    col.codes.push_back(static_cast<std::uint32_t>(rng.below(arity)));
  }
  return col;
}

/// Random aligned fixture: task party with `task_cols` columns plus a label,
/// and n_parties data parties with `cols_per_party` columns each.
inline Fixture random_fixture(Rng& rng, int n_parties, std::size_t n_samples,
                              std::size_t cols_per_party = 1,
                              std::uint32_t max_arity = 2,
                              std::size_t task_cols = 1,
                              std::uint32_t label_arity = 2) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_samples; ++i) {
    ids.push_back("sample-" + std::to_string(i));
  }
  auto arity = [&] {
    return static_cast<std::uint32_t>(2 + rng.below(max_arity - 1));
  };

  Fixture fx;
  fx.task.role = PartyRole::TaskParty;
  fx.task.party_id = 0;
  fx.task.table.sample_ids = ids;
  for (std::size_t c = 0; c < task_cols; ++c) {
    fx.task.table.columns.push_back(random_column(
        rng, "t" + std::to_string(c), n_samples, max_arity > 2 ? arity() : 2));
  }
  fx.task.label = random_column(rng, "y", n_samples, label_arity);

  for (int d = 1; d <= n_parties; ++d) {
    PartyData p;
    p.role = PartyRole::DataParty;
    p.party_id = d;
    p.table.sample_ids = ids;
    for (std::size_t c = 0; c < cols_per_party; ++c) {
      p.table.columns.push_back(
          random_column(rng, "d" + std::to_string(d) + "_" + std::to_string(c),
                        n_samples, max_arity > 2 ? arity() : 2));
    }
    fx.parties.push_back(std::move(p));
  }
  return fx;
}

/// Independent CMI oracle: direct evaluation of the maximum-likelihood
/// formula from per-row tuples, without any CountTable machinery.
/// Columns are given as raw code vectors; all must share the same length.
inline double oracle_cmi(const std::vector<const std::vector<std::uint32_t>*>& x,
                         const std::vector<std::uint32_t>& y,
                         const std::vector<const std::vector<std::uint32_t>*>& z) {
  const std::size_t n = y.size();
  if (n == 0 || x.empty()) return 0.0;
  using Key = std::vector<std::uint32_t>;
  std::map<Key, double> p_xzy, p_z, p_xz, p_zy;
  for (std::size_t r = 0; r < n; ++r) {
    Key kx, kz;
    for (const auto* c : x) kx.push_back((*c)[r]);
    for (const auto* c : z) kz.push_back((*c)[r]);
    Key kxzy = kx;
    kxzy.insert(kxzy.end(), kz.begin(), kz.end());
    kxzy.push_back(y[r]);
    Key kxz = kx;
    kxz.insert(kxz.end(), kz.begin(), kz.end());
    Key kzy = kz;
    kzy.push_back(y[r]);
    const double w = 1.0 / double(n);
    p_xzy[kxzy] += w;
    p_z[kz] += w;
    p_xz[kxz] += w;
    p_zy[kzy] += w;
  }
  double sum = 0.0;
  for (const auto& [key, p] : p_xzy) {
    Key kx(key.begin(), key.begin() + x.size());
    Key kz(key.begin() + x.size(), key.end() - 1);
    Key kxz = kx;
    kxz.insert(kxz.end(), kz.begin(), kz.end());
    Key kzy = kz;
    kzy.push_back(key.back());
    // p(x,y|z) / (p(x|z) p(y|z)) with all conditionals over p(z)
    sum += p * std::log((p / p_z[kz]) /
                        ((p_xz[kxz] / p_z[kz]) * (p_zy[kzy] / p_z[kz])));
  }
  return sum;
}

/// Oracle marginal CMI of data party d given a coalition, all columns used.
inline double oracle_marginal(const Fixture& fx, int d,
                              const std::vector<int>& coalition) {
  std::vector<const std::vector<std::uint32_t>*> x, z;
  for (const auto& p : fx.parties) {
    if (p.party_id == d) {
      for (const auto& c : p.table.columns) x.push_back(&c.codes);
    } else if (std::find(coalition.begin(), coalition.end(), p.party_id) !=
               coalition.end()) {
      for (const auto& c : p.table.columns) z.push_back(&c.codes);
    }
  }
  for (const auto& c : fx.task.table.columns) z.push_back(&c.codes);
  return oracle_cmi(x, fx.task.label->codes, z);
}

/// Brute-force Shapley oracle: average marginal oracle CMI over every
/// ordering of the data parties.
inline std::map<int, double> oracle_shapley(const Fixture& fx) {
  std::vector<int> order = fx.party_ids();
  std::sort(order.begin(), order.end());
  std::map<int, double> acc;
  for (int id : order) acc[id] = 0.0;
  std::size_t n_orderings = 0;
  do {
    std::vector<int> prefix;
    for (int d : order) {
      acc[d] += oracle_marginal(fx, d, prefix);
      prefix.push_back(d);
    }
    ++n_orderings;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& [id, v] : acc) v /= double(n_orderings);
  return acc;
}

}  // namespace fedvalue::testutil
