#include "fedvalue/shapley.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "fedvalue/rng.hpp"

namespace fedvalue {

namespace {

std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

}  // namespace

void Rational::reduce() {
  if (num == 0) {
    den = 1;
    return;
  }
  const std::uint64_t g = std::gcd(num, den);
  num /= g;
  den /= g;
}

Rational& Rational::operator+=(const Rational& other) {
  const std::uint64_t g = std::gcd(den, other.den);
  const unsigned __int128 d =
      static_cast<unsigned __int128>(den / g) * other.den;
  const unsigned __int128 n =
      static_cast<unsigned __int128>(num) * (other.den / g) +
      static_cast<unsigned __int128>(other.num) * (den / g);
  if (d > UINT64_MAX || n > UINT64_MAX) throw DomainError("rational overflow");
  num = static_cast<std::uint64_t>(n);
  den = static_cast<std::uint64_t>(d);
  reduce();
  return *this;
}

Rational shapley_weight(int coalition_size, int n_parties) {
  if (n_parties < 1 || n_parties > 20 || coalition_size < 0 ||
      coalition_size >= n_parties) {
    throw DomainError("shapley_weight: need 0 <= coalition_size < n_parties <= 20");
  }
  Rational w{factorial(coalition_size) * factorial(n_parties - coalition_size - 1),
             factorial(n_parties)};
  w.reduce();
  return w;
}

CentralizedCmiProvider::CentralizedCmiProvider(
    const PartyData& task, const std::vector<PartyData>& data_parties)
    : task_(&task), counts_({}) {
  parties_.push_back(&task);
  for (const auto& p : data_parties) parties_.push_back(&p);
  counts_ = CentralizedCounts(parties_);
}

const PartyData* CentralizedCmiProvider::party(int id) const {
  for (const auto* p : parties_) {
    if (p->party_id == id) return p;
  }
  throw AlignmentError("unknown party id " + std::to_string(id));
}

std::vector<FeatureSelection> CentralizedCmiProvider::selections_for(
    const Coalition& c) const {
  std::vector<FeatureSelection> sels;
  for (int id : c) {
    const PartyData* p = party(id);
    FeatureSelection sel{id, {}};
    for (std::size_t i = 0; i < p->table.columns.size(); ++i) {
      sel.columns.push_back(static_cast<int>(i));
    }
    sels.push_back(std::move(sel));
  }
  return sels;
}

double CentralizedCmiProvider::coalition_value(const Coalition& coalition) {
  if (coalition.empty()) return 0.0;
  Coalition key = coalition;
  std::sort(key.begin(), key.end());
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find({-1, key});
    if (it != cache_.end()) return it->second;
  }
  auto task_sel = selections_for({task_->party_id});
  double v = cmi(counts_, selections_for(key), task_sel).nats;
  std::lock_guard lock(mutex_);
  auto [it, inserted] = cache_.emplace(std::pair{-1, std::move(key)}, v);
  if (inserted) ++evaluations_;
  return it->second;
}

double CentralizedCmiProvider::marginal_cmi(int party_id,
                                            const Coalition& coalition) {
  Coalition key = coalition;
  std::sort(key.begin(), key.end());
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find({party_id, key});
    if (it != cache_.end()) return it->second;
  }
  auto cond = selections_for(key);
  auto task_sel = selections_for({task_->party_id});
  cond.insert(cond.end(), task_sel.begin(), task_sel.end());
  double v = cmi(counts_, selections_for({party_id}), cond).nats;
  std::lock_guard lock(mutex_);
  auto [it, inserted] = cache_.emplace(std::pair{party_id, std::move(key)}, v);
  if (inserted) ++evaluations_;
  return it->second;
}

ShapleyReport shapley_cmi_exact(const std::vector<int>& party_ids,
                                CmiProvider& provider) {
  const int n = static_cast<int>(party_ids.size());
  if (n < 1) throw DomainError("no data parties");
  if (n > 20) throw ScaleError("exact Shapley limited to 20 parties; use sampling");
  std::vector<int> ids = party_ids;
  std::sort(ids.begin(), ids.end());

  const std::uint64_t before = provider.evaluations();
  const std::uint32_t n_masks = 1u << n;
  std::vector<double> val(n_masks);
  for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
    Coalition c;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) c.push_back(ids[i]);
    }
    val[mask] = provider.coalition_value(c);
  }

  std::vector<double> weight(n);
  for (int s = 0; s < n; ++s) weight[s] = shapley_weight(s, n).to_double();

  ShapleyReport report;
  report.method = ShapleyMethod::Exact;
  for (int i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    double phi = 0.0;
    for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      phi += weight[std::popcount(mask)] * (val[mask | bit] - val[mask]);
    }
    report.phi[ids[i]] = phi;
  }
  report.total_cmi = val[n_masks - 1];
  report.cmi_evaluations = provider.evaluations() - before;
  return report;
}

namespace {

double cached_marginal(CmiProvider& provider, int d, Coalition prefix,
                       std::map<std::pair<int, Coalition>, double>& cache) {
  std::sort(prefix.begin(), prefix.end());
  auto it = cache.find({d, prefix});
  if (it != cache.end()) return it->second;
  double v = provider.marginal_cmi(d, prefix);
  cache.emplace(std::pair{d, std::move(prefix)}, v);
  return v;
}

}  // namespace

ShapleyReport shapley_cmi_permutations(const std::vector<int>& party_ids,
                                       CmiProvider& provider) {
  const int n = static_cast<int>(party_ids.size());
  if (n < 1) throw DomainError("no data parties");
  if (n > 8) throw ScaleError("permutation enumeration limited to 8 parties");
  std::vector<int> order = party_ids;
  std::sort(order.begin(), order.end());
  const std::vector<int> ids = order;

  const std::uint64_t before = provider.evaluations();
  std::map<std::pair<int, Coalition>, double> cache;
  std::map<int, double> acc;
  for (int id : ids) acc[id] = 0.0;
  std::uint64_t n_orderings = 0;
  do {
    Coalition prefix;
    for (int d : order) {
      acc[d] += cached_marginal(provider, d, prefix, cache);
      prefix.push_back(d);
    }
    ++n_orderings;
  } while (std::next_permutation(order.begin(), order.end()));

  ShapleyReport report;
  report.method = ShapleyMethod::Permutations;
  report.sample_count = n_orderings;
  for (auto& [id, sum] : acc) report.phi[id] = sum / double(n_orderings);
  report.total_cmi = provider.coalition_value(ids);
  report.cmi_evaluations = provider.evaluations() - before;
  return report;
}

ShapleyReport shapley_cmi_sampled(const std::vector<int>& party_ids,
                                  CmiProvider& provider, std::uint64_t k,
                                  std::uint64_t seed) {
  const int n = static_cast<int>(party_ids.size());
  if (n < 1) throw DomainError("no data parties");
  if (k < 1) throw DomainError("sample count must be >= 1");
  std::vector<int> ids = party_ids;
  std::sort(ids.begin(), ids.end());

  const std::uint64_t before = provider.evaluations();
  Rng rng(seed);
  std::map<std::pair<int, Coalition>, double> cache;
  std::map<int, double> acc;
  for (int id : ids) acc[id] = 0.0;

  std::vector<int> order = ids;
  for (std::uint64_t trial = 0; trial < k; ++trial) {
    order = ids;
    rng.shuffle(order);
    Coalition prefix;
    for (int d : order) {
      acc[d] += cached_marginal(provider, d, prefix, cache);
      prefix.push_back(d);
    }
  }

  ShapleyReport report;
  report.method = ShapleyMethod::Sampled;
  report.sample_count = k;
  report.seed = seed;
  for (auto& [id, sum] : acc) report.phi[id] = sum / double(k);
  report.total_cmi = provider.coalition_value(ids);
  report.cmi_evaluations = provider.evaluations() - before;
  return report;
}

std::string to_string(ShapleyMethod m) {
  switch (m) {
    case ShapleyMethod::Exact: return "exact";
    case ShapleyMethod::Permutations: return "permutations";
    case ShapleyMethod::Sampled: return "sampled";
  }
  return "?";
}

}  // namespace fedvalue
