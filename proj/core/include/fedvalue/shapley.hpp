#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "fedvalue/errors.hpp"
#include "fedvalue/infotheory.hpp"

namespace fedvalue {

/// Exact nonnegative rational; large enough for Shapley weights up to 20
/// parties (numerators bounded by 20!).
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  void reduce();
  Rational& operator+=(const Rational& other);
  double to_double() const { return double(num) / double(den); }
  bool operator==(const Rational&) const = default;
};

/// |D|! (n-|D|-1)! / n! — the probability that a fixed coalition D precedes
/// party d in a uniform random ordering, with d immediately after.
Rational shapley_weight(int coalition_size, int n_parties);

/// A coalition is a sorted set of data-party ids.
using Coalition = std::vector<int>;

/// The valuation engine talks to data through this: val(D) and the marginal
/// CMI of one party given a coalition, both in nats. Implementations cache
/// internally and must be safe for concurrent calls on distinct coalitions.
class CmiProvider {
 public:
  virtual ~CmiProvider() = default;

  /// I(X_D; Y_t | X_t)
  virtual double coalition_value(const Coalition& coalition) = 0;
  /// I(X_d; Y_t | X_D, X_t)
  virtual double marginal_cmi(int party, const Coalition& coalition) = 0;
  /// Number of CMI evaluations actually computed (cache misses).
  virtual std::uint64_t evaluations() const = 0;
};

/// Centralized oracle: evaluates CMI directly from the aligned party tables.
class CentralizedCmiProvider : public CmiProvider {
 public:
  CentralizedCmiProvider(const PartyData& task,
                         const std::vector<PartyData>& data_parties);

  double coalition_value(const Coalition& coalition) override;
  double marginal_cmi(int party, const Coalition& coalition) override;
  std::uint64_t evaluations() const override { return evaluations_; }

 private:
  std::vector<FeatureSelection> selections_for(const Coalition& c) const;
  const PartyData* party(int id) const;

  const PartyData* task_;
  std::vector<const PartyData*> parties_;  // task + data parties
  CentralizedCounts counts_;
  std::map<std::pair<int, Coalition>, double> cache_;  // key.first: -1 for val(D)
  std::mutex mutex_;
  std::uint64_t evaluations_ = 0;
};

enum class ShapleyMethod { Exact, Permutations, Sampled };

struct ShapleyReport {
  std::map<int, double> phi;  // data-party id -> value in nats
  ShapleyMethod method = ShapleyMethod::Exact;
  std::uint64_t sample_count = 0;  // orderings used (Permutations/Sampled)
  std::uint64_t seed = 0;          // Sampled only
  std::uint64_t cmi_evaluations = 0;
  double total_cmi = 0.0;  // I(X_D_all; Y_t | X_t)
};

/// Subset-weighted form with a memoized val(D) table; 2^n coalition values.
ShapleyReport shapley_cmi_exact(const std::vector<int>& party_ids,
                                CmiProvider& provider);

/// Full permutation enumeration accumulating per-ordering marginal CMIs;
/// cross-check for the subset form.
ShapleyReport shapley_cmi_permutations(const std::vector<int>& party_ids,
                                       CmiProvider& provider);

/// Monte-Carlo estimate over k orderings drawn uniformly with replacement.
ShapleyReport shapley_cmi_sampled(const std::vector<int>& party_ids,
                                  CmiProvider& provider, std::uint64_t k,
                                  std::uint64_t seed);

std::string to_string(ShapleyMethod m);

}  // namespace fedvalue
