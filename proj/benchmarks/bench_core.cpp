#include <benchmark/benchmark.h>

#include "fedvalue/infotheory.hpp"
#include "fedvalue/psi.hpp"
#include "fedvalue/shapley.hpp"
#include "fedvalue/tabular.hpp"
#include "synthetic.hpp"

using namespace fedvalue;

namespace {

std::pair<PartyData, std::vector<PartyData>> fixture(std::size_t n_samples,
                                                     int n_parties) {
  auto table = tools::synthetic_binary_table(
      n_samples, static_cast<std::size_t>(n_parties) + 1, 7);
  return partition(table, "y", n_parties, 1, 7);
}

void BM_JointCounts(benchmark::State& state) {
  auto [task, parties] = fixture(static_cast<std::size_t>(state.range(0)), 3);
  std::vector<const PartyData*> all{&task};
  for (const auto& p : parties) all.push_back(&p);
  std::vector<FeatureSelection> sels;
  for (const auto* p : all) sels.push_back({p->party_id, {0}});
  for (auto _ : state) {
    benchmark::DoNotOptimize(joint_counts(all, sels, true));
  }
}
BENCHMARK(BM_JointCounts)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_ShapleyExact(benchmark::State& state) {
  auto [task, parties] = fixture(4096, static_cast<int>(state.range(0)));
  std::vector<int> ids;
  for (const auto& p : parties) ids.push_back(p.party_id);
  for (auto _ : state) {
    CentralizedCmiProvider provider(task, parties);
    benchmark::DoNotOptimize(shapley_cmi_exact(ids, provider));
  }
}
BENCHMARK(BM_ShapleyExact)->Arg(3)->Arg(5)->Arg(7);

void BM_PrepareSubmission(benchmark::State& state) {
  auto [task, parties] = fixture(static_cast<std::size_t>(state.range(0)), 2);
  CountQuery query;
  query.query_id = 1;
  query.config = {3, 4, 4, "bench-shared", "bench-group"};
  query.n_r = 4;
  ValueAssignment sel;
  sel.add(parties[0].party_id, 0, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prepare_submission(parties[0], sel, query));
  }
}
BENCHMARK(BM_PrepareSubmission)->Arg(1000)->Arg(10000);

void BM_Intersection(benchmark::State& state) {
  auto [task, parties] = fixture(static_cast<std::size_t>(state.range(0)), 2);
  CountQuery query;
  query.query_id = 1;
  query.config = {3, 4, 4, "bench-shared", "bench-group"};
  query.n_r = 4;
  ValueAssignment empty_sel;
  auto a = prepare_submission(parties[0], empty_sel, query);
  auto b = prepare_submission(parties[1], empty_sel, query);
  std::vector<const IdSet*> sets{&a.flat_set, &b.flat_set};
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_intersection(sets));
  }
}
BENCHMARK(BM_Intersection)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
