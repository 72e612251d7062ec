#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fedvalue/infotheory.hpp"
#include "fedvalue/psi.hpp"
#include "fedvalue/shapley.hpp"
#include "fedvalue/transport.hpp"

namespace fedvalue {

/// Shared metadata (not data): how many columns each party holds and their
/// arities. The orchestrator needs this to enumerate joint cells.
struct PartyMeta {
  int party_id = 0;
  std::vector<std::uint32_t> arities;
};

PartyMeta meta_of(const PartyData& party);

/// Data-party actor loop: answers cell queries, prepares PSI submissions,
/// exits on Shutdown.
void run_data_party_actor(Transport& transport, const PartyData& party,
                          const PsiConfig& psi);

/// Computation-server actor loop. `behavior` is Honest in production; the
/// adversarial variants drive the attack tests.
void run_computation_server(Transport& transport,
                            ServerBehavior behavior = Honest{});

/// Validation-server actor loop: merges duplicate-group maps and checks the
/// reported intersection.
void run_validation_server(Transport& transport);

/// Task-party side of the protocol: turns joint-count cells into verified
/// PSI rounds, with a verified-count cache and instrumentation.
class FederationOrchestrator : public CountSource {
 public:
  FederationOrchestrator(Transport& transport, const PartyData& task,
                         std::vector<PartyMeta> data_party_meta,
                         PsiConfig psi);

  /// One verified intersection-cardinality query. Selections map party id to
  /// that party's local filter; the task party's selection (including the
  /// label entry) is evaluated locally. Throws MisbehaviorError on a failed
  /// verification.
  std::uint64_t federated_count(const std::map<int, ValueAssignment>& selections,
                                bool use_cache = true);

  CountTable joint_counts_for(
      const std::vector<FeatureSelection>& target,
      const std::vector<FeatureSelection>& conditioning) override;

  void shutdown();  // broadcasts Shutdown to parties and servers

  const PartyData& task() const { return *task_; }
  const std::vector<PartyMeta>& metas() const { return metas_; }

  // instrumentation
  std::uint64_t psi_rounds() const { return psi_rounds_; }
  std::uint64_t cells_enumerated() const { return cells_enumerated_; }
  std::uint64_t short_circuits() const { return short_circuits_; }
  std::uint64_t cache_hits() const { return cache_hits_; }
  std::uint64_t local_counts() const { return local_counts_; }

 private:
  std::uint64_t run_psi_round(const std::map<int, ValueAssignment>& selections,
                              const std::vector<std::string>& task_ids,
                              std::uint64_t query_id);

  Transport& transport_;
  const PartyData* task_;
  std::vector<PartyMeta> metas_;
  PsiConfig psi_;
  std::uint64_t next_query_id_ = 1;
  std::map<ValueAssignment, std::uint64_t> count_cache_;
  std::mutex mutex_;
  std::atomic<std::uint64_t> psi_rounds_{0};
  std::atomic<std::uint64_t> cells_enumerated_{0};
  std::atomic<std::uint64_t> short_circuits_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> local_counts_{0};
  bool shut_down_ = false;
};

/// CMI provider backed by the federated count source.
class FederatedCmiProvider : public CmiProvider {
 public:
  explicit FederatedCmiProvider(FederationOrchestrator& orchestrator);

  double coalition_value(const Coalition& coalition) override;
  double marginal_cmi(int party, const Coalition& coalition) override;
  std::uint64_t evaluations() const override { return evaluations_; }

 private:
  std::vector<FeatureSelection> selections_for(const Coalition& c) const;

  FederationOrchestrator& orch_;
  std::map<std::pair<int, Coalition>, double> cache_;
  std::mutex mutex_;
  std::uint64_t evaluations_ = 0;
};

/// Creates one Transport view per role; the in-process fabric returns the
/// same shared object for every role, TCP mode returns one socket client per
/// role.
using TransportFactory = std::function<std::shared_ptr<Transport>(RoleId)>;

TransportFactory in_process_factory(std::shared_ptr<InProcessTransport> fabric);
TransportFactory tcp_factory(std::string host, std::uint16_t port);

/// Spins up server and data-party actors, exposes the orchestrator, and
/// shuts everything down on destruction.
class FederationHarness {
 public:
  FederationHarness(TransportFactory factory, const PartyData& task,
                    const std::vector<PartyData>& data_parties, PsiConfig psi,
                    ServerBehavior behavior = Honest{});
  ~FederationHarness();

  FederationHarness(const FederationHarness&) = delete;
  FederationHarness& operator=(const FederationHarness&) = delete;

  FederationOrchestrator& orchestrator() { return *orchestrator_; }

 private:
  std::vector<std::shared_ptr<Transport>> role_transports_;
  std::vector<std::thread> actors_;
  std::unique_ptr<FederationOrchestrator> orchestrator_;
};

enum class Mode { Centralized, Federated };

struct ValuationOptions {
  Mode mode = Mode::Centralized;
  ShapleyMethod method = ShapleyMethod::Exact;
  std::uint64_t sample_count = 1000;  // Sampled only
  std::uint64_t seed = 0;
  PsiConfig psi;
  ServerBehavior behavior = Honest{};
  TransportFactory transport;  // Federated only; defaults to in-process
};

struct ValuationRun {
  Mode mode = Mode::Centralized;
  ShapleyMethod method = ShapleyMethod::Exact;
  double wall_seconds = 0.0;
  std::uint64_t psi_rounds = 0;
  std::uint64_t cells_enumerated = 0;
  std::uint64_t short_circuits = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cmi_evaluations = 0;
};

std::pair<ShapleyReport, ValuationRun> run_valuation(
    const PartyData& task, const std::vector<PartyData>& data_parties,
    const ValuationOptions& options);

std::string to_string(Mode m);

}  // namespace fedvalue
