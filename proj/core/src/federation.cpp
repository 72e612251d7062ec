#include "fedvalue/federation.hpp"

#include <algorithm>
#include <chrono>

namespace fedvalue {

PartyMeta meta_of(const PartyData& party) {
  PartyMeta meta;
  meta.party_id = party.party_id;
  for (const auto& c : party.table.columns) meta.arities.push_back(c.arity);
  return meta;
}

namespace {

ServerBehavior reseed(const ServerBehavior& behavior, std::uint64_t query_id) {
  ServerBehavior b = behavior;
  const std::uint64_t mix = query_id * 0x9e3779b97f4a7c15ull;
  if (auto* f = std::get_if<ForgeCardinality>(&b)) f->seed ^= mix;
  if (auto* d = std::get_if<DropRandom>(&b)) d->seed ^= mix;
  if (auto* i = std::get_if<InjectRandom>(&b)) i->seed ^= mix;
  return b;
}

std::vector<EncryptedId> sorted_flat_set(const IdSet& set) {
  std::vector<EncryptedId> ids(set.begin(), set.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

void send_submission(Transport& t, RoleId self, std::uint64_t query_id,
                     const IdSubmission& sub) {
  ByteWriter flat;
  flat.digest_list(sorted_flat_set(sub.flat_set));
  t.send(self, kComputationServerRole,
         {MsgTag::FlatSet, query_id, flat.take()});
  ByteWriter groups;
  groups.grouping(sub.grouping);
  t.send(self, kValidationServerRole,
         {MsgTag::Grouping, query_id, groups.take()});
}

struct Announce {
  std::uint32_t q = 1;
  std::vector<RoleId> participants;
};

Announce read_announce(const ProtocolMessage& msg) {
  ByteReader r(msg.payload);
  Announce a;
  a.q = r.u32();
  const std::uint16_t n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) a.participants.push_back(r.u16());
  return a;
}

}  // namespace

void run_data_party_actor(Transport& transport, const PartyData& party,
                          const PsiConfig& psi) {
  const RoleId self = party_role(party.party_id);
  try {
    for (;;) {
      ProtocolMessage msg = transport.recv(self, kTaskPartyRole);
      if (msg.tag == MsgTag::Shutdown) return;
      if (msg.tag != MsgTag::CellQuery) {
        throw ProtocolError("party expected CellQuery");
      }
      ByteReader reader(msg.payload);
      ValueAssignment selection = reader.assignment();
      const auto ids = matching_sample_ids(party, selection);
      transport.send(self, kTaskPartyRole,
                     {MsgTag::SelectionStatus, msg.query_id,
                      {static_cast<std::uint8_t>(ids.empty() ? 0 : 1)}});

      ProtocolMessage next = transport.recv(self, kTaskPartyRole);
      if (next.tag == MsgTag::Shutdown) return;
      if (next.tag == MsgTag::Cancel) continue;
      if (next.tag != MsgTag::Proceed) {
        throw ProtocolError("party expected Proceed or Cancel");
      }
      CountQuery query;
      query.query_id = msg.query_id;
      query.config = psi;
      query.n_r = draw_n_r(psi, msg.query_id);
      IdSubmission sub = prepare_submission(party, selection, query);
      send_submission(transport, self, msg.query_id, sub);
    }
  } catch (const TransportError&) {
    // connection torn down; exit quietly
  }
}

void run_computation_server(Transport& transport, ServerBehavior behavior) {
  const RoleId self = kComputationServerRole;
  try {
    for (;;) {
      ProtocolMessage msg = transport.recv(self, kTaskPartyRole);
      if (msg.tag == MsgTag::Shutdown) return;
      if (msg.tag != MsgTag::QueryAnnounce) {
        throw ProtocolError("computation server expected QueryAnnounce");
      }
      const Announce announce = read_announce(msg);

      std::vector<IdSet> sets;
      sets.reserve(announce.participants.size());
      for (RoleId role : announce.participants) {
        ProtocolMessage m = transport.recv(self, role);
        if (m.tag != MsgTag::FlatSet || m.query_id != msg.query_id) {
          throw ProtocolError("computation server expected FlatSet");
        }
        ByteReader r(m.payload);
        auto list = r.digest_list();
        sets.emplace_back(list.begin(), list.end());
      }
      std::vector<const IdSet*> refs;
      for (const auto& s : sets) refs.push_back(&s);
      auto [i_inter, n_honest] = compute_intersection(refs);
      (void)n_honest;
      auto [reported, n_c] =
          apply_behavior(reseed(behavior, msg.query_id), std::move(i_inter));

      ByteWriter w;
      w.digest_list(reported);
      transport.send(self, kValidationServerRole,
                     {MsgTag::Iinter, msg.query_id, w.take()});
      ByteWriter card;
      card.i64(n_c);
      transport.send(self, kTaskPartyRole,
                     {MsgTag::Cardinality, msg.query_id, card.take()});
    }
  } catch (const TransportError&) {
  }
}

void run_validation_server(Transport& transport) {
  const RoleId self = kValidationServerRole;
  try {
    for (;;) {
      ProtocolMessage msg = transport.recv(self, kTaskPartyRole);
      if (msg.tag == MsgTag::Shutdown) return;
      if (msg.tag != MsgTag::QueryAnnounce) {
        throw ProtocolError("validation server expected QueryAnnounce");
      }
      const Announce announce = read_announce(msg);

      std::map<GroupToken, std::vector<EncryptedId>> merged;
      for (RoleId role : announce.participants) {
        ProtocolMessage m = transport.recv(self, role);
        if (m.tag != MsgTag::Grouping || m.query_id != msg.query_id) {
          throw ProtocolError("validation server expected Grouping");
        }
        ByteReader r(m.payload);
        auto groups = r.grouping();
        merged.insert(groups.begin(), groups.end());
      }
      ProtocolMessage inter = transport.recv(self, kComputationServerRole);
      if (inter.tag != MsgTag::Iinter || inter.query_id != msg.query_id) {
        throw ProtocolError("validation server expected Iinter");
      }
      ByteReader r(inter.payload);
      const auto i_inter = r.digest_list();
      const std::int64_t n_v = validate_intersection(i_inter, merged, announce.q);

      ByteWriter w;
      w.i64(n_v);
      transport.send(self, kTaskPartyRole,
                     {MsgTag::Validation, msg.query_id, w.take()});
    }
  } catch (const TransportError&) {
  }
}

// ---------------- FederationOrchestrator ----------------

FederationOrchestrator::FederationOrchestrator(
    Transport& transport, const PartyData& task,
    std::vector<PartyMeta> data_party_meta, PsiConfig psi)
    : transport_(transport),
      task_(&task),
      metas_(std::move(data_party_meta)),
      psi_(std::move(psi)) {
  psi_.validate();
  if (!task_->is_task() || !task_->label) {
    throw SchemaError("orchestrator needs the task party with a label");
  }
}

std::uint64_t FederationOrchestrator::run_psi_round(
    const std::map<int, ValueAssignment>& selections,
    const std::vector<std::string>& task_ids, std::uint64_t query_id) {
  const RoleId self = kTaskPartyRole;
  std::vector<RoleId> party_roles;
  for (const auto& [pid, sel] : selections) {
    if (pid != task_->party_id) party_roles.push_back(party_role(pid));
  }

  // phase 1: local-emptiness poll
  for (const auto& [pid, sel] : selections) {
    if (pid == task_->party_id) continue;
    ByteWriter w;
    w.assignment(sel);
    transport_.send(self, party_role(pid),
                    {MsgTag::CellQuery, query_id, w.take()});
  }
  bool all_nonempty = !task_ids.empty();
  for (RoleId role : party_roles) {
    ProtocolMessage status = transport_.recv(self, role);
    if (status.tag != MsgTag::SelectionStatus || status.query_id != query_id) {
      throw ProtocolError("expected SelectionStatus");
    }
    if (status.payload.at(0) == 0) all_nonempty = false;
  }
  if (!all_nonempty) {
    for (RoleId role : party_roles) {
      transport_.send(self, role, {MsgTag::Cancel, query_id, {}});
    }
    ++short_circuits_;
    return 0;
  }

  // phase 2: the PSI round proper
  const std::uint32_t n_r = draw_n_r(psi_, query_id);
  std::vector<RoleId> participants = party_roles;
  participants.push_back(self);
  ByteWriter announce;
  announce.u32(psi_.q);
  announce.u16(static_cast<std::uint16_t>(participants.size()));
  for (RoleId r : participants) announce.u16(r);
  auto payload = announce.take();
  transport_.send(self, kComputationServerRole,
                  {MsgTag::QueryAnnounce, query_id, payload});
  transport_.send(self, kValidationServerRole,
                  {MsgTag::QueryAnnounce, query_id, payload});
  for (RoleId role : party_roles) {
    transport_.send(self, role, {MsgTag::Proceed, query_id, {}});
  }

  CountQuery query;
  query.query_id = query_id;
  query.config = psi_;
  query.n_r = n_r;
  IdSubmission sub =
      prepare_submission(*task_, selections.at(task_->party_id), query);
  send_submission(transport_, self, query_id, sub);

  ProtocolMessage card = transport_.recv(self, kComputationServerRole);
  if (card.tag != MsgTag::Cardinality || card.query_id != query_id) {
    throw ProtocolError("expected Cardinality");
  }
  ProtocolMessage validation = transport_.recv(self, kValidationServerRole);
  if (validation.tag != MsgTag::Validation || validation.query_id != query_id) {
    throw ProtocolError("expected Validation");
  }
  ByteReader cr(card.payload);
  ByteReader vr(validation.payload);
  const CountResult result = verify_result(cr.i64(), vr.i64(), psi_.q, n_r);
  ++psi_rounds_;
  if (result.verdict != Verdict::Verified) {
    throw MisbehaviorError(query_id,
                           "server misbehavior on query " +
                               std::to_string(query_id) + ": n_c=" +
                               std::to_string(result.n_c) + " n_v=" +
                               std::to_string(result.n_v));
  }
  return result.cardinality;
}

std::uint64_t FederationOrchestrator::federated_count(
    const std::map<int, ValueAssignment>& selections, bool use_cache) {
  ValueAssignment key;
  for (const auto& [pid, sel] : selections) {
    for (const auto& e : sel.entries) key.entries.push_back(e);
  }
  key.normalize();

  if (use_cache) {
    std::lock_guard lock(mutex_);
    auto it = count_cache_.find(key);
    if (it != count_cache_.end()) {
      ++cache_hits_;
      return it->second;
    }
  }

  const bool has_task = selections.contains(task_->party_id);
  std::size_t n_data = selections.size() - (has_task ? 1 : 0);

  std::uint64_t count = 0;
  if (has_task && n_data == 0) {
    // task-only cells never leave the task party
    count = matching_sample_ids(*task_, selections.at(task_->party_id)).size();
    ++local_counts_;
  } else if (!has_task && n_data < 2) {
    throw ProtocolError("a count over a single remote party is not supported");
  } else {
    std::vector<std::string> task_ids;
    if (has_task) {
      task_ids = matching_sample_ids(*task_, selections.at(task_->party_id));
      if (task_ids.empty()) {
        // the final count is provably 0; skip the round entirely
        ++short_circuits_;
        count = 0;
        std::lock_guard lock(mutex_);
        count_cache_[key] = count;
        return count;
      }
    }
    std::uint64_t query_id;
    {
      std::lock_guard lock(mutex_);
      query_id = next_query_id_++;
    }
    count = run_psi_round(selections, task_ids, query_id);
  }

  std::lock_guard lock(mutex_);
  count_cache_[key] = count;
  return count;
}

CountTable FederationOrchestrator::joint_counts_for(
    const std::vector<FeatureSelection>& target,
    const std::vector<FeatureSelection>& conditioning) {
  CountTable table;
  std::vector<FeatureSelection> all = target;
  all.insert(all.end(), conditioning.begin(), conditioning.end());
  for (const auto& sel : all) {
    for (int c : sel.columns) table.layout.push_back({sel.party_id, c});
  }
  table.layout.push_back({task_->party_id, kLabelColumn});

  // split layout into task-owned positions and data-party positions
  std::vector<std::size_t> task_pos, data_pos;
  std::vector<std::uint32_t> data_arity;
  for (std::size_t i = 0; i < table.layout.size(); ++i) {
    const auto& ref = table.layout[i];
    if (ref.party_id == task_->party_id) {
      task_pos.push_back(i);
    } else {
      data_pos.push_back(i);
      const PartyMeta* meta = nullptr;
      for (const auto& m : metas_) {
        if (m.party_id == ref.party_id) meta = &m;
      }
      if (!meta || ref.column < 0 ||
          static_cast<std::size_t>(ref.column) >= meta->arities.size()) {
        throw SchemaError("no metadata for party " +
                          std::to_string(ref.party_id));
      }
      data_arity.push_back(meta->arities[ref.column]);
    }
  }

  // the task party enumerates only its locally supported tuples
  std::map<std::vector<std::uint32_t>, std::uint64_t> task_support;
  const std::size_t n = task_->table.n_rows();
  std::vector<std::uint32_t> tkey(task_pos.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < task_pos.size(); ++i) {
      const auto& ref = table.layout[task_pos[i]];
      tkey[i] = (ref.column == kLabelColumn)
                    ? task_->label->codes[r]
                    : task_->table.columns[ref.column].codes[r];
    }
    ++task_support[tkey];
  }

  std::vector<std::uint32_t> cell(table.layout.size());
  std::vector<std::uint32_t> odo(data_pos.size(), 0);
  for (const auto& [tvals, local_count] : task_support) {
    (void)local_count;
    for (std::size_t i = 0; i < task_pos.size(); ++i) {
      cell[task_pos[i]] = tvals[i];
    }
    std::fill(odo.begin(), odo.end(), 0);
    for (;;) {
      for (std::size_t i = 0; i < data_pos.size(); ++i) {
        cell[data_pos[i]] = odo[i];
      }
      ++cells_enumerated_;

      std::map<int, ValueAssignment> selections;
      for (std::size_t i = 0; i < table.layout.size(); ++i) {
        const auto& ref = table.layout[i];
        selections[ref.party_id].add(ref.party_id, ref.column, cell[i]);
      }
      for (auto& [pid, sel] : selections) sel.normalize();
      const std::uint64_t count = federated_count(selections);
      if (count > 0) table.counts[cell] = count;

      // advance the odometer over the data-party arities
      std::size_t k = 0;
      while (k < odo.size()) {
        if (++odo[k] < data_arity[k]) break;
        odo[k] = 0;
        ++k;
      }
      if (k == odo.size()) break;
    }
  }
  table.n_total = n;
  return table;
}

void FederationOrchestrator::shutdown() {
  if (shut_down_) return;
  shut_down_ = true;
  for (const auto& m : metas_) {
    transport_.send(kTaskPartyRole, party_role(m.party_id),
                    {MsgTag::Shutdown, 0, {}});
  }
  transport_.send(kTaskPartyRole, kComputationServerRole,
                  {MsgTag::Shutdown, 0, {}});
  transport_.send(kTaskPartyRole, kValidationServerRole,
                  {MsgTag::Shutdown, 0, {}});
}

// ---------------- FederatedCmiProvider ----------------

FederatedCmiProvider::FederatedCmiProvider(FederationOrchestrator& orchestrator)
    : orch_(orchestrator) {}

std::vector<FeatureSelection> FederatedCmiProvider::selections_for(
    const Coalition& c) const {
  std::vector<FeatureSelection> sels;
  for (int id : c) {
    const PartyMeta* meta = nullptr;
    for (const auto& m : orch_.metas()) {
      if (m.party_id == id) meta = &m;
    }
    if (!meta) throw SchemaError("no metadata for party " + std::to_string(id));
    FeatureSelection sel{id, {}};
    for (std::size_t i = 0; i < meta->arities.size(); ++i) {
      sel.columns.push_back(static_cast<int>(i));
    }
    sels.push_back(std::move(sel));
  }
  return sels;
}

namespace {

std::vector<FeatureSelection> task_selection(const PartyData& task) {
  FeatureSelection sel{task.party_id, {}};
  for (std::size_t i = 0; i < task.table.columns.size(); ++i) {
    sel.columns.push_back(static_cast<int>(i));
  }
  return {sel};
}

}  // namespace

double FederatedCmiProvider::coalition_value(const Coalition& coalition) {
  if (coalition.empty()) return 0.0;
  Coalition key = coalition;
  std::sort(key.begin(), key.end());
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find({-1, key});
    if (it != cache_.end()) return it->second;
  }
  double v = cmi(orch_, selections_for(key), task_selection(orch_.task())).nats;
  std::lock_guard lock(mutex_);
  auto [it, inserted] = cache_.emplace(std::pair{-1, std::move(key)}, v);
  if (inserted) ++evaluations_;
  return it->second;
}

double FederatedCmiProvider::marginal_cmi(int party, const Coalition& coalition) {
  Coalition key = coalition;
  std::sort(key.begin(), key.end());
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find({party, key});
    if (it != cache_.end()) return it->second;
  }
  auto cond = selections_for(key);
  auto task_sel = task_selection(orch_.task());
  cond.insert(cond.end(), task_sel.begin(), task_sel.end());
  double v = cmi(orch_, selections_for({party}), cond).nats;
  std::lock_guard lock(mutex_);
  auto [it, inserted] = cache_.emplace(std::pair{party, std::move(key)}, v);
  if (inserted) ++evaluations_;
  return it->second;
}

// ---------------- harness & top-level driver ----------------

TransportFactory in_process_factory(
    std::shared_ptr<InProcessTransport> fabric) {
  return [fabric](RoleId) -> std::shared_ptr<Transport> { return fabric; };
}

TransportFactory tcp_factory(std::string host, std::uint16_t port) {
  return [host = std::move(host), port](RoleId role) -> std::shared_ptr<Transport> {
    return std::make_shared<TcpRoleClient>(host, port, role);
  };
}

FederationHarness::FederationHarness(TransportFactory factory,
                                     const PartyData& task,
                                     const std::vector<PartyData>& data_parties,
                                     PsiConfig psi, ServerBehavior behavior) {
  auto comp = factory(kComputationServerRole);
  auto val = factory(kValidationServerRole);
  role_transports_.push_back(comp);
  role_transports_.push_back(val);
  actors_.emplace_back(
      [comp, behavior] { run_computation_server(*comp, behavior); });
  actors_.emplace_back([val] { run_validation_server(*val); });
  for (const auto& party : data_parties) {
    auto t = factory(party_role(party.party_id));
    role_transports_.push_back(t);
    const PartyData* p = &party;
    actors_.emplace_back([t, p, psi] { run_data_party_actor(*t, *p, psi); });
  }
  auto orch_transport = factory(kTaskPartyRole);
  role_transports_.push_back(orch_transport);
  std::vector<PartyMeta> metas;
  for (const auto& p : data_parties) metas.push_back(meta_of(p));
  orchestrator_ = std::make_unique<FederationOrchestrator>(
      *orch_transport, task, std::move(metas), std::move(psi));
}

FederationHarness::~FederationHarness() {
  try {
    orchestrator_->shutdown();
  } catch (...) {
  }
  for (auto& t : actors_) {
    if (t.joinable()) t.join();
  }
}

std::pair<ShapleyReport, ValuationRun> run_valuation(
    const PartyData& task, const std::vector<PartyData>& data_parties,
    const ValuationOptions& options) {
  std::vector<int> ids;
  for (const auto& p : data_parties) ids.push_back(p.party_id);

  const auto start = std::chrono::steady_clock::now();
  ShapleyReport report;
  ValuationRun run;
  run.mode = options.mode;
  run.method = options.method;

  auto run_method = [&](CmiProvider& provider) {
    switch (options.method) {
      case ShapleyMethod::Exact:
        report = shapley_cmi_exact(ids, provider);
        break;
      case ShapleyMethod::Permutations:
        report = shapley_cmi_permutations(ids, provider);
        break;
      case ShapleyMethod::Sampled:
        report = shapley_cmi_sampled(ids, provider, options.sample_count,
                                     options.seed);
        break;
    }
  };

  if (options.mode == Mode::Centralized) {
    CentralizedCmiProvider provider(task, data_parties);
    run_method(provider);
  } else {
    TransportFactory factory = options.transport;
    if (!factory) {
      factory = in_process_factory(std::make_shared<InProcessTransport>());
    }
    FederationHarness harness(factory, task, data_parties, options.psi,
                              options.behavior);
    FederatedCmiProvider provider(harness.orchestrator());
    run_method(provider);
    run.psi_rounds = harness.orchestrator().psi_rounds();
    run.cells_enumerated = harness.orchestrator().cells_enumerated();
    run.short_circuits = harness.orchestrator().short_circuits();
    run.cache_hits = harness.orchestrator().cache_hits();
  }
  run.cmi_evaluations = report.cmi_evaluations;
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return {std::move(report), run};
}

std::string to_string(Mode m) {
  return m == Mode::Centralized ? "centralized" : "federated";
}

}  // namespace fedvalue
