#include <popnet/platform.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace popnet {

namespace {

constexpr double budget_slack = 1e-12;

std::string make_instance_id(std::uint64_t seq)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "i-%06llu", static_cast<unsigned long long>(seq));
    return buffer;
}

void validate_request(const ResourceRequest& request, double demand)
{
    if (request.cpu_cu < 1) {
        throw Error(ErrorCode::invalid_argument, "cpu_cu must be at least 1");
    }
    if (request.memory_mb < 0 || request.storage_gb < 0) {
        throw Error(ErrorCode::invalid_argument, "memory_mb and storage_gb must be non-negative");
    }
    if (!(demand >= 0.0 && demand <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "demand must be in [0,1]");
    }
}

struct PoolTotals {
    std::int64_t mc = 0;
    std::int64_t ac = 0;
};

std::map<std::string, PoolTotals> pool_totals(const PlatformState& state)
{
    std::map<std::string, PoolTotals> pools;
    for (const auto& [name, ledger] : state.ledgers) {
        auto& pool = pools[ledger.model.kind];
        pool.mc += ledger.mc_cpu;
        pool.ac += ledger.ac_cpu;
    }
    return pools;
}

double evaluate_limit(const PlatformState& state, const std::map<std::string, PoolTotals>& pools,
                      const ComputeInstance& instance)
{
    const auto& ledger = state.ledger(instance.pop);
    const auto& pool = pools.at(ledger.model.kind);
    const LimitInputs inputs{state.config, ledger, pool.mc, pool.ac, state.instances.size()};
    return state.model(instance.pop).limit(instance, inputs);
}

bool affected_by_change(const PlatformState& state, const ComputeInstance& instance, std::string_view changed_pop)
{
    switch (state.model(instance.pop).scope()) {
    case LimitScope::instance: return false;
    case LimitScope::pop: return instance.pop == changed_pop;
    case LimitScope::pool: return state.ledger(instance.pop).model.kind == state.ledger(changed_pop).model.kind;
    case LimitScope::platform: return true;
    }
    return true;
}

// Re-evaluates the limits of every instance the change at `changed_pop`
// affects and returns the ones that moved, excluding `skip`.
std::map<std::string, double> apply_limits(PlatformState& state, std::string_view changed_pop,
                                           std::string_view skip)
{
    const auto pools = pool_totals(state);
    std::map<std::string, double> updated;
    for (auto& [id, instance] : state.instances) {
        if (id != skip && !affected_by_change(state, instance, changed_pop)) {
            continue;
        }
        const double limit = evaluate_limit(state, pools, instance);
        if (id != skip && limit != instance.cpu_fraction) {
            updated.emplace(id, limit);
        }
        instance.cpu_fraction = limit;
    }
    return updated;
}

void assert_invariants(const PlatformState& state)
{
    if (auto broken = check_invariants(state); !broken.empty()) {
        throw std::logic_error("platform invariant violated: " + broken.front());
    }
}

}  // namespace

const ComputeInstance& PlatformState::instance(std::string_view id) const
{
    auto it = instances.find(std::string(id));
    if (it == instances.end()) {
        throw Error(ErrorCode::unknown_instance, "unknown instance '" + std::string(id) + "'");
    }
    return it->second;
}

const PoPLedger& PlatformState::ledger(std::string_view pop) const
{
    auto it = ledgers.find(std::string(pop));
    if (it == ledgers.end()) {
        throw Error(ErrorCode::unknown_pop, "unknown PoP '" + std::string(pop) + "'");
    }
    return it->second;
}

const ResourceModel& PlatformState::model(std::string_view pop) const
{
    auto it = models.find(std::string(pop));
    if (it == models.end()) {
        throw Error(ErrorCode::unknown_pop, "unknown PoP '" + std::string(pop) + "'");
    }
    return *it->second;
}

PlatformState new_platform(std::shared_ptr<const Topology> topology, double e_cpu, const ModelRegistry& registry)
{
    if (!(e_cpu > 0.0 && e_cpu <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "e_cpu must be in (0,1]");
    }
    if (!topology || topology->pops().empty()) {
        throw Error(ErrorCode::validation_error, "topology has no PoPs");
    }

    PlatformState state;
    state.config.e_cpu = e_cpu;
    state.config.n_pops = static_cast<int>(topology->pops().size());
    for (const auto& pop : topology->pops()) {
        state.config.total_mc += pop.mc_cpu;
    }

    for (const auto& pop : topology->pops()) {
        PoPLedger ledger;
        ledger.pop = pop.name;
        ledger.mc_cpu = pop.mc_cpu;
        ledger.mem_capacity_mb = pop.mem_capacity_mb;
        ledger.storage_capacity_gb = pop.storage_capacity_gb;
        ledger.model = pop.model;
        state.ledgers.emplace(pop.name, std::move(ledger));
        state.models.emplace(pop.name, registry.create(pop.model, state.config));
        const auto node = *topology->find(pop.name);
        state.next_port.emplace(pop.name, static_cast<int>(topology->edges(node).size()) + 1);
    }
    state.topology = std::move(topology);
    return state;
}

Allocation allocate(PlatformState& state, std::string_view pop, const ResourceRequest& request, std::string image,
                    double demand)
{
    validate_request(request, demand);

    auto reject = [](RejectReason reason) {
        Allocation result;
        result.outcome.reason = reason;
        return result;
    };

    auto ledger_it = state.ledgers.find(std::string(pop));
    if (ledger_it == state.ledgers.end()) {
        return reject(RejectReason::unknown_pop);
    }
    PoPLedger& ledger = ledger_it->second;
    if (!state.model(pop).admits(ledger, request.cpu_cu, state.config)) {
        return reject(RejectReason::cpu_exhausted);
    }
    if (ledger.mem_allocated_mb + request.memory_mb > ledger.mem_capacity_mb) {
        return reject(RejectReason::memory_exhausted);
    }
    if (ledger.storage_allocated_gb + request.storage_gb > ledger.storage_capacity_gb) {
        return reject(RejectReason::storage_exhausted);
    }

    ComputeInstance instance;
    instance.id = make_instance_id(state.next_instance++);
    instance.pop = std::string(pop);
    instance.image = std::move(image);
    instance.request = request;
    instance.demand = demand;
    instance.created_at = state.clock;
    instance.attach_port = state.next_port[instance.pop]++;

    ledger.ac_cpu += request.cpu_cu;
    ledger.mem_allocated_mb += request.memory_mb;
    ledger.storage_allocated_gb += request.storage_gb;
    const std::string id = instance.id;
    state.instances.emplace(id, std::move(instance));

    Allocation result;
    result.outcome.updated_fractions = apply_limits(state, pop, id);
    result.outcome.accepted = true;
    result.outcome.cpu_fraction = state.instances.at(id).cpu_fraction;
    result.instance = state.instances.at(id);
    assert_invariants(state);
    return result;
}

AllocationOutcome release(PlatformState& state, std::string_view instance_id)
{
    const ComputeInstance instance = state.instance(instance_id);

    std::vector<std::string> chains;
    for (const auto& [chain_id, chain] : state.chains) {
        if (std::find(chain.hops.begin(), chain.hops.end(), instance.id) != chain.hops.end()) {
            chains.push_back(chain_id);
        }
    }
    for (const auto& chain_id : chains) {
        remove_chain(state, chain_id);
    }
    for (auto& [stack_id, stack] : state.stacks) {
        std::erase_if(stack.instances, [&](const auto& entry) { return entry.second == instance.id; });
    }

    auto& ledger = state.ledgers.at(instance.pop);
    ledger.ac_cpu -= instance.request.cpu_cu;
    ledger.mem_allocated_mb -= instance.request.memory_mb;
    ledger.storage_allocated_gb -= instance.request.storage_gb;
    state.instances.erase(instance.id);
    state.usage.erase(instance.id);

    AllocationOutcome outcome;
    outcome.accepted = true;
    outcome.updated_fractions = apply_limits(state, instance.pop, {});
    assert_invariants(state);
    return outcome;
}

std::map<std::string, double> recompute_all_limits(const PlatformState& state)
{
    const auto pools = pool_totals(state);
    std::map<std::string, double> out;
    for (const auto& [id, instance] : state.instances) {
        out.emplace(id, evaluate_limit(state, pools, instance));
    }
    return out;
}

std::vector<std::string> check_invariants(const PlatformState& state)
{
    std::vector<std::string> broken;

    std::map<std::string, PoPLedger> expected;
    for (const auto& [name, ledger] : state.ledgers) {
        auto& sum = expected[name];
        sum.ac_cpu = 0;
    }
    double budget = 0.0;
    for (const auto& [id, instance] : state.instances) {
        auto it = expected.find(instance.pop);
        if (it == expected.end()) {
            broken.push_back("instance " + id + " homed in unknown PoP " + instance.pop);
            continue;
        }
        it->second.ac_cpu += instance.request.cpu_cu;
        it->second.mem_allocated_mb += instance.request.memory_mb;
        it->second.storage_allocated_gb += instance.request.storage_gb;
        if (state.model(instance.pop).budgeted()) {
            budget += instance.cpu_fraction;
            if (instance.cpu_fraction > state.config.e_cpu * (1.0 + budget_slack)) {
                broken.push_back("instance " + id + " limit exceeds e_cpu");
            }
        }
        if (instance.cpu_fraction < 0.0 || instance.cpu_fraction > 1.0) {
            broken.push_back("instance " + id + " limit outside [0,1]");
        }
    }
    if (budget > state.config.e_cpu * (1.0 + budget_slack)) {
        broken.push_back("sum of limits exceeds e_cpu");
    }

    for (const auto& [name, ledger] : state.ledgers) {
        const auto& sum = expected.at(name);
        if (ledger.ac_cpu != sum.ac_cpu || ledger.mem_allocated_mb != sum.mem_allocated_mb ||
            ledger.storage_allocated_gb != sum.storage_allocated_gb) {
            broken.push_back("ledger " + name + " out of sync with its instances");
        }
        if (ledger.mem_allocated_mb > ledger.mem_capacity_mb ||
            ledger.storage_allocated_gb > ledger.storage_capacity_gb) {
            broken.push_back("ledger " + name + " exceeds memory or storage capacity");
        }
        if (ledger.model.kind == model_kind::fixed_limit_a && ledger.ac_cpu > ledger.mc_cpu) {
            broken.push_back("ledger " + name + " over-allocated under fixed limit");
        }
    }

    if (broken.empty()) {
        const auto fresh = recompute_all_limits(state);
        for (const auto& [id, instance] : state.instances) {
            if (fresh.at(id) != instance.cpu_fraction) {
                broken.push_back("instance " + id + " limit differs from recomputation");
            }
        }
    }

    std::set<int> tags;
    for (const auto& [chain_id, chain] : state.chains) {
        if (!tags.insert(chain.vlan_tag).second) {
            broken.push_back("chain " + chain_id + " reuses VLAN tag " + std::to_string(chain.vlan_tag));
        }
        for (const auto& hop : chain.hops) {
            if (!state.instances.contains(hop)) {
                broken.push_back("chain " + chain_id + " references released instance " + hop);
            }
        }
    }
    return broken;
}

}  // namespace popnet
