#pragma once

#include <popnet/chaining.hpp>
#include <popnet/resource_models.hpp>
#include <popnet/topology.hpp>
#include <popnet/types.hpp>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace popnet {

// Usage samples kept per instance; older samples are dropped.
inline constexpr std::size_t usage_history_limit = 3600;

struct UsageSample {
    double t = 0.0;
    double usage = 0.0;

    bool operator==(const UsageSample&) const = default;
};

// Group of instances created together through a PoP endpoint.
struct Stack {
    std::string id;
    std::string name;
    std::string pop;
    // (template resource name, instance id) in creation order.
    std::vector<std::pair<std::string, std::string>> instances;
    std::optional<std::string> chain_id;

    bool operator==(const Stack&) const = default;
};

struct PlatformState {
    GlobalConfig config;
    std::shared_ptr<const Topology> topology;
    std::map<std::string, PoPLedger> ledgers;
    // Instantiated model per PoP.
    std::map<std::string, std::shared_ptr<const ResourceModel>> models;
    // Keyed by id; ids are zero-padded so map order is creation order.
    std::map<std::string, ComputeInstance> instances;
    std::map<std::string, Chain> chains;
    FlowTables flows;
    std::map<std::string, Stack> stacks;
    std::map<std::string, std::deque<UsageSample>> usage;
    double clock = 0.0;

    std::uint64_t next_instance = 1;
    std::uint64_t next_chain = 1;
    std::uint64_t next_stack = 1;
    // Next free instance attachment port on each PoP's big switch.
    std::map<std::string, int> next_port;

    const ComputeInstance& instance(std::string_view id) const;
    const PoPLedger& ledger(std::string_view pop) const;
    const ResourceModel& model(std::string_view pop) const;
};

// Throws Error(invalid_argument) for e_cpu outside (0, 1] and
// Error(validation_error) for a topology without PoPs or with unknown model
// kinds.
PlatformState new_platform(std::shared_ptr<const Topology> topology, double e_cpu,
                           const ModelRegistry& models = ModelRegistry::global());

struct AllocationOutcome {
    bool accepted = false;
    double cpu_fraction = 0.0;
    // Peers whose limit changed, with their new limit.
    std::map<std::string, double> updated_fractions;
    std::optional<RejectReason> reason;
};

struct Allocation {
    std::optional<ComputeInstance> instance;
    AllocationOutcome outcome;
};

// Admits a new instance to `pop`. A rejection leaves the state untouched.
// Throws Error(invalid_argument) for requests with cpu_cu < 1, negative
// memory/storage, or demand outside [0, 1].
Allocation allocate(PlatformState& state, std::string_view pop, const ResourceRequest& request,
                    std::string image = {}, double demand = 1.0);

// Releases an instance, first removing any chain that traverses it.
// Throws Error(unknown_instance).
AllocationOutcome release(PlatformState& state, std::string_view instance_id);

// Limits of every live instance recomputed from the instance list alone.
std::map<std::string, double> recompute_all_limits(const PlatformState& state);

// Human-readable descriptions of broken state invariants; empty when
// consistent.
std::vector<std::string> check_invariants(const PlatformState& state);

// Single exclusive-access point around a PlatformState.
class Platform {
public:
    explicit Platform(PlatformState state) : state_(std::move(state)) {}

    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    template <class F>
    decltype(auto) exclusive(F&& f)
    {
        std::lock_guard lock(mutex_);
        return std::forward<F>(f)(state_);
    }

    template <class F>
    decltype(auto) read(F&& f) const
    {
        std::lock_guard lock(mutex_);
        return std::forward<F>(f)(static_cast<const PlatformState&>(state_));
    }

    PlatformState snapshot() const
    {
        std::lock_guard lock(mutex_);
        return state_;
    }

private:
    mutable std::mutex mutex_;
    PlatformState state_;
};

}  // namespace popnet
