#pragma once

#include <popnet/types.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace popnet {

struct PlatformState;

// Per-PoP capacity and allocation accounting.
struct PoPLedger {
    std::string pop;
    std::int64_t mc_cpu = 0;  // compute units available
    std::int64_t ac_cpu = 0;  // compute units allocated
    std::int64_t mem_capacity_mb = 0;
    std::int64_t mem_allocated_mb = 0;
    std::int64_t storage_capacity_gb = 0;
    std::int64_t storage_allocated_gb = 0;
    ResourceModelRef model;

    bool operator==(const PoPLedger&) const = default;
};

// Which instances a model re-evaluates when the ledger of one of its PoPs
// changes.
enum class LimitScope {
    instance,  // only the instance being admitted; peers keep their limits
    pop,       // every instance homed in the same PoP
    pool,      // every instance in PoPs governed by the same model kind
    platform,  // every instance in PoPs governed by the same model kind, and
               // re-evaluated on any platform-wide change
};

// What a model sees when it computes the limit of one instance. The ledger is
// the post-update ledger of the instance's home PoP.
struct LimitInputs {
    const GlobalConfig& config;
    const PoPLedger& ledger;
    // Sums over all PoPs governed by the same model kind.
    std::int64_t pool_mc = 0;
    std::int64_t pool_ac = 0;
    // Live instances on the whole platform, including the one being admitted.
    std::size_t live_instances = 0;
};

// CPU limitation function for the PoPs it governs. Implementations hold no
// mutable state.
class ResourceModel {
public:
    virtual ~ResourceModel() = default;

    virtual LimitScope scope() const = 0;

    // Whether `nc` more compute units may be admitted to the PoP whose
    // pre-update ledger is given.
    virtual bool admits(const PoPLedger& ledger, std::int64_t nc, const GlobalConfig& config) const = 0;

    // Whether limits produced by this model count against the e_cpu budget.
    virtual bool budgeted() const { return true; }

    virtual double limit(const ComputeInstance& instance, const LimitInputs& inputs) const = 0;
};

using ModelFactory =
    std::function<std::shared_ptr<const ResourceModel>(const ModelParams&, const GlobalConfig&)>;

class ModelRegistry {
public:
    // Empty registry; use with_builtins() for one that knows the four
    // built-in kinds.
    ModelRegistry() = default;

    static ModelRegistry with_builtins();
    // Process-wide registry consulted by topology validation and platform
    // start-up. Not synchronized: register models before starting platforms.
    static ModelRegistry& global();

    // Throws Error(duplicate_name) if `name` is taken.
    void register_model(const std::string& name, ModelFactory factory);

    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;

    // Throws Error(validation_error) for unknown kinds.
    std::shared_ptr<const ResourceModel> create(const ResourceModelRef& ref, const GlobalConfig& config) const;

private:
    std::map<std::string, ModelFactory, std::less<>> factories_;
};

// Fixed-limit model: (e_cpu / total_mc) * nc, or nullopt (reject) when
// ac + nc would exceed mc.
std::optional<double> cpu_limit_model_a(std::int64_t nc, const PoPLedger& ledger, const GlobalConfig& config);

// Over-provisioning model: (e_cpu / total_mc) * (mc / max(mc, ac)) * nc. The
// ledger's ac must already include the instance being evaluated.
double cpu_limit_model_b(std::int64_t nc, const PoPLedger& ledger, const GlobalConfig& config);

// Limits every instance of `pop` would have if recomputed from the current
// ledger. Instances outside `pop` are not part of the result.
std::map<std::string, double> recompute_pop_limits(const PlatformState& state, std::string_view pop);

// Equal share of `phys_capacity` across every live instance, bounded by each
// instance's demand.
std::map<std::string, double> baseline_none_usage(const PlatformState& state, double phys_capacity = 1.0);

// Over-provisioning formula evaluated over the pool of all shared_pool PoPs.
// `nc` is assumed to be already counted in the pool's allocation.
double shared_pool_limit(std::int64_t nc, const PlatformState& state);

}  // namespace popnet
