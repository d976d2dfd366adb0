#include <popnet/platform.hpp>
#include <popnet/resource_models.hpp>

#include <algorithm>

namespace popnet {

namespace {

void require_positive(std::int64_t nc)
{
    if (nc < 1) {
        throw Error(ErrorCode::invalid_argument, "compute units must be at least 1");
    }
}

double unit_share(const GlobalConfig& config)
{
    return config.e_cpu / static_cast<double>(config.total_mc);
}

double over_provisioning(std::int64_t mc, std::int64_t ac, std::int64_t nc, const GlobalConfig& config)
{
    return unit_share(config) * (static_cast<double>(mc) / static_cast<double>(std::max(mc, ac))) *
           static_cast<double>(nc);
}

class FixedLimitModel final : public ResourceModel {
public:
    LimitScope scope() const override { return LimitScope::instance; }

    bool admits(const PoPLedger& ledger, std::int64_t nc, const GlobalConfig&) const override
    {
        return ledger.ac_cpu + nc <= ledger.mc_cpu;
    }

    double limit(const ComputeInstance& instance, const LimitInputs& inputs) const override
    {
        return unit_share(inputs.config) * static_cast<double>(instance.request.cpu_cu);
    }
};

class OverProvisioningModel final : public ResourceModel {
public:
    LimitScope scope() const override { return LimitScope::pop; }

    bool admits(const PoPLedger&, std::int64_t, const GlobalConfig&) const override { return true; }

    double limit(const ComputeInstance& instance, const LimitInputs& inputs) const override
    {
        return over_provisioning(inputs.ledger.mc_cpu, inputs.ledger.ac_cpu, instance.request.cpu_cu,
                                 inputs.config);
    }
};

// Over-provisioning over the union of all shared_pool PoPs.
class SharedPoolModel final : public ResourceModel {
public:
    LimitScope scope() const override { return LimitScope::pool; }

    bool admits(const PoPLedger&, std::int64_t, const GlobalConfig&) const override { return true; }

    double limit(const ComputeInstance& instance, const LimitInputs& inputs) const override
    {
        return over_provisioning(inputs.pool_mc, inputs.pool_ac, instance.request.cpu_cu, inputs.config);
    }
};

// No limitation: every instance competes for the physical CPU.
class NoModel final : public ResourceModel {
public:
    explicit NoModel(double phys_capacity) : phys_capacity_(phys_capacity) {}

    LimitScope scope() const override { return LimitScope::platform; }

    bool admits(const PoPLedger&, std::int64_t, const GlobalConfig&) const override { return true; }

    bool budgeted() const override { return false; }

    double limit(const ComputeInstance& instance, const LimitInputs& inputs) const override
    {
        if (inputs.live_instances == 0) {
            return std::min(instance.demand, phys_capacity_);
        }
        return std::min(instance.demand, phys_capacity_ / static_cast<double>(inputs.live_instances));
    }

private:
    double phys_capacity_;
};

double param_or(const ModelParams& params, const std::string& key, double fallback)
{
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

}  // namespace

ModelRegistry ModelRegistry::with_builtins()
{
    ModelRegistry registry;
    registry.register_model(std::string(model_kind::none), [](const ModelParams& params, const GlobalConfig&) {
        const double phys = param_or(params, "phys_capacity", 1.0);
        if (!(phys > 0.0)) {
            throw Error(ErrorCode::validation_error, "none: phys_capacity must be positive");
        }
        return std::make_shared<NoModel>(phys);
    });
    registry.register_model(std::string(model_kind::shared_pool), [](const ModelParams&, const GlobalConfig&) {
        return std::make_shared<SharedPoolModel>();
    });
    registry.register_model(std::string(model_kind::fixed_limit_a), [](const ModelParams&, const GlobalConfig&) {
        return std::make_shared<FixedLimitModel>();
    });
    registry.register_model(std::string(model_kind::over_provisioning_b),
                            [](const ModelParams&, const GlobalConfig&) {
                                return std::make_shared<OverProvisioningModel>();
                            });
    return registry;
}

ModelRegistry& ModelRegistry::global()
{
    static ModelRegistry registry = with_builtins();
    return registry;
}

void ModelRegistry::register_model(const std::string& name, ModelFactory factory)
{
    if (name.empty()) {
        throw Error(ErrorCode::invalid_argument, "model name must not be empty");
    }
    if (!factories_.emplace(name, std::move(factory)).second) {
        throw Error(ErrorCode::duplicate_name, "resource model '" + name + "' is already registered");
    }
}

bool ModelRegistry::contains(std::string_view name) const
{
    return factories_.find(name) != factories_.end();
}

std::vector<std::string> ModelRegistry::names() const
{
    std::vector<std::string> out;
    for (const auto& entry : factories_) {
        out.push_back(entry.first);
    }
    return out;
}

std::shared_ptr<const ResourceModel> ModelRegistry::create(const ResourceModelRef& ref,
                                                           const GlobalConfig& config) const
{
    auto it = factories_.find(ref.kind);
    if (it == factories_.end()) {
        throw Error(ErrorCode::validation_error, "unknown resource model '" + ref.kind + "'");
    }
    auto model = it->second(ref.params, config);
    if (!model) {
        throw Error(ErrorCode::validation_error, "factory for '" + ref.kind + "' returned no model");
    }
    return model;
}

std::optional<double> cpu_limit_model_a(std::int64_t nc, const PoPLedger& ledger, const GlobalConfig& config)
{
    require_positive(nc);
    if (ledger.ac_cpu + nc > ledger.mc_cpu) {
        return std::nullopt;
    }
    return unit_share(config) * static_cast<double>(nc);
}

double cpu_limit_model_b(std::int64_t nc, const PoPLedger& ledger, const GlobalConfig& config)
{
    require_positive(nc);
    return over_provisioning(ledger.mc_cpu, ledger.ac_cpu, nc, config);
}

std::map<std::string, double> recompute_pop_limits(const PlatformState& state, std::string_view pop)
{
    const auto all = recompute_all_limits(state);
    std::map<std::string, double> out;
    for (const auto& [id, instance] : state.instances) {
        if (instance.pop == pop) {
            out.emplace(id, all.at(id));
        }
    }
    return out;
}

std::map<std::string, double> baseline_none_usage(const PlatformState& state, double phys_capacity)
{
    std::map<std::string, double> out;
    if (state.instances.empty()) {
        return out;
    }
    const double share = phys_capacity / static_cast<double>(state.instances.size());
    for (const auto& [id, instance] : state.instances) {
        out.emplace(id, std::min(instance.demand, share));
    }
    return out;
}

double shared_pool_limit(std::int64_t nc, const PlatformState& state)
{
    require_positive(nc);
    std::int64_t pool_mc = 0;
    std::int64_t pool_ac = 0;
    for (const auto& [name, ledger] : state.ledgers) {
        if (ledger.model.kind == model_kind::shared_pool) {
            pool_mc += ledger.mc_cpu;
            pool_ac += ledger.ac_cpu;
        }
    }
    if (pool_mc == 0) {
        throw Error(ErrorCode::invalid_argument, "no PoP uses the shared_pool model");
    }
    return over_provisioning(pool_mc, pool_ac, nc, state.config);
}

}  // namespace popnet
