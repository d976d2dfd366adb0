#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace popnet {

enum class ErrorCode {
    invalid_argument,
    parse_error,
    validation_error,
    unknown_pop,
    unknown_instance,
    unknown_chain,
    unknown_stack,
    duplicate_name,
    vlan_exhausted,
    no_path,
    flow_conflict,
    scenario_error,
    io_error,
    endpoint_error,
};

std::string_view to_string(ErrorCode code) noexcept;

// Faults and contract violations. Resource rejection is not an Error; it is
// reported through AllocationOutcome.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Platform-wide constants fixed when the platform starts.
struct GlobalConfig {
    // Fraction of physical CPU time the emulation may consume, in (0, 1].
    double e_cpu = 1.0;
    int n_pops = 0;
    // Sum of compute units over all PoPs.
    std::int64_t total_mc = 0;

    bool operator==(const GlobalConfig&) const = default;
};

struct ResourceRequest {
    std::int64_t cpu_cu = 1;
    std::int64_t memory_mb = 0;
    std::int64_t storage_gb = 0;

    bool operator==(const ResourceRequest&) const = default;
};

using ModelParams = std::map<std::string, double>;

// Names a resource model in the model registry plus its parameters.
struct ResourceModelRef {
    std::string kind;
    ModelParams params;

    bool operator==(const ResourceModelRef&) const = default;
};

namespace model_kind {
inline constexpr std::string_view none = "none";
inline constexpr std::string_view shared_pool = "shared_pool";
inline constexpr std::string_view fixed_limit_a = "fixed_limit_A";
inline constexpr std::string_view over_provisioning_b = "over_provisioning_B";
}  // namespace model_kind

// A deployed VNF stand-in.
struct ComputeInstance {
    std::string id;
    std::string pop;
    std::string image;
    ResourceRequest request;
    // Current CPU limit as a fraction of one physical CPU.
    double cpu_fraction = 0.0;
    // Fraction of one physical CPU the workload tries to consume; 1.0 is a
    // CPU-bound stress workload.
    double demand = 1.0;
    double created_at = 0.0;
    // Port on the PoP's big switch this instance is attached to.
    int attach_port = 0;

    bool operator==(const ComputeInstance&) const = default;
};

enum class Metric { fewest_hops, smallest_delay };

std::string_view to_string(Metric metric) noexcept;
// Accepts "fewest_hops"/"hops" and "smallest_delay"/"delay".
Metric parse_metric(std::string_view text);

enum class RejectReason { cpu_exhausted, memory_exhausted, storage_exhausted, unknown_pop };

std::string_view to_string(RejectReason reason) noexcept;

}  // namespace popnet
