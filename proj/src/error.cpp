#include <popnet/types.hpp>

namespace popnet {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::validation_error: return "validation_error";
    case ErrorCode::unknown_pop: return "unknown_pop";
    case ErrorCode::unknown_instance: return "unknown_instance";
    case ErrorCode::unknown_chain: return "unknown_chain";
    case ErrorCode::unknown_stack: return "unknown_stack";
    case ErrorCode::duplicate_name: return "duplicate_name";
    case ErrorCode::vlan_exhausted: return "vlan_exhausted";
    case ErrorCode::no_path: return "no_path";
    case ErrorCode::flow_conflict: return "flow_conflict";
    case ErrorCode::scenario_error: return "scenario_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::endpoint_error: return "endpoint_error";
    }
    return "unknown";
}

std::string_view to_string(Metric metric) noexcept
{
    return metric == Metric::fewest_hops ? "fewest_hops" : "smallest_delay";
}

Metric parse_metric(std::string_view text)
{
    if (text == "fewest_hops" || text == "hops") {
        return Metric::fewest_hops;
    }
    if (text == "smallest_delay" || text == "delay") {
        return Metric::smallest_delay;
    }
    throw Error(ErrorCode::invalid_argument, "unknown metric '" + std::string(text) + "'");
}

std::string_view to_string(RejectReason reason) noexcept
{
    switch (reason) {
    case RejectReason::cpu_exhausted: return "cpu_exhausted";
    case RejectReason::memory_exhausted: return "memory_exhausted";
    case RejectReason::storage_exhausted: return "storage_exhausted";
    case RejectReason::unknown_pop: return "unknown_pop";
    }
    return "unknown";
}

}  // namespace popnet
