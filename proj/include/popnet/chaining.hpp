#pragma once

#include <popnet/topology.hpp>
#include <popnet/types.hpp>

#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace popnet {

struct PlatformState;

inline constexpr int min_vlan_tag = 1;
inline constexpr int max_vlan_tag = 4094;

// Unidirectional service chain. Hop order is the traffic direction.
struct Chain {
    std::string id;
    int vlan_tag = 0;
    std::vector<std::string> hops;
    // Node path for each consecutive hop pair, home PoP to home PoP.
    std::vector<std::vector<std::string>> segments;
    Metric metric = Metric::fewest_hops;

    bool operator==(const Chain&) const = default;
};

struct FlowMatch {
    int in_port = 0;
    int vlan_tag = 0;

    auto operator<=>(const FlowMatch&) const = default;
};

// VLAN handling of an entry. The tag is pushed where the first hop emits
// traffic and popped where the last hop receives it; traffic between
// intermediate VNFs stays tagged.
enum class VlanOp { none, push, pop, push_pop };

std::string_view to_string(VlanOp op) noexcept;

struct FlowEntry {
    std::string switch_node;
    FlowMatch match;
    int out_port = 0;
    VlanOp vlan = VlanOp::none;
    std::string chain_id;

    bool operator==(const FlowEntry&) const = default;
};

using FlowTable = std::map<FlowMatch, FlowEntry>;
// Keyed by switch (node) name.
using FlowTables = std::map<std::string, FlowTable>;

struct TrafficReport {
    double end_to_end_delay_ms = 0.0;
    double bottleneck_bandwidth_mbps = 0.0;
    double delivery_probability = 1.0;
    int hop_count = 0;
    // Propagation delay plus serialization of the payload at the bottleneck.
    double transfer_time_ms = 0.0;
};

// Cost of a node path under `metric`: link count or summed link delay.
double path_cost(const Topology& topology, std::span<const std::string> path, Metric metric);

// Shortest path under `metric`. Equal-cost candidates are ordered by hop count
// and then by the lexicographic order of their node-name sequences.
// Throws Error(invalid_argument) for unknown nodes, Error(no_path) when
// disconnected.
std::vector<std::string> compute_path(const Topology& topology, std::string_view src, std::string_view dst,
                                      Metric metric);

// Installs the chain atomically: on any error the flow tables and the VLAN
// pool are unchanged.
Chain set_chain(PlatformState& state, std::span<const std::string> instance_ids, Metric metric);

// Returns the removed entries. Throws Error(unknown_chain).
std::vector<FlowEntry> remove_chain(PlatformState& state, std::string_view chain_id);

TrafficReport simulate_traffic(const PlatformState& state, std::string_view chain_id, double payload_mbits);

// Lowest free tag, or 0 when all are taken.
int lowest_free_vlan(const PlatformState& state);

}  // namespace popnet
