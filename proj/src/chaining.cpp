#include <popnet/chaining.hpp>
#include <popnet/platform.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>

namespace popnet {

namespace {

// Path length under a metric with hop count as secondary key, so equal-cost
// walks always make progress through zero-delay links.
struct Distance {
    double cost = std::numeric_limits<double>::infinity();
    int hops = std::numeric_limits<int>::max();

    auto operator<=>(const Distance&) const = default;
};

double edge_weight(const Edge& edge, Metric metric)
{
    return metric == Metric::fewest_hops ? 1.0 : edge.params.delay_ms;
}

bool same_cost(double a, double b)
{
    return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

std::size_t require_node(const Topology& topology, std::string_view name)
{
    auto node = topology.find(name);
    if (!node) {
        throw Error(ErrorCode::invalid_argument, "unknown node '" + std::string(name) + "'");
    }
    return *node;
}

// Dijkstra towards `dst`; valid because the graph is undirected.
std::vector<Distance> distances_to(const Topology& topology, std::size_t dst, Metric metric)
{
    std::vector<Distance> dist(topology.node_count());
    using Item = std::pair<Distance, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[dst] = Distance{0.0, 0};
    queue.emplace(dist[dst], dst);
    while (!queue.empty()) {
        auto [d, node] = queue.top();
        queue.pop();
        if (d != dist[node]) {
            continue;
        }
        for (const auto& edge : topology.edges(node)) {
            const Distance candidate{d.cost + edge_weight(edge, metric), d.hops + 1};
            if (candidate < dist[edge.to]) {
                dist[edge.to] = candidate;
                queue.emplace(candidate, edge.to);
            }
        }
    }
    return dist;
}

std::string make_chain_id(std::uint64_t seq)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "chain-%04llu", static_cast<unsigned long long>(seq));
    return buffer;
}

}  // namespace

std::string_view to_string(VlanOp op) noexcept
{
    switch (op) {
    case VlanOp::none: return "none";
    case VlanOp::push: return "push";
    case VlanOp::pop: return "pop";
    case VlanOp::push_pop: return "push_pop";
    }
    return "none";
}

double path_cost(const Topology& topology, std::span<const std::string> path, Metric metric)
{
    double cost = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const auto* edge = topology.edge_between(require_node(topology, path[i]), require_node(topology, path[i + 1]));
        if (edge == nullptr) {
            throw Error(ErrorCode::no_path, "'" + path[i] + "' and '" + path[i + 1] + "' are not adjacent");
        }
        cost += edge_weight(*edge, metric);
    }
    return cost;
}

std::vector<std::string> compute_path(const Topology& topology, std::string_view src, std::string_view dst,
                                      Metric metric)
{
    const auto from = require_node(topology, src);
    const auto to = require_node(topology, dst);
    const auto dist = distances_to(topology, to, metric);
    if (std::isinf(dist[from].cost)) {
        throw Error(ErrorCode::no_path, "no path from '" + std::string(src) + "' to '" + std::string(dst) + "'");
    }

    std::vector<std::string> path{topology.name(from)};
    auto node = from;
    while (node != to) {
        const Edge* next = nullptr;
        for (const auto& edge : topology.edges(node)) {
            const auto& d = dist[edge.to];
            if (d.hops + 1 == dist[node].hops && same_cost(d.cost + edge_weight(edge, metric), dist[node].cost)) {
                next = &edge;
                break;
            }
        }
        if (next == nullptr) {
            throw Error(ErrorCode::no_path, "path reconstruction failed at '" + topology.name(node) + "'");
        }
        node = next->to;
        path.push_back(topology.name(node));
    }
    return path;
}

int lowest_free_vlan(const PlatformState& state)
{
    std::vector<bool> used(max_vlan_tag + 1, false);
    for (const auto& [id, chain] : state.chains) {
        used[static_cast<std::size_t>(chain.vlan_tag)] = true;
    }
    for (int tag = min_vlan_tag; tag <= max_vlan_tag; ++tag) {
        if (!used[static_cast<std::size_t>(tag)]) {
            return tag;
        }
    }
    return 0;
}

Chain set_chain(PlatformState& state, std::span<const std::string> instance_ids, Metric metric)
{
    if (instance_ids.size() < 2) {
        throw Error(ErrorCode::invalid_argument, "a chain needs at least two instances");
    }
    std::vector<const ComputeInstance*> hops;
    for (const auto& id : instance_ids) {
        hops.push_back(&state.instance(id));
    }
    const int tag = lowest_free_vlan(state);
    if (tag == 0) {
        throw Error(ErrorCode::vlan_exhausted, "all VLAN tags are in use");
    }

    const Topology& topology = *state.topology;
    Chain chain;
    chain.vlan_tag = tag;
    chain.metric = metric;
    chain.hops.assign(instance_ids.begin(), instance_ids.end());

    std::vector<FlowEntry> entries;
    for (std::size_t seg = 0; seg + 1 < hops.size(); ++seg) {
        const auto& from = *hops[seg];
        const auto& to = *hops[seg + 1];
        auto path = compute_path(topology, from.pop, to.pop, metric);

        int in_port = from.attach_port;
        for (std::size_t i = 0; i < path.size(); ++i) {
            FlowEntry entry;
            entry.switch_node = path[i];
            entry.match = FlowMatch{in_port, tag};
            const bool first = seg == 0 && i == 0;
            const bool last = i + 1 == path.size();
            if (last) {
                entry.out_port = to.attach_port;
            } else {
                const auto* edge = topology.edge_between(*topology.find(path[i]), *topology.find(path[i + 1]));
                entry.out_port = edge->port;
                in_port = edge->peer_port;
            }
            const bool egress = last && seg + 2 == hops.size();
            entry.vlan = first && egress ? VlanOp::push_pop : first ? VlanOp::push : egress ? VlanOp::pop : VlanOp::none;
            entries.push_back(std::move(entry));
        }
        chain.segments.push_back(std::move(path));
    }

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& entry = entries[i];
        const auto table = state.flows.find(entry.switch_node);
        const bool installed = table != state.flows.end() && table->second.contains(entry.match);
        const bool repeated = std::any_of(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(i),
                                          [&](const FlowEntry& other) {
                                              return other.switch_node == entry.switch_node &&
                                                     other.match == entry.match;
                                          });
        if (installed || repeated) {
            throw Error(ErrorCode::flow_conflict, "chain would need two entries for port " +
                                                      std::to_string(entry.match.in_port) + " on '" +
                                                      entry.switch_node + "'");
        }
    }

    chain.id = make_chain_id(state.next_chain++);
    for (auto& entry : entries) {
        entry.chain_id = chain.id;
        state.flows[entry.switch_node].emplace(entry.match, entry);
    }
    state.chains.emplace(chain.id, chain);
    return chain;
}

std::vector<FlowEntry> remove_chain(PlatformState& state, std::string_view chain_id)
{
    auto it = state.chains.find(std::string(chain_id));
    if (it == state.chains.end()) {
        throw Error(ErrorCode::unknown_chain, "unknown chain '" + std::string(chain_id) + "'");
    }
    std::vector<FlowEntry> removed;
    for (auto table = state.flows.begin(); table != state.flows.end();) {
        for (auto entry = table->second.begin(); entry != table->second.end();) {
            if (entry->second.chain_id == chain_id) {
                removed.push_back(entry->second);
                entry = table->second.erase(entry);
            } else {
                ++entry;
            }
        }
        table = table->second.empty() ? state.flows.erase(table) : std::next(table);
    }
    state.chains.erase(it);
    return removed;
}

TrafficReport simulate_traffic(const PlatformState& state, std::string_view chain_id, double payload_mbits)
{
    auto it = state.chains.find(std::string(chain_id));
    if (it == state.chains.end()) {
        throw Error(ErrorCode::unknown_chain, "unknown chain '" + std::string(chain_id) + "'");
    }
    if (!(payload_mbits >= 0.0)) {
        throw Error(ErrorCode::invalid_argument, "payload must be non-negative");
    }
    const Topology& topology = *state.topology;
    TrafficReport report;
    report.bottleneck_bandwidth_mbps = topology.internal_bandwidth_mbps();
    for (const auto& segment : it->second.segments) {
        for (std::size_t i = 0; i + 1 < segment.size(); ++i) {
            const auto* edge = topology.edge_between(*topology.find(segment[i]), *topology.find(segment[i + 1]));
            report.end_to_end_delay_ms += edge->params.delay_ms;
            report.bottleneck_bandwidth_mbps = std::min(report.bottleneck_bandwidth_mbps, edge->params.bandwidth_mbps);
            report.delivery_probability *= 1.0 - edge->params.loss;
            ++report.hop_count;
        }
    }
    report.transfer_time_ms =
        report.end_to_end_delay_ms + payload_mbits / report.bottleneck_bandwidth_mbps * 1000.0;
    return report;
}

}  // namespace popnet
