#pragma once

// Fixtures and independent oracles shared by the test binaries. Nothing here
// calls into the code paths it is used to check.

#include <popnet/platform.hpp>
#include <popnet/topology.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace popnet::testing {

inline PoPDecl make_pop(const std::string& name, std::int64_t mc, std::string_view model, int port)
{
    PoPDecl pop;
    pop.name = name;
    pop.mc_cpu = mc;
    pop.model = ResourceModelRef{std::string(model), {}};
    pop.endpoint.port = port;
    return pop;
}

inline LinkDecl make_link(const std::string& a, const std::string& b, double delay_ms = 0.0,
                          double bandwidth_mbps = 1000.0, double loss = 0.0)
{
    return LinkDecl{a, b, delay_ms, bandwidth_mbps, loss};
}

// PoPs pop1..popN with the given capacities, all attached to switch s1.
inline TopologyDoc star_doc(const std::vector<std::int64_t>& capacities, std::string_view model)
{
    TopologyDoc doc;
    for (std::size_t i = 0; i < capacities.size(); ++i) {
        const auto name = "pop" + std::to_string(i + 1);
        doc.pops.push_back(make_pop(name, capacities[i], model, 9100 + static_cast<int>(i)));
        if (capacities.size() > 1) {
            doc.links.push_back(make_link(name, "s1", 5.0));
        }
    }
    if (capacities.size() > 1) {
        doc.switches.push_back("s1");
    }
    return doc;
}

inline PlatformState make_state(const TopologyDoc& doc, double e_cpu)
{
    return new_platform(std::make_shared<const Topology>(build(doc)), e_cpu);
}

inline bool close_rel(double a, double b, double tol = 1e-9)
{
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Limits recomputed from scratch off the instance list with the closed-form
// expressions written out here.
inline std::map<std::string, double> oracle_limits(const PlatformState& state)
{
    std::map<std::string, std::int64_t> ac;
    std::int64_t pool_mc = 0;
    std::int64_t pool_ac = 0;
    for (const auto& [id, instance] : state.instances) {
        ac[instance.pop] += instance.request.cpu_cu;
    }
    for (const auto& [name, ledger] : state.ledgers) {
        if (ledger.model.kind == "shared_pool") {
            pool_mc += ledger.mc_cpu;
            pool_ac += ac[name];
        }
    }
    const double e = state.config.e_cpu;
    const double total = static_cast<double>(state.config.total_mc);
    std::map<std::string, double> out;
    for (const auto& [id, instance] : state.instances) {
        const auto& ledger = state.ledgers.at(instance.pop);
        const auto nc = static_cast<double>(instance.request.cpu_cu);
        const auto& kind = ledger.model.kind;
        if (kind == "fixed_limit_A") {
            out[id] = (e / total) * nc;
        } else if (kind == "over_provisioning_B") {
            const auto mc = ledger.mc_cpu;
            const auto a = ac[instance.pop];
            out[id] = (e / total) * (static_cast<double>(mc) / static_cast<double>(std::max(mc, a))) * nc;
        } else if (kind == "shared_pool") {
            out[id] = (e / total) * (static_cast<double>(pool_mc) / static_cast<double>(std::max(pool_mc, pool_ac))) * nc;
        } else if (kind == "none") {
            out[id] = std::min(instance.demand, 1.0 / static_cast<double>(state.instances.size()));
        }
    }
    return out;
}

// Minimum path cost by enumerating every simple path.
inline double exhaustive_path_cost(const TopologyDoc& doc, const std::string& src, const std::string& dst,
                                   bool by_delay)
{
    std::map<std::string, std::vector<std::pair<std::string, double>>> adjacency;
    for (const auto& link : doc.links) {
        const double w = by_delay ? link.delay_ms : 1.0;
        adjacency[link.a].emplace_back(link.b, w);
        adjacency[link.b].emplace_back(link.a, w);
    }
    double best = std::numeric_limits<double>::infinity();
    std::map<std::string, bool> on_path;
    std::function<void(const std::string&, double)> dfs = [&](const std::string& node, double cost) {
        if (node == dst) {
            best = std::min(best, cost);
            return;
        }
        on_path[node] = true;
        for (const auto& [next, w] : adjacency[node]) {
            if (!on_path[next]) {
                dfs(next, cost + w);
            }
        }
        on_path[node] = false;
    };
    dfs(src, 0.0);
    return best;
}

// Follows flow entries tagged with the chain's VLAN starting at the first
// hop's attachment port; returns the instance ids reached, in order.
inline std::vector<std::string> walk_flow_tables(const PlatformState& state, const std::string& first_hop, int tag,
                                                 std::size_t max_steps = 10000)
{
    std::map<std::pair<std::string, int>, std::string> attached;
    for (const auto& [id, instance] : state.instances) {
        attached[{instance.pop, instance.attach_port}] = id;
    }
    const auto& topology = *state.topology;
    std::vector<std::string> reached{first_hop};
    std::string node = state.instances.at(first_hop).pop;
    int in_port = state.instances.at(first_hop).attach_port;
    for (std::size_t step = 0; step < max_steps; ++step) {
        auto table = state.flows.find(node);
        if (table == state.flows.end()) {
            break;
        }
        auto entry = table->second.find(FlowMatch{in_port, tag});
        if (entry == table->second.end()) {
            break;
        }
        const int out = entry->second.out_port;
        if (auto hit = attached.find({node, out}); hit != attached.end()) {
            reached.push_back(hit->second);
            in_port = out;
            if (entry->second.vlan == VlanOp::pop || entry->second.vlan == VlanOp::push_pop) {
                break;
            }
            continue;
        }
        const auto from = *topology.find(node);
        const auto& edges = topology.edges(from);
        if (out < 1 || static_cast<std::size_t>(out) > edges.size()) {
            break;
        }
        const auto& edge = edges[static_cast<std::size_t>(out) - 1];
        node = topology.name(edge.to);
        in_port = edge.peer_port;
    }
    return reached;
}

// Connected random graph on n nodes (first `pops` are PoPs) with random
// extra edges and delays.
inline TopologyDoc random_topology(std::mt19937_64& rng, std::size_t n, std::size_t pops)
{
    TopologyDoc doc;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < pops) {
            names.push_back("pop" + std::to_string(i));
            doc.pops.push_back(make_pop(names.back(), 4, "over_provisioning_B", 9000 + static_cast<int>(i)));
        } else {
            names.push_back("s" + std::to_string(i));
            doc.switches.push_back(names.back());
        }
    }
    std::uniform_int_distribution<int> delay(0, 20);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 1; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> parent(0, i - 1);
        edges.emplace_back(parent(rng), i);
    }
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    const std::size_t extra = n;
    for (std::size_t i = 0; i < extra; ++i) {
        auto a = any(rng);
        auto b = any(rng);
        if (a == b) {
            continue;
        }
        if (a > b) {
            std::swap(a, b);
        }
        if (std::find(edges.begin(), edges.end(), std::make_pair(a, b)) != edges.end() ||
            std::find(edges.begin(), edges.end(), std::make_pair(b, a)) != edges.end()) {
            continue;
        }
        edges.emplace_back(a, b);
    }
    for (const auto& [a, b] : edges) {
        doc.links.push_back(make_link(names[a], names[b], static_cast<double>(delay(rng)) * 0.5));
    }
    return doc;
}

}  // namespace popnet::testing
