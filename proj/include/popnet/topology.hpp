#pragma once

#include <popnet/types.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace popnet {

class ModelRegistry;
class EndpointRegistry;

inline constexpr int topology_format_version = 1;

struct LinkParams {
    double delay_ms = 0.0;
    double bandwidth_mbps = 1000.0;
    double loss = 0.0;

    bool operator==(const LinkParams&) const = default;
};

struct EndpointDecl {
    std::string type = "heat-like";
    int port = 0;
    std::string bind = "127.0.0.1";

    bool operator==(const EndpointDecl&) const = default;
};

struct PoPDecl {
    std::string name;
    std::int64_t mc_cpu = 0;
    std::int64_t mem_capacity_mb = 16384;
    std::int64_t storage_capacity_gb = 1024;
    ResourceModelRef model;
    EndpointDecl endpoint;

    bool operator==(const PoPDecl&) const = default;
};

struct LinkDecl {
    std::string a;
    std::string b;
    double delay_ms = 0.0;
    double bandwidth_mbps = 1000.0;
    double loss = 0.0;

    bool operator==(const LinkDecl&) const = default;
};

struct TopologyDefaults {
    LinkParams link;
    std::optional<ResourceModelRef> model;
    // Bandwidth of traffic that stays inside one PoP's big switch.
    double internal_bandwidth_mbps = 10000.0;

    bool operator==(const TopologyDefaults&) const = default;
};

// Declarative topology document. Defaults are already applied to every PoP
// and link after parsing.
struct TopologyDoc {
    int format_version = topology_format_version;
    std::vector<PoPDecl> pops;
    std::vector<std::string> switches;
    std::vector<LinkDecl> links;
    TopologyDefaults defaults;

    bool operator==(const TopologyDoc&) const = default;
};

struct Violation {
    std::string field;
    std::string message;
};

// Parses the JSON topology format. Throws Error(parse_error) with line or
// field-path context on syntax errors, unknown or missing fields, an empty
// PoP list, and links naming undeclared nodes.
TopologyDoc parse_topology(std::string_view text);
TopologyDoc load_topology(const std::filesystem::path& path);
std::string serialize_topology(const TopologyDoc& doc);

// Semantic checks; an empty result means the document may be built.
std::vector<Violation> validate(const TopologyDoc& doc);
std::vector<Violation> validate(const TopologyDoc& doc, const ModelRegistry& models, const EndpointRegistry& endpoints);

enum class NodeKind { pop, switch_node };

struct Edge {
    std::size_t to = 0;
    // Port on this node (1-based) and on the peer node.
    int port = 0;
    int peer_port = 0;
    LinkParams params;

    bool operator==(const Edge&) const = default;
};

// Immutable network graph. Each PoP is a single big-switch node. Node indices
// follow lexicographic name order; each node's edges are sorted by peer index
// and numbered from port 1.
class Topology {
public:
    std::size_t node_count() const noexcept { return names_.size(); }
    std::size_t edge_count() const noexcept { return edge_count_; }

    const std::string& name(std::size_t node) const { return names_.at(node); }
    NodeKind kind(std::size_t node) const { return kinds_.at(node); }
    std::optional<std::size_t> find(std::string_view name) const;

    std::span<const Edge> edges(std::size_t node) const { return adjacency_.at(node); }
    const Edge* edge_between(std::size_t from, std::size_t to) const;
    // Edge leaving `node` through `port`, or nullptr.
    const Edge* edge_at_port(std::size_t node, int port) const;

    // PoPs in declaration order.
    const std::vector<PoPDecl>& pops() const noexcept { return pops_; }
    const PoPDecl* pop(std::string_view name) const;

    double internal_bandwidth_mbps() const noexcept { return internal_bandwidth_mbps_; }

    bool operator==(const Topology&) const = default;

private:
    friend Topology build(const TopologyDoc& doc);

    std::vector<std::string> names_;
    std::vector<NodeKind> kinds_;
    std::vector<std::vector<Edge>> adjacency_;
    std::vector<PoPDecl> pops_;
    std::size_t edge_count_ = 0;
    double internal_bandwidth_mbps_ = 10000.0;
};

// Precondition: validate(doc) is empty. Throws Error(validation_error)
// otherwise.
Topology build(const TopologyDoc& doc);

}  // namespace popnet
