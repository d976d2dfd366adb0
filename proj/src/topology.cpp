#include <popnet/endpoint_registry.hpp>
#include <popnet/resource_models.hpp>
#include <popnet/topology.hpp>

#include "json_codec.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace popnet {

using detail::FieldReader;
using detail::json;

namespace {

LinkParams read_link_params(const json& value, const std::string& path, const LinkParams& fallback)
{
    FieldReader reader(value, path, {"delay_ms", "bandwidth_mbps", "loss"});
    LinkParams params;
    params.delay_ms = reader.optional<double>("delay_ms", fallback.delay_ms);
    params.bandwidth_mbps = reader.optional<double>("bandwidth_mbps", fallback.bandwidth_mbps);
    params.loss = reader.optional<double>("loss", fallback.loss);
    return params;
}

TopologyDefaults read_defaults(const json& value)
{
    FieldReader reader(value, "defaults",
                       {"link", "model", "internal_bandwidth_mbps", "mem_capacity_mb", "storage_capacity_gb"});
    TopologyDefaults defaults;
    if (reader.has("link")) {
        defaults.link = read_link_params(reader.at("link"), reader.path("link"), LinkParams{});
    }
    if (reader.has("model")) {
        defaults.model = detail::read_model_ref(reader.at("model"), reader.path("model"));
    }
    defaults.internal_bandwidth_mbps =
        reader.optional<double>("internal_bandwidth_mbps", defaults.internal_bandwidth_mbps);
    return defaults;
}

EndpointDecl read_endpoint(const json& value, const std::string& path)
{
    FieldReader reader(value, path, {"type", "port", "bind"});
    EndpointDecl decl;
    decl.type = reader.optional<std::string>("type", decl.type);
    decl.port = reader.required<int>("port");
    decl.bind = reader.optional<std::string>("bind", decl.bind);
    return decl;
}

PoPDecl read_pop(const json& value, const std::string& path, const TopologyDefaults& defaults,
                 const PoPDecl& resource_defaults)
{
    FieldReader reader(value, path,
                       {"name", "mc_cpu", "mem_capacity_mb", "storage_capacity_gb", "model", "endpoint"});
    PoPDecl pop;
    pop.name = reader.required<std::string>("name");
    pop.mc_cpu = reader.required<std::int64_t>("mc_cpu");
    pop.mem_capacity_mb = reader.optional<std::int64_t>("mem_capacity_mb", resource_defaults.mem_capacity_mb);
    pop.storage_capacity_gb =
        reader.optional<std::int64_t>("storage_capacity_gb", resource_defaults.storage_capacity_gb);
    if (reader.has("model")) {
        pop.model = detail::read_model_ref(reader.at("model"), reader.path("model"));
    } else if (defaults.model) {
        pop.model = *defaults.model;
    } else {
        detail::field_error(reader.path("model"), "missing required field (and no defaults.model)");
    }
    if (!reader.has("endpoint")) {
        detail::field_error(reader.path("endpoint"), "missing required field");
    }
    pop.endpoint = read_endpoint(reader.at("endpoint"), reader.path("endpoint"));
    return pop;
}

// Nodes not reachable from the first declared PoP; empty when the graph is
// connected.
std::vector<std::string> unreachable(const TopologyDoc& doc)
{
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& pop : doc.pops) {
        adjacency[pop.name];
    }
    for (const auto& sw : doc.switches) {
        adjacency[sw];
    }
    for (const auto& link : doc.links) {
        adjacency[link.a].push_back(link.b);
        adjacency[link.b].push_back(link.a);
    }
    if (adjacency.empty()) {
        return {};
    }
    const auto& root = doc.pops.empty() ? adjacency.begin()->first : doc.pops.front().name;
    std::set<std::string> seen{root};
    std::vector<std::string> stack{root};
    while (!stack.empty()) {
        auto node = stack.back();
        stack.pop_back();
        for (const auto& next : adjacency[node]) {
            if (seen.insert(next).second) {
                stack.push_back(next);
            }
        }
    }
    std::vector<std::string> out;
    for (const auto& [node, peers] : adjacency) {
        if (!seen.contains(node)) {
            out.push_back(node);
        }
    }
    return out;
}

}  // namespace

TopologyDoc parse_topology(std::string_view text)
{
    const json root = detail::parse_json(text, "topology");
    FieldReader reader(root, "", {"format_version", "pops", "switches", "links", "defaults"});

    TopologyDoc doc;
    doc.format_version = reader.required<int>("format_version");
    if (doc.format_version != topology_format_version) {
        detail::field_error("format_version", "unsupported version " + std::to_string(doc.format_version));
    }

    PoPDecl resource_defaults;
    if (reader.has("defaults")) {
        doc.defaults = read_defaults(reader.at("defaults"));
        const FieldReader defaults(reader.at("defaults"), "defaults",
                                   {"link", "model", "internal_bandwidth_mbps", "mem_capacity_mb",
                                    "storage_capacity_gb"});
        resource_defaults.mem_capacity_mb =
            defaults.optional<std::int64_t>("mem_capacity_mb", resource_defaults.mem_capacity_mb);
        resource_defaults.storage_capacity_gb =
            defaults.optional<std::int64_t>("storage_capacity_gb", resource_defaults.storage_capacity_gb);
    }

    if (!reader.has("pops")) {
        detail::field_error("pops", "missing required field");
    }
    const json& pops = reader.at("pops");
    if (!pops.is_array()) {
        detail::field_error("pops", "expected an array");
    }
    if (pops.empty()) {
        detail::field_error("pops", "at least one PoP is required");
    }
    for (std::size_t i = 0; i < pops.size(); ++i) {
        doc.pops.push_back(read_pop(pops[i], detail::index_path("pops", i), doc.defaults, resource_defaults));
    }

    doc.switches = reader.optional<std::vector<std::string>>("switches", {});

    std::set<std::string> declared;
    for (const auto& pop : doc.pops) {
        declared.insert(pop.name);
    }
    declared.insert(doc.switches.begin(), doc.switches.end());

    if (reader.has("links")) {
        const json& links = reader.at("links");
        if (!links.is_array()) {
            detail::field_error("links", "expected an array");
        }
        for (std::size_t i = 0; i < links.size(); ++i) {
            const auto path = detail::index_path("links", i);
            FieldReader link_reader(links[i], path, {"a", "b", "delay_ms", "bandwidth_mbps", "loss"});
            LinkDecl link;
            link.a = link_reader.required<std::string>("a");
            link.b = link_reader.required<std::string>("b");
            for (const auto* end : {&link.a, &link.b}) {
                if (!declared.contains(*end)) {
                    detail::field_error(path, "references undeclared node '" + *end + "'");
                }
            }
            link.delay_ms = link_reader.optional<double>("delay_ms", doc.defaults.link.delay_ms);
            link.bandwidth_mbps = link_reader.optional<double>("bandwidth_mbps", doc.defaults.link.bandwidth_mbps);
            link.loss = link_reader.optional<double>("loss", doc.defaults.link.loss);
            doc.links.push_back(std::move(link));
        }
    }
    return doc;
}

TopologyDoc load_topology(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open topology file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_topology(text.str());
}

std::string serialize_topology(const TopologyDoc& doc)
{
    json root;
    root["format_version"] = doc.format_version;

    json defaults;
    defaults["link"] = {{"delay_ms", doc.defaults.link.delay_ms},
                        {"bandwidth_mbps", doc.defaults.link.bandwidth_mbps},
                        {"loss", doc.defaults.link.loss}};
    if (doc.defaults.model) {
        defaults["model"] = detail::write_model_ref(*doc.defaults.model);
    }
    defaults["internal_bandwidth_mbps"] = doc.defaults.internal_bandwidth_mbps;
    root["defaults"] = defaults;

    json pops = json::array();
    for (const auto& pop : doc.pops) {
        pops.push_back({{"name", pop.name},
                        {"mc_cpu", pop.mc_cpu},
                        {"mem_capacity_mb", pop.mem_capacity_mb},
                        {"storage_capacity_gb", pop.storage_capacity_gb},
                        {"model", detail::write_model_ref(pop.model)},
                        {"endpoint",
                         {{"type", pop.endpoint.type}, {"port", pop.endpoint.port}, {"bind", pop.endpoint.bind}}}});
    }
    root["pops"] = pops;
    root["switches"] = doc.switches;

    json links = json::array();
    for (const auto& link : doc.links) {
        links.push_back({{"a", link.a},
                         {"b", link.b},
                         {"delay_ms", link.delay_ms},
                         {"bandwidth_mbps", link.bandwidth_mbps},
                         {"loss", link.loss}});
    }
    root["links"] = links;
    return root.dump(2) + "\n";
}

std::vector<Violation> validate(const TopologyDoc& doc)
{
    return validate(doc, ModelRegistry::global(), EndpointRegistry::global());
}

std::vector<Violation> validate(const TopologyDoc& doc, const ModelRegistry& models,
                                const EndpointRegistry& endpoints)
{
    std::vector<Violation> out;
    auto add = [&out](std::string field, std::string message) {
        out.push_back({std::move(field), std::move(message)});
    };

    if (doc.pops.empty()) {
        add("pops", "at least one PoP is required");
    }

    std::set<std::string> names;
    std::set<int> ports;
    for (std::size_t i = 0; i < doc.pops.size(); ++i) {
        const auto& pop = doc.pops[i];
        const auto path = detail::index_path("pops", i);
        if (pop.name.empty()) {
            add(path + ".name", "empty node name");
        }
        if (!names.insert(pop.name).second) {
            add(path + ".name", "duplicate node name '" + pop.name + "'");
        }
        if (pop.mc_cpu < 1) {
            add(path + ".mc_cpu", "mc_cpu must be at least 1");
        }
        if (pop.mem_capacity_mb < 0) {
            add(path + ".mem_capacity_mb", "memory capacity must be non-negative");
        }
        if (pop.storage_capacity_gb < 0) {
            add(path + ".storage_capacity_gb", "storage capacity must be non-negative");
        }
        if (!models.contains(pop.model.kind)) {
            add(path + ".model.kind", "unknown resource model '" + pop.model.kind + "'");
        }
        if (!endpoints.contains(pop.endpoint.type)) {
            add(path + ".endpoint.type", "unknown endpoint type '" + pop.endpoint.type + "'");
        }
        if (pop.endpoint.port < 1 || pop.endpoint.port > 65535) {
            add(path + ".endpoint.port", "port out of [1,65535]");
        } else if (!ports.insert(pop.endpoint.port).second) {
            add(path + ".endpoint.port", "duplicate endpoint port " + std::to_string(pop.endpoint.port));
        }
    }
    for (std::size_t i = 0; i < doc.switches.size(); ++i) {
        const auto& sw = doc.switches[i];
        const auto path = detail::index_path("switches", i);
        if (sw.empty()) {
            add(path, "empty node name");
        }
        if (!names.insert(sw).second) {
            add(path, "duplicate node name '" + sw + "'");
        }
    }

    std::set<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < doc.links.size(); ++i) {
        const auto& link = doc.links[i];
        const auto path = detail::index_path("links", i);
        for (const auto* end : {&link.a, &link.b}) {
            if (!names.contains(*end)) {
                add(path, "references undeclared node '" + *end + "'");
            }
        }
        if (link.a == link.b) {
            add(path, "self-loop on '" + link.a + "'");
        }
        if (!pairs.insert(std::minmax(link.a, link.b)).second) {
            add(path, "duplicate link between '" + link.a + "' and '" + link.b + "'");
        }
        if (!(link.delay_ms >= 0.0)) {
            add(path + ".delay_ms", "delay must be non-negative");
        }
        if (!(link.bandwidth_mbps > 0.0)) {
            add(path + ".bandwidth_mbps", "bandwidth must be positive");
        }
        if (!(link.loss >= 0.0 && link.loss <= 1.0)) {
            add(path + ".loss", "loss out of [0,1]");
        }
    }
    if (!(doc.defaults.internal_bandwidth_mbps > 0.0)) {
        add("defaults.internal_bandwidth_mbps", "bandwidth must be positive");
    }

    if (const auto lost = unreachable(doc); !lost.empty()) {
        std::string names;
        for (const auto& node : lost) {
            names += (names.empty() ? "'" : ", '") + node + "'";
        }
        add("links", "graph not connected; unreachable: " + names);
    }
    return out;
}

std::optional<std::size_t> Topology::find(std::string_view name) const
{
    auto it = std::lower_bound(names_.begin(), names_.end(), name);
    if (it == names_.end() || *it != name) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - names_.begin());
}

const Edge* Topology::edge_between(std::size_t from, std::size_t to) const
{
    const auto& edges = adjacency_.at(from);
    auto it = std::lower_bound(edges.begin(), edges.end(), to,
                               [](const Edge& edge, std::size_t node) { return edge.to < node; });
    return it != edges.end() && it->to == to ? &*it : nullptr;
}

const Edge* Topology::edge_at_port(std::size_t node, int port) const
{
    const auto& edges = adjacency_.at(node);
    if (port < 1 || static_cast<std::size_t>(port) > edges.size()) {
        return nullptr;
    }
    return &edges[static_cast<std::size_t>(port) - 1];
}

const PoPDecl* Topology::pop(std::string_view name) const
{
    auto it = std::find_if(pops_.begin(), pops_.end(), [name](const PoPDecl& p) { return p.name == name; });
    return it == pops_.end() ? nullptr : &*it;
}

Topology build(const TopologyDoc& doc)
{
    if (auto violations = validate(doc); !violations.empty()) {
        throw Error(ErrorCode::validation_error,
                    "invalid topology: " + violations.front().field + ": " + violations.front().message);
    }

    Topology topo;
    for (const auto& pop : doc.pops) {
        topo.names_.push_back(pop.name);
    }
    topo.names_.insert(topo.names_.end(), doc.switches.begin(), doc.switches.end());
    std::sort(topo.names_.begin(), topo.names_.end());

    topo.kinds_.assign(topo.names_.size(), NodeKind::switch_node);
    for (const auto& pop : doc.pops) {
        topo.kinds_[*topo.find(pop.name)] = NodeKind::pop;
    }

    topo.adjacency_.resize(topo.names_.size());
    for (const auto& link : doc.links) {
        const auto a = *topo.find(link.a);
        const auto b = *topo.find(link.b);
        const LinkParams params{link.delay_ms, link.bandwidth_mbps, link.loss};
        topo.adjacency_[a].push_back(Edge{b, 0, 0, params});
        topo.adjacency_[b].push_back(Edge{a, 0, 0, params});
    }
    for (auto& edges : topo.adjacency_) {
        std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.to < y.to; });
        for (std::size_t i = 0; i < edges.size(); ++i) {
            edges[i].port = static_cast<int>(i) + 1;
        }
    }
    for (std::size_t node = 0; node < topo.adjacency_.size(); ++node) {
        for (auto& edge : topo.adjacency_[node]) {
            edge.peer_port = topo.edge_between(edge.to, node)->port;
        }
    }
    topo.edge_count_ = doc.links.size();
    topo.pops_ = doc.pops;
    topo.internal_bandwidth_mbps_ = doc.defaults.internal_bandwidth_mbps;
    return topo;
}

}  // namespace popnet
