#include <popnet/endpoint_registry.hpp>
#include <popnet/resource_models.hpp>
#include <popnet/topology.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <queue>
#include <random>
#include <set>

using namespace popnet;
using namespace popnet::testing;

namespace {

const std::filesystem::path configs = std::filesystem::path(POPNET_TEST_DATA_DIR) / ".." / "configs";

const char* const two_pops = R"({
  "format_version": 1,
  "defaults": {"link": {"delay_ms": 10, "bandwidth_mbps": 1000, "loss": 0}},
  "pops": [
    {"name": "pop1", "mc_cpu": 2, "model": "over_provisioning_B",
     "endpoint": {"type": "heat-like", "port": 8081}},
    {"name": "pop2", "mc_cpu": 2, "model": "over_provisioning_B",
     "endpoint": {"type": "heat-like", "port": 8082}}
  ],
  "switches": ["s1"],
  "links": [{"a": "pop1", "b": "s1"}, {"a": "pop2", "b": "s1"}]
})";

std::string parse_error_message(std::string_view text)
{
    try {
        parse_topology(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse_error);
        return e.what();
    }
    ADD_FAILURE() << "expected a parse error";
    return {};
}

bool has_violation(const std::vector<Violation>& violations, std::string_view needle)
{
    for (const auto& v : violations) {
        if (v.message.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

// Breadth-first reachability over the declared links only.
bool oracle_connected(const TopologyDoc& doc)
{
    std::set<std::string> nodes;
    for (const auto& pop : doc.pops) {
        nodes.insert(pop.name);
    }
    nodes.insert(doc.switches.begin(), doc.switches.end());
    std::set<std::string> seen{doc.pops.front().name};
    std::queue<std::string> frontier;
    frontier.push(doc.pops.front().name);
    while (!frontier.empty()) {
        const auto node = frontier.front();
        frontier.pop();
        for (const auto& link : doc.links) {
            for (const auto& [from, to] : {std::pair{link.a, link.b}, std::pair{link.b, link.a}}) {
                if (from == node && seen.insert(to).second) {
                    frontier.push(to);
                }
            }
        }
    }
    return seen == nodes;
}

}  // namespace

TEST(ParseTopology, TwoPopsAroundOneSwitch)
{
    const auto doc = parse_topology(two_pops);
    ASSERT_EQ(doc.pops.size(), 2u);
    EXPECT_EQ(doc.switches, std::vector<std::string>{"s1"});
    ASSERT_EQ(doc.links.size(), 2u);
    EXPECT_EQ(doc.pops[0].mc_cpu, 2);
    EXPECT_EQ(doc.pops[1].endpoint.port, 8082);
    EXPECT_EQ(doc.pops[0].endpoint.type, "heat-like");
    EXPECT_EQ(doc.pops[0].model.kind, "over_provisioning_B");
    for (const auto& link : doc.links) {
        EXPECT_EQ(link.delay_ms, 10.0);
        EXPECT_EQ(link.bandwidth_mbps, 1000.0);
        EXPECT_EQ(link.loss, 0.0);
    }
    EXPECT_TRUE(validate(doc).empty());
}

TEST(ParseTopology, MissingLinkParametersFallBackToBuiltinDefaults)
{
    const auto doc = parse_topology(R"({"format_version": 1,
        "pops": [{"name": "a", "mc_cpu": 1, "model": "none", "endpoint": {"port": 1}},
                 {"name": "b", "mc_cpu": 1, "model": "none", "endpoint": {"port": 2}}],
        "links": [{"a": "a", "b": "b"}]})");
    EXPECT_EQ(doc.links[0].delay_ms, 0.0);
    EXPECT_EQ(doc.links[0].bandwidth_mbps, 1000.0);
    EXPECT_EQ(doc.links[0].loss, 0.0);
    EXPECT_EQ(doc.pops[0].mem_capacity_mb, 16384);
    EXPECT_EQ(doc.pops[0].storage_capacity_gb, 1024);
}

TEST(ParseTopology, DefaultModelAppliesToPopsWithoutOne)
{
    const auto doc = parse_topology(R"({"format_version": 1,
        "defaults": {"model": {"kind": "none", "params": {"phys_capacity": 2}}},
        "pops": [{"name": "a", "mc_cpu": 1, "endpoint": {"port": 1}},
                 {"name": "b", "mc_cpu": 1, "model": "fixed_limit_A", "endpoint": {"port": 2}}],
        "links": [{"a": "a", "b": "b"}]})");
    EXPECT_EQ(doc.pops[0].model.kind, "none");
    EXPECT_EQ(doc.pops[0].model.params.at("phys_capacity"), 2.0);
    EXPECT_EQ(doc.pops[1].model.kind, "fixed_limit_A");
}

TEST(ParseTopology, EmptyPopListIsError)
{
    const auto message = parse_error_message(R"({"format_version": 1, "pops": []})");
    EXPECT_NE(message.find("pops"), std::string::npos) << message;
}

TEST(ParseTopology, UndeclaredLinkNodeIsNamed)
{
    const auto message = parse_error_message(R"({"format_version": 1,
        "pops": [{"name": "a", "mc_cpu": 1, "model": "none", "endpoint": {"port": 1}}],
        "links": [{"a": "a", "b": "ghost"}]})");
    EXPECT_NE(message.find("ghost"), std::string::npos) << message;
    EXPECT_NE(message.find("links[0]"), std::string::npos) << message;
}

TEST(ParseTopology, UnknownFieldCarriesPath)
{
    const auto message = parse_error_message(R"({"format_version": 1,
        "pops": [{"name": "a", "mc_cpu": 1, "model": "none", "endpoint": {"port": 1, "colour": "red"}}]})");
    EXPECT_NE(message.find("pops[0].endpoint.colour"), std::string::npos) << message;
}

TEST(ParseTopology, MissingFieldCarriesPath)
{
    const auto message = parse_error_message(R"({"format_version": 1,
        "pops": [{"name": "a", "model": "none", "endpoint": {"port": 1}}]})");
    EXPECT_NE(message.find("pops[0].mc_cpu"), std::string::npos) << message;
}

TEST(ParseTopology, SyntaxErrorCarriesLine)
{
    const auto message = parse_error_message("{\n  \"format_version\": 1,\n  \"pops\": [,]\n}");
    EXPECT_NE(message.find("line 3"), std::string::npos) << message;
}

TEST(ParseTopology, WrongTypeIsError)
{
    const auto message = parse_error_message(R"({"format_version": 1,
        "pops": [{"name": "a", "mc_cpu": "four", "model": "none", "endpoint": {"port": 1}}]})");
    EXPECT_NE(message.find("pops[0].mc_cpu"), std::string::npos) << message;
}

TEST(ParseTopology, UnsupportedVersion)
{
    const auto message = parse_error_message(R"({"format_version": 7,
        "pops": [{"name": "a", "mc_cpu": 1, "model": "none", "endpoint": {"port": 1}}]})");
    EXPECT_NE(message.find("format_version"), std::string::npos) << message;
}

TEST(LoadTopology, ShippedConfigsAreValid)
{
    for (const auto* name : {"two_pops.json", "three_pops.json", "single_pop.json"}) {
        const auto doc = load_topology(configs / "topologies" / name);
        EXPECT_TRUE(validate(doc).empty()) << name;
    }
}

TEST(LoadTopology, MissingFileIsIoError)
{
    try {
        load_topology(configs / "does-not-exist.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io_error);
    }
}

TEST(Validate, DuplicateNodeName)
{
    auto doc = star_doc({1, 1}, "none");
    doc.switches.push_back("pop1");
    EXPECT_TRUE(has_violation(validate(doc), "duplicate node name"));
}

TEST(Validate, LossOutOfRange)
{
    auto doc = star_doc({1, 1}, "none");
    doc.links[0].loss = 1.5;
    EXPECT_TRUE(has_violation(validate(doc), "loss out of [0,1]"));
}

TEST(Validate, DisconnectedSwitch)
{
    auto doc = star_doc({1, 1}, "none");
    doc.switches.push_back("s2");
    EXPECT_FALSE(oracle_connected(doc));
    EXPECT_TRUE(has_violation(validate(doc), "graph not connected"));
}

TEST(Validate, OtherRanges)
{
    auto doc = star_doc({1, 1}, "none");
    doc.links[0].delay_ms = -1;
    doc.links[1].bandwidth_mbps = 0;
    doc.pops[0].mc_cpu = 0;
    const auto violations = validate(doc);
    EXPECT_GE(violations.size(), 3u);
    for (const auto& v : violations) {
        EXPECT_FALSE(v.field.empty());
    }
}

TEST(Validate, DuplicatePortSelfLoopAndUnknownNames)
{
    auto doc = star_doc({1, 1}, "none");
    doc.pops[1].endpoint.port = doc.pops[0].endpoint.port;
    EXPECT_TRUE(has_violation(validate(doc), "port"));

    doc = star_doc({1, 1}, "none");
    doc.links.push_back(make_link("s1", "s1"));
    EXPECT_TRUE(has_violation(validate(doc), "self-loop"));

    doc = star_doc({1, 1}, "none");
    doc.links.push_back(make_link("s1", "pop1"));
    EXPECT_FALSE(validate(doc).empty());

    doc = star_doc({1, 1}, "mystery_model");
    EXPECT_TRUE(has_violation(validate(doc), "mystery_model"));

    doc = star_doc({1, 1}, "none");
    doc.pops[0].endpoint.type = "openstack";
    EXPECT_TRUE(has_violation(validate(doc), "openstack"));
}

TEST(Validate, AgreesWithConnectivityOracle)
{
    std::mt19937_64 rng(3);
    for (int run = 0; run < 200; ++run) {
        TopologyDoc doc;
        const auto n = std::uniform_int_distribution<int>(1, 7)(rng);
        for (int i = 0; i < n; ++i) {
            doc.pops.push_back(make_pop("p" + std::to_string(i), 1, "none", 7000 + i));
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (std::bernoulli_distribution(0.3)(rng)) {
                    doc.links.push_back(make_link(doc.pops[i].name, doc.pops[j].name));
                }
            }
        }
        EXPECT_EQ(has_violation(validate(doc), "graph not connected"), !oracle_connected(doc));
    }
}

TEST(Validate, CustomRegistries)
{
    ModelRegistry models;
    EndpointRegistry endpoints = EndpointRegistry::with_builtins();
    const auto doc = star_doc({1}, "fixed_limit_A");
    EXPECT_TRUE(has_violation(validate(doc, models, endpoints), "fixed_limit_A"));
    EXPECT_TRUE(validate(doc, ModelRegistry::with_builtins(), endpoints).empty());
}

TEST(Build, ThreePopsTwoSwitches)
{
    const auto topology = build(load_topology(configs / "topologies" / "three_pops.json"));
    EXPECT_EQ(topology.node_count(), 5u);
    EXPECT_EQ(topology.edge_count(), 5u);
    EXPECT_EQ(topology.pops().size(), 3u);
}

TEST(Build, SinglePop)
{
    const auto topology = build(star_doc({4}, "none"));
    EXPECT_EQ(topology.node_count(), 1u);
    EXPECT_EQ(topology.edge_count(), 0u);
    EXPECT_EQ(topology.kind(0), NodeKind::pop);
}

TEST(Build, StarOfFour)
{
    const auto topology = build(star_doc({1, 1, 1, 1}, "none"));
    EXPECT_EQ(topology.node_count(), 5u);
    EXPECT_EQ(topology.edge_count(), 4u);
    const auto hub = *topology.find("s1");
    EXPECT_EQ(topology.kind(hub), NodeKind::switch_node);
    EXPECT_EQ(topology.edges(hub).size(), 4u);
}

TEST(Build, LexicographicNodesAndPortNumbering)
{
    TopologyDoc doc;
    doc.pops.push_back(make_pop("zeta", 1, "none", 1));
    doc.pops.push_back(make_pop("alpha", 1, "none", 2));
    doc.switches = {"mid"};
    doc.links = {make_link("zeta", "mid", 3.0), make_link("alpha", "mid", 1.0), make_link("alpha", "zeta", 9.0)};
    const auto topology = build(doc);
    EXPECT_EQ(topology.name(0), "alpha");
    EXPECT_EQ(topology.name(1), "mid");
    EXPECT_EQ(topology.name(2), "zeta");
    // alpha's neighbors in index order: mid (port 1), zeta (port 2).
    const auto alpha = topology.edges(0);
    ASSERT_EQ(alpha.size(), 2u);
    EXPECT_EQ(alpha[0].to, 1u);
    EXPECT_EQ(alpha[0].port, 1);
    EXPECT_EQ(alpha[1].to, 2u);
    EXPECT_EQ(alpha[1].port, 2);
    EXPECT_EQ(alpha[1].params.delay_ms, 9.0);
    // The peer port points back at the same link.
    for (std::size_t node = 0; node < topology.node_count(); ++node) {
        for (const auto& edge : topology.edges(node)) {
            const auto* back = topology.edge_at_port(edge.to, edge.peer_port);
            ASSERT_NE(back, nullptr);
            EXPECT_EQ(back->to, node);
            EXPECT_EQ(back->peer_port, edge.port);
        }
    }
    // PoPs keep declaration order.
    EXPECT_EQ(topology.pops()[0].name, "zeta");
    EXPECT_NE(topology.pop("alpha"), nullptr);
    EXPECT_EQ(topology.pop("mid"), nullptr);
}

TEST(Build, InvalidDocumentThrows)
{
    auto doc = star_doc({1, 1}, "none");
    doc.links.clear();
    try {
        build(doc);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::validation_error);
    }
}

TEST(TopologyProperties, SerializeParseRoundTrip)
{
    std::mt19937_64 rng(17);
    for (int run = 0; run < 100; ++run) {
        auto doc = random_topology(rng, 2 + run % 9, 1 + run % 2);
        doc.pops[0].model = ResourceModelRef{"none", {{"phys_capacity", 0.75}}};
        doc.pops[0].mem_capacity_mb = 123 + run;
        doc.defaults.model = ResourceModelRef{"shared_pool", {}};
        doc.defaults.internal_bandwidth_mbps = 2500;
        doc.links[0].loss = 0.125;
        ASSERT_EQ(parse_topology(serialize_topology(doc)), doc);
    }
    const auto shipped = load_topology(configs / "topologies" / "three_pops.json");
    EXPECT_EQ(parse_topology(serialize_topology(shipped)), shipped);
}

TEST(TopologyProperties, BuildIsDeterministic)
{
    std::mt19937_64 rng(23);
    for (int run = 0; run < 50; ++run) {
        const auto doc = random_topology(rng, 3 + run % 8, 2);
        EXPECT_EQ(build(doc), build(doc));
        // Declaration order of links does not affect the graph.
        auto shuffled = doc;
        std::shuffle(shuffled.links.begin(), shuffled.links.end(), rng);
        std::shuffle(shuffled.switches.begin(), shuffled.switches.end(), rng);
        EXPECT_EQ(build(shuffled).node_count(), build(doc).node_count());
        const auto a = build(doc);
        const auto b = build(shuffled);
        for (std::size_t node = 0; node < a.node_count(); ++node) {
            EXPECT_EQ(a.name(node), b.name(node));
            EXPECT_TRUE(std::ranges::equal(a.edges(node), b.edges(node)));
        }
    }
}

TEST(TopologyProperties, OneLedgerPerPop)
{
    std::mt19937_64 rng(29);
    for (int run = 0; run < 20; ++run) {
        const auto doc = random_topology(rng, 4 + run % 6, 1 + run % 4);
        const auto state = make_state(doc, 0.5);
        ASSERT_EQ(state.ledgers.size(), doc.pops.size());
        for (const auto& pop : doc.pops) {
            EXPECT_EQ(state.ledger(pop.name).mc_cpu, pop.mc_cpu);
        }
    }
}
