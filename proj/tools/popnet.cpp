// popnet command-line tool. `up` hosts the platform and its PoP endpoints in
// the foreground; every other operational verb is an HTTP client of those
// endpoints.

#include <popnet/endpoint.hpp>
#include <popnet/workload.hpp>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_rejected = 1;
constexpr int exit_usage = 2;

constexpr int default_port = 8081;

// Raised for conditions reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised for domain rejections and unknown ids, reported with exit code 1.
struct Rejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::optional<int> env_base_port()
{
    const char* value = std::getenv("POPNET_BASE_PORT");
    if (value == nullptr || *value == '\0') {
        return std::nullopt;
    }
    try {
        std::size_t used = 0;
        const int port = std::stoi(value, &used);
        if (used == std::string_view(value).size() && port > 0 && port <= 65535) {
            return port;
        }
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("POPNET_BASE_PORT is not a port number: ") + value);
}

std::string fmt(double value)
{
    std::ostringstream out;
    out << std::setprecision(6) << value;
    return out.str();
}

// ---------------------------------------------------------------------------
// up
// ---------------------------------------------------------------------------

std::atomic<bool> stop_requested{false};

extern "C" void on_signal(int)
{
    stop_requested = true;
}

int run_up(const std::string& topology_path, double e_cpu, int tick_ms, std::optional<int> base_port)
{
    auto doc = popnet::load_topology(topology_path);
    if (auto violations = popnet::validate(doc); !violations.empty()) {
        for (const auto& v : violations) {
            std::cerr << "topology: " << v.field << ": " << v.message << '\n';
        }
        return exit_usage;
    }
    auto topology = std::make_shared<const popnet::Topology>(popnet::build(doc));
    popnet::Platform platform(popnet::new_platform(topology, e_cpu));
    popnet::EndpointServer server(platform);

    popnet::ServerOptions options;
    options.base_port = base_port ? base_port : env_base_port();
    const auto bound = server.start(options);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    for (const auto& endpoint : bound) {
        std::cout << endpoint.pop << ' ' << endpoint.type << " http://" << endpoint.host << ':' << endpoint.port
                  << '\n';
    }
    std::cout << "ready" << std::endl;

    // The virtual clock follows wall time in steps of tick_ms.
    const auto step = std::chrono::milliseconds(tick_ms);
    auto next = std::chrono::steady_clock::now() + step;
    while (!stop_requested) {
        std::this_thread::sleep_for(std::chrono::milliseconds(std::min(tick_ms, 50)));
        if (std::chrono::steady_clock::now() >= next) {
            platform.exclusive([&](popnet::PlatformState& state) { popnet::tick(state, tick_ms / 1000.0); });
            next += step;
        }
    }
    server.stop();
    std::cout << "stopped" << std::endl;
    return exit_ok;
}

// ---------------------------------------------------------------------------
// Client side
// ---------------------------------------------------------------------------

struct Reply {
    int status = 0;
    json body;
};

class Client {
public:
    Client(std::string host, int port) : host_(std::move(host)), port_(port) {}

    // Request against the contact endpoint, or the endpoint serving `pop`.
    Reply call(const std::string& method, const std::string& path, const json& body = nullptr,
               const std::string& pop = {})
    {
        auto [host, port] = pop.empty() ? std::pair{host_, port_} : address_of(pop);
        httplib::Client http(host, port);
        http.set_connection_timeout(std::chrono::seconds(2));
        http.set_read_timeout(std::chrono::seconds(30));
        const std::string payload = body.is_null() ? std::string() : body.dump();
        httplib::Result result;
        if (method == "GET") {
            result = http.Get(path);
        } else if (method == "POST") {
            result = http.Post(path, payload, "application/json");
        } else {
            result = http.Delete(path);
        }
        if (!result) {
            throw UsageError("platform not running at " + host + ":" + std::to_string(port) +
                             " (start it with `popnet up --topology PATH`)");
        }
        Reply reply{result->status, nullptr};
        if (!result->body.empty()) {
            reply.body = json::parse(result->body, nullptr, false);
        }
        return reply;
    }

    // Throws Rejected for 4xx replies, carrying the server's reason.
    json expect(const std::string& method, const std::string& path, const json& body = nullptr,
                const std::string& pop = {})
    {
        auto reply = call(method, path, body, pop);
        if (reply.status >= 200 && reply.status < 300) {
            return reply.body;
        }
        std::string reason = "error";
        std::string message;
        if (reply.body.is_object()) {
            reason = reply.body.value("reason", reason);
            message = reply.body.value("error", "");
        }
        if (reply.status >= 400 && reply.status < 500) {
            throw Rejected(reason + (message.empty() ? "" : ": " + message));
        }
        throw std::runtime_error("server error " + std::to_string(reply.status) + ": " + message);
    }

    // Home PoP of an instance, looked up platform-wide.
    std::string pop_of(const std::string& instance_id)
    {
        const auto items = expect("GET", "/platform/instances")["instances"];
        for (const auto& item : items) {
            if (item["id"] == instance_id) {
                return item["pop"];
            }
        }
        throw Rejected("not_found: unknown instance '" + instance_id + "'");
    }

private:
    std::pair<std::string, int> address_of(const std::string& pop)
    {
        if (endpoints_.empty()) {
            const auto listing = expect("GET", "/platform/endpoints");
            for (const auto& item : listing["endpoints"]) {
                endpoints_[item["pop"]] = {item["host"], item["port"]};
            }
        }
        auto it = endpoints_.find(pop);
        if (it == endpoints_.end()) {
            throw Rejected("not_found: unknown PoP '" + pop + "'");
        }
        return it->second;
    }

    std::string host_;
    int port_;
    std::map<std::string, std::pair<std::string, int>> endpoints_;
};

void print_instances(const json& items)
{
    std::cout << std::left << std::setw(10) << "ID" << std::setw(10) << "POP" << std::setw(6) << "CU" << std::setw(12)
              << "FRACTION" << std::setw(8) << "DEMAND" << "IMAGE\n";
    for (const auto& item : items) {
        std::cout << std::left << std::setw(10) << item["id"].get<std::string>() << std::setw(10)
                  << item["pop"].get<std::string>() << std::setw(6) << item["cpu_cu"].get<std::int64_t>()
                  << std::setw(12) << fmt(item["cpu_fraction"]) << std::setw(8) << fmt(item["demand"])
                  << item["image"].get<std::string>() << '\n';
    }
}

void print_chain(const json& chain)
{
    std::cout << chain["id"].get<std::string>() << " vlan " << chain["vlan_tag"].get<int>() << " metric "
              << chain["metric"].get<std::string>() << '\n';
    std::cout << "  hops:";
    for (const auto& hop : chain["hops"]) {
        std::cout << ' ' << hop.get<std::string>();
    }
    std::cout << '\n';
    for (const auto& segment : chain["segments"]) {
        std::cout << "  path:";
        for (const auto& node : segment) {
            std::cout << ' ' << node.get<std::string>();
        }
        std::cout << '\n';
    }
}

// ---------------------------------------------------------------------------
// scenario run
// ---------------------------------------------------------------------------

int run_scenario_verb(const std::string& source, const std::string& out_path)
{
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!out_path.empty() && out_path != "-") {
        file.open(out_path, std::ios::binary);
        if (!file) {
            throw popnet::Error(popnet::ErrorCode::io_error, "cannot write " + out_path);
        }
        out = &file;
    }

    constexpr std::string_view sweep_prefix = "experiment2_";
    if (source.starts_with(sweep_prefix) && source.find("_k") == std::string::npos) {
        const auto points = popnet::run_isolation_sweep(source.substr(sweep_prefix.size()));
        const auto rows = popnet::export_sweep(points, *out);
        std::cerr << source << ": " << rows << " sweep points\n";
        return exit_ok;
    }

    popnet::Scenario scenario;
    if (auto builtin = popnet::builtin_scenario(source)) {
        scenario = std::move(*builtin);
    } else if (std::filesystem::exists(source)) {
        scenario = popnet::load_scenario(source);
    } else {
        throw UsageError("'" + source + "' is neither a built-in scenario nor a file (see `popnet scenario list`)");
    }
    const auto series = popnet::run_scenario(scenario);
    const auto rows = popnet::export_series(series, *out);
    std::size_t rejected = 0;
    for (const auto& event : series.events) {
        rejected += event.kind == popnet::EventKind::rejected;
    }
    std::cerr << scenario.name << ": " << series.ticks.size() << " ticks, " << rows << " rows, " << rejected
              << " rejected allocations\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"popnet - multi-PoP NFV emulation platform"};
    app.require_subcommand(1);

    std::string host = "127.0.0.1";
    int port = 0;
    bool as_json = false;
    app.add_option("--host", host, "Address of a running endpoint");
    app.add_option("--port", port, "Port of a running endpoint (default: POPNET_BASE_PORT or 8081)");
    app.add_flag("--json", as_json, "Machine-readable output for read verbs");

    auto* up = app.add_subcommand("up", "Start the platform and serve one endpoint per PoP until interrupted");
    std::string topology_path;
    double e_cpu = 0.5;
    int tick_ms = 1000;
    std::optional<int> base_port;
    up->add_option("--topology", topology_path, "Topology file")->required()->check(CLI::ExistingFile);
    up->add_option("--e-cpu", e_cpu, "Fraction of the host CPU given to the platform")->check(CLI::Range(0.0, 1.0));
    up->add_option("--tick-ms", tick_ms, "Virtual clock step in milliseconds")->check(CLI::PositiveNumber);
    up->add_option("--base-port", base_port, "Port of the first PoP's endpoint; others shift with it");

    app.add_subcommand("pops", "List PoPs with their ledgers and endpoints");

    auto* instances = app.add_subcommand("instances", "List instances");
    std::string instances_pop;
    instances->add_option("--pop", instances_pop, "Only instances homed in this PoP");

    auto* alloc = app.add_subcommand("alloc", "Allocate an instance on a PoP");
    std::string alloc_pop;
    std::int64_t cu = 0;
    std::int64_t mem = 0;
    std::int64_t storage = 0;
    std::string image;
    double demand = 1.0;
    alloc->add_option("--pop", alloc_pop, "Target PoP")->required();
    alloc->add_option("--cu", cu, "Compute units")->required();
    alloc->add_option("--mem", mem, "Memory in MB");
    alloc->add_option("--storage", storage, "Storage in GB");
    alloc->add_option("--image", image, "Image name");
    alloc->add_option("--demand", demand, "CPU demand in [0,1]; 1 behaves like stress");

    auto* release_cmd = app.add_subcommand("release", "Release an instance");
    std::string release_id;
    release_cmd->add_option("ID", release_id, "Instance id")->required();

    auto* chain = app.add_subcommand("chain", "Set up or remove a service chain");
    chain->require_subcommand(1);
    auto* chain_set = chain->add_subcommand("set", "Chain instances in traffic order");
    std::vector<std::string> hops;
    std::string metric = "hops";
    chain_set->add_option("ID", hops, "Instance ids")->required()->expected(2, -1);
    chain_set->add_option("--metric", metric, "hops or delay")->check(CLI::IsMember({"hops", "delay", "fewest_hops",
                                                                                      "smallest_delay"}));
    auto* chain_del = chain->add_subcommand("del", "Remove a chain");
    std::string chain_id;
    chain_del->add_option("CID", chain_id, "Chain id")->required();

    auto* chains = app.add_subcommand("chains", "Inspect chains");
    chains->require_subcommand(1);
    chains->add_subcommand("dump", "Print chains and flow tables");

    auto* stats = app.add_subcommand("stats", "Platform statistics, or one instance's usage series");
    std::string stats_id;
    stats->add_option("ID", stats_id, "Instance id");

    auto* traffic = app.add_subcommand("traffic", "Send a payload through a chain and report delivery");
    std::string traffic_chain;
    double mbits = 0.0;
    traffic->add_option("CID", traffic_chain, "Chain id")->required();
    traffic->add_option("--mbits", mbits, "Payload size in megabits")->required()->check(CLI::NonNegativeNumber);

    auto* scenario = app.add_subcommand("scenario", "Run scenarios offline");
    scenario->require_subcommand(1);
    auto* scenario_run = scenario->add_subcommand("run", "Run a scenario file or built-in and write CSV");
    std::string scenario_source;
    std::string out_path;
    scenario_run->add_option("SCENARIO", scenario_source, "Path or built-in name")->required();
    scenario_run->add_option("--out", out_path, "CSV output file ('-' for stdout)")->required();
    scenario->add_subcommand("list", "List built-in scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) {
            return exit_ok;
        }
        std::cerr << '\n' << app.help();
        return exit_usage;
    }

    try {
        if (up->parsed()) {
            return run_up(topology_path, e_cpu, tick_ms, base_port);
        }
        if (scenario->parsed()) {
            if (scenario_run->parsed()) {
                return run_scenario_verb(scenario_source, out_path);
            }
            for (const auto& name : popnet::builtin_scenario_names()) {
                std::cout << name << '\n';
            }
            for (const auto* model : {"none", "shared", "modelA", "modelB"}) {
                std::cout << "experiment2_" << model << "  (isolation sweep)\n";
            }
            return exit_ok;
        }

        if (port == 0) {
            port = env_base_port().value_or(default_port);
        }
        Client client(host, port);

        if (app.got_subcommand("pops")) {
            const auto body = client.expect("GET", "/platform/pops");
            if (as_json) {
                std::cout << body.dump(2) << '\n';
                return exit_ok;
            }
            std::cout << std::left << std::setw(10) << "POP" << std::setw(6) << "MC" << std::setw(6) << "AC"
                      << std::setw(22) << "MODEL" << "ENDPOINT\n";
            for (const auto& pop : body["pops"]) {
                const auto& model = pop["model"];
                const std::string kind = model.is_string() ? model.get<std::string>() : model["kind"].get<std::string>();
                std::cout << std::left << std::setw(10) << pop["name"].get<std::string>() << std::setw(6)
                          << pop["mc_cpu"].get<std::int64_t>() << std::setw(6) << pop["ac_cpu"].get<std::int64_t>()
                          << std::setw(22) << kind << pop["endpoint"]["type"].get<std::string>() << '\n';
            }
            return exit_ok;
        }
        if (instances->parsed()) {
            const std::string path =
                instances_pop.empty() ? "/platform/instances" : "/platform/instances?pop=" + instances_pop;
            const auto body = client.expect("GET", path);
            if (as_json) {
                std::cout << body.dump(2) << '\n';
            } else {
                print_instances(body["instances"]);
            }
            return exit_ok;
        }
        if (alloc->parsed()) {
            json request{{"cpu_cu", cu}, {"memory_mb", mem}, {"storage_gb", storage}, {"demand", demand}};
            if (!image.empty()) {
                request["image"] = image;
            }
            const auto body = client.expect("POST", "/instances", request, alloc_pop);
            if (as_json) {
                std::cout << body.dump(2) << '\n';
                return exit_ok;
            }
            const auto& instance = body["instance"];
            std::cout << instance["id"].get<std::string>() << " on " << instance["pop"].get<std::string>()
                      << " cpu_fraction " << fmt(instance["cpu_fraction"]) << '\n';
            for (const auto& [id, fraction] : body["updated_fractions"].items()) {
                std::cout << "  " << id << " -> " << fmt(fraction) << '\n';
            }
            return exit_ok;
        }
        if (release_cmd->parsed()) {
            const auto pop = client.pop_of(release_id);
            client.expect("DELETE", "/instances/" + release_id, nullptr, pop);
            std::cout << "released " << release_id << '\n';
            return exit_ok;
        }
        if (chain_set->parsed()) {
            const auto body = client.expect("POST", "/platform/chains", json{{"hops", hops}, {"metric", metric}});
            if (as_json) {
                std::cout << body.dump(2) << '\n';
            } else {
                print_chain(body);
            }
            return exit_ok;
        }
        if (chain_del->parsed()) {
            client.expect("DELETE", "/platform/chains/" + chain_id);
            std::cout << "removed " << chain_id << '\n';
            return exit_ok;
        }
        if (chains->parsed()) {
            const auto body = client.expect("GET", "/platform/chains");
            if (as_json) {
                std::cout << body.dump(2) << '\n';
                return exit_ok;
            }
            for (const auto& item : body["chains"]) {
                print_chain(item);
            }
            std::cout << "flow tables:\n";
            for (const auto& [node, entries] : body["flows"].items()) {
                std::cout << "  " << node << '\n';
                for (const auto& entry : entries) {
                    std::cout << "    in_port " << entry["in_port"].get<int>() << " vlan " << entry["vlan_tag"].get<int>()
                              << " -> out_port " << entry["out_port"].get<int>() << " vlan_op "
                              << entry["vlan"].get<std::string>() << " (" << entry["chain"].get<std::string>() << ")\n";
                }
            }
            return exit_ok;
        }
        if (stats->parsed()) {
            json body;
            if (stats_id.empty()) {
                body = client.expect("GET", "/platform/stats");
            } else {
                body = client.expect("GET", "/instances/" + stats_id + "/stats", nullptr, client.pop_of(stats_id));
            }
            if (as_json) {
                std::cout << body.dump(2) << '\n';
            } else if (stats_id.empty()) {
                std::cout << "clock " << fmt(body["clock"]) << " s, " << body["instances"].get<std::size_t>()
                          << " instances, " << body["chains"].get<std::size_t>() << " chains, cpu limits "
                          << fmt(body["cpu_limit_sum"]) << " of e_cpu " << fmt(body["e_cpu"]) << ", usage "
                          << fmt(body["cpu_usage"]) << '\n';
            } else {
                const auto& usage = body["usage"];
                std::cout << stats_id << " cpu_fraction " << fmt(body["cpu_fraction"]) << ", " << usage.size()
                          << " samples";
                if (!usage.empty()) {
                    std::cout << ", latest " << fmt(usage.back()[1]) << " at t=" << fmt(usage.back()[0]);
                }
                std::cout << ", pop usage " << fmt(body["pop_usage"]) << '\n';
            }
            return exit_ok;
        }
        if (traffic->parsed()) {
            std::ostringstream path;
            path << "/platform/chains/" << traffic_chain << "/traffic?mbits=" << std::setprecision(17) << mbits;
            const auto body = client.expect("GET", path.str());
            if (as_json) {
                std::cout << body.dump(2) << '\n';
            } else {
                std::cout << traffic_chain << ": delay " << fmt(body["end_to_end_delay_ms"]) << " ms, bottleneck "
                          << fmt(body["bottleneck_bandwidth_mbps"]) << " Mbps, delivery "
                          << fmt(body["delivery_probability"]) << ", " << body["hop_count"].get<int>()
                          << " links, transfer " << fmt(body["transfer_time_ms"]) << " ms\n";
            }
            return exit_ok;
        }
    } catch (const UsageError& e) {
        std::cerr << "popnet: " << e.what() << '\n';
        return exit_usage;
    } catch (const Rejected& e) {
        std::cerr << "popnet: rejected: " << e.what() << '\n';
        return exit_rejected;
    } catch (const popnet::Error& e) {
        std::cerr << "popnet: " << popnet::to_string(e.code()) << ": " << e.what() << '\n';
        const bool input_problem = e.code() == popnet::ErrorCode::parse_error ||
                                   e.code() == popnet::ErrorCode::validation_error ||
                                   e.code() == popnet::ErrorCode::io_error || e.code() == popnet::ErrorCode::scenario_error ||
                                   e.code() == popnet::ErrorCode::invalid_argument;
        return input_problem ? exit_usage : exit_rejected;
    } catch (const std::exception& e) {
        std::cerr << "popnet: " << e.what() << '\n';
        return exit_rejected;
    }
    std::cerr << app.help();
    return exit_usage;
}
