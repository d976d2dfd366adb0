#include <popnet/endpoint.hpp>

#include "json_codec.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <set>
#include <thread>

namespace popnet {

using detail::FieldReader;
using detail::json;

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

EndpointRegistry EndpointRegistry::with_builtins()
{
    EndpointRegistry registry;
    registry.register_endpoint("heat-like", [](Platform& platform, const std::string& pop) {
        return std::make_unique<HeatLikeEndpoint>(platform, pop);
    });
    return registry;
}

EndpointRegistry& EndpointRegistry::global()
{
    static EndpointRegistry registry = with_builtins();
    return registry;
}

void EndpointRegistry::register_endpoint(const std::string& name, EndpointFactory factory)
{
    if (name.empty()) {
        throw Error(ErrorCode::invalid_argument, "endpoint type must not be empty");
    }
    if (!factories_.emplace(name, std::move(factory)).second) {
        throw Error(ErrorCode::duplicate_name, "endpoint type '" + name + "' is already registered");
    }
}

bool EndpointRegistry::contains(std::string_view name) const
{
    return factories_.find(name) != factories_.end();
}

std::vector<std::string> EndpointRegistry::names() const
{
    std::vector<std::string> out;
    for (const auto& entry : factories_) {
        out.push_back(entry.first);
    }
    return out;
}

std::unique_ptr<Endpoint> EndpointRegistry::create(std::string_view type, Platform& platform,
                                                   const std::string& pop) const
{
    auto it = factories_.find(type);
    if (it == factories_.end()) {
        throw Error(ErrorCode::validation_error, "unknown endpoint type '" + std::string(type) + "'");
    }
    return it->second(platform, pop);
}

// ---------------------------------------------------------------------------
// Stack operations
// ---------------------------------------------------------------------------

namespace {

std::string make_stack_id(std::uint64_t seq)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "stack-%04llu", static_cast<unsigned long long>(seq));
    return buffer;
}

ResourceRequest read_request(const FieldReader& reader)
{
    ResourceRequest request;
    request.cpu_cu = reader.required<std::int64_t>("cpu_cu");
    request.memory_mb = reader.optional<std::int64_t>("memory_mb", 0);
    request.storage_gb = reader.optional<std::int64_t>("storage_gb", 0);
    if (request.cpu_cu < 1) {
        detail::field_error(reader.path("cpu_cu"), "must be at least 1");
    }
    if (request.memory_mb < 0) {
        detail::field_error(reader.path("memory_mb"), "must be non-negative");
    }
    if (request.storage_gb < 0) {
        detail::field_error(reader.path("storage_gb"), "must be non-negative");
    }
    return request;
}

double read_demand(const FieldReader& reader)
{
    const double demand = reader.optional<double>("demand", 1.0);
    if (!(demand >= 0.0 && demand <= 1.0)) {
        detail::field_error(reader.path("demand"), "must be in [0,1]");
    }
    return demand;
}

void check_template(const StackTemplate& stack_template)
{
    if (stack_template.resources.empty()) {
        detail::field_error("resources", "at least one resource is required");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < stack_template.resources.size(); ++i) {
        const auto& resource = stack_template.resources[i];
        const auto path = detail::index_path("resources", i);
        if (resource.name.empty()) {
            detail::field_error(path + ".name", "must not be empty");
        }
        if (!names.insert(resource.name).second) {
            detail::field_error(path + ".name", "duplicate resource name '" + resource.name + "'");
        }
        if (resource.request.cpu_cu < 1) {
            detail::field_error(path + ".cpu_cu", "must be at least 1");
        }
        if (resource.request.memory_mb < 0 || resource.request.storage_gb < 0) {
            detail::field_error(path, "memory_mb and storage_gb must be non-negative");
        }
        if (!(resource.demand >= 0.0 && resource.demand <= 1.0)) {
            detail::field_error(path + ".demand", "must be in [0,1]");
        }
    }
    if (stack_template.chain) {
        if (stack_template.chain->hops.size() < 2) {
            detail::field_error("chain.hops", "a chain needs at least two hops");
        }
        for (std::size_t i = 0; i < stack_template.chain->hops.size(); ++i) {
            if (!names.contains(stack_template.chain->hops[i])) {
                detail::field_error(detail::index_path("chain.hops", i),
                                    "unknown resource '" + stack_template.chain->hops[i] + "'");
            }
        }
    }
}

}  // namespace

StackTemplate parse_stack_template(std::string_view text)
{
    const json root = detail::parse_json(text, "stack template");
    FieldReader reader(root, "", {"name", "resources", "chain"});
    StackTemplate out;
    out.name = reader.optional<std::string>("name", "");
    if (!reader.has("resources")) {
        detail::field_error("resources", "missing required field");
    }
    const json& resources = reader.at("resources");
    if (!resources.is_array()) {
        detail::field_error("resources", "expected an array");
    }
    for (std::size_t i = 0; i < resources.size(); ++i) {
        FieldReader item(resources[i], detail::index_path("resources", i),
                         {"name", "image", "cpu_cu", "memory_mb", "storage_gb", "demand"});
        StackResource resource;
        resource.name = item.required<std::string>("name");
        resource.image = item.optional<std::string>("image", "");
        resource.request = read_request(item);
        resource.demand = read_demand(item);
        out.resources.push_back(std::move(resource));
    }
    if (reader.has("chain")) {
        FieldReader chain(reader.at("chain"), "chain", {"hops", "metric"});
        StackChainSpec spec;
        spec.hops = chain.required<std::vector<std::string>>("hops");
        const auto metric = chain.optional<std::string>("metric", "fewest_hops");
        try {
            spec.metric = parse_metric(metric);
        } catch (const Error&) {
            detail::field_error("chain.metric", "unknown metric '" + metric + "'");
        }
        out.chain = std::move(spec);
    }
    check_template(out);
    return out;
}

StackOutcome create_stack(PlatformState& state, std::string_view pop, const StackTemplate& stack_template)
{
    check_template(stack_template);
    state.ledger(pop);

    PlatformState before = state;
    StackOutcome result;
    Stack stack;
    stack.name = stack_template.name;
    stack.pop = std::string(pop);
    try {
        for (const auto& resource : stack_template.resources) {
            auto allocation = allocate(state, pop, resource.request, resource.image, resource.demand);
            if (!allocation.outcome.accepted) {
                state = std::move(before);
                StackOutcome rejected;
                rejected.reason = allocation.outcome.reason;
                rejected.rejected_resource = resource.name;
                return rejected;
            }
            stack.instances.emplace_back(resource.name, allocation.instance->id);
            result.outcomes.push_back(std::move(allocation.outcome));
        }
        if (stack_template.chain) {
            std::vector<std::string> ids;
            for (const auto& hop : stack_template.chain->hops) {
                auto it = std::find_if(stack.instances.begin(), stack.instances.end(),
                                       [&](const auto& entry) { return entry.first == hop; });
                ids.push_back(it->second);
            }
            stack.chain_id = set_chain(state, ids, stack_template.chain->metric).id;
        }
    } catch (...) {
        state = std::move(before);
        throw;
    }
    stack.id = make_stack_id(state.next_stack++);
    state.stacks.emplace(stack.id, stack);
    result.stack = std::move(stack);
    return result;
}

std::vector<std::string> delete_stack(PlatformState& state, std::string_view pop, std::string_view stack_id)
{
    auto it = state.stacks.find(std::string(stack_id));
    if (it == state.stacks.end() || it->second.pop != pop) {
        throw Error(ErrorCode::unknown_stack, "unknown stack '" + std::string(stack_id) + "'");
    }
    const Stack stack = it->second;

    std::set<std::string> members;
    for (const auto& entry : stack.instances) {
        members.insert(entry.second);
    }
    std::vector<std::string> own_chains;
    for (const auto& [chain_id, chain] : state.chains) {
        if (std::all_of(chain.hops.begin(), chain.hops.end(), [&](const auto& hop) { return members.contains(hop); })) {
            own_chains.push_back(chain_id);
        }
    }
    for (const auto& chain_id : own_chains) {
        remove_chain(state, chain_id);
    }

    std::vector<std::string> released;
    for (const auto& entry : stack.instances) {
        release(state, entry.second);
        released.push_back(entry.second);
    }
    state.stacks.erase(stack.id);
    return released;
}

namespace {

double latest_usage(const PlatformState& state, const std::string& id)
{
    auto it = state.usage.find(id);
    return it == state.usage.end() || it->second.empty() ? 0.0 : it->second.back().usage;
}

double pop_usage(const PlatformState& state, std::string_view pop)
{
    double sum = 0.0;
    for (const auto& [id, instance] : state.instances) {
        if (instance.pop == pop) {
            sum += latest_usage(state, id);
        }
    }
    return sum;
}

InstanceStats make_stats(const PlatformState& state, const ComputeInstance& instance)
{
    InstanceStats stats;
    stats.id = instance.id;
    stats.pop = instance.pop;
    stats.cpu_fraction = instance.cpu_fraction;
    if (auto it = state.usage.find(instance.id); it != state.usage.end()) {
        stats.usage.assign(it->second.begin(), it->second.end());
    }
    stats.pop_usage = pop_usage(state, instance.pop);
    return stats;
}

}  // namespace

InstanceStats get_stats(const PlatformState& state, std::string_view pop, std::string_view instance_id)
{
    auto it = state.instances.find(std::string(instance_id));
    if (it == state.instances.end() || it->second.pop != pop) {
        throw Error(ErrorCode::unknown_instance, "unknown instance '" + std::string(instance_id) + "'");
    }
    return make_stats(state, it->second);
}

std::vector<InstanceStats> get_all_stats(const PlatformState& state, std::string_view pop)
{
    state.ledger(pop);
    std::vector<InstanceStats> out;
    for (const auto& [id, instance] : state.instances) {
        if (instance.pop == pop) {
            out.push_back(make_stats(state, instance));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON views
// ---------------------------------------------------------------------------

namespace {

json instance_json(const ComputeInstance& instance)
{
    return {{"id", instance.id},
            {"pop", instance.pop},
            {"image", instance.image},
            {"cpu_cu", instance.request.cpu_cu},
            {"memory_mb", instance.request.memory_mb},
            {"storage_gb", instance.request.storage_gb},
            {"cpu_fraction", instance.cpu_fraction},
            {"demand", instance.demand},
            {"created_at", instance.created_at},
            {"attach_port", instance.attach_port}};
}

json chain_json(const Chain& chain)
{
    return {{"id", chain.id},
            {"vlan_tag", chain.vlan_tag},
            {"hops", chain.hops},
            {"segments", chain.segments},
            {"metric", to_string(chain.metric)}};
}

json stack_json(const PlatformState& state, const Stack& stack)
{
    json instances = json::array();
    for (const auto& [name, id] : stack.instances) {
        json item = instance_json(state.instance(id));
        item["name"] = name;
        instances.push_back(std::move(item));
    }
    json out = {{"id", stack.id}, {"name", stack.name}, {"pop", stack.pop}, {"instances", instances}};
    if (stack.chain_id && state.chains.contains(*stack.chain_id)) {
        out["chain"] = chain_json(state.chains.at(*stack.chain_id));
    } else {
        out["chain"] = nullptr;
    }
    return out;
}

json stats_json(const InstanceStats& stats)
{
    json usage = json::array();
    for (const auto& sample : stats.usage) {
        usage.push_back({sample.t, sample.usage});
    }
    return {{"id", stats.id},
            {"pop", stats.pop},
            {"cpu_fraction", stats.cpu_fraction},
            {"usage", usage},
            {"pop_usage", stats.pop_usage}};
}

json ledger_json(const PoPLedger& ledger)
{
    return {{"name", ledger.pop},
            {"mc_cpu", ledger.mc_cpu},
            {"ac_cpu", ledger.ac_cpu},
            {"mem_capacity_mb", ledger.mem_capacity_mb},
            {"mem_allocated_mb", ledger.mem_allocated_mb},
            {"storage_capacity_gb", ledger.storage_capacity_gb},
            {"storage_allocated_gb", ledger.storage_allocated_gb},
            {"model", detail::write_model_ref(ledger.model)}};
}

json fractions_json(const std::map<std::string, double>& fractions)
{
    json out = json::object();
    for (const auto& [id, value] : fractions) {
        out[id] = value;
    }
    return out;
}

ApiResponse respond(int status, const json& body)
{
    return ApiResponse{status, body.dump()};
}

ApiResponse error_response(int status, std::string_view reason, const std::string& message)
{
    return respond(status, json{{"error", message}, {"reason", reason}});
}

ApiResponse rejection(RejectReason reason, const std::string& resource)
{
    json body{{"error", "allocation rejected: " + std::string(to_string(reason))}, {"reason", to_string(reason)}};
    if (!resource.empty()) {
        body["resource"] = resource;
    }
    return respond(409, body);
}

ApiResponse from_error(const Error& e)
{
    switch (e.code()) {
    case ErrorCode::parse_error:
    case ErrorCode::invalid_argument: {
        json body{{"error", e.what()}, {"reason", "malformed"}};
        const std::string what = e.what();
        if (auto colon = what.find(": "); e.code() == ErrorCode::parse_error && colon != std::string::npos) {
            body["field"] = what.substr(0, colon);
        }
        return respond(400, body);
    }
    case ErrorCode::unknown_pop:
    case ErrorCode::unknown_instance:
    case ErrorCode::unknown_chain:
    case ErrorCode::unknown_stack: return error_response(404, "not_found", e.what());
    case ErrorCode::vlan_exhausted:
    case ErrorCode::flow_conflict:
    case ErrorCode::no_path: return error_response(409, to_string(e.code()), e.what());
    default: return error_response(500, to_string(e.code()), e.what());
    }
}

std::vector<std::string> split_path(std::string_view path)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find('/', start);
        if (end == std::string_view::npos) {
            end = path.size();
        }
        if (end > start) {
            parts.emplace_back(path.substr(start, end - start));
        }
        start = end + 1;
    }
    return parts;
}

ApiResponse not_found_route(const ApiRequest& request)
{
    return error_response(404, "no_route", "no route for " + request.method + " " + request.path);
}

ApiResponse method_not_allowed(const ApiRequest& request)
{
    return error_response(405, "method_not_allowed", request.method + " not allowed on " + request.path);
}

ApiResponse platform_route(Platform& platform, const ApiRequest& request, const std::vector<std::string>& parts)
{
    const auto& method = request.method;
    if (parts.size() == 2 && parts[1] == "stats") {
        if (method != "GET") {
            return method_not_allowed(request);
        }
        return platform.read([](const PlatformState& state) {
            json pops = json::array();
            double limit_total = 0.0;
            double usage_total = 0.0;
            for (const auto& decl : state.topology->pops()) {
                json item = ledger_json(state.ledger(decl.name));
                double limits = 0.0;
                std::size_t count = 0;
                for (const auto& [id, instance] : state.instances) {
                    if (instance.pop == decl.name) {
                        limits += instance.cpu_fraction;
                        ++count;
                    }
                }
                const double usage = pop_usage(state, decl.name);
                item["instances"] = count;
                item["cpu_limit_sum"] = limits;
                item["cpu_usage"] = usage;
                limit_total += limits;
                usage_total += usage;
                pops.push_back(std::move(item));
            }
            return respond(200, json{{"clock", state.clock},
                                     {"e_cpu", state.config.e_cpu},
                                     {"total_mc", state.config.total_mc},
                                     {"instances", state.instances.size()},
                                     {"chains", state.chains.size()},
                                     {"cpu_limit_sum", limit_total},
                                     {"cpu_usage", usage_total},
                                     {"pops", pops}});
        });
    }
    if (parts.size() == 2 && parts[1] == "pops") {
        if (method != "GET") {
            return method_not_allowed(request);
        }
        return platform.read([](const PlatformState& state) {
            json pops = json::array();
            for (const auto& decl : state.topology->pops()) {
                json item = ledger_json(state.ledger(decl.name));
                item["endpoint"] = {
                    {"type", decl.endpoint.type}, {"port", decl.endpoint.port}, {"bind", decl.endpoint.bind}};
                pops.push_back(std::move(item));
            }
            return respond(200, json{{"pops", pops}});
        });
    }
    if (parts.size() == 2 && parts[1] == "instances") {
        if (method != "GET") {
            return method_not_allowed(request);
        }
        const auto pop_filter = request.query.contains("pop") ? request.query.at("pop") : std::string();
        return platform.read([&](const PlatformState& state) {
            json items = json::array();
            for (const auto& [id, instance] : state.instances) {
                if (pop_filter.empty() || instance.pop == pop_filter) {
                    items.push_back(instance_json(instance));
                }
            }
            return respond(200, json{{"instances", items}});
        });
    }
    if (parts.size() == 2 && parts[1] == "chains") {
        if (method == "GET") {
            return platform.read([](const PlatformState& state) {
                json chains = json::array();
                for (const auto& [id, chain] : state.chains) {
                    chains.push_back(chain_json(chain));
                }
                json flows = json::object();
                for (const auto& [node, table] : state.flows) {
                    json entries = json::array();
                    for (const auto& [match, entry] : table) {
                        entries.push_back({{"in_port", match.in_port},
                                           {"vlan_tag", match.vlan_tag},
                                           {"out_port", entry.out_port},
                                           {"vlan", to_string(entry.vlan)},
                                           {"chain", entry.chain_id}});
                    }
                    flows[node] = std::move(entries);
                }
                return respond(200, json{{"chains", chains}, {"flows", flows}});
            });
        }
        if (method == "POST") {
            const json body = detail::parse_json(request.body, "chain request");
            FieldReader reader(body, "", {"hops", "metric"});
            const auto hops = reader.required<std::vector<std::string>>("hops");
            const auto metric = parse_metric(reader.optional<std::string>("metric", "fewest_hops"));
            return platform.exclusive([&](PlatformState& state) {
                return respond(201, chain_json(set_chain(state, hops, metric)));
            });
        }
        return method_not_allowed(request);
    }
    if (parts.size() == 3 && parts[1] == "chains") {
        if (method == "GET") {
            return platform.read([&](const PlatformState& state) {
                auto it = state.chains.find(parts[2]);
                if (it == state.chains.end()) {
                    throw Error(ErrorCode::unknown_chain, "unknown chain '" + parts[2] + "'");
                }
                return respond(200, chain_json(it->second));
            });
        }
        if (method == "DELETE") {
            platform.exclusive([&](PlatformState& state) { remove_chain(state, parts[2]); });
            return ApiResponse{204, ""};
        }
        return method_not_allowed(request);
    }
    if (parts.size() == 4 && parts[1] == "chains" && parts[3] == "traffic") {
        if (method != "GET") {
            return method_not_allowed(request);
        }
        double mbits = 0.0;
        if (auto it = request.query.find("mbits"); it != request.query.end()) {
            try {
                mbits = std::stod(it->second);
            } catch (const std::exception&) {
                throw Error(ErrorCode::parse_error, "mbits: expected a number");
            }
        }
        return platform.read([&](const PlatformState& state) {
            const auto report = simulate_traffic(state, parts[2], mbits);
            return respond(200, json{{"chain", parts[2]},
                                     {"payload_mbits", mbits},
                                     {"end_to_end_delay_ms", report.end_to_end_delay_ms},
                                     {"bottleneck_bandwidth_mbps", report.bottleneck_bandwidth_mbps},
                                     {"delivery_probability", report.delivery_probability},
                                     {"hop_count", report.hop_count},
                                     {"transfer_time_ms", report.transfer_time_ms}});
        });
    }
    return not_found_route(request);
}

}  // namespace

ApiResponse handle_platform_request(Platform& platform, const ApiRequest& request)
{
    try {
        const auto parts = split_path(request.path);
        if (parts.empty() || parts[0] != "platform") {
            return not_found_route(request);
        }
        return platform_route(platform, request, parts);
    } catch (const Error& e) {
        return from_error(e);
    }
}

ApiResponse HeatLikeEndpoint::handle(const ApiRequest& request)
{
    const auto parts = split_path(request.path);
    if (!parts.empty() && parts[0] == "platform") {
        return handle_platform_request(platform_, request);
    }
    const auto& method = request.method;
    try {
        if (parts.size() == 1 && parts[0] == "stacks") {
            if (method == "GET") {
                return platform_.read([&](const PlatformState& state) {
                    json stacks = json::array();
                    for (const auto& [id, stack] : state.stacks) {
                        if (stack.pop == pop_) {
                            stacks.push_back(stack_json(state, stack));
                        }
                    }
                    return respond(200, json{{"stacks", stacks}});
                });
            }
            if (method == "POST") {
                const auto stack_template = parse_stack_template(request.body);
                return platform_.exclusive([&](PlatformState& state) {
                    auto outcome = create_stack(state, pop_, stack_template);
                    if (!outcome.stack) {
                        return rejection(*outcome.reason, outcome.rejected_resource);
                    }
                    return respond(201, stack_json(state, *outcome.stack));
                });
            }
            return method_not_allowed(request);
        }
        if (parts.size() == 2 && parts[0] == "stacks") {
            if (method == "GET") {
                return platform_.read([&](const PlatformState& state) {
                    auto it = state.stacks.find(parts[1]);
                    if (it == state.stacks.end() || it->second.pop != pop_) {
                        throw Error(ErrorCode::unknown_stack, "unknown stack '" + parts[1] + "'");
                    }
                    return respond(200, stack_json(state, it->second));
                });
            }
            if (method == "DELETE") {
                platform_.exclusive([&](PlatformState& state) { delete_stack(state, pop_, parts[1]); });
                return ApiResponse{204, ""};
            }
            return method_not_allowed(request);
        }
        if (parts.size() == 1 && parts[0] == "instances") {
            if (method == "GET") {
                return platform_.read([&](const PlatformState& state) {
                    json items = json::array();
                    for (const auto& [id, instance] : state.instances) {
                        if (instance.pop == pop_) {
                            items.push_back(instance_json(instance));
                        }
                    }
                    return respond(200, json{{"instances", items}});
                });
            }
            if (method == "POST") {
                const json body = detail::parse_json(request.body, "instance request");
                FieldReader reader(body, "", {"image", "cpu_cu", "memory_mb", "storage_gb", "demand"});
                const auto resource = read_request(reader);
                const auto demand = read_demand(reader);
                const auto image = reader.optional<std::string>("image", "");
                return platform_.exclusive([&](PlatformState& state) {
                    auto allocation = allocate(state, pop_, resource, image, demand);
                    if (!allocation.outcome.accepted) {
                        return rejection(*allocation.outcome.reason, "");
                    }
                    return respond(201, json{{"instance", instance_json(*allocation.instance)},
                                             {"updated_fractions",
                                              fractions_json(allocation.outcome.updated_fractions)}});
                });
            }
            return method_not_allowed(request);
        }
        if (parts.size() == 2 && parts[0] == "instances") {
            auto owned = [&](const PlatformState& state) -> const ComputeInstance& {
                auto it = state.instances.find(parts[1]);
                if (it == state.instances.end() || it->second.pop != pop_) {
                    throw Error(ErrorCode::unknown_instance, "unknown instance '" + parts[1] + "'");
                }
                return it->second;
            };
            if (method == "GET") {
                return platform_.read([&](const PlatformState& state) { return respond(200, instance_json(owned(state))); });
            }
            if (method == "DELETE") {
                platform_.exclusive([&](PlatformState& state) {
                    owned(state);
                    release(state, parts[1]);
                });
                return ApiResponse{204, ""};
            }
            return method_not_allowed(request);
        }
        if (parts.size() == 3 && parts[0] == "instances" && parts[2] == "stats") {
            if (method != "GET") {
                return method_not_allowed(request);
            }
            return platform_.read(
                [&](const PlatformState& state) { return respond(200, stats_json(get_stats(state, pop_, parts[1]))); });
        }
        if (parts.size() == 1 && parts[0] == "stats") {
            if (method != "GET") {
                return method_not_allowed(request);
            }
            return platform_.read([&](const PlatformState& state) {
                json items = json::array();
                for (const auto& stats : get_all_stats(state, pop_)) {
                    items.push_back(stats_json(stats));
                }
                return respond(200, json{{"pop", pop_}, {"instances", items}});
            });
        }
        return not_found_route(request);
    } catch (const Error& e) {
        return from_error(e);
    }
}

// ---------------------------------------------------------------------------
// HTTP listeners
// ---------------------------------------------------------------------------

struct EndpointServer::Listener {
    std::unique_ptr<Endpoint> endpoint;
    httplib::Server server;
    std::thread thread;
};

EndpointServer::EndpointServer(Platform& platform, const EndpointRegistry& registry)
    : platform_(platform), registry_(registry)
{
}

EndpointServer::~EndpointServer()
{
    stop();
}

std::vector<BoundEndpoint> EndpointServer::start(const ServerOptions& options)
{
    if (!listeners_.empty()) {
        throw Error(ErrorCode::endpoint_error, "endpoints already started");
    }
    const auto pops = platform_.read([](const PlatformState& state) { return state.topology->pops(); });
    const int shift = options.base_port ? *options.base_port - pops.front().endpoint.port : 0;

    for (const auto& pop : pops) {
        auto listener = std::make_unique<Listener>();
        listener->endpoint = registry_.create(pop.endpoint.type, platform_, pop.name);
        auto* endpoint = listener->endpoint.get();
        auto handler = [this, endpoint](const httplib::Request& req, httplib::Response& res) {
            if (req.path == "/platform/endpoints") {
                res.status = req.method == "GET" ? 200 : 405;
                res.set_content(endpoints_body(), "application/json");
                return;
            }
            ApiRequest request{req.method, req.path, req.body, {}};
            for (const auto& [key, value] : req.params) {
                request.query[key] = value;
            }
            ApiResponse response;
            try {
                response = endpoint->handle(request);
            } catch (const std::exception& e) {
                response = ApiResponse{500, json{{"error", e.what()}, {"reason", "internal"}}.dump()};
            }
            res.status = response.status;
            if (!response.body.empty()) {
                res.set_content(response.body, "application/json");
            }
        };
        auto& server = listener->server;
        server.Get(".*", handler);
        server.Post(".*", handler);
        server.Put(".*", handler);
        server.Delete(".*", handler);
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });

        int port = pop.endpoint.port + shift;
        bool bound = false;
        if (options.ephemeral_ports) {
            port = server.bind_to_any_port(pop.endpoint.bind);
            bound = port > 0;
        } else {
            bound = port > 0 && port <= 65535 && server.bind_to_port(pop.endpoint.bind, port);
        }
        if (!bound) {
            stop();
            throw Error(ErrorCode::endpoint_error, "PoP '" + pop.name + "': cannot bind " + pop.endpoint.bind + ":" +
                                                       std::to_string(port) + " (port in use?)");
        }
        listener->thread = std::thread([&server] { server.listen_after_bind(); });
        server.wait_until_ready();
        {
            std::lock_guard lock(bound_mutex_);
            bound_.push_back(BoundEndpoint{pop.name, std::string(endpoint->type()), pop.endpoint.bind, port});
        }
        listeners_.push_back(std::move(listener));
    }
    return bound_;
}

std::string EndpointServer::endpoints_body() const
{
    std::lock_guard lock(bound_mutex_);
    json items = json::array();
    for (const auto& b : bound_) {
        items.push_back({{"pop", b.pop}, {"type", b.type}, {"host", b.host}, {"port", b.port}});
    }
    return json{{"endpoints", items}}.dump();
}

void EndpointServer::stop()
{
    for (auto& listener : listeners_) {
        listener->server.stop();
        if (listener->thread.joinable()) {
            listener->thread.join();
        }
    }
    listeners_.clear();
    std::lock_guard lock(bound_mutex_);
    bound_.clear();
}

}  // namespace popnet
