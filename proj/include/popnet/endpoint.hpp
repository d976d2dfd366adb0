#pragma once

#include <popnet/endpoint_registry.hpp>
#include <popnet/platform.hpp>
#include <popnet/types.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace popnet {

// ---------------------------------------------------------------------------
// Stack lifecycle on a PoP
// ---------------------------------------------------------------------------

struct StackResource {
    std::string name;
    std::string image;
    ResourceRequest request;
    double demand = 1.0;
};

struct StackChainSpec {
    // Resource names from the same template, in traffic order.
    std::vector<std::string> hops;
    Metric metric = Metric::fewest_hops;
};

struct StackTemplate {
    std::string name;
    std::vector<StackResource> resources;
    std::optional<StackChainSpec> chain;
};

// Throws Error(parse_error) whose message starts with the offending field
// path, e.g. "resources[1].cpu_cu: expected an integer".
StackTemplate parse_stack_template(std::string_view text);

struct StackOutcome {
    // Set when the stack was created.
    std::optional<Stack> stack;
    std::vector<AllocationOutcome> outcomes;
    // Set on resource rejection; the state is then unchanged.
    std::optional<RejectReason> reason;
    std::string rejected_resource;
};

// Allocates the template's resources in order and installs its chain. Any
// rejection rolls the whole stack back. Chain failures roll back and rethrow.
StackOutcome create_stack(PlatformState& state, std::string_view pop, const StackTemplate& stack_template);

// Removes the stack's chains, then releases its instances. Throws
// Error(unknown_stack) when the stack does not exist on `pop`.
std::vector<std::string> delete_stack(PlatformState& state, std::string_view pop, std::string_view stack_id);

struct InstanceStats {
    std::string id;
    std::string pop;
    double cpu_fraction = 0.0;
    std::vector<UsageSample> usage;
    // Latest usage summed over the instance's PoP.
    double pop_usage = 0.0;
};

// Throws Error(unknown_instance) for ids not homed in `pop`.
InstanceStats get_stats(const PlatformState& state, std::string_view pop, std::string_view instance_id);
std::vector<InstanceStats> get_all_stats(const PlatformState& state, std::string_view pop);

// ---------------------------------------------------------------------------
// Transport-independent request handling
// ---------------------------------------------------------------------------

struct ApiRequest {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> query;
};

struct ApiResponse {
    int status = 200;
    std::string body;
};

// Management interface of one PoP.
class Endpoint {
public:
    Endpoint(Platform& platform, std::string pop) : platform_(platform), pop_(std::move(pop)) {}
    virtual ~Endpoint() = default;

    const std::string& pop() const noexcept { return pop_; }
    virtual std::string_view type() const = 0;
    virtual ApiResponse handle(const ApiRequest& request) = 0;

protected:
    Platform& platform_;
    std::string pop_;
};

// Stack-style IaaS endpoint:
//   POST /stacks, GET /stacks, GET /stacks/{id}, DELETE /stacks/{id}
//   POST /instances, GET /instances, GET /instances/{id},
//   DELETE /instances/{id}, GET /instances/{id}/stats, GET /stats
// plus the platform routes under /platform/ shared by every endpoint.
class HeatLikeEndpoint final : public Endpoint {
public:
    using Endpoint::Endpoint;

    std::string_view type() const override { return "heat-like"; }
    ApiResponse handle(const ApiRequest& request) override;
};

// Emulator-wide routes:
//   GET /platform/stats, GET /platform/pops, GET /platform/instances,
//   GET /platform/chains, POST /platform/chains, DELETE /platform/chains/{id},
//   GET /platform/chains/{id}/traffic?mbits=X
ApiResponse handle_platform_request(Platform& platform, const ApiRequest& request);

// ---------------------------------------------------------------------------
// HTTP listeners
// ---------------------------------------------------------------------------

struct BoundEndpoint {
    std::string pop;
    std::string type;
    std::string host;
    int port = 0;
};

struct ServerOptions {
    // Bind every endpoint to an OS-assigned port instead of its declared one.
    bool ephemeral_ports = false;
    // Shift all declared ports so the first PoP's endpoint lands here.
    std::optional<int> base_port;
};

// Besides the endpoint routes, every listener answers GET /platform/endpoints
// with the addresses actually bound, which differ from the declared ports when
// a base port or ephemeral ports are in use.
class EndpointServer {
public:
    explicit EndpointServer(Platform& platform, const EndpointRegistry& registry = EndpointRegistry::global());
    ~EndpointServer();

    EndpointServer(const EndpointServer&) = delete;
    EndpointServer& operator=(const EndpointServer&) = delete;

    // One listener per PoP. Throws Error(endpoint_error) naming the PoP when
    // a port cannot be bound; nothing keeps running in that case.
    std::vector<BoundEndpoint> start(const ServerOptions& options = {});
    void stop();

    const std::vector<BoundEndpoint>& bound() const noexcept { return bound_; }

private:
    struct Listener;

    std::string endpoints_body() const;

    Platform& platform_;
    const EndpointRegistry& registry_;
    std::vector<std::unique_ptr<Listener>> listeners_;
    // Guards bound_ against listeners that are already serving during start().
    mutable std::mutex bound_mutex_;
    std::vector<BoundEndpoint> bound_;
};

}  // namespace popnet
