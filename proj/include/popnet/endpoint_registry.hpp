#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace popnet {

class Endpoint;
class Platform;

// Builds the endpoint serving one PoP.
using EndpointFactory = std::function<std::unique_ptr<Endpoint>(Platform& platform, const std::string& pop)>;

class EndpointRegistry {
public:
    EndpointRegistry() = default;

    // Registry pre-populated with "heat-like".
    static EndpointRegistry with_builtins();
    static EndpointRegistry& global();

    // Throws Error(duplicate_name) if `name` is taken.
    void register_endpoint(const std::string& name, EndpointFactory factory);

    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;

    // Throws Error(validation_error) for unknown types.
    std::unique_ptr<Endpoint> create(std::string_view type, Platform& platform, const std::string& pop) const;

private:
    std::map<std::string, EndpointFactory, std::less<>> factories_;
};

}  // namespace popnet
