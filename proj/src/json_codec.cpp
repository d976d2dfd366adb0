#include "json_codec.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

namespace popnet::detail {

json parse_json(std::string_view text, std::string_view what)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < limit; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw Error(ErrorCode::parse_error, std::string(what) + ": syntax error at line " + std::to_string(line) +
                                                ", column " + std::to_string(column));
    }
}

void field_error(const std::string& path, const std::string& message)
{
    throw Error(ErrorCode::parse_error, (path.empty() ? std::string("<root>") : path) + ": " + message);
}

std::string join_path(const std::string& parent, std::string_view key)
{
    return parent.empty() ? std::string(key) : parent + "." + std::string(key);
}

std::string index_path(const std::string& parent, std::size_t index)
{
    return parent + "[" + std::to_string(index) + "]";
}

FieldReader::FieldReader(const json& object, std::string path, std::initializer_list<std::string_view> allowed)
    : object_(object), path_(std::move(path))
{
    if (!object_.is_object()) {
        field_error(path_, "expected an object");
    }
    for (const auto& item : object_.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            field_error(join_path(path_, item.key()), "unknown field");
        }
    }
}

bool FieldReader::has(std::string_view key) const
{
    return object_.contains(std::string(key));
}

const json& FieldReader::at(std::string_view key) const
{
    return object_.at(std::string(key));
}

ResourceModelRef read_model_ref(const json& value, const std::string& path)
{
    ResourceModelRef ref;
    if (value.is_string()) {
        ref.kind = value.get<std::string>();
        return ref;
    }
    FieldReader reader(value, path, {"kind", "params"});
    ref.kind = reader.required<std::string>("kind");
    if (reader.has("params")) {
        const auto& params = reader.at("params");
        if (!params.is_object()) {
            field_error(reader.path("params"), "expected an object");
        }
        for (const auto& item : params.items()) {
            ref.params[item.key()] = FieldReader::convert<double>(item.value(), join_path(reader.path("params"), item.key()));
        }
    }
    return ref;
}

json write_model_ref(const ResourceModelRef& ref)
{
    json params = json::object();
    for (const auto& [key, value] : ref.params) {
        params[key] = value;
    }
    return json{{"kind", ref.kind}, {"params", params}};
}

std::string format_number(double value)
{
    if (value == 0.0) {
        return "0";
    }
    std::array<char, 64> buffer{};
    auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    if (ec != std::errc{}) {
        return "nan";
    }
    return std::string(buffer.data(), end);
}

}  // namespace popnet::detail
