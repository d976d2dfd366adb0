#pragma once

#include <popnet/types.hpp>

#include <json.hpp>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace popnet::detail {

using json = nlohmann::json;

// Parses JSON text; syntax errors become Error(parse_error) naming the line
// and column.
json parse_json(std::string_view text, std::string_view what);

[[noreturn]] void field_error(const std::string& path, const std::string& message);

std::string join_path(const std::string& parent, std::string_view key);
std::string index_path(const std::string& parent, std::size_t index);

// Strict reader over one JSON object: unknown keys and wrongly typed values
// are errors carrying the field path.
class FieldReader {
public:
    FieldReader(const json& object, std::string path, std::initializer_list<std::string_view> allowed);

    bool has(std::string_view key) const;
    const json& at(std::string_view key) const;
    std::string path(std::string_view key) const { return join_path(path_, key); }
    const std::string& path() const noexcept { return path_; }

    template <class T>
    T required(std::string_view key) const
    {
        if (!has(key)) {
            field_error(path(key), "missing required field");
        }
        return convert<T>(at(key), path(key));
    }

    template <class T>
    T optional(std::string_view key, T fallback) const
    {
        return has(key) ? convert<T>(at(key), path(key)) : std::move(fallback);
    }

    template <class T>
    static T convert(const json& value, const std::string& path)
    {
        if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) {
                field_error(path, "expected a boolean");
            }
            return value.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!value.is_number_integer()) {
                field_error(path, "expected an integer");
            }
            return value.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!value.is_number()) {
                field_error(path, "expected a number");
            }
            return value.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) {
                field_error(path, "expected a string");
            }
            return value.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            if (!value.is_array()) {
                field_error(path, "expected an array of strings");
            }
            std::vector<std::string> out;
            for (std::size_t i = 0; i < value.size(); ++i) {
                out.push_back(convert<std::string>(value[i], index_path(path, i)));
            }
            return out;
        } else {
            static_assert(sizeof(T) == 0, "unsupported field type");
        }
    }

private:
    const json& object_;
    std::string path_;
};

ResourceModelRef read_model_ref(const json& value, const std::string& path);
json write_model_ref(const ResourceModelRef& ref);

// Shortest round-trip decimal form; integral values print without a
// fractional part.
std::string format_number(double value);

}  // namespace popnet::detail
