#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace skipsr {

// Validator for the JSON Schema subset used by the shipped report schemas:
// type, properties, required, items, enum, minimum.
namespace detail {

inline bool type_matches(const nlohmann::json& v, const std::string& type)
{
    if (type == "object")
        return v.is_object();
    if (type == "array")
        return v.is_array();
    if (type == "string")
        return v.is_string();
    if (type == "number")
        return v.is_number();
    if (type == "integer")
        return v.is_number_integer() || v.is_number_unsigned();
    if (type == "boolean")
        return v.is_boolean();
    if (type == "null")
        return v.is_null();
    return false;
}

inline void validate_node(const nlohmann::json& doc, const nlohmann::json& schema,
                          const std::string& path, std::vector<std::string>& errors)
{
    if (schema.contains("type")) {
        const std::string type = schema["type"].get<std::string>();
        if (!type_matches(doc, type)) {
            errors.push_back(path + ": expected " + type + ", got " + doc.type_name());
            return;
        }
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& e : schema["enum"])
            if (doc == e)
                ok = true;
        if (!ok)
            errors.push_back(path + ": value not in enum");
    }
    if (schema.contains("minimum") && doc.is_number() &&
        doc.get<double>() < schema["minimum"].get<double>())
        errors.push_back(path + ": below minimum");
    if (doc.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema["required"])
                if (!doc.contains(key.get<std::string>()))
                    errors.push_back(path + ": missing required key " + key.get<std::string>());
        if (schema.contains("properties"))
            for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it)
                if (doc.contains(it.key()))
                    validate_node(doc[it.key()], it.value(), path + "/" + it.key(), errors);
    }
    if (doc.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < doc.size(); ++i)
            validate_node(doc[i], schema["items"], path + "[" + std::to_string(i) + "]", errors);
    }
}

} // namespace detail

inline std::vector<std::string> validate_schema(const nlohmann::json& doc,
                                                const nlohmann::json& schema)
{
    std::vector<std::string> errors;
    detail::validate_node(doc, schema, "$", errors);
    return errors;
}

} // namespace skipsr
