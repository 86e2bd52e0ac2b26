#include "eqdisc/schema.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eqdisc/errors.hpp"

namespace eqdisc {

namespace {

bool looks_like_coeff(const std::string& s) {
    static const std::regex pat("a[0-9]+");
    return std::regex_match(s, pat);
}

} // namespace

void ProcessSchema::validate() const {
    if (inputs.empty()) throw ConfigError("schema '" + process + "': needs at least one input");
    if (outputs.empty()) throw ConfigError("schema '" + process + "': needs at least one output");

    std::set<std::string> seen;
    auto claim = [&](const std::string& n, const char* what) {
        if (n.empty()) throw ConfigError("schema '" + process + "': empty " + std::string(what) + " name");
        if (looks_like_coeff(n))
            throw ConfigError("schema '" + process + "': name '" + n + "' collides with coefficient spelling a<k>");
        if (!seen.insert(n).second)
            throw ConfigError("schema '" + process + "': duplicate name '" + n + "'");
    };

    for (const auto& in : inputs) {
        claim(in.name, "input");
        for (const auto& alias : in.aliases) claim(alias, "alias");
        if (in.levels.empty())
            throw ConfigError("schema '" + process + "': input '" + in.name + "' has no grid levels");
        for (std::size_t i = 1; i < in.levels.size(); ++i)
            if (!(in.levels[i - 1] < in.levels[i]))
                throw ConfigError("schema '" + process + "': levels of '" + in.name + "' not strictly ascending");
    }
    for (const auto& out : outputs) claim(out.name, "output");
}

int ProcessSchema::input_index(std::string_view name) const {
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i].name == name) return static_cast<int>(i);
    return -1;
}

std::optional<std::string> ProcessSchema::resolve_input(std::string_view token) const {
    for (const auto& in : inputs) {
        if (in.name == token) return in.name;
        for (const auto& alias : in.aliases)
            if (alias == token) return in.name;
    }
    return std::nullopt;
}

int ProcessSchema::output_index(std::string_view name) const {
    for (std::size_t i = 0; i < outputs.size(); ++i)
        if (outputs[i].name == name) return static_cast<int>(i);
    return -1;
}

std::vector<std::string> ProcessSchema::input_names() const {
    std::vector<std::string> names;
    names.reserve(inputs.size());
    for (const auto& in : inputs) names.push_back(in.name);
    return names;
}

namespace {

std::vector<double> levels_from_json(const nlohmann::json& j, const std::string& input_name) {
    if (j.is_array()) return j.get<std::vector<double>>();
    if (j.is_object()) {
        const double lo = j.at("min").get<double>();
        const double hi = j.at("max").get<double>();
        const int count = j.at("count").get<int>();
        if (count < 1) throw ConfigError("input '" + input_name + "': level count must be >= 1");
        if (count == 1) return {lo};
        std::vector<double> levels(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
            levels[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
        return levels;
    }
    throw ConfigError("input '" + input_name + "': levels must be an array or {min,max,count}");
}

} // namespace

ProcessSchema schema_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("schema JSON: ") + e.what());
    }

    ProcessSchema schema;
    schema.process = j.value("process", "");
    schema.placeholder_ranges = j.value("placeholder_ranges", false);
    for (const auto& in : j.at("inputs")) {
        SchemaInput si;
        si.name = in.at("name").get<std::string>();
        si.unit = in.value("unit", "");
        if (in.contains("aliases")) si.aliases = in.at("aliases").get<std::vector<std::string>>();
        si.levels = levels_from_json(in.at("levels"), si.name);
        schema.inputs.push_back(std::move(si));
    }
    for (const auto& out : j.at("outputs")) {
        schema.outputs.push_back({out.at("name").get<std::string>(), out.value("unit", "")});
    }
    schema.validate();
    return schema;
}

ProcessSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return schema_from_json_text(buf.str());
}

std::string schema_to_json_text(const ProcessSchema& schema) {
    nlohmann::json j;
    j["process"] = schema.process;
    j["placeholder_ranges"] = schema.placeholder_ranges;
    j["inputs"] = nlohmann::json::array();
    for (const auto& in : schema.inputs) {
        nlohmann::json ji;
        ji["name"] = in.name;
        ji["unit"] = in.unit;
        if (!in.aliases.empty()) ji["aliases"] = in.aliases;
        ji["levels"] = in.levels;
        j["inputs"].push_back(std::move(ji));
    }
    j["outputs"] = nlohmann::json::array();
    for (const auto& out : schema.outputs)
        j["outputs"].push_back({{"name", out.name}, {"unit", out.unit}});
    return j.dump(2);
}

void save_schema(const ProcessSchema& schema, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write schema file: " + path);
    out << schema_to_json_text(schema) << "\n";
}

} // namespace eqdisc
