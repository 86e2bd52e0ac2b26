#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eqdisc {

struct SchemaInput {
    std::string name;
    std::string unit;
    std::vector<std::string> aliases;
    std::vector<double> levels; // strictly ascending grid levels
};

struct SchemaOutput {
    std::string name;
    std::string unit;
};

/// Declares the input/output variables of one manufacturing process,
/// including the grid levels each input takes in synthetic datasets.
struct ProcessSchema {
    std::string process;
    std::vector<SchemaInput> inputs;
    std::vector<SchemaOutput> outputs;
    // Set when the schema ships with stand-in unit ranges instead of
    // physically measured ones; reports stamp this so numbers are not
    // mistaken for physical predictions.
    bool placeholder_ranges = false;

    void validate() const; // throws ConfigError on any violated invariant

    int input_index(std::string_view name) const;                      // exact name only, -1 if absent
    std::optional<std::string> resolve_input(std::string_view token) const; // name or alias -> canonical name
    int output_index(std::string_view name) const;                     // -1 if absent

    std::vector<std::string> input_names() const;
};

ProcessSchema schema_from_json_text(const std::string& text);
ProcessSchema load_schema(const std::string& path);
std::string schema_to_json_text(const ProcessSchema& schema);
void save_schema(const ProcessSchema& schema, const std::string& path);

} // namespace eqdisc
