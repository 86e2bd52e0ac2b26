#pragma once

#include <string>
#include <vector>

#include "eqdisc/expr.hpp"
#include "eqdisc/schema.hpp"

namespace eqdisc {

/// A named reference equation with numeric constants, in DSL text. The
/// exact_truth fixtures reproduce their targets to machine precision when the
/// same functional family is refitted; the rest are close approximations.
struct Fixture {
    std::string name;    // e.g. "flipmm.depth"
    std::string process; // flipmm | msla | tadcr
    std::string output;  // schema output the equation models
    std::string expression;
    bool exact_truth = false;
};

class FixtureLibrary {
public:
    static const FixtureLibrary& instance();

    const std::vector<Fixture>& all() const { return fixtures_; }
    const Fixture& get(const std::string& name) const; // throws ConfigError
    const Fixture* find(const std::string& name) const;

    /// Built-in schema with stand-in unit grid levels (4 levels {1..4} for
    /// the 4-input processes, 6 levels {1..6} for the 3-input one).
    ProcessSchema schema(const std::string& process) const;

    /// Parses the fixture under its process schema.
    Expression expression_for(const Fixture& fixture) const;
    Expression expression_for(const Fixture& fixture, const ProcessSchema& schema) const;

private:
    FixtureLibrary();
    std::vector<Fixture> fixtures_;
};

} // namespace eqdisc
