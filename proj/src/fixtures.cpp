#include "eqdisc/fixtures.hpp"

#include "eqdisc/errors.hpp"

namespace eqdisc {

namespace {

std::vector<double> unit_levels(int count) {
    std::vector<double> levels(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) levels[static_cast<std::size_t>(i)] = static_cast<double>(i + 1);
    return levels;
}

} // namespace

FixtureLibrary::FixtureLibrary() {
    fixtures_ = {
        // Laser micro-machining with flowing water; the energy input E is
        // also written P in the source equations, hence the alias.
        {"flipmm.width", "flipmm", "Width",
         "34.12 - 1.8203*WS - 0.0304*P - 0.0316*F - 1.8266*SS + 0.0822*WS*SS + 0.0241*P*F"
         " + 0.0178*P*SS - 0.0154*F*SS - 0.0496*SS^2 + 0.0033*F^2",
         false},
        {"flipmm.depth", "flipmm", "Depth",
         "-97.7573 + 25.4958*WS + 1.8038*P + 2.0115*F - 4.8792*SS - 0.0600*WS*P + 0.1250*WS*F"
         " - 0.2125*WS*SS - 0.0131*P*F - 0.0225*P*SS - 0.1469*F*SS - 1.6500*WS^2 - 0.0235*P^2"
         " - 0.0563*F^2 + 0.5656*SS^2",
         true},
        {"flipmm.mrr", "flipmm", "MRR",
         "-245.9066 + 45.5663*WS + 6.1778*P + 3.3894*F + 3.7635*SS - 0.3785*P*WS + 0.0446*P*F"
         " + 0.2496*WS*F - 2.6399*WS^2 - 0.0672*P^2 - 0.1750*F^2 - 0.2965*SS^2",
         false},
        {"flipmm.haz", "flipmm", "HAZ",
         "177.52 - 33.32*WS - 1.267*P - 1.282*F + 1.958*SS + 0.0844*WS*P - 0.0627*WS*F"
         " + 0.0865*P*F + 0.1272*SS^2 + 2.0533*WS^2 + 0.0113*P^2 + 0.0496*F^2",
         false},
        // The reference single-pass model for Depth without interaction
        // terms; kept for the conditional reference-number check.
        {"flipmm.depth.ctx_initial", "flipmm", "Depth",
         "0.3660*P - 21.9713/SS + 2.8261*WS + 1.1399*F - 32.6477", false},

        // Masked stereolithography
        {"msla.uts", "msla", "UTS",
         "57.41 - 271.6*L + 2.601*E - 0.1371*O + 637.0*L^2 - 0.1282*E^2 - 0.000468*O^2"
         " + 3.63*L*E + 0.616*L*O + 0.00959*E*O",
         true},
        {"msla.printing_time", "msla", "Printing_Time",
         "-436.00 - 12611.00*L + 182.00*E + 17.68*O + 93828.00*L^2 - 7.47*E^2 - 0.0856*O^2"
         " - 320.00*L*E - 95.60*L*O + 0.027*E*O",
         true},

        // Turn-assisted deep cold rolling
        {"tadcr.roughness", "tadcr", "Roughness",
         "1.7845 - 0.1307*B - 0.00079*R - 0.1023*I - 0.1515*N + 0.00006*B*R + 0.00691*B*N"
         " + 0.01104*B*I - 0.00002*R*N - 0.00005*R*I - 0.00052*I*N - 3.30e-9*N^2",
         false},
        {"tadcr.surface_hardness", "tadcr", "Surface_Hardness",
         "164.6055 + 7.8401*B + 0.0293*R - 7.8315*I + 15.8052*N + 0.0069*B*R - 1.1228*B*I"
         " + 0.3295*B*N - 0.0084*R*N + 1.3442*I*N",
         false},
    };
}

const FixtureLibrary& FixtureLibrary::instance() {
    static const FixtureLibrary library;
    return library;
}

const Fixture* FixtureLibrary::find(const std::string& name) const {
    for (const auto& f : fixtures_)
        if (f.name == name) return &f;
    return nullptr;
}

const Fixture& FixtureLibrary::get(const std::string& name) const {
    const Fixture* f = find(name);
    if (!f) throw ConfigError("unknown fixture '" + name + "'");
    return *f;
}

ProcessSchema FixtureLibrary::schema(const std::string& process) const {
    ProcessSchema s;
    s.process = process;
    s.placeholder_ranges = true; // levels below are stand-ins, not physical ranges
    if (process == "flipmm") {
        s.inputs = {
            {"WS", "m/s", {}, unit_levels(4)},
            {"E", "uJ", {"P"}, unit_levels(4)},
            {"F", "kHz", {}, unit_levels(4)},
            {"SS", "mm/s", {}, unit_levels(4)},
        };
        s.outputs = {{"Width", "um"}, {"Depth", "um"}, {"MRR", "um^3/s"}, {"HAZ", "um"}};
    } else if (process == "msla") {
        s.inputs = {
            {"L", "mm", {}, unit_levels(6)},
            {"E", "s", {}, unit_levels(6)},
            {"O", "deg", {}, unit_levels(6)},
        };
        s.outputs = {{"UTS", "MPa"}, {"Printing_Time", "min"}};
    } else if (process == "tadcr") {
        s.inputs = {
            {"B", "mm", {}, unit_levels(4)},
            {"R", "N", {}, unit_levels(4)},
            {"I", "um", {}, unit_levels(4)},
            {"N", "", {}, unit_levels(4)},
        };
        s.outputs = {{"Surface_Hardness", "HV"}, {"Roughness", "Ra"}};
    } else {
        throw ConfigError("unknown process '" + process + "'");
    }
    s.validate();
    return s;
}

Expression FixtureLibrary::expression_for(const Fixture& fixture) const {
    return expression_for(fixture, schema(fixture.process));
}

Expression FixtureLibrary::expression_for(const Fixture& fixture, const ProcessSchema& schema) const {
    return parse_expression(fixture.expression, schema);
}

} // namespace eqdisc
