#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "eqdisc/checks.hpp"
#include "eqdisc/config.hpp"
#include "eqdisc/errors.hpp"
#include "eqdisc/fixtures.hpp"

using namespace eqdisc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "eqdisc_pipeline" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kDepthAnswer =
    "The source reports a fitted response-surface polynomial for channel depth.\n"
    "Depth = -97.7573 + 25.4958*WS + 1.8038*P + 2.0115*F - 4.8792*SS - 0.0600*WS*P"
    " + 0.1250*WS*F - 0.2125*WS*SS - 0.0131*P*F - 0.0225*P*SS - 0.1469*F*SS"
    " - 1.6500*WS^2 - 0.0235*P^2 - 0.0563*F^2 + 0.5656*SS^2\n"
    "Depth rises with energy and frequency and falls with scanning speed.\n";

void write_config(const fs::path& path, const fs::path& script, const fs::path& out_dir,
                  const std::string& scenario) {
    nlohmann::json j;
    j["schema"] = "builtin:flipmm";
    j["target_output"] = "Depth";
    j["data"] = {{"truth_fixture", "flipmm.depth"}};
    j["split"] = {{"fraction", 0.75}, {"train_size", 30}, {"seed", 5}};
    j["scenario"] = scenario;
    j["retrieval"] = {{"corpus_dir", default_asset_dir() + "/corpus"}, {"k", 4}};
    j["backends"] = {{"embeddings", {{"kind", "local"}}},
                     {"chat", {{"kind", "scripted"}, {"script_path", script.string()}}}};
    j["budgets"] = {{"initial_n", 5}, {"per_iteration_n", 3}, {"max_iterations", 2}};
    j["seed"] = 9;
    j["output_dir"] = out_dir.string();
    std::ofstream(path) << j.dump(2);
}

void write_eqctx_script(const fs::path& path) {
    std::ofstream out(path);
    out << kDepthAnswer << "\n---\n";
    out << "a0 + a1*WS + a2*E\n---\n";
    out << "a0 + a1*F + a2*SS\n---\n";
    out << "a0*sqrt(WS) + a1*E\n---\n";
    out << "a0 + a1*WS*E\n---\n";
    out << "a0 + a1*ln(F)\n";
}

} // namespace

TEST_CASE("discover pipeline: scripted eqctx run recovers the depth family end to end") {
    const fs::path dir = scratch_dir("eqctx");
    write_eqctx_script(dir / "script.txt");
    write_config(dir / "config.json", dir / "script.txt", dir / "out", "eqctx_initial");

    const RunConfig cfg = RunConfig::load((dir / "config.json").string());
    const DiscoverArtifacts artifacts = run_discover_pipeline(cfg);

    CHECK(artifacts.used_rag);
    CHECK(artifacts.context.hint == "eqctx");
    CHECK(artifacts.result.state.stop_reason == "success");
    REQUIRE(artifacts.result.best.test.has_value());
    CHECK(artifacts.result.best.test->r2 >= 0.999);
    CHECK(artifacts.result.best.test->mse <= 1e-6);

    for (const char* file : {"run_report.json", "metrics.csv", "best_model.json", "dataset.csv",
                             "split.json", "retrieval.json", "index.jsonl"})
        CHECK(fs::exists(dir / "out" / file));

    const auto report = nlohmann::json::parse(slurp(dir / "out/run_report.json"));
    CHECK(report.at("scenario") == "eqctx_initial");
    CHECK(report.at("placeholder_ranges") == true);
    CHECK(report.at("best").at("provenance").at("backend_id") == "retrieved-equation");
}

TEST_CASE("discover pipeline: identical config and seed give identical reports") {
    const fs::path dir = scratch_dir("determinism");
    write_eqctx_script(dir / "script.txt");

    write_config(dir / "config1.json", dir / "script.txt", dir / "out1", "eqctx_initial");
    write_config(dir / "config2.json", dir / "script.txt", dir / "out2", "eqctx_initial");
    run_discover_pipeline(RunConfig::load((dir / "config1.json").string()));
    run_discover_pipeline(RunConfig::load((dir / "config2.json").string()));
    CHECK(slurp(dir / "out1/run_report.json") == slurp(dir / "out2/run_report.json"));
    CHECK(slurp(dir / "out1/metrics.csv") == slurp(dir / "out2/metrics.csv"));
}

TEST_CASE("discover pipeline: norag prompts carry no retrieved text") {
    const fs::path dir = scratch_dir("norag");
    {
        std::ofstream out(dir / "script.txt");
        for (int i = 0; i < 11; ++i) {
            if (i) out << "---\n";
            out << "a0 + a" << 1 + i % 3 << "*WS^" << 1 + i % 2 << " + a" << 2 + i % 2 << "*E\n";
        }
    }
    write_config(dir / "config.json", dir / "script.txt", dir / "out", "norag_refined");

    const DiscoverArtifacts artifacts =
        run_discover_pipeline(RunConfig::load((dir / "config.json").string()));
    CHECK_FALSE(artifacts.used_rag);
    const auto report = nlohmann::json::parse(slurp(dir / "out/run_report.json"));
    for (const auto& prompt : report.at("prompts")) {
        const std::string text = prompt.at("text").get<std::string>();
        CHECK(text.find("retrieved information") == std::string::npos);
        CHECK(text.find("Context passages:") == std::string::npos);
    }
    CHECK_FALSE(fs::exists(dir / "out/retrieval.json"));
}

TEST_CASE("discover pipeline: a scripted run replays from its own log") {
    const fs::path dir = scratch_dir("replay");
    write_eqctx_script(dir / "script.txt");
    write_config(dir / "config.json", dir / "script.txt", dir / "out", "eqctx_initial");
    run_discover_pipeline(RunConfig::load((dir / "config.json").string()));

    // rebuild the script from the logs: retrieval answers, then every
    // generation response in order
    const auto retrieval = nlohmann::json::parse(slurp(dir / "out/retrieval.json"));
    const auto report = nlohmann::json::parse(slurp(dir / "out/run_report.json"));
    std::vector<std::string> blocks;
    for (const auto& a : retrieval.at("raw_answers")) blocks.push_back(a.get<std::string>());
    for (const auto& h : report.at("history")) {
        if (h.at("generation_index").get<int>() == 0) continue; // the seeded equation, not a call
        blocks.push_back(h.at("raw_text").get<std::string>());
    }
    {
        std::ofstream out(dir / "replayed_script.txt");
        out << join_script_blocks(blocks);
    }
    write_config(dir / "config2.json", dir / "replayed_script.txt", dir / "out2", "eqctx_initial");
    run_discover_pipeline(RunConfig::load((dir / "config2.json").string()));
    CHECK(slurp(dir / "out/run_report.json") == slurp(dir / "out2/run_report.json"));
}

namespace {

// minimal structural validator covering the subset of JSON Schema the
// published report schema uses: type / required / properties / items
void validate_against(const nlohmann::json& schema, const nlohmann::json& value,
                      const std::string& at) {
    if (schema.contains("type")) {
        const std::string type = schema.at("type").get<std::string>();
        bool ok = (type == "object" && value.is_object()) || (type == "array" && value.is_array()) ||
                  (type == "string" && value.is_string()) ||
                  (type == "integer" && value.is_number_integer()) ||
                  (type == "number" && value.is_number()) ||
                  (type == "boolean" && value.is_boolean());
        if (type == "integer" && value.is_number_unsigned()) ok = true;
        CAPTURE(at);
        CAPTURE(type);
        REQUIRE(ok);
    }
    if (schema.contains("required")) {
        for (const auto& key : schema.at("required")) {
            CAPTURE(at);
            CAPTURE(key.get<std::string>());
            REQUIRE(value.contains(key.get<std::string>()));
        }
    }
    if (schema.contains("properties") && value.is_object()) {
        for (const auto& [key, sub] : schema.at("properties").items())
            if (value.contains(key)) validate_against(sub, value.at(key), at + "." + key);
    }
    if (schema.contains("items") && value.is_array()) {
        std::size_t i = 0;
        for (const auto& item : value)
            validate_against(schema.at("items"), item, at + "[" + std::to_string(i++) + "]");
    }
}

} // namespace

TEST_CASE("run reports validate against the published schema") {
    const fs::path dir = scratch_dir("schema");
    write_eqctx_script(dir / "script.txt");
    write_config(dir / "config.json", dir / "script.txt", dir / "out", "eqctx_initial");
    run_discover_pipeline(RunConfig::load((dir / "config.json").string()));

    const fs::path schema_path =
        fs::path(default_asset_dir()).parent_path() / "docs" / "run_report.schema.json";
    const auto schema = nlohmann::json::parse(slurp(schema_path));
    const auto report = nlohmann::json::parse(slurp(dir / "out/run_report.json"));
    validate_against(schema, report, "$");
}

TEST_CASE("reference-number check runs against a supplied ranges file") {
    const fs::path dir = scratch_dir("ranges");
    // stand-in levels; the check must execute and report actual numbers, and
    // it only passes for ranges matching the source experiments
    std::ofstream(dir / "ranges.json")
        << R"({"inputs": {"WS": [1,2,3,4], "E": [20,40,60,80], "F": [10,20,30,40], "SS": [1,2,3,4]}})";

    CheckOptions options;
    options.ranges_path = (dir / "ranges.json").string();
    const CheckResult result = run_check("reference-depth-mse", options);
    CHECK_FALSE(result.skipped);
    CHECK(result.detail.find("mse=") != std::string::npos);

    const CheckResult skipped = run_check("reference-depth-mse", {});
    CHECK(skipped.skipped);
    CHECK(skipped.detail.find("SKIPPED(ranges-unavailable)") != std::string::npos);
}

TEST_CASE("extraction rules file mirrors the built-in table") {
    const auto from_file = load_substitution_rules(default_asset_dir() + "/extraction_rules.json");
    const auto builtin = default_substitution_rules();
    REQUIRE(from_file.size() == builtin.size());
    for (std::size_t i = 0; i < builtin.size(); ++i) {
        CHECK(from_file[i].from == builtin[i].from);
        CHECK(from_file[i].to == builtin[i].to);
        CHECK(from_file[i].word_boundary == builtin[i].word_boundary);
    }
}

TEST_CASE("discover pipeline: end to end over an http chat backend") {
    httplib::Server server;
    std::atomic<int> calls{0};
    const char* candidates[] = {"a0 + a1*WS + a2*E + a3*F + a4*SS", "a0 + a1*WS*E",
                                "a0*sqrt(WS) + a1*F"};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const double temperature = body.at("temperature").get<double>();
        CHECK(temperature >= 0.3);
        CHECK(temperature <= 0.8);
        const int i = calls++ % 3;
        nlohmann::json out;
        out["choices"] = {{{"message", {{"content", candidates[i]}}}}};
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const fs::path dir = scratch_dir("http_chat");
    nlohmann::json j;
    j["schema"] = "builtin:flipmm";
    j["target_output"] = "Depth";
    j["data"] = {{"truth_fixture", "flipmm.depth"}};
    j["split"] = {{"fraction", 0.75}, {"train_size", 30}, {"seed", 5}};
    j["scenario"] = "norag_initial";
    j["backends"] = {{"chat",
                      {{"kind", "http"},
                       {"base_url", "http://127.0.0.1:" + std::to_string(port)},
                       {"model", "test-model"}}}};
    j["budgets"] = {{"initial_n", 6}, {"max_iterations", 0}};
    j["seed"] = 3;
    j["output_dir"] = (dir / "out").string();
    std::ofstream(dir / "config.json") << j.dump(2);

    const DiscoverArtifacts artifacts =
        run_discover_pipeline(RunConfig::load((dir / "config.json").string()));
    server.stop();
    thread.join();

    CHECK(calls == 6);
    CHECK(artifacts.result.state.generation_calls == 6);
    REQUIRE(artifacts.result.best.test.has_value());
    CHECK(artifacts.result.best.validation.ok());
    CHECK(artifacts.result.best.provenance.backend_id == "http-chat:test-model");
    CHECK(fs::exists(dir / "out/run_report.json"));
}

TEST_CASE("config: data source must be exactly one of csv/fixture") {
    const fs::path dir = scratch_dir("config_errors");
    nlohmann::json j;
    j["schema"] = "builtin:flipmm";
    j["target_output"] = "Depth";
    j["scenario"] = "norag_initial";
    j["backends"] = {{"chat", {{"kind", "scripted"}, {"script_path", "s.txt"}}}};

    j["data"] = {{"truth_fixture", "flipmm.depth"}, {"dataset_csv", "d.csv"}};
    std::ofstream(dir / "both.json") << j.dump();
    CHECK_THROWS_AS(RunConfig::load((dir / "both.json").string()), ConfigError);

    j["data"] = nlohmann::json::object();
    std::ofstream(dir / "neither.json") << j.dump();
    CHECK_THROWS_AS(RunConfig::load((dir / "neither.json").string()), ConfigError);

    j["data"] = {{"truth_fixture", "flipmm.depth"}};
    j["scenario"] = "not_a_scenario";
    std::ofstream(dir / "scenario.json") << j.dump();
    CHECK_THROWS_AS(RunConfig::load((dir / "scenario.json").string()), ConfigError);

    // rag scenario without any retrieval source
    j["scenario"] = "ctx_initial";
    std::ofstream(dir / "norag_source.json") << j.dump();
    CHECK_THROWS_AS(RunConfig::load((dir / "norag_source.json").string()), ConfigError);
}

TEST_CASE("asset schemas mirror the built-in ones") {
    const auto& lib = FixtureLibrary::instance();
    for (const std::string process : {"flipmm", "msla", "tadcr"}) {
        const ProcessSchema from_file =
            load_schema(default_asset_dir() + "/schemas/" + process + ".json");
        const ProcessSchema builtin = lib.schema(process);
        CHECK(from_file.process == builtin.process);
        REQUIRE(from_file.inputs.size() == builtin.inputs.size());
        for (std::size_t i = 0; i < builtin.inputs.size(); ++i) {
            CHECK(from_file.inputs[i].name == builtin.inputs[i].name);
            CHECK(from_file.inputs[i].levels == builtin.inputs[i].levels);
            CHECK(from_file.inputs[i].aliases == builtin.inputs[i].aliases);
        }
        REQUIRE(from_file.outputs.size() == builtin.outputs.size());
        for (std::size_t i = 0; i < builtin.outputs.size(); ++i)
            CHECK(from_file.outputs[i].name == builtin.outputs[i].name);
    }
}

TEST_CASE("fixture library: every fixture parses and evaluates finitely on its grid") {
    const auto& lib = FixtureLibrary::instance();
    CHECK(lib.all().size() == 9);
    std::size_t exact = 0;
    for (const auto& fixture : lib.all()) {
        const ProcessSchema schema = lib.schema(fixture.process);
        const Expression expr = lib.expression_for(fixture, schema);
        CHECK(expr.coefficient_count() == 0);
        const Dataset ds = synthesize(schema, fixture.output, expr, {});
        for (double v : ds.targets[0]) CHECK(std::isfinite(v));
        if (fixture.exact_truth) ++exact;
    }
    CHECK(exact == 3); // depth, uts, printing time
    CHECK(lib.get("flipmm.depth").exact_truth);
    CHECK(lib.get("msla.uts").exact_truth);
    CHECK(lib.get("msla.printing_time").exact_truth);
    CHECK_FALSE(lib.get("flipmm.haz").exact_truth);
}
