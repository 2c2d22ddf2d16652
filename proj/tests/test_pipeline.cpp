#include "test_support.hpp"

#include <cstdlib>
#include <sys/wait.h>

#include "tat/pipeline.hpp"

using namespace tat;

namespace {

// Small 2D run through every stage kind that uses randomness or files.
json small_config() {
    return json::parse(R"({
      "name": "small",
      "seed": 17,
      "stages": [
        {"stage": "phantom", "grid": {"dim": 2, "n": 40, "lo": -1, "hi": 1},
         "primitives": [{"type": "ball", "center": [0.1, -0.1], "radius": 0.35},
                        {"type": "gaussian", "center": [-0.2, 0.2], "width": 0.1, "amplitude": 0.5}],
         "edge_cells": 2, "output": "phantom.tatfld"},
        {"stage": "simulate", "input": "phantom.tatfld", "method": "wave", "surface": {"kind": "grid_boundary"},
         "duration_diameters": 1.5, "noise": 0.05, "output": "traces.tatsin"},
        {"stage": "reconstruct", "input": "traces.tatsin", "method": "time_reversal", "grid_from": "phantom.tatfld",
         "output": "tr.tatfld"},
        {"stage": "reconstruct", "input": "traces.tatsin", "method": "series", "grid_from": "phantom.tatfld",
         "coefficients_output": "coeffs.tatmod", "output": "series.tatfld"},
        {"stage": "focus", "input": "phantom.tatfld",
         "basis": {"kind": "n_shaped_shell", "centers": {"kind": "cube", "lo": [-1, -1], "hi": [1, 1], "nodes": [21, 21]},
                   "dr": 0.01, "half_width": 0.02},
         "noise": 0.2, "measurements_output": "m.tatmod2", "output": "focused.tatimp"},
        {"stage": "metrics", "estimate": "tr.tatfld", "truth": "phantom.tatfld", "output": "m_tr.json"},
        {"stage": "metrics", "estimate": "coeffs.tatmod", "truth": "phantom.tatfld", "output": "m_coeffs.json"},
        {"stage": "metrics", "estimate": "focused.tatimp", "truth": "phantom.tatfld", "output": "m_focus.json"}
      ]})");
}

PipelineOptions quiet_in(const std::filesystem::path& dir) {
    PipelineOptions o;
    o.output_dir = dir;
    o.quiet = true;
    return o;
}

Errc pipeline_error(const json& config, const std::filesystem::path& dir, std::string* message = nullptr) {
    try {
        run_pipeline(config, quiet_in(dir));
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.code();
    }
    FAIL("expected the pipeline to fail");
    return Errc::invalid_argument;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TAT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("FNV-1a matches reference vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("error categories map to exit codes") {
    CHECK(exit_code(Errc::invalid_argument) == ExitCode::schema);
    CHECK(exit_code(Errc::support_violation) == ExitCode::schema);
    CHECK(exit_code(Errc::numerical_failure) == ExitCode::numerical);
    CHECK(exit_code(Errc::non_finite) == ExitCode::numerical);
    CHECK(exit_code(Errc::io_failure) == ExitCode::io);
    CHECK(exit_code(Errc::truncated_payload) == ExitCode::io);
}

TEST_CASE("small pipeline runs and records provenance") {
    const auto dir = tat_test::scratch("pipe_small");
    const json cfg = small_config();
    const PipelineResult r = run_pipeline(cfg, quiet_in(dir));
    CHECK(r.seed == 17);
    CHECK(r.stage_seconds.size() == cfg.at("stages").size());
    const FieldFile tr = read_field_file(dir / "tr.tatfld");
    CHECK(tr.header.at("provenance").at("config_hash") == config_hash(cfg));
    CHECK(tr.header.at("provenance").at("version") == std::string(version));
    CHECK(tr.header.at("provenance").at("seed") == 17);
    CHECK(tr.header.at("provenance").at("stage") == "reconstruct");
    CHECK(read_sinogram_file(dir / "traces.tatsin").header.at("provenance").at("seed") == 17);
    const json m = json::parse(tat_test::slurp(dir / "m_tr.json"));
    CHECK(m.at("provenance").at("seed") == 17);
    CHECK(m.at("metrics").at("relative_l2").get<double>() < 0.3);
    CHECK(m.at("metrics").contains("linf"));
    CHECK(m.at("metrics").contains("psnr_db"));
    CHECK(json::parse(tat_test::slurp(dir / "m_coeffs.json")).at("kind") == "coefficients");
}

TEST_CASE("same seed gives bit-identical artifacts, another seed does not") {
    const auto a = tat_test::scratch("pipe_det_a"), b = tat_test::scratch("pipe_det_b"), c = tat_test::scratch("pipe_det_c");
    const json cfg = small_config();
    const PipelineResult ra = run_pipeline(cfg, quiet_in(a));
    run_pipeline(cfg, quiet_in(b));
    for (const auto& p : ra.artifacts) {
        INFO(p.filename().string());
        CHECK(tat_test::slurp(p) == tat_test::slurp(b / p.filename()));
    }
    PipelineOptions o = quiet_in(c);
    o.seed = 18;
    run_pipeline(cfg, o);
    CHECK(tat_test::slurp(a / "traces.tatsin") != tat_test::slurp(c / "traces.tatsin"));
}

TEST_CASE("thread count does not change the artifacts") {
    const auto a = tat_test::scratch("pipe_thr_a"), b = tat_test::scratch("pipe_thr_b");
    const json cfg = small_config();
    const std::size_t before = thread_count();
    set_thread_count(1);
    const PipelineResult ra = run_pipeline(cfg, quiet_in(a));
    set_thread_count(3);
    run_pipeline(cfg, quiet_in(b));
    set_thread_count(before);
    for (const auto& p : ra.artifacts) CHECK(tat_test::slurp(p) == tat_test::slurp(b / p.filename()));
}

TEST_CASE("schema violations name the field") {
    const auto dir = tat_test::scratch("pipe_schema");
    json cfg = small_config();
    std::string msg;

    cfg["stages"][2]["method"] = "fbx";
    CHECK(pipeline_error(cfg, dir, &msg) == Errc::invalid_argument);
    CHECK(msg.find("stages[2].method") != std::string::npos);
    CHECK(msg.find("reconstruct") != std::string::npos);

    cfg = small_config();
    cfg["stages"][0]["colour"] = "red";
    CHECK(pipeline_error(cfg, dir, &msg) == Errc::invalid_argument);
    CHECK(msg.find("stages[0].colour") != std::string::npos);

    cfg = small_config();
    cfg["stages"][1]["stage"] = "simulat";
    CHECK(pipeline_error(cfg, dir, &msg) == Errc::invalid_argument);

    cfg = small_config();
    cfg["stages"][0]["grid"]["n"] = "forty";
    CHECK(pipeline_error(cfg, dir, &msg) == Errc::invalid_argument);
    CHECK(msg.find("stages[0].grid.n") != std::string::npos);

    CHECK(pipeline_error(json{{"stages", json::array()}}, dir) == Errc::invalid_argument);
}

TEST_CASE("missing inputs are I/O failures naming the stage") {
    const auto dir = tat_test::scratch("pipe_io");
    json cfg = json::parse(R"({"stages": [{"stage": "metrics", "estimate": "nope.tatfld", "truth": "nope.tatfld",
                                           "output": "m.json"}]})");
    std::string msg;
    CHECK(pipeline_error(cfg, dir, &msg) == Errc::io_failure);
    CHECK(msg.find("metrics") != std::string::npos);
}

TEST_CASE("CLI exit codes") {
    const auto dir = tat_test::scratch("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("reconstruct --help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("pipeline " + (dir / "missing.json").string()) == 4);

    {
        std::ofstream(dir / "bad.json") << R"({"input": "x.tatsin", "method": "fbx", "grid": {"dim": 2, "n": 8, "lo": -1, "hi": 1}, "output": "y.tatfld"})";
    }
    CHECK(run_cli("reconstruct -q " + (dir / "bad.json").string()) == 2);

    {
        std::ofstream(dir / "ph.json") << R"({"grid": {"dim": 2, "n": 16, "lo": -1, "hi": 1}, "primitives": [{"type": "ball", "center": [0, 0], "radius": 0.3}], "output": "ph.tatfld"})";
    }
    CHECK(run_cli("phantom -q " + (dir / "ph.json").string()) == 0);
    CHECK(std::filesystem::exists(dir / "ph.tatfld"));
    // truncate the artifact: reading it is an I/O-class failure
    std::filesystem::resize_file(dir / "ph.tatfld", std::filesystem::file_size(dir / "ph.tatfld") - 8);
    {
        std::ofstream(dir / "m.json") << R"({"estimate": "ph.tatfld", "truth": "ph.tatfld", "output": "m.json.out"})";
    }
    CHECK(run_cli("metrics -q " + (dir / "m.json").string()) == 4);
    CHECK(run_cli("pipeline -q --threads 0 " + (dir / "ph.json").string()) == 2);
}
