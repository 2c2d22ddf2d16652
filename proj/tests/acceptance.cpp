// Runs the shipped configs and prints one PASS/FAIL line per acceptance
// criterion. Exit status is the number of failed criteria (capped at 100).
//
//   acceptance <config_dir> <work_dir> [--skip-rerun]
#include <cstdio>
#include <iostream>

#include "tat/pipeline.hpp"

using namespace tat;
namespace fs = std::filesystem;

namespace {

struct Run {
    PipelineResult result;
    fs::path dir;
    std::string error;
    bool ok() const { return error.empty(); }
};

struct Suite {
    fs::path configs, work;
    std::map<std::string, Run> runs;
    int failed = 0;

    const Run& run(const std::string& name) {
        auto it = runs.find(name);
        if (it != runs.end()) return it->second;
        Run r;
        r.dir = work / "a" / name;
        fs::remove_all(r.dir);
        std::cerr << "running " << name << " ...\n";
        try {
            PipelineOptions o;
            o.output_dir = r.dir;
            o.quiet = true;
            r.result = run_pipeline(read_config(configs / (name + ".json")), o);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        return runs.emplace(name, std::move(r)).first->second;
    }

    json read(const std::string& name, const std::string& file) {
        std::ifstream in(run(name).dir / file);
        return json::parse(in);
    }

    double rel(const std::string& name, const std::string& file) {
        return read(name, file).at("metrics").at("relative_l2").get<double>();
    }

    /// Wall time of the stages whose output matches `output`.
    double seconds(const std::string& name, const std::string& stage_output) {
        const json cfg = read_config(configs / (name + ".json"));
        const auto& st = cfg.at("stages");
        double t = 0.0;
        for (std::size_t i = 0; i < st.size(); ++i)
            if (st[i].value("output", "") == stage_output) t += run(name).result.stage_seconds.at(i);
        return t;
    }

    void report(bool pass, const std::string& label, const std::string& detail) {
        if (!pass) ++failed;
        std::printf("%s  %-34s %s\n", pass ? "PASS" : "FAIL", label.c_str(), detail.c_str());
        std::fflush(stdout);
    }

    /// Runs `body` only if every named config ran; otherwise reports the error.
    template <class Fn>
    void criterion(const std::string& label, std::initializer_list<std::string> names, Fn&& body) {
        for (const auto& n : names) {
            const Run& r = run(n);
            if (!r.ok()) {
                report(false, label, n + " failed: " + r.error);
                return;
            }
        }
        try {
            body();
        } catch (const std::exception& e) {
            report(false, label, std::string("evaluation error: ") + e.what());
        }
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool non_increasing(const json& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k].get<double>() > v[k - 1].get<double>()) return false;
    return true;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance <config_dir> <work_dir> [--skip-rerun]\n";
        return 2;
    }
    Suite s{argv[1], argv[2], {}, 0};
    const bool rerun = !(argc > 3 && std::string(argv[3]) == "--skip-rerun");
    fs::create_directories(s.work);

    s.criterion("forward cross-validation", {"forward-crosscheck"}, [&] {
        const double e = s.rel("forward-crosscheck", "metrics.json");
        const double t = s.seconds("forward-crosscheck", "traces_wave.tatsin");
        s.report(e <= 0.02 && t <= 600.0, "forward cross-validation",
                 fmt("relative RMS %.4f (<= 0.02), solver %.1f s (<= 600 s)", e, t));
    });

    s.criterion("FBP exactness", {"fbp-variants"}, [&] {
        const std::vector<std::string> vs{"laplacian_outside", "second_radial", "nested_radial"};
        double worst = 0.0, pair = 0.0, slowest = 0.0;
        std::string detail;
        for (const auto& v : vs) {
            const double e = s.rel("fbp-variants", "metrics_" + v + ".json");
            worst = std::max(worst, e);
            slowest = std::max(slowest, s.seconds("fbp-variants", "fbp_" + v + ".tatfld"));
            detail += fmt("%s %.4f, ", v.c_str(), e);
        }
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j)
                pair = std::max(pair, s.rel("fbp-variants", "pair_" + vs[i] + "_" + vs[j] + ".json"));
        s.report(worst <= 0.05 && pair <= 0.02 && slowest <= 300.0, "FBP exactness",
                 detail + fmt("(<= 0.05); pairwise %.4f (<= 0.02); slowest %.1f s (<= 300 s)", pair, slowest));
    });

    s.criterion("series method", {"series-2d", "series-3d"}, [&] {
        bool pass = true;
        std::string detail;
        for (const std::string dim : {"2d", "3d"}) {
            const std::string n = "series-" + dim;
            double coeff = 0.0, field = 0.0, pair = 0.0;
            for (const std::string f : {"A", "B", "C"}) {
                coeff = std::max(coeff, s.rel(n, "coeff_metrics_" + f + ".json"));
                field = std::max(field, s.rel(n, "field_metrics_" + f + ".json"));
            }
            for (const std::string p : {"AB", "AC", "BC"}) pair = std::max(pair, s.rel(n, "pair_" + p + ".json"));
            pass = pass && coeff <= 0.03 && field <= 0.05 && pair <= 0.02;
            detail += fmt("%s: coefficients %.4f (<= 0.03), field %.4f (<= 0.05), formulas %.4f (<= 0.02); ",
                          dim.c_str(), coeff, field, pair);
        }
        s.report(pass, "series method", detail);
    });

    s.criterion("time reversal", {"tr-3d", "tr-2d-durations", "neumann-variable-speed"}, [&] {
        const double e3 = s.rel("tr-3d", "metrics.json");
        const double t2 = s.rel("tr-2d-durations", "metrics_T2.json"), t4 = s.rel("tr-2d-durations", "metrics_T4.json"),
                     t8 = s.rel("tr-2d-durations", "metrics_T8.json");
        const double plain = s.rel("neumann-variable-speed", "metrics_tr.json");
        const double refined = s.rel("neumann-variable-speed", "metrics_neumann.json");
        const double gain = 1.0 - refined / plain;
        s.report(e3 <= 0.03 && t2 > t4 && t4 > t8 && gain >= 0.30, "time reversal",
                 fmt("3D %.4f (<= 0.03); 2D T=2,4,8 diam: %.4f > %.4f > %.4f; Neumann %.4f vs plain %.4f, "
                     "improvement %.0f%% (>= 30%%)",
                     e3, t2, t4, t8, refined, plain, 100.0 * gain));
    });

    s.criterion("energy and adjoint checks", {"scheme-checks"}, [&] {
        const json c = s.read("scheme-checks", "checks.json");
        const double drift = c.at("energy_drift"), rev = c.at("reversibility_error"),
                     adj = c.at("adjoint_max_relative_error");
        s.report(drift <= 1e-3 && rev <= 5e-3 && adj <= 1e-5, "energy and adjoint checks",
                 fmt("energy drift %.2e per 1000 steps (<= 1e-3), reversibility %.2e (<= 5e-3), adjoint vs FD %.2e "
                     "(<= 1e-5)",
                     drift, rev, adj));
    });

    s.criterion("synthetic focusing", {"focusing-noise"}, [&] {
        const double d0 = s.rel("focusing-noise", "metrics_delta_shell_noise0.json");
        const double d50 = s.rel("focusing-noise", "metrics_delta_shell_noise50.json");
        const double n0 = s.rel("focusing-noise", "metrics_n_shaped_shell_noise0.json");
        const double n50 = s.rel("focusing-noise", "metrics_n_shaped_shell_noise50.json");
        s.report(d0 <= 0.05 && n50 <= 3.0 * n0 && n50 <= d50, "synthetic focusing",
                 fmt("delta noiseless %.4f (<= 0.05); N-shaped at 50%% noise %.4f (<= 3 x %.4f = %.4f, <= delta %.4f)",
                     d0, n50, n0, 3.0 * n0, d50));
    });

    s.criterion("AET end-to-end", {"aet-bump"}, [&] {
        const double e0 = s.rel("aet-bump", "metrics_noiseless.json");
        const double e10 = s.rel("aet-bump", "metrics_noise10.json");
        const bool mono = non_increasing(s.read("aet-bump", "report_noiseless.json").at("objective")) &&
                          non_increasing(s.read("aet-bump", "report_noise10.json").at("objective"));
        const double t = std::max(s.seconds("aet-bump", "sigma_noiseless.tatfld"),
                                  s.seconds("aet-bump", "sigma_noise10.tatfld"));
        s.report(e0 <= 0.05 && e10 <= 0.15 && mono && t <= 600.0, "AET end-to-end",
                 fmt("noiseless %.4f (<= 0.05), 10%% noise %.4f (<= 0.15), objective %s, %.1f s (<= 600 s)", e0, e10,
                     mono ? "non-increasing" : "INCREASED", t));
    });

    s.criterion("fbp-ball pipeline", {"fbp-ball"}, [&] {
        const double e = s.rel("fbp-ball", "metrics.json");
        s.report(e <= 0.05, "fbp-ball pipeline", fmt("tomogram relative L2 %.4f (<= 0.05)", e));
    });

    // determinism: every shipped config again into a second tree, byte compare
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(s.configs))
        if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
    std::sort(names.begin(), names.end());
    if (!rerun) {
        s.report(false, "determinism", "skipped (--skip-rerun)");
    } else {
        std::size_t compared = 0;
        std::vector<std::string> bad;
        for (const auto& n : names) {
            const Run& a = s.run(n);
            if (!a.ok()) {
                bad.push_back(n + " (run failed)");
                continue;
            }
            const fs::path dir = s.work / "b" / n;
            fs::remove_all(dir);
            std::cerr << "rerunning " << n << " ...\n";
            PipelineOptions o;
            o.output_dir = dir;
            o.quiet = true;
            try {
                run_pipeline(read_config(s.configs / (n + ".json")), o);
            } catch (const std::exception& e) {
                bad.push_back(n + " (rerun failed: " + e.what() + ")");
                continue;
            }
            for (const auto& p : a.result.artifacts) {
                ++compared;
                if (slurp(p) != slurp(dir / fs::relative(p, a.dir))) bad.push_back(n + "/" + p.filename().string());
            }
        }
        std::string detail = fmt("%zu configs, %zu artifacts byte-identical", names.size(), compared - bad.size());
        for (const auto& b : bad) detail += "; differs: " + b;
        s.report(bad.empty() && compared > 0, "determinism", detail);
    }

    std::printf("%d failed\n", s.failed);
    return std::min(s.failed, 100);
}
