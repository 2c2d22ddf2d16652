// tat: command-line front end. Each stage subcommand takes a JSON stage
// object and runs it as a one-stage pipeline; `pipeline` runs a full config.
#include <CLI11.hpp>

#include "tat/pipeline.hpp"

namespace {

struct Common {
    std::string config;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<double> beta;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool with_beta) {
    app->add_option("config", c.config, "JSON config file")->required();
    app->add_option("-o,--output-dir", c.output_dir, "Directory for relative output paths");
    app->add_option("--seed", c.seed, "RNG seed (overrides the config)");
    app->add_option("--threads", c.threads, "Worker threads (default: TAT_THREADS or all cores)");
    if (with_beta) app->add_option("--beta", c.beta, "Regularization weight (overrides the config)");
    app->add_flag("-q,--quiet", c.quiet, "No progress on stderr");
}

int run(const std::string& stage, const Common& c) {
    if (c.threads) {
        tat::require(*c.threads >= 1, tat::Errc::invalid_argument, "--threads must be >= 1");
        tat::set_thread_count(*c.threads);
    }
    tat::json config = tat::read_config(c.config);
    if (stage != "pipeline") {
        // a bare stage object; seed and output_dir may sit beside the stage fields
        tat::require(config.is_object(), tat::Errc::invalid_argument, "config must be a JSON object");
        tat::json doc;
        for (const char* key : {"seed", "output_dir", "name"})
            if (config.contains(key)) {
                doc[key] = config[key];
                config.erase(key);
            }
        if (config.contains("stage"))
            tat::require(config["stage"] == stage, tat::Errc::invalid_argument,
                         "field 'stage' is '" + config["stage"].get<std::string>() + "' but the subcommand is '" +
                             stage + "'");
        config["stage"] = stage;
        doc["stages"] = tat::json::array({config});
        config = std::move(doc);
    }
    tat::PipelineOptions opts;
    opts.output_dir = c.output_dir;
    if (opts.output_dir.empty() && !config.contains("output_dir")) {
        // default: next to the config file
        opts.output_dir = std::filesystem::path(c.config).parent_path();
        if (opts.output_dir.empty()) opts.output_dir = ".";
    }
    opts.seed = c.seed;
    opts.beta = c.beta;
    opts.quiet = c.quiet;
    const tat::PipelineResult r = tat::run_pipeline(config, opts);
    for (const auto& p : r.artifacts) std::cout << p.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thermoacoustic and acousto-electric tomography toolkit"};
    app.set_version_flag("--version", std::string(tat::version));
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"phantom", "Rasterize an analytic phantom"},
        {"simulate", "Forward data on an observation surface"},
        {"reconstruct", "Invert boundary data (fbp, series, time_reversal, neumann)"},
        {"focus", "Synthetic focusing of modulated measurements"},
        {"aet", "Acousto-electric conductivity reconstruction"},
        {"metrics", "Error metrics against a ground truth"},
        {"pipeline", "Run a multi-stage config"},
    };
    std::map<std::string, Common> opts;
    std::vector<std::pair<std::string, CLI::App*>> subs;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_common(sub, opts[name], name == "aet" || name == "pipeline");
        subs.emplace_back(name, sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(tat::ExitCode::schema);
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        try {
            return run(name, opts[name]);
        } catch (const tat::Error& e) {
            std::cerr << "tat " << name << ": " << e.what() << '\n';
            return static_cast<int>(tat::exit_code(e.code()));
        } catch (const std::filesystem::filesystem_error& e) {
            std::cerr << "tat " << name << ": io_failure: " << e.what() << '\n';
            return static_cast<int>(tat::ExitCode::io);
        } catch (const std::exception& e) {
            std::cerr << "tat " << name << ": " << e.what() << '\n';
            return static_cast<int>(tat::ExitCode::numerical);
        }
    }
    return 0;
}
