// Config-driven pipelines: a JSON document lists stages (phantom, simulate,
// reconstruct, focus, aet, metrics, diagnostics) that read and write artifact
// files in one output directory. Every artifact carries a provenance block
// (config hash, toolkit version, seed, stage).
#pragma once

#include <chrono>
#include <fstream>
#include <sstream>

#include "tat/aet.hpp"
#include "tat/config.hpp"
#include "tat/fbp.hpp"
#include "tat/focusing.hpp"
#include "tat/metrics.hpp"
#include "tat/series.hpp"
#include "tat/spherical_mean.hpp"
#include "tat/time_reversal.hpp"
#include "tat/wave.hpp"

namespace tat {

/// CLI exit codes.
enum class ExitCode : int { ok = 0, schema = 2, numerical = 3, io = 4 };

inline ExitCode exit_code(Errc e) {
    switch (e) {
    case Errc::numerical_failure:
    case Errc::non_finite:
    case Errc::cfl_violation:
    case Errc::invariant_violation: return ExitCode::numerical;
    case Errc::io_failure:
    case Errc::malformed_header:
    case Errc::truncated_payload:
    case Errc::excess_payload: return ExitCode::io;
    default: return ExitCode::schema;
    }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical (key-sorted, compact) serialization.
inline std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

/// Per-stage seed derived from the run seed (splitmix64 of seed + index).
inline std::uint64_t stage_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline const std::vector<std::string_view>& stage_names() {
    static const std::vector<std::string_view> names{"phantom", "simulate", "reconstruct", "focus",
                                                     "aet",     "metrics",  "diagnostics"};
    return names;
}

struct PipelineOptions {
    /// Overrides the config's output_dir when non-empty.
    std::filesystem::path output_dir;
    std::optional<std::uint64_t> seed;
    /// Overrides "beta" in aet stages.
    std::optional<double> beta;
    bool quiet = false;
};

struct PipelineResult {
    std::filesystem::path output_dir;
    std::vector<std::filesystem::path> artifacts;
    std::uint64_t seed = 0;
    std::string config_hash;
    /// Wall time per stage; kept out of the artifacts so they stay reproducible.
    std::vector<double> stage_seconds;
};

namespace detail {

inline std::string file_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::io_failure, "cannot open '" + path.string() + "'");
    char buf[8] = {};
    in.read(buf, 8);
    require(in.gcount() == 8, Errc::malformed_header, "'" + path.string() + "' is too short for a magic string");
    return std::string(buf, 8);
}

/// Fields and interior maps both load as fields.
inline FieldFile load_field(const std::filesystem::path& path) {
    const std::string magic = file_magic(path);
    if (magic == interior_map_magic) return read_field_file(path, interior_map_magic);
    return read_field_file(path, field_magic);
}

inline std::string json_text(const json& j) { return j.dump(2) + "\n"; }

inline void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Errc::io_failure, "cannot open '" + path.string() + "' for writing");
    out << json_text(j);
    require(out.good(), Errc::io_failure, "write to '" + path.string() + "' failed");
}

class StageContext {
public:
    StageContext(const config::Node& node, std::size_t index, std::string name, std::filesystem::path dir,
                 json provenance, std::uint64_t seed, const PipelineOptions& opts, PipelineResult& result)
        : node(node), index(index), name(std::move(name)), seed(seed), opts(opts), dir_(std::move(dir)),
          provenance_(std::move(provenance)), result_(result) {
        provenance_["stage"] = this->name;
        provenance_["stage_index"] = index;
        provenance_["stage_seed"] = seed;
    }

    const config::Node& node;
    std::size_t index;
    std::string name;
    std::uint64_t seed;
    const PipelineOptions& opts;

    std::filesystem::path path(const std::string& key) const {
        const std::filesystem::path p = node.get<std::string>(key);
        return p.is_absolute() ? p : dir_ / p;
    }

    std::filesystem::path input(const std::string& key) const {
        const auto p = path(key);
        require(std::filesystem::exists(p), Errc::io_failure,
                "field '" + node.field(key) + "' refers to missing file '" + p.string() + "'");
        return p;
    }

    json provenance() const { return {{"provenance", provenance_}}; }
    const json& provenance_block() const { return provenance_; }

    void produced(const std::filesystem::path& p) { result_.artifacts.push_back(p); }

    void log(const std::string& msg) const {
        if (!opts.quiet) std::cerr << "[" << index << ":" << name << "] " << msg << '\n';
    }

private:
    std::filesystem::path dir_;
    json provenance_;
    PipelineResult& result_;
};

/// The field of `file` on `target`: the stored samples when the grids
/// match, otherwise the phantom re-rasterized from the descriptor in its
/// header with the same physical edge ramp.
inline ScalarField field_on_grid(const FieldFile& file, const GridSpec& target) {
    if (file.field.grid() == target) return file.field;
    require(file.header.contains("phantom"), Errc::invalid_argument,
            "field '" + file.field.name() + "' is on a different grid and carries no phantom descriptor to resample");
    const json& pj = file.header.at("phantom");
    const config::Node pn(pj, "phantom");
    const PhantomDescriptor desc = config::phantom(pn, target.dim);
    const double ramp = file.header.value("ramp", 0.0);
    RasterOptions ro;
    ro.smooth_edges = ramp > 0.0;
    ro.edge_cells = ramp > 0.0 ? ramp / target.max_spacing() : 1.0;
    return rasterize_phantom(desc, target, ro, file.field.name());
}

inline PhantomDescriptor descriptor_of(const FieldFile& file, const std::string& what) {
    require(file.header.contains("phantom"), Errc::invalid_argument,
            what + " needs a phantom file (with its analytic descriptor)");
    return config::phantom(config::Node(file.header.at("phantom"), "phantom"), file.field.grid().dim);
}

/// Speed from "speed" (constant, default 1) or "speed_field" (file).
inline ScalarField speed_on(const StageContext& ctx, const GridSpec& grid) {
    if (ctx.node.has("speed_field")) {
        require(!ctx.node.has("speed"), Errc::invalid_argument,
                "fields '" + ctx.node.field("speed") + "' and '" + ctx.node.field("speed_field") + "' are exclusive");
        return field_on_grid(load_field(ctx.input("speed_field")), grid).renamed("c");
    }
    return ScalarField::constant(grid, ctx.node.positive("speed", 1.0), "c");
}

inline GridSpec stage_grid(const StageContext& ctx, const std::string& key = "grid") {
    if (ctx.node.has(key)) return config::grid(ctx.node.child(key));
    const std::string from = key + "_from";
    require(ctx.node.has(from), Errc::invalid_argument,
            "stage needs '" + ctx.node.field(key) + "' or '" + ctx.node.field(from) + "'");
    return load_field(ctx.input(from)).field.grid();
}

inline DataKind kind_field(const config::Node& n, const std::string& key, DataKind fallback) {
    return data_kind_from_string(
        n.choice(key, {"pressure", "spherical_integral", "spherical_mean"}, std::string(to_string(fallback))));
}

inline Sinogram convert_to(const Sinogram& integrals, DataKind kind, double c) {
    if (kind == DataKind::spherical_integral) return integrals;
    const Sinogram means = convert_spherical_kind(integrals, DataKind::spherical_mean);
    if (kind == DataKind::spherical_mean) return means;
    return pressure_from_means(means, c);
}

// ---------------------------------------------------------------------------
// Stages

inline void stage_phantom(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "grid", "background", "primitives", "edge_cells", "smooth_edges", "output", "preview"});
    const GridSpec grid = config::grid(n.child("grid"));
    const PhantomDescriptor desc = config::phantom(n, grid.dim);
    RasterOptions ro;
    ro.smooth_edges = n.get<bool>("smooth_edges", true);
    ro.edge_cells = n.positive("edge_cells", 1.0);
    const ScalarField f = rasterize_phantom(desc, grid, ro, "phantom");
    json extra = ctx.provenance();
    extra["phantom"] = config::phantom_to_json(desc, grid.dim);
    extra["ramp"] = ramp_width(grid, ro);
    const auto out = ctx.path("output");
    write_field(f, out, extra);
    ctx.produced(out);
    if (n.has("preview")) {
        const auto pgm = ctx.path("preview");
        write_pgm(f, pgm);
        ctx.produced(pgm);
    }
    ctx.log("wrote " + out.filename().string());
}

inline void stage_simulate(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "input", "method", "surface", "speed", "speed_field", "duration", "duration_diameters", "dt",
            "refine", "record_stride", "sponge_cells", "sponge_strength", "padding_cells", "kind", "radii",
            "time_axis_from", "noise", "output"});
    const std::string method = n.choice("method", {"wave", "closed_form", "quadrature"});
    const FieldFile input = load_field(ctx.input("input"));
    const GridSpec& grid = input.field.grid();
    const ObservationSurface surface = config::surface(n.child("surface"), grid);
    const DataKind kind = kind_field(n, "kind", DataKind::pressure);
    const ScalarField c_grid = speed_on(ctx, grid);
    const double c_max = c_grid.max();
    double c_min = c_max;
    for (double v : c_grid.values()) c_min = std::min(c_min, v);

    double T = 0.0;
    if (n.has("duration")) {
        T = n.positive("duration");
    } else {
        T = n.positive("duration_diameters", 1.5) * surface.diameter() / c_min;
    }

    Sinogram out;
    if (method == "wave") {
        const std::size_t refine = n.get<std::size_t>("refine", 1);
        require(refine >= 1, Errc::invalid_argument, "field '" + n.field("refine") + "' must be >= 1");
        GridSpec solver = grid;
        if (refine > 1)
            for (int a = 0; a < grid.dim; ++a) {
                solver.shape[a] = refine * (grid.shape[a] - 1) + 1;
                solver.spacing[a] = grid.spacing[a] / static_cast<double>(refine);
            }
        const ScalarField f = field_on_grid(input, solver);
        const ScalarField c = solver == grid ? c_grid : speed_on(ctx, solver);
        WaveOptions wo;
        wo.sponge_cells = n.get<std::size_t>("sponge_cells", wo.sponge_cells);
        wo.sponge_strength = n.positive("sponge_strength", wo.sponge_strength);
        wo.padding_cells = n.get<std::size_t>("padding_cells", wo.padding_cells);
        wo.record_stride = n.get<std::size_t>("record_stride", refine);
        const double dt = n.positive("dt", max_stable_dt(solver, c.max()));
        ctx.log("wave solve on " + std::to_string(solver.size()) + " nodes, T = " + std::to_string(T));
        Sinogram p = solve_wave_forward(f, c, surface, T, dt, wo);
        if (kind == DataKind::pressure) {
            out = std::move(p);
        } else {
            require(c_min == c_max, Errc::invalid_argument, "spherical data from the wave solver need constant speed");
            const Sinogram means = means_from_pressure(p, c_max);
            out = kind == DataKind::spherical_mean ? means : convert_spherical_kind(means, DataKind::spherical_integral);
        }
    } else {
        require(c_min == c_max, Errc::invalid_argument,
                "method '" + method + "' needs a constant speed (field '" + n.field("speed") + "')");
        const double c = c_max;
        RadialSampling radii;
        if (n.has("radii")) {
            const auto rn = n.child("radii");
            rn.only({"dr", "count"});
            radii = {rn.positive("dr"), rn.get<std::size_t>("count")};
        } else if (n.has("time_axis_from")) {
            const Sinogram ref = read_sinogram(ctx.input("time_axis_from"));
            radii = {c * ref.dt(), ref.n_times()};
        } else {
            const double dt = n.positive("dt", max_stable_dt(grid, c));
            radii = {c * dt, static_cast<std::size_t>(std::floor(T / dt + 1e-9)) + 1};
        }
        Sinogram integrals;
        if (method == "closed_form") {
            const PhantomDescriptor desc = descriptor_of(input, "method 'closed_form'");
            integrals = phantom_spherical_integrals(desc, surface, radii, input.header.value("ramp", 0.0), c,
                                                    grid.min_spacing());
        } else {
            integrals = spherical_mean_transform(input.field, surface, radii, c);
        }
        out = convert_to(integrals, kind, c);
    }
    const double noise = n.get<double>("noise", 0.0);
    if (noise > 0.0) {
        std::vector<double> v = out.data();
        add_relative_noise(v, noise, ctx.seed);
        out = out.with_values(std::move(v), out.kind());
    }
    json extra = ctx.provenance();
    extra["method"] = method;
    extra["noise"] = noise;
    const auto path = ctx.path("output");
    write_sinogram(out, path, extra);
    ctx.produced(path);
    ctx.log("wrote " + path.filename().string() + " (" + std::to_string(out.n_detectors()) + " x " +
            std::to_string(out.n_times()) + ")");
}

inline void stage_reconstruct(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "input", "method", "grid", "grid_from", "variant", "range", "formula", "lambda_max",
            "coefficients_output", "speed", "speed_field", "T", "T_diameters", "cutoff", "window", "iterations",
            "report", "output", "preview"});
    const std::string method = n.choice("method", {"fbp", "series", "time_reversal", "neumann"});
    const Sinogram g = read_sinogram(ctx.input("input"));
    const GridSpec grid = stage_grid(ctx);
    json extra = ctx.provenance();
    extra["method"] = method;
    ScalarField f;
    if (method == "fbp") {
        const FbpVariant v = fbp_variant_from_string(
            n.choice("variant", {"laplacian_outside", "second_radial", "nested_radial"}, "second_radial"));
        FbpOptions fo;
        fo.range = n.choice("range", {"zero_extend", "reject"}, "zero_extend") == "reject" ? RangePolicy::reject
                                                                                            : RangePolicy::zero_extend;
        f = reconstruct_fbp(g, v, grid, fo);
        extra["variant"] = to_string(v);
    } else if (method == "series") {
        const CoefficientFormula formula = coefficient_formula_from_string(n.choice("formula", {"A", "B", "C"}, "B"));
        const double c = g.sound_speed().value_or(n.positive("speed", 1.0));
        EigenBasis basis = EigenBasis::for_surface(g.surface(), c);
        Sinogram p = g;
        if (g.kind() != DataKind::pressure) {
            require(g.surface().dim() == 3, Errc::invalid_argument, "series method needs pressure traces in 2D");
            p = pressure_from_means(convert_spherical_kind(g, DataKind::spherical_mean), c);
        }
        ModeCoefficients coeffs = coefficients_from_gk(project_boundary_data(p, basis), basis, formula);
        if (n.has("lambda_max")) coeffs = truncate(coeffs, n.positive("lambda_max"));
        f = synthesize_field(coeffs, grid);
        extra["formula"] = to_string(formula);
        extra["modes"] = coeffs.size();
        if (n.has("coefficients_output")) {
            const auto cp = ctx.path("coefficients_output");
            write_coefficients(coeffs, cp, ctx.provenance());
            ctx.produced(cp);
        }
    } else {
        const ScalarField c = speed_on(ctx, grid);
        TimeReversalConfig cfg;
        double c_min = c.max();
        for (double v : c.values()) c_min = std::min(c_min, v);
        if (n.has("T"))
            cfg.T = n.positive("T");
        else if (n.has("T_diameters"))
            cfg.T = n.positive("T_diameters") * g.surface().diameter() / c_min;
        else
            cfg.T = g.duration();
        cfg.cutoff = cutoff_from_string(
            n.choice("cutoff", {"hard_zero", "smoothed"}, method == "neumann" ? "smoothed" : "hard_zero"));
        cfg.window = n.get<double>("window", 0.0);
        extra["T"] = cfg.T;
        extra["cutoff"] = to_string(cfg.cutoff);
        if (method == "time_reversal") {
            f = time_reverse(g, c, cfg);
        } else {
            cfg.neumann_iterations = n.get<std::size_t>("iterations", 5);
            NeumannReport rep;
            f = neumann_refine(g, c, cfg, &rep);
            extra["neumann_best_iteration"] = rep.best_iteration;
            if (n.has("report")) {
                json r = ctx.provenance();
                r["residuals"] = rep.residuals;
                r["best_iteration"] = rep.best_iteration;
                r["stopped_on_increase"] = rep.stopped_on_increase;
                const auto rp = ctx.path("report");
                write_json(rp, r);
                ctx.produced(rp);
            }
        }
    }
    const auto path = ctx.path("output");
    write_field(f, path, extra);
    ctx.produced(path);
    if (n.has("preview")) {
        const auto pgm = ctx.path("preview");
        write_pgm(f, pgm);
        ctx.produced(pgm);
    }
    ctx.log("wrote " + path.filename().string());
}

inline FocusingBasis basis_from(const config::Node& b, const GridSpec& grid) {
    b.only({"kind", "centers", "dr", "n_radii", "max_radius", "half_width"});
    FocusingBasis basis;
    basis.kind = focusing_kind_from_string(b.choice("kind", {"delta_shell", "n_shaped_shell"}));
    basis.centers = config::surface(b.child("centers"), grid);
    const double dr = b.positive("dr");
    std::size_t count = 0;
    if (b.has("n_radii")) {
        count = b.get<std::size_t>("n_radii");
    } else {
        const double r_max = b.has("max_radius") ? b.positive("max_radius")
                                                 : basis.centers.diameter() + grid.max_spacing();
        count = static_cast<std::size_t>(std::ceil(r_max / dr)) + 1;
    }
    basis.radii = {dr, count};
    basis.half_width = b.get<double>("half_width", 0.0);
    basis.validate();
    return basis;
}

/// Focuses W; with a reference map, focuses the difference of the
/// measurements and adds the reference back.
inline InteriorMap focus_map(const InteriorMap& W, const FocusingBasis& basis, double noise, std::uint64_t seed,
                             const InteriorMap* reference, const FocusOptions& fo, ModulatedMeasurements* measured) {
    ModulatedMeasurements M = synthesize_modulated_measurements(W, basis, noise, seed);
    if (measured) *measured = M;
    if (!reference) return synthetic_focus(M, W.W.grid(), fo);
    const ModulatedMeasurements Mr = synthesize_modulated_measurements(*reference, basis, 0.0, 0);
    for (std::size_t k = 0; k < M.values.size(); ++k) M.values[k] -= Mr.values[k];
    InteriorMap out = synthetic_focus(M, W.W.grid(), fo);
    out.W = axpy(1.0, out.W, reference->W, "W_focused");
    out.pattern_a = W.pattern_a;
    out.pattern_b = W.pattern_b;
    return out;
}

inline InteriorMap as_interior_map(const FieldFile& f) {
    InteriorMap m{f.field, f.header.value("functional", std::string(functional_sigma_grad_dot)), 0, 0};
    if (f.header.contains("patterns")) {
        const auto p = f.header.at("patterns").get<std::vector<std::size_t>>();
        if (p.size() == 2) m.pattern_a = p[0], m.pattern_b = p[1];
    }
    m.validate();
    return m;
}

inline void stage_focus(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "input", "basis", "noise", "reference", "lambda_max", "variant", "grid", "measurements_output",
            "output"});
    const InteriorMap W = as_interior_map(load_field(ctx.input("input")));
    const FocusingBasis basis = basis_from(n.child("basis"), W.W.grid());
    FocusOptions fo;
    fo.lambda_max = n.get<double>("lambda_max", 0.0);
    fo.variant = fbp_variant_from_string(
        n.choice("variant", {"laplacian_outside", "second_radial", "nested_radial"}, "second_radial"));
    std::optional<InteriorMap> ref;
    if (n.has("reference")) ref = as_interior_map(load_field(ctx.input("reference")));
    const double noise = n.get<double>("noise", 0.0);
    ModulatedMeasurements M;
    InteriorMap out = focus_map(W, basis, noise, ctx.seed, ref ? &*ref : nullptr, fo, &M);
    if (n.has("grid")) {
        // focusing output on another grid: rerun without reference shortcut
        require(!ref, Errc::invalid_argument, "field '" + n.field("grid") + "' cannot be combined with a reference");
        out = synthetic_focus(M, config::grid(n.child("grid")), fo);
    }
    json extra = ctx.provenance();
    extra["basis"] = basis.descriptor();
    extra["noise"] = noise;
    if (n.has("measurements_output")) {
        const auto mp = ctx.path("measurements_output");
        write_modulated(M, mp, ctx.provenance());
        ctx.produced(mp);
    }
    const auto path = ctx.path("output");
    write_interior_map(out, path, extra);
    ctx.produced(path);
    ctx.log("wrote " + path.filename().string());
}

inline void stage_aet(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "sigma_truth", "patterns", "pairs", "basis", "noise", "reference", "beta", "max_iterations",
            "sigma_min", "sigma_max", "sigma_background", "edge_cells", "lambda_max", "output", "report",
            "maps_output"});
    const ScalarField sigma = load_field(ctx.input("sigma_truth")).field;
    const GridSpec& grid = sigma.grid();
    require(grid.dim == 2, Errc::invalid_argument, "AET runs on 2D conductivities");
    require(n.has("patterns") && n.raw().at("patterns").is_array(), Errc::invalid_argument,
            "field '" + n.field("patterns") + "' must be an array");
    std::vector<CurrentPattern> patterns;
    const json& pl = n.raw().at("patterns");
    for (std::size_t i = 0; i < pl.size(); ++i)
        patterns.push_back(config::pattern(config::Node(pl[i], n.field("patterns") + "[" + std::to_string(i) + "]"), grid));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (n.has("pairs")) {
        for (const auto& p : n.get<std::vector<std::vector<std::size_t>>>("pairs")) {
            require(p.size() == 2 && p[0] < patterns.size() && p[1] < patterns.size(), Errc::invalid_argument,
                    "field '" + n.field("pairs") + "' holds an invalid pattern pair");
            pairs.emplace_back(p[0], p[1]);
        }
    } else {
        for (std::size_t a = 0; a < patterns.size(); ++a)
            for (std::size_t b = a; b < patterns.size(); ++b) pairs.emplace_back(a, b);
    }

    AetOptions ao;
    ao.sigma_background = n.positive("sigma_background", ao.sigma_background);
    ao.sigma_min = n.positive("sigma_min", ao.sigma_min);
    ao.sigma_max = n.positive("sigma_max", ao.sigma_max);
    ao.max_iterations = n.get<std::size_t>("max_iterations", ao.max_iterations);
    ao.edge_cells = n.get<std::size_t>("edge_cells", 0);
    ao.beta = ctx.opts.beta ? *ctx.opts.beta : n.get<double>("beta", -1.0);

    const ScalarField background = ScalarField::constant(grid, ao.sigma_background, "sigma_ref");
    std::vector<ScalarField> u(patterns.size()), u_ref(patterns.size());
    parallel_for(patterns.size(), [&](std::size_t i) {
        u[i] = solve_conductivity(sigma, patterns[i]);
        u_ref[i] = solve_conductivity(background, patterns[i]);
    });

    const double noise = n.get<double>("noise", 0.0);
    const bool reference = n.get<bool>("reference", true);
    std::optional<FocusingBasis> basis;
    if (n.has("basis")) basis = basis_from(n.child("basis"), grid);
    FocusOptions fo;
    fo.lambda_max = n.get<double>("lambda_max", 0.0);

    std::vector<InteriorMap> maps;
    json map_errors = json::array();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [a, b] = pairs[k];
        const InteriorMap truth = interior_functional(sigma, u[a], u[b], a, b);
        InteriorMap obs;
        const std::uint64_t seed = stage_seed(ctx.seed, k);
        if (basis) {
            const InteriorMap ref = interior_functional(background, u_ref[a], u_ref[b], a, b);
            obs = focus_map(truth, *basis, noise, seed, reference ? &ref : nullptr, fo, nullptr);
        } else {
            std::vector<double> v(truth.W.values().begin(), truth.W.values().end());
            add_relative_noise(v, noise, seed);
            obs = {ScalarField(grid, std::move(v), "W"), truth.tag, a, b};
        }
        map_errors.push_back(relative_l2(obs.W, truth.W));
        if (n.has("maps_output")) {
            const std::filesystem::path base = ctx.path("maps_output");
            const auto mp = base.parent_path() /
                            (base.filename().string() + "_" + std::to_string(a) + std::to_string(b) + ".tatimp");
            write_interior_map(obs, mp, ctx.provenance());
            ctx.produced(mp);
        }
        maps.push_back(std::move(obs));
    }
    ctx.log("focused " + std::to_string(maps.size()) + " interior maps");

    AetReport rep;
    const ScalarField rec = reconstruct_sigma(maps, patterns, ao, &rep);
    json extra = ctx.provenance();
    extra["iterations"] = rep.iterations;
    const auto path = ctx.path("output");
    write_field(rec, path, extra);
    ctx.produced(path);
    if (n.has("report")) {
        json r = ctx.provenance();
        r["objective"] = rep.objective;
        r["iterations"] = rep.iterations;
        r["converged"] = rep.converged;
        r["line_search_failed"] = rep.line_search_failed;
        r["diagnostic"] = rep.diagnostic;
        r["map_relative_errors"] = map_errors;
        r["beta"] = ao.beta < 0.0 ? default_beta(grid) : ao.beta;
        r["sigma_relative_l2"] = relative_l2(rec, sigma);
        const auto rp = ctx.path("report");
        write_json(rp, r);
        ctx.produced(rp);
    }
    ctx.log("wrote " + path.filename().string() + " after " + std::to_string(rep.iterations) + " iterations (" +
            rep.diagnostic + ")");
}

inline void stage_metrics(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "estimate", "truth", "output"});
    const auto est = ctx.input("estimate"), tru = ctx.input("truth");
    const std::string me = file_magic(est), mt = file_magic(tru);
    ErrorMetrics m;
    json out = ctx.provenance();
    if (me == sinogram_magic) {
        require(mt == sinogram_magic, Errc::invalid_argument, "a sinogram estimate needs a sinogram truth");
        const Sinogram a = read_sinogram(est), b = read_sinogram(tru);
        require(a.n_detectors() == b.n_detectors() && a.n_times() == b.n_times(), Errc::invalid_argument,
                "sinograms differ in shape");
        m = compare(a.values(), b.values());
        out["kind"] = "sinogram";
    } else if (me == coefficients_magic) {
        const ModeCoefficients c = read_coefficients(est);
        const ModeCoefficients ref =
            mt == coefficients_magic ? read_coefficients(tru) : project_field(load_field(tru).field, c.basis);
        require(ref.size() == c.size(), Errc::invalid_argument, "coefficient sets differ in length");
        m = compare(c.values, ref.values);
        out["kind"] = "coefficients";
        out["modes"] = c.size();
    } else {
        m = compare(load_field(est).field, load_field(tru).field);
        out["kind"] = "field";
    }
    out["estimate"] = est.filename().string();
    out["truth"] = tru.filename().string();
    out["metrics"] = m.to_json();
    const auto path = ctx.path("output");
    write_json(path, out);
    ctx.produced(path);
    ctx.log("relative L2 " + std::to_string(m.relative_l2));
}

/// Relative change of the leapfrog energy of the interior scheme over
/// `steps` steps, and the error of running the same steps backward.
struct SchemeChecks {
    double energy_drift = 0.0;
    double reversibility = 0.0;
};

inline SchemeChecks scheme_checks(const ScalarField& f, const ScalarField& c, std::size_t steps) {
    require_same_grid(f, c, "scheme_checks");
    const GridSpec& g = f.grid();
    const double dt = max_stable_dt(g, c.max());
    std::vector<double> coef(g.size()), inv_c2(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        coef[k] = c[k] * c[k] * dt * dt;
        inv_c2[k] = 1.0 / (c[k] * c[k]);
    }
    WaveScheme s(g.dim, g.shape, g.spacing, std::move(coef), {}, {});
    s.current() = std::vector<double>(f.values().begin(), f.values().end());
    s.start_from_rest();
    // energy between levels (-1, 0); step once so the pair is (0, 1)
    const std::vector<double> p0 = s.current();
    s.step();
    const double e0 = s.energy(inv_c2, dt);
    double drift = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        s.step();
        drift = std::max(drift, std::abs(s.energy(inv_c2, dt) - e0));
    }
    SchemeChecks out;
    out.energy_drift = e0 > 0.0 ? drift / e0 : 0.0;
    // reverse: swap levels (0-based: current = steps + 1, previous = steps)
    // and step back down to level 0
    std::swap(s.current(), s.previous());
    for (std::size_t k = 0; k < steps; ++k) s.step();
    out.reversibility = relative_l2(s.current(), p0);
    return out;
}

struct AdjointCheck {
    std::vector<double> relative_errors;
    double max_relative_error = 0.0;
};

/// Adjoint gradient vs central differences along random directions.
inline AdjointCheck adjoint_check(const ScalarField& sigma_true, const ScalarField& sigma_eval,
                                  const std::vector<CurrentPattern>& patterns, std::size_t directions,
                                  std::uint64_t seed) {
    const GridSpec& g = sigma_true.grid();
    std::vector<ScalarField> u;
    for (const auto& p : patterns) u.push_back(solve_conductivity(sigma_true, p));
    std::vector<InteriorMap> maps;
    for (std::size_t a = 0; a < patterns.size(); ++a)
        for (std::size_t b = a; b < patterns.size(); ++b) maps.push_back(interior_functional(sigma_true, u[a], u[b], a, b));
    const AetObjective obj(g, patterns, maps, default_beta(g));
    const std::vector<double> s(sigma_eval.values().begin(), sigma_eval.values().end());
    std::vector<double> grad;
    obj.evaluate(s, &grad);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    AdjointCheck out;
    for (std::size_t t = 0; t < directions; ++t) {
        std::vector<double> d(s.size());
        for (double& v : d) v = normal(rng);
        const double eps = 1e-5;
        std::vector<double> sp(s), sm(s);
        for (std::size_t k = 0; k < s.size(); ++k) {
            sp[k] += eps * d[k];
            sm[k] -= eps * d[k];
        }
        const double fd = (obj.evaluate(sp) - obj.evaluate(sm)) / (2.0 * eps);
        double an = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) an += grad[k] * d[k];
        const double err = std::abs(fd - an) / std::max(std::abs(an), 1e-300);
        out.relative_errors.push_back(err);
        out.max_relative_error = std::max(out.max_relative_error, err);
    }
    return out;
}

inline void stage_diagnostics(StageContext& ctx) {
    const auto& n = ctx.node;
    n.only({"stage", "wave", "adjoint", "output"});
    json out = ctx.provenance();
    if (n.has("wave")) {
        const auto w = n.child("wave");
        w.only({"grid", "background", "primitives", "edge_cells", "speed", "steps"});
        const GridSpec grid = config::grid(w.child("grid"));
        RasterOptions ro;
        ro.edge_cells = w.positive("edge_cells", 1.0);
        const ScalarField f = rasterize_phantom(config::phantom(w, grid.dim), grid, ro);
        PhantomDescriptor cd;
        cd.background = 1.0;
        if (w.has("speed")) cd = config::phantom(w.child("speed"), grid.dim);
        const ScalarField c = rasterize_phantom(cd, grid, ro, "c");
        const auto steps = w.get<std::size_t>("steps", 1000);
        const SchemeChecks sc = scheme_checks(f, c, steps);
        out["energy_drift"] = sc.energy_drift;
        out["reversibility_error"] = sc.reversibility;
        out["steps"] = steps;
        ctx.log("energy drift " + std::to_string(sc.energy_drift) + ", reversibility " +
                std::to_string(sc.reversibility));
    }
    if (n.has("adjoint")) {
        const auto a = n.child("adjoint");
        a.only({"grid", "sigma", "perturbation", "patterns", "directions"});
        const GridSpec grid = config::grid(a.child("grid"));
        const ScalarField sigma = rasterize_phantom(config::phantom(a.child("sigma"), 2), grid, {}, "sigma");
        const double amp = a.get<double>("perturbation", 0.2);
        std::mt19937_64 rng(stage_seed(ctx.seed, 1));
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        std::vector<double> eval(sigma.values().begin(), sigma.values().end());
        for (double& v : eval) v = std::max(0.05, v * (1.0 + amp * uni(rng)));
        std::vector<CurrentPattern> patterns;
        const json& pl = a.raw().at("patterns");
        for (std::size_t i = 0; i < pl.size(); ++i)
            patterns.push_back(config::pattern(config::Node(pl[i], a.field("patterns") + "[" + std::to_string(i) + "]"), grid));
        const AdjointCheck ac = adjoint_check(sigma, ScalarField(grid, eval), patterns,
                                              a.get<std::size_t>("directions", 5), ctx.seed);
        out["adjoint_relative_errors"] = ac.relative_errors;
        out["adjoint_max_relative_error"] = ac.max_relative_error;
        ctx.log("adjoint max relative error " + std::to_string(ac.max_relative_error));
    }
    const auto path = ctx.path("output");
    write_json(path, out);
    ctx.produced(path);
}

} // namespace detail

/// Runs one stage object. `index` positions it within its pipeline.
inline void run_stage(const json& stage, std::size_t index, const std::filesystem::path& dir, const json& provenance,
                      std::uint64_t seed, const PipelineOptions& opts, PipelineResult& result) {
    const std::string where = "stages[" + std::to_string(index) + "]";
    const config::Node node(stage, where);
    const std::string name = node.get<std::string>("stage");
    if (std::find(stage_names().begin(), stage_names().end(), name) == stage_names().end())
        fail(Errc::invalid_argument, "field '" + node.field("stage") + "' has unknown value '" + name + "'");
    detail::StageContext ctx(node, index, name, dir, provenance, stage_seed(seed, index), opts, result);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (name == "phantom") detail::stage_phantom(ctx);
        else if (name == "simulate") detail::stage_simulate(ctx);
        else if (name == "reconstruct") detail::stage_reconstruct(ctx);
        else if (name == "focus") detail::stage_focus(ctx);
        else if (name == "aet") detail::stage_aet(ctx);
        else if (name == "metrics") detail::stage_metrics(ctx);
        else detail::stage_diagnostics(ctx);
    } catch (const Error& e) {
        // name the stage; keep the category for the exit code
        const std::string msg = e.what();
        const std::string prefix = std::string(to_string(e.code())) + ": ";
        fail(e.code(), "stage " + std::to_string(index) + " (" + name + "): " +
                           (msg.rfind(prefix, 0) == 0 ? msg.substr(prefix.size()) : msg));
    } catch (const std::filesystem::filesystem_error& e) {
        fail(Errc::io_failure, "stage " + std::to_string(index) + " (" + name + "): " + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.stage_seconds.push_back(secs);
    ctx.log("done in " + std::to_string(secs) + " s");
}

inline json read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::io_failure, "cannot open config '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(Errc::invalid_argument, "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

/// Runs every stage of `config` in order.
inline PipelineResult run_pipeline(const json& config, const PipelineOptions& opts = {}) {
    const config::Node root(config, "");
    root.only({"name", "description", "seed", "output_dir", "stages"});
    require(root.has("stages") && config.at("stages").is_array() && !config.at("stages").empty(),
            Errc::invalid_argument, "field 'stages' must be a non-empty array");
    PipelineResult result;
    result.seed = opts.seed ? *opts.seed : root.get<std::uint64_t>("seed", 0);
    result.config_hash = config_hash(config);
    result.output_dir = !opts.output_dir.empty() ? opts.output_dir
                                                 : std::filesystem::path(root.get<std::string>("output_dir", "out"));
    std::filesystem::create_directories(result.output_dir);
    json prov;
    prov["config_hash"] = result.config_hash;
    prov["version"] = std::string(version);
    prov["seed"] = result.seed;
    if (root.has("name")) prov["config_name"] = root.get<std::string>("name");
    const json& stages = config.at("stages");
    for (std::size_t i = 0; i < stages.size(); ++i)
        run_stage(stages[i], i, result.output_dir, prov, result.seed, opts, result);
    return result;
}

} // namespace tat
