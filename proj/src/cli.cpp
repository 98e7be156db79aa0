#include "morphofilter/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

namespace morphofilter {

namespace fs = std::filesystem;

namespace {

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void save_effective_config(const RunConfig& config, std::vector<fs::path>& files) {
    write_text_file(fs::path(config.output_dir) / "config.json",
                    config_to_json(config).dump(2) + "\n");
    files.emplace_back("config.json");
}

RunConfig load_run_config(const fs::path& run_dir) {
    const fs::path path = run_dir / "config.json";
    if (!fs::exists(path))
        throw MissingArtifactError("missing " + path.string() +
                                   "; run a config-driven command on this directory first");
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

std::vector<double> resolve_schedule(const RunConfig& config, double c_min) {
    const ScheduleSpec& s = config.schedule;
    if (!s.temperatures.empty()) return s.temperatures;
    double t_hi = s.t_hi;
    if (!(t_hi > 0.0)) {
        std::cout << "probing for the compliance-ratio-3 temperature..." << std::endl;
        t_hi = find_high_temperature(config.problem, config.thermostat, c_min,
                                     derive_seed(config.seed, 9001), 3.3);
        std::cout << "auto t_hi = " << t_hi << std::endl;
    }
    const double t_lo = (s.t_lo > 0.0) ? s.t_lo : 0.05 * t_hi;
    return make_schedule(t_hi, t_lo, s.count, s.log_spacing);
}

OptimizationResult ensure_optimize(const RunConfig& config, std::vector<fs::path>& files) {
    const fs::path run_dir(config.output_dir);
    if (has_optimize(run_dir)) return load_optimize(run_dir, config.problem);
    OptimizationResult result = optimize(config.problem);
    auto emitted = save_optimize(run_dir, config.problem, result);
    files.insert(files.end(), emitted.begin(), emitted.end());
    return result;
}

const SweepEntry& nearest_entry(const SweepSeries& series, double temperature) {
    const SweepEntry* best = nullptr;
    for (const auto& entry : series.entries) {
        if (entry.failed) continue;
        if (!best ||
            std::abs(entry.temperature - temperature) < std::abs(best->temperature - temperature))
            best = &entry;
    }
    if (!best) throw MissingArtifactError("sweep has no successful temperature entries");
    return *best;
}

std::size_t entry_index(const SweepSeries& series, const SweepEntry& entry) {
    return static_cast<std::size_t>(&entry - series.entries.data());
}

}  // namespace

void cmd_optimize(const RunConfig& config) {
    StageTimer timer;
    std::vector<fs::path> files;
    save_effective_config(config, files);
    OptimizationResult result = optimize(config.problem);
    auto emitted = save_optimize(config.output_dir, config.problem, result);
    files.insert(files.end(), emitted.begin(), emitted.end());
    update_manifest(config.output_dir, config_hash(config), "optimize", timer.seconds(), files);
    std::cout << "c_min = " << result.c_min << " after " << result.iterations
              << " iterations (converged = " << (result.converged ? "yes" : "no") << ")"
              << std::endl;
    if (!result.converged)
        throw NumericsError("optimizer did not converge within the iteration budget");
}

void cmd_reference_entropy(const RunConfig& config) {
    StageTimer timer;
    std::vector<fs::path> files;
    save_effective_config(config, files);

    NhcSampler sampler(config.problem, config.thermostat, /*zero_force=*/true);
    SampleOutcome out =
        sample_at_temperature(sampler, config.sampling, derive_seed(config.seed, 7001));
    const Eigen::VectorXd s_max = entropy_per_site(out.stats.histograms);

    auto emitted = save_reference(config.output_dir, config.problem, out.stats, s_max);
    files.insert(files.end(), emitted.begin(), emitted.end());
    update_manifest(config.output_dir, config_hash(config), "reference-entropy",
                    timer.seconds(), files);
    std::cout << "s_max: mean " << s_max.mean() << ", min " << s_max.minCoeff() << ", max "
              << s_max.maxCoeff() << " nats" << std::endl;
}

void cmd_sweep(const RunConfig& config) {
    StageTimer timer;
    std::vector<fs::path> files;
    save_effective_config(config, files);

    OptimizationResult opt = ensure_optimize(config, files);
    const std::vector<double> schedule = resolve_schedule(config, opt.c_min);

    SweepSeries series =
        run_sweep(config.problem, config.thermostat, schedule, config.sampling, config.anneal,
                  config.seed, opt.c_min, config.jobs);
    auto emitted = save_sweep(config.output_dir, config.problem, series);
    files.insert(files.end(), emitted.begin(), emitted.end());
    update_manifest(config.output_dir, config_hash(config), "sweep", timer.seconds(), files);

    int failures = 0;
    for (const auto& entry : series.entries) {
        if (entry.failed) {
            ++failures;
            std::cout << "T = " << entry.temperature << " FAILED: " << entry.error << std::endl;
        } else {
            std::cout << "T = " << entry.temperature
                      << "  <C>/C_min = " << entry.stats.mean_compliance / opt.c_min
                      << "  <lambda> = " << entry.stats.mean_pressure
                      << (entry.stats.equilibrated ? "" : "  [not equilibrated]") << std::endl;
        }
    }
    if (failures == static_cast<int>(series.entries.size()))
        throw NumericsError("every sweep temperature failed");
}

void cmd_analyze(const fs::path& run_dir) {
    StageTimer timer;
    const RunConfig config = load_run_config(run_dir);
    const ProblemSpec& spec = config.problem;

    const SweepSeries series = load_sweep(run_dir);
    const Eigen::VectorXd s_max = load_reference(run_dir);

    std::vector<fs::path> files;
    const fs::path dir = run_dir / "analyze";
    fs::create_directories(dir);

    const EntropyMap emap = build_entropy_map(series, s_max);
    {
        std::ostringstream out;
        out << "site,temperature,S,S_max,s\n";
        for (std::size_t t = 0; t < emap.temperatures.size(); ++t)
            for (int e = 0; e < emap.entropy.cols(); ++e)
                out << e << ',' << format_double(emap.temperatures[t]) << ','
                    << format_double(emap.entropy(static_cast<int>(t), e)) << ','
                    << format_double(emap.s_max[e]) << ','
                    << format_double(emap.normalized(static_cast<int>(t), e)) << '\n';
        write_text_file(dir / "entropy.csv", out.str());
        files.emplace_back("analyze/entropy.csv");
    }

    const CondensationResult cond = condensation_map(emap);
    {
        std::ostringstream out;
        out << "site,ex,ey,t_c,t_c_norm,flag\n";
        for (int e = 0; e < cond.t_c.size(); ++e)
            out << e << ',' << e / spec.nely << ',' << e % spec.nely << ','
                << format_double(cond.t_c[e]) << ','
                << format_double(cond.t_c[e] / cond.t_c_max) << ','
                << to_string(cond.flags[e]) << '\n';
        write_text_file(dir / "condensation.csv", out.str());
        files.emplace_back("analyze/condensation.csv");
    }
    {
        const Image img =
            render_heat(cond.t_c / cond.t_c_max, spec.nelx, spec.nely, 0.0, 1.0);
        write_ppm(img, (dir / "condensation.ppm").string());
        write_png(img, (dir / "condensation.png").string());
        files.emplace_back("analyze/condensation.ppm");
        files.emplace_back("analyze/condensation.png");
    }

    // Regime segmentation over the successful entries.
    std::vector<double> temps, comps;
    for (const auto& entry : series.entries) {
        if (entry.failed) continue;
        temps.push_back(entry.temperature);
        comps.push_back(entry.stats.mean_compliance);
    }
    nlohmann::json regimes;
    if (temps.size() >= 4) {
        const int max_segments = std::max(1, static_cast<int>(temps.size()) / 3);
        const RegimeFit fit = regime_fit(temps, comps, std::min(max_segments, 6));
        nlohmann::json segs = nlohmann::json::array();
        for (const auto& s : fit.segments) {
            segs.push_back({{"first", s.first},
                            {"last", s.last},
                            {"t_low", s.t_low},
                            {"t_high", s.t_high},
                            {"slope", s.slope},
                            {"intercept", s.intercept},
                            {"residual", s.residual}});
        }
        regimes["segments"] = segs;
        regimes["n_points"] = temps.size();
        regimes["note"] = "segment slope d<C>/dT estimates the in-play DOF count N_IP/nu";
    } else {
        regimes["segments"] = nlohmann::json::array();
        regimes["n_points"] = temps.size();
        regimes["note"] = "too few successful temperatures for a piecewise fit";
    }
    write_text_file(dir / "regimes.json", regimes.dump(2) + "\n");
    files.emplace_back("analyze/regimes.json");

    {
        std::ostringstream out;
        out << "site,temperature,mean_density,s,state\n";
        int row = 0;
        for (const auto& entry : series.entries) {
            if (entry.failed) continue;
            const auto states =
                classify_sites(entry.stats.mean_density,
                               emap.normalized.row(row).transpose());
            for (int e = 0; e < spec.num_elements(); ++e)
                out << e << ',' << format_double(entry.temperature) << ','
                    << format_double(entry.stats.mean_density[e]) << ','
                    << format_double(emap.normalized(row, e)) << ',' << to_string(states[e])
                    << '\n';
            ++row;
        }
        write_text_file(dir / "classification.csv", out.str());
        files.emplace_back("analyze/classification.csv");
    }

    nlohmann::json summary;
    summary["temperatures"] = emap.temperatures;
    summary["t_c_max"] = cond.t_c_max;
    summary["c_min_reference"] = series.c_min_reference;

    if (has_optimize(run_dir)) {
        const OptimizationResult opt = load_optimize(run_dir, spec);
        const ImportanceMap imap = importance_map(opt.x_star, cond, spec.nelx, spec.nely);
        std::ostringstream out;
        out << "site,ex,ey,density,t_c,t_c_norm\n";
        for (int e = 0; e < imap.density.size(); ++e)
            out << e << ',' << e / spec.nely << ',' << e % spec.nely << ','
                << format_double(imap.density[e]) << ',' << format_double(imap.t_c[e]) << ','
                << format_double(imap.t_c_normalized[e]) << '\n';
        write_text_file(dir / "importance.csv", out.str());
        files.emplace_back("analyze/importance.csv");
        write_ppm(imap.raster, (dir / "importance.ppm").string());
        write_png(imap.raster, (dir / "importance.png").string());
        files.emplace_back("analyze/importance.ppm");
        files.emplace_back("analyze/importance.png");
        summary["importance"] = true;
    } else {
        summary["importance"] = false;
    }

    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    files.emplace_back("analyze/summary.json");
    update_manifest(run_dir, config_hash(config), "analyze", timer.seconds(), files);
    std::cout << "analysis written to " << dir.string() << std::endl;
}

void cmd_render(const fs::path& run_dir, const std::string& target) {
    StageTimer timer;
    const RunConfig config = load_run_config(run_dir);
    const ProblemSpec& spec = config.problem;
    std::vector<fs::path> files;
    const fs::path dir = run_dir / "render";
    fs::create_directories(dir);

    std::string kind = target;
    double at_temperature = 0.0;
    bool has_at = false;
    if (const auto pos = target.find('@'); pos != std::string::npos) {
        kind = target.substr(0, pos);
        try {
            at_temperature = std::stod(target.substr(pos + 1));
        } catch (const std::exception&) {
            throw SpecError("render target: cannot parse temperature in '" + target + "'");
        }
        has_at = true;
    }

    auto emit = [&](const Image& img, const std::string& stem) {
        write_ppm(img, (dir / (stem + ".ppm")).string());
        write_png(img, (dir / (stem + ".png")).string());
        files.emplace_back(fs::path("render") / (stem + ".ppm"));
        files.emplace_back(fs::path("render") / (stem + ".png"));
        std::cout << "wrote " << (dir / (stem + ".png")).string() << std::endl;
    };

    if (kind == "mean_density") {
        if (!has_at) throw SpecError("render target: mean_density@T requires a temperature");
        const SweepSeries series = load_sweep(run_dir);
        const SweepEntry& entry = nearest_entry(series, at_temperature);
        char stem[64];
        std::snprintf(stem, sizeof(stem), "mean_density_T%02zu", entry_index(series, entry));
        emit(render_density(entry.stats.mean_density, spec.nelx, spec.nely), stem);
    } else if (kind == "entropy") {
        if (!has_at) throw SpecError("render target: entropy@T requires a temperature");
        const SweepSeries series = load_sweep(run_dir);
        const Eigen::VectorXd s_max = load_reference(run_dir);
        const SweepEntry& entry = nearest_entry(series, at_temperature);
        const Eigen::VectorXd s =
            entropy_per_site(entry.stats.histograms).cwiseQuotient(s_max);
        char stem[64];
        std::snprintf(stem, sizeof(stem), "entropy_T%02zu", entry_index(series, entry));
        emit(render_heat(s, spec.nelx, spec.nely, 0.0, 1.0), stem);
    } else if (kind == "condensation") {
        const SweepSeries series = load_sweep(run_dir);
        const Eigen::VectorXd s_max = load_reference(run_dir);
        const CondensationResult cond = condensation_map(build_entropy_map(series, s_max));
        emit(render_heat(cond.t_c / cond.t_c_max, spec.nelx, spec.nely, 0.0, 1.0),
             "condensation");
    } else if (kind == "importance") {
        const SweepSeries series = load_sweep(run_dir);
        const Eigen::VectorXd s_max = load_reference(run_dir);
        const OptimizationResult opt = load_optimize(run_dir, spec);
        const CondensationResult cond = condensation_map(build_entropy_map(series, s_max));
        const ImportanceMap imap = importance_map(opt.x_star, cond, spec.nelx, spec.nely);
        emit(imap.raster, "importance");
    } else {
        throw SpecError("render target: unknown target '" + target +
                        "' (expected mean_density@T, entropy@T, condensation, importance)");
    }
    update_manifest(run_dir, config_hash(config), "render:" + target, timer.seconds(), files);
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Pareto-Laplace filter for compliance-minimization design ensembles"};
    app.require_subcommand(1);

    std::string config_path, output_dir, run_dir, target;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;

    auto add_config_options = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON")->required();
        cmd->add_option("--output", output_dir, "override output_dir from the config");
        cmd->add_option("--seed", seed, "override seed from the config")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--jobs", jobs,
                        "worker threads for independent temperatures "
                        "(fallback: MORPHOFILTER_JOBS)");
    };

    CLI::App* c_opt = app.add_subcommand("optimize", "gradient-based reference optimum");
    add_config_options(c_opt);
    CLI::App* c_sweep = app.add_subcommand("sweep", "canonical-ensemble temperature sweep");
    add_config_options(c_sweep);
    CLI::App* c_ref = app.add_subcommand("reference-entropy",
                                         "zero-force maximum-entropy reference run");
    add_config_options(c_ref);

    CLI::App* c_ana = app.add_subcommand("analyze", "derive entropy/condensation/regime maps");
    c_ana->add_option("--run", run_dir, "run directory with sweep artifacts")->required();
    CLI::App* c_ren = app.add_subcommand("render", "raster images from persisted results");
    c_ren->add_option("--run", run_dir, "run directory")->required();
    c_ren->add_option("--target", target,
                      "mean_density@T | entropy@T | condensation | importance")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto make_config = [&]() {
            RunConfig config = load_config(config_path);
            if (!output_dir.empty()) config.output_dir = output_dir;
            if (seed_set) config.seed = seed;
            if (jobs > 0) {
                config.jobs = jobs;
            } else if (const char* env = std::getenv("MORPHOFILTER_JOBS")) {
                config.jobs = std::max(1, std::atoi(env));
            }
            return config;
        };
        if (c_opt->parsed()) cmd_optimize(make_config());
        if (c_sweep->parsed()) cmd_sweep(make_config());
        if (c_ref->parsed()) cmd_reference_entropy(make_config());
        if (c_ana->parsed()) cmd_analyze(run_dir);
        if (c_ren->parsed()) cmd_render(run_dir, target);
        return 0;
    } catch (const MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    }
}

}  // namespace morphofilter
