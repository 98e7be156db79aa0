#include "morphofilter/run_io.hpp"

#include <zlib.h>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace morphofilter {

namespace fs = std::filesystem;

void ScheduleSpec::validate() const {
    if (!temperatures.empty()) {
        for (std::size_t i = 0; i < temperatures.size(); ++i) {
            if (!(temperatures[i] > 0.0))
                throw SpecError("schedule.temperatures: must be positive");
            if (i > 0 && !(temperatures[i] < temperatures[i - 1]))
                throw SpecError("schedule.temperatures: must be strictly decreasing");
        }
        return;
    }
    if (count < 1) throw SpecError("schedule.count: must be >= 1");
    if (t_hi < 0.0) throw SpecError("schedule.t_hi: must be positive (or 0 for auto)");
    if (t_lo < 0.0) throw SpecError("schedule.t_lo: must be positive (or 0 for auto)");
    if (t_hi > 0.0 && t_lo > 0.0 && !(t_lo < t_hi))
        throw SpecError("schedule.t_lo: must be below t_hi");
}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    if (!j.contains("problem")) throw SpecError("problem: missing");
    c.problem = problem_from_json(j.at("problem"));

    if (j.contains("thermostat")) {
        const auto& t = j.at("thermostat");
        if (t.contains("dt")) c.thermostat.timestep = t.at("dt").get<double>();
        if (t.contains("chain_length")) c.thermostat.chain_length = t.at("chain_length").get<int>();
        if (t.contains("tau"))
            c.thermostat.relaxation_time = t.at("tau").get<double>();
        else
            c.thermostat.relaxation_time = 100.0 * c.thermostat.timestep;
        if (t.contains("masses")) c.thermostat.masses = t.at("masses").get<std::vector<double>>();
    }
    c.thermostat.validate();

    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        if (s.contains("temperatures"))
            c.schedule.temperatures = s.at("temperatures").get<std::vector<double>>();
        if (s.contains("t_hi")) c.schedule.t_hi = s.at("t_hi").get<double>();
        if (s.contains("t_lo")) c.schedule.t_lo = s.at("t_lo").get<double>();
        if (s.contains("count")) c.schedule.count = s.at("count").get<int>();
        if (s.contains("spacing")) {
            const std::string spacing = s.at("spacing").get<std::string>();
            if (spacing == "log")
                c.schedule.log_spacing = true;
            else if (spacing == "linear")
                c.schedule.log_spacing = false;
            else
                throw SpecError("schedule.spacing: must be 'log' or 'linear'");
        }
    }
    c.schedule.validate();

    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        if (s.contains("n_equil")) c.sampling.n_equil = s.at("n_equil").get<long>();
        if (s.contains("n_samples")) c.sampling.n_samples = s.at("n_samples").get<long>();
        if (s.contains("stride")) c.sampling.stride = s.at("stride").get<long>();
        if (s.contains("histogram_bins"))
            c.sampling.histogram_bins = s.at("histogram_bins").get<int>();
    }
    c.sampling.validate();

    if (j.contains("anneal")) c.anneal = j.at("anneal").get<bool>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    if (c.jobs < 1) throw SpecError("jobs: must be >= 1");
    return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["problem"] = problem_to_json(c.problem);
    j["thermostat"] = {{"dt", c.thermostat.timestep},
                       {"chain_length", c.thermostat.chain_length},
                       {"tau", c.thermostat.relaxation_time}};
    if (!c.thermostat.masses.empty()) j["thermostat"]["masses"] = c.thermostat.masses;
    if (!c.schedule.temperatures.empty()) {
        j["schedule"] = {{"temperatures", c.schedule.temperatures}};
    } else {
        j["schedule"] = {{"t_hi", c.schedule.t_hi},
                         {"t_lo", c.schedule.t_lo},
                         {"count", c.schedule.count},
                         {"spacing", c.schedule.log_spacing ? "log" : "linear"}};
    }
    j["sampling"] = {{"n_equil", c.sampling.n_equil},
                     {"n_samples", c.sampling.n_samples},
                     {"stride", c.sampling.stride},
                     {"histogram_bins", c.sampling.histogram_bins}};
    j["anneal"] = c.anneal;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["jobs"] = c.jobs;
    return j;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw SpecError(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::string config_hash(const RunConfig& c) {
    nlohmann::json j = config_to_json(c);
    j.erase("output_dir");  // the hash identifies the computation, not its location
    j.erase("jobs");
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(j.dump()));
    return buf;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint32_t crc32_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("missing file: " + path.string());
    uLong crc = crc32(0, nullptr, 0);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                    static_cast<uInt>(in.gcount()));
    }
    return static_cast<std::uint32_t>(crc);
}

void update_manifest(const fs::path& run_dir, const std::string& cfg_hash,
                     const std::string& stage, double elapsed_seconds,
                     const std::vector<fs::path>& files) {
    const fs::path manifest_path = run_dir / "manifest.json";
    nlohmann::json m;
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        in >> m;
    }
    m["tool"] = "morphofilter";
    m["version"] = "0.1.0";
    m["config_hash"] = cfg_hash;
    m["timings"][stage] = elapsed_seconds;

    std::map<std::string, nlohmann::json> inventory;
    if (m.contains("files"))
        for (const auto& f : m.at("files")) inventory[f.at("path")] = f;
    for (const auto& f : files) {
        const fs::path full = run_dir / f;
        nlohmann::json entry;
        entry["path"] = f.generic_string();
        entry["bytes"] = static_cast<std::uint64_t>(fs::file_size(full));
        char buf[9];
        std::snprintf(buf, sizeof(buf), "%08x", crc32_file(full));
        entry["crc32"] = buf;
        inventory[f.generic_string()] = entry;
    }
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [path, entry] : inventory) list.push_back(entry);
    m["files"] = list;
    write_text_file(manifest_path, m.dump(2) + "\n");
}

// --- CSV helpers -------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.empty()) throw SpecError("csv: empty file " + path.string());
    return rows;
}

std::string temp_dir_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "T_%02zu", index);
    return buf;
}

}  // namespace

// --- optimize ----------------------------------------------------------------

std::vector<fs::path> save_optimize(const fs::path& run_dir, const ProblemSpec& spec,
                                    const OptimizationResult& result) {
    std::vector<fs::path> files;
    const fs::path dir = run_dir / "optimize";
    fs::create_directories(dir);

    // Grid CSV, top row first.
    std::ostringstream grid;
    for (int ey = spec.nely - 1; ey >= 0; --ey) {
        for (int ex = 0; ex < spec.nelx; ++ex) {
            if (ex) grid << ',';
            grid << format_double(result.x_star[spec.element_index(ex, ey)]);
        }
        grid << '\n';
    }
    write_text_file(dir / "x_star.csv", grid.str());
    files.emplace_back("optimize/x_star.csv");

    const Image img = render_density(result.x_star, spec.nelx, spec.nely);
    write_ppm(img, (dir / "x_star.ppm").string());
    write_png(img, (dir / "x_star.png").string());
    files.emplace_back("optimize/x_star.ppm");
    files.emplace_back("optimize/x_star.png");

    nlohmann::json j;
    j["c_min"] = result.c_min;
    j["iterations"] = result.iterations;
    j["converged"] = result.converged;
    j["non_monotone_steps"] = result.non_monotone_steps;
    j["problem_hash"] = spec_hash(spec);
    write_text_file(dir / "summary.json", j.dump(2) + "\n");
    files.emplace_back("optimize/summary.json");
    return files;
}

bool has_optimize(const fs::path& run_dir) {
    return fs::exists(run_dir / "optimize" / "summary.json");
}

OptimizationResult load_optimize(const fs::path& run_dir, const ProblemSpec& spec) {
    const fs::path dir = run_dir / "optimize";
    if (!has_optimize(run_dir))
        throw MissingArtifactError("missing optimize stage (expected " +
                                   (dir / "summary.json").string() +
                                   "); run the optimize command first");
    nlohmann::json j = nlohmann::json::parse(read_text_file(dir / "summary.json"));
    if (j.at("problem_hash").get<std::string>() != spec_hash(spec))
        throw SpecError("optimize artifacts were produced for a different problem");

    OptimizationResult result;
    result.c_min = j.at("c_min").get<double>();
    result.iterations = j.at("iterations").get<int>();
    result.converged = j.at("converged").get<bool>();

    const auto rows = read_csv(dir / "x_star.csv");
    if (static_cast<int>(rows.size()) != spec.nely)
        throw SpecError("x_star.csv: row count mismatch");
    result.x_star.resize(spec.num_elements());
    for (int r = 0; r < spec.nely; ++r) {
        if (static_cast<int>(rows[r].size()) != spec.nelx)
            throw SpecError("x_star.csv: column count mismatch");
        const int ey = spec.nely - 1 - r;
        for (int ex = 0; ex < spec.nelx; ++ex)
            result.x_star[spec.element_index(ex, ey)] = std::stod(rows[r][ex]);
    }
    return result;
}

// --- reference ----------------------------------------------------------------

namespace {

std::string sites_csv(const ProblemSpec& spec, const Eigen::VectorXd& values,
                      const std::string& column) {
    std::ostringstream out;
    out << "site,ex,ey," << column << '\n';
    for (int e = 0; e < spec.num_elements(); ++e) {
        const int ex = e / spec.nely, ey = e % spec.nely;
        out << e << ',' << ex << ',' << ey << ',' << format_double(values[e]) << '\n';
    }
    return out.str();
}

Eigen::VectorXd read_site_column(const fs::path& path, int n_expected) {
    const auto rows = read_csv(path);
    if (static_cast<int>(rows.size()) != n_expected + 1)
        throw SpecError("site csv: row count mismatch in " + path.string());
    Eigen::VectorXd v(n_expected);
    for (int i = 0; i < n_expected; ++i) {
        const auto& row = rows[i + 1];
        v[std::stoi(row[0])] = std::stod(row.back());
    }
    return v;
}

std::string histograms_csv(const Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>& hist) {
    std::ostringstream out;
    out << "site";
    for (int b = 0; b < hist.cols(); ++b) out << ",b" << b;
    out << '\n';
    for (int e = 0; e < hist.rows(); ++e) {
        out << e;
        for (int b = 0; b < hist.cols(); ++b) out << ',' << hist(e, b);
        out << '\n';
    }
    return out.str();
}

Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> read_histograms(const fs::path& path) {
    const auto rows = read_csv(path);
    const int n = static_cast<int>(rows.size()) - 1;
    const int bins = static_cast<int>(rows[0].size()) - 1;
    Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> hist(n, bins);
    for (int i = 0; i < n; ++i) {
        const auto& row = rows[i + 1];
        const int site = std::stoi(row[0]);
        for (int b = 0; b < bins; ++b) hist(site, b) = std::stol(row[b + 1]);
    }
    return hist;
}

nlohmann::json bin_edges_json(int bins) {
    nlohmann::json edges = nlohmann::json::array();
    for (int b = 0; b <= bins; ++b) edges.push_back(static_cast<double>(b) / bins);
    return edges;
}

}  // namespace

std::vector<fs::path> save_reference(const fs::path& run_dir, const ProblemSpec& spec,
                                     const EnsembleStats& stats,
                                     const Eigen::VectorXd& s_max) {
    std::vector<fs::path> files;
    const fs::path dir = run_dir / "reference";
    fs::create_directories(dir);

    write_text_file(dir / "s_max.csv", sites_csv(spec, s_max, "s_max"));
    files.emplace_back("reference/s_max.csv");
    write_text_file(dir / "histograms.csv", histograms_csv(stats.histograms));
    files.emplace_back("reference/histograms.csv");

    nlohmann::json j;
    j["n_samples"] = stats.n_samples;
    j["seed"] = stats.seed;
    j["histogram_bins"] = static_cast<int>(stats.histograms.cols());
    j["bin_edges"] = bin_edges_json(static_cast<int>(stats.histograms.cols()));
    j["problem_hash"] = spec_hash(spec);
    write_text_file(dir / "summary.json", j.dump(2) + "\n");
    files.emplace_back("reference/summary.json");
    return files;
}

bool has_reference(const fs::path& run_dir) {
    return fs::exists(run_dir / "reference" / "s_max.csv");
}

Eigen::VectorXd load_reference(const fs::path& run_dir) {
    if (!has_reference(run_dir))
        throw MissingArtifactError(
            "missing zero-force reference (expected " +
            (run_dir / "reference" / "s_max.csv").string() +
            "); run the reference-entropy command first");
    nlohmann::json j = nlohmann::json::parse(
        read_text_file(run_dir / "reference" / "summary.json"));
    const auto rows = read_csv(run_dir / "reference" / "s_max.csv");
    Eigen::VectorXd s(rows.size() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i)
        s[std::stoi(rows[i][0])] = std::stod(rows[i].back());
    return s;
}

// --- sweep ---------------------------------------------------------------------

std::vector<fs::path> save_sweep(const fs::path& run_dir, const ProblemSpec& spec,
                                 const SweepSeries& series) {
    std::vector<fs::path> files;
    const fs::path dir = run_dir / "sweep";
    fs::create_directories(dir);

    nlohmann::json idx;
    idx["master_seed"] = series.master_seed;
    idx["problem_hash"] = series.problem_hash;
    idx["annealed"] = series.annealed;
    idx["c_min_reference"] = series.c_min_reference;
    nlohmann::json entries = nlohmann::json::array();

    for (std::size_t i = 0; i < series.entries.size(); ++i) {
        const SweepEntry& entry = series.entries[i];
        nlohmann::json e;
        e["index"] = i;
        e["temperature"] = entry.temperature;
        e["seed"] = entry.seed;
        e["failed"] = entry.failed;
        if (entry.failed) {
            e["error"] = entry.error;
            entries.push_back(e);
            continue;
        }
        const EnsembleStats& st = entry.stats;
        e["mean_compliance"] = st.mean_compliance;
        e["compliance_second_moment"] = st.compliance_second_moment;
        e["mean_pressure"] = st.mean_pressure;
        e["n_samples"] = st.n_samples;
        e["std_error"] = st.compliance_std_error;
        e["equilibrated"] = st.equilibrated;
        e["first_half_mean"] = st.first_half_mean;
        e["second_half_mean"] = st.second_half_mean;
        if (series.c_min_reference > 0.0)
            e["compliance_ratio"] = st.mean_compliance / series.c_min_reference;
        entries.push_back(e);

        const fs::path tdir = dir / temp_dir_name(i);
        fs::create_directories(tdir);
        write_text_file(tdir / "sites.csv", sites_csv(spec, st.mean_density, "mean_density"));
        files.emplace_back(fs::path("sweep") / temp_dir_name(i) / "sites.csv");
        write_text_file(tdir / "histograms.csv", histograms_csv(st.histograms));
        files.emplace_back(fs::path("sweep") / temp_dir_name(i) / "histograms.csv");

        nlohmann::json sj = e;
        sj["bin_edges"] = bin_edges_json(static_cast<int>(st.histograms.cols()));
        write_text_file(tdir / "summary.json", sj.dump(2) + "\n");
        files.emplace_back(fs::path("sweep") / temp_dir_name(i) / "summary.json");
    }
    idx["entries"] = entries;
    write_text_file(dir / "series.json", idx.dump(2) + "\n");
    files.emplace_back("sweep/series.json");
    return files;
}

bool has_sweep(const fs::path& run_dir) {
    return fs::exists(run_dir / "sweep" / "series.json");
}

SweepSeries load_sweep(const fs::path& run_dir) {
    if (!has_sweep(run_dir))
        throw MissingArtifactError("missing sweep stage (expected " +
                                   (run_dir / "sweep" / "series.json").string() +
                                   "); run the sweep command first");
    nlohmann::json idx =
        nlohmann::json::parse(read_text_file(run_dir / "sweep" / "series.json"));
    SweepSeries series;
    series.master_seed = idx.at("master_seed").get<std::uint64_t>();
    series.problem_hash = idx.at("problem_hash").get<std::string>();
    series.annealed = idx.at("annealed").get<bool>();
    series.c_min_reference = idx.at("c_min_reference").get<double>();

    for (const auto& e : idx.at("entries")) {
        SweepEntry entry;
        entry.temperature = e.at("temperature").get<double>();
        entry.seed = e.at("seed").get<std::uint64_t>();
        entry.failed = e.at("failed").get<bool>();
        if (entry.failed) {
            entry.error = e.value("error", "");
            series.entries.push_back(std::move(entry));
            continue;
        }
        EnsembleStats& st = entry.stats;
        st.temperature = entry.temperature;
        st.seed = entry.seed;
        st.mean_compliance = e.at("mean_compliance").get<double>();
        st.compliance_second_moment = e.at("compliance_second_moment").get<double>();
        st.mean_pressure = e.at("mean_pressure").get<double>();
        st.n_samples = e.at("n_samples").get<long>();
        st.compliance_std_error = e.at("std_error").get<double>();
        st.equilibrated = e.at("equilibrated").get<bool>();
        st.first_half_mean = e.at("first_half_mean").get<double>();
        st.second_half_mean = e.at("second_half_mean").get<double>();
        st.c_min_reference = series.c_min_reference;

        const std::size_t i = e.at("index").get<std::size_t>();
        const fs::path tdir = run_dir / "sweep" / temp_dir_name(i);
        st.histograms = read_histograms(tdir / "histograms.csv");
        st.mean_density =
            read_site_column(tdir / "sites.csv", static_cast<int>(st.histograms.rows()));
        series.entries.push_back(std::move(entry));
    }
    return series;
}

}  // namespace morphofilter
