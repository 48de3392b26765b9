#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "retinex/image_io.hpp"
#include "retinex/solver.hpp"
#include "retinex/trace.hpp"

namespace retinex::cli {

namespace fs = std::filesystem;

/// Bad flag, bad config key/value or unusable weights; nothing has been processed.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class JobMode { enhance, dehaze };

struct EmitFlags {
    bool images = true;
    bool components = false;  // <stem>_I, <stem>_R
    bool trace = false;       // <stem>_trace.jsonl
};

struct JobSpec {
    JobMode mode = JobMode::enhance;
    std::vector<fs::path> inputs;
    fs::path output_dir;
    std::optional<fs::path> weights_path;
    std::optional<double> blur_sigma;  // use the Gaussian-blur direction instead of a network
    EmitFlags emit;
    SolverConfig config;
    int jobs = 1;
};

inline constexpr const char* weights_env_var = "HPP_WEIGHTS";

// ---------------------------------------------------------------- key=value config

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    }
}

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not an integer");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean");
}

}  // namespace detail

/// Sets one SolverConfig field by its name. Unknown keys are errors.
inline void apply_config_value(SolverConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "mu_I") cfg.mu_I = parse_double(key, value);
    else if (key == "lambda_I0") cfg.lambda_I0 = parse_double(key, value);
    else if (key == "lambda_growth") cfg.lambda_growth = parse_double(key, value);
    else if (key == "mu_R") cfg.mu_R = parse_double(key, value);
    else if (key == "lambda_R0") cfg.lambda_R0 = parse_double(key, value);
    else if (key == "theta") cfg.theta = parse_double(key, value);
    else if (key == "eta") cfg.eta = parse_double(key, value);
    else if (key == "gamma") cfg.gamma = parse_double(key, value);
    else if (key == "t_max") cfg.t_max = parse_int(key, value);
    else if (key == "step_R") cfg.step_R = parse_double(key, value);
    else if (key == "backtrack_factor") cfg.backtrack_factor = parse_double(key, value);
    else if (key == "max_backtracks") cfg.max_backtracks = parse_int(key, value);
    else if (key == "eps_div") cfg.eps_div = parse_double(key, value);
    else if (key == "cg_tol") cfg.cg_tol = parse_double(key, value);
    else if (key == "cg_max_iter") cfg.cg_max_iter = parse_int(key, value);
    else if (key == "adjust_illumination") cfg.adjust_illumination = parse_bool(key, value);
    else if (key == "prior_mode") {
        const auto mode = parse_prior_mode(value);
        if (!mode) throw ConfigError("config key 'prior_mode': unknown mode '" + value + "'");
        cfg.prior_mode = *mode;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// Flat key=value text; '#' starts a comment.
inline void apply_config_text(SolverConfig& cfg, std::istream& in, const std::string& source) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
        }
        apply_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
}

inline void apply_config_file(SolverConfig& cfg, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    apply_config_text(cfg, in, path.string());
}

inline std::string format_config(const SolverConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "mu_I=" << cfg.mu_I << "\nlambda_I0=" << cfg.lambda_I0
        << "\nlambda_growth=" << cfg.lambda_growth << "\nmu_R=" << cfg.mu_R
        << "\nlambda_R0=" << cfg.lambda_R0 << "\ntheta=" << cfg.theta << "\neta=" << cfg.eta
        << "\ngamma=" << cfg.gamma << "\nt_max=" << cfg.t_max << "\nstep_R=" << cfg.step_R
        << "\nbacktrack_factor=" << cfg.backtrack_factor
        << "\nmax_backtracks=" << cfg.max_backtracks << "\neps_div=" << cfg.eps_div
        << "\ncg_tol=" << cfg.cg_tol << "\ncg_max_iter=" << cfg.cg_max_iter
        << "\nprior_mode=" << to_string(cfg.prior_mode)
        << "\nadjust_illumination=" << (cfg.adjust_illumination ? "true" : "false") << '\n';
    return out.str();
}

// ---------------------------------------------------------------- command line

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

/// Outcome of parsing: a job, or an early exit (help/version text).
struct ParseResult {
    std::optional<JobSpec> job;
    int exit_code = 0;
    std::string message;
};

/**
 * Precedence: flags override config-file values, which override defaults.
 * Throws ConfigError on unknown flags/keys or out-of-range values.
 */
inline ParseResult parse_config(std::vector<std::string> args, const EnvLookup& env = process_env) {
    CLI::App app{"Low-light enhancement and dehazing by Retinex decomposition with hybrid priors",
                 "retinex"};
    app.set_help_flag("-h,--help", "Print this help message and exit");

    std::string mode = "enhance";
    std::vector<std::string> inputs;
    std::string output_dir;
    std::string weights;
    std::string config_file;
    std::string prior_mode;
    double blur_sigma = 0.0;
    int jobs = 1;

    SolverConfig flags;  // receives flag values; only options that were given are applied
    app.add_option("--mode", mode, "enhance | dehaze")->check(CLI::IsMember({"enhance", "dehaze"}));
    app.add_option("--input", inputs, "Input image(s) or a directory (PNG or PPM)")->required();
    app.add_option("--output-dir", output_dir, "Directory for results")->required();
    app.add_option("--weights", weights, "HPW1 weight file (fallback: $HPP_WEIGHTS)");
    app.add_option("--config", config_file, "key=value config file");
    auto* o_gamma = app.add_option("--gamma", flags.gamma, "Illumination gamma");
    auto* o_tmax = app.add_option("--t-max", flags.t_max, "Propagation stages");
    auto* o_muI = app.add_option("--mu-I", flags.mu_I, "Illumination smoothness weight");
    auto* o_muR = app.add_option("--mu-R", flags.mu_R, "Reflectance potential weight");
    auto* o_lI = app.add_option("--lambda-I0", flags.lambda_I0, "Initial illumination coupling");
    auto* o_lR = app.add_option("--lambda-R0", flags.lambda_R0, "Initial reflectance coupling");
    auto* o_lg = app.add_option("--lambda-growth", flags.lambda_growth, "Coupling growth per stage");
    auto* o_theta = app.add_option("--theta", flags.theta, "Log-potential sparsity");
    auto* o_eta = app.add_option("--eta", flags.eta, "Auxiliary reflectance weight");
    auto* o_eps = app.add_option("--eps-div", flags.eps_div, "Division guard");
    auto* o_step = app.add_option("--step-R", flags.step_R, "Initial reflectance step size");
    auto* o_cgtol = app.add_option("--cg-tol", flags.cg_tol, "CG relative residual tolerance");
    auto* o_cgit = app.add_option("--cg-max-iter", flags.cg_max_iter, "CG iteration cap");
    auto* o_mode = app.add_option("--prior-mode", prior_mode, "hybrid | knowledge | data");
    auto* o_noadj = app.add_flag("--no-illumination-adjust", "Emit R*I instead of the gamma-adjusted result");
    auto* o_comp = app.add_flag("--emit-components", "Also write <stem>_I and <stem>_R");
    auto* o_trace = app.add_flag("--emit-trace", "Also write <stem>_trace.jsonl");
    auto* o_blur = app.add_option("--blur-sigma", blur_sigma,
                                  "Use a Gaussian-blur descent direction instead of the network");
    app.add_option("--jobs", jobs, "Images processed concurrently")->check(CLI::PositiveNumber);

    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        return {std::nullopt, 0, app.help()};
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }

    JobSpec spec;
    spec.mode = mode == "dehaze" ? JobMode::dehaze : JobMode::enhance;
    for (const auto& in : inputs) spec.inputs.emplace_back(in);
    spec.output_dir = output_dir;
    spec.jobs = jobs;

    SolverConfig& cfg = spec.config;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    if (o_gamma->count()) cfg.gamma = flags.gamma;
    if (o_tmax->count()) cfg.t_max = flags.t_max;
    if (o_muI->count()) cfg.mu_I = flags.mu_I;
    if (o_muR->count()) cfg.mu_R = flags.mu_R;
    if (o_lI->count()) cfg.lambda_I0 = flags.lambda_I0;
    if (o_lR->count()) cfg.lambda_R0 = flags.lambda_R0;
    if (o_lg->count()) cfg.lambda_growth = flags.lambda_growth;
    if (o_theta->count()) cfg.theta = flags.theta;
    if (o_eta->count()) cfg.eta = flags.eta;
    if (o_eps->count()) cfg.eps_div = flags.eps_div;
    if (o_step->count()) cfg.step_R = flags.step_R;
    if (o_cgtol->count()) cfg.cg_tol = flags.cg_tol;
    if (o_cgit->count()) cfg.cg_max_iter = flags.cg_max_iter;
    if (o_mode->count()) apply_config_value(cfg, "prior_mode", prior_mode);
    if (o_noadj->count()) cfg.adjust_illumination = false;
    spec.emit.components = o_comp->count() > 0;
    spec.emit.trace = o_trace->count() > 0;
    if (o_blur->count()) {
        if (!(blur_sigma > 0.0)) throw ConfigError("--blur-sigma must be positive");
        spec.blur_sigma = blur_sigma;
    }

    try {
        cfg.validate();
    } catch (const InvariantError& e) {
        throw ConfigError(e.what());
    }

    if (!weights.empty()) {
        spec.weights_path = weights;
    } else if (auto from_env = env(weights_env_var); from_env && !from_env->empty()) {
        spec.weights_path = *from_env;
    }
    return {std::move(spec), 0, {}};
}

inline ParseResult parse_config(int argc, const char* const* argv, const EnvLookup& env = process_env) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return parse_config(std::move(args), env);
}

// ---------------------------------------------------------------- job execution

inline bool requires_network(const JobSpec& spec) {
    return spec.config.prior_mode != PriorMode::knowledge_only && !spec.blur_sigma;
}

/// Picks the descent direction, loading the network weights when the prior needs them.
inline DescentDirection resolve_direction(const JobSpec& spec) {
    if (spec.config.prior_mode == PriorMode::knowledge_only) return IdentityDirection{};
    if (spec.blur_sigma) return GaussianBlurDirection{*spec.blur_sigma};
    if (!spec.weights_path) {
        throw ConfigError(std::string("prior mode '") + to_string(spec.config.prior_mode) +
                          "' needs network weights: pass --weights, set " + weights_env_var +
                          ", or use --blur-sigma");
    }
    try {
        return NetworkDirection(load_weights(*spec.weights_path));
    } catch (const Error& e) {
        throw ConfigError(std::string("weights: ") + e.what());
    }
}

inline bool is_image_path(const fs::path& p) {
    const auto ext = retinex::detail::lower_extension(p);
    return ext == ".png" || ext == ".ppm";
}

/// Directories expand to their PNG/PPM files in name order; files are kept as given.
inline std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        std::error_code ec;
        if (fs::is_directory(in, ec)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(in)) {
                if (entry.is_regular_file() && is_image_path(entry.path())) found.push_back(entry.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(in);
        }
    }
    return out;
}

inline bool same_location(const fs::path& a, const fs::path& b) {
    std::error_code ec;
    return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

inline void validate_job(const JobSpec& spec) {
    if (spec.inputs.empty()) throw ConfigError("at least one --input is required");
    if (spec.output_dir.empty()) throw ConfigError("--output-dir is required");
    for (const auto& in : spec.inputs) {
        if (same_location(in, spec.output_dir)) {
            throw ConfigError("output directory '" + spec.output_dir.string() +
                              "' coincides with input '" + in.string() + "'");
        }
    }
    if (spec.jobs < 1) throw ConfigError("--jobs must be >= 1");
}

struct ImageResult {
    fs::path input;
    bool ok = false;
    std::string error;
    std::vector<fs::path> outputs;
    double wall_time = 0.0;
    EnergyTerms final_energy;
    int stages = 0;
};

struct JobSummary {
    std::vector<ImageResult> images;

    std::size_t failures() const {
        return static_cast<std::size_t>(std::count_if(images.begin(), images.end(),
                                                      [](const ImageResult& r) { return !r.ok; }));
    }
    int exit_code() const { return failures() == 0 ? 0 : 1; }
};

inline ColorImage gray_image(const ImagePlane& p) { return ColorImage::from_gray(p); }

inline ImageResult process_image(const fs::path& input, const JobSpec& spec,
                                 const DescentDirection& direction) {
    ImageResult result;
    result.input = input;
    try {
        const ColorImage img = load_image(input);
        EnhanceReport report = spec.mode == JobMode::dehaze ? dehaze(img, spec.config, direction)
                                                            : enhance_color(img, spec.config, direction);
        std::string ext = retinex::detail::lower_extension(input);
        if (ext != ".png" && ext != ".ppm") ext = ".png";
        const std::string stem = input.stem().string();
        auto target = [&](const std::string& suffix, const std::string& extension) {
            fs::path p = spec.output_dir / (stem + suffix + extension);
            if (same_location(p, input)) throw IoError("refusing to overwrite input '" + input.string() + "'");
            result.outputs.push_back(p);
            return p;
        };
        if (spec.emit.images) save_image(*report.color, target("_enhanced", ext));
        if (spec.emit.components) {
            save_image(gray_image(report.illumination), target("_I", ext));
            save_image(gray_image(report.reflectance), target("_R", ext));
        }
        if (spec.emit.trace) write_trace(target("_trace", ".jsonl"), report.trace);
        result.wall_time = report.wall_time;
        if (!report.trace.empty()) result.final_energy = report.trace.back().energy;
        result.stages = static_cast<int>(report.trace.size());
        result.ok = true;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
    return result;
}

/// Processes every input; per-image failures are recorded and skipped.
/// Result order follows input order regardless of completion order.
inline JobSummary run_job(const JobSpec& spec) {
    validate_job(spec);
    const DescentDirection direction = resolve_direction(spec);
    const std::vector<fs::path> inputs = expand_inputs(spec.inputs);
    if (inputs.empty()) throw ConfigError("no PNG/PPM inputs found");

    std::error_code ec;
    fs::create_directories(spec.output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + spec.output_dir.string() + "': " + ec.message());

    JobSummary summary;
    summary.images.resize(inputs.size());
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), inputs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < inputs.size(); ++i) summary.images[i] = process_image(inputs[i], spec, direction);
        return summary;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < inputs.size(); i = next++) {
                summary.images[i] = process_image(inputs[i], spec, direction);
            }
        });
    }
    for (auto& t : pool) t.join();
    return summary;
}

inline nlohmann::ordered_json to_json(const JobSummary& summary) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : summary.images) {
        nlohmann::ordered_json e;
        e["input"] = r.input.string();
        e["ok"] = r.ok;
        if (!r.ok) e["error"] = r.error;
        e["wall_time"] = r.wall_time;
        e["stages"] = r.stages;
        e["fidelity"] = r.final_energy.fidelity;
        e["smoothness"] = r.final_energy.smoothness;
        e["potential"] = r.final_energy.potential;
        e["energy"] = r.final_energy.total();
        nlohmann::ordered_json outs = nlohmann::ordered_json::array();
        for (const auto& p : r.outputs) outs.push_back(p.string());
        e["outputs"] = outs;
        j.push_back(e);
    }
    return j;
}

}  // namespace retinex::cli
