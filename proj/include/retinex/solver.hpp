#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "retinex/color.hpp"
#include "retinex/denoiser.hpp"
#include "retinex/image.hpp"
#include "retinex/linsolve.hpp"
#include "retinex/operators.hpp"

namespace retinex {

/// Which halves of the hybrid prior are active.
///  - hybrid: smoothness + log potential + learned descent direction
///  - knowledge_only: explicit terms only; the descent direction is forced to identity
///  - data_only: learned direction only; mu_I and mu_R are treated as zero
enum class PriorMode { hybrid, knowledge_only, data_only };

inline const char* to_string(PriorMode m) noexcept {
    switch (m) {
        case PriorMode::hybrid: return "hybrid";
        case PriorMode::knowledge_only: return "knowledge";
        case PriorMode::data_only: return "data";
    }
    return "?";
}

inline std::optional<PriorMode> parse_prior_mode(const std::string& s) {
    if (s == "hybrid") return PriorMode::hybrid;
    if (s == "knowledge" || s == "knowledge_only") return PriorMode::knowledge_only;
    if (s == "data" || s == "data_only") return PriorMode::data_only;
    return std::nullopt;
}

struct SolverConfig {
    double mu_I = 8.0;           // illumination smoothness weight
    double lambda_I0 = 1.0;      // illumination coupling, lambda_I(t) = lambda_I0 * growth^t
    double lambda_growth = 2.0;
    double mu_R = 0.5;           // reflectance log-potential weight
    double lambda_R0 = 1.0;      // reflectance coupling, same growth rule
    double theta = 10.0;         // log-potential sparsity control
    double eta = 1.0;            // weight of O / I~ in the auxiliary reflectance
    double gamma = 2.2;
    int t_max = 4;
    double step_R = 1.0;
    double backtrack_factor = 0.5;
    int max_backtracks = 20;
    double eps_div = 1e-4;       // denominators are max(x, eps_div)
    double cg_tol = 1e-6;
    int cg_max_iter = 500;
    PriorMode prior_mode = PriorMode::hybrid;
    bool adjust_illumination = true;

    void validate() const {
        auto fail = [](const std::string& msg) { throw InvariantError("SolverConfig: " + msg); };
        if (!(gamma > 0.0)) fail("gamma must be > 0");
        if (t_max < 1) fail("t_max must be >= 1");
        if (!(eps_div > 0.0)) fail("eps_div must be > 0");
        if (!(mu_I >= 0.0) || !(mu_R >= 0.0)) fail("trade-off weights must be >= 0");
        if (!(lambda_I0 > 0.0) || !(lambda_R0 > 0.0)) fail("lambda_I0 and lambda_R0 must be > 0");
        if (!(lambda_growth >= 1.0) || !std::isfinite(lambda_growth)) fail("lambda_growth must be >= 1");
        if (!(theta > 0.0)) fail("theta must be > 0");
        if (!(eta > 0.0) || !std::isfinite(eta)) fail("eta must be > 0");
        if (!(step_R > 0.0)) fail("step_R must be > 0");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) fail("backtrack_factor must be in (0,1)");
        if (max_backtracks < 0) fail("max_backtracks must be >= 0");
        if (!(cg_tol > 0.0)) fail("cg_tol must be > 0");
        if (cg_max_iter < 1) fail("cg_max_iter must be >= 1");
    }

    double lambda_I(int t) const { return lambda_I0 * std::pow(lambda_growth, t); }
    double lambda_R(int t) const { return lambda_R0 * std::pow(lambda_growth, t); }
    double effective_mu_I() const { return prior_mode == PriorMode::data_only ? 0.0 : mu_I; }
    double effective_mu_R() const { return prior_mode == PriorMode::data_only ? 0.0 : mu_R; }
    CgPolicy cg_policy() const { return {cg_tol, cg_max_iter}; }
};

struct EnergyTerms {
    double fidelity = 0.0;    // 0.5 ||R*I - O||^2
    double smoothness = 0.0;  // (mu_I/2) ||grad I||^2
    double potential = 0.0;   // (mu_R/2) sum log(1 + theta (grad R)^2)
    double total() const noexcept { return fidelity + smoothness + potential; }
};

/// One record per propagation stage.
struct StageRecord {
    int stage = 0;
    EnergyTerms energy;
    double lambda_I = 0.0;
    double lambda_R = 0.0;
    int cg_iterations = 0;
    double cg_residual = 0.0;
    int backtracks = 0;
    bool step_accepted = true;
    double g_before = 0.0;
    double g_after = 0.0;

    friend bool operator==(const StageRecord& a, const StageRecord& b) {
        return a.stage == b.stage && a.energy.fidelity == b.energy.fidelity &&
               a.energy.smoothness == b.energy.smoothness && a.energy.potential == b.energy.potential &&
               a.lambda_I == b.lambda_I && a.lambda_R == b.lambda_R &&
               a.cg_iterations == b.cg_iterations && a.cg_residual == b.cg_residual &&
               a.backtracks == b.backtracks && a.step_accepted == b.step_accepted &&
               a.g_before == b.g_before && a.g_after == b.g_after;
    }
};

struct PropagationState {
    ImagePlane I;
    ImagePlane R;
    ImagePlane I_tilde;
    ImagePlane R_tilde;
    int t = 0;
    std::vector<StageRecord> trace;

    /// I = O, R = 0.
    static PropagationState initial(const ImagePlane& observed) {
        PropagationState s;
        s.I = observed;
        s.R = ImagePlane(observed.height(), observed.width(), 0.0);
        s.I_tilde = observed;
        s.R_tilde = ImagePlane(observed.height(), observed.width(), 0.0);
        return s;
    }
};

struct EnhanceReport {
    ImagePlane enhanced;       // single-plane output (the V channel at pipeline level)
    ImagePlane illumination;
    ImagePlane reflectance;
    std::vector<StageRecord> trace;
    double wall_time = 0.0;    // seconds
    std::optional<ColorImage> color;  // set by enhance_color / dehaze
    ImagePlane hue;                   // pipeline-level pass-through planes
    ImagePlane saturation;
};

/// A propagation stage failed; carries the records of the stages that completed.
class StageError : public Error {
public:
    StageError(const std::string& what, std::vector<StageRecord> partial)
        : Error(what), partial_(std::move(partial)) {}
    const std::vector<StageRecord>& partial_trace() const noexcept { return partial_; }

private:
    std::vector<StageRecord> partial_;
};

namespace detail {

inline double guarded(double denominator, double eps) noexcept {
    return denominator > eps ? denominator : eps;
}

inline double potential_value(const ImagePlane& R, double mu_R, double theta) {
    if (mu_R == 0.0) return 0.0;
    return 0.5 * mu_R * log_potential(grad(R), theta);
}

}  // namespace detail

/// Explicit part of the energy; the implicit data terms have no closed form.
inline EnergyTerms energy_terms(const ImagePlane& I, const ImagePlane& R, const ImagePlane& O,
                                const SolverConfig& cfg) {
    require_same_shape(I, O, "energy");
    require_same_shape(R, O, "energy");
    EnergyTerms e;
    double fid = 0.0;
    for (std::size_t i = 0; i < O.size(); ++i) {
        const double d = R[i] * I[i] - O[i];
        fid += d * d;
    }
    e.fidelity = 0.5 * fid;
    const double mu_I = cfg.effective_mu_I();
    if (mu_I != 0.0) {
        const auto g = grad(I);
        e.smoothness = 0.5 * mu_I * (squared_norm(g.dx) + squared_norm(g.dy));
    }
    e.potential = detail::potential_value(R, cfg.effective_mu_R(), cfg.theta);
    return e;
}

inline double energy(const ImagePlane& I, const ImagePlane& R, const ImagePlane& O,
                     const SolverConfig& cfg) {
    return energy_terms(I, R, O, cfg).total();
}

/// g(R) = 0.5||R*I - O||^2 + (lambda_R/2)||R~ - R||^2 + (mu_R/2) sum log(1 + theta (grad R)^2)
inline double reflectance_objective(const ImagePlane& R, const ImagePlane& I,
                                    const ImagePlane& R_tilde, const ImagePlane& O,
                                    double lambda_R, const SolverConfig& cfg) {
    double fid = 0.0, coupling = 0.0;
    for (std::size_t i = 0; i < O.size(); ++i) {
        const double d = R[i] * I[i] - O[i];
        fid += d * d;
        const double c = R_tilde[i] - R[i];
        coupling += c * c;
    }
    return 0.5 * fid + 0.5 * lambda_R * coupling +
           detail::potential_value(R, cfg.effective_mu_R(), cfg.theta);
}

inline ImagePlane reflectance_objective_grad(const ImagePlane& R, const ImagePlane& I,
                                             const ImagePlane& R_tilde, const ImagePlane& O,
                                             double lambda_R, const SolverConfig& cfg) {
    ImagePlane G(O.height(), O.width());
    for (std::size_t i = 0; i < O.size(); ++i) {
        G[i] = I[i] * (R[i] * I[i] - O[i]) + lambda_R * (R[i] - R_tilde[i]);
    }
    const double mu_R = cfg.effective_mu_R();
    if (mu_R != 0.0) {
        const ImagePlane pg = log_potential_grad(R, cfg.theta);
        for (std::size_t i = 0; i < G.size(); ++i) G[i] += 0.5 * mu_R * pg[i];
    }
    return G;
}

/// I~ = I - N(I). knowledge_only mode never evaluates the direction.
inline ImagePlane step_I_tilde(const PropagationState& state, const SolverConfig& cfg,
                               const DescentDirection& direction) {
    if (cfg.prior_mode == PriorMode::knowledge_only) {
        return apply_descent(IdentityDirection{}, state.I);
    }
    return apply_descent(direction, state.I);
}

struct IlluminationStep {
    ImagePlane I;
    int cg_iterations = 0;
    double cg_residual = 0.0;
};

/// Solves (lambda + 1 + mu grad^T grad) I = O / max(R, eps) + lambda I~ and
/// projects onto [0, O].
inline IlluminationStep step_I(const PropagationState& state, const ImagePlane& O,
                               const SolverConfig& cfg) {
    require_same_shape(state.R, O, "step_I");
    require_same_shape(state.I_tilde, O, "step_I");
    IlluminationSystem sys{ImagePlane(O.height(), O.width()), cfg.lambda_I(state.t),
                           cfg.effective_mu_I()};
    for (std::size_t i = 0; i < O.size(); ++i) {
        sys.rhs[i] = O[i] / detail::guarded(state.R[i], cfg.eps_div) + sys.lambda_I * state.I_tilde[i];
    }
    SolveResult solved = solve_illumination(sys, cfg.cg_policy());
    return {project_box(std::move(solved.solution), 0.0, O), solved.iterations,
            solved.relative_residual};
}

/// R~ = (eta * O / max(I~, eps) + R) / (eta + 1); not projected.
inline ImagePlane step_R_tilde(const PropagationState& state, const ImagePlane& O,
                               const SolverConfig& cfg) {
    require_same_shape(state.I_tilde, O, "step_R_tilde");
    ImagePlane out(O.height(), O.width());
    for (std::size_t i = 0; i < O.size(); ++i) {
        out[i] = (cfg.eta * (O[i] / detail::guarded(state.I_tilde[i], cfg.eps_div)) + state.R[i]) /
                 (cfg.eta + 1.0);
    }
    return out;
}

struct ReflectanceStep {
    ImagePlane R;
    int backtracks = 0;
    bool accepted = true;
    double g_before = 0.0;
    double g_after = 0.0;
};

/**
 * One projected-gradient step on g, R <- P_[0,1](R - alpha * grad g), with
 * alpha = step_R * factor^k for the smallest k whose candidate does not
 * increase g. If no k <= max_backtracks qualifies, R is kept.
 */
inline ReflectanceStep step_R(const PropagationState& state, const ImagePlane& O,
                              const SolverConfig& cfg) {
    const double lambda_R = cfg.lambda_R(state.t);
    const ImagePlane& R = state.R;
    const double g0 = reflectance_objective(R, state.I, state.R_tilde, O, lambda_R, cfg);
    const ImagePlane G = reflectance_objective_grad(R, state.I, state.R_tilde, O, lambda_R, cfg);

    ReflectanceStep step{R, 0, false, g0, g0};
    double alpha = cfg.step_R;
    for (int k = 0; k <= cfg.max_backtracks; ++k) {
        ImagePlane candidate(R.height(), R.width());
        for (std::size_t i = 0; i < R.size(); ++i) {
            candidate[i] = std::clamp(R[i] - alpha * G[i], 0.0, 1.0);
        }
        const double g1 = reflectance_objective(candidate, state.I, state.R_tilde, O, lambda_R, cfg);
        if (g1 <= g0) {
            step.R = std::move(candidate);
            step.backtracks = k;
            step.accepted = true;
            step.g_after = g1;
            return step;
        }
        alpha *= cfg.backtrack_factor;
    }
    step.backtracks = cfg.max_backtracks;
    return step;
}

/// O_e = clamp(R * I^(1/gamma), 0, 1).
inline ImagePlane gamma_adjust(const ImagePlane& R, const ImagePlane& I, double gamma) {
    require_same_shape(R, I, "gamma_adjust");
    if (!(gamma > 0.0)) throw InvariantError("gamma_adjust: gamma must be positive");
    const double exponent = 1.0 / gamma;
    ImagePlane out(R.height(), R.width());
    for (std::size_t i = 0; i < R.size(); ++i) {
        const double lit = gamma == 1.0 ? I[i] : std::pow(I[i], exponent);
        out[i] = std::clamp(R[i] * lit, 0.0, 1.0);
    }
    return out;
}

/// Runs the four updates of one stage (I~, I, R~, R) in place and appends a trace record.
inline void propagate_stage(PropagationState& state, const ImagePlane& O, const SolverConfig& cfg,
                            const DescentDirection& direction) {
    StageRecord rec;
    rec.stage = state.t;
    rec.lambda_I = cfg.lambda_I(state.t);
    rec.lambda_R = cfg.lambda_R(state.t);

    state.I_tilde = step_I_tilde(state, cfg, direction);
    IlluminationStep illum = step_I(state, O, cfg);
    state.I = std::move(illum.I);
    rec.cg_iterations = illum.cg_iterations;
    rec.cg_residual = illum.cg_residual;

    state.R_tilde = step_R_tilde(state, O, cfg);
    ReflectanceStep refl = step_R(state, O, cfg);
    state.R = std::move(refl.R);
    rec.backtracks = refl.backtracks;
    rec.step_accepted = refl.accepted;
    rec.g_before = refl.g_before;
    rec.g_after = refl.g_after;

    rec.energy = energy_terms(state.I, state.R, O, cfg);
    state.trace.push_back(rec);
    ++state.t;
}

/// Decomposes a single plane O in [0,1] into illumination and reflectance and
/// recomposes the enhanced output.
inline EnhanceReport run(const ImagePlane& O, const SolverConfig& cfg,
                         const DescentDirection& direction) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    validate_plane(O, true, "run: observed image");

    PropagationState state = PropagationState::initial(O);
    for (int t = 0; t < cfg.t_max; ++t) {
        try {
            propagate_stage(state, O, cfg, direction);
        } catch (const Error& e) {
            throw StageError("stage " + std::to_string(t) + ": " + e.what(), state.trace);
        }
    }

    EnhanceReport report;
    if (cfg.adjust_illumination) {
        report.enhanced = gamma_adjust(state.R, state.I, cfg.gamma);
    } else {
        report.enhanced = ImagePlane(O.height(), O.width());
        for (std::size_t i = 0; i < O.size(); ++i) report.enhanced[i] = state.R[i] * state.I[i];
    }
    report.illumination = std::move(state.I);
    report.reflectance = std::move(state.R);
    report.trace = std::move(state.trace);
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

/**
 * Enhances the V channel of the HSV representation and keeps H and S.
 *
 * Input and output are snapped to the 2^-53 lattice (see snap_to_lattice), so
 * dehaze() below is exactly the conjugate of this function by 1 - x.
 */
inline EnhanceReport enhance_color(const ColorImage& img, const SolverConfig& cfg,
                                   const DescentDirection& direction) {
    const auto start = std::chrono::steady_clock::now();
    validate_image(img, "enhance_color");
    HsvPlanes hsv = rgb_to_hsv(snap_to_lattice(img));
    EnhanceReport report = run(hsv.value, cfg, direction);
    report.color = snap_to_lattice(hsv_to_rgb(hsv.hue, hsv.saturation, report.enhanced));
    report.hue = std::move(hsv.hue);
    report.saturation = std::move(hsv.saturation);
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

/// J = 1 - enhance(1 - img). The planes in the report describe the inverted image.
inline EnhanceReport dehaze(const ColorImage& img, const SolverConfig& cfg,
                            const DescentDirection& direction) {
    const auto start = std::chrono::steady_clock::now();
    validate_image(img, "dehaze");
    EnhanceReport report = enhance_color(photometric_invert(img), cfg, direction);
    report.color = photometric_invert(*report.color);
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace retinex
