#pragma once

// Experiment orchestration: the SINDy+HNN noise-regulation procedure, the
// baseline SINDy fit, rollout metrics, and the sweeps that write result trees.
//
// Seeds: every trial derives its own seed from the master seed and a label
// (e.g. "spring-noise-sweep/0.01"); each stage then derives from the trial seed
// with a fixed tag ("data", "split", "hnn-init", "hnn-train", "sindy-split").
// A trial is therefore reproducible on its own, independent of which other
// trials run alongside it.

#include "physnet/core.hpp"
#include "physnet/evenodd.hpp"
#include "physnet/hamiltonian.hpp"
#include "physnet/integrate.hpp"
#include "physnet/neural.hpp"
#include "physnet/sindy.hpp"
#include "physnet/systems.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace physnet::pipeline {

using diffgraph::ActivationKind;
using hamiltonian::Baseline;
using hamiltonian::Hnn;
using ode::Solution;
using ode::State;
using sindy::SindyModel;
using systems::SystemSpec;
using systems::TrajectoryData;

namespace fs = std::filesystem;

// A failure inside one pipeline stage, tagged with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what)
        , stage_(std::move(stage))
    {
    }
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

// Where the SINDy+HNN fit gets its derivative targets.
enum class DerivativeSource { HnnField, FiniteDifference };

inline std::string_view to_string(DerivativeSource s)
{
    return s == DerivativeSource::HnnField ? "hnn-field" : "finite-difference";
}

inline DerivativeSource parse_derivative_source(std::string_view s)
{
    if (s == "hnn-field")
        return DerivativeSource::HnnField;
    if (s == "finite-difference")
        return DerivativeSource::FiniteDifference;
    throw ContractError("unknown derivative source '" + std::string(s) + "' (expected hnn-field or finite-difference)");
}

// Shortest decimal that round-trips; used for labels and directory names.
inline std::string format_label(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct HnnSettings {
    ActivationKind activation = ActivationKind::Tanh;
    std::vector<Index> hidden{200, 200};
    neural::TrainConfig train; // Adam, 2000 epochs, lr 1e-3, full batch
    double train_fraction = 0.8;
};

// Ridge penalty used by the experiments (the reference STLSQ implementation's
// default). On a single orbit the library is nearly collinear -- q^2 + p^2 and
// cos q + cos p are almost constant -- and an unpenalised fit spends large,
// cancelling coefficients on those directions to absorb small derivative errors.
inline constexpr double kExperimentRidgeAlpha = 0.05;

inline sindy::StlsqConfig experiment_stlsq()
{
    sindy::StlsqConfig cfg;
    cfg.ridge_alpha = kExperimentRidgeAlpha;
    return cfg;
}

struct SindySettings {
    sindy::FeatureLibrary library;
    std::vector<double> thresholds = sindy::default_thresholds();
    sindy::StlsqConfig base = experiment_stlsq();
    DerivativeSource source = DerivativeSource::HnnField;
};

struct RolloutSettings {
    double tol = 1e-12;
    TimeSpan compare_span{0.0, 10.0};
    Index compare_n = 1001;
};

struct ExperimentConfig {
    SystemSpec system = SystemSpec::spring();
    std::vector<double> sigmas{0.0, 0.01, 0.02, 0.03};
    Index n_obs = 5000;
    TimeSpan t_span_train{0.0, 20.0};
    State y0 = systems::state2(1.0, 0.0);
    HnnSettings hnn;
    SindySettings sindy;
    RolloutSettings rollout;
    std::uint64_t seed = 7;
    bool timing = false;

    void validate() const
    {
        system.validate();
        require(!sigmas.empty(), "at least one noise level is required");
        for (double s : sigmas)
            require(s >= 0.0 && std::isfinite(s), "noise levels must be nonnegative");
        require(std::is_sorted(sigmas.begin(), sigmas.end()), "noise levels must be sorted ascending");
        require(n_obs >= 10, "n_obs must be at least 10");
        require(t_span_train.end > t_span_train.begin, "training span must satisfy t1 > t0");
        require(rollout.compare_span.end > rollout.compare_span.begin, "comparison span must satisfy t1 > t0");
        require(rollout.compare_n >= 2, "comparison grid needs at least two points");
        require(rollout.tol > 0.0, "rollout tolerance must be positive");
        require_shape(y0.size() == 2, "initial state must be (q, p)");
        hnn.train.validate();
    }
};

// ---------------------------------------------------------------------------
// Rollouts and metrics
// ---------------------------------------------------------------------------

inline Solution rollout(const ode::Field& field, const State& y0, const std::vector<double>& times, double tol)
{
    require(times.size() >= 2, "rollout needs at least two sample times");
    ode::OdeProblem problem;
    problem.field = field;
    problem.y0 = y0;
    problem.t_span = {times.front(), times.back()};
    problem.mode = ode::Adaptive{tol, tol};
    problem.sample_times = times;
    return ode::integrate(problem);
}

struct MseCurve {
    double mean = 0.0;
    std::vector<double> per_time; // squared (q, p) error summed over coordinates
};

inline MseCurve coordinate_mse(const Solution& pred, const Solution& truth)
{
    require_shape(pred.size() == truth.size() && pred.states.cols() == truth.states.cols(),
                  "coordinate MSE needs trajectories on a common grid");
    require(pred.size() > 0, "coordinate MSE of empty trajectories");
    for (Index i = 0; i < pred.size(); ++i) {
        const double a = pred.times[static_cast<std::size_t>(i)];
        const double b = truth.times[static_cast<std::size_t>(i)];
        require_shape(std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}),
                      "coordinate MSE needs trajectories on a common grid");
    }
    MseCurve c;
    c.per_time.resize(static_cast<std::size_t>(pred.size()));
    double total = 0.0;
    for (Index i = 0; i < pred.size(); ++i) {
        const double e = (pred.states.row(i) - truth.states.row(i)).squaredNorm();
        c.per_time[static_cast<std::size_t>(i)] = e;
        total += e;
    }
    c.mean = total / static_cast<double>(pred.size());
    return c;
}

// Mean of an MSE curve over the samples with t in [t0, t1].
inline double window_mean(const MseCurve& c, const std::vector<double>& times, double t0, double t1)
{
    double s = 0.0;
    Index n = 0;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] >= t0 && times[i] <= t1) {
            s += c.per_time[i];
            ++n;
        }
    require(n > 0, "no samples inside the requested window");
    return s / static_cast<double>(n);
}

struct EnergyDrift {
    double max_abs = kNaN; // max |H(t) - H(t0)|
    double std = kNaN;     // population standard deviation of H(t)
};

inline EnergyDrift energy_drift(const SystemSpec& spec, const Solution& sol)
{
    require(sol.size() > 0 && sol.states.cols() == 2, "energy drift needs a (q, p) trajectory");
    Vector h(sol.size());
    for (Index i = 0; i < sol.size(); ++i)
        h(i) = systems::true_energy(spec, sol.states(i, 0), sol.states(i, 1));
    EnergyDrift d;
    d.max_abs = (h.array() - h(0)).abs().maxCoeff();
    d.std = std::sqrt((h.array() - h.mean()).square().mean());
    return d;
}

// ---------------------------------------------------------------------------
// The two SINDy procedures
// ---------------------------------------------------------------------------

struct HnnFit {
    Hnn model;
    std::vector<neural::EpochRecord> history;
};

// Trains an HNN on finite differences of the observed (noisy) coordinates.
inline HnnFit train_hnn_on(const TrajectoryData& traj, const HnnSettings& s, std::uint64_t seed)
{
    const auto data = hamiltonian::make_dataset(systems::with_fd_derivatives(traj));
    auto [train, test] = neural::split(data, s.train_fraction, derive_seed(seed, "split"));
    neural::TrainConfig cfg = s.train;
    cfg.seed = derive_seed(seed, "hnn-train");
    auto r = hamiltonian::train_hnn(Hnn::make(s.activation, derive_seed(seed, "hnn-init"), s.hidden), train, cfg,
                                    &test);
    return {std::move(r.model), std::move(r.history)};
}

struct HybridResult {
    Hnn hnn;
    std::vector<neural::EpochRecord> history;
    TrajectoryData rollout; // HNN coordinates with the derivatives SINDy was fit on
    sindy::SweepResult sindy;
};

inline HybridResult run_sindy_hnn(const TrajectoryData& traj, const ExperimentConfig& cfg, std::uint64_t seed)
{
    traj.validate();
    auto fit = run_stage("hnn-train", [&] { return train_hnn_on(traj, cfg.hnn, seed); });

    TrajectoryData roll = run_stage("hnn-rollout", [&] {
        const auto sol = rollout(fit.model.field(), cfg.y0, traj.times, cfg.rollout.tol);
        TrajectoryData r;
        r.times = sol.times;
        r.q = sol.states.col(0);
        r.p = sol.states.col(1);
        r.source = systems::Source::ModelRollout;
        r.noise_sigma = 0.0;
        r.seed = seed;
        if (cfg.sindy.source == DerivativeSource::HnnField) {
            const Matrix f = fit.model.dynamics_batch(sol.states);
            r.dq = f.col(0);
            r.dp = f.col(1);
            return r;
        }
        return systems::with_fd_derivatives(r);
    });

    auto sweep = run_stage("hybrid-sindy", [&] {
        return sindy::threshold_sweep(roll.states(), roll.derivatives(), cfg.sindy.library, cfg.sindy.thresholds,
                                      cfg.sindy.base, derive_seed(seed, "sindy-split"));
    });
    return {std::move(fit.model), std::move(fit.history), std::move(roll), std::move(sweep)};
}

inline sindy::SweepResult run_baseline_sindy(const TrajectoryData& traj, const ExperimentConfig& cfg,
                                             std::uint64_t seed)
{
    traj.validate();
    return run_stage("baseline-sindy", [&] {
        const auto fd = systems::with_fd_derivatives(traj);
        return sindy::threshold_sweep(fd.states(), fd.derivatives(), cfg.sindy.library, cfg.sindy.thresholds,
                                      cfg.sindy.base, derive_seed(seed, "sindy-split"));
    });
}

// ---------------------------------------------------------------------------
// Noise sweep
// ---------------------------------------------------------------------------

struct MethodResult {
    std::string method; // baseline_sindy, hnn, sindy_hnn
    std::vector<std::string> equations;
    std::optional<Index> n_terms;
    double coord_mse = kNaN;
    EnergyDrift energy;
    std::string rollout_error; // set when the comparison rollout failed (coord_mse = inf)
    double runtime_s = kNaN;
};

struct TrialResult {
    double sigma = 0.0;
    std::vector<MethodResult> methods;
    std::string error; // non-empty when a stage failed; completed methods are kept
    bool ok() const { return error.empty(); }
};

struct ExperimentResult {
    std::string name;
    std::vector<TrialResult> trials;
    bool ok() const
    {
        return std::all_of(trials.begin(), trials.end(), [](const TrialResult& t) { return t.ok(); });
    }
};

namespace detail {

inline void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << text;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i)
        out += (i ? std::string(sep) : std::string()) + parts[i];
    return out;
}

inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_full(v)); }

inline nlohmann::json history_json(const std::vector<neural::EpochRecord>& h)
{
    nlohmann::json j = nlohmann::json::object();
    if (!h.empty()) {
        j["epochs"] = h.back().epoch;
        j["final_train_loss"] = number(h.back().loss);
        j["final_test_loss"] = number(h.back().test_loss);
    }
    return j;
}

inline nlohmann::json sweep_json(const sindy::SweepResult& s)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : s.rows)
        rows.push_back({{"threshold", r.threshold},
                        {"n_terms", r.n_terms},
                        {"validation_mse", number(r.validation_mse)},
                        {"empty", r.empty}});
    return {{"chosen_threshold", s.chosen}, {"candidates", rows}};
}

inline nlohmann::json method_json(const MethodResult& m)
{
    nlohmann::json j;
    j["coord_mse"] = number(m.coord_mse);
    j["energy_max_abs"] = number(m.energy.max_abs);
    j["energy_std"] = number(m.energy.std);
    if (m.n_terms)
        j["n_terms"] = *m.n_terms;
    if (!m.equations.empty())
        j["equations"] = m.equations;
    if (!m.rollout_error.empty())
        j["rollout_error"] = m.rollout_error;
    return j;
}

using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

} // namespace detail

// Rolls `field` out over the comparison grid and scores it against `truth`.
inline MethodResult evaluate_method(std::string method, const ode::Field& field, const ExperimentConfig& cfg,
                                    const Solution& truth)
{
    MethodResult m;
    m.method = std::move(method);
    try {
        const auto sol = rollout(field, cfg.y0, truth.times, cfg.rollout.tol);
        m.coord_mse = coordinate_mse(sol, truth).mean;
        m.energy = energy_drift(cfg.system, sol);
    } catch (const ode::IntegrationError& e) {
        m.coord_mse = kInf;
        m.energy = {kInf, kInf};
        m.rollout_error = e.what();
    }
    return m;
}

inline std::string summary_header() { return "sigma,method,equation_q,equation_p,n_terms,coord_mse,energy_std,runtime_s"; }

inline std::string summary_csv(const ExperimentResult& r, bool timing)
{
    std::ostringstream os;
    os << summary_header() << '\n';
    for (const auto& t : r.trials)
        for (const auto& m : t.methods) {
            os << format_label(t.sigma) << ',' << m.method << ',';
            os << detail::csv_field(m.equations.size() > 0 ? m.equations[0] : "") << ',';
            os << detail::csv_field(m.equations.size() > 1 ? m.equations[1] : "") << ',';
            os << (m.n_terms ? std::to_string(*m.n_terms) : "") << ',';
            os << format_full(m.coord_mse) << ',' << format_full(m.energy.std) << ',';
            os << (timing && std::isfinite(m.runtime_s) ? format_full(m.runtime_s) : "") << '\n';
        }
    return os.str();
}

// One noise level: data, baseline SINDy, HNN, SINDy+HNN, comparison rollouts,
// and the artifacts under `dir` (when non-empty).
inline TrialResult run_trial(const ExperimentConfig& cfg, double sigma, std::uint64_t trial_seed, const fs::path& dir)
{
    using detail::Clock;
    TrialResult trial;
    trial.sigma = sigma;
    if (!dir.empty())
        fs::create_directories(dir);
    nlohmann::json metrics;
    metrics["sigma"] = sigma;
    metrics["seed"] = trial_seed;
    metrics["system"] = cfg.system.name();
    metrics["derivative_source"] = std::string(to_string(cfg.sindy.source));

    try {
        const auto traj = run_stage("generate", [&] {
            return systems::generate(cfg.system, cfg.y0, cfg.n_obs, cfg.t_span_train, {sigma},
                                     derive_seed(trial_seed, "data"));
        });
        if (!dir.empty())
            systems::write_csv((dir / "data.csv").string(), traj);

        const auto truth = run_stage("truth-rollout", [&] {
            return rollout(systems::ode_field(cfg.system), cfg.y0,
                           uniform_grid(cfg.rollout.compare_span, cfg.rollout.compare_n), cfg.rollout.tol);
        });

        auto t0 = Clock::now();
        const auto base = run_baseline_sindy(traj, cfg, trial_seed);
        const double base_time = detail::seconds_since(t0);
        MethodResult bm = evaluate_method("baseline_sindy", sindy::field(base.model), cfg, truth);
        bm.equations = sindy::print_equations(base.model);
        bm.n_terms = base.model.n_terms();
        bm.runtime_s = base_time;
        trial.methods.push_back(bm);
        metrics["baseline_sindy"] = detail::method_json(bm);
        metrics["baseline_sindy"]["threshold_sweep"] = detail::sweep_json(base);
        if (!dir.empty())
            detail::write_json(dir / "baseline.sindy.json", sindy::to_json(base.model));

        t0 = Clock::now();
        const auto hybrid = run_sindy_hnn(traj, cfg, trial_seed);
        const double hybrid_time = detail::seconds_since(t0);
        if (!dir.empty()) {
            detail::write_json(dir / "hnn.json", hamiltonian::to_json(hybrid.hnn));
            systems::write_csv((dir / "rollout.csv").string(), hybrid.rollout);
            detail::write_json(dir / "hybrid.sindy.json", sindy::to_json(hybrid.sindy.model));
        }

        MethodResult hm = evaluate_method("hnn", hybrid.hnn.field(), cfg, truth);
        hm.runtime_s = hybrid_time;
        trial.methods.push_back(hm);
        metrics["hnn"] = detail::method_json(hm);
        metrics["hnn"]["training"] = detail::history_json(hybrid.history);

        MethodResult sm = evaluate_method("sindy_hnn", sindy::field(hybrid.sindy.model), cfg, truth);
        sm.equations = sindy::print_equations(hybrid.sindy.model);
        sm.n_terms = hybrid.sindy.model.n_terms();
        sm.runtime_s = hybrid_time;
        trial.methods.push_back(sm);
        metrics["sindy_hnn"] = detail::method_json(sm);
        metrics["sindy_hnn"]["threshold_sweep"] = detail::sweep_json(hybrid.sindy);
    } catch (const Error& e) {
        trial.error = e.what();
        metrics["error"] = trial.error;
    }
    if (!dir.empty())
        detail::write_json(dir / "metrics.json", metrics);
    return trial;
}

inline ExperimentResult noise_sweep(const ExperimentConfig& cfg, const std::string& name, const fs::path& out_root)
{
    cfg.validate();
    ExperimentResult result;
    result.name = name;
    const fs::path root = out_root.empty() ? fs::path() : out_root / name;
    for (double sigma : cfg.sigmas) {
        const std::string label = format_label(sigma);
        const std::uint64_t trial_seed = derive_seed(cfg.seed, name + "/" + label);
        result.trials.push_back(run_trial(cfg, sigma, trial_seed, root.empty() ? fs::path() : root / label));
    }
    if (!root.empty())
        detail::write_text(root / "summary.csv", summary_csv(result, cfg.timing));
    return result;
}

// ---------------------------------------------------------------------------
// Activation sweep
// ---------------------------------------------------------------------------

struct ActivationSweepConfig {
    SystemSpec system = SystemSpec::spring();
    std::vector<ActivationKind> activations{ActivationKind::Tanh, ActivationKind::Sine, ActivationKind::Sigmoid,
                                            ActivationKind::ReLU};
    double sigma = 0.01;
    Index n_obs = 5000;
    TimeSpan t_span_train{0.0, 20.0};
    State y0 = systems::state2(1.0, 0.0);
    HnnSettings hnn;
    TimeSpan eval_span{0.0, 500.0};
    Index eval_n = 5001;
    double tol = 1e-12;
    std::uint64_t seed = 7;
    bool timing = false;
};

struct ActivationResult {
    ActivationKind activation = ActivationKind::Tanh;
    std::vector<neural::EpochRecord> history;
    std::vector<double> times;
    MseCurve mse;
    double final_test_loss = kNaN;
    double mse_train_window = kNaN;  // mean over [t0, t1 of training]
    double mse_extrapolation = kNaN; // mean over (t1 of training, end]
    double mse_late = kNaN;          // mean over [100, 500]
    std::string error;
    double runtime_s = kNaN;
};

inline std::vector<ActivationResult> activation_sweep(const ActivationSweepConfig& cfg, const fs::path& out_root)
{
    cfg.hnn.train.validate();
    const std::string name = "activation-sweep";
    const fs::path root = out_root.empty() ? fs::path() : out_root / name;
    if (!root.empty())
        fs::create_directories(root);

    // Shared data and seeds: only the activation differs between models.
    const std::uint64_t seed = derive_seed(cfg.seed, name);
    const auto traj = systems::generate(cfg.system, cfg.y0, cfg.n_obs, cfg.t_span_train, {cfg.sigma},
                                        derive_seed(seed, "data"));
    if (!root.empty())
        systems::write_csv((root / "data.csv").string(), traj);
    const auto grid = uniform_grid(cfg.eval_span, cfg.eval_n);
    const auto truth = rollout(systems::ode_field(cfg.system), cfg.y0, grid, cfg.tol);

    std::vector<ActivationResult> results;
    for (auto act : cfg.activations) {
        ActivationResult r;
        r.activation = act;
        const auto t0 = detail::Clock::now();
        try {
            HnnSettings s = cfg.hnn;
            s.activation = act;
            auto fit = run_stage("hnn-train", [&] { return train_hnn_on(traj, s, seed); });
            r.history = fit.history;
            r.final_test_loss = fit.history.back().test_loss;
            const auto sol = run_stage("hnn-rollout", [&] { return rollout(fit.model.field(), cfg.y0, grid, cfg.tol); });
            r.times = sol.times;
            r.mse = coordinate_mse(sol, truth);
            r.mse_train_window = window_mean(r.mse, grid, cfg.t_span_train.begin, cfg.t_span_train.end);
            r.mse_extrapolation =
                window_mean(r.mse, grid, std::nextafter(cfg.t_span_train.end, kInf), cfg.eval_span.end);
            r.mse_late = window_mean(r.mse, grid, 100.0, cfg.eval_span.end);
            if (!root.empty()) {
                const fs::path dir = root / std::string(diffgraph::to_string(act));
                fs::create_directories(dir);
                detail::write_json(dir / "hnn.json", hamiltonian::to_json(fit.model));
                std::ostringstream h;
                h << "epoch,train_loss,test_loss\n";
                for (const auto& e : r.history)
                    h << e.epoch << ',' << format_full(e.loss) << ',' << format_full(e.test_loss) << '\n';
                detail::write_text(dir / "history.csv", h.str());
                std::ostringstream m;
                m << "t,coord_mse\n";
                for (std::size_t i = 0; i < r.times.size(); ++i)
                    m << format_full(r.times[i]) << ',' << format_full(r.mse.per_time[i]) << '\n';
                detail::write_text(dir / "mse.csv", m.str());
            }
        } catch (const Error& e) {
            r.error = e.what();
        }
        r.runtime_s = detail::seconds_since(t0);
        results.push_back(std::move(r));
    }

    if (!root.empty()) {
        std::ostringstream os;
        os << "activation,final_train_loss,final_test_loss,mse_train_window,mse_extrapolation,mse_100_500,runtime_s,"
              "error\n";
        for (const auto& r : results) {
            os << diffgraph::to_string(r.activation) << ','
               << (r.history.empty() ? std::string() : format_full(r.history.back().loss)) << ','
               << format_full(r.final_test_loss) << ',' << format_full(r.mse_train_window) << ','
               << format_full(r.mse_extrapolation) << ',' << format_full(r.mse_late) << ','
               << (cfg.timing ? format_full(r.runtime_s) : "") << ',' << detail::csv_field(r.error) << '\n';
        }
        detail::write_text(root / "summary.csv", os.str());
    }
    return results;
}

// ---------------------------------------------------------------------------
// Even-odd suite
// ---------------------------------------------------------------------------

struct DecompSuiteResult {
    evenodd::Target target = evenodd::Target::Exp;
    std::vector<evenodd::DecompRow> table;
    double rms_even_error = kNaN; // against (f(x) + f(-x)) / 2
    double rms_odd_error = kNaN;  // against (f(x) - f(-x)) / 2
    double rms_even = kNaN;
    double rms_odd = kNaN;
    double final_loss = kNaN;
    double runtime_s = kNaN;
};

struct DecompSuiteConfig {
    std::vector<evenodd::Target> targets{evenodd::Target::Square, evenodd::Target::Cube, evenodd::Target::Exp,
                                         evenodd::Target::Mixture};
    Index n_train = 2048;
    double sigma = 0.0;
    Index n_table = 1001;
    evenodd::DecompositionConfig net;
    neural::TrainConfig train = evenodd::default_train_config();
    std::uint64_t seed = 7;
    bool timing = false;
};

inline DecompSuiteResult run_decomposition(evenodd::Target target, const DecompSuiteConfig& cfg)
{
    using namespace evenodd;
    const auto t0 = detail::Clock::now();
    const std::uint64_t seed = derive_seed(cfg.seed, "even-odd-suite/" + std::string(to_string(target)));
    const auto f = target_function(target);
    const auto data =
        neural::sample_function(f, default_interval(target), cfg.n_train, cfg.sigma, derive_seed(seed, "data"));
    DecompositionConfig net_cfg = cfg.net;
    net_cfg.seed = derive_seed(seed, "init");
    neural::TrainConfig train = cfg.train;
    train.seed = derive_seed(seed, "train");
    const auto trained = train_decomposition(DecompositionNet::make(net_cfg), data, train);

    DecompSuiteResult r;
    r.target = target;
    r.table = decompose(trained.net, uniform_grid(default_interval(target), cfg.n_table), f);
    r.rms_even_error = rms(r.table, [&](const DecompRow& w) { return w.y_even - analytic_even(f, w.x); });
    r.rms_odd_error = rms(r.table, [&](const DecompRow& w) { return w.y_odd - analytic_odd(f, w.x); });
    r.rms_even = rms(r.table, [](const DecompRow& w) { return w.y_even; });
    r.rms_odd = rms(r.table, [](const DecompRow& w) { return w.y_odd; });
    r.final_loss = trained.history.back().loss;
    r.runtime_s = detail::seconds_since(t0);
    return r;
}

inline std::vector<DecompSuiteResult> even_odd_suite(const DecompSuiteConfig& cfg, const fs::path& out_root)
{
    const fs::path root = out_root.empty() ? fs::path() : out_root / "even-odd-suite";
    if (!root.empty())
        fs::create_directories(root);
    std::vector<DecompSuiteResult> results;
    for (auto t : cfg.targets) {
        results.push_back(run_decomposition(t, cfg));
        if (!root.empty()) {
            std::ostringstream os;
            evenodd::write_decomposition_csv(os, results.back().table);
            detail::write_text(root / (std::string(evenodd::to_string(t)) + ".csv"), os.str());
        }
    }
    if (!root.empty()) {
        std::ostringstream os;
        os << "target,rms_even_error,rms_odd_error,rms_even,rms_odd,final_loss,runtime_s\n";
        for (const auto& r : results)
            os << evenodd::to_string(r.target) << ',' << format_full(r.rms_even_error) << ','
               << format_full(r.rms_odd_error) << ',' << format_full(r.rms_even) << ',' << format_full(r.rms_odd)
               << ',' << format_full(r.final_loss) << ',' << (cfg.timing ? format_full(r.runtime_s) : "") << '\n';
        detail::write_text(root / "summary.csv", os.str());
    }
    return results;
}

} // namespace physnet::pipeline
