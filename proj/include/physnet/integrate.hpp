#pragma once

// Fixed-step classic RK4 and adaptive Dormand-Prince 5(4) with PI step control.
// Adaptive runs report at requested sample times through cubic Hermite
// interpolation between accepted steps.

#include "physnet/core.hpp"

#include <algorithm>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace physnet::ode {

using State = Vector;
using Field = std::function<State(double t, const State& y)>;

class IntegrationError : public Error {
public:
    enum class Kind { StepUnderflow, BlowUp };

    IntegrationError(Kind kind, double t, const std::string& what)
        : Error(what)
        , kind_(kind)
        , t_(t)
    {
    }

    Kind kind() const { return kind_; }
    // Last time at which the state was known to be good.
    double time() const { return t_; }

private:
    Kind kind_;
    double t_;
};

struct FixedStep {
    double h = 1e-2;
};

struct Adaptive {
    double rtol = 1e-12;
    double atol = 1e-12;
};

using StepMode = std::variant<FixedStep, Adaptive>;

struct OdeProblem {
    Field field;
    State y0;
    TimeSpan t_span;
    StepMode mode = Adaptive{};
    // Explicit output grid; empty means "every accepted step".
    std::vector<double> sample_times;
    // States with a larger max-norm count as blow-up.
    double max_norm = 1e10;

    void validate() const
    {
        require(static_cast<bool>(field), "ODE problem has no field");
        require(y0.size() > 0 && y0.allFinite(), "initial state must be finite and non-empty");
        require(t_span.end > t_span.begin, "t_span must satisfy t1 > t0");
        if (const auto* f = std::get_if<FixedStep>(&mode))
            require(f->h > 0.0, "fixed step must be positive");
        if (const auto* a = std::get_if<Adaptive>(&mode))
            require(a->rtol > 0.0 && a->atol > 0.0, "tolerances must be positive");
        for (std::size_t i = 0; i < sample_times.size(); ++i) {
            require(sample_times[i] >= t_span.begin && sample_times[i] <= t_span.end,
                    "sample time outside t_span");
            if (i > 0)
                require(sample_times[i] > sample_times[i - 1], "sample times must be strictly increasing");
        }
    }
};

struct SolverStats {
    long steps = 0;
    long rejected = 0;
    long evaluations = 0;
};

struct Solution {
    std::vector<double> times;
    Matrix states; // times.size() x dim
    SolverStats stats;

    Index size() const { return static_cast<Index>(times.size()); }
    State state(Index i) const { return states.row(i).transpose(); }
};

namespace detail {

inline void check_state(const State& y, double t_good, double max_norm)
{
    if (!y.allFinite())
        throw IntegrationError(IntegrationError::Kind::BlowUp, t_good,
                               "state became non-finite after t = " + format_full(t_good));
    if (y.cwiseAbs().maxCoeff() > max_norm)
        throw IntegrationError(IntegrationError::Kind::BlowUp, t_good,
                               "state exceeded " + format_full(max_norm) + " after t = " + format_full(t_good));
}

inline State eval_field(const Field& f, double t, const State& y, SolverStats& stats)
{
    ++stats.evaluations;
    State dy = f(t, y);
    if (dy.size() != y.size())
        throw ShapeError("field returned a derivative of the wrong dimension");
    if (!dy.allFinite())
        throw IntegrationError(IntegrationError::Kind::BlowUp, t,
                               "field returned a non-finite derivative at t = " + format_full(t));
    return dy;
}

// Cubic Hermite interpolation on [t0, t0 + h].
inline State hermite(double t0, double h, const State& y0, const State& f0, const State& y1, const State& f1,
                     double t)
{
    const double s = (t - t0) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * y0 + (h10 * h) * f0 + h01 * y1 + (h11 * h) * f1;
}

class Recorder {
public:
    Recorder(const OdeProblem& p, Solution& sol)
        : samples_(p.sample_times)
        , sol_(sol)
        , dim_(p.y0.size())
    {
        if (!samples_.empty())
            sol_.states.resize(static_cast<Index>(samples_.size()), dim_);
    }

    bool sampled() const { return !samples_.empty(); }

    void record_point(double t, const State& y)
    {
        if (sampled())
            return;
        sol_.times.push_back(t);
        rows_.push_back(y);
    }

    // Fill every sample in (t0, t1] (and t0 itself on the first call).
    void record_interval(double t0, double h, const State& y0, const State& f0, const State& y1, const State& f1)
    {
        if (!sampled())
            return;
        const double t1 = t0 + h;
        while (next_ < samples_.size() && samples_[next_] <= t1) {
            const double ts = samples_[next_];
            State y;
            if (ts == t0)
                y = y0;
            else if (ts == t1)
                y = y1;
            else
                y = hermite(t0, h, y0, f0, y1, f1, ts);
            sol_.times.push_back(ts);
            sol_.states.row(static_cast<Index>(next_)) = y.transpose();
            ++next_;
        }
    }

    void finish()
    {
        if (sampled())
            return;
        sol_.states.resize(static_cast<Index>(rows_.size()), dim_);
        for (std::size_t i = 0; i < rows_.size(); ++i)
            sol_.states.row(static_cast<Index>(i)) = rows_[i].transpose();
    }

private:
    const std::vector<double>& samples_;
    Solution& sol_;
    Index dim_;
    std::size_t next_ = 0;
    std::vector<State> rows_;
};

} // namespace detail

inline State rk4_step(const Field& f, double t, const State& y, double h)
{
    require(h > 0.0, "RK4 step must be positive");
    SolverStats stats;
    const State k1 = detail::eval_field(f, t, y, stats);
    const State k2 = detail::eval_field(f, t + 0.5 * h, y + (0.5 * h) * k1, stats);
    const State k3 = detail::eval_field(f, t + 0.5 * h, y + (0.5 * h) * k2, stats);
    const State k4 = detail::eval_field(f, t + h, y + h * k3, stats);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace detail {

inline Solution integrate_fixed(const OdeProblem& p, double h)
{
    Solution sol;
    Recorder rec(p, sol);
    double t = p.t_span.begin;
    State y = p.y0;
    rec.record_point(t, y);

    auto advance_to = [&](double target) {
        // Equal sub-steps of at most h that land exactly on `target`.
        const double gap = target - t;
        if (gap <= 0.0)
            return;
        const auto m = static_cast<long>(std::max(1.0, std::ceil(gap / h - 1e-9)));
        const double step = gap / static_cast<double>(m);
        for (long i = 0; i < m; ++i) {
            const double t_next = (i + 1 == m) ? target : t + step;
            const State y_next = rk4_step(p.field, t, y, t_next - t);
            sol.stats.evaluations += 4;
            check_state(y_next, t, p.max_norm);
            t = t_next;
            y = y_next;
            ++sol.stats.steps;
            rec.record_point(t, y);
        }
    };

    if (rec.sampled()) {
        for (double ts : p.sample_times) {
            advance_to(ts);
            sol.times.push_back(ts);
            sol.states.row(static_cast<Index>(sol.times.size() - 1)) = y.transpose();
        }
    } else {
        // Plain grid of step h; the last step is shortened to hit t1.
        while (t < p.t_span.end) {
            const double t_next = std::min(p.t_span.end, t + h);
            const State y_next = rk4_step(p.field, t, y, t_next - t);
            sol.stats.evaluations += 4;
            check_state(y_next, t, p.max_norm);
            t = (p.t_span.end - t_next < 1e-12 * h) ? p.t_span.end : t_next;
            y = y_next;
            ++sol.stats.steps;
            rec.record_point(t, y);
        }
    }
    rec.finish();
    return sol;
}

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    // error weights: b - b_hat
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline Solution integrate_adaptive(const OdeProblem& p, const Adaptive& tol)
{
    using DP = DormandPrince;
    Solution sol;
    Recorder rec(p, sol);
    const double span = p.t_span.length();
    const double h_min = 1e-14 * span;
    double t = p.t_span.begin;
    State y = p.y0;
    State k1 = eval_field(p.field, t, y, sol.stats);
    rec.record_point(t, y);

    double h = 1e-3 * span;
    double err_prev = 1e-4;
    constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0;
    constexpr double beta = 0.04;
    constexpr double alpha = 0.2 - beta * 0.75;
    bool last_rejected = false;

    while (t < p.t_span.end) {
        bool final_step = false;
        if (t + h >= p.t_span.end) {
            h = p.t_span.end - t;
            final_step = true;
        }
        if (h < h_min)
            throw IntegrationError(IntegrationError::Kind::StepUnderflow, t,
                                   "step size underflow (h = " + format_full(h) + ") at t = " + format_full(t));

        const State k2 = eval_field(p.field, t + DP::c2 * h, y + h * (DP::a21 * k1), sol.stats);
        const State k3 = eval_field(p.field, t + DP::c3 * h, y + h * (DP::a31 * k1 + DP::a32 * k2), sol.stats);
        const State k4 =
            eval_field(p.field, t + DP::c4 * h, y + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3), sol.stats);
        const State k5 = eval_field(p.field, t + DP::c5 * h,
                                    y + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4), sol.stats);
        const State k6 = eval_field(
            p.field, t + h, y + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5),
            sol.stats);
        const State y_new = y + h * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
        const double t_new = final_step ? p.t_span.end : t + h;
        const State k7 = eval_field(p.field, t_new, y_new, sol.stats);
        const State err_vec =
            h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);

        // max-norm of err / (atol + rtol * max(|y|, |y_new|))
        const State scale = (tol.atol + tol.rtol * y.cwiseAbs().cwiseMax(y_new.cwiseAbs()).array()).matrix();
        const double err = (err_vec.cwiseAbs().array() / scale.array()).maxCoeff();

        if (err <= 1.0) {
            check_state(y_new, t, p.max_norm);
            rec.record_interval(t, t_new - t, y, k1, y_new, k7);
            double fac = err == 0.0 ? fac_max : safety * std::pow(err, -alpha) * std::pow(err_prev, beta);
            fac = std::clamp(fac, fac_min, fac_max);
            if (last_rejected)
                fac = std::min(fac, 1.0);
            err_prev = std::max(err, 1e-4);
            t = t_new;
            y = y_new;
            k1 = k7;
            ++sol.stats.steps;
            rec.record_point(t, y);
            h *= fac;
            last_rejected = false;
        } else {
            ++sol.stats.rejected;
            const double fac = std::max(fac_min, safety * std::pow(err, -alpha));
            h *= fac;
            last_rejected = true;
        }
    }
    rec.finish();
    return sol;
}

} // namespace detail

inline Solution integrate(const OdeProblem& problem)
{
    problem.validate();
    if (const auto* fixed = std::get_if<FixedStep>(&problem.mode))
        return detail::integrate_fixed(problem, fixed->h);
    return detail::integrate_adaptive(problem, std::get<Adaptive>(problem.mode));
}

} // namespace physnet::ode
