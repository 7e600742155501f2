#include "physnet/integrate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace physnet;
using namespace physnet::ode;

namespace {

State vec2(double a, double b)
{
    State y(2);
    y << a, b;
    return y;
}

// q' = 2p, p' = -2q; from (1, 0): q = cos 2t, p = -sin 2t.
const Field spring = [](double, const State& y) { return vec2(2.0 * y(1), -2.0 * y(0)); };

State spring_exact(double t) { return vec2(std::cos(2 * t), -std::sin(2 * t)); }

OdeProblem spring_problem(TimeSpan span, StepMode mode)
{
    OdeProblem p;
    p.field = spring;
    p.y0 = vec2(1.0, 0.0);
    p.t_span = span;
    p.mode = mode;
    return p;
}

} // namespace

TEST(Rk4Step, ZeroFieldKeepsState)
{
    const Field zero = [](double, const State& y) { return State::Zero(y.size()); };
    const State y = vec2(0.3, -4.0);
    EXPECT_EQ(rk4_step(zero, 0.0, y, 0.5), y);
}

TEST(Rk4Step, ExponentialMatchesTaylorPolynomial)
{
    const Field grow = [](double, const State& y) { return y; };
    const double h = 0.1;
    const double taylor = 1 + h + h * h / 2 + h * h * h / 6 + h * h * h * h / 24;
    EXPECT_NEAR(rk4_step(grow, 0.0, State::Ones(1), h)(0), taylor, 1e-15);
    EXPECT_NEAR(taylor, 1.1051708333333334, 1e-15);
}

TEST(Rk4Step, LocalErrorIsFifthOrder)
{
    auto local_error = [](double h) { return (rk4_step(spring, 0.0, vec2(1.0, 0.0), h) - spring_exact(h)).norm(); };
    const double ratio = local_error(0.02) / local_error(0.01);
    EXPECT_NEAR(ratio, 32.0, 1.0);
}

TEST(Rk4Step, RejectsBadInput)
{
    EXPECT_THROW(rk4_step(spring, 0.0, vec2(1, 0), 0.0), ContractError);
    const Field bad = [](double, const State& y) { return State::Constant(y.size(), kNaN); };
    EXPECT_THROW(rk4_step(bad, 0.0, vec2(1, 0), 0.1), IntegrationError);
}

TEST(FixedMode, GlobalErrorIsFourthOrder)
{
    // Over a decade of h the global error at t = 5 falls by ~1e4.
    auto global_error = [](double h) {
        const auto sol = integrate(spring_problem({0.0, 5.0}, FixedStep{h}));
        EXPECT_EQ(sol.times.back(), 5.0);
        return (sol.state(sol.size() - 1) - spring_exact(5.0)).norm();
    };
    const double coarse = global_error(0.05);
    const double fine = global_error(0.005);
    const double order = std::log10(coarse / fine);
    EXPECT_NEAR(order, 4.0, 0.1);
    EXPECT_NEAR(global_error(0.01) / global_error(0.005), 16.0, 0.5);
}

TEST(FixedMode, GridLandsOnEndpoint)
{
    const auto sol = integrate(spring_problem({0.0, 1.0}, FixedStep{0.3}));
    ASSERT_EQ(sol.size(), 5);
    EXPECT_EQ(sol.times.front(), 0.0);
    EXPECT_EQ(sol.times.back(), 1.0);
}

TEST(FixedMode, HonorsSampleTimes)
{
    auto p = spring_problem({0.0, 2.0}, FixedStep{1e-3});
    p.sample_times = uniform_grid({0.0, 2.0}, 7);
    const auto sol = integrate(p);
    ASSERT_EQ(sol.times, p.sample_times);
    for (Index i = 0; i < sol.size(); ++i)
        EXPECT_LE((sol.state(i) - spring_exact(sol.times[static_cast<std::size_t>(i)])).norm(), 1e-10);
}

TEST(Adaptive, SpringQuarterPeriod)
{
    const double t1 = std::numbers::pi / 2;
    const auto sol = integrate(spring_problem({0.0, t1}, Adaptive{1e-12, 1e-12}));
    EXPECT_EQ(sol.times.back(), t1);
    const State y = sol.state(sol.size() - 1);
    EXPECT_NEAR(y(0), -1.0, 1e-8);
    EXPECT_NEAR(y(1), 0.0, 1e-8);
    EXPECT_GE(sol.stats.steps, 1);
}

TEST(Adaptive, EnergyDriftOnTwentySeconds)
{
    auto p = spring_problem({0.0, 20.0}, Adaptive{1e-12, 1e-12});
    p.sample_times = uniform_grid({0.0, 20.0}, 5000);
    const auto sol = integrate(p);
    double drift = 0.0;
    for (Index i = 0; i < sol.size(); ++i)
        drift = std::max(drift, std::abs(sol.states.row(i).squaredNorm() - 1.0));
    EXPECT_LE(drift, 1e-8);
}

TEST(Adaptive, SampleTimesAreBitExactAndAccurate)
{
    auto p = spring_problem({0.0, 20.0}, Adaptive{1e-12, 1e-12});
    p.sample_times = uniform_grid({0.0, 20.0}, 1001);
    const auto sol = integrate(p);
    ASSERT_EQ(sol.times.size(), p.sample_times.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < sol.times.size(); ++i) {
        ASSERT_EQ(sol.times[i], p.sample_times[i]);
        worst = std::max(worst, (sol.state(static_cast<Index>(i)) - spring_exact(sol.times[i])).norm());
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(Adaptive, StepsStrictlyIncreasingWithoutSamples)
{
    const auto sol = integrate(spring_problem({0.0, 3.0}, Adaptive{1e-8, 1e-8}));
    EXPECT_EQ(sol.times.front(), 0.0);
    EXPECT_EQ(sol.times.back(), 3.0);
    for (std::size_t i = 1; i < sol.times.size(); ++i)
        ASSERT_GT(sol.times[i], sol.times[i - 1]);
    EXPECT_EQ(sol.size(), sol.stats.steps + 1);
}

TEST(Adaptive, PendulumSmallAnglePeriod)
{
    OdeProblem p;
    p.field = [](double, const State& y) { return vec2(y(1), -9.8 * std::sin(y(0))); };
    p.y0 = vec2(0.01, 0.0);
    p.t_span = {0.0, 10.0};
    p.sample_times = uniform_grid(p.t_span, 100001);
    const auto sol = integrate(p);
    // Period from successive downward zero crossings of q, linearly interpolated.
    std::vector<double> crossings;
    for (Index i = 1; i < sol.size(); ++i) {
        const double a = sol.states(i - 1, 0);
        const double b = sol.states(i, 0);
        if (a > 0.0 && b <= 0.0) {
            const double t0 = sol.times[static_cast<std::size_t>(i - 1)];
            const double t1 = sol.times[static_cast<std::size_t>(i)];
            crossings.push_back(t0 + (t1 - t0) * a / (a - b));
        }
    }
    ASSERT_GE(crossings.size(), 3u);
    const double period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
    const double expected = 2 * std::numbers::pi / std::sqrt(9.8);
    EXPECT_LE(std::abs(period - expected) / expected, 1e-3);
}

TEST(Adaptive, TimeReversalReturnsInitialState)
{
    const auto fwd = integrate(spring_problem({0.0, 10.0}, Adaptive{1e-12, 1e-12}));
    OdeProblem back;
    back.field = [](double, const State& y) { return State(-spring(0.0, y)); };
    back.y0 = fwd.state(fwd.size() - 1);
    back.t_span = {0.0, 10.0};
    const auto rev = integrate(back);
    EXPECT_LE((rev.state(rev.size() - 1) - vec2(1.0, 0.0)).norm(), 1e-8);
}

TEST(Adaptive, ErrorControlMeetsTolerance)
{
    // Global error stays within a small multiple of the requested tolerance.
    for (double tol : {1e-6, 1e-9}) {
        const auto sol = integrate(spring_problem({0.0, 2.0}, Adaptive{tol, tol}));
        const double err = (sol.state(sol.size() - 1) - spring_exact(2.0)).cwiseAbs().maxCoeff();
        EXPECT_LE(err, 100 * tol) << tol;
    }
}

TEST(Errors, BlowUpReportsLastGoodTime)
{
    OdeProblem p;
    p.field = [](double, const State& y) { return State(y.cwiseProduct(y)); }; // y' = y^2, y(0)=1 blows at t=1
    p.y0 = State::Ones(1);
    p.t_span = {0.0, 2.0};
    try {
        integrate(p);
        FAIL() << "expected an integration error";
    } catch (const IntegrationError& e) {
        EXPECT_LE(e.time(), 1.0);
        EXPECT_GT(e.time(), 0.9);
    }
}

TEST(Errors, FixedModeBlowUp)
{
    OdeProblem p;
    p.field = [](double, const State& y) { return State(50.0 * y); };
    p.y0 = State::Ones(1);
    p.t_span = {0.0, 10.0};
    p.mode = FixedStep{0.01};
    try {
        integrate(p);
        FAIL() << "expected blow-up";
    } catch (const IntegrationError& e) {
        EXPECT_EQ(e.kind(), IntegrationError::Kind::BlowUp);
        EXPECT_LT(e.time(), 1.0);
    }
}

TEST(Errors, StepUnderflow)
{
    OdeProblem p;
    // Discontinuous field that flips sign faster than any step can resolve.
    p.field = [](double t, const State&) { return State::Constant(1, std::sin(1e18 * t) > 0 ? 1e6 : -1e6); };
    p.y0 = State::Zero(1);
    p.t_span = {0.0, 1.0};
    p.mode = Adaptive{1e-14, 1e-14};
    try {
        integrate(p);
        FAIL() << "expected an integration error";
    } catch (const IntegrationError& e) {
        EXPECT_EQ(e.kind(), IntegrationError::Kind::StepUnderflow);
    }
}

TEST(Errors, InvalidProblems)
{
    auto p = spring_problem({1.0, 1.0}, Adaptive{});
    EXPECT_THROW(integrate(p), ContractError);
    p = spring_problem({0.0, 1.0}, FixedStep{-1.0});
    EXPECT_THROW(integrate(p), ContractError);
    p = spring_problem({0.0, 1.0}, Adaptive{0.0, 1e-9});
    EXPECT_THROW(integrate(p), ContractError);
    p = spring_problem({0.0, 1.0}, Adaptive{});
    p.sample_times = {0.5, 0.2};
    EXPECT_THROW(integrate(p), ContractError);
    p.sample_times = {0.5, 1.5};
    EXPECT_THROW(integrate(p), ContractError);
}

TEST(Determinism, RepeatedIntegrationsAreBitEqual)
{
    auto p = spring_problem({0.0, 7.0}, Adaptive{1e-10, 1e-10});
    p.sample_times = uniform_grid(p.t_span, 333);
    EXPECT_EQ(integrate(p).states, integrate(p).states);
}
