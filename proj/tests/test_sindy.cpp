#include "physnet/sindy.hpp"
#include "physnet/systems.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace physnet;
using namespace physnet::sindy;
using systems::state2;

namespace {

const FeatureLibrary kLib{};

systems::TrajectoryData spring_data(Index n = 5000)
{
    return systems::with_fd_derivatives(
        systems::generate(systems::SystemSpec::spring(), state2(1, 0), n, {0, 20}, {0.0}, 1));
}

SindyModel oracle_spring()
{
    SindyModel m;
    m.xi = Matrix::Zero(10, 2);
    m.xi(2, 0) = 2.0;  // q_dot = 2 p
    m.xi(1, 1) = -2.0; // p_dot = -2 q
    return m;
}

} // namespace

TEST(Library, NamesAndOrder)
{
    const std::vector<std::string> expected{"1", "q", "p", "q^2", "q p", "p^2", "sin(q)", "cos(q)", "sin(p)", "cos(p)"};
    EXPECT_EQ(kLib.feature_names(), expected);
    EXPECT_EQ(kLib.n_features(), 10);

    FeatureLibrary bigger{3, 2, {"q", "p"}};
    EXPECT_EQ(bigger.n_features(), 10 + 8);
    EXPECT_EQ(bigger.feature_names()[6], "q^3");
    EXPECT_EQ(bigger.feature_names()[7], "q^2 p");
    EXPECT_EQ(bigger.feature_names().back(), "cos(2p)");
}

TEST(Library, ThetaRows)
{
    const Matrix row = build_theta(kLib, state2(1, 0).transpose());
    Eigen::RowVectorXd expected(10);
    expected << 1, 1, 0, 1, 0, 0, std::sin(1.0), std::cos(1.0), 0, 1;
    EXPECT_EQ(row, expected);
    Eigen::RowVectorXd origin(10);
    origin << 1, 0, 0, 0, 0, 0, 0, 1, 0, 1;
    EXPECT_EQ(build_theta(kLib, state2(0, 0).transpose()), origin);

    Matrix bad = state2(kNaN, 0).transpose();
    EXPECT_THROW(build_theta(kLib, bad), ContractError);
    EXPECT_THROW(build_theta(kLib, Matrix::Zero(3, 3)), ShapeError);
}

TEST(Stlsq, NoiselessSpringExactDerivatives)
{
    const auto d = systems::generate(systems::SystemSpec::spring(), state2(1, 0), 5000, {0, 20}, {0.0}, 1);
    const Matrix xi = stlsq(build_theta(kLib, d.states()), d.derivatives(), {0.1});
    EXPECT_EQ((xi.array() != 0.0).count(), 2);
    EXPECT_NEAR(xi(2, 0), 2.0, 1e-3);
    EXPECT_NEAR(xi(1, 1), -2.0, 1e-3);
}

TEST(Stlsq, OrthogonalSyntheticExact)
{
    // Orthogonal features: columns of a Q factor.
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Matrix raw(200, 5);
    for (Index i = 0; i < raw.size(); ++i)
        raw.data()[i] = g(rng);
    const Matrix q = Eigen::HouseholderQR<Matrix>(raw).householderQ() * Matrix::Identity(200, 5);
    const Matrix xdot = 3.0 * q.col(0);
    const Matrix xi = stlsq(q, xdot, {0.05});
    EXPECT_NEAR(xi(0, 0), 3.0, 1e-10);
    for (Index f = 1; f < 5; ++f)
        EXPECT_EQ(xi(f, 0), 0.0);
}

TEST(Stlsq, EmptyModelNamesColumn)
{
    const auto d = spring_data(500);
    try {
        stlsq(build_theta(kLib, d.states()), d.derivatives(), {10.0}, kLib.state_names);
        FAIL() << "expected an empty model";
    } catch (const EmptyModelError& e) {
        EXPECT_EQ(e.column(), "q");
        EXPECT_EQ(e.threshold(), 10.0);
        EXPECT_NE(std::string(e.what()).find("'q'"), std::string::npos);
    }
}

TEST(Stlsq, RejectsBadShapes)
{
    EXPECT_THROW(stlsq(Matrix::Ones(3, 5), Matrix::Ones(3, 1), {0.1}), ContractError);
    EXPECT_THROW(stlsq(Matrix::Ones(6, 5), Matrix::Ones(5, 1), {0.1}), ShapeError);
    EXPECT_THROW(stlsq(Matrix::Ones(6, 5), Matrix::Ones(6, 1), {-1.0}), ContractError);
}

TEST(Stlsq, OracleEquivalenceOnRandomSparseSystems)
{
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> mag(0.5, 3.0);
    std::bernoulli_distribution active(0.35);
    int tested = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Matrix theta(300, 8);
        for (Index i = 0; i < theta.size(); ++i)
            theta.data()[i] = g(rng);
        Eigen::JacobiSVD<Matrix> svd(theta);
        const double cond = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
        if (cond >= 1e6)
            continue;
        Matrix truth = Matrix::Zero(8, 2);
        for (Index c = 0; c < 2; ++c) {
            for (Index f = 0; f < 8; ++f)
                if (active(rng))
                    truth(f, c) = (g(rng) < 0 ? -1.0 : 1.0) * mag(rng);
            if (truth.col(c).isZero())
                truth(c, c) = 1.0;
        }
        const Matrix xi = stlsq(theta, theta * truth, {0.25});
        ASSERT_TRUE(((xi.array() != 0.0) == (truth.array() != 0.0)).all()) << "trial " << trial;
        EXPECT_LE((xi - truth).cwiseAbs().maxCoeff(), 1e-6);
        ++tested;
    }
    EXPECT_EQ(tested, 100);
}

TEST(Stlsq, IdempotentAndSupportMonotone)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    const auto d = systems::generate(systems::SystemSpec::spring(), state2(1, 0), 2000, {0, 20}, {0.02}, 3);
    const auto fd = systems::with_fd_derivatives(d);
    const Matrix theta = build_theta(kLib, fd.states());
    std::vector<std::vector<Index>> sizes;
    const Matrix xi = stlsq(theta, fd.derivatives(), {0.05}, {}, &sizes);
    for (const auto& s : sizes)
        for (std::size_t i = 1; i < s.size(); ++i)
            EXPECT_LE(s[i], s[i - 1]);

    // Refit on the active set alone reproduces the coefficients exactly.
    for (Index c = 0; c < 2; ++c) {
        std::vector<Index> active;
        for (Index f = 0; f < xi.rows(); ++f)
            if (xi(f, c) != 0.0)
                active.push_back(f);
        const Matrix sub = theta(Eigen::all, active);
        const Matrix again = stlsq(sub, fd.derivatives().col(c), {0.05});
        for (std::size_t j = 0; j < active.size(); ++j)
            EXPECT_EQ(again(static_cast<Index>(j), 0), xi(active[j], c));
    }
}

TEST(Stlsq, RidgeShrinksCoefficients)
{
    const auto d = spring_data(1000);
    const Matrix theta = build_theta(kLib, d.states());
    const Matrix plain = stlsq(theta, d.derivatives(), {0.1, 0.0});
    const Matrix ridge = stlsq(theta, d.derivatives(), {0.1, 100.0});
    EXPECT_LT(std::abs(ridge(2, 0)), std::abs(plain(2, 0)));
}

TEST(Fit, NoiselessSpringEquations)
{
    const auto d = spring_data();
    const auto m = fit(d.states(), d.derivatives(), kLib, {0.1});
    EXPECT_EQ(m.n_terms(), 2);
    EXPECT_NEAR(m.coefficient("q", "p"), 2.0, 0.01);
    EXPECT_NEAR(m.coefficient("p", "q"), -2.0, 0.01);
    const auto eq = print_equations(m);
    EXPECT_EQ(eq[0], "q̇ = 2.000 p");
    EXPECT_EQ(eq[1], "ṗ = -2.000 q");
}

TEST(Fit, NoiselessPendulum)
{
    const auto d = systems::with_fd_derivatives(
        systems::generate(systems::SystemSpec::pendulum(), state2(1, 0), 5000, {0, 20}, {0.0}, 1));
    const auto m = fit(d.states(), d.derivatives(), kLib, {0.1});
    EXPECT_NEAR(m.coefficient("q", "p"), 1.0, 0.02);
    EXPECT_NEAR(m.coefficient("p", "sin(q)"), -9.8, 0.02 * 9.8);
    EXPECT_LE(m.n_terms(0), 2);
    EXPECT_LE(m.n_terms(1), 2);

    const Vector f = predict(m, state2(std::numbers::pi / 2, 0));
    EXPECT_NEAR(f(0), 0.0, 0.02 * 9.8);
    EXPECT_NEAR(f(1), -9.8, 0.02 * 9.8);
}

TEST(Predict, OracleAndZero)
{
    EXPECT_EQ(predict(oracle_spring(), state2(1, 0)), state2(0, -2));
    SindyModel zero;
    zero.xi = Matrix::Zero(10, 2);
    EXPECT_EQ(predict(zero, state2(0.3, 0.7)), state2(0, 0));
}

TEST(Predict, RolloutMatchesAnalyticTrajectory)
{
    const auto d = spring_data();
    const auto m = fit(d.states(), d.derivatives(), kLib, {0.1});
    ode::OdeProblem p;
    p.field = field(m);
    p.y0 = state2(1, 0);
    p.t_span = {0, 10};
    p.sample_times = uniform_grid(p.t_span, 1000);
    const auto sol = ode::integrate(p);
    double mse = 0.0;
    for (Index i = 0; i < sol.size(); ++i) {
        const double t = sol.times[static_cast<std::size_t>(i)];
        mse += std::pow(sol.states(i, 0) - std::cos(2 * t), 2) + std::pow(sol.states(i, 1) + std::sin(2 * t), 2);
    }
    EXPECT_LE(mse / static_cast<double>(sol.size()), 1e-4);
}

TEST(Print, Formats)
{
    EXPECT_EQ(print_equations(oracle_spring()), (std::vector<std::string>{"q̇ = 2.000 p", "ṗ = -2.000 q"}));
    SindyModel m = oracle_spring();
    m.xi(0, 0) = 27.1314;
    m.xi(1, 0) = -1.9994;
    m.xi(6, 1) = -9.795;
    EXPECT_EQ(print_equations(m)[0], "q̇ = 27.131 - 1.999 q + 2.000 p");
    EXPECT_EQ(print_equations(m)[1], "ṗ = -2.000 q - 9.795 sin(q)");
    EXPECT_EQ(print_equations(m, 4)[1], "ṗ = -2.0000 q - 9.7950 sin(q)");
}

TEST(Sweep, NoiselessSpringPicksLargestThreshold)
{
    const auto d = spring_data();
    const auto r = threshold_sweep(d.states(), d.derivatives(), kLib, {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}, {}, 4);
    EXPECT_EQ(r.chosen, 1.0);
    ASSERT_EQ(r.rows.size(), 7u);
    for (const auto& row : r.rows) {
        EXPECT_FALSE(row.empty);
        EXPECT_EQ(row.n_terms, 2) << row.threshold;
    }
    EXPECT_EQ(r.model.n_terms(), 2);
    EXPECT_NEAR(r.model.coefficient("q", "p"), 2.0, 0.01);
}

TEST(Sweep, AllEmptyIsAnError)
{
    const auto d = spring_data(500);
    EXPECT_THROW(threshold_sweep(d.states(), d.derivatives(), kLib, {10.0}, {}), EmptyModelError);
    EXPECT_THROW(threshold_sweep(d.states(), d.derivatives(), kLib, {0.5, 0.1}, {}), ContractError);
}

TEST(Sweep, SkipsEmptyThresholds)
{
    const auto d = spring_data(1000);
    const auto r = threshold_sweep(d.states(), d.derivatives(), kLib, {0.1, 10.0}, {});
    EXPECT_EQ(r.chosen, 0.1);
    EXPECT_TRUE(r.rows[1].empty);
}

TEST(Json, RoundTrip)
{
    SindyModel m = oracle_spring();
    m.xi(7, 1) = 1.0 / 3.0;
    m.threshold = 0.05;
    const auto back = sindy_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.xi, m.xi);
    EXPECT_EQ(back.threshold, 0.05);
    EXPECT_EQ(back.library.feature_names(), m.library.feature_names());

    auto j = to_json(m);
    j["feature_names"][0] = "x";
    EXPECT_THROW(sindy_from_json(j), FormatError);
    EXPECT_THROW(sindy_from_json(nlohmann::json::parse("{}")), FormatError);
}
