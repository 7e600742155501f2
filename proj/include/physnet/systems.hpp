#pragma once

// Ground-truth Hamiltonian systems, noisy trajectory generation and derivative
// estimation.
//
//   mass-spring: H = p^2/m + k q^2           field (2p/m, -2kq)
//   pendulum:    H = p^2/2 + g/l (1 - cos q)  field (p, -g/l sin q)

#include "physnet/core.hpp"
#include "physnet/integrate.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace physnet::systems {

struct MassSpring {
    double m = 1.0;
    double k = 1.0;
};

struct Pendulum {
    double g_over_l = 9.8;
};

struct SystemSpec {
    std::variant<MassSpring, Pendulum> kind = MassSpring{};

    static SystemSpec spring(double m = 1.0, double k = 1.0) { return {MassSpring{m, k}}; }
    static SystemSpec pendulum(double g_over_l = 9.8) { return {Pendulum{g_over_l}}; }

    bool is_spring() const { return std::holds_alternative<MassSpring>(kind); }
    bool is_pendulum() const { return std::holds_alternative<Pendulum>(kind); }

    std::string name() const { return is_spring() ? "spring" : "pendulum"; }

    void validate() const
    {
        if (const auto* s = std::get_if<MassSpring>(&kind))
            require(s->m > 0.0 && s->k > 0.0, "mass and spring constant must be positive");
        else
            require(std::get<Pendulum>(kind).g_over_l > 0.0, "g/l must be positive");
    }
};

inline SystemSpec parse_system(std::string_view name)
{
    if (name == "spring")
        return SystemSpec::spring();
    if (name == "pendulum")
        return SystemSpec::pendulum();
    throw FormatError("unknown system '" + std::string(name) + "' (expected spring or pendulum)");
}

using State = ode::State;

inline State state2(double q, double p)
{
    State y(2);
    y << q, p;
    return y;
}

inline State spring_field(const SystemSpec& spec, const State& y)
{
    const auto* s = std::get_if<MassSpring>(&spec.kind);
    require(s != nullptr, "spring_field needs a mass-spring system");
    require_shape(y.size() == 2, "state must be (q, p)");
    return state2(2.0 * y(1) / s->m, -2.0 * s->k * y(0));
}

inline State pendulum_field(const SystemSpec& spec, const State& y)
{
    const auto* s = std::get_if<Pendulum>(&spec.kind);
    require(s != nullptr, "pendulum_field needs a pendulum system");
    require_shape(y.size() == 2, "state must be (q, p)");
    return state2(y(1), -s->g_over_l * std::sin(y(0)));
}

inline State field(const SystemSpec& spec, const State& y)
{
    return spec.is_spring() ? spring_field(spec, y) : pendulum_field(spec, y);
}

inline ode::Field ode_field(const SystemSpec& spec)
{
    return [spec](double, const State& y) { return field(spec, y); };
}

inline double true_energy(const SystemSpec& spec, double q, double p)
{
    if (const auto* s = std::get_if<MassSpring>(&spec.kind))
        return p * p / s->m + s->k * q * q;
    const auto& pend = std::get<Pendulum>(spec.kind);
    return 0.5 * p * p + pend.g_over_l * (1.0 - std::cos(q));
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

enum class Source { GroundTruth, Noisy, ModelRollout };

inline std::string_view to_string(Source s)
{
    switch (s) {
    case Source::GroundTruth: return "ground_truth";
    case Source::Noisy: return "noisy";
    case Source::ModelRollout: return "model_rollout";
    }
    return "unknown";
}

inline Source parse_source(std::string_view s)
{
    if (s == "ground_truth") return Source::GroundTruth;
    if (s == "noisy") return Source::Noisy;
    if (s == "model_rollout") return Source::ModelRollout;
    throw FormatError("unknown trajectory source '" + std::string(s) + "'");
}

struct NoiseSpec {
    double sigma = 0.0;
};

struct TrajectoryData {
    std::vector<double> times;
    Vector q, p;   // observed coordinates (noisy for Source::Noisy)
    Vector dq, dp; // derivative series: exact field values for generated data
    Vector q_clean, p_clean; // noiseless coordinates when known, else empty
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    Source source = Source::GroundTruth;

    Index size() const { return static_cast<Index>(times.size()); }
    bool has_derivatives() const { return dq.size() == size() && dp.size() == size(); }

    // n x 2 matrix of (q, p).
    Matrix states() const
    {
        Matrix x(size(), 2);
        x.col(0) = q;
        x.col(1) = p;
        return x;
    }

    Matrix derivatives() const
    {
        require(has_derivatives(), "trajectory has no derivative series");
        Matrix x(size(), 2);
        x.col(0) = dq;
        x.col(1) = dp;
        return x;
    }

    void validate() const
    {
        require(size() >= 2, "trajectory needs at least two samples");
        require(q.size() == size() && p.size() == size(), "trajectory series lengths differ");
        require(dq.size() == 0 || has_derivatives(), "derivative series lengths differ");
        for (Index i = 1; i < size(); ++i)
            require(times[static_cast<std::size_t>(i)] > times[static_cast<std::size_t>(i - 1)],
                    "trajectory times must be strictly increasing");
        require(q.allFinite() && p.allFinite(), "trajectory contains non-finite coordinates");
    }
};

// Step of a uniform grid; abscissae may deviate from t0 + i*h by 1e-12 (scaled by |t|).
inline double uniform_step(const std::vector<double>& times)
{
    require(times.size() >= 2, "grid needs at least two points");
    const double h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    require(h > 0.0, "time grid must be increasing");
    const double tol = 1e-12 * std::max({1.0, std::abs(times.front()), std::abs(times.back())});
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (std::abs(times[i] - (times.front() + h * static_cast<double>(i))) > tol)
            throw ContractError("time grid is not uniform");
    }
    return h;
}

// Central differences inside, second-order one-sided differences at the ends.
inline Vector finite_difference(const std::vector<double>& times, const Vector& series)
{
    require(series.size() == static_cast<Index>(times.size()), "series and grid lengths differ");
    require(series.size() >= 3, "finite differences need at least three samples");
    const double h = uniform_step(times);
    const Index n = series.size();
    Vector d(n);
    for (Index i = 1; i + 1 < n; ++i)
        d(i) = (series(i + 1) - series(i - 1)) / (2.0 * h);
    d(0) = (-3.0 * series(0) + 4.0 * series(1) - series(2)) / (2.0 * h);
    d(n - 1) = (3.0 * series(n - 1) - 4.0 * series(n - 2) + series(n - 3)) / (2.0 * h);
    return d;
}

// Integrates the exact field at tolerance 1e-12 onto n uniform times and adds
// N(0, sigma^2) to q and p independently (q then p per sample).
inline TrajectoryData generate(const SystemSpec& spec, const State& y0, Index n, TimeSpan t_span, NoiseSpec noise,
                               std::uint64_t seed)
{
    spec.validate();
    require(n >= 2, "generate needs n >= 2");
    require(noise.sigma >= 0.0 && std::isfinite(noise.sigma), "noise sigma must be nonnegative");
    require_shape(y0.size() == 2, "initial state must be (q, p)");

    ode::OdeProblem problem;
    problem.field = ode_field(spec);
    problem.y0 = y0;
    problem.t_span = t_span;
    problem.mode = ode::Adaptive{1e-12, 1e-12};
    problem.sample_times = uniform_grid(t_span, n);
    const auto sol = ode::integrate(problem);

    TrajectoryData data;
    data.times = sol.times;
    data.q_clean = sol.states.col(0);
    data.p_clean = sol.states.col(1);
    data.dq.resize(n);
    data.dp.resize(n);
    for (Index i = 0; i < n; ++i) {
        const State f = field(spec, sol.state(i));
        data.dq(i) = f(0);
        data.dp(i) = f(1);
    }
    data.q = data.q_clean;
    data.p = data.p_clean;
    data.noise_sigma = noise.sigma;
    data.seed = seed;
    data.source = noise.sigma > 0.0 ? Source::Noisy : Source::GroundTruth;
    if (noise.sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, noise.sigma);
        for (Index i = 0; i < n; ++i) {
            data.q(i) += gauss(rng);
            data.p(i) += gauss(rng);
        }
    }
    return data;
}

// Copy of `data` whose derivative columns are finite differences of (q, p).
inline TrajectoryData with_fd_derivatives(TrajectoryData data)
{
    data.dq = finite_difference(data.times, data.q);
    data.dp = finite_difference(data.times, data.p);
    return data;
}

// ---------------------------------------------------------------------------
// CSV: t,q,p,dq,dp,source,sigma,seed
// ---------------------------------------------------------------------------

inline constexpr const char* kTrajectoryHeader = "t,q,p,dq,dp,source,sigma,seed";

inline void write_csv(std::ostream& out, const TrajectoryData& data)
{
    data.validate();
    out << kTrajectoryHeader << '\n';
    const std::string source(to_string(data.source));
    const std::string sigma = format_full(data.noise_sigma);
    const std::string seed = std::to_string(data.seed);
    for (Index i = 0; i < data.size(); ++i) {
        out << format_full(data.times[static_cast<std::size_t>(i)]) << ',' << format_full(data.q(i)) << ','
            << format_full(data.p(i)) << ',' << (data.has_derivatives() ? format_full(data.dq(i)) : "") << ','
            << (data.has_derivatives() ? format_full(data.dp(i)) : "") << ',' << source << ',' << sigma << ','
            << seed << '\n';
    }
}

inline void write_csv(const std::string& path, const TrajectoryData& data)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    write_csv(out, data);
    if (!out)
        throw Error("failed writing '" + path + "'");
}

namespace detail {

inline double parse_double(const std::string& field, Index line)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size())
            throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw FormatError("line " + std::to_string(line) + ": '" + field + "' is not a number");
    }
}

inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

} // namespace detail

inline TrajectoryData read_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw FormatError("trajectory CSV is empty");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kTrajectoryHeader)
        throw FormatError("unexpected trajectory CSV header '" + line + "'");

    TrajectoryData data;
    std::vector<double> q, p, dq, dp;
    bool any_missing_derivative = false;
    Index lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 8)
            throw FormatError("line " + std::to_string(lineno) + ": expected 8 fields");
        data.times.push_back(detail::parse_double(cells[0], lineno));
        q.push_back(detail::parse_double(cells[1], lineno));
        p.push_back(detail::parse_double(cells[2], lineno));
        if (cells[3].empty() || cells[4].empty()) {
            any_missing_derivative = true;
        } else {
            dq.push_back(detail::parse_double(cells[3], lineno));
            dp.push_back(detail::parse_double(cells[4], lineno));
        }
        data.source = parse_source(cells[5]);
        data.noise_sigma = detail::parse_double(cells[6], lineno);
        try {
            data.seed = std::stoull(cells[7]);
        } catch (const std::exception&) {
            throw FormatError("line " + std::to_string(lineno) + ": bad seed '" + cells[7] + "'");
        }
    }
    auto to_vec = [](const std::vector<double>& v) {
        return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    };
    data.q = to_vec(q);
    data.p = to_vec(p);
    if (!any_missing_derivative) {
        data.dq = to_vec(dq);
        data.dp = to_vec(dp);
    }
    data.validate();
    return data;
}

inline TrajectoryData read_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "'");
    return read_csv(in);
}

} // namespace physnet::systems
