#pragma once

// Sparse identification of nonlinear dynamics: X_dot = Theta(X) Xi, solved by
// sequentially thresholded least squares (STLSQ).

#include "physnet/core.hpp"
#include "physnet/integrate.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace physnet::sindy {

class EmptyModelError : public Error {
public:
    EmptyModelError(const std::string& column, double threshold)
        : Error("threshold " + format_full(threshold) + " eliminated every term of the '" + column + "' equation")
        , column_(column)
        , threshold_(threshold)
    {
    }
    const std::string& column() const { return column_; }
    double threshold() const { return threshold_; }

private:
    std::string column_;
    double threshold_;
};

// ---------------------------------------------------------------------------
// Feature library
// ---------------------------------------------------------------------------

struct FeatureLibrary {
    int poly_degree = 2;
    int fourier_freqs = 1;
    std::vector<std::string> state_names{"q", "p"};

    void validate() const
    {
        require(poly_degree >= 0, "polynomial degree must be nonnegative");
        require(fourier_freqs >= 0, "Fourier frequency count must be nonnegative");
        require(!state_names.empty(), "library needs at least one state variable");
    }

    Index n_states() const { return static_cast<Index>(state_names.size()); }

    // Monomials as exponent vectors, by degree, q-major within a degree:
    // 1, q, p, q^2, q p, p^2, ...
    std::vector<std::vector<int>> monomials() const
    {
        std::vector<std::vector<int>> out;
        const auto d = static_cast<int>(n_states());
        for (int degree = 0; degree <= poly_degree; ++degree) {
            // combinations with replacement of `degree` variables, nondecreasing indices
            std::vector<int> pick(static_cast<std::size_t>(degree), 0);
            while (true) {
                std::vector<int> exps(static_cast<std::size_t>(d), 0);
                for (int v : pick)
                    ++exps[static_cast<std::size_t>(v)];
                out.push_back(exps);
                int pos = degree - 1;
                while (pos >= 0 && pick[static_cast<std::size_t>(pos)] == d - 1)
                    --pos;
                if (pos < 0)
                    break;
                const int next = pick[static_cast<std::size_t>(pos)] + 1;
                for (int k = pos; k < degree; ++k)
                    pick[static_cast<std::size_t>(k)] = next;
            }
        }
        return out;
    }

    Index n_features() const
    {
        return static_cast<Index>(monomials().size()) + 2 * fourier_freqs * n_states();
    }

    std::vector<std::string> feature_names() const
    {
        std::vector<std::string> names;
        for (const auto& exps : monomials()) {
            std::string name;
            for (std::size_t v = 0; v < exps.size(); ++v) {
                if (exps[v] == 0)
                    continue;
                if (!name.empty())
                    name += ' ';
                name += state_names[v];
                if (exps[v] > 1)
                    name += '^' + std::to_string(exps[v]);
            }
            names.push_back(name.empty() ? "1" : name);
        }
        for (int k = 1; k <= fourier_freqs; ++k) {
            const std::string mult = k == 1 ? "" : std::to_string(k);
            for (const auto& s : state_names) {
                names.push_back("sin(" + mult + s + ")");
                names.push_back("cos(" + mult + s + ")");
            }
        }
        return names;
    }
};

inline Matrix build_theta(const FeatureLibrary& lib, const Matrix& x)
{
    lib.validate();
    require_shape(x.cols() == lib.n_states(), "state matrix width does not match the library");
    require(x.allFinite(), "state matrix contains non-finite values");
    const auto monos = lib.monomials();
    Matrix theta(x.rows(), lib.n_features());
    Index col = 0;
    for (const auto& exps : monos) {
        Vector c = Vector::Ones(x.rows());
        for (std::size_t v = 0; v < exps.size(); ++v)
            for (int e = 0; e < exps[v]; ++e)
                c.array() *= x.col(static_cast<Index>(v)).array();
        theta.col(col++) = c;
    }
    for (int k = 1; k <= lib.fourier_freqs; ++k) {
        for (Index v = 0; v < x.cols(); ++v) {
            theta.col(col++) = (static_cast<double>(k) * x.col(v)).array().sin().matrix();
            theta.col(col++) = (static_cast<double>(k) * x.col(v)).array().cos().matrix();
        }
    }
    return theta;
}

// ---------------------------------------------------------------------------
// STLSQ
// ---------------------------------------------------------------------------

struct StlsqConfig {
    double threshold = 0.1;
    double ridge_alpha = 0.0;
    int max_iter = 20;

    void validate() const
    {
        require(threshold >= 0.0 && std::isfinite(threshold), "threshold must be nonnegative");
        require(ridge_alpha >= 0.0, "ridge alpha must be nonnegative");
        require(max_iter >= 1, "max_iter must be at least 1");
    }
};

namespace detail {

// Singular values below this fraction of the largest are treated as zero (the
// rcond of a minimum-norm least-squares solve). Exactly conserved quantities make
// library columns dependent -- q^2 + p^2 = 1 on a spring orbit holds to ~1e-10 on
// integrated data -- and derivative errors must not be amplified along them.
inline constexpr double kRankTolerance = 1e-8;

// Least squares on the listed columns; minimum-norm for rank-deficient designs.
inline Vector solve_active(const Matrix& theta, const Vector& b, const std::vector<Index>& active, double alpha)
{
    Matrix a(theta.rows(), static_cast<Index>(active.size()));
    for (std::size_t j = 0; j < active.size(); ++j)
        a.col(static_cast<Index>(j)) = theta.col(active[j]);
    if (alpha > 0.0) {
        Matrix normal = a.transpose() * a;
        normal.diagonal().array() += alpha;
        return normal.ldlt().solve(a.transpose() * b);
    }
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kRankTolerance);
    return svd.solve(b);
}

} // namespace detail

// Per-column history of active-set sizes is returned through `support_sizes` if given.
inline Matrix stlsq(const Matrix& theta, const Matrix& x_dot, const StlsqConfig& cfg,
                    const std::vector<std::string>& column_names = {},
                    std::vector<std::vector<Index>>* support_sizes = nullptr)
{
    cfg.validate();
    require_shape(theta.rows() == x_dot.rows(), "theta and x_dot differ in row count");
    require(theta.rows() >= theta.cols(), "STLSQ needs at least as many samples as features");
    require(theta.allFinite() && x_dot.allFinite(), "STLSQ inputs must be finite");

    Matrix xi = Matrix::Zero(theta.cols(), x_dot.cols());
    if (support_sizes)
        support_sizes->assign(static_cast<std::size_t>(x_dot.cols()), {});
    for (Index c = 0; c < x_dot.cols(); ++c) {
        const std::string name =
            static_cast<std::size_t>(c) < column_names.size() ? column_names[static_cast<std::size_t>(c)]
                                                             : "column " + std::to_string(c);
        std::vector<Index> active(static_cast<std::size_t>(theta.cols()));
        std::iota(active.begin(), active.end(), Index{0});
        const Vector b = x_dot.col(c);
        Vector coef = detail::solve_active(theta, b, active, cfg.ridge_alpha);
        for (int iter = 0; iter < cfg.max_iter; ++iter) {
            if (support_sizes)
                (*support_sizes)[static_cast<std::size_t>(c)].push_back(static_cast<Index>(active.size()));
            std::vector<Index> keep;
            for (std::size_t j = 0; j < active.size(); ++j)
                if (std::abs(coef(static_cast<Index>(j))) >= cfg.threshold)
                    keep.push_back(active[j]);
            if (keep.empty())
                throw EmptyModelError(name, cfg.threshold);
            if (keep.size() == active.size())
                break;
            active = std::move(keep);
            coef = detail::solve_active(theta, b, active, cfg.ridge_alpha);
        }
        for (std::size_t j = 0; j < active.size(); ++j)
            xi(active[j], c) = coef(static_cast<Index>(j));
    }
    return xi;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct SindyModel {
    FeatureLibrary library;
    Matrix xi; // features x states
    double threshold = 0.0;
    double ridge_alpha = 0.0;

    Index n_terms() const { return static_cast<Index>((xi.array() != 0.0).count()); }
    Index n_terms(Index column) const { return static_cast<Index>((xi.col(column).array() != 0.0).count()); }

    // Coefficient of a named feature in a named equation (0 if absent).
    double coefficient(const std::string& state, const std::string& feature) const
    {
        const auto names = library.feature_names();
        const auto f = std::find(names.begin(), names.end(), feature);
        const auto s = std::find(library.state_names.begin(), library.state_names.end(), state);
        require(f != names.end(), "unknown feature '" + feature + "'");
        require(s != library.state_names.end(), "unknown state '" + state + "'");
        return xi(f - names.begin(), s - library.state_names.begin());
    }
};

inline SindyModel fit(const Matrix& states, const Matrix& derivatives, const FeatureLibrary& library,
                      const StlsqConfig& cfg)
{
    require_shape(states.rows() == derivatives.rows() && derivatives.cols() == library.n_states(),
                  "derivative matrix does not match the states");
    SindyModel m;
    m.library = library;
    m.xi = stlsq(build_theta(library, states), derivatives, cfg, library.state_names);
    m.threshold = cfg.threshold;
    m.ridge_alpha = cfg.ridge_alpha;
    return m;
}

inline Matrix predict_batch(const SindyModel& model, const Matrix& states)
{
    return build_theta(model.library, states) * model.xi;
}

inline Vector predict(const SindyModel& model, const Vector& state)
{
    return predict_batch(model, state.transpose()).row(0).transpose();
}

inline ode::Field field(const SindyModel& model)
{
    return [model](double, const Vector& y) { return predict(model, y); };
}

// "q" -> "q̇" (combining dot above), "p" -> "ṗ" (precomposed).
inline std::string dotted(const std::string& name)
{
    if (name == "p")
        return "ṗ";
    return name + "̇";
}

inline std::vector<std::string> print_equations(const SindyModel& model, int decimals = 3)
{
    const auto names = model.library.feature_names();
    std::vector<std::string> out;
    for (Index c = 0; c < model.xi.cols(); ++c) {
        std::string eq = dotted(model.library.state_names[static_cast<std::size_t>(c)]) + " =";
        bool first = true;
        for (Index f = 0; f < model.xi.rows(); ++f) {
            const double v = model.xi(f, c);
            if (v == 0.0)
                continue;
            const std::string mag = format_fixed(std::abs(v), decimals);
            const std::string term = names[static_cast<std::size_t>(f)] == "1" ? mag : mag + " " + names[static_cast<std::size_t>(f)];
            if (first)
                eq += (v < 0 ? " -" : " ") + term;
            else
                eq += (v < 0 ? " - " : " + ") + term;
            first = false;
        }
        if (first)
            eq += " 0";
        out.push_back(eq);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

struct SweepRow {
    double threshold = 0.0;
    Index n_terms = 0;      // 0 when the fit produced an empty column
    double validation_mse = kInf;
    bool empty = false;
};

struct SweepResult {
    double chosen = 0.0;
    std::vector<SweepRow> rows;
    SindyModel model; // refit on all rows at the chosen threshold
};

inline std::vector<double> default_thresholds() { return {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}; }

// Fits on a seeded 80% split, scores derivative MSE on the other 20%, and picks the
// largest threshold whose MSE is within 1.1x of the best and has no empty column
// (on the split and in the refit on all rows).
inline SweepResult threshold_sweep(const Matrix& states, const Matrix& derivatives, const FeatureLibrary& library,
                                   const std::vector<double>& thresholds, const StlsqConfig& base,
                                   std::uint64_t seed = 0, double tolerance = 1.1)
{
    require(!thresholds.empty(), "threshold sweep needs at least one threshold");
    require(std::is_sorted(thresholds.begin(), thresholds.end()), "thresholds must be sorted ascending");
    const Index n = states.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    require(cut > 0 && cut < order.size(), "too few samples for a validation split");
    std::vector<Index> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<Index> val_idx(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    const Matrix theta = build_theta(library, states);
    const Matrix theta_train = theta(train_idx, Eigen::all);
    const Matrix theta_val = theta(val_idx, Eigen::all);
    const Matrix d_train = derivatives(train_idx, Eigen::all);
    const Matrix d_val = derivatives(val_idx, Eigen::all);

    SweepResult result;
    double best = kInf;
    for (double t : thresholds) {
        StlsqConfig cfg = base;
        cfg.threshold = t;
        SweepRow row;
        row.threshold = t;
        try {
            const Matrix xi = stlsq(theta_train, d_train, cfg, library.state_names);
            row.n_terms = static_cast<Index>((xi.array() != 0.0).count());
            row.validation_mse = (theta_val * xi - d_val).squaredNorm() / static_cast<double>(d_val.size());
            best = std::min(best, row.validation_mse);
        } catch (const EmptyModelError&) {
            row.empty = true;
        }
        result.rows.push_back(row);
    }
    if (!std::isfinite(best))
        throw EmptyModelError(library.state_names.front(), thresholds.front());

    // Largest admissible threshold first; a candidate whose refit on all rows
    // empties an equation falls through to the next smaller one.
    for (auto row = result.rows.rbegin(); row != result.rows.rend(); ++row) {
        if (row->empty || row->validation_mse > tolerance * best)
            continue;
        StlsqConfig cfg = base;
        cfg.threshold = row->threshold;
        try {
            result.model = fit(states, derivatives, library, cfg);
            result.chosen = row->threshold;
            return result;
        } catch (const EmptyModelError&) {
        }
    }
    throw EmptyModelError(library.state_names.front(), thresholds.front());
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline constexpr int kSindySchemaVersion = 1;

inline nlohmann::json to_json(const SindyModel& m)
{
    nlohmann::json j;
    j["schema_version"] = kSindySchemaVersion;
    j["poly_degree"] = m.library.poly_degree;
    j["fourier_freqs"] = m.library.fourier_freqs;
    j["feature_names"] = m.library.feature_names();
    j["state_names"] = m.library.state_names;
    nlohmann::json rows = nlohmann::json::array();
    for (Index f = 0; f < m.xi.rows(); ++f) {
        std::vector<double> r(static_cast<std::size_t>(m.xi.cols()));
        for (Index c = 0; c < m.xi.cols(); ++c)
            r[static_cast<std::size_t>(c)] = m.xi(f, c);
        rows.push_back(r);
    }
    j["xi"] = rows;
    j["threshold"] = m.threshold;
    j["alpha"] = m.ridge_alpha;
    return j;
}

inline SindyModel sindy_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("schema_version").get<int>() != kSindySchemaVersion)
            throw FormatError("unsupported SINDy schema_version");
        SindyModel m;
        m.library.poly_degree = j.at("poly_degree").get<int>();
        m.library.fourier_freqs = j.at("fourier_freqs").get<int>();
        m.library.state_names = j.at("state_names").get<std::vector<std::string>>();
        m.library.validate();
        if (j.at("feature_names").get<std::vector<std::string>>() != m.library.feature_names())
            throw FormatError("feature_names do not match the library description");
        const auto rows = j.at("xi").get<std::vector<std::vector<double>>>();
        if (static_cast<Index>(rows.size()) != m.library.n_features())
            throw FormatError("xi row count does not match the library");
        m.xi.resize(m.library.n_features(), m.library.n_states());
        for (std::size_t f = 0; f < rows.size(); ++f) {
            if (static_cast<Index>(rows[f].size()) != m.library.n_states())
                throw FormatError("xi column count does not match the state names");
            for (std::size_t c = 0; c < rows[f].size(); ++c)
                m.xi(static_cast<Index>(f), static_cast<Index>(c)) = rows[f][c];
        }
        m.threshold = j.at("threshold").get<double>();
        m.ridge_alpha = j.at("alpha").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed SINDy JSON: ") + e.what());
    }
}

} // namespace physnet::sindy
