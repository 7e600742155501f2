#pragma once

// Even-odd decomposition network: two parallel scalar MLPs whose outputs are
// summed to fit a target, while penalty terms push one branch towards an even
// function and the other towards an odd one.

#include "physnet/core.hpp"
#include "physnet/diffgraph.hpp"
#include "physnet/neural.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace physnet::evenodd {

using diffgraph::ActivationKind;
using diffgraph::ParamStore;
using neural::MLP;

struct DecompositionConfig {
    std::vector<Index> hidden{32, 32};
    ActivationKind activation = ActivationKind::Tanh;
    double lambda_even = 1.0;
    double lambda_odd = 1.0;
    std::uint64_t seed = 0;
};

class DecompositionNet {
public:
    DecompositionNet(MLP even_branch, MLP odd_branch, double lambda_even = 1.0, double lambda_odd = 1.0)
        : even_(std::move(even_branch))
        , odd_(std::move(odd_branch))
        , lambda_even_(lambda_even)
        , lambda_odd_(lambda_odd)
    {
        for (const MLP* b : {&even_, &odd_}) {
            require(b->input_dim() == 1 && b->output_dim() == 1, "decomposition branches are scalar-in/scalar-out");
            require(b->config().output_mode == neural::OutputMode::Plain, "decomposition branches use plain output");
        }
        require(lambda_even >= 0.0 && lambda_odd >= 0.0, "parity loss weights must be nonnegative");
    }

    static DecompositionNet make(const DecompositionConfig& cfg)
    {
        std::vector<Index> sizes{1};
        sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        sizes.push_back(1);
        auto branch = [&](std::string_view tag) {
            return MLP(neural::MLPConfig{sizes, cfg.activation, neural::OutputMode::Plain, derive_seed(cfg.seed, tag)});
        };
        return DecompositionNet(branch("even"), branch("odd"), cfg.lambda_even, cfg.lambda_odd);
    }

    const MLP& even_branch() const { return even_; }
    const MLP& odd_branch() const { return odd_; }
    MLP& even_branch() { return even_; }
    MLP& odd_branch() { return odd_; }
    double lambda_even() const { return lambda_even_; }
    double lambda_odd() const { return lambda_odd_; }

    // Both branches' parameters, even first.
    Vector packed_params() const
    {
        Vector v(even_.params().size() + odd_.params().size());
        v << even_.params().values(), odd_.params().values();
        return v;
    }

    void unpack_params(const Vector& v)
    {
        const Index ne = even_.params().size();
        require_shape(v.size() == ne + odd_.params().size(), "packed parameter size mismatch");
        even_.params().values() = v.head(ne);
        odd_.params().values() = v.tail(v.size() - ne);
    }

private:
    MLP even_;
    MLP odd_;
    double lambda_even_;
    double lambda_odd_;
};

struct DecompOutput {
    double y_even = 0.0;
    double y_odd = 0.0;
    double y_hat = 0.0;
};

inline DecompOutput decomp_forward(const DecompositionNet& net, double x)
{
    require(std::isfinite(x), "decomposition input must be finite");
    DecompOutput out;
    out.y_even = net.even_branch().evaluate_scalar(x);
    out.y_odd = net.odd_branch().evaluate_scalar(x);
    out.y_hat = out.y_even + out.y_odd;
    return out;
}

// The three mean-squared terms; total = fit + lambda_even * even + lambda_odd * odd.
struct DecompTerms {
    double fit = 0.0;
    double even = 0.0;
    double odd = 0.0;
    double total = 0.0;
};

namespace detail {

inline DecompTerms decomp_terms(const DecompositionNet& net, const Matrix& x, const Matrix& y, Vector* grad)
{
    require(x.rows() > 0, "decomposition loss needs a non-empty batch");
    require_shape(x.cols() == 1 && y.cols() == 1 && y.rows() == x.rows(), "decomposition batches are scalar pairs");
    const MLP& e = net.even_branch();
    const MLP& o = net.odd_branch();
    const Index n = x.rows();
    const auto nd = static_cast<double>(n);

    // Each branch runs once on the stacked batch [x; -x].
    Matrix xx(2 * n, 1);
    xx << x, -x;
    DecompTerms t;
    Matrix odd_at_x = o.evaluate(x);
    Matrix even_at_x;

    // Seed for a branch given its stacked outputs: the fit residual on the +x
    // half plus the parity penalty split across both halves.
    auto branch_seed = [&](const Matrix& f, const Matrix& other_at_x, double sign, double lambda, double& parity) {
        const Matrix r = f.topRows(n) + other_at_x - y;
        const Matrix d = f.topRows(n) + sign * f.bottomRows(n);
        t.fit = r.squaredNorm() / nd;
        parity = d.squaredNorm() / nd;
        Matrix seed(2 * n, 1);
        seed << (2.0 / nd) * (r + lambda * d), (2.0 / nd) * lambda * sign * d;
        return seed;
    };

    if (!grad) {
        const Matrix fe = e.evaluate(xx);
        const Matrix fo = o.evaluate(xx);
        branch_seed(fe, odd_at_x, -1.0, net.lambda_even(), t.even);
        branch_seed(fo, fe.topRows(n), 1.0, net.lambda_odd(), t.odd);
    } else {
        const Vector ge = diffgraph::backward_with(e.tape(), e.params(), xx, [&](const Matrix& f) {
                              even_at_x = f.topRows(n);
                              return branch_seed(f, odd_at_x, -1.0, net.lambda_even(), t.even);
                          }).params;
        const Vector go = diffgraph::backward_with(o.tape(), o.params(), xx, [&](const Matrix& f) {
                              return branch_seed(f, even_at_x, 1.0, net.lambda_odd(), t.odd);
                          }).params;
        grad->resize(ge.size() + go.size());
        *grad << ge, go;
    }
    t.total = t.fit + net.lambda_even() * t.even + net.lambda_odd() * t.odd;
    return t;
}

} // namespace detail

inline DecompTerms decomp_terms(const DecompositionNet& net, const neural::Dataset& batch)
{
    return detail::decomp_terms(net, batch.inputs, batch.targets, nullptr);
}

inline double decomp_loss(const DecompositionNet& net, const neural::Dataset& batch)
{
    return decomp_terms(net, batch).total;
}

// Decomposition defaults: full-batch Adam, 5000 epochs at lr 3e-3.
inline neural::TrainConfig default_train_config()
{
    neural::TrainConfig cfg;
    cfg.epochs = 5000;
    cfg.learning_rate = 3e-3;
    return cfg;
}

struct DecompTrainResult {
    DecompositionNet net;
    std::vector<neural::EpochRecord> history;
};

inline DecompTrainResult train_decomposition(const DecompositionNet& net, const neural::Dataset& data,
                                             const neural::TrainConfig& cfg,
                                             const neural::Dataset* validation = nullptr)
{
    data.validate();
    DecompTrainResult result{net, {}};
    DecompositionNet work = net;

    neural::Objective objective = [&](const Vector& p, const std::vector<Index>& rows, Vector* grad) {
        work.unpack_params(p);
        if (rows.empty())
            return detail::decomp_terms(work, data.inputs, data.targets, grad).total;
        const auto batch = data.rows(rows);
        return detail::decomp_terms(work, batch.inputs, batch.targets, grad).total;
    };
    neural::Monitor monitor = [&](const Vector& p, neural::EpochRecord& rec) {
        if (!validation)
            return;
        work.unpack_params(p);
        rec.test_loss = decomp_loss(work, *validation);
    };

    Vector p = net.packed_params();
    result.history = neural::optimize(p, data.size(), objective, cfg, monitor);
    result.net.unpack_params(p);
    return result;
}

// ---------------------------------------------------------------------------
// Targets and decomposition tables
// ---------------------------------------------------------------------------

enum class Target { Square, Cube, Exp, Mixture };

inline std::string_view to_string(Target t)
{
    switch (t) {
    case Target::Square: return "square";
    case Target::Cube: return "cube";
    case Target::Exp: return "exp";
    case Target::Mixture: return "mixture";
    }
    return "?";
}

inline Target parse_target(std::string_view name)
{
    for (auto t : {Target::Square, Target::Cube, Target::Exp, Target::Mixture})
        if (name == to_string(t))
            return t;
    throw ContractError("unknown decomposition target '" + std::string(name) +
                        "' (expected square, cube, exp or mixture)");
}

inline std::function<double(double)> target_function(Target t)
{
    switch (t) {
    case Target::Square: return [](double x) { return x * x; };
    case Target::Cube: return [](double x) { return x * x * x; };
    case Target::Exp: return [](double x) { return std::exp(x); };
    case Target::Mixture:
        return [](double x) { return std::cos(10 * x) + std::cos(20 * x) + x * x + std::sin(5 * x) + x * x * x; };
    }
    throw ContractError("unknown decomposition target");
}

// Polynomials on [-2, 2]; the exponential and the high-frequency mixture on [-1, 1].
inline TimeSpan default_interval(Target t)
{
    return t == Target::Square || t == Target::Cube ? TimeSpan{-2.0, 2.0} : TimeSpan{-1.0, 1.0};
}

inline double analytic_even(const std::function<double(double)>& f, double x) { return 0.5 * (f(x) + f(-x)); }
inline double analytic_odd(const std::function<double(double)>& f, double x) { return 0.5 * (f(x) - f(-x)); }

struct DecompRow {
    double x = 0.0;
    double y_even = 0.0;
    double y_odd = 0.0;
    double y_hat = 0.0;
    double target = kNaN;
};

inline std::vector<DecompRow> decompose(const DecompositionNet& net, std::span<const double> xs,
                                        const std::function<double(double)>& target = {})
{
    const Matrix x = neural::column(xs);
    const Matrix e = net.even_branch().evaluate(x);
    const Matrix o = net.odd_branch().evaluate(x);
    std::vector<DecompRow> rows(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto r = static_cast<Index>(i);
        rows[i] = {xs[i], e(r, 0), o(r, 0), e(r, 0) + o(r, 0), target ? target(xs[i]) : kNaN};
    }
    return rows;
}

inline void write_decomposition_csv(std::ostream& os, const std::vector<DecompRow>& rows)
{
    os << "x,y_even,y_odd,y_hat,target\n";
    for (const auto& r : rows)
        os << format_full(r.x) << ',' << format_full(r.y_even) << ',' << format_full(r.y_odd) << ','
           << format_full(r.y_hat) << ',' << format_full(r.target) << '\n';
}

// RMS of a per-row quantity.
inline double rms(const std::vector<DecompRow>& rows, const std::function<double(const DecompRow&)>& f)
{
    require(!rows.empty(), "RMS of an empty table");
    double s = 0.0;
    for (const auto& r : rows)
        s += f(r) * f(r);
    return std::sqrt(s / static_cast<double>(rows.size()));
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DecompositionNet& net)
{
    nlohmann::json j;
    j["schema_version"] = neural::kModelSchemaVersion;
    j["model_kind"] = "decomp";
    j["lambda_even"] = net.lambda_even();
    j["lambda_odd"] = net.lambda_odd();
    j["even_branch"] = neural::to_json(net.even_branch());
    j["odd_branch"] = neural::to_json(net.odd_branch());
    return j;
}

inline DecompositionNet decomposition_from_json(const nlohmann::json& j)
{
    try {
        if (j.value("model_kind", std::string()) != "decomp")
            throw FormatError("not a decomposition model (model_kind != 'decomp')");
        return DecompositionNet(neural::mlp_from_json(j.at("even_branch")), neural::mlp_from_json(j.at("odd_branch")),
                                j.at("lambda_even").get<double>(), j.at("lambda_odd").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed decomposition JSON: ") + e.what());
    }
}

} // namespace physnet::evenodd
