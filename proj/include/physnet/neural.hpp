#pragma once

#include "physnet/core.hpp"
#include "physnet/diffgraph.hpp"

#include <json.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace physnet::neural {

using diffgraph::ActivationKind;
using diffgraph::ParamStore;
using diffgraph::Tape;

class TrainingDivergence : public Error {
public:
    TrainingDivergence(int epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what)
        , epoch_(epoch)
    {
    }
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class OutputMode { Plain, EvenHub, OddHub };
enum class Parity { Even, Odd };

inline std::string_view to_string(OutputMode mode)
{
    switch (mode) {
    case OutputMode::Plain: return "plain";
    case OutputMode::EvenHub: return "even-hub";
    case OutputMode::OddHub: return "odd-hub";
    }
    return "unknown";
}

inline OutputMode parse_output_mode(std::string_view name)
{
    if (name == "plain") return OutputMode::Plain;
    if (name == "even-hub") return OutputMode::EvenHub;
    if (name == "odd-hub") return OutputMode::OddHub;
    throw FormatError("unknown output mode '" + std::string(name) + "'");
}

struct MLPConfig {
    std::vector<Index> layer_sizes;
    ActivationKind activation = ActivationKind::Tanh;
    OutputMode output_mode = OutputMode::Plain;
    std::uint64_t seed = 0;

    void validate() const
    {
        require(layer_sizes.size() >= 3, "MLP needs at least one hidden layer");
        for (auto s : layer_sizes)
            require(s > 0, "layer sizes must be positive");
        if (output_mode != OutputMode::Plain)
            require(layer_sizes.front() == 1 && layer_sizes.back() == 1,
                    "hub output modes need scalar input and scalar output");
    }
};

// Plain: the usual stack. Hub modes evaluate the hidden stack at +t and -t with
// shared weights and combine the final affine outputs:
//   even: (A(h(t)) + A(h(-t))) / 2  = 1/2 sum_i w_i [h_i(t) + h_i(-t)] + b
//   odd:  (A(h(t)) - A(h(-t))) / 2  = 1/2 sum_i w_i [h_i(t) - h_i(-t)]
// Both are exact parities in floating point because the combination is commutative.
inline Tape build_tape(const MLPConfig& cfg)
{
    if (cfg.output_mode == OutputMode::Plain)
        return diffgraph::mlp_tape(cfg.layer_sizes, cfg.activation);

    Tape tape(1, diffgraph::mlp_layout(cfg.layer_sizes));
    const int last = static_cast<int>(tape.layout().size()) - 1;
    const auto x = tape.input();
    const auto plus = tape.affine(diffgraph::mlp_hidden(tape, x, cfg.activation), last);
    const auto minus = tape.affine(diffgraph::mlp_hidden(tape, tape.negate(x), cfg.activation), last);
    const auto combined =
        cfg.output_mode == OutputMode::EvenHub ? tape.add(plus, minus) : tape.add(plus, tape.negate(minus));
    tape.set_output(tape.scale(combined, 0.5));
    return tape;
}

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline ParamStore glorot_init(const std::vector<diffgraph::LayerShape>& layout, std::uint64_t seed)
{
    ParamStore params(layout);
    std::mt19937_64 rng(seed);
    for (int l = 0; l < params.layer_count(); ++l) {
        const auto& s = layout[static_cast<std::size_t>(l)];
        const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto w = params.weight(l);
        for (Index r = 0; r < w.rows(); ++r)
            for (Index c = 0; c < w.cols(); ++c)
                w(r, c) = dist(rng);
    }
    return params;
}

class MLP {
public:
    MLP() = default;

    explicit MLP(MLPConfig cfg)
        : cfg_(std::move(cfg))
    {
        cfg_.validate();
        tape_ = std::make_shared<const Tape>(build_tape(cfg_));
        params_ = glorot_init(tape_->layout(), cfg_.seed);
    }

    MLP(MLPConfig cfg, ParamStore params)
        : cfg_(std::move(cfg))
        , params_(std::move(params))
    {
        cfg_.validate();
        tape_ = std::make_shared<const Tape>(build_tape(cfg_));
        require_shape(params_.layout() == tape_->layout(), "parameter count does not match MLP configuration");
    }

    const MLPConfig& config() const { return cfg_; }
    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }
    const Tape& tape() const { return *tape_; }

    Index input_dim() const { return cfg_.layer_sizes.front(); }
    Index output_dim() const { return cfg_.layer_sizes.back(); }

    // Batched evaluation in whatever output mode the model was built with.
    Matrix evaluate(const Matrix& inputs) const { return diffgraph::eval_batch(*tape_, params_, inputs); }

    double evaluate_scalar(double t) const
    {
        Matrix in(1, 1);
        in(0, 0) = t;
        return evaluate(in)(0, 0);
    }

private:
    MLPConfig cfg_;
    std::shared_ptr<const Tape> tape_;
    ParamStore params_;
};

inline Vector forward(const MLP& model, const Vector& x)
{
    require(model.config().output_mode == OutputMode::Plain, "forward() is for plain models");
    return diffgraph::eval(model.tape(), model.params(), x);
}

inline double forward_even_hub(const MLP& model, double t)
{
    require(model.config().output_mode == OutputMode::EvenHub, "model is not an even-hub network");
    return model.evaluate_scalar(t);
}

inline double forward_odd_hub(const MLP& model, double t)
{
    require(model.config().output_mode == OutputMode::OddHub, "model is not an odd-hub network");
    return model.evaluate_scalar(t);
}

inline Matrix column(std::span<const double> xs)
{
    Matrix m(static_cast<Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i)
        m(static_cast<Index>(i), 0) = xs[i];
    return m;
}

// Even: mean((f(x) - f(-x))^2); Odd: mean((f(x) + f(-x))^2).
inline double symmetry_metric(const MLP& model, std::span<const double> xs, Parity parity)
{
    require(!xs.empty(), "symmetry metric needs at least one point");
    require(model.input_dim() == 1 && model.output_dim() == 1, "symmetry metric needs a scalar model");
    const Matrix x = column(xs);
    const Matrix fp = model.evaluate(x);
    const Matrix fm = model.evaluate(-x);
    const Matrix d = parity == Parity::Even ? Matrix(fp - fm) : Matrix(fp + fm);
    return d.squaredNorm() / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct Dataset {
    Matrix inputs;
    Matrix targets;
    std::optional<double> noise_sigma;
    std::string generator;

    Index size() const { return inputs.rows(); }

    void validate() const
    {
        require(inputs.rows() == targets.rows(), "dataset inputs and targets differ in row count");
        require(inputs.rows() > 0, "dataset is empty");
        require(inputs.allFinite() && targets.allFinite(), "dataset contains non-finite values");
    }

    Dataset rows(std::span<const Index> idx) const
    {
        Dataset d;
        d.inputs.resize(static_cast<Index>(idx.size()), inputs.cols());
        d.targets.resize(static_cast<Index>(idx.size()), targets.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            d.inputs.row(static_cast<Index>(i)) = inputs.row(idx[i]);
            d.targets.row(static_cast<Index>(i)) = targets.row(idx[i]);
        }
        d.noise_sigma = noise_sigma;
        d.generator = generator;
        return d;
    }
};

// n points uniform on [lo, hi] with targets f(x) + N(0, sigma^2).
inline Dataset sample_function(const std::function<double(double)>& f, TimeSpan interval, Index n, double sigma,
                               std::uint64_t seed, std::string generator = "")
{
    require(sigma >= 0.0, "noise sigma must be nonnegative");
    const auto xs = uniform_grid(interval, n);
    Dataset d;
    d.inputs.resize(n, 1);
    d.targets.resize(n, 1);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
        const double x = xs[static_cast<std::size_t>(i)];
        d.inputs(i, 0) = x;
        d.targets(i, 0) = f(x) + (sigma > 0.0 ? sigma * noise(rng) : 0.0);
    }
    d.noise_sigma = sigma;
    d.generator = std::move(generator);
    return d;
}

// Seeded random split; the first part gets round(fraction * n) rows.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed)
{
    require(fraction > 0.0 && fraction < 1.0, "split fraction must be in (0, 1)");
    std::vector<Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
    require(cut > 0 && cut < order.size(), "split leaves an empty part");
    std::vector<Index> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<Index> second(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {data.rows(first), data.rows(second)};
}

// ---------------------------------------------------------------------------
// Optimisation
// ---------------------------------------------------------------------------

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};
struct Sgd {};
using Optimizer = std::variant<Adam, Sgd>;

struct FullBatch {};
struct MiniBatch {
    Index size = 32;
};
using BatchMode = std::variant<FullBatch, MiniBatch>;

struct TrainConfig {
    int epochs = 2000;
    double learning_rate = 1e-3;
    Optimizer optimizer = Adam{};
    BatchMode batch_mode = FullBatch{};
    std::map<std::string, double> loss_weights;
    std::uint64_t seed = 0;
    // Record this parity's symmetry metric on the training inputs every epoch.
    std::optional<Parity> track_symmetry;

    double weight(const std::string& name, double fallback) const
    {
        const auto it = loss_weights.find(name);
        return it == loss_weights.end() ? fallback : it->second;
    }

    void validate() const
    {
        require(epochs >= 1, "epochs must be at least 1");
        require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning rate must be finite and >= 0");
        for (const auto& [name, w] : loss_weights)
            require(w >= 0.0, "loss weight '" + name + "' is negative");
        if (const auto* mb = std::get_if<MiniBatch>(&batch_mode))
            require(mb->size > 0, "mini-batch size must be positive");
    }
};

struct EpochRecord {
    int epoch = 0;
    double loss = kNaN;
    double metric = kNaN;
    double test_loss = kNaN;
};

// Loss and gradient over a subset of rows. `grad` may be null for value-only calls.
using Objective = std::function<double(const Vector& params, const std::vector<Index>& rows, Vector* grad)>;
using Monitor = std::function<void(const Vector& params, EpochRecord& record)>;

// Runs the optimiser in place over a flat parameter vector. `rows` passed to the
// objective is empty for full-batch steps (meaning "all rows").
inline std::vector<EpochRecord> optimize(Vector& params, Index n_rows, const Objective& objective,
                                         const TrainConfig& cfg, const Monitor& monitor = {})
{
    cfg.validate();
    std::vector<EpochRecord> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));

    Vector m = Vector::Zero(params.size());
    Vector v = Vector::Zero(params.size());
    Vector grad(params.size());
    long step = 0;
    std::mt19937_64 rng(cfg.seed);
    std::vector<Index> order(static_cast<std::size_t>(n_rows));
    std::iota(order.begin(), order.end(), Index{0});

    auto apply = [&](const Vector& g) {
        ++step;
        if (const auto* adam = std::get_if<Adam>(&cfg.optimizer)) {
            m = adam->beta1 * m + (1.0 - adam->beta1) * g;
            v = adam->beta2 * v + (1.0 - adam->beta2) * g.cwiseProduct(g);
            const double c1 = 1.0 - std::pow(adam->beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(adam->beta2, static_cast<double>(step));
            params.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + adam->epsilon);
        } else {
            params -= cfg.learning_rate * g;
        }
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        if (std::holds_alternative<FullBatch>(cfg.batch_mode)) {
            rec.loss = objective(params, {}, &grad);
            if (!std::isfinite(rec.loss) || !grad.allFinite())
                throw TrainingDivergence(epoch, "non-finite loss or gradient");
            apply(grad);
        } else {
            const Index bs = std::get<MiniBatch>(cfg.batch_mode).size;
            std::shuffle(order.begin(), order.end(), rng);
            double total = 0.0;
            Index seen = 0;
            for (Index start = 0; start < n_rows; start += bs) {
                const Index end = std::min(n_rows, start + bs);
                std::vector<Index> rows(order.begin() + start, order.begin() + end);
                const double loss = objective(params, rows, &grad);
                if (!std::isfinite(loss) || !grad.allFinite())
                    throw TrainingDivergence(epoch, "non-finite loss or gradient");
                total += loss * static_cast<double>(end - start);
                seen += end - start;
                apply(grad);
            }
            rec.loss = total / static_cast<double>(seen);
        }
        if (!params.allFinite())
            throw TrainingDivergence(epoch, "parameters became non-finite");
        if (monitor)
            monitor(params, rec);
        history.push_back(rec);
    }
    return history;
}

// ---------------------------------------------------------------------------
// Losses for single MLPs
// ---------------------------------------------------------------------------

struct MseLoss {};

// mse + weight * symmetry metric over the batch inputs' mirrored pairs.
struct SymmetryLoss {
    Parity parity = Parity::Even;
    double weight = 1.0;
};

// Hook for losses owned by other modules (e.g. the Hamiltonian loss). Receives
// the current parameters, the dataset and a batch of rows (empty = all).
struct CustomLoss {
    std::function<double(const ParamStore& params, const Dataset& data, const std::vector<Index>& rows, Vector* grad)>
        fn;
};

using LossSpec = std::variant<MseLoss, SymmetryLoss, CustomLoss>;

namespace detail {

inline double mse_loss(const Tape& tape, const ParamStore& params, const Matrix& x, const Matrix& y, Vector* grad)
{
    const auto n = static_cast<double>(x.rows());
    if (!grad) {
        const Matrix r = diffgraph::eval_batch(tape, params, x) - y;
        return r.squaredNorm() / n;
    }
    double loss = 0.0;
    *grad = diffgraph::backward_with(tape, params, x, [&](const Matrix& f) {
                Matrix r = f - y;
                loss = r.squaredNorm() / n;
                return Matrix((2.0 / n) * r);
            }).params;
    return loss;
}

// mean((f(x) -+ f(-x))^2) and its gradient.
inline double symmetry_term(const Tape& tape, const ParamStore& params, const Matrix& x, Parity parity, Vector* grad)
{
    const auto n = static_cast<double>(x.rows());
    const Matrix xm = -x;
    const Matrix fp = diffgraph::eval_batch(tape, params, x);
    const Matrix fm = diffgraph::eval_batch(tape, params, xm);
    const double sign = parity == Parity::Even ? -1.0 : 1.0;
    const Matrix d = fp + sign * fm;
    if (grad) {
        const Matrix seed = (2.0 / n) * d;
        *grad = diffgraph::backward(tape, params, x, seed).params +
                sign * diffgraph::backward(tape, params, xm, seed).params;
    }
    return d.squaredNorm() / n;
}

} // namespace detail

inline double loss_value(const MLP& model, const Dataset& data, const LossSpec& loss)
{
    return std::visit(
        [&](const auto& spec) -> double {
            using T = std::decay_t<decltype(spec)>;
            if constexpr (std::is_same_v<T, MseLoss>) {
                return detail::mse_loss(model.tape(), model.params(), data.inputs, data.targets, nullptr);
            } else if constexpr (std::is_same_v<T, SymmetryLoss>) {
                return detail::mse_loss(model.tape(), model.params(), data.inputs, data.targets, nullptr) +
                       spec.weight * detail::symmetry_term(model.tape(), model.params(), data.inputs, spec.parity,
                                                           nullptr);
            } else {
                return spec.fn(model.params(), data, {}, nullptr);
            }
        },
        loss);
}

struct TrainResult {
    MLP model;
    std::vector<EpochRecord> history;
};

inline std::vector<double> column_values(const Matrix& m, Index col = 0)
{
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i)
        out[static_cast<std::size_t>(i)] = m(i, col);
    return out;
}

// Trains a copy of `model`. If `validation` is given its loss is recorded as test_loss.
inline TrainResult train(const MLP& model, const Dataset& data, const LossSpec& loss, const TrainConfig& cfg,
                         const Dataset* validation = nullptr)
{
    data.validate();
    cfg.validate();
    require(data.inputs.cols() == model.input_dim(), "dataset input width does not match the model");
    if (!std::holds_alternative<CustomLoss>(loss))
        require(data.targets.cols() == model.output_dim(), "dataset target width does not match the model");

    TrainResult result{model, {}};
    const Tape& tape = model.tape();
    ParamStore work = model.params();

    Objective objective = [&](const Vector& p, const std::vector<Index>& rows, Vector* grad) -> double {
        work.values() = p;
        const Dataset* batch = &data;
        Dataset subset;
        if (!rows.empty() && !std::holds_alternative<CustomLoss>(loss)) {
            subset = data.rows(rows);
            batch = &subset;
        }
        return std::visit(
            [&](const auto& spec) -> double {
                using T = std::decay_t<decltype(spec)>;
                if constexpr (std::is_same_v<T, MseLoss>) {
                    return detail::mse_loss(tape, work, batch->inputs, batch->targets, grad);
                } else if constexpr (std::is_same_v<T, SymmetryLoss>) {
                    Vector g_sym;
                    const double fit = detail::mse_loss(tape, work, batch->inputs, batch->targets, grad);
                    const double sym =
                        detail::symmetry_term(tape, work, batch->inputs, spec.parity, grad ? &g_sym : nullptr);
                    if (grad)
                        *grad += spec.weight * g_sym;
                    return fit + spec.weight * sym;
                } else {
                    return spec.fn(work, data, rows, grad);
                }
            },
            loss);
    };

    std::vector<double> xs;
    if (cfg.track_symmetry)
        xs = column_values(data.inputs);

    Monitor monitor = [&](const Vector& p, EpochRecord& rec) {
        if (!cfg.track_symmetry && !validation)
            return;
        result.model.params().values() = p;
        if (cfg.track_symmetry)
            rec.metric = symmetry_metric(result.model, xs, *cfg.track_symmetry);
        if (validation)
            rec.test_loss = loss_value(result.model, *validation, loss);
    };

    Vector p = model.params().values();
    result.history = optimize(p, data.size(), objective, cfg, monitor);
    result.model.params().values() = p;
    return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kModelSchemaVersion = 1;

inline nlohmann::json to_json(const MLP& model, std::string_view model_kind = "")
{
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    if (!model_kind.empty())
        j["model_kind"] = std::string(model_kind);
    j["layer_sizes"] = model.config().layer_sizes;
    j["activation"] = std::string(diffgraph::to_string(model.config().activation));
    j["output_mode"] = std::string(to_string(model.config().output_mode));
    j["seed"] = model.config().seed;
    const Vector& v = model.params().values();
    j["params"] = std::vector<double>(v.data(), v.data() + v.size());
    return j;
}

inline MLP mlp_from_json(const nlohmann::json& j)
{
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion)
            throw FormatError("unsupported model schema_version " + std::to_string(version));
        MLPConfig cfg;
        cfg.layer_sizes = j.at("layer_sizes").get<std::vector<Index>>();
        cfg.activation = diffgraph::parse_activation(j.at("activation").get<std::string>());
        cfg.output_mode = parse_output_mode(j.at("output_mode").get<std::string>());
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.validate();
        const auto values = j.at("params").get<std::vector<double>>();
        Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
        return MLP(cfg, ParamStore(diffgraph::mlp_layout(cfg.layer_sizes), std::move(v)));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model JSON: ") + e.what());
    }
}

} // namespace physnet::neural
