#pragma once

// Hamiltonian neural networks and the direct-derivative baseline.
//
// An HNN is a scalar network H(q, p); its vector field is (dH/dp, -dH/dq).
// Training matches that field to target derivatives, which needs the
// parameter-gradient of an input-gradient: we differentiate the energy tape
// symbolically once (diffgraph::grad_graph) and backpropagate through the result.

#include "physnet/core.hpp"
#include "physnet/diffgraph.hpp"
#include "physnet/integrate.hpp"
#include "physnet/neural.hpp"
#include "physnet/systems.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <variant>

namespace physnet::hamiltonian {

using diffgraph::ParamStore;
using diffgraph::Tape;
using neural::MLP;
using State = ode::State;

// Vector field of an energy tape on a batch of (q, p) rows -> rows of (dq/dt, dp/dt).
inline Matrix symplectic_field(const Tape& energy, const ParamStore& params, const Matrix& states)
{
    const Matrix g = diffgraph::grad_inputs_batch(energy, params, states); // (dH/dq, dH/dp)
    Matrix f(states.rows(), 2);
    f.col(0) = g.col(1);
    f.col(1) = -g.col(0);
    return f;
}

// mean((dH/dp - q_dot)^2) + mean((dH/dq + p_dot)^2), gradient through the grad tape.
inline double hnn_loss(const Tape& grad_tape, const ParamStore& params, const Matrix& states, const Matrix& targets,
                       Vector* grad)
{
    require(states.rows() > 0, "HNN loss needs a non-empty batch");
    require_shape(states.cols() == 2 && targets.cols() == 2 && targets.rows() == states.rows(),
                  "HNN batches are rows of (q, p) with targets (dq/dt, dp/dt)");
    const auto n = static_cast<double>(states.rows());
    auto residual = [&](const Matrix& g) {
        Matrix r(g.rows(), 2); // aligned with the grad tape's (dH/dq, dH/dp) output
        r.col(0) = g.col(0) + targets.col(1);
        r.col(1) = g.col(1) - targets.col(0);
        return r;
    };
    if (!grad) {
        const Matrix r = residual(diffgraph::eval_batch(grad_tape, params, states));
        return r.squaredNorm() / n;
    }
    double loss = 0.0;
    *grad = diffgraph::backward_with(grad_tape, params, states, [&](const Matrix& g) {
                const Matrix r = residual(g);
                loss = r.squaredNorm() / n;
                return Matrix((2.0 / n) * r);
            }).params;
    return loss;
}

// ---------------------------------------------------------------------------
// HNN
// ---------------------------------------------------------------------------

class Hnn {
public:
    // Arbitrary scalar energy tape over (q, p) -- used for closed-form oracles.
    Hnn(Tape energy, ParamStore params)
        : energy_(std::make_shared<const Tape>(std::move(energy)))
        , params_(std::move(params))
    {
        require(energy_->input_width() == 2 && energy_->output_width() == 1,
                "an HNN energy maps (q, p) to a scalar");
        grad_ = std::make_shared<const Tape>(diffgraph::grad_graph(*energy_));
    }

    explicit Hnn(MLP net)
        : Hnn(net.tape(), net.params())
    {
        net_ = std::move(net);
        require(net_->config().output_mode == neural::OutputMode::Plain, "HNN networks use the plain output mode");
    }

    static Hnn make(diffgraph::ActivationKind activation, std::uint64_t seed, std::vector<Index> hidden = {200, 200})
    {
        std::vector<Index> sizes{2};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        return Hnn(MLP(neural::MLPConfig{sizes, activation, neural::OutputMode::Plain, seed}));
    }

    bool has_net() const { return net_.has_value(); }
    const MLP& net() const
    {
        require(net_.has_value(), "this HNN was built from a custom energy tape");
        return *net_;
    }

    const Tape& energy_tape() const { return *energy_; }
    const Tape& grad_tape() const { return *grad_; }
    const ParamStore& params() const { return params_; }

    void set_params(const ParamStore& params)
    {
        require_shape(params.layout() == params_.layout(), "parameter layout mismatch");
        params_ = params;
        if (net_)
            net_->params() = params;
    }

    double energy(double q, double p) const { return diffgraph::eval(*energy_, params_, systems::state2(q, p))(0); }

    Matrix dynamics_batch(const Matrix& states) const { return symplectic_field(*energy_, params_, states); }

    State dynamics(const State& y) const
    {
        require_shape(y.size() == 2, "state must be (q, p)");
        return dynamics_batch(y.transpose()).row(0).transpose();
    }

    double loss(const Matrix& states, const Matrix& targets, Vector* grad = nullptr) const
    {
        return hnn_loss(*grad_, params_, states, targets, grad);
    }

    ode::Field field() const
    {
        return [self = *this](double, const State& y) { return self.dynamics(y); };
    }

private:
    std::shared_ptr<const Tape> energy_;
    std::shared_ptr<const Tape> grad_;
    ParamStore params_;
    std::optional<MLP> net_;
};

// ---------------------------------------------------------------------------
// Baseline: the network outputs (dq/dt, dp/dt) directly.
// ---------------------------------------------------------------------------

class Baseline {
public:
    explicit Baseline(MLP net)
        : net_(std::move(net))
    {
        require(net_.input_dim() == 2 && net_.output_dim() == 2, "baseline networks map (q, p) to (dq/dt, dp/dt)");
    }

    static Baseline make(diffgraph::ActivationKind activation, std::uint64_t seed,
                         std::vector<Index> hidden = {200, 200})
    {
        std::vector<Index> sizes{2};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(2);
        return Baseline(MLP(neural::MLPConfig{sizes, activation, neural::OutputMode::Plain, seed}));
    }

    const MLP& net() const { return net_; }
    MLP& net() { return net_; }

    Matrix dynamics_batch(const Matrix& states) const { return net_.evaluate(states); }

    State dynamics(const State& y) const
    {
        require_shape(y.size() == 2, "state must be (q, p)");
        return neural::forward(net_, y);
    }

    ode::Field field() const
    {
        return [self = *this](double, const State& y) { return self.dynamics(y); };
    }

private:
    MLP net_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Rows of (q, p) with targets (dq/dt, dp/dt).
inline neural::Dataset make_dataset(const systems::TrajectoryData& traj)
{
    neural::Dataset d;
    d.inputs = traj.states();
    d.targets = traj.derivatives();
    d.noise_sigma = traj.noise_sigma;
    d.generator = std::string(systems::to_string(traj.source));
    return d;
}

inline neural::LossSpec hnn_loss_spec(std::shared_ptr<const Tape> grad_tape)
{
    return neural::CustomLoss{[grad_tape](const ParamStore& params, const neural::Dataset& data,
                                          const std::vector<Index>& rows, Vector* grad) {
        if (rows.empty())
            return hnn_loss(*grad_tape, params, data.inputs, data.targets, grad);
        const auto batch = data.rows(rows);
        return hnn_loss(*grad_tape, params, batch.inputs, batch.targets, grad);
    }};
}

struct HnnTrainResult {
    Hnn model;
    std::vector<neural::EpochRecord> history;
};

inline HnnTrainResult train_hnn(const Hnn& model, const neural::Dataset& data, const neural::TrainConfig& cfg,
                                const neural::Dataset* validation = nullptr)
{
    require(data.targets.cols() == 2, "HNN targets are (dq/dt, dp/dt)");
    auto grad_tape = std::make_shared<const Tape>(model.grad_tape());
    auto result = neural::train(model.net(), data, hnn_loss_spec(grad_tape), cfg, validation);
    return {Hnn(std::move(result.model)), std::move(result.history)};
}

struct BaselineTrainResult {
    Baseline model;
    std::vector<neural::EpochRecord> history;
};

inline BaselineTrainResult train_baseline(const Baseline& model, const neural::Dataset& data,
                                          const neural::TrainConfig& cfg, const neural::Dataset* validation = nullptr)
{
    auto result = neural::train(model.net(), data, neural::MseLoss{}, cfg, validation);
    return {Baseline(std::move(result.model)), std::move(result.history)};
}

// ---------------------------------------------------------------------------
// Serialization: the neural model JSON plus model_kind.
// ---------------------------------------------------------------------------

using DynamicsModel = std::variant<Hnn, Baseline>;

inline nlohmann::json to_json(const Hnn& m) { return neural::to_json(m.net(), "hnn"); }
inline nlohmann::json to_json(const Baseline& m) { return neural::to_json(m.net(), "baseline"); }

inline DynamicsModel dynamics_model_from_json(const nlohmann::json& j)
{
    const std::string kind = j.value("model_kind", std::string());
    MLP net = neural::mlp_from_json(j);
    if (kind == "hnn")
        return Hnn(std::move(net));
    if (kind == "baseline")
        return Baseline(std::move(net));
    throw FormatError("model_kind must be 'hnn' or 'baseline' (got '" + kind + "')");
}

inline ode::Field field_of(const DynamicsModel& m)
{
    return std::visit([](const auto& model) { return model.field(); }, m);
}

} // namespace physnet::hamiltonian
