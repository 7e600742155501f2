#pragma once

// Batched computation graphs over real matrices (rows = samples, columns =
// features) with reverse-mode differentiation.
//
// Second derivatives are obtained by grad_graph(), which rewrites a scalar
// tape into a new tape computing its input gradient. Running ordinary
// reverse mode over that tape yields d(grad_x f)/d(params), which is all the
// Hamiltonian training loss needs.

#include "physnet/core.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace physnet::diffgraph {

class UnsupportedPrimitive : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class ActivationKind : std::uint8_t { Tanh, Sigmoid, ReLU, Sine };

inline constexpr ActivationKind kAllActivations[] = {ActivationKind::Tanh, ActivationKind::Sigmoid,
                                                     ActivationKind::ReLU, ActivationKind::Sine};

inline std::string_view to_string(ActivationKind kind)
{
    switch (kind) {
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::Sine: return "sine";
    }
    return "unknown";
}

inline ActivationKind parse_activation(std::string_view name)
{
    for (auto kind : kAllActivations)
        if (to_string(kind) == name)
            return kind;
    if (name == "sin")
        return ActivationKind::Sine;
    throw FormatError("unknown activation '" + std::string(name) + "'");
}

inline constexpr int kMaxActivationOrder = 2;

// Scalar reference implementation; the batched kernels below must agree with it.
inline double activate(ActivationKind kind, int order, double x)
{
    switch (kind) {
    case ActivationKind::Tanh: {
        const double t = std::tanh(x);
        if (order == 0) return t;
        if (order == 1) return 1.0 - t * t;
        return -2.0 * t * (1.0 - t * t);
    }
    case ActivationKind::Sigmoid: {
        const double s = 1.0 / (1.0 + std::exp(-x));
        if (order == 0) return s;
        if (order == 1) return s * (1.0 - s);
        return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case ActivationKind::ReLU:
        if (order == 0) return x > 0.0 ? x : 0.0;
        if (order == 1) return x > 0.0 ? 1.0 : 0.0;
        return 0.0;
    case ActivationKind::Sine:
        if (order == 0) return std::sin(x);
        if (order == 1) return std::cos(x);
        return -std::sin(x);
    }
    return kNaN;
}

inline void activate(ActivationKind kind, int order, const Matrix& z, Matrix& out)
{
    const auto a = z.array();
    out.resize(z.rows(), z.cols());
    auto o = out.array();
    switch (kind) {
    case ActivationKind::Tanh:
        // Eigen's double tanh is scalar; exp is vectorised. Absolute error ~3e-16.
        o = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
        if (order == 1)
            o = 1.0 - o.square();
        else if (order == 2)
            o = -2.0 * o * (1.0 - o.square());
        return;
    case ActivationKind::Sigmoid:
        o = 1.0 / (1.0 + (-a).exp());
        if (order == 1)
            o = o * (1.0 - o);
        else if (order == 2)
            o = o * (1.0 - o) * (1.0 - 2.0 * o);
        return;
    case ActivationKind::ReLU:
        if (order == 0)
            o = a.max(0.0);
        else if (order == 1)
            o = (a > 0.0).cast<double>();
        else
            o.setZero();
        return;
    case ActivationKind::Sine:
        if (order == 0)
            o = a.sin();
        else if (order == 1)
            o = a.cos();
        else
            o = -a.sin();
        return;
    }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// One affine layer: weight is out x in (stored row-major), bias has length out.
struct LayerShape {
    Index out = 0;
    Index in = 0;

    Index size() const { return out * in + out; }
    bool operator==(const LayerShape&) const = default;
};

class ParamStore {
public:
    using WeightMap = Eigen::Map<RowMajorMatrix>;
    using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;

    ParamStore() = default;

    explicit ParamStore(std::vector<LayerShape> layout)
        : layout_(std::move(layout))
    {
        compute_offsets();
        values_ = Vector::Zero(total_);
    }

    ParamStore(std::vector<LayerShape> layout, Vector values)
        : layout_(std::move(layout))
        , values_(std::move(values))
    {
        compute_offsets();
        require_shape(values_.size() == total_,
                      "parameter vector has " + std::to_string(values_.size()) + " entries, layout needs " +
                          std::to_string(total_));
    }

    const std::vector<LayerShape>& layout() const { return layout_; }
    int layer_count() const { return static_cast<int>(layout_.size()); }
    Index size() const { return total_; }

    const Vector& values() const { return values_; }
    Vector& values() { return values_; }

    Index offset(int layer) const { return offsets_.at(static_cast<std::size_t>(layer)); }

    ConstWeightMap weight(int layer) const
    {
        const auto& s = layout_.at(static_cast<std::size_t>(layer));
        return ConstWeightMap(values_.data() + offset(layer), s.out, s.in);
    }
    WeightMap weight(int layer)
    {
        const auto& s = layout_.at(static_cast<std::size_t>(layer));
        return WeightMap(values_.data() + offset(layer), s.out, s.in);
    }
    auto bias(int layer) const
    {
        const auto& s = layout_.at(static_cast<std::size_t>(layer));
        return values_.segment(offset(layer) + s.out * s.in, s.out);
    }
    auto bias(int layer)
    {
        const auto& s = layout_.at(static_cast<std::size_t>(layer));
        return values_.segment(offset(layer) + s.out * s.in, s.out);
    }

private:
    void compute_offsets()
    {
        offsets_.clear();
        total_ = 0;
        for (const auto& s : layout_) {
            require_shape(s.out > 0 && s.in > 0, "layer dimensions must be positive");
            offsets_.push_back(total_);
            total_ += s.size();
        }
    }

    std::vector<LayerShape> layout_;
    std::vector<Index> offsets_;
    Index total_ = 0;
    Vector values_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

enum class Op : std::uint8_t {
    Input,      // the batch of inputs
    Ones,       // constant 1s of a given width
    Zeros,      // constant 0s of a given width
    Affine,     // x W^T + b for layer `layer`
    LinearT,    // x W (the transpose map of an affine layer, no bias)
    Activation, // elementwise sigma^(order)(z)
    Sum,        // row sum -> width 1
    Broadcast,  // width 1 -> width w
    Slice,      // columns [offset, offset + width)
    Embed,      // place into zeros of width `width` at `offset`
    Scale,      // factor * a
    Add,
    Mul,        // elementwise
    Negate,
};

inline std::string_view to_string(Op op)
{
    switch (op) {
    case Op::Input: return "input";
    case Op::Ones: return "ones";
    case Op::Zeros: return "zeros";
    case Op::Affine: return "affine";
    case Op::LinearT: return "linear_t";
    case Op::Activation: return "activation";
    case Op::Sum: return "sum";
    case Op::Broadcast: return "broadcast";
    case Op::Slice: return "slice";
    case Op::Embed: return "embed";
    case Op::Scale: return "scale";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Negate: return "negate";
    }
    return "unknown";
}

struct NodeId {
    int index = -1;
    bool operator==(const NodeId&) const = default;
};

struct Node {
    Op op = Op::Input;
    int lhs = -1;
    int rhs = -1;
    int layer = -1;
    ActivationKind activation = ActivationKind::Tanh;
    int order = 0;
    double factor = 1.0;
    Index offset = 0;
    Index width = 0; // output width of this node
};

// A topologically ordered graph. Nodes can only reference earlier nodes, so
// construction order is evaluation order. Node 0 is always the input.
class Tape {
public:
    explicit Tape(Index input_width, std::vector<LayerShape> layout = {})
        : layout_(std::move(layout))
    {
        require_shape(input_width > 0, "tape input width must be positive");
        Node n;
        n.op = Op::Input;
        n.width = input_width;
        nodes_.push_back(n);
        output_ = 0;
    }

    int add_layer(LayerShape shape)
    {
        require_shape(shape.out > 0 && shape.in > 0, "layer dimensions must be positive");
        layout_.push_back(shape);
        return static_cast<int>(layout_.size()) - 1;
    }

    NodeId input() const { return NodeId{0}; }

    NodeId ones(Index width) { return constant(Op::Ones, width); }
    NodeId zeros(Index width) { return constant(Op::Zeros, width); }

    NodeId affine(NodeId x, int layer)
    {
        const auto& s = layer_shape(layer);
        require_shape(width(x) == s.in, "affine input width " + std::to_string(width(x)) + " != layer input " +
                                            std::to_string(s.in));
        Node n;
        n.op = Op::Affine;
        n.lhs = x.index;
        n.layer = layer;
        n.width = s.out;
        return push(n);
    }

    NodeId linear_t(NodeId x, int layer)
    {
        const auto& s = layer_shape(layer);
        require_shape(width(x) == s.out, "transpose-linear input width mismatch");
        Node n;
        n.op = Op::LinearT;
        n.lhs = x.index;
        n.layer = layer;
        n.width = s.in;
        return push(n);
    }

    NodeId activation(NodeId z, ActivationKind kind, int order = 0)
    {
        require(order >= 0 && order <= kMaxActivationOrder, "activation derivative order out of range");
        Node n;
        n.op = Op::Activation;
        n.lhs = checked(z);
        n.activation = kind;
        n.order = order;
        n.width = width(z);
        return push(n);
    }

    NodeId sum(NodeId a)
    {
        Node n;
        n.op = Op::Sum;
        n.lhs = checked(a);
        n.width = 1;
        return push(n);
    }

    NodeId broadcast(NodeId a, Index to_width)
    {
        require_shape(width(a) == 1, "broadcast needs a width-1 operand");
        require_shape(to_width > 0, "broadcast width must be positive");
        Node n;
        n.op = Op::Broadcast;
        n.lhs = a.index;
        n.width = to_width;
        return push(n);
    }

    NodeId slice(NodeId a, Index offset, Index count)
    {
        require_shape(offset >= 0 && count > 0 && offset + count <= width(a), "slice out of range");
        Node n;
        n.op = Op::Slice;
        n.lhs = a.index;
        n.offset = offset;
        n.width = count;
        return push(n);
    }

    NodeId embed(NodeId a, Index offset, Index total_width)
    {
        require_shape(offset >= 0 && offset + width(a) <= total_width, "embed out of range");
        Node n;
        n.op = Op::Embed;
        n.lhs = a.index;
        n.offset = offset;
        n.width = total_width;
        return push(n);
    }

    NodeId scale(NodeId a, double factor)
    {
        Node n;
        n.op = Op::Scale;
        n.lhs = checked(a);
        n.factor = factor;
        n.width = width(a);
        return push(n);
    }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }

    NodeId negate(NodeId a)
    {
        Node n;
        n.op = Op::Negate;
        n.lhs = checked(a);
        n.width = width(a);
        return push(n);
    }

    void set_output(NodeId out) { output_ = checked(out); }

    NodeId output() const { return NodeId{output_}; }
    Index input_width() const { return nodes_.front().width; }
    Index output_width() const { return nodes_[static_cast<std::size_t>(output_)].width; }
    Index width(NodeId id) const { return nodes_.at(static_cast<std::size_t>(checked(id))).width; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<LayerShape>& layout() const { return layout_; }

    // Used by grad_graph to start from an exact copy of the forward graph.
    Tape clone_with_output(NodeId out) const
    {
        Tape t = *this;
        t.set_output(out);
        return t;
    }

private:
    NodeId constant(Op op, Index w)
    {
        require_shape(w > 0, "constant width must be positive");
        Node n;
        n.op = op;
        n.width = w;
        return push(n);
    }

    NodeId binary(Op op, NodeId a, NodeId b)
    {
        require_shape(width(a) == width(b), std::string(to_string(op)) + " operands differ in width");
        Node n;
        n.op = op;
        n.lhs = a.index;
        n.rhs = b.index;
        n.width = width(a);
        return push(n);
    }

    int checked(NodeId id) const
    {
        require(id.index >= 0 && id.index < static_cast<int>(nodes_.size()), "node id does not belong to this tape");
        return id.index;
    }

    const LayerShape& layer_shape(int layer) const
    {
        require(layer >= 0 && layer < static_cast<int>(layout_.size()), "unknown parameter layer");
        return layout_[static_cast<std::size_t>(layer)];
    }

    NodeId push(const Node& n)
    {
        nodes_.push_back(n);
        return NodeId{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<LayerShape> layout_;
    std::vector<Node> nodes_;
    int output_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_params(const Tape& tape, const ParamStore& params)
{
    require_shape(tape.layout() == params.layout(), "parameter store layout does not match the tape");
}

inline void check_inputs(const Tape& tape, const Matrix& inputs)
{
    require_shape(inputs.cols() == tape.input_width(), "input has " + std::to_string(inputs.cols()) +
                                                           " columns, tape expects " +
                                                           std::to_string(tape.input_width()));
}

// Evaluates every node; values[i] is rows x width(i).
inline std::vector<Matrix> forward(const Tape& tape, const ParamStore& params, const Matrix& inputs)
{
    check_params(tape, params);
    check_inputs(tape, inputs);
    const auto& nodes = tape.nodes();
    const Index rows = inputs.rows();
    std::vector<Matrix> values(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& n = nodes[i];
        Matrix& out = values[i];
        switch (n.op) {
        case Op::Input: out = inputs; break;
        case Op::Ones: out = Matrix::Ones(rows, n.width); break;
        case Op::Zeros: out = Matrix::Zero(rows, n.width); break;
        case Op::Affine: {
            const auto& x = values[static_cast<std::size_t>(n.lhs)];
            out.resize(rows, n.width);
            out.noalias() = x * params.weight(n.layer).transpose();
            out.rowwise() += params.bias(n.layer).transpose();
            break;
        }
        case Op::LinearT: {
            const auto& x = values[static_cast<std::size_t>(n.lhs)];
            out.resize(rows, n.width);
            out.noalias() = x * params.weight(n.layer);
            break;
        }
        case Op::Activation:
            activate(n.activation, n.order, values[static_cast<std::size_t>(n.lhs)], out);
            break;
        case Op::Sum: out = values[static_cast<std::size_t>(n.lhs)].rowwise().sum(); break;
        case Op::Broadcast: out = values[static_cast<std::size_t>(n.lhs)].replicate(1, n.width); break;
        case Op::Slice: out = values[static_cast<std::size_t>(n.lhs)].middleCols(n.offset, n.width); break;
        case Op::Embed: {
            const auto& a = values[static_cast<std::size_t>(n.lhs)];
            out = Matrix::Zero(rows, n.width);
            out.middleCols(n.offset, a.cols()) = a;
            break;
        }
        case Op::Scale: out = n.factor * values[static_cast<std::size_t>(n.lhs)]; break;
        case Op::Add:
            out = values[static_cast<std::size_t>(n.lhs)] + values[static_cast<std::size_t>(n.rhs)];
            break;
        case Op::Mul:
            out = values[static_cast<std::size_t>(n.lhs)].cwiseProduct(values[static_cast<std::size_t>(n.rhs)]);
            break;
        case Op::Negate: out = -values[static_cast<std::size_t>(n.lhs)]; break;
        }
    }
    return values;
}

inline void accumulate(Matrix& target, const Matrix& contribution)
{
    if (target.size() == 0)
        target = contribution;
    else
        target += contribution;
}

// Nodes whose value depends on the input or on parameters; constants get no adjoint.
inline std::vector<bool> differentiable_nodes(const Tape& tape)
{
    const auto& nodes = tape.nodes();
    std::vector<bool> live(nodes.size(), false);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& n = nodes[i];
        switch (n.op) {
        case Op::Input:
        case Op::Affine:
        case Op::LinearT: live[i] = true; break;
        case Op::Ones:
        case Op::Zeros: live[i] = false; break;
        default:
            live[i] = (n.lhs >= 0 && live[static_cast<std::size_t>(n.lhs)]) ||
                      (n.rhs >= 0 && live[static_cast<std::size_t>(n.rhs)]);
        }
    }
    return live;
}

} // namespace detail

inline Matrix eval_batch(const Tape& tape, const ParamStore& params, const Matrix& inputs)
{
    auto values = detail::forward(tape, params, inputs);
    return std::move(values[static_cast<std::size_t>(tape.output().index)]);
}

inline Vector eval(const Tape& tape, const ParamStore& params, const Vector& input)
{
    require_shape(input.size() == tape.input_width(), "input has " + std::to_string(input.size()) +
                                                          " entries, tape expects " +
                                                          std::to_string(tape.input_width()));
    Matrix row = input.transpose();
    return eval_batch(tape, params, row).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Reverse mode
// ---------------------------------------------------------------------------

struct Gradients {
    Vector params;   // seed^T d(output)/d(params), summed over the batch
    Matrix inputs;   // per-row seed^T d(output)/d(input)
    Matrix output;   // forward value of the output node
};

// Vector-Jacobian products for a whole batch. The seed is computed from the
// forward output (so losses need only one forward pass) and must have its shape.
template <class SeedFn>
inline Gradients backward_with(const Tape& tape, const ParamStore& params, const Matrix& inputs, SeedFn&& make_seed)
{
    auto values = detail::forward(tape, params, inputs);
    const auto& nodes = tape.nodes();
    const auto out_index = static_cast<std::size_t>(tape.output().index);
    Matrix seed = make_seed(static_cast<const Matrix&>(values[out_index]));
    require_shape(seed.rows() == inputs.rows() && seed.cols() == nodes[out_index].width,
                  "seed shape does not match the tape output");

    const auto live = detail::differentiable_nodes(tape);
    std::vector<Matrix> adj(nodes.size());
    Gradients g;
    g.params = Vector::Zero(params.size());
    adj[out_index] = std::move(seed);

    for (std::size_t idx = out_index + 1; idx-- > 0;) {
        if (adj[idx].size() == 0 || !live[idx])
            continue;
        const Node& n = nodes[idx];
        const Matrix& a = adj[idx];
        const auto lhs = static_cast<std::size_t>(n.lhs);
        const auto rhs = static_cast<std::size_t>(n.rhs);
        switch (n.op) {
        case Op::Input:
        case Op::Ones:
        case Op::Zeros: break;
        case Op::Affine: {
            const auto& s = params.layout()[static_cast<std::size_t>(n.layer)];
            Eigen::Map<RowMajorMatrix> gw(g.params.data() + params.offset(n.layer), s.out, s.in);
            gw.noalias() += a.transpose() * values[lhs];
            g.params.segment(params.offset(n.layer) + s.out * s.in, s.out) += a.colwise().sum().transpose();
            if (live[lhs]) {
                Matrix dx = a * params.weight(n.layer);
                detail::accumulate(adj[lhs], dx);
            }
            break;
        }
        case Op::LinearT: {
            const auto& s = params.layout()[static_cast<std::size_t>(n.layer)];
            Eigen::Map<RowMajorMatrix> gw(g.params.data() + params.offset(n.layer), s.out, s.in);
            gw.noalias() += values[lhs].transpose() * a;
            if (live[lhs]) {
                Matrix dx = a * params.weight(n.layer).transpose();
                detail::accumulate(adj[lhs], dx);
            }
            break;
        }
        case Op::Activation: {
            if (n.order + 1 > kMaxActivationOrder)
                throw UnsupportedPrimitive("no derivative rule for activation derivative of order " +
                                           std::to_string(n.order));
            Matrix d;
            activate(n.activation, n.order + 1, values[lhs], d);
            d.array() *= a.array();
            detail::accumulate(adj[lhs], d);
            break;
        }
        case Op::Sum: detail::accumulate(adj[lhs], a.replicate(1, nodes[lhs].width)); break;
        case Op::Broadcast: detail::accumulate(adj[lhs], a.rowwise().sum()); break;
        case Op::Slice: {
            if (adj[lhs].size() == 0)
                adj[lhs] = Matrix::Zero(a.rows(), nodes[lhs].width);
            adj[lhs].middleCols(n.offset, n.width) += a;
            break;
        }
        case Op::Embed: detail::accumulate(adj[lhs], a.middleCols(n.offset, nodes[lhs].width)); break;
        case Op::Scale: detail::accumulate(adj[lhs], n.factor * a); break;
        case Op::Add:
            if (live[lhs]) detail::accumulate(adj[lhs], a);
            if (live[rhs]) detail::accumulate(adj[rhs], a);
            break;
        case Op::Mul:
            if (live[lhs]) detail::accumulate(adj[lhs], a.cwiseProduct(values[rhs]));
            if (live[rhs]) detail::accumulate(adj[rhs], a.cwiseProduct(values[lhs]));
            break;
        case Op::Negate: detail::accumulate(adj[lhs], -a); break;
        }
        if (idx != 0)
            adj[idx].resize(0, 0); // release workspace early
    }

    g.inputs = adj[0].size() == 0 ? Matrix::Zero(inputs.rows(), inputs.cols()) : std::move(adj[0]);
    g.output = std::move(values[out_index]);
    return g;
}

inline Gradients backward(const Tape& tape, const ParamStore& params, const Matrix& inputs, const Matrix& seed)
{
    return backward_with(tape, params, inputs, [&seed](const Matrix&) { return seed; });
}

inline Vector grad_params(const Tape& tape, const ParamStore& params, const Vector& input, const Vector& seed)
{
    require_shape(input.size() == tape.input_width(), "input length does not match tape input width");
    require_shape(seed.size() == tape.output_width(), "seed length does not match tape output width");
    Matrix in = input.transpose();
    Matrix s = seed.transpose();
    return backward(tape, params, in, s).params;
}

inline Matrix grad_inputs_batch(const Tape& tape, const ParamStore& params, const Matrix& inputs)
{
    require(tape.output_width() == 1, "input gradient requires a scalar-output tape");
    return backward(tape, params, inputs, Matrix::Ones(inputs.rows(), 1)).inputs;
}

inline Vector grad_inputs(const Tape& tape, const ParamStore& params, const Vector& input)
{
    require_shape(input.size() == tape.input_width(), "input length does not match tape input width");
    Matrix in = input.transpose();
    return grad_inputs_batch(tape, params, in).row(0).transpose();
}

// Builds a tape whose output is grad_input of `tape`'s scalar output. The new
// tape shares the parameter layout and contains a copy of the forward graph,
// followed by the adjoint computation expressed with first-order primitives.
inline Tape grad_graph(const Tape& tape)
{
    require(tape.output_width() == 1, "grad_graph requires a scalar-output tape");
    Tape g = tape.clone_with_output(tape.output());
    const auto& nodes = tape.nodes();
    const auto live = detail::differentiable_nodes(tape);
    const auto out_index = static_cast<std::size_t>(tape.output().index);
    std::vector<std::optional<NodeId>> adj(nodes.size());

    auto contribute = [&](std::size_t target, NodeId c) {
        if (!live[target])
            return;
        adj[target] = adj[target] ? g.add(*adj[target], c) : c;
    };

    adj[out_index] = g.ones(1);
    for (std::size_t idx = out_index + 1; idx-- > 0;) {
        if (!adj[idx] || !live[idx])
            continue;
        const Node& n = nodes[idx];
        const NodeId a = *adj[idx];
        const NodeId lhs{n.lhs};
        const NodeId rhs{n.rhs};
        const auto l = static_cast<std::size_t>(n.lhs);
        const auto r = static_cast<std::size_t>(n.rhs);
        switch (n.op) {
        case Op::Input:
        case Op::Ones:
        case Op::Zeros: break;
        case Op::Affine: contribute(l, g.linear_t(a, n.layer)); break;
        case Op::Activation:
            if (n.order != 0)
                throw UnsupportedPrimitive("grad_graph cannot differentiate an activation derivative node");
            contribute(l, g.mul(a, g.activation(lhs, n.activation, 1)));
            break;
        case Op::Sum: contribute(l, g.broadcast(a, nodes[l].width)); break;
        case Op::Broadcast: contribute(l, g.sum(a)); break;
        case Op::Slice: contribute(l, g.embed(a, n.offset, nodes[l].width)); break;
        case Op::Embed: contribute(l, g.slice(a, n.offset, nodes[l].width)); break;
        case Op::Scale: contribute(l, g.scale(a, n.factor)); break;
        case Op::Add:
            contribute(l, a);
            contribute(r, a);
            break;
        case Op::Mul:
            if (live[l]) contribute(l, g.mul(a, rhs));
            if (live[r]) contribute(r, g.mul(a, lhs));
            break;
        case Op::Negate: contribute(l, g.negate(a)); break;
        case Op::LinearT:
            throw UnsupportedPrimitive("grad_graph has no rule for primitive '" + std::string(to_string(n.op)) + "'");
        }
    }
    g.set_output(adj[0] ? *adj[0] : g.zeros(tape.input_width()));
    return g;
}

// ---------------------------------------------------------------------------
// MLP tapes
// ---------------------------------------------------------------------------

inline std::vector<LayerShape> mlp_layout(const std::vector<Index>& layer_sizes)
{
    require(layer_sizes.size() >= 2, "an MLP needs at least input and output sizes");
    std::vector<LayerShape> layout;
    for (std::size_t i = 1; i < layer_sizes.size(); ++i)
        layout.push_back(LayerShape{layer_sizes[i], layer_sizes[i - 1]});
    return layout;
}

// Hidden stack only: returns the activations of the last hidden layer.
inline NodeId mlp_hidden(Tape& tape, NodeId x, ActivationKind act)
{
    const int hidden_layers = static_cast<int>(tape.layout().size()) - 1;
    NodeId h = x;
    for (int l = 0; l < hidden_layers; ++l)
        h = tape.activation(tape.affine(h, l), act);
    return h;
}

inline Tape mlp_tape(const std::vector<Index>& layer_sizes, ActivationKind act)
{
    Tape tape(layer_sizes.front(), mlp_layout(layer_sizes));
    const NodeId h = mlp_hidden(tape, tape.input(), act);
    tape.set_output(tape.affine(h, static_cast<int>(tape.layout().size()) - 1));
    return tape;
}

} // namespace physnet::diffgraph
