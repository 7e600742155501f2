// physnet command-line interface.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. All flags are
// validated before any computation starts.

#include "physnet/physnet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace physnet;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Thrown while turning flag strings into configuration: maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flag value parsing
// ---------------------------------------------------------------------------

double to_double(const std::string& s, const std::string& flag)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v))
            return v;
    } catch (const std::exception&) {
    }
    throw UsageError(flag + ": '" + s + "' is not a finite number");
}

std::vector<double> to_doubles(const std::string& s, char sep, const std::string& flag)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        out.push_back(to_double(item, flag));
    if (!s.empty() && s.back() == sep)
        throw UsageError(flag + ": trailing '" + std::string(1, sep) + "'");
    return out;
}

TimeSpan to_span(const std::string& s, const std::string& flag)
{
    const auto v = to_doubles(s, ':', flag);
    if (v.size() != 2 || !(v[1] > v[0]))
        throw UsageError(flag + ": expected t0:t1 with t1 > t0, got '" + s + "'");
    return {v[0], v[1]};
}

ode::State to_state(const std::string& s, const std::string& flag)
{
    const auto v = to_doubles(s, ',', flag);
    if (v.size() != 2)
        throw UsageError(flag + ": expected q,p, got '" + s + "'");
    return systems::state2(v[0], v[1]);
}

std::vector<Index> to_sizes(const std::string& s, const std::string& flag)
{
    std::vector<Index> out;
    for (double v : to_doubles(s, ',', flag)) {
        if (v < 1 || v != std::floor(v))
            throw UsageError(flag + ": layer widths must be positive integers");
        out.push_back(static_cast<Index>(v));
    }
    if (out.empty())
        throw UsageError(flag + ": at least one hidden layer is required");
    return out;
}

template <class F>
auto usage(F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

void write_file(const std::string& path, const std::string& text)
{
    const fs::path p(path);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path);
    out << text;
}

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Config overlay: a flat `key = value` file whose entries act as flags that were
// not given on the command line (flags > file > defaults).
// ---------------------------------------------------------------------------

std::vector<std::string> apply_config_overlay(std::vector<std::string> args)
{
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            path = args[i].substr(9);
    }
    if (!path)
        return args;

    std::ifstream in(*path);
    if (!in)
        throw UsageError("--config: cannot read '" + *path + "'");
    auto given = [&](const std::string& key) {
        for (const auto& a : args)
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0)
                return true;
        return false;
    };
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("--config: line " + std::to_string(line_no) + " is not 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.rfind("--", 0) == 0)
            key = key.substr(2);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (key.empty() || key == "config")
            throw UsageError("--config: invalid key on line " + std::to_string(line_no));
        if (!given(key))
            args.push_back("--" + key + "=" + value);
    }
    return args;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateFlags {
    std::string system = "spring";
    Index n = 5000;
    std::string t_span = "0:20";
    std::string y0 = "1,0";
    double sigma = 0.0;
    std::uint64_t seed = 7;
    std::string out;
};

void add_seed(CLI::App* cmd, std::uint64_t& seed)
{
    cmd->add_option("--seed", seed, "Master seed (default: $PHYSNET_SEED, else 7)")
        ->envname("PHYSNET_SEED")
        ->capture_default_str();
}

int run_generate(const GenerateFlags& f)
{
    const auto [spec, span, y0] = usage([&] {
        return std::tuple{systems::parse_system(f.system), to_span(f.t_span, "--t-span"), to_state(f.y0, "--y0")};
    });
    const auto data = systems::generate(spec, y0, f.n, span, {f.sigma}, f.seed);
    systems::write_csv(f.out, data);
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string kind;
    std::string data;
    std::string target;
    std::string interval;
    std::optional<Index> n;
    std::optional<double> sigma;
    std::string activation = "tanh";
    std::string hidden;
    std::optional<int> epochs;
    std::optional<double> lr;
    Index batch_size = 0;
    double train_fraction = 0.8;
    double lambda = 1.0;
    std::uint64_t seed = 7;
    std::string out;
};

const std::vector<std::string> kTrainKinds{"hnn", "baseline", "even-hub", "odd-hub", "plain", "symmetry", "decomp"};

// 1-D function targets for the symmetry and decomposition models.
std::function<double(double)> scalar_target(const std::string& name)
{
    if (name == "cos")
        return [](double x) { return std::cos(x); };
    if (name == "sin")
        return [](double x) { return std::sin(x); };
    return evenodd::target_function(evenodd::parse_target(name));
}

nlohmann::json loss_report(const std::vector<neural::EpochRecord>& h)
{
    nlohmann::json j;
    j["epochs"] = h.back().epoch;
    j["final_train_loss"] = h.back().loss;
    j["final_test_loss"] = std::isfinite(h.back().test_loss) ? nlohmann::json(h.back().test_loss) : nlohmann::json();
    return j;
}

int run_train(const TrainFlags& f)
{
    const bool dynamics = f.kind == "hnn" || f.kind == "baseline";
    const bool decomp = f.kind == "decomp";

    // Per-kind defaults, then validation of everything before any work.
    neural::TrainConfig cfg;
    cfg.epochs = f.epochs.value_or(dynamics ? 2000 : 5000);
    cfg.learning_rate = f.lr.value_or(dynamics ? 1e-3 : decomp ? 3e-3 : 1e-2);
    if (f.batch_size > 0)
        cfg.batch_mode = neural::MiniBatch{f.batch_size};
    cfg.seed = derive_seed(f.seed, "train");
    const auto activation = usage([&] { return diffgraph::parse_activation(f.activation); });
    const auto hidden = f.hidden.empty() ? std::vector<Index>(dynamics ? std::vector<Index>{200, 200}
                                                              : decomp ? std::vector<Index>{32, 32}
                                                                       : std::vector<Index>{5, 5})
                                         : to_sizes(f.hidden, "--hidden");
    usage([&] { cfg.validate(); return 0; });
    if (dynamics && f.data.empty())
        throw UsageError("train " + f.kind + " requires --data (a trajectory CSV)");
    if (!dynamics && f.data.empty() && f.target.empty())
        throw UsageError("train " + f.kind + " requires --target or --data");
    if (!(f.train_fraction > 0.0 && f.train_fraction < 1.0))
        throw UsageError("--train-fraction must be in (0, 1)");
    if (f.lambda < 0.0)
        throw UsageError("--lambda must be nonnegative");

    std::function<double(double)> target_fn;
    TimeSpan interval{-2.0, 2.0};
    if (!dynamics && !f.target.empty()) {
        target_fn = usage([&] { return scalar_target(f.target); });
        if (decomp && f.target != "cos" && f.target != "sin")
            interval = evenodd::default_interval(evenodd::parse_target(f.target));
        if (!f.interval.empty())
            interval = to_span(f.interval, "--interval");
    }
    const Index n = f.n.value_or(decomp ? 2048 : 200);
    const double sigma = f.sigma.value_or(decomp ? 0.0 : 0.2);
    if (n < 4)
        throw UsageError("--n must be at least 4");
    if (sigma < 0.0)
        throw UsageError("--sigma must be nonnegative");

    // Data.
    neural::Dataset data;
    if (dynamics) {
        data = hamiltonian::make_dataset(systems::with_fd_derivatives(systems::read_csv(f.data)));
    } else if (!f.target.empty()) {
        data = neural::sample_function(target_fn, interval, n, sigma, derive_seed(f.seed, "data"), f.target);
    } else {
        // Two-column x,y CSV with a header line.
        std::ifstream in(f.data);
        if (!in)
            throw Error("cannot read " + f.data);
        std::string line;
        std::getline(in, line);
        std::vector<double> xs, ys;
        Index line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty())
                continue;
            const auto cells = systems::detail::split_csv(line);
            if (cells.size() < 2)
                throw FormatError(f.data + ": line " + std::to_string(line_no) + " needs x,y");
            xs.push_back(systems::detail::parse_double(cells[0], line_no));
            ys.push_back(systems::detail::parse_double(cells[1], line_no));
        }
        data.inputs = neural::column(xs);
        data.targets = neural::column(ys);
    }
    data.validate();
    auto [train, test] = neural::split(data, f.train_fraction, derive_seed(f.seed, "split"));

    nlohmann::json model;
    std::vector<neural::EpochRecord> history;
    const std::uint64_t init_seed = derive_seed(f.seed, "init");
    if (f.kind == "hnn") {
        auto r = hamiltonian::train_hnn(hamiltonian::Hnn::make(activation, init_seed, hidden), train, cfg, &test);
        model = hamiltonian::to_json(r.model);
        history = std::move(r.history);
    } else if (f.kind == "baseline") {
        auto r = hamiltonian::train_baseline(hamiltonian::Baseline::make(activation, init_seed, hidden), train, cfg,
                                             &test);
        model = hamiltonian::to_json(r.model);
        history = std::move(r.history);
    } else if (decomp) {
        evenodd::DecompositionConfig dc;
        dc.hidden = hidden;
        dc.activation = activation;
        dc.lambda_even = dc.lambda_odd = f.lambda;
        dc.seed = init_seed;
        auto r = evenodd::train_decomposition(evenodd::DecompositionNet::make(dc), train, cfg, &test);
        model = evenodd::to_json(r.net);
        history = std::move(r.history);
    } else {
        std::vector<Index> sizes{1};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        const auto mode = f.kind == "even-hub"  ? neural::OutputMode::EvenHub
                          : f.kind == "odd-hub" ? neural::OutputMode::OddHub
                                                : neural::OutputMode::Plain;
        const neural::MLP net(neural::MLPConfig{sizes, activation, mode, init_seed});
        const neural::LossSpec loss = f.kind == "symmetry"
                                          ? neural::LossSpec(neural::SymmetryLoss{neural::Parity::Even, f.lambda})
                                          : neural::LossSpec(neural::MseLoss{});
        auto r = neural::train(net, train, loss, cfg, &test);
        model = neural::to_json(r.model, f.kind);
        history = std::move(r.history);
    }
    write_file(f.out, model.dump(2) + "\n");
    std::cout << loss_report(history).dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// rollout
// ---------------------------------------------------------------------------

struct RolloutFlags {
    std::string model;
    std::string y0 = "1,0";
    std::string t_span = "0:10";
    Index n = 5000;
    double tol = 1e-12;
    std::string out;
};

int run_rollout(const RolloutFlags& f)
{
    const auto [span, y0] = usage([&] { return std::pair{to_span(f.t_span, "--t-span"), to_state(f.y0, "--y0")}; });
    const auto j = read_json(f.model);
    ode::Field field;
    if (j.contains("xi")) {
        field = sindy::field(sindy::sindy_from_json(j));
    } else {
        field = hamiltonian::field_of(hamiltonian::dynamics_model_from_json(j));
    }
    ode::Solution sol;
    try {
        sol = pipeline::rollout(field, y0, uniform_grid(span, f.n), f.tol);
    } catch (const ode::IntegrationError& e) {
        throw Error(std::string("rollout failed (last good time t=") + format_full(e.time()) + "): " + e.what());
    }
    systems::TrajectoryData out;
    out.times = sol.times;
    out.q = sol.states.col(0);
    out.p = sol.states.col(1);
    out.dq.resize(sol.size());
    out.dp.resize(sol.size());
    for (Index i = 0; i < sol.size(); ++i) {
        const auto d = field(sol.times[static_cast<std::size_t>(i)], sol.state(i));
        out.dq(i) = d(0);
        out.dp(i) = d(1);
    }
    out.source = systems::Source::ModelRollout;
    const fs::path p(f.out);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    systems::write_csv(f.out, out);
    return 0;
}

// ---------------------------------------------------------------------------
// sindy fit
// ---------------------------------------------------------------------------

struct SindyFlags {
    std::string data;
    int poly_degree = 2;
    int fourier_freqs = 1;
    std::string threshold = "auto";
    double alpha = pipeline::kExperimentRidgeAlpha;
    int max_iter = 20;
    std::string derivatives = "fd";
    int decimals = 3;
    std::uint64_t seed = 7;
    std::string out;
};

int run_sindy_fit(const SindyFlags& f)
{
    sindy::FeatureLibrary lib;
    lib.poly_degree = f.poly_degree;
    lib.fourier_freqs = f.fourier_freqs;
    std::optional<double> threshold;
    if (f.threshold != "auto") {
        threshold = to_double(f.threshold, "--threshold");
        if (*threshold < 0.0)
            throw UsageError("--threshold must be nonnegative or 'auto'");
    }
    if (f.derivatives != "fd" && f.derivatives != "columns")
        throw UsageError("--derivatives must be 'fd' or 'columns'");
    sindy::StlsqConfig base;
    base.ridge_alpha = f.alpha;
    base.max_iter = f.max_iter;
    usage([&] {
        base.threshold = threshold.value_or(0.0);
        base.validate();
        return 0;
    });

    auto traj = systems::read_csv(f.data);
    if (f.derivatives == "fd")
        traj = systems::with_fd_derivatives(traj);
    sindy::SindyModel model;
    if (threshold) {
        base.threshold = *threshold;
        model = sindy::fit(traj.states(), traj.derivatives(), lib, base);
    } else {
        const auto sweep = sindy::threshold_sweep(traj.states(), traj.derivatives(), lib, sindy::default_thresholds(),
                                                  base, derive_seed(f.seed, "sindy-split"));
        std::cerr << "threshold sweep (validation MSE on a 20% split):\n";
        for (const auto& r : sweep.rows) {
            std::cerr << "  threshold " << pipeline::format_label(r.threshold) << ": ";
            if (r.empty)
                std::cerr << "empty equation\n";
            else
                std::cerr << r.n_terms << " terms, mse " << format_full(r.validation_mse) << '\n';
        }
        std::cerr << "chosen threshold " << pipeline::format_label(sweep.chosen) << '\n';
        model = sweep.model;
    }
    write_file(f.out, sindy::to_json(model).dump(2) + "\n");
    for (const auto& eq : sindy::print_equations(model, f.decimals))
        std::cout << eq << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

struct ExperimentFlags {
    std::string name;
    std::string out = "results";
    std::uint64_t seed = 7;
    std::string sigmas;
    std::optional<int> epochs;
    std::optional<Index> n;
    std::string derivative_source = "hnn-field";
    std::string activations;
    bool timing = false;
};

const std::vector<std::string> kExperiments{"spring-noise-sweep", "pendulum-noise-sweep", "activation-sweep",
                                            "even-odd-suite"};

int run_experiment(const ExperimentFlags& f)
{
    const fs::path out(f.out);
    if (f.name == "spring-noise-sweep" || f.name == "pendulum-noise-sweep") {
        pipeline::ExperimentConfig cfg;
        cfg.system = f.name == "spring-noise-sweep" ? systems::SystemSpec::spring() : systems::SystemSpec::pendulum();
        cfg.seed = f.seed;
        cfg.timing = f.timing;
        if (!f.sigmas.empty())
            cfg.sigmas = to_doubles(f.sigmas, ',', "--sigmas");
        if (f.epochs)
            cfg.hnn.train.epochs = *f.epochs;
        if (f.n)
            cfg.n_obs = *f.n;
        usage([&] {
            cfg.sindy.source = pipeline::parse_derivative_source(f.derivative_source);
            cfg.validate();
            return 0;
        });
        const auto r = pipeline::noise_sweep(cfg, f.name, out);
        for (const auto& t : r.trials)
            if (!t.ok())
                std::cerr << "sigma " << pipeline::format_label(t.sigma) << " failed: " << t.error << '\n';
        std::cout << (out / f.name / "summary.csv").string() << '\n';
        return r.ok() ? 0 : kExitRuntime;
    }
    if (f.name == "activation-sweep") {
        pipeline::ActivationSweepConfig cfg;
        cfg.seed = f.seed;
        cfg.timing = f.timing;
        if (f.epochs)
            cfg.hnn.train.epochs = *f.epochs;
        if (f.n)
            cfg.n_obs = *f.n;
        if (!f.activations.empty()) {
            cfg.activations.clear();
            std::stringstream ss(f.activations);
            std::string a;
            while (std::getline(ss, a, ','))
                cfg.activations.push_back(usage([&] { return diffgraph::parse_activation(a); }));
        }
        usage([&] { cfg.hnn.train.validate(); return 0; });
        const auto results = pipeline::activation_sweep(cfg, out);
        bool ok = true;
        for (const auto& r : results)
            if (!r.error.empty()) {
                ok = false;
                std::cerr << diffgraph::to_string(r.activation) << " failed: " << r.error << '\n';
            }
        std::cout << (out / f.name / "summary.csv").string() << '\n';
        return ok ? 0 : kExitRuntime;
    }
    pipeline::DecompSuiteConfig cfg;
    cfg.seed = f.seed;
    cfg.timing = f.timing;
    if (f.epochs)
        cfg.train.epochs = *f.epochs;
    if (f.n)
        cfg.n_train = *f.n;
    usage([&] { cfg.train.validate(); return 0; });
    pipeline::even_odd_suite(cfg, out);
    std::cout << (out / f.name / "summary.csv").string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    tune_allocator();

    CLI::App app{"physnet: physics-constrained neural networks, HNN noise regulation and SINDy"};
    app.name("physnet");
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "Flat 'key = value' file; entries act as flags not given on the command line");

    GenerateFlags gen;
    auto* generate = app.add_subcommand("generate", "Simulate a (noisy) trajectory and write it as CSV");
    generate->add_option("--system", gen.system, "spring or pendulum")
        ->check(CLI::IsMember({"spring", "pendulum"}))
        ->capture_default_str();
    generate->add_option("--n", gen.n, "Number of samples")->check(CLI::Range(Index{2}, Index{100000000}))->capture_default_str();
    generate->add_option("--t-span", gen.t_span, "Time span t0:t1")->capture_default_str();
    generate->add_option("--y0", gen.y0, "Initial state q,p")->capture_default_str();
    generate->add_option("--sigma", gen.sigma, "Gaussian noise std added to q and p")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    add_seed(generate, gen.seed);
    generate->add_option("--out", gen.out, "Output CSV path")->required();

    TrainFlags tr;
    auto* train = app.add_subcommand("train", "Train a model and write it as JSON; prints final losses as JSON");
    train->add_option("kind", tr.kind, "hnn, baseline, even-hub, odd-hub, plain, symmetry or decomp")
        ->required()
        ->check(CLI::IsMember(kTrainKinds));
    train->add_option("--data", tr.data, "Trajectory CSV (hnn, baseline) or x,y CSV (1-D models)");
    train->add_option("--target", tr.target, "1-D target: cos, sin, square, cube, exp or mixture");
    train->add_option("--interval", tr.interval, "Sampling interval a:b for --target");
    train->add_option("--n", tr.n, "Samples drawn for --target (default 200; 2048 for decomp)")
        ->check(CLI::PositiveNumber);
    train->add_option("--sigma", tr.sigma, "Noise std for --target (default 0.2; 0 for decomp)")
        ->check(CLI::NonNegativeNumber);
    train->add_option("--activation", tr.activation, "tanh, sigmoid, relu or sine")->capture_default_str();
    train->add_option("--hidden", tr.hidden, "Hidden widths, e.g. 200,200 (default per kind)");
    train->add_option("--epochs", tr.epochs, "Training epochs (default 2000; 5000 for 1-D models)")
        ->check(CLI::Range(1, 100000000));
    train->add_option("--lr", tr.lr, "Adam learning rate (default 1e-3; 1e-2 for 1-D nets; 3e-3 for decomp)")
        ->check(CLI::PositiveNumber);
    train->add_option("--batch-size", tr.batch_size, "Mini-batch size (0 = full batch)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    train->add_option("--train-fraction", tr.train_fraction, "Fraction of rows used for training")
        ->capture_default_str();
    train->add_option("--lambda", tr.lambda, "Symmetry-loss weight (symmetry) or parity weights (decomp)")
        ->capture_default_str();
    add_seed(train, tr.seed);
    train->add_option("--out", tr.out, "Output model JSON path")->required();

    RolloutFlags ro;
    auto* roll = app.add_subcommand("rollout", "Integrate a trained model (HNN, baseline or SINDy) and write CSV");
    roll->add_option("--model", ro.model, "Model JSON")->required();
    roll->add_option("--y0", ro.y0, "Initial state q,p")->capture_default_str();
    roll->add_option("--t-span", ro.t_span, "Time span t0:t1")->capture_default_str();
    roll->add_option("--n", ro.n, "Output samples (endpoints included)")
        ->check(CLI::Range(Index{2}, Index{100000000}))
        ->capture_default_str();
    roll->add_option("--tol", ro.tol, "Adaptive solver rtol = atol")->check(CLI::PositiveNumber)->capture_default_str();
    roll->add_option("--out", ro.out, "Output CSV path")->required();

    SindyFlags sf;
    auto* sindy_cmd = app.add_subcommand("sindy", "Sparse identification of nonlinear dynamics");
    sindy_cmd->require_subcommand(1);
    auto* fit = sindy_cmd->add_subcommand("fit", "Fit a SINDy model to a trajectory CSV and print its equations");
    fit->add_option("--data", sf.data, "Trajectory CSV")->required();
    fit->add_option("--poly-degree", sf.poly_degree, "Maximum monomial degree")
        ->check(CLI::Range(0, 10))
        ->capture_default_str();
    fit->add_option("--fourier-freqs", sf.fourier_freqs, "Number of sin/cos frequencies per state")
        ->check(CLI::Range(0, 20))
        ->capture_default_str();
    fit->add_option("--threshold", sf.threshold, "STLSQ threshold, or 'auto' for a validation sweep")
        ->capture_default_str();
    fit->add_option("--alpha", sf.alpha, "Ridge penalty")->check(CLI::NonNegativeNumber)->capture_default_str();
    fit->add_option("--max-iter", sf.max_iter, "STLSQ iterations")->check(CLI::PositiveNumber)->capture_default_str();
    fit->add_option("--derivatives", sf.derivatives, "fd (finite differences of q, p) or columns (dq, dp from the CSV)")
        ->capture_default_str();
    fit->add_option("--decimals", sf.decimals, "Decimals in printed equations")
        ->check(CLI::Range(0, 17))
        ->capture_default_str();
    add_seed(fit, sf.seed);
    fit->add_option("--out", sf.out, "Output model JSON path")->required();

    ExperimentFlags ex;
    auto* exp = app.add_subcommand("experiment", "Run a full experiment and write a results tree with summary.csv");
    exp->add_option("name", ex.name, "spring-noise-sweep, pendulum-noise-sweep, activation-sweep or even-odd-suite")
        ->required()
        ->check(CLI::IsMember(kExperiments));
    exp->add_option("--out", ex.out, "Results root directory")->capture_default_str();
    add_seed(exp, ex.seed);
    exp->add_option("--sigmas", ex.sigmas, "Noise levels for sweeps, e.g. 0,0.01,0.02,0.03");
    exp->add_option("--epochs", ex.epochs, "Override training epochs")->check(CLI::Range(1, 100000000));
    exp->add_option("--n", ex.n, "Override the number of observations / training points")->check(CLI::PositiveNumber);
    exp->add_option("--derivative-source", ex.derivative_source,
                    "SINDy+HNN derivative targets: hnn-field or finite-difference")
        ->check(CLI::IsMember({"hnn-field", "finite-difference"}))
        ->capture_default_str();
    exp->add_option("--activations", ex.activations, "Activation sweep subset, e.g. tanh,sine");
    exp->add_flag("--timing", ex.timing, "Record wall-clock runtime_s in summaries (breaks byte-reproducibility)");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = apply_config_overlay(std::move(args));
        std::reverse(args.begin(), args.end()); // CLI11 consumes a reversed vector
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (generate->parsed())
            return run_generate(gen);
        if (train->parsed())
            return run_train(tr);
        if (roll->parsed())
            return run_rollout(ro);
        if (fit->parsed())
            return run_sindy_fit(sf);
        if (exp->parsed())
            return run_experiment(ex);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
