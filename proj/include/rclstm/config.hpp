#pragma once

// Run configuration: a sectioned key = value file. Every key is typed,
// unknown sections and keys are errors, and omitted keys keep the
// defaults below.
//
//   [run]    task, data, synthetic, synthetic_length, synthetic_seed, output_dir, seed, normalization
//   [model]  layers, hidden, density, mask_mode, kernel, sparse_threshold
//   [train]  epochs, batch_size, optimizer, learning_rate, beta1, beta2, epsilon, grad_clip, shuffle
//   [data]   window, train_fraction
//   [sweep]  axis, points, seeds, baselines, ffnn_hidden, timing_reps, parallel
//   [bench]  hidden, layers, window, densities, reps, warmup

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rclstm/data.hpp"
#include "rclstm/evalbench.hpp"
#include "rclstm/network.hpp"
#include "rclstm/synthetic.hpp"
#include "rclstm/train.hpp"

namespace rclstm {

/// Invalid configuration file or option value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class DataKind : std::uint8_t { traffic, mobility, synthetic };

inline const char* to_string(DataKind k) noexcept
{
    switch (k) {
    case DataKind::traffic: return "traffic";
    case DataKind::mobility: return "mobility";
    case DataKind::synthetic: return "synthetic";
    }
    return "?";
}

struct BenchConfig {
    std::size_t hidden = 300;
    std::size_t layers = 1;
    std::size_t window = 100;
    std::vector<double> densities{0.01, 0.5, 1.0};
    std::size_t reps = 100;
    std::size_t warmup = 5;
};

struct SweepConfig {
    SweepAxis axis = SweepAxis::connectivity;
    /// Empty means the axis default (see default_sweep_points).
    std::vector<double> points;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    bool baselines = false;
    std::vector<std::size_t> ffnn_hidden{50, 50};
    std::size_t timing_reps = 30;
    std::size_t parallel = 1;
};

struct RunConfig {
    DataKind task = DataKind::synthetic;
    std::string data_path;
    synthetic::Kind synthetic_kind = synthetic::Kind::sine;
    std::size_t synthetic_length = 3000;
    /// Seeds the generated series only, so runs over `seed` share data.
    std::uint64_t synthetic_seed = 1;
    std::string output_dir = ".";
    std::uint64_t seed = 1;
    NormalizationScope normalization = NormalizationScope::full_series;

    std::size_t layers = 3;
    /// Empty means `layers` copies of the task's default cell size.
    std::vector<std::size_t> hidden;
    std::vector<double> density{1.0};
    MaskMode mask_mode = MaskMode::probabilistic;
    KernelPolicy kernel = KernelPolicy::automatic;
    double sparse_threshold = kDefaultSparseThreshold;

    TrainingConfig training;

    /// 0 means the task default.
    std::size_t window = 0;
    double train_fraction = 0.9;

    SweepConfig sweep;
    BenchConfig bench;

    Task model_task() const noexcept { return task == DataKind::mobility ? Task::classification : Task::regression; }

    /// Cell size: 300 traffic, 150 mobility, 30 synthetic.
    std::size_t default_cell_size() const noexcept
    {
        return task == DataKind::traffic ? 300 : task == DataKind::mobility ? 150 : 30;
    }

    std::vector<std::size_t> hidden_sizes() const
    {
        return hidden.empty() ? std::vector<std::size_t>(layers, default_cell_size()) : hidden;
    }

    /// Window length: 12 for mobility, 100 otherwise.
    std::size_t window_length() const noexcept
    {
        if (window != 0) return window;
        return task == DataKind::mobility ? 12 : 100;
    }

    ModelSpec model_spec(std::size_t input_dim, std::size_t output_dim = 1) const
    {
        ModelSpec s;
        s.input_dim = input_dim;
        s.hidden = hidden_sizes();
        s.density = density;
        s.mask_mode = mask_mode;
        s.task = model_task();
        s.output_dim = output_dim;
        s.seed = seed;
        s.policy = kernel;
        s.sparse_threshold = sparse_threshold;
        return s;
    }

    TrainingConfig training_config() const
    {
        TrainingConfig t = training;
        t.seed = seed;
        return t;
    }

    std::vector<double> default_sweep_points() const
    {
        switch (sweep.axis) {
        case SweepAxis::connectivity: return {0.01, 0.05, 0.1, 0.2, 0.5, 1.0};
        case SweepAxis::train_fraction: return {0.9, 0.8, 0.7, 0.6};
        case SweepAxis::window_length:
            if (task == DataKind::mobility) return {6, 12, 24};
            return {50, 100, 200, 300, 400, 500};
        }
        return {};
    }

    SweepSpec sweep_spec() const
    {
        SweepSpec s;
        s.axis = sweep.axis;
        s.points = sweep.points.empty() ? default_sweep_points() : sweep.points;
        s.seeds = sweep.seeds;
        s.model = model_spec(1);
        s.training = training_config();
        s.window = window_length();
        s.train_fraction = train_fraction;
        s.baselines = sweep.baselines;
        s.ffnn_hidden = sweep.ffnn_hidden;
        s.timing_reps = sweep.timing_reps;
        s.parallel = sweep.parallel;
        return s;
    }

    void validate() const
    {
        auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
        if (task != DataKind::synthetic && data_path.empty()) fail(std::string("[run] data is required for task ") + to_string(task));
        if (task == DataKind::synthetic && synthetic_length < 2) fail("[run] synthetic_length must be >= 2");
        if (layers == 0) fail("[model] layers must be >= 1");
        if (!hidden.empty() && hidden.size() != layers)
            fail("[model] hidden lists " + std::to_string(hidden.size()) + " sizes for " + std::to_string(layers) + " layers");
        for (auto h : hidden_sizes())
            if (h == 0) fail("[model] hidden sizes must be >= 1");
        if (density.size() != 1 && density.size() != layers) fail("[model] density needs one value or one per layer");
        for (double d : density)
            if (!(d > 0.0 && d <= 1.0)) fail("[model] density must lie in (0,1]");
        if (!(sparse_threshold >= 0.0 && sparse_threshold <= 1.0)) fail("[model] sparse_threshold must lie in [0,1]");
        if (training.batch_size == 0) fail("[train] batch_size must be >= 1");
        if (!(training.optimizer.learning_rate > 0.0)) fail("[train] learning_rate must be > 0");
        if (!(training.grad_clip > 0.0)) fail("[train] grad_clip must be > 0");
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("[data] train_fraction must lie in (0,1)");
        if (sweep.seeds.empty()) fail("[sweep] seeds must not be empty");
        if (sweep.parallel == 0) fail("[sweep] parallel must be >= 1");
        try {
            sweep_spec().validate();
        } catch (const DomainError& e) {
            fail(std::string("[sweep] ") + e.what());
        }
        if (bench.hidden == 0 || bench.layers == 0 || bench.window == 0) fail("[bench] hidden, layers and window must be >= 1");
        if (bench.reps == 0) fail("[bench] reps must be >= 1");
        for (double d : bench.densities)
            if (!(d > 0.0 && d <= 1.0)) fail("[bench] densities must lie in (0,1]");
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

class ConfigReader {
public:
    ConfigReader(const boost::property_tree::ptree& tree, std::string source) : tree_(tree), source_(std::move(source))
    {
        for (const auto& [section, keys] : tree_) {
            if (keys.empty() && !keys.data().empty())
                throw ConfigError(source_ + ": key '" + section + "' must be inside a [section]");
            if (!known().contains(section)) throw ConfigError(source_ + ": unknown section [" + section + "]");
            for (const auto& kv : keys) {
                const auto& allowed = known().at(section);
                if (!allowed.contains(kv.first))
                    throw ConfigError(source_ + ": unknown key '" + kv.first + "' in [" + section + "]");
            }
        }
    }

    template <class F>
    void get(const std::string& section, const std::string& key, F&& assign) const
    {
        auto sec = tree_.get_child_optional(section);
        if (!sec) return;
        auto v = sec->get_optional<std::string>(key);
        if (!v) return;
        const std::string value = trim(*v);
        try {
            assign(value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(source_ + ": [" + section + "] " + key + " = '" + value + "': " + e.what());
        }
    }

private:
    static const std::map<std::string, std::set<std::string>>& known()
    {
        static const std::map<std::string, std::set<std::string>> k{
            {"run", {"task", "data", "synthetic", "synthetic_length", "synthetic_seed", "output_dir", "seed", "normalization"}},
            {"model", {"layers", "hidden", "density", "mask_mode", "kernel", "sparse_threshold"}},
            {"train",
             {"epochs", "batch_size", "optimizer", "learning_rate", "beta1", "beta2", "epsilon", "grad_clip", "shuffle"}},
            {"data", {"window", "train_fraction"}},
            {"sweep", {"axis", "points", "seeds", "baselines", "ffnn_hidden", "timing_reps", "parallel"}},
            {"bench", {"hidden", "layers", "window", "densities", "reps", "warmup"}},
        };
        return k;
    }

    const boost::property_tree::ptree& tree_;
    std::string source_;
};

}  // namespace detail

// -- typed value parsers, also used for command-line overrides --------------------

inline double parse_config_double(const std::string& s)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("expected a number");
    }
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument("expected a finite number");
    return v;
}

inline std::uint64_t parse_config_uint(const std::string& s)
{
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("expected a non-negative integer");
    try {
        return std::stoull(s);
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("integer out of range");
    }
}

inline bool parse_config_bool(const std::string& s)
{
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw std::invalid_argument("expected true or false");
}

template <class T, class Parse>
std::vector<T> parse_config_list(const std::string& s, Parse parse)
{
    std::vector<T> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        item = detail::trim(item);
        if (item.empty()) throw std::invalid_argument("empty list element");
        out.push_back(static_cast<T>(parse(item)));
    }
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
    return out;
}

inline DataKind parse_data_kind(const std::string& s)
{
    if (s == "traffic") return DataKind::traffic;
    if (s == "mobility") return DataKind::mobility;
    if (s == "synthetic") return DataKind::synthetic;
    throw std::invalid_argument("expected traffic, mobility or synthetic");
}

inline KernelPolicy parse_kernel_policy(const std::string& s)
{
    if (s == "auto" || s == "automatic") return KernelPolicy::automatic;
    if (s == "dense") return KernelPolicy::dense;
    if (s == "sparse") return KernelPolicy::sparse;
    throw std::invalid_argument("expected auto, dense or sparse");
}

inline NormalizationScope parse_normalization_scope(const std::string& s)
{
    if (s == "full_series") return NormalizationScope::full_series;
    if (s == "train_only") return NormalizationScope::train_only;
    throw std::invalid_argument("expected full_series or train_only");
}

/// Parses a configuration document and validates the result.
inline RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>")
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    detail::ConfigReader r(tree, source);
    RunConfig c;
    auto size = [](std::size_t& dst) { return [&dst](const std::string& v) { dst = parse_config_uint(v); }; };
    auto real = [](double& dst) { return [&dst](const std::string& v) { dst = parse_config_double(v); }; };
    auto flag = [](bool& dst) { return [&dst](const std::string& v) { dst = parse_config_bool(v); }; };
    auto sizes = [](std::vector<std::size_t>& dst) {
        return [&dst](const std::string& v) { dst = parse_config_list<std::size_t>(v, parse_config_uint); };
    };
    auto reals = [](std::vector<double>& dst) {
        return [&dst](const std::string& v) { dst = parse_config_list<double>(v, parse_config_double); };
    };

    r.get("run", "task", [&](const std::string& v) { c.task = parse_data_kind(v); });
    r.get("run", "data", [&](const std::string& v) { c.data_path = v; });
    r.get("run", "synthetic", [&](const std::string& v) { c.synthetic_kind = synthetic::parse_kind(v); });
    r.get("run", "synthetic_length", size(c.synthetic_length));
    r.get("run", "synthetic_seed", [&](const std::string& v) { c.synthetic_seed = parse_config_uint(v); });
    r.get("run", "output_dir", [&](const std::string& v) { c.output_dir = v; });
    r.get("run", "seed", [&](const std::string& v) { c.seed = parse_config_uint(v); });
    r.get("run", "normalization", [&](const std::string& v) { c.normalization = parse_normalization_scope(v); });

    r.get("model", "layers", size(c.layers));
    r.get("model", "hidden", sizes(c.hidden));
    r.get("model", "density", reals(c.density));
    r.get("model", "mask_mode", [&](const std::string& v) { c.mask_mode = parse_mask_mode(v); });
    r.get("model", "kernel", [&](const std::string& v) { c.kernel = parse_kernel_policy(v); });
    r.get("model", "sparse_threshold", real(c.sparse_threshold));

    auto& t = c.training;
    r.get("train", "epochs", size(t.epochs));
    r.get("train", "batch_size", size(t.batch_size));
    r.get("train", "optimizer", [&](const std::string& v) {
        if (v == "adam") t.optimizer.kind = OptimizerKind::adam;
        else if (v == "sgd") t.optimizer.kind = OptimizerKind::sgd;
        else throw std::invalid_argument("expected adam or sgd");
    });
    r.get("train", "learning_rate", real(t.optimizer.learning_rate));
    r.get("train", "beta1", real(t.optimizer.beta1));
    r.get("train", "beta2", real(t.optimizer.beta2));
    r.get("train", "epsilon", real(t.optimizer.epsilon));
    r.get("train", "grad_clip", real(t.grad_clip));
    r.get("train", "shuffle", flag(t.shuffle));

    r.get("data", "window", size(c.window));
    r.get("data", "train_fraction", real(c.train_fraction));

    r.get("sweep", "axis", [&](const std::string& v) { c.sweep.axis = parse_sweep_axis(v); });
    r.get("sweep", "points", reals(c.sweep.points));
    r.get("sweep", "seeds",
          [&](const std::string& v) { c.sweep.seeds = parse_config_list<std::uint64_t>(v, parse_config_uint); });
    r.get("sweep", "baselines", flag(c.sweep.baselines));
    r.get("sweep", "ffnn_hidden", sizes(c.sweep.ffnn_hidden));
    r.get("sweep", "timing_reps", size(c.sweep.timing_reps));
    r.get("sweep", "parallel", size(c.sweep.parallel));

    r.get("bench", "hidden", size(c.bench.hidden));
    r.get("bench", "layers", size(c.bench.layers));
    r.get("bench", "window", size(c.bench.window));
    r.get("bench", "densities", reals(c.bench.densities));
    r.get("bench", "reps", size(c.bench.reps));
    r.get("bench", "warmup", size(c.bench.warmup));

    c.validate();
    return c;
}

inline RunConfig parse_run_config(const std::string& text, const std::string& source)
{
    std::istringstream in(text);
    return parse_run_config(in, source);
}

inline RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    return parse_run_config(in, path);
}

/// Canonical text form; parsing it back gives an equal configuration.
inline std::string dump_run_config(const RunConfig& c)
{
    auto join = [](const auto& v) {
        std::ostringstream o;
        o << std::setprecision(17);
        for (std::size_t k = 0; k < v.size(); ++k) o << (k ? "," : "") << v[k];
        return o.str();
    };
    auto num = [](double v) {
        std::ostringstream o;
        o << std::setprecision(17) << v;
        return o.str();
    };
    const auto& t = c.training;
    const char* kernel = c.kernel == KernelPolicy::dense ? "dense" : c.kernel == KernelPolicy::sparse ? "sparse" : "auto";
    const char* kind = c.synthetic_kind == synthetic::Kind::sine   ? "sine"
                       : c.synthetic_kind == synthetic::Kind::ar5  ? "ar5"
                       : c.synthetic_kind == synthetic::Kind::regime ? "regime"
                                                                      : "long_range";
    std::ostringstream o;
    o << "[run]\ntask = " << to_string(c.task) << "\n";
    if (!c.data_path.empty()) o << "data = " << c.data_path << "\n";
    o << "synthetic = " << kind << "\nsynthetic_length = " << c.synthetic_length
      << "\nsynthetic_seed = " << c.synthetic_seed << "\noutput_dir = " << c.output_dir
      << "\nseed = " << c.seed << "\nnormalization = "
      << (c.normalization == NormalizationScope::train_only ? "train_only" : "full_series") << "\n\n";
    o << "[model]\nlayers = " << c.layers << "\n";
    if (!c.hidden.empty()) o << "hidden = " << join(c.hidden) << "\n";
    o << "density = " << join(c.density) << "\nmask_mode = " << to_string(c.mask_mode) << "\nkernel = " << kernel
      << "\nsparse_threshold = " << num(c.sparse_threshold) << "\n\n";
    o << "[train]\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size
      << "\noptimizer = " << (t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd")
      << "\nlearning_rate = " << num(t.optimizer.learning_rate) << "\nbeta1 = " << num(t.optimizer.beta1)
      << "\nbeta2 = " << num(t.optimizer.beta2) << "\nepsilon = " << num(t.optimizer.epsilon)
      << "\ngrad_clip = " << num(t.grad_clip) << "\nshuffle = " << (t.shuffle ? "true" : "false") << "\n\n";
    o << "[data]\n";
    if (c.window != 0) o << "window = " << c.window << "\n";
    o << "train_fraction = " << num(c.train_fraction) << "\n\n";
    o << "[sweep]\naxis = " << to_string(c.sweep.axis) << "\n";
    if (!c.sweep.points.empty()) o << "points = " << join(c.sweep.points) << "\n";
    o << "seeds = " << join(c.sweep.seeds) << "\nbaselines = " << (c.sweep.baselines ? "true" : "false")
      << "\nffnn_hidden = " << join(c.sweep.ffnn_hidden) << "\ntiming_reps = " << c.sweep.timing_reps
      << "\nparallel = " << c.sweep.parallel << "\n\n";
    o << "[bench]\nhidden = " << c.bench.hidden << "\nlayers = " << c.bench.layers << "\nwindow = " << c.bench.window
      << "\ndensities = " << join(c.bench.densities) << "\nreps = " << c.bench.reps << "\nwarmup = " << c.bench.warmup
      << "\n";
    return o.str();
}

/// Loads or generates the configured data and runs the matching
/// preprocessing pipeline. Synthetic series are lifted to positive levels
/// so the traffic pipeline applies unchanged.
inline PreparedDataset load_prepared(const RunConfig& c, std::ostream* warn = &std::cerr)
{
    const std::size_t window = c.window_length();
    switch (c.task) {
    case DataKind::traffic:
        return prepare_traffic(load_traffic_csv(c.data_path, warn).values, window, c.train_fraction, c.normalization);
    case DataKind::mobility:
        return prepare_mobility(load_mobility_csv(c.data_path, warn).location_ids, window, c.train_fraction);
    case DataKind::synthetic: {
        const auto s = synthetic::generate(c.synthetic_kind, c.synthetic_length, c.synthetic_seed);
        return prepare_traffic(synthetic::as_positive_levels(s), window, c.train_fraction, c.normalization);
    }
    }
    throw ConfigError("config: bad task");
}

}  // namespace rclstm
