// rclstm: preprocess data, train and evaluate models, run sweeps and
// time forward passes. Exit status 0 on success, 1 on runtime failure,
// 2 on usage or configuration errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rclstm/baselines.hpp"
#include "rclstm/config.hpp"
#include "rclstm/evalbench.hpp"
#include "rclstm/train.hpp"

namespace fs = std::filesystem;
using namespace rclstm;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> density;
    std::optional<std::size_t> window;
    std::optional<double> train_fraction;
    std::optional<std::size_t> parallel;
    std::optional<std::size_t> epochs;
    std::optional<std::string> output_dir;
    std::optional<std::string> data;
    bool freeze_timestamps = false;

    std::string dataset;  // cached dataset path
    std::string checkpoint;
    std::string output;
    std::string split = "test";
    std::optional<std::string> axis;
    bool baselines = false;
    std::optional<std::size_t> hidden;
    std::optional<std::size_t> reps;
};

void add_common(CLI::App* app, Options& o)
{
    app->add_option("--config", o.config, "run configuration file");
    app->add_option("--seed", o.seed, "seed for masks, initialization and shuffling");
    app->add_option("--density", o.density, "connectivity density in (0,1] for every layer");
    app->add_option("--window", o.window, "input window length T");
    app->add_option("--train-fraction", o.train_fraction, "chronological training fraction");
    app->add_option("--parallel", o.parallel, "worker threads for sweeps");
    app->add_option("--epochs", o.epochs, "training epochs");
    app->add_option("--output-dir", o.output_dir, "directory for outputs");
    app->add_option("--data", o.data, "input CSV (overrides [run] data)");
    app->add_flag("--freeze-timestamps", o.freeze_timestamps, "use a fixed stamp in output file names");
}

void require_file(const std::string& path, const char* what)
{
    if (!fs::exists(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

RunConfig resolve_config(const Options& o)
{
    RunConfig c;
    if (!o.config.empty()) {
        require_file(o.config, "config file");
        c = load_run_config(o.config);
    }
    if (o.seed) c.seed = *o.seed;
    if (o.density) c.density = {*o.density};
    if (o.window) c.window = *o.window;
    if (o.train_fraction) c.train_fraction = *o.train_fraction;
    if (o.parallel) c.sweep.parallel = *o.parallel;
    if (o.epochs) c.training.epochs = *o.epochs;
    if (o.output_dir) c.output_dir = *o.output_dir;
    if (o.data) c.data_path = *o.data;
    if (o.axis) c.sweep.axis = parse_sweep_axis(*o.axis);
    if (o.baselines) c.sweep.baselines = true;
    if (o.hidden) c.bench.hidden = *o.hidden;
    if (o.reps) c.bench.reps = *o.reps;
    if (o.window) c.bench.window = *o.window;
    if (o.density) c.bench.densities = {*o.density};
    c.validate();
    if (c.task != DataKind::synthetic) require_file(c.data_path, "data file");
    return c;
}

/// From a cache if given (it fixes T and the split), else from the config.
PreparedDataset obtain_dataset(const Options& o, const RunConfig& c)
{
    if (o.dataset.empty()) return load_prepared(c);
    require_file(o.dataset, "dataset cache");
    auto d = load_dataset(io::read_file(o.dataset));
    if (o.window && *o.window != d.samples.window)
        throw UsageError("--window " + std::to_string(*o.window) + " conflicts with the cache's window " +
                         std::to_string(d.samples.window));
    if (o.train_fraction) d.train_fraction = *o.train_fraction;
    return d;
}

fs::path output_path(const RunConfig& c, const std::string& name)
{
    fs::create_directories(c.output_dir);
    return fs::path(c.output_dir) / name;
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << text;
}

std::string num(double v)
{
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

void print_summary(const PreparedDataset& d)
{
    const auto split = d.split();
    std::cout << "samples: " << d.samples.size() << " (train " << split.train.size() << ", test " << split.test.size()
              << "), window " << d.samples.window << '\n';
    if (d.samples.task == Task::regression)
        std::cout << "normalization: log10 min " << num(d.norm.min_log) << ", log10 max " << num(d.norm.max_log) << '\n';
    else
        std::cout << "classes: " << d.codebook.size() << '\n';
}

int cmd_preprocess(const Options& o)
{
    const auto c = resolve_config(o);
    const auto d = load_prepared(c);
    const fs::path out = o.output.empty() ? output_path(c, "dataset.bin") : fs::path(o.output);
    io::write_file(out.string(), save_dataset(d));
    print_summary(d);
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int cmd_train(const Options& o)
{
    const auto c = resolve_config(o);
    const auto d = obtain_dataset(o, c);
    const auto split = d.split();
    const std::size_t in = d.samples.feature_dim;
    auto model = make_model(c.model_spec(in, d.samples.task == Task::classification ? in : 1));
    if (model.task != d.samples.task)
        throw UsageError(std::string("config task ") + to_string(model.task) + " does not match dataset task " +
                         to_string(d.samples.task));
    print_summary(d);
    std::cout << "model: " << model.layers.size() << " layers, " << model.parameter_count() << " trainable parameters\n";
    const double initial = dataset_loss(model, split.train);
    const auto hist = fit(model, split.train, c.training_config());

    const auto ckpt = output_path(c, "model.ckpt");
    save_checkpoint_file(model, ckpt.string());
    std::ostringstream csv;
    csv << "epoch,train_loss\n0," << num(initial) << '\n';
    for (std::size_t e = 0; e < hist.train_loss.size(); ++e) csv << e + 1 << ',' << num(hist.train_loss[e]) << '\n';
    write_text(output_path(c, "history.csv"), csv.str());

    double seconds = 0.0;
    for (double s : hist.epoch_seconds) seconds += s;
    std::cout << "initial loss " << num(initial) << ", final loss "
              << num(hist.train_loss.empty() ? initial : hist.train_loss.back()) << " after " << hist.train_loss.size()
              << " epochs (" << seconds << " s)\n";
    std::cout << "wrote " << ckpt.string() << '\n';
    return 0;
}

int cmd_evaluate(const Options& o)
{
    if (o.checkpoint.empty()) throw UsageError("evaluate needs --checkpoint");
    require_file(o.checkpoint, "checkpoint");
    const auto c = resolve_config(o);
    const auto model = load_checkpoint_file(o.checkpoint);
    const auto d = obtain_dataset(o, c);
    const auto split = d.split();
    const WindowedDataset* ds = &split.test;
    if (o.split == "train") ds = &split.train;
    else if (o.split == "all") ds = &d.samples;
    else if (o.split != "test") throw UsageError("--split must be test, train or all");

    const NormalizationParams* norm = d.samples.task == Task::regression ? &d.norm : nullptr;
    const auto r = evaluate_model(model, *ds, norm);
    nlohmann::ordered_json j{{"split", o.split}, {"n", r.n}, {"metric", r.metric_name()}, {"value", r.value}};
    if (r.raw_rmse) j["raw_rmse"] = *r.raw_rmse;
    std::cout << o.split << ' ' << r.metric_name() << ' ' << num(r.value);
    if (r.raw_rmse) std::cout << " (raw " << num(*r.raw_rmse) << ')';
    std::cout << " over " << r.n << " samples\n";

    if (o.baselines) {
        nlohmann::ordered_json b;
        if (ds->task == Task::classification) {
            b["naive"] = accuracy(ds->labels, naive_classes(*ds));
        } else {
            auto add = [&](const char* name, const Vector& pred) {
                const auto br = regression_report(ds->targets, pred, norm);
                b[name] = {{"rmse", br.value}, {"raw_rmse", br.raw_rmse.value_or(0.0)}};
                std::cout << name << " rmse " << num(br.value) << '\n';
            };
            add("naive", naive_predictions(*ds));
            add("arima", arima_predictions(arima_fit(series_from_windows(split.train), 5, 1), *ds));
        }
        j["baselines"] = b;
    }
    const auto out = output_path(c, "metrics.json");
    write_text(out, j.dump(2) + "\n");
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int cmd_sweep(const Options& o)
{
    const auto c = resolve_config(o);
    const auto spec = c.sweep_spec();
    const auto src = o.dataset.empty() ? SweepSource::from_prepared(load_prepared(c))
                                       : SweepSource::from_prepared(obtain_dataset(o, c));
    std::cout << "sweep " << to_string(spec.axis) << " over " << spec.points.size() << " points x " << spec.seeds.size()
              << " seeds\n";
    const auto rep = run_sweep(spec, src, &std::cout);
    const std::string base = report_basename(spec.axis, o.freeze_timestamps);
    std::ostringstream csv;
    write_csv(rep, csv);
    const auto csv_path = output_path(c, base + ".csv");
    write_text(csv_path, csv.str());
    const auto json_path = output_path(c, base + ".json");
    write_text(json_path, summary_json(rep).dump(2) + "\n");
    for (const auto& s : rep.summary)
        std::cout << to_string(spec.axis) << '=' << s.axis_value << ' ' << s.model << ' ' << rep.metric << ' '
                  << num(s.mean) << " +- " << num(s.std) << " (" << s.ok << '/' << s.runs << ")\n";
    std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << '\n';
    return 0;
}

int cmd_bench(const Options& o)
{
    const auto c = resolve_config(o);
    const auto& b = c.bench;
    std::ostringstream csv;
    csv << "model,density,hidden,layers,window,kernel,parameters,median_s,mean_s,std_s,reps,warmup\n";
    auto emit = [&](const std::string& label, double density, const StackedRclstm& m, std::size_t window) {
        Rng rng(derive_seed(c.seed, 0xbe));
        Vector x(window * m.input_dim());
        for (auto& v : x) v = rng.uniform(0.0, 1.0);
        const auto t = benchmark_forward(m, WindowView{x, window, m.input_dim()}, b.reps, b.warmup);
        const bool sparse = m.layers.front().uses_sparse_kernel();
        csv << label << ',' << num(density) << ',' << m.layers.front().hidden_dim() << ',' << m.layers.size() << ','
            << window << ',' << (sparse ? "sparse" : "dense") << ',' << m.parameter_count() << ',' << num(t.median)
            << ',' << num(t.mean) << ',' << num(t.std) << ',' << t.reps << ',' << t.warmup << '\n';
        std::cout << label << " density " << density << " (" << (sparse ? "sparse" : "dense") << "): median "
                  << t.median * 1e3 << " ms, mean " << t.mean * 1e3 << " ms, std " << t.std * 1e3 << " ms\n";
    };
    if (!o.checkpoint.empty()) {
        require_file(o.checkpoint, "checkpoint");
        const auto m = load_checkpoint_file(o.checkpoint);
        emit("checkpoint", m.layers.front().mask().density(), m, b.window);
    } else {
        for (double dens : b.densities) {
            ModelSpec spec;
            spec.input_dim = 1;
            spec.hidden.assign(b.layers, b.hidden);
            spec.density = {dens};
            spec.seed = c.seed;
            spec.policy = c.kernel;
            spec.sparse_threshold = c.sparse_threshold;
            emit("rclstm", dens, make_model(spec), b.window);
        }
    }
    const auto out = output_path(c, "bench_" + utc_stamp(o.freeze_timestamps) + ".csv");
    write_text(out, csv.str());
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse-gated LSTM training, evaluation and benchmarking"};
    app.require_subcommand(1);
    Options o;

    auto* pre = app.add_subcommand("preprocess", "load, normalize and window data into a cache file");
    add_common(pre, o);
    pre->add_option("--output", o.output, "cache file path (default <output-dir>/dataset.bin)");

    auto* train = app.add_subcommand("train", "train a model; writes model.ckpt and history.csv");
    add_common(train, o);
    train->add_option("--dataset", o.dataset, "preprocessed cache to train on");

    auto* eval = app.add_subcommand("evaluate", "score a checkpoint; writes metrics.json");
    add_common(eval, o);
    eval->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    eval->add_option("--dataset", o.dataset, "preprocessed cache to score on");
    eval->add_option("--split", o.split, "test, train or all");
    eval->add_flag("--baselines", o.baselines, "also score naive and ARIMA(5,1,0)");

    auto* sweep = app.add_subcommand("sweep", "run an experiment sweep; writes CSV and JSON reports");
    add_common(sweep, o);
    sweep->add_option("--dataset", o.dataset, "preprocessed cache to sweep on");
    sweep->add_option("--axis", o.axis, "connectivity, train_fraction or window_length");
    sweep->add_flag("--baselines", o.baselines, "add ARIMA, FFNN and naive rows");

    auto* bench = app.add_subcommand("bench", "time single-window forward passes across densities");
    add_common(bench, o);
    bench->add_option("--checkpoint", o.checkpoint, "time this model instead of fresh ones");
    bench->add_option("--hidden", o.hidden, "hidden size per layer");
    bench->add_option("--reps", o.reps, "measured repetitions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*pre) return cmd_preprocess(o);
        if (*train) return cmd_train(o);
        if (*eval) return cmd_evaluate(o);
        if (*sweep) return cmd_sweep(o);
        if (*bench) return cmd_bench(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        // ShapeError and DomainError: inputs that cannot go together
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
