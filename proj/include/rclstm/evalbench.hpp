#pragma once

// Metric reports, forward-pass timing and the three experiment sweeps
// (connectivity, training fraction, window length).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rclstm/baselines.hpp"
#include "rclstm/data.hpp"
#include "rclstm/error.hpp"
#include "rclstm/metrics.hpp"
#include "rclstm/network.hpp"
#include "rclstm/train.hpp"

namespace rclstm {

// -- metrics ----------------------------------------------------------------------

struct MetricsReport {
    Task task = Task::regression;
    /// RMSE on the normalized scale, or accuracy.
    double value = 0.0;
    /// RMSE in raw units, when normalization parameters were supplied.
    std::optional<double> raw_rmse;
    std::size_t n = 0;
    Vector residuals;

    const char* metric_name() const noexcept { return task == Task::regression ? "rmse" : "accuracy"; }
};

inline MetricsReport regression_report(std::span<const double> actual, std::span<const double> predicted,
                                       const NormalizationParams* norm = nullptr, bool keep_residuals = false)
{
    MetricsReport r;
    r.value = rmse(actual, predicted);
    r.n = actual.size();
    if (norm) {
        Vector a(actual.size()), p(actual.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            a[k] = denormalize(actual[k], *norm);
            p[k] = denormalize(predicted[k], *norm);
        }
        r.raw_rmse = rmse(a, p);
    }
    if (keep_residuals)
        for (std::size_t k = 0; k < actual.size(); ++k) r.residuals.push_back(actual[k] - predicted[k]);
    return r;
}

inline MetricsReport evaluate_model(const StackedRclstm& model, const WindowedDataset& ds,
                                    const NormalizationParams* norm = nullptr, bool keep_residuals = false)
{
    if (ds.size() == 0) throw DataError("evaluate: empty dataset");
    if (ds.task != model.task) throw DomainError("evaluate: checkpoint task does not match dataset task");
    if (ds.feature_dim != model.input_dim())
        throw ShapeError("evaluate: dataset feature width " + std::to_string(ds.feature_dim) +
                         " does not match model input " + std::to_string(model.input_dim()));
    const auto p = predict_dataset(model, ds);
    if (model.task == Task::regression) return regression_report(ds.targets, p.values, norm, keep_residuals);
    MetricsReport r;
    r.task = Task::classification;
    r.value = accuracy(ds.labels, p.classes);
    r.n = ds.size();
    return r;
}

/// Last observed class of every window.
inline std::vector<std::size_t> naive_classes(const WindowedDataset& ds)
{
    std::vector<std::size_t> out;
    out.reserve(ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) {
        const auto row = ds.last_row(k);
        out.push_back(1 + static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    return out;
}

// -- timing ------------------------------------------------------------------------

struct TimingStats {
    double median = 0.0;
    double mean = 0.0;
    double std = 0.0;
    std::size_t reps = 0;
    std::size_t warmup = 0;
};

/// Sample mean and standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(std::span<const double> v)
{
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() == 1) return {m, 0.0};
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

inline double median(Vector v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline TimingStats summarize_times(const Vector& seconds, std::size_t warmup)
{
    TimingStats s;
    s.reps = seconds.size();
    s.warmup = warmup;
    s.median = median(seconds);
    std::tie(s.mean, s.std) = mean_std(seconds);
    return s;
}

namespace detail {
// Predictions are folded into this so the optimizer cannot drop the work.
inline volatile double benchmark_sink = 0.0;
}

/// Times single-window forward passes (batch 1) of an inference Predictor.
inline TimingStats benchmark_forward(const StackedRclstm& model, const WindowView& window, std::size_t reps,
                                     std::size_t warmup = 3)
{
    if (reps < 1) throw DomainError("benchmark_forward: reps must be >= 1");
    Predictor predict(model);
    auto run = [&] {
        const auto p = predict(window);
        detail::benchmark_sink = detail::benchmark_sink + (p.logits.empty() ? p.value : p.logits[0]);
    };
    for (std::size_t k = 0; k < warmup; ++k) run();
    Vector times;
    times.reserve(reps);
    for (std::size_t k = 0; k < reps; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        run();
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return summarize_times(times, warmup);
}

inline TimingStats benchmark_forward(const StackedRclstm& model, const WindowedDataset& ds, std::size_t reps,
                                     std::size_t warmup = 3)
{
    if (ds.size() == 0) throw DataError("benchmark_forward: empty dataset");
    return benchmark_forward(model, window_of(ds, 0), reps, warmup);
}

// -- sweeps ------------------------------------------------------------------------

enum class SweepAxis : std::uint8_t { connectivity = 0, train_fraction = 1, window_length = 2 };

inline const char* to_string(SweepAxis a) noexcept
{
    switch (a) {
    case SweepAxis::connectivity: return "connectivity";
    case SweepAxis::train_fraction: return "train_fraction";
    case SweepAxis::window_length: return "window_length";
    }
    return "?";
}

inline SweepAxis parse_sweep_axis(const std::string& s)
{
    if (s == "connectivity" || s == "density") return SweepAxis::connectivity;
    if (s == "train_fraction") return SweepAxis::train_fraction;
    if (s == "window_length" || s == "window") return SweepAxis::window_length;
    throw DomainError("unknown sweep axis '" + s + "' (expected connectivity, train_fraction or window_length)");
}

struct SweepSpec {
    SweepAxis axis = SweepAxis::connectivity;
    std::vector<double> points;
    std::vector<std::uint64_t> seeds{1};
    /// Values not swept come from here; model.seed and training.seed are
    /// replaced by each run's seed.
    ModelSpec model;
    TrainingConfig training;
    std::size_t window = 100;
    double train_fraction = 0.9;
    /// Adds ARIMA(5,1,0), FFNN and naive rows (naive only for classification).
    bool baselines = false;
    std::vector<std::size_t> ffnn_hidden{50, 50};
    /// Forward-pass repetitions per run for median_time_s; 0 disables timing.
    std::size_t timing_reps = 30;
    std::size_t parallel = 1;

    void validate() const
    {
        if (points.size() < 2) throw DomainError("sweep: at least two points are required");
        if (seeds.empty()) throw DomainError("sweep: at least one seed is required");
        if (parallel < 1) throw DomainError("sweep: parallel must be >= 1");
        for (double p : points) {
            switch (axis) {
            case SweepAxis::connectivity:
                if (!(p > 0.0 && p <= 1.0)) throw DomainError("sweep: connectivity points must lie in (0,1]");
                break;
            case SweepAxis::train_fraction:
                if (!(p > 0.0 && p < 1.0)) throw DomainError("sweep: train fractions must lie in (0,1)");
                break;
            case SweepAxis::window_length:
                if (!(p >= 1.0) || p != std::floor(p)) throw DomainError("sweep: window lengths must be positive integers");
                break;
            }
        }
        training.validate();
    }
};

/// The observation sequence a sweep re-windows for every point. Scalar
/// series are already normalized.
struct SweepSource {
    Task task = Task::regression;
    Vector series;
    std::vector<std::size_t> classes;
    std::size_t num_classes = 0;
    std::optional<NormalizationParams> norm;

    std::size_t size() const noexcept { return task == Task::regression ? series.size() : classes.size(); }

    WindowedDataset windows(std::size_t window) const
    {
        return task == Task::regression ? sliding_window(series, window) : sliding_window_classes(classes, num_classes, window);
    }

    static SweepSource from_series(Vector normalized, std::optional<NormalizationParams> norm = std::nullopt)
    {
        SweepSource s;
        s.series = std::move(normalized);
        s.norm = norm;
        return s;
    }

    static SweepSource from_classes(std::vector<std::size_t> classes, std::size_t m)
    {
        SweepSource s;
        s.task = Task::classification;
        s.classes = std::move(classes);
        s.num_classes = m;
        return s;
    }

    /// Rebuilds the underlying sequence of a prepared (windowed) dataset.
    static SweepSource from_prepared(const PreparedDataset& d)
    {
        const auto& ds = d.samples;
        if (ds.task == Task::regression) return from_series(series_from_windows(ds), d.norm);
        if (ds.size() == 0) throw DataError("sweep: empty dataset");
        std::vector<std::size_t> cls;
        for (std::size_t t = 0; t < ds.window; ++t) {
            std::span<const double> row = std::span<const double>(ds.inputs[0]).subspan(t * ds.feature_dim, ds.feature_dim);
            cls.push_back(1 + static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
        cls.insert(cls.end(), ds.labels.begin(), ds.labels.end());
        return from_classes(std::move(cls), ds.feature_dim);
    }
};

struct ExperimentRow {
    double axis_value = 0.0;
    std::uint64_t seed = 0;
    std::string model;  // rclstm, arima, ffnn, naive
    std::string metric;  // rmse or accuracy
    double value = std::numeric_limits<double>::quiet_NaN();
    double raw_rmse = std::numeric_limits<double>::quiet_NaN();
    double median_time_s = std::numeric_limits<double>::quiet_NaN();
    double train_seconds = std::numeric_limits<double>::quiet_NaN();
    std::size_t parameters = 0;
    std::string config_hash;
    std::string status = "ok";
};

struct PointSummary {
    double axis_value = 0.0;
    std::string model;
    double mean = 0.0;
    double std = 0.0;
    std::size_t ok = 0;
    std::size_t runs = 0;
};

struct ExperimentReport {
    SweepAxis axis = SweepAxis::connectivity;
    std::string metric;
    std::vector<ExperimentRow> rows;
    std::vector<PointSummary> summary;
    nlohmann::ordered_json config;
};

/// 64-bit FNV-1a, hex encoded; stable across platforms.
inline std::string fnv1a_hex(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << h;
    return o.str();
}

inline nlohmann::ordered_json to_json(const ModelSpec& m)
{
    return {{"input_dim", m.input_dim},
            {"hidden", m.hidden},
            {"density", m.density},
            {"mask_mode", to_string(m.mask_mode)},
            {"task", to_string(m.task)},
            {"output_dim", m.output_dim},
            {"seed", m.seed},
            {"sparse_threshold", m.sparse_threshold}};
}

inline nlohmann::ordered_json to_json(const TrainingConfig& t)
{
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"optimizer", t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
            {"learning_rate", t.optimizer.learning_rate},
            {"beta1", t.optimizer.beta1},
            {"beta2", t.optimizer.beta2},
            {"epsilon", t.optimizer.epsilon},
            {"grad_clip", t.grad_clip},
            {"seed", t.seed},
            {"shuffle", t.shuffle}};
}

namespace detail {

struct RunPlan {
    double axis_value;
    std::uint64_t seed;
    ModelSpec model;
    TrainingConfig training;
    std::size_t window;
    double train_fraction;
};

inline RunPlan plan_run(const SweepSpec& spec, double point, std::uint64_t seed, const SweepSource& src)
{
    RunPlan r{point, seed, spec.model, spec.training, spec.window, spec.train_fraction};
    switch (spec.axis) {
    case SweepAxis::connectivity: r.model.density = {point}; break;
    case SweepAxis::train_fraction: r.train_fraction = point; break;
    case SweepAxis::window_length: r.window = static_cast<std::size_t>(point); break;
    }
    r.model.seed = seed;
    r.training.seed = seed;
    r.model.task = src.task;
    r.model.input_dim = src.task == Task::regression ? 1 : src.num_classes;
    if (src.task == Task::classification) r.model.output_dim = src.num_classes;
    return r;
}

inline std::string run_hash(const RunPlan& r, const std::string& model)
{
    nlohmann::ordered_json j{{"model", model},       {"spec", to_json(r.model)},  {"training", to_json(r.training)},
                             {"window", r.window},   {"train_fraction", r.train_fraction}};
    return fnv1a_hex(j.dump());
}

inline std::string status_of(const DivergenceError& e)
{
    return "diverged@epoch" + std::to_string(e.epoch());
}

}  // namespace detail

/// Trains and evaluates one model per (point, seed); a diverged run is
/// recorded in its row and the sweep carries on. Training runs may use
/// several threads; timing always runs afterwards on one thread.
inline ExperimentReport run_sweep(const SweepSpec& spec, const SweepSource& src, std::ostream* log = nullptr)
{
    spec.validate();
    if (src.task == Task::classification && src.num_classes < 2) throw DataError("sweep: need at least two classes");

    std::vector<detail::RunPlan> plans;
    for (double p : spec.points)
        for (auto s : spec.seeds) plans.push_back(detail::plan_run(spec, p, s, src));
    // Reject unusable points before any training starts.
    for (const auto& r : plans) chronological_split(src.windows(r.window), r.train_fraction);

    ExperimentReport rep;
    rep.axis = spec.axis;
    rep.metric = src.task == Task::regression ? "rmse" : "accuracy";
    const NormalizationParams* norm = src.norm ? &*src.norm : nullptr;

    std::vector<ExperimentRow> rows(plans.size());
    std::vector<std::optional<StackedRclstm>> models(plans.size());
    std::vector<std::optional<WindowedDataset>> tests(plans.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < plans.size();) {
            const auto& r = plans[k];
            auto& row = rows[k];
            row.axis_value = r.axis_value;
            row.seed = r.seed;
            row.model = "rclstm";
            row.metric = rep.metric;
            row.config_hash = detail::run_hash(r, row.model);
            auto split = chronological_split(src.windows(r.window), r.train_fraction);
            auto m = make_model(r.model);
            row.parameters = m.parameter_count();
            try {
                const auto t0 = std::chrono::steady_clock::now();
                fit(m, split.train, r.training);
                row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                const auto mr = evaluate_model(m, split.test, norm);
                row.value = mr.value;
                if (mr.raw_rmse) row.raw_rmse = *mr.raw_rmse;
                models[k] = std::move(m);
                tests[k] = std::move(split.test);
            } catch (const DivergenceError& e) {
                row.status = detail::status_of(e);
            }
        }
    };
    const std::size_t nthreads = std::min(spec.parallel, plans.size());
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    }

    for (std::size_t k = 0; k < plans.size(); ++k) {
        if (spec.timing_reps > 0 && models[k])
            rows[k].median_time_s = benchmark_forward(*models[k], *tests[k], spec.timing_reps).median;
        models[k].reset();
        if (log)
            *log << to_string(spec.axis) << '=' << plans[k].axis_value << " seed=" << plans[k].seed << ' ' << rep.metric
                 << '=' << rows[k].value << ' ' << rows[k].status << '\n';
    }
    rep.rows = std::move(rows);

    if (spec.baselines) {
        for (const auto& r : plans) {
            auto split = chronological_split(src.windows(r.window), r.train_fraction);
            auto add = [&](const std::string& name, double value, double raw, const std::string& status) {
                ExperimentRow row;
                row.axis_value = r.axis_value;
                row.seed = r.seed;
                row.model = name;
                row.metric = rep.metric;
                row.value = value;
                row.raw_rmse = raw;
                row.config_hash = detail::run_hash(r, name);
                row.status = status;
                rep.rows.push_back(std::move(row));
            };
            auto reg = [&](const std::string& name, const Vector& pred) {
                const auto mr = regression_report(split.test.targets, pred, norm);
                add(name, mr.value, mr.raw_rmse.value_or(std::numeric_limits<double>::quiet_NaN()), "ok");
            };
            const double nan = std::numeric_limits<double>::quiet_NaN();
            if (src.task == Task::classification) {
                add("naive", accuracy(split.test.labels, naive_classes(split.test)), nan, "ok");
                continue;
            }
            reg("naive", naive_predictions(split.test));
            try {
                reg("arima", arima_predictions(arima_fit(series_from_windows(split.train), 5, 1, log), split.test));
            } catch (const DataError& e) {
                add("arima", nan, nan, std::string("error: ") + e.what());
            }
            std::vector<std::size_t> dims{r.window};
            dims.insert(dims.end(), spec.ffnn_hidden.begin(), spec.ffnn_hidden.end());
            dims.push_back(1);
            auto f = make_ffnn(dims, r.seed);
            try {
                ffnn_train(f, split.train, r.training);
                reg("ffnn", ffnn_predictions(f, split.test));
            } catch (const DivergenceError& e) {
                add("ffnn", nan, nan, detail::status_of(e));
            }
        }
    }

    // mean +- std per (point, model), in point order then first-seen model order
    for (double p : spec.points) {
        std::vector<std::string> names;
        for (const auto& row : rep.rows)
            if (row.axis_value == p && std::find(names.begin(), names.end(), row.model) == names.end())
                names.push_back(row.model);
        for (const auto& name : names) {
            Vector vals;
            std::size_t runs = 0;
            for (const auto& row : rep.rows) {
                if (row.axis_value != p || row.model != name) continue;
                ++runs;
                if (row.status == "ok") vals.push_back(row.value);
            }
            const auto [m, s] = mean_std(vals);
            rep.summary.push_back({p, name, m, s, vals.size(), runs});
        }
    }

    rep.config = {{"axis", to_string(spec.axis)},
                  {"points", spec.points},
                  {"seeds", spec.seeds},
                  {"window", spec.window},
                  {"train_fraction", spec.train_fraction},
                  {"model", to_json(spec.model)},
                  {"training", to_json(spec.training)},
                  {"baselines", spec.baselines},
                  {"timing_reps", spec.timing_reps}};
    return rep;
}

// -- report emission ----------------------------------------------------------------

namespace detail {
inline std::string fmt_double(double v)
{
    if (std::isnan(v)) return "nan";
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

inline nlohmann::ordered_json json_number(double v)
{
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}
}  // namespace detail

inline void write_csv(const ExperimentReport& r, std::ostream& out)
{
    out << to_string(r.axis) << ",seed,model,metric,value,raw_rmse,median_time_s,parameters,config_hash,status\n";
    for (const auto& row : r.rows) {
        out << detail::fmt_double(row.axis_value) << ',' << row.seed << ',' << row.model << ',' << row.metric << ','
            << detail::fmt_double(row.value) << ',' << detail::fmt_double(row.raw_rmse) << ','
            << detail::fmt_double(row.median_time_s) << ',' << row.parameters << ',' << row.config_hash << ','
            << row.status << '\n';
    }
}

/// Summary document; wall-clock fields are omitted unless `with_timing`
/// so that the default output is reproducible byte for byte.
inline nlohmann::ordered_json summary_json(const ExperimentReport& r, bool with_timing = false)
{
    nlohmann::ordered_json points = nlohmann::ordered_json::array();
    for (const auto& s : r.summary)
        points.push_back({{"axis_value", s.axis_value},
                          {"model", s.model},
                          {"mean", detail::json_number(s.mean)},
                          {"std", detail::json_number(s.std)},
                          {"ok", s.ok},
                          {"runs", s.runs}});
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
        nlohmann::ordered_json j{{"axis_value", row.axis_value},
                                 {"seed", row.seed},
                                 {"model", row.model},
                                 {r.metric, detail::json_number(row.value)},
                                 {"raw_rmse", detail::json_number(row.raw_rmse)},
                                 {"parameters", row.parameters},
                                 {"config_hash", row.config_hash},
                                 {"status", row.status}};
        if (with_timing) {
            j["median_time_s"] = detail::json_number(row.median_time_s);
            j["train_seconds"] = detail::json_number(row.train_seconds);
        }
        rows.push_back(std::move(j));
    }
    return {{"axis", to_string(r.axis)}, {"metric", r.metric}, {"config", r.config}, {"summary", points}, {"rows", rows}};
}

/// UTC "YYYYmmddTHHMMSS"; a frozen clock gives the epoch.
inline std::string utc_stamp(bool freeze_timestamps)
{
    if (freeze_timestamps) return "19700101T000000";
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y%m%dT%H%M%S");
    return o.str();
}

/// "sweep_<axis>_<stamp>"
inline std::string report_basename(SweepAxis axis, bool freeze_timestamps)
{
    return std::string("sweep_") + to_string(axis) + "_" + utc_stamp(freeze_timestamps);
}

}  // namespace rclstm
