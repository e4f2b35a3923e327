#pragma once

// Comparison predictors: ARIMA(p,d,0) fitted by least squares, a
// fully-connected feed-forward regressor, and the last-value forecast.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <span>
#include <vector>

#include "rclstm/data.hpp"
#include "rclstm/error.hpp"
#include "rclstm/linalg.hpp"
#include "rclstm/metrics.hpp"
#include "rclstm/random.hpp"
#include "rclstm/train.hpp"

namespace rclstm {

// -- naive ----------------------------------------------------------------------

inline double naive_forecast(std::span<const double> history)
{
    if (history.empty()) throw DomainError("naive_forecast: empty history");
    return history.back();
}

/// Last-value predictions for every sample of a scalar dataset.
inline Vector naive_predictions(const WindowedDataset& ds)
{
    Vector out;
    out.reserve(ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) out.push_back(ds.last_row(k)[0]);
    return out;
}

// -- ARIMA(p, d, 0) -------------------------------------------------------------

struct ArimaModel {
    std::size_t p = 5;
    std::size_t d = 1;
    std::size_t q = 0;
    Vector coefficients;  // phi_1..phi_p, phi_1 multiplies the most recent difference
    double intercept = 0.0;
    bool regularized = false;
};

/// Applies the first-difference operator `order` times.
inline Vector difference(std::span<const double> x, std::size_t order)
{
    Vector cur(x.begin(), x.end());
    for (std::size_t k = 0; k < order; ++k) {
        if (cur.size() < 2) return {};
        Vector next(cur.size() - 1);
        for (std::size_t j = 0; j + 1 < cur.size(); ++j) next[j] = cur[j + 1] - cur[j];
        cur = std::move(next);
    }
    return cur;
}

namespace detail {

/// In-place Cholesky of a symmetric n x n matrix (lower factor). Returns
/// false when a pivot is not safely positive.
inline bool cholesky(std::vector<double>& a, std::size_t n)
{
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i * n + i]));
    const double tiny = 1e-12 * std::max(scale, 1e-300);
    for (std::size_t j = 0; j < n; ++j) {
        double s = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) s -= a[j * n + k] * a[j * n + k];
        if (!(s > tiny)) return false;
        const double l = std::sqrt(s);
        a[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double t = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) t -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = t / l;
        }
    }
    return true;
}

inline Vector cholesky_solve(const std::vector<double>& l, std::size_t n, Vector b)
{
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) b[i] -= l[i * n + k] * b[k];
        b[i] /= l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) b[i] -= l[k * n + i] * b[k];
        b[i] /= l[i * n + i];
    }
    return b;
}

}  // namespace detail

/// Normal-equation system of the AR(p)-with-intercept regression on `w`.
/// Column 0 is the intercept; column j (1..p) is lag j.
struct ArDesign {
    std::size_t n = 0;
    std::vector<double> xtx;
    Vector xty;
};

inline ArDesign ar_normal_equations(std::span<const double> w, std::size_t p)
{
    const std::size_t n = p + 1;
    ArDesign ds{n, std::vector<double>(n * n, 0.0), Vector(n, 0.0)};
    Vector row(n);
    for (std::size_t t = p; t < w.size(); ++t) {
        row[0] = 1.0;
        for (std::size_t j = 1; j <= p; ++j) row[j] = w[t - j];
        for (std::size_t a = 0; a < n; ++a) {
            ds.xty[a] += row[a] * w[t];
            for (std::size_t b = 0; b <= a; ++b) ds.xtx[a * n + b] += row[a] * row[b];
        }
    }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) ds.xtx[a * n + b] = ds.xtx[b * n + a];
    return ds;
}

inline constexpr double kArimaRidge = 1e-8;

/// Differences `series` d times and fits AR(p) with intercept by ordinary
/// least squares. A singular design falls back to ridge regularization
/// (kArimaRidge added to the diagonal) and writes a warning.
inline ArimaModel arima_fit(std::span<const double> series, std::size_t p = 5, std::size_t d = 1,
                            std::ostream* warn = &std::cerr)
{
    if (p < 1) throw DomainError("arima_fit: p must be >= 1");
    if (series.size() <= p + d + 1)
        throw DataError("arima_fit: series of length " + std::to_string(series.size()) + " too short for p=" +
                        std::to_string(p) + ", d=" + std::to_string(d));
    for (double v : series)
        if (!std::isfinite(v)) throw DataError("arima_fit: non-finite observation");
    const Vector w = difference(series, d);
    auto ne = ar_normal_equations(w, p);
    ArimaModel m{p, d, 0, {}, 0.0, false};
    auto factor = ne.xtx;
    if (!detail::cholesky(factor, ne.n)) {
        factor = ne.xtx;
        for (std::size_t a = 0; a < ne.n; ++a) factor[a * ne.n + a] += kArimaRidge;
        if (!detail::cholesky(factor, ne.n)) throw DomainError("arima_fit: design matrix is degenerate");
        m.regularized = true;
        if (warn) *warn << "warning: arima_fit: singular design matrix; using ridge-regularized solution\n";
    }
    const Vector beta = detail::cholesky_solve(factor, ne.n, ne.xty);
    m.intercept = beta[0];
    m.coefficients.assign(beta.begin() + 1, beta.end());
    return m;
}

/// One-step-ahead level forecast from the tail of `history`.
inline double arima_forecast(const ArimaModel& m, std::span<const double> history)
{
    if (history.size() < m.p + m.d)
        throw DataError("arima_forecast: history of length " + std::to_string(history.size()) + " shorter than p+d=" +
                        std::to_string(m.p + m.d));
    // difference levels 0..d of the tail needed for the forecast
    const auto tail = history.last(m.p + m.d);
    std::vector<Vector> levels{Vector(tail.begin(), tail.end())};
    for (std::size_t k = 0; k < m.d; ++k) levels.push_back(difference(levels.back(), 1));
    const Vector& w = levels.back();
    double next = m.intercept;
    for (std::size_t j = 1; j <= m.p; ++j) next += m.coefficients[j - 1] * w[w.size() - j];
    for (std::size_t k = m.d; k-- > 0;) next += levels[k].back();
    return next;
}

/// Recovers the observation sequence behind a scalar windowed dataset:
/// the first window followed by every target.
inline Vector series_from_windows(const WindowedDataset& ds)
{
    if (ds.size() == 0 || ds.feature_dim != 1) throw DataError("series_from_windows: needs a non-empty scalar dataset");
    Vector s(ds.inputs[0].begin(), ds.inputs[0].end());
    s.insert(s.end(), ds.targets.begin(), ds.targets.end());
    return s;
}

inline Vector arima_predictions(const ArimaModel& m, const WindowedDataset& ds)
{
    Vector out;
    out.reserve(ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) out.push_back(arima_forecast(m, ds.inputs[k]));
    return out;
}

// -- feed-forward network --------------------------------------------------------

struct FfnnLayer {
    DenseMatrix w;  // out x in
    Vector b;
};

/// Fully-connected regressor with tanh hidden layers and a linear output.
struct FfnnModel {
    std::vector<FfnnLayer> layers;

    std::size_t input_dim() const { return layers.front().w.cols(); }
    std::vector<std::size_t> dims() const
    {
        std::vector<std::size_t> d{input_dim()};
        for (const auto& l : layers) d.push_back(l.w.rows());
        return d;
    }
};

/// `dims` = {input, hidden..., 1}. Weights U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0.
inline FfnnModel make_ffnn(const std::vector<std::size_t>& dims, std::uint64_t seed)
{
    if (dims.size() < 2 || dims.back() != 1) throw ShapeError("make_ffnn: dims must end in a single output");
    for (auto d : dims)
        if (d == 0) throw ShapeError("make_ffnn: zero-width layer");
    FfnnModel m;
    Rng rng(derive_seed(seed, 0xff));
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        FfnnLayer l{DenseMatrix(dims[k + 1], dims[k]), Vector(dims[k + 1], 0.0)};
        const double r = 1.0 / std::sqrt(static_cast<double>(dims[k]));
        for (auto& v : l.w.values()) v = rng.uniform(-r, r);
        m.layers.push_back(std::move(l));
    }
    return m;
}

inline std::vector<std::span<double>> parameter_spans(FfnnModel& m)
{
    std::vector<std::span<double>> out;
    for (auto& l : m.layers) {
        out.emplace_back(l.w.values());
        out.emplace_back(l.b);
    }
    return out;
}

/// Activations of every layer; acts[0] is the input, acts.back() the output.
struct FfnnTrace {
    std::vector<Vector> acts;
};

inline double ffnn_forward(const FfnnModel& m, std::span<const double> x, FfnnTrace& tr)
{
    detail::require_shape(x.size() == m.input_dim(), "ffnn: input length != input dim");
    tr.acts.resize(m.layers.size() + 1);
    tr.acts[0].assign(x.begin(), x.end());
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
        const auto& l = m.layers[k];
        auto& out = tr.acts[k + 1];
        out.resize(l.w.rows());
        matvec_into(l.w, tr.acts[k], out);
        const bool hidden = k + 1 < m.layers.size();
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] += l.b[j];
            if (hidden) out[j] = tanh_act(out[j]);
        }
    }
    return tr.acts.back()[0];
}

inline double ffnn_predict(const FfnnModel& m, std::span<const double> x)
{
    FfnnTrace tr;
    return ffnn_forward(m, x, tr);
}

/// Gradient of a loss with dL/d(output) = `grad_out`, accumulated into
/// `grads` (laid out like parameter_spans).
inline void ffnn_backward_accumulate(const FfnnModel& m, const FfnnTrace& tr, double grad_out,
                                     std::vector<FfnnLayer>& grads)
{
    Vector delta{grad_out};
    for (std::size_t k = m.layers.size(); k-- > 0;) {
        const auto& l = m.layers[k];
        outer_accumulate(grads[k].w, delta, tr.acts[k]);
        for (std::size_t j = 0; j < delta.size(); ++j) grads[k].b[j] += delta[j];
        if (k == 0) break;
        Vector prev(l.w.cols(), 0.0);
        matvec_transposed_accumulate(l.w, delta, prev);
        for (std::size_t j = 0; j < prev.size(); ++j) prev[j] *= 1.0 - tr.acts[k][j] * tr.acts[k][j];
        delta = std::move(prev);
    }
}

inline std::vector<FfnnLayer> ffnn_zero_grads(const FfnnModel& m)
{
    std::vector<FfnnLayer> g;
    for (const auto& l : m.layers) g.push_back({DenseMatrix(l.w.rows(), l.w.cols()), Vector(l.b.size(), 0.0)});
    return g;
}

inline Vector ffnn_predictions(const FfnnModel& m, const WindowedDataset& ds)
{
    Vector out;
    out.reserve(ds.size());
    FfnnTrace tr;
    for (std::size_t k = 0; k < ds.size(); ++k) out.push_back(ffnn_forward(m, ds.inputs[k], tr));
    return out;
}

/// Mini-batch MSE training with the same shuffling, clipping and optimizer
/// as the recurrent models.
inline TrainingHistory ffnn_train(FfnnModel& m, const WindowedDataset& train, const TrainingConfig& cfg)
{
    cfg.validate();
    if (train.size() == 0) throw DataError("ffnn_train: empty training set");
    if (train.task != Task::regression) throw DomainError("ffnn_train: regression datasets only");
    detail::require_shape(train.window * train.feature_dim == m.input_dim(), "ffnn_train: window size != input dim");
    TrainingHistory hist;
    Rng rng(derive_seed(cfg.seed, 0x5eed));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto grads = ffnn_zero_grads(m);
    std::vector<std::span<double>> gspans;
    for (auto& g : grads) {
        gspans.emplace_back(g.w.values());
        gspans.emplace_back(g.b);
    }
    const auto params = parameter_spans(m);
    OptimizerState opt;
    FfnnTrace tr;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& g : grads) {
                g.w.fill(0.0);
                std::fill(g.b.begin(), g.b.end(), 0.0);
            }
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t k = order[s];
                const auto l = mse_loss(ffnn_forward(m, train.inputs[k], tr), train.targets[k]);
                if (!std::isfinite(l.loss))
                    throw DivergenceError("ffnn training diverged in epoch " + std::to_string(epoch + 1), epoch + 1);
                loss_sum += l.loss;
                ffnn_backward_accumulate(m, tr, l.grad * scale, grads);
            }
            clip_gradients(gspans, cfg.grad_clip);
            apply_optimizer(params, gspans, opt, cfg.optimizer);
        }
        hist.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    }
    return hist;
}

}  // namespace rclstm
