#pragma once

// Mini-batch BPTT training with SGD or Adam, global-norm clipping and
// mask-respecting updates; plus the binary checkpoint container.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rclstm/data.hpp"
#include "rclstm/error.hpp"
#include "rclstm/io.hpp"
#include "rclstm/metrics.hpp"
#include "rclstm/network.hpp"
#include "rclstm/random.hpp"

namespace rclstm {

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainingConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    OptimizerConfig optimizer;
    double grad_clip = 5.0;
    std::uint64_t seed = 1;
    bool shuffle = true;

    void validate() const
    {
        if (batch_size == 0) throw DomainError("training: batch_size must be positive");
        if (!(optimizer.learning_rate > 0.0)) throw DomainError("training: learning_rate must be > 0");
        if (!(grad_clip > 0.0)) throw DomainError("training: grad_clip must be > 0");
    }
};

struct TrainingHistory {
    std::vector<double> train_loss;
    /// Validation RMSE (regression) or accuracy (classification); empty
    /// when no validation set was given.
    std::vector<double> validation;
    std::vector<double> epoch_seconds;
};

// -- optimizer ------------------------------------------------------------------

/// Per-parameter moment buffers, shaped like the parameter list they serve.
struct OptimizerState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    std::uint64_t step = 0;
};

/// In-place update of `params` from `grads`. Throws DivergenceError on a
/// non-finite gradient before touching anything.
inline void apply_optimizer(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
                            OptimizerState& state, const OptimizerConfig& cfg)
{
    if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient list mismatch");
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (params[k].size() != grads[k].size()) throw ShapeError("optimizer: parameter/gradient shape mismatch");
        if (!all_finite(grads[k])) throw DivergenceError("optimizer: non-finite gradient");
    }
    if (cfg.kind == OptimizerKind::sgd) {
        for (std::size_t k = 0; k < params.size(); ++k)
            for (std::size_t j = 0; j < params[k].size(); ++j) params[k][j] -= cfg.learning_rate * grads[k][j];
        return;
    }
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        double* p = params[k].data();
        const double* g = grads[k].data();
        double* m = state.m[k].data();
        double* v = state.v[k].data();
        for (std::size_t j = 0; j < params[k].size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            p[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
        }
    }
}

/// Optimizer update for a stacked model; masks are re-applied afterwards.
inline void optimizer_step(StackedRclstm& model, ModelGrads& grads, OptimizerState& state, const OptimizerConfig& cfg)
{
    auto p = parameter_spans(model);
    auto g = grads.spans();
    apply_optimizer(p, g, state, cfg);
    finish_update(model);
}

inline double global_norm(std::span<const std::span<double>> grads) noexcept
{
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g) s += v * v;
    return std::sqrt(s);
}

/// Scales every gradient by max_norm/norm when the global L2 norm exceeds
/// max_norm. Returns the pre-clip norm.
inline double clip_gradients(std::span<const std::span<double>> grads, double max_norm)
{
    if (!(max_norm > 0.0)) throw DomainError("clip_gradients: max_norm must be > 0");
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& g : grads)
            for (double& v : g) v *= scale;
    }
    return norm;
}

inline double clip_gradients(Vector& grads, double max_norm)
{
    std::span<double> one(grads);
    return clip_gradients(std::span<const std::span<double>>(&one, 1), max_norm);
}

// -- evaluation helpers ----------------------------------------------------------

inline WindowView window_of(const WindowedDataset& ds, std::size_t k)
{
    return {ds.inputs[k], ds.window, ds.feature_dim};
}

/// Model predictions over a dataset: values for regression, 1-based
/// arg-max classes for classification.
struct DatasetPredictions {
    Vector values;
    std::vector<std::size_t> classes;
};

inline DatasetPredictions predict_dataset(const StackedRclstm& model, const WindowedDataset& ds)
{
    Predictor predict(model);
    DatasetPredictions out;
    for (std::size_t k = 0; k < ds.size(); ++k) {
        auto p = predict(window_of(ds, k));
        if (model.task == Task::regression)
            out.values.push_back(p.value);
        else
            out.classes.push_back(p.predicted_class());
    }
    return out;
}

/// RMSE for regression, accuracy for classification.
inline double evaluate_metric(const StackedRclstm& model, const WindowedDataset& ds)
{
    auto p = predict_dataset(model, ds);
    if (model.task == Task::regression) return rmse(ds.targets, p.values);
    return accuracy(ds.labels, p.classes);
}

// -- fit --------------------------------------------------------------------------

/// Loss and dL/d(output) for one sample.
inline double sample_loss(const StackedRclstm& model, const Prediction& pred, const WindowedDataset& ds, std::size_t k,
                          Vector& loss_grad)
{
    if (model.task == Task::regression) {
        auto l = mse_loss(pred.value, ds.targets[k]);
        loss_grad.assign(1, l.grad);
        return l.loss;
    }
    auto l = cross_entropy_loss(pred.logits, ds.labels[k]);
    loss_grad = std::move(l.grad);
    return l.loss;
}

inline void check_dataset_for(const StackedRclstm& model, const WindowedDataset& ds)
{
    if (ds.size() == 0) throw DataError("fit: empty training set");
    if (ds.task != model.task) throw DomainError("fit: dataset task does not match model task");
    detail::require_shape(ds.feature_dim == model.input_dim(), "fit: dataset feature dim != model input dim");
    if (model.task == Task::classification)
        detail::require_shape(model.output_dim() >= 1, "fit: classification model without classes");
}

/// Mini-batch BPTT over the full window. Per epoch: optional shuffle of
/// sample order, then for each batch the mean loss gradient is clipped and
/// applied. Deterministic given config.seed.
inline TrainingHistory fit(StackedRclstm& model, const WindowedDataset& train, const TrainingConfig& cfg,
                           const WindowedDataset* validation = nullptr)
{
    cfg.validate();
    check_dataset_for(model, train);
    TrainingHistory hist;
    if (cfg.epochs == 0) return hist;

    Rng rng(derive_seed(cfg.seed, 0x5eed));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    ModelGrads grads(model);
    OptimizerState opt;
    SequenceCache cache;
    Vector loss_grad;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg.shuffle) rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            grads.zero();
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t k = order[s];
                try {
                    const auto& pred = forward_sequence(model, window_of(train, k), cache);
                    const double loss = sample_loss(model, pred, train, k, loss_grad);
                    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss");
                    loss_sum += loss;
                } catch (const DivergenceError& e) {
                    throw DivergenceError(std::string("training diverged in epoch ") + std::to_string(epoch + 1) +
                                              ": " + e.what(),
                                          epoch + 1);
                }
                for (auto& g : loss_grad) g *= scale;
                backward_sequence_accumulate(model, cache, loss_grad, grads);
            }
            auto g = grads.spans();
            clip_gradients(g, cfg.grad_clip);
            try {
                optimizer_step(model, grads, opt, cfg.optimizer);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string("training diverged in epoch ") + std::to_string(epoch + 1) + ": " +
                                          e.what(),
                                      epoch + 1);
            }
        }
        hist.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
        if (validation != nullptr && validation->size() > 0) hist.validation.push_back(evaluate_metric(model, *validation));
        hist.epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return hist;
}

/// Mean training loss of the current parameters (no update).
inline double dataset_loss(const StackedRclstm& model, const WindowedDataset& ds)
{
    Predictor predict(model);
    Vector g;
    double s = 0.0;
    for (std::size_t k = 0; k < ds.size(); ++k) s += sample_loss(model, predict(window_of(ds, k)), ds, k, g);
    return s / static_cast<double>(ds.size());
}

// -- checkpoints --------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "RCLSTMCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> save_checkpoint(const StackedRclstm& m)
{
    m.validate();
    io::Writer w;
    w.header(std::string_view(kCheckpointMagic, 8), kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(m.task));
    w.u64(m.seed);
    w.u64(m.layers.size());
    for (const auto& l : m.layers) {
        w.u64(l.input_dim());
        w.u64(l.hidden_dim());
        w.u8(static_cast<std::uint8_t>(l.policy()));
        w.f64(l.sparse_threshold());
        const auto& mask = l.mask();
        w.f64(mask.target_density);
        w.u64(mask.seed);
        w.u8(static_cast<std::uint8_t>(mask.mode));
        std::vector<std::uint8_t> packed((mask.bits.size() + 7) / 8, 0);
        for (std::size_t k = 0; k < mask.bits.size(); ++k)
            if (mask.bits.at_flat(k)) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
        w.u64(packed.size());
        w.bytes(packed.data(), packed.size());
        w.f64s(l.w().values());
        w.f64s(l.b());
    }
    w.u64(m.head_w.rows());
    w.u64(m.head_w.cols());
    w.f64s(m.head_w.values());
    w.f64s(m.head_b);
    return w.take();
}

inline StackedRclstm load_checkpoint(std::span<const std::uint8_t> bytes)
{
    io::Reader r(bytes);
    r.expect_header(std::string_view(kCheckpointMagic, 8), kCheckpointVersion);
    StackedRclstm m;
    const auto task = r.u8();
    if (task > 1) throw FormatError("corrupt stream: bad task tag");
    m.task = static_cast<Task>(task);
    m.seed = r.u64();
    const auto n_layers = r.count(1);
    try {
        for (std::size_t k = 0; k < n_layers; ++k) {
            const auto d = static_cast<std::size_t>(r.u64());
            const auto h = static_cast<std::size_t>(r.u64());
            if (d == 0 || h == 0 || d > (1u << 20) || h > (1u << 20)) throw FormatError("corrupt stream: bad layer dims");
            const auto policy = r.u8();
            if (policy > 2) throw FormatError("corrupt stream: bad kernel policy");
            const double threshold = r.f64();
            ConnectivityMask mask{BoolMatrix(4 * h, d + h), r.f64(), r.u64(), MaskMode::probabilistic};
            const auto mode = r.u8();
            if (mode > 1) throw FormatError("corrupt stream: bad mask mode");
            mask.mode = static_cast<MaskMode>(mode);
            const auto nbytes = r.count(1);
            if (nbytes != (mask.bits.size() + 7) / 8) throw FormatError("corrupt stream: mask size mismatch");
            std::vector<std::uint8_t> packed(nbytes);
            r.bytes(packed.data(), nbytes);
            for (std::size_t j = 0; j < mask.bits.size(); ++j) mask.bits.set_flat(j, (packed[j / 8] >> (j % 8)) & 1u);
            DenseMatrix w(4 * h, d + h, r.f64s());
            Vector b = r.f64s();
            auto layer = LstmLayerParams::from_values(d, h, std::move(w), std::move(b), std::move(mask),
                                                      static_cast<KernelPolicy>(policy), threshold);
            m.layers.push_back(std::move(layer));
        }
        const auto rows = static_cast<std::size_t>(r.u64());
        const auto cols = static_cast<std::size_t>(r.u64());
        m.head_w = DenseMatrix(rows, cols, r.f64s());
        m.head_b = r.f64s();
        r.expect_end();
        m.validate();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("corrupt stream: ") + e.what());
    }
    return m;
}

inline void save_checkpoint_file(const StackedRclstm& m, const std::string& path)
{
    io::write_file(path, save_checkpoint(m));
}

inline StackedRclstm load_checkpoint_file(const std::string& path) { return load_checkpoint(io::read_file(path)); }

}  // namespace rclstm
