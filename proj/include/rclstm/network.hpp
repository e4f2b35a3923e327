#pragma once

// Stacked RCLSTM unrolled over an input window with a dense output head.
// States start at zero for every window; only the top layer's final hidden
// state feeds the head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rclstm/cell.hpp"
#include "rclstm/error.hpp"
#include "rclstm/linalg.hpp"
#include "rclstm/random.hpp"
#include "rclstm/task.hpp"

namespace rclstm {

/// Construction recipe for a StackedRclstm.
struct ModelSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden{300, 300, 300};
    /// Per-layer target density; a single entry applies to every layer.
    std::vector<double> density{1.0};
    MaskMode mask_mode = MaskMode::probabilistic;
    Task task = Task::regression;
    std::size_t output_dim = 1;
    std::uint64_t seed = 1;
    KernelPolicy policy = KernelPolicy::automatic;
    double sparse_threshold = kDefaultSparseThreshold;
};

struct StackedRclstm {
    std::vector<LstmLayerParams> layers;
    DenseMatrix head_w;
    Vector head_b;
    Task task = Task::regression;
    std::uint64_t seed = 0;
    /// Bumped by every parameter update; caches remember the revision they saw.
    std::uint64_t revision = 0;

    std::size_t input_dim() const noexcept { return layers.empty() ? 0 : layers.front().input_dim(); }
    std::size_t output_dim() const noexcept { return head_w.rows(); }
    std::size_t top_hidden() const noexcept { return layers.empty() ? 0 : layers.back().hidden_dim(); }

    void validate() const
    {
        detail::require_shape(!layers.empty(), "StackedRclstm: at least one layer required");
        for (std::size_t k = 1; k < layers.size(); ++k)
            detail::require_shape(layers[k].input_dim() == layers[k - 1].hidden_dim(),
                                  "StackedRclstm: layer input_dim != previous hidden_dim");
        detail::require_shape(head_w.cols() == top_hidden() && head_b.size() == head_w.rows(),
                              "StackedRclstm: head shape mismatch");
        if (task == Task::regression)
            detail::require_shape(output_dim() == 1, "StackedRclstm: regression head must have one output");
    }

    void set_policy(KernelPolicy p)
    {
        for (auto& l : layers) l.set_policy(p);
    }

    /// Number of trainable (unmasked) parameters.
    std::size_t parameter_count() const noexcept
    {
        std::size_t n = head_w.size() + head_b.size();
        for (const auto& l : layers) n += l.csr().nnz() + l.b().size();
        return n;
    }
};

inline StackedRclstm make_model(const ModelSpec& spec)
{
    detail::require_shape(!spec.hidden.empty(), "make_model: no layers");
    if (spec.density.size() != 1 && spec.density.size() != spec.hidden.size())
        throw ShapeError("make_model: density list must have 1 or one-per-layer entries");
    StackedRclstm m;
    m.task = spec.task;
    m.seed = spec.seed;
    std::size_t in = spec.input_dim;
    for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
        const std::size_t h = spec.hidden[k];
        const double dens = spec.density.size() == 1 ? spec.density[0] : spec.density[k];
        auto mask = generate_mask(4 * h, in + h, dens, derive_seed(spec.seed, 2 * k), spec.mask_mode);
        m.layers.emplace_back(in, h, std::move(mask), derive_seed(spec.seed, 2 * k + 1), spec.policy,
                              spec.sparse_threshold);
        in = h;
    }
    const std::size_t out = spec.task == Task::regression ? 1 : spec.output_dim;
    m.head_w = DenseMatrix(out, in);
    m.head_b = Vector(out, 0.0);
    Rng rng(derive_seed(spec.seed, 1000));
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : m.head_w.values()) v = rng.uniform(-scale, scale);
    m.validate();
    return m;
}

/// Read-only view of one input window: `steps` rows of `dim` features.
struct WindowView {
    std::span<const double> values;
    std::size_t steps = 0;
    std::size_t dim = 0;

    std::span<const double> at(std::size_t t) const noexcept { return values.subspan(t * dim, dim); }
};

inline std::vector<double> flatten_window(const std::vector<Vector>& window)
{
    std::vector<double> flat;
    for (const auto& v : window) flat.insert(flat.end(), v.begin(), v.end());
    return flat;
}

struct Prediction {
    double value = 0.0;  // regression output, normalized scale
    Vector logits;       // classification only
    Vector distribution;  // classification only; softmax(logits)

    /// 1-based arg-max class for classification.
    std::size_t predicted_class() const noexcept
    {
        return static_cast<std::size_t>(std::max_element(distribution.begin(), distribution.end()) -
                                        distribution.begin()) +
               1;
    }
};

inline Vector softmax(std::span<const double> logits)
{
    Vector p(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) sum += (p[k] = std::exp(logits[k] - mx));
    for (auto& v : p) v /= sum;
    return p;
}

/// Per-timestep, per-layer caches of one forward pass.
struct SequenceCache {
    std::vector<std::vector<StepCache>> steps;  // [t][layer]
    std::size_t length = 0;
    std::uint64_t revision = 0;
    const StackedRclstm* model = nullptr;
    Prediction prediction;

    const Vector& top_hidden() const { return steps[length - 1].back().h; }
};

namespace detail {
inline void check_window(const StackedRclstm& model, const WindowView& w)
{
    if (w.steps == 0) throw ShapeError("forward_sequence: empty window");
    require_shape(w.dim == model.input_dim(), "forward_sequence: feature dim != model input_dim");
    require_shape(w.values.size() == w.steps * w.dim, "forward_sequence: window storage size mismatch");
}

inline Prediction apply_head(const StackedRclstm& model, std::span<const double> top_h)
{
    Prediction out;
    Vector y = matvec(model.head_w, top_h);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += model.head_b[k];
    if (model.task == Task::regression) {
        out.value = y[0];
    } else {
        out.distribution = softmax(y);
        out.logits = std::move(y);
    }
    return out;
}
}  // namespace detail

/// Forward pass retaining every StepCache for backward_sequence. Reuses
/// `cache` storage when called repeatedly.
inline const Prediction& forward_sequence(const StackedRclstm& model, const WindowView& window, SequenceCache& cache)
{
    detail::check_window(model, window);
    const std::size_t L = model.layers.size();
    if (cache.steps.size() < window.steps) cache.steps.resize(window.steps);
    for (std::size_t t = 0; t < window.steps; ++t) cache.steps[t].resize(L);

    thread_local Vector zeros;
    for (std::size_t t = 0; t < window.steps; ++t) {
        for (std::size_t l = 0; l < L; ++l) {
            const auto& layer = model.layers[l];
            const std::size_t h = layer.hidden_dim();
            if (zeros.size() < h) zeros.assign(h, 0.0);
            std::span<const double> x = l == 0 ? window.at(t) : std::span<const double>(cache.steps[t][l - 1].h);
            std::span<const double> h_prev = t == 0 ? std::span<const double>(zeros).first(h)
                                                    : std::span<const double>(cache.steps[t - 1][l].h);
            std::span<const double> c_prev = t == 0 ? std::span<const double>(zeros).first(h)
                                                    : std::span<const double>(cache.steps[t - 1][l].c);
            cell_forward_into(layer, x, h_prev, c_prev, cache.steps[t][l]);
        }
    }
    cache.length = window.steps;
    cache.revision = model.revision;
    cache.model = &model;
    cache.prediction = detail::apply_head(model, cache.top_hidden());
    return cache.prediction;
}

inline std::pair<Prediction, SequenceCache> forward_sequence(const StackedRclstm& model,
                                                             const std::vector<Vector>& window)
{
    const auto flat = flatten_window(window);
    SequenceCache cache;
    forward_sequence(model, WindowView{flat, window.size(), model.input_dim()}, cache);
    return {cache.prediction, std::move(cache)};
}

/// Inference-only forward pass; keeps two state buffers per layer.
class Predictor {
public:
    explicit Predictor(const StackedRclstm& model) : model_(&model)
    {
        for (const auto& l : model.layers) {
            h_.emplace_back(l.hidden_dim());
            c_.emplace_back(l.hidden_dim());
            a_.emplace_back(4 * l.hidden_dim());
            in_.emplace_back(l.concat_dim());
        }
    }

    Prediction operator()(const WindowView& window)
    {
        const auto& model = *model_;
        detail::check_window(model, window);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            std::fill(h_[l].begin(), h_[l].end(), 0.0);
            std::fill(c_[l].begin(), c_[l].end(), 0.0);
        }
        for (std::size_t t = 0; t < window.steps; ++t) {
            std::span<const double> x = window.at(t);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                const auto& layer = model.layers[l];
                const std::size_t d = layer.input_dim(), hd = layer.hidden_dim();
                std::copy(x.begin(), x.end(), in_[l].begin());
                std::copy(h_[l].begin(), h_[l].end(), in_[l].begin() + static_cast<std::ptrdiff_t>(d));
                layer.preactivation(in_[l], a_[l]);
                const double* a = a_[l].data();
                for (std::size_t k = 0; k < hd; ++k) {
                    const double c = sigmoid(a[k]) * c_[l][k] + sigmoid(a[hd + k]) * std::tanh(a[2 * hd + k]);
                    if (!std::isfinite(c)) throw DivergenceError("forward: non-finite cell state");
                    c_[l][k] = c;
                    h_[l][k] = sigmoid(a[3 * hd + k]) * std::tanh(c);
                }
                x = h_[l];
            }
        }
        return detail::apply_head(model, h_.back());
    }

private:
    const StackedRclstm* model_;
    std::vector<Vector> h_, c_, a_, in_;
};

/// Gradients for every model parameter, laid out like the model.
struct ModelGrads {
    std::vector<LayerGrads> layers;
    DenseMatrix head_w;
    Vector head_b;

    ModelGrads() = default;
    explicit ModelGrads(const StackedRclstm& m)
        : head_w(m.head_w.rows(), m.head_w.cols()), head_b(m.head_b.size(), 0.0)
    {
        for (const auto& l : m.layers) layers.emplace_back(l);
    }

    void zero()
    {
        for (auto& l : layers) l.zero();
        head_w.fill(0.0);
        std::fill(head_b.begin(), head_b.end(), 0.0);
    }

    /// Spans in the same order as parameter_spans(model).
    std::vector<std::span<double>> spans()
    {
        std::vector<std::span<double>> out;
        for (auto& l : layers) {
            out.emplace_back(l.w.values());
            out.emplace_back(l.b);
        }
        out.emplace_back(head_w.values());
        out.emplace_back(head_b);
        return out;
    }
};

inline std::vector<std::span<double>> parameter_spans(StackedRclstm& m)
{
    std::vector<std::span<double>> out;
    for (auto& l : m.layers) {
        out.emplace_back(l.mutable_w().values());
        out.emplace_back(l.mutable_b());
    }
    out.emplace_back(m.head_w.values());
    out.emplace_back(m.head_b);
    return out;
}

/// Re-applies masks and refreshes kernels after a parameter update.
inline void finish_update(StackedRclstm& m)
{
    for (auto& l : m.layers) l.sync();
    ++m.revision;
}

/// Backpropagation through the full window. `loss_grad` is dL/d(output):
/// one entry for regression, dL/dlogits for classification. Gradients are
/// added into `grads`.
inline void backward_sequence_accumulate(const StackedRclstm& model, const SequenceCache& cache,
                                         std::span<const double> loss_grad, ModelGrads& grads)
{
    if (cache.model != &model || cache.revision != model.revision || cache.length == 0)
        throw StaleCacheError("backward_sequence: cache was not produced by this model revision");
    detail::require_shape(loss_grad.size() == model.output_dim(), "backward_sequence: loss_grad length != output_dim");
    detail::require_shape(grads.layers.size() == model.layers.size(), "backward_sequence: grads do not match model");

    const std::size_t L = model.layers.size();
    const std::size_t T = cache.length;
    const Vector& top_h = cache.top_hidden();
    outer_accumulate(grads.head_w, loss_grad, top_h);
    for (std::size_t k = 0; k < loss_grad.size(); ++k) grads.head_b[k] += loss_grad[k];

    // dL/dh and dL/dc flowing back from step t+1, per layer.
    thread_local std::vector<Vector> dh_rec, dc_rec, grad_in;
    thread_local Vector dh, dc_prev, from_above, scratch;
    dh_rec.resize(L);
    dc_rec.resize(L);
    grad_in.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t h = model.layers[l].hidden_dim();
        dh_rec[l].assign(h, 0.0);
        dc_rec[l].assign(h, 0.0);
        grad_in[l].resize(model.layers[l].concat_dim());
    }
    from_above.assign(model.top_hidden(), 0.0);
    matvec_transposed_accumulate(model.head_w, loss_grad, from_above);

    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t l = L; l-- > 0;) {
            const auto& layer = model.layers[l];
            const std::size_t h = layer.hidden_dim();
            dh.resize(h);
            for (std::size_t k = 0; k < h; ++k) dh[k] = dh_rec[l][k];
            if (l + 1 < L) {
                const auto& above = grad_in[l + 1];
                for (std::size_t k = 0; k < h; ++k) dh[k] += above[k];
            } else if (t == T - 1) {
                for (std::size_t k = 0; k < h; ++k) dh[k] += from_above[k];
            }
            dc_prev.resize(h);
            scratch.resize(4 * h);
            cell_backward_accumulate(layer, cache.steps[t][l], dh, dc_rec[l], grads.layers[l], grad_in[l], dc_prev,
                                     scratch);
            const std::size_t d = layer.input_dim();
            std::copy(grad_in[l].begin() + static_cast<std::ptrdiff_t>(d), grad_in[l].end(), dh_rec[l].begin());
            std::swap(dc_rec[l], dc_prev);
        }
    }
}

inline ModelGrads backward_sequence(const StackedRclstm& model, const SequenceCache& cache,
                                    std::span<const double> loss_grad)
{
    ModelGrads g(model);
    backward_sequence_accumulate(model, cache, loss_grad, g);
    return g;
}

// -- losses -------------------------------------------------------------------

struct ScalarLoss {
    double loss;
    double grad;
};

inline ScalarLoss mse_loss(double pred, double target) noexcept
{
    const double r = pred - target;
    return {r * r, 2.0 * r};
}

struct VectorLoss {
    double loss;
    Vector grad;
};

/// Softmax cross-entropy; `target_class` is 1-based like the location
/// codebook.
inline VectorLoss cross_entropy_loss(std::span<const double> logits, std::size_t target_class)
{
    if (target_class < 1 || target_class > logits.size())
        throw DomainError("cross_entropy_loss: target class " + std::to_string(target_class) + " outside 1.." +
                          std::to_string(logits.size()));
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    VectorLoss out{log_z - logits[target_class - 1], Vector(logits.size())};
    for (std::size_t k = 0; k < logits.size(); ++k) out.grad[k] = std::exp(logits[k] - log_z);
    out.grad[target_class - 1] -= 1.0;
    return out;
}

}  // namespace rclstm
