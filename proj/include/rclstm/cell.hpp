#pragma once

// The random-connectivity LSTM memory block.
//
// One layer owns a single weight block W of shape 4H x (D+H) acting on the
// concatenated input [x_t; h_{t-1}], with row blocks in the fixed gate order
// [forget; input; candidate; output], plus a 4H bias. A connectivity mask
// over W is sampled once at construction: a masked-out weight is exactly
// zero, is never read by the sparse kernel, and never receives a gradient.
//
//   f = sigmoid(a_f)   i = sigmoid(a_i)   z = tanh(a_z)   o = sigmoid(a_o)
//   c = f * c_prev + i * z
//   h = o * tanh(c)

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rclstm/error.hpp"
#include "rclstm/linalg.hpp"
#include "rclstm/random.hpp"

namespace rclstm {

enum class MaskMode : std::uint8_t { probabilistic = 0, exact = 1 };

inline const char* to_string(MaskMode m) noexcept { return m == MaskMode::exact ? "exact" : "probabilistic"; }

inline MaskMode parse_mask_mode(const std::string& s)
{
    if (s == "probabilistic") return MaskMode::probabilistic;
    if (s == "exact") return MaskMode::exact;
    throw DomainError("unknown mask mode '" + s + "' (expected probabilistic|exact)");
}

/// Fixed boolean connectivity pattern over one layer's weight block.
struct ConnectivityMask {
    BoolMatrix bits;
    double target_density = 1.0;
    std::uint64_t seed = 0;
    MaskMode mode = MaskMode::probabilistic;

    std::size_t rows() const noexcept { return bits.rows(); }
    std::size_t cols() const noexcept { return bits.cols(); }
    std::size_t connections() const noexcept { return bits.count(); }
    double density() const noexcept
    {
        return bits.size() == 0 ? 0.0 : static_cast<double>(connections()) / static_cast<double>(bits.size());
    }

    friend bool operator==(const ConnectivityMask&, const ConnectivityMask&) = default;
};

/// Samples a connectivity mask.
///
/// Probabilistic mode attaches a Uniform(0,1] draw to every connection and
/// keeps it when the draw exceeds the threshold 1 - target_density, so each
/// bit is independently set with probability target_density. Exact mode sets
/// exactly round(target_density * rows * cols) bits at positions drawn
/// uniformly without replacement.
inline ConnectivityMask generate_mask(std::size_t rows, std::size_t cols, double target_density, std::uint64_t seed,
                                      MaskMode mode = MaskMode::probabilistic)
{
    if (!(target_density >= 0.0 && target_density <= 1.0))
        throw DomainError("generate_mask: density must lie in [0,1], got " + std::to_string(target_density));
    ConnectivityMask m{BoolMatrix(rows, cols), target_density, seed, mode};
    Rng rng(seed);
    const std::size_t n = rows * cols;
    if (mode == MaskMode::probabilistic) {
        const double threshold = 1.0 - target_density;
        for (std::size_t k = 0; k < n; ++k) m.bits.set_flat(k, rng.uniform_open0() > threshold);
    } else {
        const auto k = static_cast<std::size_t>(std::llround(target_density * static_cast<double>(n)));
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // partial Fisher-Yates: the first k slots are a uniform k-subset
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.index(n - i));
            std::swap(idx[i], idx[j]);
            m.bits.set_flat(idx[i], true);
        }
    }
    return m;
}

enum class KernelPolicy : std::uint8_t { automatic = 0, dense = 1, sparse = 2 };

/// Density below which the automatic policy switches to the CSR kernel.
inline constexpr double kDefaultSparseThreshold = 0.2;

/// One layer's parameters: W (4H x (D+H)), b (4H) and the fixed mask.
class LstmLayerParams {
public:
    LstmLayerParams() = default;

    /// Builds a layer with W ~ U[-1/sqrt(D+H), 1/sqrt(D+H)] (then masked),
    /// zero biases except a forget-gate bias of +1.
    LstmLayerParams(std::size_t input_dim, std::size_t hidden_dim, ConnectivityMask mask, std::uint64_t init_seed,
                    KernelPolicy policy = KernelPolicy::automatic, double sparse_threshold = kDefaultSparseThreshold)
        : input_dim_(input_dim),
          hidden_dim_(hidden_dim),
          w_(4 * hidden_dim, input_dim + hidden_dim),
          b_(4 * hidden_dim, 0.0),
          mask_(std::move(mask)),
          policy_(policy),
          sparse_threshold_(sparse_threshold)
    {
        detail::require_shape(hidden_dim > 0 && input_dim > 0, "LstmLayerParams: dimensions must be positive");
        detail::require_shape(mask_.rows() == w_.rows() && mask_.cols() == w_.cols(),
                              "LstmLayerParams: mask shape != 4H x (D+H)");
        Rng rng(init_seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden_dim));
        for (auto& v : w_.values()) v = rng.uniform(-scale, scale);
        for (std::size_t r = 0; r < hidden_dim; ++r) b_[r] = 1.0;
        sync();
    }

    /// Restores a layer from explicit parameter values (checkpoint load).
    static LstmLayerParams from_values(std::size_t input_dim, std::size_t hidden_dim, DenseMatrix w, Vector b,
                                       ConnectivityMask mask, KernelPolicy policy, double sparse_threshold)
    {
        LstmLayerParams p;
        p.input_dim_ = input_dim;
        p.hidden_dim_ = hidden_dim;
        p.w_ = std::move(w);
        p.b_ = std::move(b);
        p.mask_ = std::move(mask);
        p.policy_ = policy;
        p.sparse_threshold_ = sparse_threshold;
        detail::require_shape(p.w_.rows() == 4 * hidden_dim && p.w_.cols() == input_dim + hidden_dim,
                              "LstmLayerParams: w shape != 4H x (D+H)");
        detail::require_shape(p.b_.size() == 4 * hidden_dim, "LstmLayerParams: b length != 4H");
        detail::require_shape(p.mask_.rows() == p.w_.rows() && p.mask_.cols() == p.w_.cols(),
                              "LstmLayerParams: mask shape mismatch");
        p.sync();
        return p;
    }

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t hidden_dim() const noexcept { return hidden_dim_; }
    std::size_t concat_dim() const noexcept { return input_dim_ + hidden_dim_; }

    const DenseMatrix& w() const noexcept { return w_; }
    const Vector& b() const noexcept { return b_; }
    const ConnectivityMask& mask() const noexcept { return mask_; }
    const CsrMatrix& csr() const noexcept { return csr_; }
    KernelPolicy policy() const noexcept { return policy_; }
    double sparse_threshold() const noexcept { return sparse_threshold_; }

    /// Mutable access for optimizers; call sync() afterwards.
    DenseMatrix& mutable_w() noexcept { return w_; }
    Vector& mutable_b() noexcept { return b_; }

    bool uses_sparse_kernel() const noexcept
    {
        switch (policy_) {
        case KernelPolicy::dense: return false;
        case KernelPolicy::sparse: return true;
        default: return csr_.density() < sparse_threshold_;
        }
    }

    void set_policy(KernelPolicy policy) noexcept { policy_ = policy; }

    /// Re-applies the mask to W and refreshes the CSR copy.
    void sync()
    {
        auto& v = w_.values();
        for (std::size_t k = 0; k < v.size(); ++k)
            if (!mask_.bits.at_flat(k)) v[k] = 0.0;
        if (csr_.rows != w_.rows() || csr_.cols != w_.cols() || csr_.nnz() != mask_.connections())
            csr_ = csr_from_masked(w_, mask_.bits);
        else
            csr_refresh_values(csr_, w_);
    }

    /// a = W [x; h_prev] + b using the selected kernel.
    void preactivation(std::span<const double> concat_input, std::span<double> out) const
    {
        if (uses_sparse_kernel())
            spmv_into(csr_, concat_input, out);
        else
            matvec_into(w_, concat_input, out);
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += b_[r];
    }

    friend bool operator==(const LstmLayerParams& a, const LstmLayerParams& b)
    {
        return a.input_dim_ == b.input_dim_ && a.hidden_dim_ == b.hidden_dim_ && a.w_ == b.w_ && a.b_ == b.b_ &&
               a.mask_ == b.mask_ && a.policy_ == b.policy_ && a.sparse_threshold_ == b.sparse_threshold_;
    }

private:
    std::size_t input_dim_ = 0;
    std::size_t hidden_dim_ = 0;
    DenseMatrix w_;
    Vector b_;
    ConnectivityMask mask_;
    KernelPolicy policy_ = KernelPolicy::automatic;
    double sparse_threshold_ = kDefaultSparseThreshold;
    CsrMatrix csr_;
};

struct CellState {
    Vector h;
    Vector c;

    static CellState zeros(std::size_t hidden) { return {Vector(hidden, 0.0), Vector(hidden, 0.0)}; }
};

/// Everything cell_backward needs from one forward step.
struct StepCache {
    Vector input;   // [x; h_prev], length D+H
    Vector c_prev;  // H
    Vector gates;   // activated f, i, z, o stacked, 4H
    Vector c;       // H
    Vector tanh_c;  // H
    Vector h;       // H
    std::size_t input_dim = 0;

    std::size_t hidden_dim() const noexcept { return c.size(); }
    std::span<const double> x() const noexcept { return std::span(input).first(input_dim); }
    std::span<const double> h_prev() const noexcept { return std::span(input).subspan(input_dim); }
    std::span<const double> f() const noexcept { return std::span(gates).subspan(0, hidden_dim()); }
    std::span<const double> i() const noexcept { return std::span(gates).subspan(hidden_dim(), hidden_dim()); }
    std::span<const double> z() const noexcept { return std::span(gates).subspan(2 * hidden_dim(), hidden_dim()); }
    std::span<const double> o() const noexcept { return std::span(gates).subspan(3 * hidden_dim(), hidden_dim()); }

    void resize(std::size_t d, std::size_t h_dim)
    {
        input_dim = d;
        input.resize(d + h_dim);
        c_prev.resize(h_dim);
        gates.resize(4 * h_dim);
        c.resize(h_dim);
        tanh_c.resize(h_dim);
        h.resize(h_dim);
    }
};

/// Forward step writing into a preallocated cache. Throws DivergenceError
/// when the new cell state is not finite.
inline void cell_forward_into(const LstmLayerParams& p, std::span<const double> x, std::span<const double> h_prev,
                              std::span<const double> c_prev, StepCache& cache)
{
    const std::size_t d = p.input_dim();
    const std::size_t hd = p.hidden_dim();
    detail::require_shape(x.size() == d, "cell_forward: x length != input_dim");
    detail::require_shape(h_prev.size() == hd && c_prev.size() == hd, "cell_forward: state length != hidden_dim");
    cache.resize(d, hd);
    std::copy(x.begin(), x.end(), cache.input.begin());
    std::copy(h_prev.begin(), h_prev.end(), cache.input.begin() + static_cast<std::ptrdiff_t>(d));
    std::copy(c_prev.begin(), c_prev.end(), cache.c_prev.begin());

    double* g = cache.gates.data();
    p.preactivation(cache.input, cache.gates);
    for (std::size_t r = 0; r < 2 * hd; ++r) g[r] = sigmoid(g[r]);
    for (std::size_t r = 2 * hd; r < 3 * hd; ++r) g[r] = std::tanh(g[r]);
    for (std::size_t r = 3 * hd; r < 4 * hd; ++r) g[r] = sigmoid(g[r]);

    bool finite = true;
    for (std::size_t k = 0; k < hd; ++k) {
        const double c = g[k] * c_prev[k] + g[hd + k] * g[2 * hd + k];
        finite &= std::isfinite(c);
        cache.c[k] = c;
        cache.tanh_c[k] = std::tanh(c);
        cache.h[k] = g[3 * hd + k] * cache.tanh_c[k];
    }
    if (!finite) throw DivergenceError("cell_forward: non-finite cell state");
}

inline std::pair<CellState, StepCache> cell_forward(const LstmLayerParams& p, std::span<const double> x,
                                                    const CellState& prev)
{
    StepCache cache;
    cell_forward_into(p, x, prev.h, prev.c, cache);
    CellState next{cache.h, cache.c};
    return {std::move(next), std::move(cache)};
}

/// Gradient accumulators for one layer.
struct LayerGrads {
    DenseMatrix w;
    Vector b;

    LayerGrads() = default;
    explicit LayerGrads(const LstmLayerParams& p) : w(p.w().rows(), p.w().cols()), b(p.b().size(), 0.0) {}

    void zero()
    {
        w.fill(0.0);
        std::fill(b.begin(), b.end(), 0.0);
    }
};

/// Backward step. Adds dL/dW (masked positions untouched) and dL/db into
/// `grads`, overwrites `grad_input` with dL/d[x; h_prev] and `grad_c_prev`
/// with dL/dc_prev. `scratch` must hold 4H entries.
inline void cell_backward_accumulate(const LstmLayerParams& p, const StepCache& cache, std::span<const double> grad_h,
                                     std::span<const double> grad_c, LayerGrads& grads, std::span<double> grad_input,
                                     std::span<double> grad_c_prev, std::span<double> scratch)
{
    const std::size_t hd = p.hidden_dim();
    detail::require_shape(cache.hidden_dim() == hd && cache.input.size() == p.concat_dim(),
                          "cell_backward: cache does not match layer");
    detail::require_shape(grad_h.size() == hd && grad_c.size() == hd, "cell_backward: grad length != hidden_dim");
    detail::require_shape(grad_input.size() == p.concat_dim() && grad_c_prev.size() == hd && scratch.size() == 4 * hd,
                          "cell_backward: output buffer size mismatch");

    const double* g = cache.gates.data();
    double* da = scratch.data();
    for (std::size_t k = 0; k < hd; ++k) {
        const double f = g[k], i = g[hd + k], z = g[2 * hd + k], o = g[3 * hd + k];
        const double tc = cache.tanh_c[k];
        const double dc = grad_c[k] + grad_h[k] * o * (1.0 - tc * tc);
        da[k] = dc * cache.c_prev[k] * f * (1.0 - f);
        da[hd + k] = dc * z * i * (1.0 - i);
        da[2 * hd + k] = dc * i * (1.0 - z * z);
        da[3 * hd + k] = grad_h[k] * tc * o * (1.0 - o);
        grad_c_prev[k] = dc * f;
    }
    for (std::size_t r = 0; r < 4 * hd; ++r) grads.b[r] += da[r];

    std::fill(grad_input.begin(), grad_input.end(), 0.0);
    if (p.uses_sparse_kernel()) {
        outer_accumulate_pattern(grads.w, p.csr(), scratch, cache.input);
        spmv_transposed_accumulate(p.csr(), scratch, grad_input);
    } else {
        // W is zero off-mask, but the outer product is not; project after.
        outer_accumulate(grads.w, scratch, cache.input);
        auto& gv = grads.w.values();
        if (p.csr().nnz() != gv.size())
            for (std::size_t k = 0; k < gv.size(); ++k)
                if (!p.mask().bits.at_flat(k)) gv[k] = 0.0;
        matvec_transposed_accumulate(p.w(), scratch, grad_input);
    }
}

struct CellGradients {
    DenseMatrix grad_w;
    Vector grad_b;
    Vector grad_x;
    Vector grad_h_prev;
    Vector grad_c_prev;
};

inline CellGradients cell_backward(const LstmLayerParams& p, const StepCache& cache, std::span<const double> grad_h,
                                   std::span<const double> grad_c)
{
    LayerGrads g(p);
    Vector grad_input(p.concat_dim());
    Vector grad_c_prev(p.hidden_dim());
    Vector scratch(4 * p.hidden_dim());
    cell_backward_accumulate(p, cache, grad_h, grad_c, g, grad_input, grad_c_prev, scratch);
    const auto d = static_cast<std::ptrdiff_t>(p.input_dim());
    return {std::move(g.w), std::move(g.b), Vector(grad_input.begin(), grad_input.begin() + d),
            Vector(grad_input.begin() + d, grad_input.end()), std::move(grad_c_prev)};
}

}  // namespace rclstm
