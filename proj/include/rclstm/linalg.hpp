#pragma once

// Dense and CSR linear algebra plus the two activations used by the cells.
// Everything here is double precision and allocation-explicit: the hot
// kernels write into caller-provided spans.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <algorithm>
#include <vector>

#include "rclstm/error.hpp"

namespace rclstm {

using Vector = std::vector<double>;

namespace detail {
inline void require_shape(bool ok, const char* what)
{
    if (!ok) throw ShapeError(what);
}
}  // namespace detail

/// Row-major dense matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill)
    {
    }
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values))
    {
        detail::require_shape(values_.size() == rows * cols, "DenseMatrix: values length != rows*cols");
    }

    static DenseMatrix identity(std::size_t n)
    {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// Row-major boolean pattern with the same indexing as DenseMatrix.
class BoolMatrix {
public:
    BoolMatrix() = default;
    BoolMatrix(std::size_t rows, std::size_t cols, bool fill = false)
        : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0)
    {
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool operator()(std::size_t r, std::size_t c) const noexcept { return bits_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v) noexcept { bits_[r * cols_ + c] = v ? 1 : 0; }
    bool at_flat(std::size_t k) const noexcept { return bits_[k] != 0; }
    void set_flat(std::size_t k, bool v) noexcept { bits_[k] = v ? 1 : 0; }

    std::size_t count() const noexcept
    {
        std::size_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }

    friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within a row.
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_offsets{0};
    std::vector<std::size_t> col_indices;
    std::vector<double> values;

    std::size_t nnz() const noexcept { return values.size(); }
    double density() const noexcept
    {
        return rows * cols == 0 ? 0.0 : static_cast<double>(nnz()) / static_cast<double>(rows * cols);
    }
};

// -- dense kernels ------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) noexcept
{
    // Four independent accumulators; the zeros of a masked row add exactly 0.
    const std::size_t n = a.size();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) s0 += a[j] * b[j];
    return (s0 + s1) + (s2 + s3);
}

/// out = a * x
inline void matvec_into(const DenseMatrix& a, std::span<const double> x, std::span<double> out)
{
    detail::require_shape(a.cols() == x.size(), "matvec: a.cols != x.length");
    detail::require_shape(a.rows() == out.size(), "matvec: output length != a.rows");
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x)
{
    Vector out(a.rows());
    matvec_into(a, x, out);
    return out;
}

/// out += a^T * y
inline void matvec_transposed_accumulate(const DenseMatrix& a, std::span<const double> y, std::span<double> out)
{
    detail::require_shape(a.rows() == y.size(), "matvec_transposed: a.rows != y.length");
    detail::require_shape(a.cols() == out.size(), "matvec_transposed: output length != a.cols");
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double yi = y[i];
        if (yi == 0.0) continue;
        const double* row = a.row(i).data();
        double* o = out.data();
        for (std::size_t j = 0; j < n; ++j) o[j] += yi * row[j];
    }
}

/// g += u v^T
inline void outer_accumulate(DenseMatrix& g, std::span<const double> u, std::span<const double> v)
{
    detail::require_shape(g.rows() == u.size() && g.cols() == v.size(), "outer_accumulate: shape mismatch");
    const std::size_t n = g.cols();
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const double ui = u[i];
        if (ui == 0.0) continue;
        double* row = g.row(i).data();
        const double* vv = v.data();
        for (std::size_t j = 0; j < n; ++j) row[j] += ui * vv[j];
    }
}

// -- sparse kernels -----------------------------------------------------------

inline CsrMatrix csr_from_masked(const DenseMatrix& w, const BoolMatrix& m)
{
    detail::require_shape(w.rows() == m.rows() && w.cols() == m.cols(), "csr_from_masked: shape mismatch");
    CsrMatrix out;
    out.rows = w.rows();
    out.cols = w.cols();
    out.row_offsets.assign(1, 0);
    out.row_offsets.reserve(w.rows() + 1);
    const std::size_t nnz = m.count();
    out.col_indices.reserve(nnz);
    out.values.reserve(nnz);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            if (m(i, j)) {
                out.col_indices.push_back(j);
                out.values.push_back(w(i, j));
            }
        }
        out.row_offsets.push_back(out.col_indices.size());
    }
    return out;
}

/// Overwrites the stored values of an existing pattern from w.
inline void csr_refresh_values(CsrMatrix& a, const DenseMatrix& w)
{
    detail::require_shape(a.rows == w.rows() && a.cols == w.cols(), "csr_refresh_values: shape mismatch");
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = w.row(i).data();
        for (std::size_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) a.values[k] = row[a.col_indices[k]];
    }
}

inline DenseMatrix densify(const CsrMatrix& a)
{
    DenseMatrix d(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) d(i, a.col_indices[k]) = a.values[k];
    return d;
}

inline void spmv_into(const CsrMatrix& a, std::span<const double> x, std::span<double> out)
{
    detail::require_shape(a.cols == x.size(), "spmv: a.cols != x.length");
    detail::require_shape(a.rows == out.size(), "spmv: output length != a.rows");
    const std::size_t* off = a.row_offsets.data();
    const std::size_t* col = a.col_indices.data();
    const double* val = a.values.data();
    for (std::size_t i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (std::size_t k = off[i]; k < off[i + 1]; ++k) s += val[k] * x[col[k]];
        out[i] = s;
    }
}

inline Vector spmv(const CsrMatrix& a, std::span<const double> x)
{
    Vector out(a.rows);
    spmv_into(a, x, out);
    return out;
}

/// out += a^T * y
inline void spmv_transposed_accumulate(const CsrMatrix& a, std::span<const double> y, std::span<double> out)
{
    detail::require_shape(a.rows == y.size(), "spmv_transposed: a.rows != y.length");
    detail::require_shape(a.cols == out.size(), "spmv_transposed: output length != a.cols");
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double yi = y[i];
        for (std::size_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) out[a.col_indices[k]] += a.values[k] * yi;
    }
}

/// g(i,j) += u[i] v[j] only where the pattern of a has an entry.
inline void outer_accumulate_pattern(DenseMatrix& g, const CsrMatrix& a, std::span<const double> u,
                                     std::span<const double> v)
{
    detail::require_shape(g.rows() == a.rows && g.cols() == a.cols, "outer_accumulate_pattern: shape mismatch");
    detail::require_shape(u.size() == a.rows && v.size() == a.cols, "outer_accumulate_pattern: vector mismatch");
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double ui = u[i];
        if (ui == 0.0) continue;
        double* row = g.row(i).data();
        for (std::size_t k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
            const std::size_t j = a.col_indices[k];
            row[j] += ui * v[j];
        }
    }
}

// -- activations --------------------------------------------------------------

inline double sigmoid(double x) noexcept
{
    // Branch on sign so exp never sees a large positive argument.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double tanh_act(double x) noexcept { return std::tanh(x); }

inline Vector sigmoid(std::span<const double> x)
{
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

inline Vector tanh_act(std::span<const double> x)
{
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    return out;
}

inline bool all_finite(std::span<const double> v) noexcept
{
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace rclstm
