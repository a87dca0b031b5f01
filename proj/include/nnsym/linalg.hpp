#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnsym {

using cplx = std::complex<double>;

namespace detail {

inline double conj_val(double x) { return x; }
inline cplx conj_val(const cplx& x) { return std::conj(x); }

inline double abs_val(double x) { return std::fabs(x); }
inline double abs_val(const cplx& x) { return std::abs(x); }

inline bool finite_val(double x) { return std::isfinite(x); }
inline bool finite_val(const cplx& x) {
    return std::isfinite(x.real()) && std::isfinite(x.imag());
}

}  // namespace detail

/// Small dense row-major matrix over double or std::complex<double>.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!detail::finite_val(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (const T& v : data_) m = std::max(m, detail::abs_val(v));
        return m;
    }

    Matrix transpose() const {
        Matrix out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
        return out;
    }

    /// Conjugate transpose; plain transpose for real matrices.
    Matrix adjoint() const {
        Matrix out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) out(j, i) = detail::conj_val((*this)(i, j));
        return out;
    }

    Matrix conjugate() const {
        Matrix out = *this;
        for (T& v : out.data_) v = detail::conj_val(v);
        return out;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, T s) { return a *= s; }
    friend Matrix operator*(T s, Matrix a) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_)
            throw std::invalid_argument("matrix product: inner dimensions differ (" +
                                        std::to_string(a.cols_) + " vs " +
                                        std::to_string(b.rows_) + ")");
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                T aik = a(i, k);
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += aik * b(k, j);
            }
        return out;
    }

    /// y = M x
    std::vector<T> apply(std::span<const T> x) const {
        if (x.size() != cols_)
            throw std::invalid_argument("matrix apply: vector length " +
                                        std::to_string(x.size()) + " != cols " +
                                        std::to_string(cols_));
        std::vector<T> y(rows_, T{});
        for (std::size_t i = 0; i < rows_; ++i) {
            T acc{};
            const T* row = data_.data() + i * cols_;
            for (std::size_t j = 0; j < cols_; ++j) acc += row[j] * x[j];
            y[i] = acc;
        }
        return y;
    }

private:
    void require_same_shape(const Matrix& o, const char* what) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }

    std::size_t rows_ = 0, cols_ = 0;
    std::vector<T> data_;
};

using RMatrix = Matrix<double>;
using CMatrix = Matrix<cplx>;

/// max |M^T M - I| (conjugate transpose for complex): orthogonality/unitarity residual.
template <typename T>
double orthogonality_residual(const Matrix<T>& m) {
    Matrix<T> g = m.adjoint() * m;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) {
            T expect = (i == j) ? T{1} : T{0};
            worst = std::max(worst, detail::abs_val(g(i, j) - expect));
        }
    return worst;
}

/// Mean |off-diagonal of M^T M|, the per-batch group-element generation error.
template <typename T>
double mean_offdiagonal_error(const Matrix<T>& m) {
    Matrix<T> g = m.adjoint() * m;
    if (g.rows() < 2) return 0.0;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
            if (i != j) {
                acc += detail::abs_val(g(i, j));
                ++count;
            }
    return acc / static_cast<double>(count);
}

/// Determinant by LU with partial pivoting.
template <typename T>
T determinant(Matrix<T> a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("determinant: matrix must be square");
    const std::size_t n = a.rows();
    T det{1};
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = detail::abs_val(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            double v = detail::abs_val(a(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best == 0.0) return T{0};
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            det = -det;
        }
        det *= a(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            T f = a(i, k) / a(k, k);
            for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return det;
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
inline Matrix<double> cholesky(const Matrix<double>& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix must be square");
    const std::size_t n = a.rows();
    Matrix<double> l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            if (i == j) {
                if (acc <= 0.0)
                    throw std::invalid_argument("cholesky: matrix not positive definite");
                l(i, j) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
    return l;
}

/// e^A by scaling-and-squaring with a truncated Taylor series.
/// Skew-symmetric (skew-Hermitian) input yields an orthogonal (unitary) result
/// to ~1e-13 elementwise.
template <typename T>
Matrix<T> expm(const Matrix<T>& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix must be square");
    if (!a.all_finite()) throw std::invalid_argument("expm: non-finite entries");
    const std::size_t n = a.rows();

    // Induced infinity norm picks the number of halvings.
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += detail::abs_val(a(i, j));
        norm = std::max(norm, row);
    }
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));

    Matrix<T> scaled = a;
    scaled *= T{std::ldexp(1.0, -squarings)};

    Matrix<T> sum = Matrix<T>::identity(n);
    Matrix<T> term = Matrix<T>::identity(n);
    for (int k = 1; k <= 64; ++k) {
        term = term * scaled;
        term *= T{1.0 / k};
        sum += term;
        if (term.max_abs() <= 1e-18 * (1.0 + sum.max_abs())) break;
    }
    for (int s = 0; s < squarings; ++s) sum = sum * sum;
    return sum;
}

/// Dense tensor, row-major, shape = list of axis lengths.
template <typename T>
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::size_t> shape, T fill = T{})
        : shape_(std::move(shape)) {
        std::size_t total = 1;
        for (std::size_t s : shape_) total *= s;
        data_.assign(total, fill);
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    std::size_t flat_index(std::span<const std::size_t> idx) const {
        std::size_t flat = 0;
        for (std::size_t k = 0; k < shape_.size(); ++k) flat = flat * shape_[k] + idx[k];
        return flat;
    }

    T& at(std::span<const std::size_t> idx) { return data_[flat_index(idx)]; }
    const T& at(std::span<const std::size_t> idx) const { return data_[flat_index(idx)]; }
    T& at(std::initializer_list<std::size_t> idx) {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }
    const T& at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }

    double max_abs() const {
        double m = 0.0;
        for (const T& v : data_) m = std::max(m, detail::abs_val(v));
        return m;
    }

    DenseTensor& operator+=(const DenseTensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    DenseTensor& operator-=(const DenseTensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    DenseTensor& operator*=(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }
    friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
    friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }

private:
    void require_same_shape(const DenseTensor& o) const {
        if (shape_ != o.shape_) throw std::invalid_argument("tensor shape mismatch");
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using RTensor = DenseTensor<double>;
using CTensor = DenseTensor<cplx>;

/// Advance a row-major multi-index; returns false after the last one.
inline bool next_multi_index(std::vector<std::size_t>& idx,
                             std::span<const std::size_t> shape) {
    for (std::size_t k = shape.size(); k-- > 0;) {
        if (++idx[k] < shape[k]) return true;
        idx[k] = 0;
    }
    return false;
}

/// Contract one tensor axis against a matrix: out[..., i, ...] = sum_j M(i,j) T[..., j, ...].
/// Inner summation runs in ascending index order so results are reproducible bitwise.
template <typename T>
DenseTensor<T> contract_index(const DenseTensor<T>& t, const Matrix<T>& m, std::size_t axis) {
    if (axis >= t.rank())
        throw std::invalid_argument("contract_index: axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(t.rank()));
    const std::size_t a = t.shape()[axis];
    if (m.cols() != a)
        throw std::invalid_argument("contract_index: matrix cols " + std::to_string(m.cols()) +
                                    " != axis length " + std::to_string(a));
    std::size_t pre = 1, suf = 1;
    for (std::size_t k = 0; k < axis; ++k) pre *= t.shape()[k];
    for (std::size_t k = axis + 1; k < t.rank(); ++k) suf *= t.shape()[k];

    std::vector<std::size_t> out_shape = t.shape();
    out_shape[axis] = m.rows();
    DenseTensor<T> out(std::move(out_shape));

    const std::size_t b = m.rows();
    for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t s = 0; s < suf; ++s) {
                T acc{};
                for (std::size_t j = 0; j < a; ++j)
                    acc += m(i, j) * t[(p * a + j) * suf + s];
                out[(p * b + i) * suf + s] = acc;
            }
    return out;
}

}  // namespace nnsym
