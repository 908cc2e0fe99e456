#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mambatext/errors.hpp"

namespace mambatext {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1, i8 = 2 };

template <typename T>
struct dtype_of;
template <>
struct dtype_of<float> {
    static constexpr Dtype value = Dtype::f32;
};
template <>
struct dtype_of<double> {
    static constexpr Dtype value = Dtype::f64;
};

// Dense row-major array. Rank is dynamic; sequences are {L, D}, matrices
// {rows, cols}, vectors {n}.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(numel(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel(shape_) != data_.size())
            throw ShapeMismatch("tensor data length does not match shape");
    }

    static Tensor vec(std::vector<T> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t r, std::size_t c, std::vector<T> v) {
        return Tensor({r, c}, std::move(v));
    }

    static std::size_t numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    constexpr Dtype dtype() const { return dtype_of<T>::value; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
        os << ']';
        return os.str();
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

namespace detail {
inline void require(bool ok, const char* what) {
    if (!ok) throw ShapeMismatch(what);
}
}  // namespace detail

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.same_shape(b), "elementwise add: shapes differ");
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.same_shape(b), "elementwise sub: shapes differ");
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.same_shape(b), "elementwise mul: shapes differ");
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
    return c;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank 2");
    detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        T* crow = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> transposed(const Tensor<T>& a) {
    detail::require(a.rank() == 2, "transpose: rank 2 expected");
    Tensor<T> t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

// x * sigmoid(x), elementwise.
template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
    return y;
}

template <typename T>
T softplus_scalar(T x) {
    // ln(1 + e^x); rewritten as x + ln(1 + e^-x) for x > 0 to stay stable.
    if (x > T(0)) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = softplus_scalar(x[i]);
    return y;
}

// Per-channel causal convolution over an {L, D} sequence with a {D, k}
// kernel. The input is left-padded with k-1 zeros, so kernel tap k-1
// multiplies the newest sample and output length equals input length.
template <typename T>
Tensor<T> conv1d_depthwise_causal(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    detail::require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1,
                    "conv1d: x must be LxD, w DxK, b D");
    const std::size_t L = x.rows(), D = x.cols(), K = w.cols();
    detail::require(w.rows() == D && b.dim(0) == D, "conv1d: channel counts differ");
    detail::require(K >= 1, "conv1d: kernel width must be >= 1");
    Tensor<T> y({L, D});
    for (std::size_t l = 0; l < L; ++l) {
        T* yrow = y.data() + l * D;
        for (std::size_t d = 0; d < D; ++d) yrow[d] = b[d];
        for (std::size_t j = 0; j < K; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + j) -
                                       static_cast<std::ptrdiff_t>(K - 1);
            if (src < 0) continue;
            const T* xrow = x.data() + static_cast<std::size_t>(src) * D;
            for (std::size_t d = 0; d < D; ++d) yrow[d] += w.at(d, j) * xrow[d];
        }
    }
    return y;
}

// Row-wise x / sqrt(mean(x^2) + eps) * gamma over an {L, D} sequence.
template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gamma, T eps) {
    detail::require(x.rank() == 2 && gamma.rank() == 1 && gamma.dim(0) == x.cols(),
                    "rmsnorm: gamma must match row width");
    const std::size_t L = x.rows(), D = x.cols();
    Tensor<T> y({L, D});
    for (std::size_t l = 0; l < L; ++l) {
        const T* xr = x.data() + l * D;
        T ms = T(0);
        for (std::size_t d = 0; d < D; ++d) ms += xr[d] * xr[d];
        ms = ms / static_cast<T>(D);
        const T inv = T(1) / std::sqrt(ms + eps);
        T* yr = y.data() + l * D;
        for (std::size_t d = 0; d < D; ++d) yr[d] = xr[d] * inv * gamma[d];
    }
    return y;
}

// Softmax over a flat logit vector, with max subtraction.
template <typename T>
std::vector<T> softmax_probs(const Tensor<T>& logits) {
    const std::size_t k = logits.size();
    if (k == 0) throw ShapeMismatch("softmax: empty logits");
    T mx = logits[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    std::vector<T> p(k);
    T z = T(0);
    for (std::size_t i = 0; i < k; ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (std::size_t i = 0; i < k; ++i) p[i] /= z;
    return p;
}

// -log softmax(logits)[label].
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, int label) {
    const std::size_t k = logits.size();
    if (label < 0 || static_cast<std::size_t>(label) >= k)
        throw LabelOutOfRange("cross entropy: label outside [0, K)");
    T mx = logits[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    T z = T(0);
    for (std::size_t i = 0; i < k; ++i) z += std::exp(logits[i] - mx);
    return std::log(z) - (logits[static_cast<std::size_t>(label)] - mx);
}

template <typename T>
T max_abs(const Tensor<T>& t) {
    T m = T(0);
    for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
    return m;
}

}  // namespace mambatext
