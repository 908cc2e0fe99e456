#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mambatext/tensor.hpp"

namespace mambatext {

// Linear time-invariant state space machinery: h'(t) = A h(t) + B x(t),
// y(t) = C h(t) + D x(t), its discretizations, and the two equivalent
// evaluation routes (recurrence and causal convolution).

template <typename T>
struct ContinuousSSM {
    Tensor<T> A;  // {N, N}
    Tensor<T> B;  // {N}
    Tensor<T> C;  // {N}
    T D = T(0);   // skip term, usually 0

    std::size_t state_size() const { return B.dim(0); }
};

template <typename T>
struct DiscreteSSM {
    Tensor<T> Abar;  // {N, N}
    Tensor<T> Bbar;  // {N}
    Tensor<T> C;     // {N}
    T D = T(0);
    T delta = T(0);

    std::size_t state_size() const { return Bbar.dim(0); }
};

// HiPPO-LegS matrix: A[n][k] = -sqrt((2n+1)(2k+1)) below the diagonal,
// -(n+1) on it, 0 above (0-indexed). Lower triangular, strictly negative
// diagonal, so the continuous system is asymptotically stable.
template <typename T>
Tensor<T> hippo_legs(std::size_t n) {
    if (n < 1) throw ShapeMismatch("hippo_legs: state size must be >= 1");
    Tensor<T> a({n, n});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < r; ++c)
            a.at(r, c) = -std::sqrt(static_cast<T>((2 * r + 1) * (2 * c + 1)));
        a.at(r, r) = -static_cast<T>(r + 1);
    }
    return a;
}

namespace detail {

// Solves M * X = RHS in place by Gaussian elimination with partial
// pivoting. RHS may have any number of columns.
template <typename T>
Tensor<T> solve_linear(Tensor<T> m, Tensor<T> rhs) {
    const std::size_t n = m.rows();
    require(m.cols() == n && rhs.rows() == n, "solve_linear: dimensions");
    const std::size_t w = rhs.cols();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m.at(r, col)) > std::abs(m.at(pivot, col))) pivot = r;
        if (std::abs(m.at(pivot, col)) < static_cast<T>(1e-12))
            throw SingularMatrix("discretization matrix is singular");
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m.at(col, j), m.at(pivot, j));
            for (std::size_t j = 0; j < w; ++j) std::swap(rhs.at(col, j), rhs.at(pivot, j));
        }
        const T inv = T(1) / m.at(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const T f = m.at(r, col) * inv;
            if (f == T(0)) continue;
            for (std::size_t j = col; j < n; ++j) m.at(r, j) -= f * m.at(col, j);
            for (std::size_t j = 0; j < w; ++j) rhs.at(r, j) -= f * rhs.at(col, j);
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        const T inv = T(1) / m.at(col, col);
        for (std::size_t j = 0; j < w; ++j) {
            T acc = rhs.at(col, j);
            for (std::size_t k = col + 1; k < n; ++k) acc -= m.at(col, k) * rhs.at(k, j);
            rhs.at(col, j) = acc * inv;
        }
    }
    return rhs;
}

}  // namespace detail

// Bilinear (Tustin) transform:
//   Abar = (I - d/2 A)^-1 (I + d/2 A),  Bbar = (I - d/2 A)^-1 d B.
template <typename T>
DiscreteSSM<T> discretize_bilinear(const ContinuousSSM<T>& ssm, T delta) {
    if (!(delta > T(0))) throw ShapeMismatch("discretize_bilinear: delta must be positive");
    const std::size_t n = ssm.state_size();
    detail::require(ssm.A.rank() == 2 && ssm.A.rows() == n && ssm.A.cols() == n &&
                        ssm.C.dim(0) == n,
                    "discretize_bilinear: inconsistent dimensions");
    Tensor<T> lhs({n, n});
    Tensor<T> plus({n, n + 1});
    const T half = delta / T(2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const T aij = ssm.A.at(i, j);
            lhs.at(i, j) = (i == j ? T(1) : T(0)) - half * aij;
            plus.at(i, j) = (i == j ? T(1) : T(0)) + half * aij;
        }
        plus.at(i, n) = delta * ssm.B[i];
    }
    Tensor<T> solved = detail::solve_linear(std::move(lhs), std::move(plus));
    DiscreteSSM<T> d;
    d.Abar = Tensor<T>({n, n});
    d.Bbar = Tensor<T>({n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) d.Abar.at(i, j) = solved.at(i, j);
        d.Bbar[i] = solved.at(i, n);
    }
    d.C = ssm.C;
    d.D = ssm.D;
    d.delta = delta;
    return d;
}

// Zero-order hold for a diagonal A, elementwise:
//   abar = exp(d a),  bbar = (abar - 1)/a * b, with the limit d*b as a -> 0.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> discretize_zoh_diag(const std::vector<T>& a_diag,
                                                              const std::vector<T>& b, T delta) {
    if (!(delta > T(0))) throw ShapeMismatch("discretize_zoh_diag: delta must be positive");
    if (a_diag.size() != b.size()) throw ShapeMismatch("discretize_zoh_diag: size mismatch");
    std::vector<T> abar(a_diag.size()), bbar(a_diag.size());
    for (std::size_t i = 0; i < a_diag.size(); ++i) {
        abar[i] = std::exp(delta * a_diag[i]);
        if (std::abs(a_diag[i]) < static_cast<T>(1e-9)) {
            bbar[i] = delta * b[i];
        } else {
            bbar[i] = (abar[i] - T(1)) / a_diag[i] * b[i];
        }
    }
    return {std::move(abar), std::move(bbar)};
}

// h_k = Abar h_{k-1} + Bbar x_k from h_{-1} = 0;  y_k = C h_k + D x_k.
template <typename T>
std::vector<T> recurrent_apply(const DiscreteSSM<T>& d, const std::vector<T>& x) {
    if (x.empty()) throw ShapeMismatch("recurrent_apply: empty input");
    const std::size_t n = d.state_size();
    std::vector<T> h(n, T(0)), hn(n);
    std::vector<T> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            T acc = d.Bbar[i] * x[k];
            const T* arow = d.Abar.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * h[j];
            hn[i] = acc;
        }
        std::swap(h, hn);
        T out = d.D * x[k];
        for (std::size_t i = 0; i < n; ++i) out += d.C[i] * h[i];
        y[k] = out;
    }
    return y;
}

// Impulse response K[i] = C Abar^i Bbar, built by iterated matrix-vector
// products rather than explicit powers.
template <typename T>
std::vector<T> conv_kernel(const DiscreteSSM<T>& d, std::size_t len) {
    if (len < 1) throw ShapeMismatch("conv_kernel: length must be >= 1");
    const std::size_t n = d.state_size();
    std::vector<T> v(d.Bbar.storage());
    std::vector<T> vn(n);
    std::vector<T> k(len);
    for (std::size_t i = 0; i < len; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < n; ++j) acc += d.C[j] * v[j];
        k[i] = acc;
        if (i + 1 == len) break;
        for (std::size_t r = 0; r < n; ++r) {
            T s = T(0);
            const T* arow = d.Abar.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) s += arow[j] * v[j];
            vn[r] = s;
        }
        std::swap(v, vn);
    }
    return k;
}

// y_k = sum_{i<=k} K[i] x[k-i] + D x_k. Direct O(L^2) form.
template <typename T>
std::vector<T> conv_apply(const std::vector<T>& kernel, const std::vector<T>& x, T d_skip) {
    if (kernel.size() != x.size()) throw ShapeMismatch("conv_apply: kernel/input length differ");
    std::vector<T> y(x.size(), T(0));
    for (std::size_t k = 0; k < x.size(); ++k) {
        T acc = d_skip * x[k];
        for (std::size_t i = 0; i <= k; ++i) acc += kernel[i] * x[k - i];
        y[k] = acc;
    }
    return y;
}

}  // namespace mambatext
