#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mambatext/tensor.hpp"

namespace mambatext {

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so parents
// always precede their consumers and backward() is a single reverse sweep.
// A non-recording tape evaluates the same graph but skips every backward
// closure; inference uses that mode.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int)>;

    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }

    Var leaf(Tensor<T> value) { return push(std::move(value), {}, nullptr, true); }

    Var constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, false); }

    Var emplace(Tensor<T> value, std::vector<int> parents, BackwardFn bw) {
        bool needs = false;
        if (recording_) {
            for (int p : parents) needs = needs || nodes_[static_cast<std::size_t>(p)].requires_grad;
        }
        return push(std::move(value), std::move(parents), needs ? std::move(bw) : nullptr, needs);
    }

    const Tensor<T>& val(Var v) const { return nodes_[check(v)].value; }

    bool wants_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Gradient of the last backward() target w.r.t. v; zeros if v never
    // influenced it.
    const Tensor<T>& grad(Var v) {
        std::size_t i = check(v);
        if (grads_[i].empty()) grads_[i] = Tensor<T>(nodes_[i].value.shape());
        return grads_[i];
    }

    Tensor<T>& grad_buf(int id) {
        auto i = static_cast<std::size_t>(id);
        if (grads_[i].empty()) grads_[i] = Tensor<T>(nodes_[i].value.shape());
        return grads_[i];
    }

    void backward(Var loss) {
        std::size_t root = check(loss);
        if (nodes_[root].value.size() != 1)
            throw NonScalarLoss("backward: loss must be a scalar");
        grads_.assign(nodes_.size(), Tensor<T>());
        grad_buf(static_cast<int>(root))[0] = T(1);
        for (std::size_t i = root + 1; i-- > 0;) {
            const Node& n = nodes_[i];
            if (!n.bw || grads_[i].empty()) continue;
            n.bw(*this, static_cast<int>(i));
        }
    }

private:
    struct Node {
        Tensor<T> value;
        std::vector<int> parents;
        BackwardFn bw;
        bool requires_grad;
    };

    Var push(Tensor<T> value, std::vector<int> parents, BackwardFn bw, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), std::move(parents), std::move(bw), requires_grad});
        grads_.emplace_back();
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::size_t check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw std::out_of_range("Var does not belong to this tape");
        return static_cast<std::size_t>(v.id);
    }

    bool recording_;
    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
};

namespace detail {

// dst += a * b^T  with a {m,n}, b {k,n}, dst {m,k}.
template <typename T>
void acc_matmul_nt(Tensor<T>& dst, const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * n;
        T* drow = dst.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* brow = b.data() + p * n;
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            drow[p] += acc;
        }
    }
}

// dst += a^T * b  with a {m,k}, b {m,n}, dst {k,n}.
template <typename T>
void acc_matmul_tn(Tensor<T>& dst, const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        const T* brow = b.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            T* drow = dst.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) drow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
    Tensor<T> out = matmul(t.val(a), t.val(b));
    return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        if (tp.wants_grad(a.id)) detail::acc_matmul_nt(tp.grad_buf(a.id), g, tp.val(b));
        if (tp.wants_grad(b.id)) detail::acc_matmul_tn(tp.grad_buf(b.id), tp.val(a), g);
    });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    Tensor<T> out = t.val(a) + t.val(b);
    return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        for (int pid : {a.id, b.id}) {
            if (!tp.wants_grad(pid)) continue;
            Tensor<T>& d = tp.grad_buf(pid);
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
}

// m {L,D} + v {D} broadcast over rows.
template <typename T>
Var add_rowvec(Tape<T>& t, Var m, Var v) {
    const Tensor<T>& mv = t.val(m);
    const Tensor<T>& vv = t.val(v);
    detail::require(mv.rank() == 2 && vv.rank() == 1 && vv.dim(0) == mv.cols(),
                    "add_rowvec: vector width must match columns");
    Tensor<T> out = mv;
    const std::size_t L = mv.rows(), D = mv.cols();
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t d = 0; d < D; ++d) out[l * D + d] += vv[d];
    return t.emplace(std::move(out), {m.id, v.id}, [m, v, L, D](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        if (tp.wants_grad(m.id)) {
            Tensor<T>& dm = tp.grad_buf(m.id);
            for (std::size_t i = 0; i < g.size(); ++i) dm[i] += g[i];
        }
        if (tp.wants_grad(v.id)) {
            Tensor<T>& dv = tp.grad_buf(v.id);
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t d = 0; d < D; ++d) dv[d] += g[l * D + d];
        }
    });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
    Tensor<T> out = hadamard(t.val(a), t.val(b));
    return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        if (tp.wants_grad(a.id)) {
            Tensor<T>& da = tp.grad_buf(a.id);
            const Tensor<T>& bv = tp.val(b);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
        }
        if (tp.wants_grad(b.id)) {
            Tensor<T>& db = tp.grad_buf(b.id);
            const Tensor<T>& av = tp.val(a);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
        }
    });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T s) {
    Tensor<T> out = scaled(t.val(a), s);
    return t.emplace(std::move(out), {a.id}, [a, s](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        Tensor<T>& da = tp.grad_buf(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
    });
}

template <typename T>
Var silu(Tape<T>& t, Var x) {
    Tensor<T> out = silu(t.val(x));
    return t.emplace(std::move(out), {x.id}, [x](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        const Tensor<T>& xv = tp.val(x);
        Tensor<T>& dx = tp.grad_buf(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T s = sigmoid(xv[i]);
            dx[i] += g[i] * s * (T(1) + xv[i] * (T(1) - s));
        }
    });
}

template <typename T>
Var softplus(Tape<T>& t, Var x) {
    Tensor<T> out = softplus(t.val(x));
    return t.emplace(std::move(out), {x.id}, [x](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        const Tensor<T>& xv = tp.val(x);
        Tensor<T>& dx = tp.grad_buf(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * sigmoid(xv[i]);
    });
}

// y = -exp(x); dy/dx equals y itself.
template <typename T>
Var neg_exp(Tape<T>& t, Var x) {
    Tensor<T> out = t.val(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -std::exp(out[i]);
    return t.emplace(std::move(out), {x.id}, [x](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        const Tensor<T>& yv = tp.val(Var{self});
        Tensor<T>& dx = tp.grad_buf(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i];
    });
}

template <typename T>
Var conv1d_depthwise_causal(Tape<T>& t, Var x, Var w, Var b) {
    Tensor<T> out = conv1d_depthwise_causal(t.val(x), t.val(w), t.val(b));
    return t.emplace(std::move(out), {x.id, w.id, b.id}, [x, w, b](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        const Tensor<T>& xv = tp.val(x);
        const Tensor<T>& wv = tp.val(w);
        const std::size_t L = xv.rows(), D = xv.cols(), K = wv.cols();
        if (tp.wants_grad(b.id)) {
            Tensor<T>& db = tp.grad_buf(b.id);
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t d = 0; d < D; ++d) db[d] += g[l * D + d];
        }
        const bool wx = tp.wants_grad(x.id), ww = tp.wants_grad(w.id);
        if (!wx && !ww) return;
        for (std::size_t l = 0; l < L; ++l) {
            const T* grow = g.data() + l * D;
            for (std::size_t j = 0; j < K; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + j) -
                                           static_cast<std::ptrdiff_t>(K - 1);
                if (src < 0) continue;
                const std::size_t s = static_cast<std::size_t>(src);
                if (wx) {
                    Tensor<T>& dx = tp.grad_buf(x.id);
                    for (std::size_t d = 0; d < D; ++d) dx[s * D + d] += wv.at(d, j) * grow[d];
                }
                if (ww) {
                    Tensor<T>& dw = tp.grad_buf(w.id);
                    const T* xrow = xv.data() + s * D;
                    for (std::size_t d = 0; d < D; ++d) dw[d * K + j] += grow[d] * xrow[d];
                }
            }
        }
    });
}

template <typename T>
Var rmsnorm(Tape<T>& t, Var x, Var gamma, T eps) {
    const Tensor<T>& xv = t.val(x);
    const Tensor<T>& gv = t.val(gamma);
    Tensor<T> out = rmsnorm(xv, gv, eps);
    const std::size_t L = xv.rows(), D = xv.cols();
    // Per-row 1/rms, saved for backward.
    std::vector<T> inv_r(L);
    for (std::size_t l = 0; l < L; ++l) {
        T ms = T(0);
        for (std::size_t d = 0; d < D; ++d) ms += xv[l * D + d] * xv[l * D + d];
        inv_r[l] = T(1) / std::sqrt(ms / static_cast<T>(D) + eps);
    }
    return t.emplace(std::move(out), {x.id, gamma.id},
                     [x, gamma, inv = std::move(inv_r), L, D](Tape<T>& tp, int self) {
                         const Tensor<T>& g = tp.grad_buf(self);
                         const Tensor<T>& xv2 = tp.val(x);
                         const Tensor<T>& gv2 = tp.val(gamma);
                         if (tp.wants_grad(gamma.id)) {
                             Tensor<T>& dg = tp.grad_buf(gamma.id);
                             for (std::size_t l = 0; l < L; ++l)
                                 for (std::size_t d = 0; d < D; ++d)
                                     dg[d] += g[l * D + d] * xv2[l * D + d] * inv[l];
                         }
                         if (tp.wants_grad(x.id)) {
                             Tensor<T>& dx = tp.grad_buf(x.id);
                             for (std::size_t l = 0; l < L; ++l) {
                                 T s = T(0);
                                 for (std::size_t d = 0; d < D; ++d)
                                     s += g[l * D + d] * gv2[d] * xv2[l * D + d];
                                 const T c = s * inv[l] * inv[l] * inv[l] / static_cast<T>(D);
                                 for (std::size_t d = 0; d < D; ++d)
                                     dx[l * D + d] += g[l * D + d] * gv2[d] * inv[l] -
                                                      xv2[l * D + d] * c;
                             }
                         }
                     });
}

// Columns [c0, c1) of an {L, C} node.
template <typename T>
Var slice_cols(Tape<T>& t, Var x, std::size_t c0, std::size_t c1) {
    const Tensor<T>& xv = t.val(x);
    detail::require(xv.rank() == 2 && c0 < c1 && c1 <= xv.cols(), "slice_cols: bad column range");
    const std::size_t L = xv.rows(), C = xv.cols(), W = c1 - c0;
    Tensor<T> out({L, W});
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < W; ++j) out[l * W + j] = xv[l * C + c0 + j];
    return t.emplace(std::move(out), {x.id}, [x, c0, L, C, W](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        Tensor<T>& dx = tp.grad_buf(x.id);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t j = 0; j < W; ++j) dx[l * C + c0 + j] += g[l * W + j];
    });
}

// Gather rows of an embedding table {V, D} by token id.
template <typename T>
Var embedding_rows(Tape<T>& t, Var table, std::vector<int> ids) {
    const Tensor<T>& tab = t.val(table);
    detail::require(tab.rank() == 2, "embedding_rows: table must be rank 2");
    const std::size_t V = tab.rows(), D = tab.cols(), L = ids.size();
    if (L == 0) throw EmptySequence("embedding_rows: empty id sequence");
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= V)
            throw TokenOutOfRange("token id " + std::to_string(id) + " >= vocab size " +
                                  std::to_string(V));
    Tensor<T> out({L, D});
    for (std::size_t l = 0; l < L; ++l) {
        const T* src = tab.data() + static_cast<std::size_t>(ids[l]) * D;
        T* dst = out.data() + l * D;
        for (std::size_t d = 0; d < D; ++d) dst[d] = src[d];
    }
    return t.emplace(std::move(out), {table.id},
                     [table, ids = std::move(ids), D](Tape<T>& tp, int self) {
                         const Tensor<T>& g = tp.grad_buf(self);
                         Tensor<T>& dt = tp.grad_buf(table.id);
                         for (std::size_t l = 0; l < ids.size(); ++l) {
                             T* row = dt.data() + static_cast<std::size_t>(ids[l]) * D;
                             const T* grow = g.data() + l * D;
                             for (std::size_t d = 0; d < D; ++d) row[d] += grow[d];
                         }
                     });
}

// Mean over unmasked rows -> {1, D}.
template <typename T>
Var row_mean_masked(Tape<T>& t, Var x, std::vector<std::uint8_t> mask) {
    const Tensor<T>& xv = t.val(x);
    detail::require(xv.rank() == 2 && mask.size() == xv.rows(), "row_mean_masked: mask length");
    const std::size_t L = xv.rows(), D = xv.cols();
    std::size_t count = 0;
    for (auto m : mask) count += m ? 1 : 0;
    if (count == 0) throw AllMasked("row_mean_masked: every position masked");
    Tensor<T> out({1, D});
    for (std::size_t l = 0; l < L; ++l) {
        if (!mask[l]) continue;
        for (std::size_t d = 0; d < D; ++d) out[d] += xv[l * D + d];
    }
    const T inv = T(1) / static_cast<T>(count);
    for (std::size_t d = 0; d < D; ++d) out[d] *= inv;
    return t.emplace(std::move(out), {x.id},
                     [x, mask = std::move(mask), inv, D](Tape<T>& tp, int self) {
                         const Tensor<T>& g = tp.grad_buf(self);
                         Tensor<T>& dx = tp.grad_buf(x.id);
                         for (std::size_t l = 0; l < mask.size(); ++l) {
                             if (!mask[l]) continue;
                             for (std::size_t d = 0; d < D; ++d) dx[l * D + d] += g[d] * inv;
                         }
                     });
}

// Final unmasked row -> {1, D}.
template <typename T>
Var row_last_masked(Tape<T>& t, Var x, const std::vector<std::uint8_t>& mask) {
    const Tensor<T>& xv = t.val(x);
    detail::require(xv.rank() == 2 && mask.size() == xv.rows(), "row_last_masked: mask length");
    const std::size_t L = xv.rows(), D = xv.cols();
    std::size_t last = L;
    for (std::size_t l = L; l-- > 0;) {
        if (mask[l]) {
            last = l;
            break;
        }
    }
    if (last == L) throw AllMasked("row_last_masked: every position masked");
    Tensor<T> out({1, D});
    for (std::size_t d = 0; d < D; ++d) out[d] = xv[last * D + d];
    return t.emplace(std::move(out), {x.id}, [x, last, D](Tape<T>& tp, int self) {
        const Tensor<T>& g = tp.grad_buf(self);
        Tensor<T>& dx = tp.grad_buf(x.id);
        for (std::size_t d = 0; d < D; ++d) dx[last * D + d] += g[d];
    });
}

template <typename T>
Var sum(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.val(x);
    T s = T(0);
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    return t.emplace(Tensor<T>({1}, s), {x.id}, [x](Tape<T>& tp, int self) {
        const T g = tp.grad_buf(self)[0];
        Tensor<T>& dx = tp.grad_buf(x.id);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
}

// Scalar loss -log softmax(logits)[label]; gradient is softmax - onehot.
template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, int label) {
    const Tensor<T>& lv = t.val(logits);
    T loss = softmax_cross_entropy(lv, label);
    std::vector<T> probs = softmax_probs(lv);
    return t.emplace(Tensor<T>({1}, loss), {logits.id},
                     [logits, label, probs = std::move(probs)](Tape<T>& tp, int self) {
                         const T g = tp.grad_buf(self)[0];
                         Tensor<T>& dl = tp.grad_buf(logits.id);
                         for (std::size_t i = 0; i < dl.size(); ++i) {
                             T d = probs[i] - (static_cast<std::size_t>(label) == i ? T(1) : T(0));
                             dl[i] += g * d;
                         }
                     });
}

// Central-difference gradient of a scalar function, one coordinate at a time.
// Serves as the independent oracle for every analytic gradient in this
// library; it never touches the tape.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
    if (!(h > T(0))) throw std::invalid_argument("finite_diff_grad: h must be positive");
    Tensor<T> g(x.shape());
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T orig = probe[i];
        probe[i] = orig + h;
        const T fp = f(probe);
        probe[i] = orig - h;
        const T fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (T(2) * h);
    }
    return g;
}

}  // namespace mambatext
