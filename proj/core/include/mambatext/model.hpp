#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mambatext/autodiff.hpp"
#include "mambatext/rng.hpp"
#include "mambatext/scan.hpp"
#include "mambatext/tensor.hpp"

namespace mambatext {

enum class Pooling { mean, last };

inline const char* to_string(Pooling p) { return p == Pooling::mean ? "mean" : "last"; }

inline Pooling pooling_from_string(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "last") return Pooling::last;
    throw ConfigError("unknown pooling mode: " + s);
}

struct ModelConfig {
    int d_model = 64;
    int n_layers = 2;
    int d_state = 8;   // N
    int d_conv = 4;    // k
    int expand = 2;    // d_inner = expand * d_model
    int dt_rank = 0;   // 0 selects max(1, ceil(d_model / 16))
    int vocab_size = 2;
    int n_classes = 2;
    int max_seq_len = 512;
    Pooling pooling = Pooling::mean;
    bool exact_zoh_b = false;

    int d_inner() const { return expand * d_model; }
    int dt_rank_effective() const {
        return dt_rank > 0 ? dt_rank : std::max(1, (d_model + 15) / 16);
    }

    void validate() const {
        if (d_model < 1 || n_layers < 1 || d_state < 1 || d_conv < 1 || expand < 1)
            throw ConfigError("model dimensions must be positive");
        if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
        if (vocab_size < 2) throw ConfigError("vocab_size must cover PAD and UNK");
        if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
    }

    // Topology preset matching the published 130M configuration: 24 layers,
    // d_model 768, 50280-token vocabulary.
    static ModelConfig mamba_130m_shape() {
        ModelConfig c;
        c.d_model = 768;
        c.n_layers = 24;
        c.d_state = 16;
        c.d_conv = 4;
        c.expand = 2;
        c.dt_rank = 0;
        c.vocab_size = 50280;
        c.n_classes = 2;
        c.max_seq_len = 8000;
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct MambaBlockParams {
    Tensor<T> norm_gamma;  // {d_model}
    Tensor<T> W_in;        // {d_model, 2*d_inner}: x branch | gate branch
    Tensor<T> conv_w;      // {d_inner, k}
    Tensor<T> conv_b;      // {d_inner}
    SelectiveSSMParams<T> ssm;
    Tensor<T> W_out;  // {d_inner, d_model}
};

template <typename T>
struct MambaClassifier {
    ModelConfig cfg;
    Tensor<T> embedding;  // {vocab, d_model}
    std::vector<MambaBlockParams<T>> blocks;
    Tensor<T> final_gamma;  // {d_model}
    Tensor<T> head_w;       // {d_model, n_classes}
    Tensor<T> head_b;       // {n_classes}

    template <typename F>
    void for_each_param(F&& fn) {
        fn("embedding", embedding);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            fn(p + "norm_gamma", blocks[i].norm_gamma);
            fn(p + "W_in", blocks[i].W_in);
            fn(p + "conv_w", blocks[i].conv_w);
            fn(p + "conv_b", blocks[i].conv_b);
            fn(p + "A_log", blocks[i].ssm.A_log);
            fn(p + "D_skip", blocks[i].ssm.D_skip);
            fn(p + "W_xproj", blocks[i].ssm.W_xproj);
            fn(p + "W_dtproj", blocks[i].ssm.W_dtproj);
            fn(p + "b_dt", blocks[i].ssm.b_dt);
            fn(p + "W_out", blocks[i].W_out);
        }
        fn("final_gamma", final_gamma);
        fn("head_w", head_w);
        fn("head_b", head_b);
    }

    template <typename F>
    void for_each_param(F&& fn) const {
        const_cast<MambaClassifier*>(this)->for_each_param(
            [&fn](const std::string& name, Tensor<T>& t) {
                fn(name, static_cast<const Tensor<T>&>(t));
            });
    }

    template <typename U>
    MambaClassifier<U> cast() const {
        MambaClassifier<U> out = MambaClassifier<U>::zeros(cfg);
        std::vector<const Tensor<T>*> src;
        for_each_param([&src](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
        std::size_t i = 0;
        out.for_each_param([&](const std::string&, Tensor<U>& t) {
            for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<U>((*src[i])[j]);
            ++i;
        });
        return out;
    }

    static MambaClassifier zeros(const ModelConfig& cfg) {
        cfg.validate();
        MambaClassifier m;
        m.cfg = cfg;
        const auto V = static_cast<std::size_t>(cfg.vocab_size);
        const auto D = static_cast<std::size_t>(cfg.d_model);
        const auto DI = static_cast<std::size_t>(cfg.d_inner());
        const auto N = static_cast<std::size_t>(cfg.d_state);
        const auto K = static_cast<std::size_t>(cfg.d_conv);
        const auto R = static_cast<std::size_t>(cfg.dt_rank_effective());
        const auto NC = static_cast<std::size_t>(cfg.n_classes);
        m.embedding = Tensor<T>({V, D});
        m.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
        for (auto& b : m.blocks) {
            b.norm_gamma = Tensor<T>({D});
            b.W_in = Tensor<T>({D, 2 * DI});
            b.conv_w = Tensor<T>({DI, K});
            b.conv_b = Tensor<T>({DI});
            b.ssm.A_log = Tensor<T>({DI, N});
            b.ssm.D_skip = Tensor<T>({DI});
            b.ssm.W_xproj = Tensor<T>({DI, R + 2 * N});
            b.ssm.W_dtproj = Tensor<T>({R, DI});
            b.ssm.b_dt = Tensor<T>({DI});
            b.W_out = Tensor<T>({DI, D});
        }
        m.final_gamma = Tensor<T>({D});
        m.head_w = Tensor<T>({D, NC});
        m.head_b = Tensor<T>({NC});
        return m;
    }

    // Embeddings and projections ~ N(0, 0.02); conv uniform fan-in; head
    // zero so the initial loss sits at ln(n_classes); A = -(n+1) diagonal
    // real init; softplus(b_dt) log-uniform in [1e-3, 0.1].
    static MambaClassifier random_init(const ModelConfig& cfg, std::uint64_t seed) {
        MambaClassifier m = zeros(cfg);
        auto rng = make_rng(seed, "init");
        std::normal_distribution<double> proj(0.0, 0.02);
        auto fill_normal = [&](Tensor<T>& t) {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(proj(rng));
        };
        fill_normal(m.embedding);
        const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_conv));
        std::uniform_real_distribution<double> conv_u(-conv_bound, conv_bound);
        std::uniform_real_distribution<double> dt_u(std::log(1e-3), std::log(0.1));
        for (auto& b : m.blocks) {
            for (std::size_t i = 0; i < b.norm_gamma.size(); ++i) b.norm_gamma[i] = T(1);
            fill_normal(b.W_in);
            for (std::size_t i = 0; i < b.conv_w.size(); ++i)
                b.conv_w[i] = static_cast<T>(conv_u(rng));
            for (std::size_t i = 0; i < b.conv_b.size(); ++i)
                b.conv_b[i] = static_cast<T>(conv_u(rng));
            for (std::size_t d = 0; d < b.ssm.A_log.rows(); ++d)
                for (std::size_t n = 0; n < b.ssm.A_log.cols(); ++n)
                    b.ssm.A_log.at(d, n) = static_cast<T>(std::log(static_cast<double>(n + 1)));
            for (std::size_t i = 0; i < b.ssm.D_skip.size(); ++i) b.ssm.D_skip[i] = T(1);
            fill_normal(b.ssm.W_xproj);
            fill_normal(b.ssm.W_dtproj);
            for (std::size_t i = 0; i < b.ssm.b_dt.size(); ++i) {
                const double target = std::exp(dt_u(rng));
                // softplus^-1(target) = log(exp(target) - 1)
                b.ssm.b_dt[i] = static_cast<T>(std::log(std::expm1(target)));
            }
            fill_normal(b.W_out);
        }
        for (std::size_t i = 0; i < m.final_gamma.size(); ++i) m.final_gamma[i] = T(1);
        return m;
    }
};

// Named shapes of every learnable tensor, derived from the config alone.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> param_shapes(
    const ModelConfig& cfg) {
    const auto D = static_cast<std::size_t>(cfg.d_model);
    const auto DI = static_cast<std::size_t>(cfg.d_inner());
    const auto N = static_cast<std::size_t>(cfg.d_state);
    const auto K = static_cast<std::size_t>(cfg.d_conv);
    const auto R = static_cast<std::size_t>(cfg.dt_rank_effective());
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
    out.emplace_back("embedding",
                     std::vector<std::size_t>{static_cast<std::size_t>(cfg.vocab_size), D});
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        out.emplace_back(p + "norm_gamma", std::vector<std::size_t>{D});
        out.emplace_back(p + "W_in", std::vector<std::size_t>{D, 2 * DI});
        out.emplace_back(p + "conv_w", std::vector<std::size_t>{DI, K});
        out.emplace_back(p + "conv_b", std::vector<std::size_t>{DI});
        out.emplace_back(p + "A_log", std::vector<std::size_t>{DI, N});
        out.emplace_back(p + "D_skip", std::vector<std::size_t>{DI});
        out.emplace_back(p + "W_xproj", std::vector<std::size_t>{DI, R + 2 * N});
        out.emplace_back(p + "W_dtproj", std::vector<std::size_t>{R, DI});
        out.emplace_back(p + "b_dt", std::vector<std::size_t>{DI});
        out.emplace_back(p + "W_out", std::vector<std::size_t>{DI, D});
    }
    out.emplace_back("final_gamma", std::vector<std::size_t>{D});
    out.emplace_back("head_w",
                     std::vector<std::size_t>{D, static_cast<std::size_t>(cfg.n_classes)});
    out.emplace_back("head_b", std::vector<std::size_t>{static_cast<std::size_t>(cfg.n_classes)});
    return out;
}

inline std::uint64_t count_params(const ModelConfig& cfg) {
    std::uint64_t total = 0;
    for (const auto& [name, dims] : param_shapes(cfg)) {
        std::uint64_t n = 1;
        for (std::size_t d : dims) n *= d;
        total += n;
    }
    return total;
}

inline std::uint64_t memory_footprint_bytes(std::uint64_t n_params, std::uint64_t bytes_per_weight) {
    return n_params * bytes_per_weight;
}

// Megabytes at 1 MB = 1e6 bytes.
inline double memory_footprint_mb(std::uint64_t n_params, std::uint64_t bytes_per_weight) {
    return static_cast<double>(memory_footprint_bytes(n_params, bytes_per_weight)) / 1e6;
}

// Tape handles for one block's parameters.
template <typename T>
struct BlockVars {
    Var norm_gamma, W_in, conv_w, conv_b, A_log, D_skip, W_xproj, W_dtproj, b_dt, W_out;
};

template <typename T>
struct ModelVars {
    Var embedding;
    std::vector<BlockVars<T>> blocks;
    Var final_gamma, head_w, head_b;
};

template <typename T>
ModelVars<T> register_params(Tape<T>& t, const MambaClassifier<T>& m) {
    ModelVars<T> v;
    v.embedding = t.leaf(m.embedding);
    v.blocks.resize(m.blocks.size());
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const auto& b = m.blocks[i];
        auto& bv = v.blocks[i];
        bv.norm_gamma = t.leaf(b.norm_gamma);
        bv.W_in = t.leaf(b.W_in);
        bv.conv_w = t.leaf(b.conv_w);
        bv.conv_b = t.leaf(b.conv_b);
        bv.A_log = t.leaf(b.ssm.A_log);
        bv.D_skip = t.leaf(b.ssm.D_skip);
        bv.W_xproj = t.leaf(b.ssm.W_xproj);
        bv.W_dtproj = t.leaf(b.ssm.W_dtproj);
        bv.b_dt = t.leaf(b.ssm.b_dt);
        bv.W_out = t.leaf(b.W_out);
    }
    v.final_gamma = t.leaf(m.final_gamma);
    v.head_w = t.leaf(m.head_w);
    v.head_b = t.leaf(m.head_b);
    return v;
}

template <typename T>
std::vector<Var> flatten_vars(const ModelVars<T>& v) {
    std::vector<Var> out;
    out.push_back(v.embedding);
    for (const auto& b : v.blocks) {
        out.push_back(b.norm_gamma);
        out.push_back(b.W_in);
        out.push_back(b.conv_w);
        out.push_back(b.conv_b);
        out.push_back(b.A_log);
        out.push_back(b.D_skip);
        out.push_back(b.W_xproj);
        out.push_back(b.W_dtproj);
        out.push_back(b.b_dt);
        out.push_back(b.W_out);
    }
    out.push_back(v.final_gamma);
    out.push_back(v.head_w);
    out.push_back(v.head_b);
    return out;
}

constexpr double kRmsNormEps = 1e-6;

// One Mamba block:
//   v = rmsnorm(u); (x | z) = v W_in; x = silu(causal_conv(x));
//   s = selective_scan(x); out = (s * silu(z)) W_out + u.
template <typename T>
Var block_forward(Tape<T>& t, const BlockVars<T>& b, Var u, const ModelConfig& cfg) {
    const auto DI = static_cast<std::size_t>(cfg.d_inner());
    const auto N = static_cast<std::size_t>(cfg.d_state);
    const auto R = static_cast<std::size_t>(cfg.dt_rank_effective());
    Var v = rmsnorm(t, u, b.norm_gamma, static_cast<T>(kRmsNormEps));
    Var xz = matmul(t, v, b.W_in);
    Var xb = slice_cols(t, xz, 0, DI);
    Var zb = slice_cols(t, xz, DI, 2 * DI);
    Var xc = silu(t, conv1d_depthwise_causal(t, xb, b.conv_w, b.conv_b));
    // Input-dependent step size and state projections.
    Var seed = matmul(t, xc, b.W_xproj);
    Var dlow = slice_cols(t, seed, 0, R);
    Var bmat = slice_cols(t, seed, R, R + N);
    Var cmat = slice_cols(t, seed, R + N, R + 2 * N);
    Var delta = softplus(t, add_rowvec(t, matmul(t, dlow, b.W_dtproj), b.b_dt));
    Var a = neg_exp(t, b.A_log);
    ScanOptions opts{cfg.exact_zoh_b};
    Var s = selective_scan(t, xc, delta, bmat, cmat, a, b.D_skip, opts);
    Var gated = mul(t, s, silu(t, zb));
    return add(t, matmul(t, gated, b.W_out), u);
}

template <typename T>
Var pool(Tape<T>& t, Var hidden, const std::vector<std::uint8_t>& mask, Pooling mode) {
    return mode == Pooling::mean ? row_mean_masked(t, hidden, mask)
                                 : row_last_masked(t, hidden, mask);
}

// Full classifier graph: embed -> blocks -> final norm -> pool -> head.
template <typename T>
Var model_forward(Tape<T>& t, const ModelVars<T>& mv, const ModelConfig& cfg,
                  const std::vector<int>& ids, const std::vector<std::uint8_t>& mask) {
    if (ids.empty()) throw EmptySequence("model_forward: empty token sequence");
    if (mask.size() != ids.size())
        throw ShapeMismatch("model_forward: mask length must equal sequence length");
    Var h = embedding_rows(t, mv.embedding, ids);
    for (const auto& b : mv.blocks) h = block_forward(t, b, h, cfg);
    h = rmsnorm(t, h, mv.final_gamma, static_cast<T>(kRmsNormEps));
    Var pooled = pool(t, h, mask, cfg.pooling);
    return add_rowvec(t, matmul(t, pooled, mv.head_w), mv.head_b);
}

// Inference-only entry points; same graph on a non-recording tape.

template <typename T>
Tensor<T> block_forward(const MambaBlockParams<T>& p, const Tensor<T>& u, const ModelConfig& cfg) {
    Tape<T> t(false);
    BlockVars<T> bv;
    bv.norm_gamma = t.constant(p.norm_gamma);
    bv.W_in = t.constant(p.W_in);
    bv.conv_w = t.constant(p.conv_w);
    bv.conv_b = t.constant(p.conv_b);
    bv.A_log = t.constant(p.ssm.A_log);
    bv.D_skip = t.constant(p.ssm.D_skip);
    bv.W_xproj = t.constant(p.ssm.W_xproj);
    bv.W_dtproj = t.constant(p.ssm.W_dtproj);
    bv.b_dt = t.constant(p.ssm.b_dt);
    bv.W_out = t.constant(p.W_out);
    return t.val(block_forward(t, bv, t.constant(u), cfg));
}

template <typename T>
Tensor<T> model_forward(const MambaClassifier<T>& m, const std::vector<int>& ids,
                        const std::vector<std::uint8_t>& mask) {
    Tape<T> t(false);
    ModelVars<T> mv = register_params(t, m);
    return t.val(model_forward(t, mv, m.cfg, ids, mask));
}

// Standalone pooling over a plain tensor.
template <typename T>
Tensor<T> pool(const Tensor<T>& hidden, const std::vector<std::uint8_t>& mask, Pooling mode) {
    Tape<T> t(false);
    return t.val(pool(t, t.constant(hidden), mask, mode));
}

}  // namespace mambatext
