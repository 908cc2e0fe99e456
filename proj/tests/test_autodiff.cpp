#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>

#include "mambatext/autodiff.hpp"
#include "mambatext/optim.hpp"

using namespace mambatext;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1,
                             double hi = 1) {
    Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

// Checks every input's tape gradient against central differences. `build`
// must assemble the same scalar graph on any tape it is given.
using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

void check_grads(const std::vector<Tensor<double>>& inputs, const Builder& build,
                 double tol = 1e-4) {
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    Var loss = build(tape, vars);
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto f = [&](const Tensor<double>& probe) {
            Tape<double> t2;
            std::vector<Var> vs;
            vs.reserve(inputs.size());
            for (std::size_t j = 0; j < inputs.size(); ++j)
                vs.push_back(t2.leaf(j == i ? probe : inputs[j]));
            return t2.val(build(t2, vs))[0];
        };
        Tensor<double> fd = finite_diff_grad<double>(f, inputs[i], 1e-5);
        const Tensor<double>& an = tape.grad(vars[i]);
        REQUIRE(an.shape() == inputs[i].shape());
        for (std::size_t k = 0; k < fd.size(); ++k) {
            const double denom = std::max({std::abs(an[k]), std::abs(fd[k]), 1e-3});
            CHECK(std::abs(an[k] - fd[k]) / denom < tol);
        }
    }
}

// Fixed random positive weights make the reduction sensitive to every
// entry while keeping the builder a pure function of its inputs.
Var weighted_sum(Tape<double>& t, Var x, std::uint64_t seed) {
    std::mt19937_64 wrng(seed);
    Tensor<double> w(t.val(x).shape());
    std::uniform_real_distribution<double> d(0.5, 1.5);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = d(wrng);
    return sum(t, mul(t, x, t.constant(w)));
}

}  // namespace

TEST_CASE("backward of a plain sum is ones") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    t.backward(sum(t, x));
    const Tensor<double>& g = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("product rule through elementwise mul") {
    Tape<double> t;
    Tensor<double> xv({3}, {1, 2, 3});
    Tensor<double> yv({3}, {4, 5, 6});
    Var x = t.leaf(xv);
    Var y = t.leaf(yv);
    t.backward(sum(t, mul(t, x, y)));
    CHECK(t.grad(x) == yv);
    CHECK(t.grad(y) == xv);
}

TEST_CASE("non-scalar loss is rejected") {
    Tape<double> t;
    Var x = t.leaf(Tensor<double>({2}, {1, 2}));
    CHECK_THROWS_AS(t.backward(x), NonScalarLoss);
}

TEST_CASE("gradients of untouched leaves come back zero-shaped") {
    Tape<double> t;
    Var used = t.leaf(Tensor<double>({2}, {1, 2}));
    Var unused = t.leaf(Tensor<double>({3}, {1, 2, 3}));
    t.backward(sum(t, used));
    CHECK(t.grad(unused).shape() == std::vector<std::size_t>{3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(t.grad(unused)[i] == 0.0);
}

TEST_CASE("finite_diff_grad examples") {
    auto sum_sq = [](const Tensor<double>& x) {
        double s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
        return s;
    };
    Tensor<double> x({2}, {1, 2});
    Tensor<double> g = finite_diff_grad<double>(sum_sq, x, 1e-5);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-6));

    auto constant = [](const Tensor<double>&) { return 3.5; };
    Tensor<double> gz = finite_diff_grad<double>(constant, x, 1e-5);
    CHECK(gz[0] == 0.0);
    CHECK(gz[1] == 0.0);

    auto silu_sum = [](const Tensor<double>& v) {
        Tensor<double> s = silu(v);
        double acc = 0;
        for (std::size_t i = 0; i < s.size(); ++i) acc += s[i];
        return acc;
    };
    Tensor<double> zero({3});
    Tensor<double> gs = finite_diff_grad<double>(silu_sum, zero, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(gs[i] == doctest::Approx(0.5).epsilon(1e-6));

    CHECK_THROWS_AS((void)finite_diff_grad<double>(constant, x, 0.0), std::invalid_argument);
}

TEST_CASE("every differentiable op matches finite differences") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t ws = rng();
        // matmul
        check_grads({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, matmul(t, v[0], v[1]), ws);
                    });
        // add / add_rowvec / mul / scale
        check_grads({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, add(t, v[0], v[1]), ws);
                    });
        check_grads({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, add_rowvec(t, v[0], v[1]), ws);
                    });
        check_grads({random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, mul(t, v[0], v[1]), ws);
                    });
        check_grads({random_tensor({6}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, scale(t, v[0], -1.7), ws);
                    });
        // nonlinearities
        check_grads({random_tensor({7}, rng, -3, 3)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, silu(t, v[0]), ws);
                    });
        check_grads({random_tensor({7}, rng, -3, 3)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, softplus(t, v[0]), ws);
                    });
        check_grads({random_tensor({5}, rng, -2, 1)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, neg_exp(t, v[0]), ws);
                    });
        // conv / rmsnorm
        check_grads({random_tensor({6, 3}, rng), random_tensor({3, 4}, rng),
                     random_tensor({3}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, conv1d_depthwise_causal(t, v[0], v[1], v[2]), ws);
                    });
        check_grads({random_tensor({4, 5}, rng), random_tensor({5}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, rmsnorm(t, v[0], v[1], 1e-6), ws);
                    });
        // slicing / gather / pooling
        check_grads({random_tensor({4, 6}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, slice_cols(t, v[0], 1, 4), ws);
                    });
        check_grads({random_tensor({5, 3}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, embedding_rows(t, v[0], {0, 2, 2, 4}), ws);
                    });
        check_grads({random_tensor({5, 3}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, row_mean_masked(t, v[0], {1, 0, 1, 1, 0}), ws);
                    });
        check_grads({random_tensor({5, 3}, rng)},
                    [ws](Tape<double>& t, const std::vector<Var>& v) {
                        return weighted_sum(t, row_last_masked(t, v[0], {1, 1, 1, 0, 0}), ws);
                    });
        // loss
        check_grads({random_tensor({4}, rng, -2, 2)},
                    [](Tape<double>& t, const std::vector<Var>& v) {
                        return softmax_cross_entropy(t, v[0], 2);
                    });
    }
}

TEST_CASE("non-recording tape evaluates without closures") {
    Tape<double> t(false);
    Var x = t.leaf(Tensor<double>({3}, {1, 2, 3}));
    Var y = silu(t, x);
    CHECK(t.val(y)[2] == doctest::Approx(3.0 * sigmoid(3.0)));
}

TEST_CASE("adamw: zero gradient and zero decay leave parameters alone") {
    Tensor<float> p({3}, {1.0f, -2.0f, 0.5f});
    const Tensor<float> orig = p;
    std::vector<Tensor<float>*> params{&p};
    std::vector<const Tensor<float>*> cparams{&p};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    auto state = AdamWState<float>::init(cparams, cfg);
    std::vector<Tensor<float>> grads{Tensor<float>({3})};
    adamw_step(params, grads, state);
    CHECK(p == orig);
    CHECK(state.step == 1);
}

TEST_CASE("adamw: first unit-gradient step moves by about -lr") {
    Tensor<double> p({4}, {0.0, 1.0, -1.0, 2.0});
    const Tensor<double> orig = p;
    std::vector<Tensor<double>*> params{&p};
    std::vector<const Tensor<double>*> cparams{&p};
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    cfg.eps = 1e-12;
    auto state = AdamWState<double>::init(cparams, cfg);
    std::vector<Tensor<double>> grads{Tensor<double>({4}, {1, 1, 1, 1})};
    adamw_step(params, grads, state);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(p[i] == doctest::Approx(orig[i] - 0.1).epsilon(1e-6));
}

TEST_CASE("adamw: decoupled decay shrinks parameters with zero gradient") {
    Tensor<double> p({2}, {2.0, -4.0});
    std::vector<Tensor<double>*> params{&p};
    std::vector<const Tensor<double>*> cparams{&p};
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    auto state = AdamWState<double>::init(cparams, cfg);
    std::vector<Tensor<double>> grads{Tensor<double>({2})};
    adamw_step(params, grads, state);
    CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(-4.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-12));
}

TEST_CASE("adamw: shape mismatch is rejected") {
    Tensor<float> p({3});
    std::vector<Tensor<float>*> params{&p};
    std::vector<const Tensor<float>*> cparams{&p};
    auto state = AdamWState<float>::init(cparams, AdamWConfig{});
    std::vector<Tensor<float>> grads{Tensor<float>({2})};
    CHECK_THROWS_AS(adamw_step(params, grads, state), ShapeMismatch);
}
