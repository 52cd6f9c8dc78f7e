#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "ldmshield/autodiff.hpp"
#include "ldmshield/rng.hpp"

using namespace ldms;
using ad::Tape;
using ad::Var;

namespace {

// Central finite differences of a scalar graph w.r.t. one input tensor.
// Elements with tiny gradients are measured against 1% of the gradient's
// max magnitude so FD roundoff does not dominate the relative error.
double fd_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& x, double h = 1e-5) {
    ad::ValueGrad vg = ad::value_and_input_grad(fn, x);
    double gmax = 0.0;
    for (std::size_t i = 0; i < vg.grad.size(); ++i)
        gmax = std::max(gmax, std::abs(vg.grad[i]));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        Tape tp(false), tm(false);
        double fp = tp.value(fn(tp, tp.leaf(xp, false)))[0];
        double fm = tm.value(fn(tm, tm.leaf(xm, false)))[0];
        double fd = (fp - fm) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(vg.grad[i]), 0.01 * gmax, 1e-8});
        worst = std::max(worst, std::abs(fd - vg.grad[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("elementwise and scalar op gradients match finite differences") {
    Rng rng(11);
    Tensor x = rng.normal_tensor({4, 4, 2});
    Tensor other = rng.normal_tensor({4, 4, 2});

    CHECK(fd_check([&](Tape& t, Var v) { return t.sum_squares(t.silu(v)); }, x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return t.sum_squares_diff(t.scale(v, 1.7), t.constant(other));
          },
          x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return t.sum_squares(t.mul(v, t.constant(other)));
          },
          x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return t.sum_squares(t.add_scaled(v, t.constant(other), -2.5));
          },
          x) < 1e-6);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(12);
    Tensor a = rng.normal_tensor({3, 5});
    Tensor b = rng.normal_tensor({5, 4});
    CHECK(fd_check([&](Tape& t, Var v) { return t.sum_squares(t.matmul(v, t.constant(b))); }, a) <
          1e-6);
    CHECK(fd_check([&](Tape& t, Var v) { return t.sum_squares(t.matmul(t.constant(a), v)); }, b) <
          1e-6);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(13);
    Tensor x = rng.normal_tensor({6, 5, 3});
    Tensor w = rng.normal_tensor({3, 3, 3, 4});
    Tensor bias = rng.normal_tensor({4});

    for (int stride : {1, 2}) {
        CHECK(fd_check([&](Tape& t, Var v) {
                  return t.sum_squares(
                      t.conv2d(v, t.constant(w), t.constant(bias), 1, stride));
              },
              x) < 1e-6);
        CHECK(fd_check([&](Tape& t, Var v) {
                  return t.sum_squares(
                      t.conv2d(t.constant(x), v, t.constant(bias), 1, stride));
              },
              w) < 1e-6);
        CHECK(fd_check([&](Tape& t, Var v) {
                  return t.sum_squares(t.conv2d(t.constant(x), t.constant(w), v, 1, stride));
              },
              bias) < 1e-6);
    }
}

TEST_CASE("structural op gradients match finite differences") {
    Rng rng(14);
    Tensor x = rng.normal_tensor({4, 4, 3});
    Tensor y = rng.normal_tensor({4, 4, 2});
    Tensor v3 = rng.normal_tensor({3});

    CHECK(fd_check([&](Tape& t, Var v) { return t.sum_squares(t.avg_pool2(v)); }, x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) { return t.sum_squares(t.upsample2(v)); }, x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return t.sum_squares(t.concat_c(v, t.constant(y)));
          },
          x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return t.sum_squares(t.add_channel(v, t.constant(v3)));
          },
          x) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return t.sum_squares(t.add_channel(t.constant(x), v));
          },
          v3) < 1e-6);
}

TEST_CASE("group_norm gradients match finite differences") {
    Rng rng(15);
    Tensor x = rng.normal_tensor({5, 4, 8});
    Tensor gamma = rng.normal_tensor({8});
    Tensor beta = rng.normal_tensor({8});
    Tensor probe = rng.normal_tensor({5, 4, 8});

    auto loss = [&](Tape& t, Var xin, Var g, Var b) {
        return t.sum_squares_diff(t.group_norm(xin, g, b, 4, 1e-5), t.constant(probe));
    };
    CHECK(fd_check([&](Tape& t, Var v) {
              return loss(t, v, t.constant(gamma), t.constant(beta));
          },
          x) < 1e-5);
    CHECK(fd_check([&](Tape& t, Var v) {
              return loss(t, t.constant(x), v, t.constant(beta));
          },
          gamma) < 1e-6);
    CHECK(fd_check([&](Tape& t, Var v) {
              return loss(t, t.constant(x), t.constant(gamma), v);
          },
          beta) < 1e-6);
}

TEST_CASE("param gradients accumulate into the store") {
    ad::ParamStore store;
    store.create("w", Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}));

    Tape tape;
    Var x = tape.leaf(Tensor::from({1, 2}, {1.0, -1.0}), false);
    Var w = tape.param(store, "w");
    Var loss = tape.sum_squares(tape.matmul(x, w));
    tape.backward(loss);

    // y = [1-3, 2-4] = [-2,-2]; dL/dw = x^T * 2y
    const Tensor& g = store.grad("w");
    CHECK(g.at(0, 0) == doctest::Approx(-4.0));
    CHECK(g.at(0, 1) == doctest::Approx(-4.0));
    CHECK(g.at(1, 0) == doctest::Approx(4.0));
    CHECK(g.at(1, 1) == doctest::Approx(4.0));

    // frozen params receive no gradient
    ad::ParamStore frozen;
    frozen.create("w", Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    frozen.freeze("w");
    Tape tape2;
    Var x2 = tape2.leaf(Tensor::from({1, 2}, {1.0, -1.0}), true);
    Var loss2 = tape2.sum_squares(tape2.matmul(x2, tape2.param(frozen, "w")));
    tape2.backward(loss2);
    CHECK(!frozen.has_grad("w"));
    CHECK(tape2.grad(x2).size() == 2);
}

TEST_CASE("embed_row forwards the row and scatters the gradient") {
    ad::ParamStore store;
    store.create("table", Tensor::from({3, 2}, {0, 1, 2, 3, 4, 5}));
    Tape tape;
    Var row = tape.embed_row(store, "table", 1);
    CHECK(tape.value(row)[0] == 2.0);
    CHECK(tape.value(row)[1] == 3.0);
    Var loss = tape.sum_squares(row);
    tape.backward(loss);
    const Tensor& g = store.grad("table");
    CHECK(g.at(0, 0) == 0.0);
    CHECK(g.at(1, 0) == doctest::Approx(4.0));
    CHECK(g.at(1, 1) == doctest::Approx(6.0));
    CHECK(g.at(2, 1) == 0.0);
}

TEST_CASE("checkpointed segments reproduce gradients and reduce peak memory") {
    Rng rng(16);
    Tensor x = rng.normal_tensor({8, 8, 4});
    ad::ParamStore store;
    store.create("w1", rng.normal_tensor({3, 3, 4, 8}));
    store.create("w2", rng.normal_tensor({3, 3, 8, 8}));
    store.create("w3", rng.normal_tensor({3, 3, 8, 4}));

    auto forward = [&](Tape& t, Var xin) {
        Tape::SegmentFn seg1 = [&](Tape& tt, const std::vector<Var>& in) {
            return tt.silu(tt.conv2d(in[0], tt.param(store, "w1"), Var{}, 1, 1));
        };
        Tape::SegmentFn seg2 = [&](Tape& tt, const std::vector<Var>& in) {
            return tt.silu(tt.conv2d(in[0], tt.param(store, "w2"), Var{}, 1, 1));
        };
        Tape::SegmentFn seg3 = [&](Tape& tt, const std::vector<Var>& in) {
            return tt.conv2d(in[0], tt.param(store, "w3"), Var{}, 1, 1);
        };
        Var h = t.checkpoint(seg1, {xin});
        h = t.checkpoint(seg2, {h});
        h = t.checkpoint(seg3, {h});
        return t.sum_squares(h);
    };

    store.zero_grads();
    reset_peak_tracked_bytes();
    std::size_t base = tracked_bytes();
    ad::ValueGrad standard = ad::value_and_input_grad(forward, x, /*recompute=*/false);
    std::size_t peak_standard = peak_tracked_bytes() - base;
    Tensor gw1_standard = store.grad("w1");

    store.zero_grads();
    reset_peak_tracked_bytes();
    base = tracked_bytes();
    ad::ValueGrad recompute = ad::value_and_input_grad(forward, x, /*recompute=*/true);
    std::size_t peak_recompute = peak_tracked_bytes() - base;
    Tensor gw1_recompute = store.grad("w1");

    CHECK(standard.value == doctest::Approx(recompute.value).epsilon(1e-12));
    for (std::size_t i = 0; i < standard.grad.size(); ++i)
        CHECK(standard.grad[i] == doctest::Approx(recompute.grad[i]).epsilon(1e-9));
    for (std::size_t i = 0; i < gw1_standard.size(); ++i)
        CHECK(gw1_standard[i] == doctest::Approx(gw1_recompute[i]).epsilon(1e-9));
    CHECK(peak_recompute < peak_standard);
}
