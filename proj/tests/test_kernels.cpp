#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "ldmshield/kernels.hpp"
#include "ldmshield/rng.hpp"
#include "ldmshield/tensor.hpp"

using namespace ldms;

namespace {
Tensor rand_tensor(Rng& rng, std::vector<int> shape) { return rng.normal_tensor(std::move(shape)); }

void expect_bitequal(const Tensor& a, const Tensor& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}
}  // namespace

TEST_CASE("elementwise ops match between backends bit-exactly") {
    Rng rng(1);
    const std::size_t n = 10007;
    Tensor x = rand_tensor(rng, {static_cast<int>(n)});
    Tensor y = rand_tensor(rng, {static_cast<int>(n)});
    Tensor a(std::vector<int>{static_cast<int>(n)}), b(std::vector<int>{static_cast<int>(n)});

    kern::serial::axpby(n, 1.3, x.data(), -0.7, y.data(), a.data());
    kern::omp::axpby(n, 1.3, x.data(), -0.7, y.data(), b.data());
    expect_bitequal(a, b);

    kern::serial::silu(n, x.data(), a.data());
    kern::omp::silu(n, x.data(), b.data());
    expect_bitequal(a, b);

    a.fill(0.25);
    b.fill(0.25);
    kern::serial::silu_bwd(n, x.data(), y.data(), a.data());
    kern::omp::silu_bwd(n, x.data(), y.data(), b.data());
    expect_bitequal(a, b);
}

TEST_CASE("reductions are deterministic and backend-equal") {
    Rng rng(2);
    const std::size_t n = 123457;
    Tensor x = rand_tensor(rng, {static_cast<int>(n)});
    Tensor y = rand_tensor(rng, {static_cast<int>(n)});
    REQUIRE(kern::serial::sum(n, x.data()) == kern::omp::sum(n, x.data()));
    REQUIRE(kern::serial::dot(n, x.data(), y.data()) == kern::omp::dot(n, x.data(), y.data()));
}

TEST_CASE("matmul family matches between backends bit-exactly") {
    Rng rng(3);
    int M = 17, K = 23, N = 31;
    Tensor A = rand_tensor(rng, {M, K});
    Tensor B = rand_tensor(rng, {K, N});
    Tensor G = rand_tensor(rng, {M, N});

    Tensor c1({M, N}), c2({M, N});
    kern::serial::matmul(M, K, N, A.data(), B.data(), c1.data());
    kern::omp::matmul(M, K, N, A.data(), B.data(), c2.data());
    expect_bitequal(c1, c2);

    Tensor t1({K, N}, 0.5), t2({K, N}, 0.5);
    kern::serial::matmul_tn_acc(M, K, N, A.data(), G.data(), t1.data());
    kern::omp::matmul_tn_acc(M, K, N, A.data(), G.data(), t2.data());
    expect_bitequal(t1, t2);

    Tensor u1({M, K}, -0.1), u2({M, K}, -0.1);
    kern::serial::matmul_nt_acc(M, K, N, G.data(), B.data(), u1.data());
    kern::omp::matmul_nt_acc(M, K, N, G.data(), B.data(), u2.data());
    expect_bitequal(u1, u2);
}

TEST_CASE("conv2d forward/backward matches between backends bit-exactly") {
    Rng rng(4);
    int H = 13, W = 11, Ci = 5, Co = 7;
    for (int stride : {1, 2}) {
        Tensor x = rand_tensor(rng, {H, W, Ci});
        Tensor w = rand_tensor(rng, {3, 3, Ci, Co});
        Tensor bias = rand_tensor(rng, {Co});
        int Ho = (H + 2 - 3) / stride + 1, Wo = (W + 2 - 3) / stride + 1;

        Tensor o1({Ho, Wo, Co}), o2({Ho, Wo, Co});
        kern::serial::conv2d(H, W, Ci, Co, 3, 3, 1, stride, x.data(), w.data(), bias.data(),
                             o1.data());
        kern::omp::conv2d(H, W, Ci, Co, 3, 3, 1, stride, x.data(), w.data(), bias.data(),
                          o2.data());
        expect_bitequal(o1, o2);

        Tensor gout = rand_tensor(rng, {Ho, Wo, Co});
        Tensor gx1({H, W, Ci}), gx2({H, W, Ci});
        kern::serial::conv2d_bwd_input(H, W, Ci, Co, 3, 3, 1, stride, gout.data(), w.data(),
                                       gx1.data());
        kern::omp::conv2d_bwd_input(H, W, Ci, Co, 3, 3, 1, stride, gout.data(), w.data(),
                                    gx2.data());
        expect_bitequal(gx1, gx2);

        Tensor gw1({3, 3, Ci, Co}), gw2({3, 3, Ci, Co});
        Tensor gb1({Co}), gb2({Co});
        kern::serial::conv2d_bwd_weight(H, W, Ci, Co, 3, 3, 1, stride, x.data(), gout.data(),
                                        gw1.data(), gb1.data());
        kern::omp::conv2d_bwd_weight(H, W, Ci, Co, 3, 3, 1, stride, x.data(), gout.data(),
                                     gw2.data(), gb2.data());
        expect_bitequal(gw1, gw2);
        expect_bitequal(gb1, gb2);
    }
}

TEST_CASE("pool/upsample/groupnorm match between backends bit-exactly") {
    Rng rng(5);
    int H = 12, W = 10, C = 8;
    Tensor x = rand_tensor(rng, {H, W, C});

    Tensor p1({H / 2, W / 2, C}), p2({H / 2, W / 2, C});
    kern::serial::avgpool2(H, W, C, x.data(), p1.data());
    kern::omp::avgpool2(H, W, C, x.data(), p2.data());
    expect_bitequal(p1, p2);

    Tensor u1({2 * H, 2 * W, C}), u2({2 * H, 2 * W, C});
    kern::serial::upsample2(H, W, C, x.data(), u1.data());
    kern::omp::upsample2(H, W, C, x.data(), u2.data());
    expect_bitequal(u1, u2);

    Tensor gamma = rand_tensor(rng, {C});
    Tensor beta = rand_tensor(rng, {C});
    Tensor o1({H, W, C}), o2({H, W, C});
    Tensor m1({4}), m2({4}), r1({4}), r2({4});
    kern::serial::group_norm(H, W, C, 4, 1e-5, x.data(), gamma.data(), beta.data(), o1.data(),
                             m1.data(), r1.data());
    kern::omp::group_norm(H, W, C, 4, 1e-5, x.data(), gamma.data(), beta.data(), o2.data(),
                          m2.data(), r2.data());
    expect_bitequal(o1, o2);
    expect_bitequal(m1, m2);
    expect_bitequal(r1, r2);

    Tensor gout = rand_tensor(rng, {H, W, C});
    Tensor gx1({H, W, C}), gx2({H, W, C}), gg1({C}), gg2({C}), gb1({C}), gb2({C});
    kern::serial::group_norm_bwd(H, W, C, 4, x.data(), gamma.data(), gout.data(), m1.data(),
                                 r1.data(), gx1.data(), gg1.data(), gb1.data());
    kern::omp::group_norm_bwd(H, W, C, 4, x.data(), gamma.data(), gout.data(), m2.data(),
                              r2.data(), gx2.data(), gg2.data(), gb2.data());
    expect_bitequal(gx1, gx2);
    expect_bitequal(gg1, gg2);
    expect_bitequal(gb1, gb2);
}

TEST_CASE("backend dispatch switches implementations") {
    kern::set_backend(kern::Backend::serial);
    REQUIRE(kern::backend() == kern::Backend::serial);
    kern::set_backend(kern::Backend::parallel);
    REQUIRE(kern::backend() == kern::Backend::parallel);
}
