#include "ldmshield/kernels.hpp"

#include <atomic>

namespace ldms::kern {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

Backend backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

#define LDMS_DISPATCH(fn, ...)                    \
    do {                                          \
        if (backend() == Backend::parallel)       \
            return omp::fn(__VA_ARGS__);          \
        return serial::fn(__VA_ARGS__);           \
    } while (0)

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
    LDMS_DISPATCH(axpby, n, a, x, b, y, out);
}
void mul(std::size_t n, const double* x, const double* y, double* out) {
    LDMS_DISPATCH(mul, n, x, y, out);
}
void scale(std::size_t n, double a, const double* x, double* out) {
    LDMS_DISPATCH(scale, n, a, x, out);
}
void acc_scaled(std::size_t n, double a, const double* x, double* acc) {
    LDMS_DISPATCH(acc_scaled, n, a, x, acc);
}
void acc_mul(std::size_t n, const double* x, const double* y, double* acc) {
    LDMS_DISPATCH(acc_mul, n, x, y, acc);
}
void silu(std::size_t n, const double* x, double* out) { LDMS_DISPATCH(silu, n, x, out); }
void silu_bwd(std::size_t n, const double* x, const double* g, double* acc) {
    LDMS_DISPATCH(silu_bwd, n, x, g, acc);
}
double sum(std::size_t n, const double* x) {
    if (backend() == Backend::parallel) return omp::sum(n, x);
    return serial::sum(n, x);
}
double dot(std::size_t n, const double* x, const double* y) {
    if (backend() == Backend::parallel) return omp::dot(n, x, y);
    return serial::dot(n, x, y);
}
void matmul(int M, int K, int N, const double* A, const double* B, double* C) {
    LDMS_DISPATCH(matmul, M, K, N, A, B, C);
}
void matmul_tn_acc(int M, int K, int N, const double* A, const double* G, double* acc) {
    LDMS_DISPATCH(matmul_tn_acc, M, K, N, A, G, acc);
}
void matmul_nt_acc(int M, int K, int N, const double* G, const double* B, double* acc) {
    LDMS_DISPATCH(matmul_nt_acc, M, K, N, G, B, acc);
}
void conv2d(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
            const double* x, const double* w, const double* bias, double* out) {
    LDMS_DISPATCH(conv2d, H, W, Ci, Co, kh, kw, pad, stride, x, w, bias, out);
}
void conv2d_bwd_input(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                      const double* gout, const double* w, double* gx_acc) {
    LDMS_DISPATCH(conv2d_bwd_input, H, W, Ci, Co, kh, kw, pad, stride, gout, w, gx_acc);
}
void conv2d_bwd_weight(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                       const double* x, const double* gout, double* gw_acc, double* gb_acc) {
    LDMS_DISPATCH(conv2d_bwd_weight, H, W, Ci, Co, kh, kw, pad, stride, x, gout, gw_acc, gb_acc);
}
void conv2d_patch_unproject(int h, int w, int Cz, int Co, int k,
                            const double* z, const double* wgt, double* out) {
    LDMS_DISPATCH(conv2d_patch_unproject, h, w, Cz, Co, k, z, wgt, out);
}
void avgpool2(int H, int W, int C, const double* x, double* out) {
    LDMS_DISPATCH(avgpool2, H, W, C, x, out);
}
void avgpool2_bwd(int H, int W, int C, const double* gout, double* gx_acc) {
    LDMS_DISPATCH(avgpool2_bwd, H, W, C, gout, gx_acc);
}
void upsample2(int H, int W, int C, const double* x, double* out) {
    LDMS_DISPATCH(upsample2, H, W, C, x, out);
}
void upsample2_bwd(int H, int W, int C, const double* gout, double* gx_acc) {
    LDMS_DISPATCH(upsample2_bwd, H, W, C, gout, gx_acc);
}
void group_norm(int H, int W, int C, int groups, double eps, const double* x,
                const double* gamma, const double* beta, double* out,
                double* save_mean, double* save_rstd) {
    LDMS_DISPATCH(group_norm, H, W, C, groups, eps, x, gamma, beta, out, save_mean, save_rstd);
}
void group_norm_bwd(int H, int W, int C, int groups, const double* x,
                    const double* gamma, const double* gout, const double* save_mean,
                    const double* save_rstd, double* gx_acc, double* ggamma_acc,
                    double* gbeta_acc) {
    LDMS_DISPATCH(group_norm_bwd, H, W, C, groups, x, gamma, gout, save_mean, save_rstd, gx_acc,
                  ggamma_acc, gbeta_acc);
}

#undef LDMS_DISPATCH

}  // namespace ldms::kern
