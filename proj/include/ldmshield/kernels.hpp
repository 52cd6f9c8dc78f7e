#pragma once

#include <cstddef>

// Numeric kernels behind the autodiff tape. Every op has a serial reference
// implementation and an OpenMP implementation with identical per-element
// arithmetic order, so the two backends produce bit-identical results and
// outputs do not depend on the thread count. Reductions use fixed-size
// blocks combined in index order for the same reason.

namespace ldms::kern {

enum class Backend { serial, parallel };

Backend backend();
void set_backend(Backend b);

// elementwise
void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);
void scale(std::size_t n, double a, const double* x, double* out);
void acc_scaled(std::size_t n, double a, const double* x, double* acc);  // acc += a*x
void acc_mul(std::size_t n, const double* x, const double* y, double* acc);  // acc += x*y
void silu(std::size_t n, const double* x, double* out);
void silu_bwd(std::size_t n, const double* x, const double* g, double* acc);

// deterministic reductions
double sum(std::size_t n, const double* x);
double dot(std::size_t n, const double* x, const double* y);

// dense: C(MxN) = A(MxK) * B(KxN)
void matmul(int M, int K, int N, const double* A, const double* B, double* C);
// acc(KxN) += A(MxK)^T * G(MxN)
void matmul_tn_acc(int M, int K, int N, const double* A, const double* G, double* acc);
// acc(MxK) += G(MxN) * B(KxN)^T
void matmul_nt_acc(int M, int K, int N, const double* G, const double* B, double* acc);

// conv over (H, W, Ci) input, (kh, kw, Ci, Co) weight, output (Ho, Wo, Co)
// with Ho = (H + 2*pad - kh)/stride + 1. bias may be null.
void conv2d(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
            const double* x, const double* w, const double* bias, double* out);
void conv2d_bwd_input(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                      const double* gout, const double* w, double* gx_acc);
void conv2d_bwd_weight(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                       const double* x, const double* gout, double* gw_acc, double* gb_acc);

// transposed conv with kernel k, stride k, pad 0 (exact patch placement):
// input (h, w, Cz), weight (k, k, Co, Cz), output (h*k, w*k, Co)
void conv2d_patch_unproject(int h, int w, int Cz, int Co, int k,
                            const double* z, const double* wgt, double* out);

// 2x2 average pool / nearest upsample, H and W even for pool
void avgpool2(int H, int W, int C, const double* x, double* out);
void avgpool2_bwd(int H, int W, int C, const double* gout, double* gx_acc);
void upsample2(int H, int W, int C, const double* x, double* out);
void upsample2_bwd(int H, int W, int C, const double* gout, double* gx_acc);

// group norm over (H, W, C) with C % groups == 0; saves per-group mean/rstd
void group_norm(int H, int W, int C, int groups, double eps, const double* x,
                const double* gamma, const double* beta, double* out,
                double* save_mean, double* save_rstd);
void group_norm_bwd(int H, int W, int C, int groups, const double* x,
                    const double* gamma, const double* gout, const double* save_mean,
                    const double* save_rstd, double* gx_acc, double* ggamma_acc,
                    double* gbeta_acc);

namespace serial {
void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);
void scale(std::size_t n, double a, const double* x, double* out);
void acc_scaled(std::size_t n, double a, const double* x, double* acc);
void acc_mul(std::size_t n, const double* x, const double* y, double* acc);
void silu(std::size_t n, const double* x, double* out);
void silu_bwd(std::size_t n, const double* x, const double* g, double* acc);
double sum(std::size_t n, const double* x);
double dot(std::size_t n, const double* x, const double* y);
void matmul(int M, int K, int N, const double* A, const double* B, double* C);
void matmul_tn_acc(int M, int K, int N, const double* A, const double* G, double* acc);
void matmul_nt_acc(int M, int K, int N, const double* G, const double* B, double* acc);
void conv2d(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
            const double* x, const double* w, const double* bias, double* out);
void conv2d_bwd_input(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                      const double* gout, const double* w, double* gx_acc);
void conv2d_bwd_weight(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                       const double* x, const double* gout, double* gw_acc, double* gb_acc);
void conv2d_patch_unproject(int h, int w, int Cz, int Co, int k,
                            const double* z, const double* wgt, double* out);
void avgpool2(int H, int W, int C, const double* x, double* out);
void avgpool2_bwd(int H, int W, int C, const double* gout, double* gx_acc);
void upsample2(int H, int W, int C, const double* x, double* out);
void upsample2_bwd(int H, int W, int C, const double* gout, double* gx_acc);
void group_norm(int H, int W, int C, int groups, double eps, const double* x,
                const double* gamma, const double* beta, double* out,
                double* save_mean, double* save_rstd);
void group_norm_bwd(int H, int W, int C, int groups, const double* x,
                    const double* gamma, const double* gout, const double* save_mean,
                    const double* save_rstd, double* gx_acc, double* ggamma_acc,
                    double* gbeta_acc);
}  // namespace serial

namespace omp {
void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);
void scale(std::size_t n, double a, const double* x, double* out);
void acc_scaled(std::size_t n, double a, const double* x, double* acc);
void acc_mul(std::size_t n, const double* x, const double* y, double* acc);
void silu(std::size_t n, const double* x, double* out);
void silu_bwd(std::size_t n, const double* x, const double* g, double* acc);
double sum(std::size_t n, const double* x);
double dot(std::size_t n, const double* x, const double* y);
void matmul(int M, int K, int N, const double* A, const double* B, double* C);
void matmul_tn_acc(int M, int K, int N, const double* A, const double* G, double* acc);
void matmul_nt_acc(int M, int K, int N, const double* G, const double* B, double* acc);
void conv2d(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
            const double* x, const double* w, const double* bias, double* out);
void conv2d_bwd_input(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                      const double* gout, const double* w, double* gx_acc);
void conv2d_bwd_weight(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                       const double* x, const double* gout, double* gw_acc, double* gb_acc);
void conv2d_patch_unproject(int h, int w, int Cz, int Co, int k,
                            const double* z, const double* wgt, double* out);
void avgpool2(int H, int W, int C, const double* x, double* out);
void avgpool2_bwd(int H, int W, int C, const double* gout, double* gx_acc);
void upsample2(int H, int W, int C, const double* x, double* out);
void upsample2_bwd(int H, int W, int C, const double* gout, double* gx_acc);
void group_norm(int H, int W, int C, int groups, double eps, const double* x,
                const double* gamma, const double* beta, double* out,
                double* save_mean, double* save_rstd);
void group_norm_bwd(int H, int W, int C, int groups, const double* x,
                    const double* gamma, const double* gout, const double* save_mean,
                    const double* save_rstd, double* gx_acc, double* ggamma_acc,
                    double* gbeta_acc);
}  // namespace omp

}  // namespace ldms::kern
