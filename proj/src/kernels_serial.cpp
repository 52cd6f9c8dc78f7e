#include "ldmshield/kernels.hpp"

#include <cmath>
#include <vector>

// Reference implementations. The OpenMP backend in kernels_omp.cpp must keep
// the same per-element arithmetic order; tests assert bit equality.

namespace ldms::kern::serial {

namespace {
constexpr std::size_t kSumBlock = 4096;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

void axpby(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double a, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void acc_scaled(std::size_t n, double a, const double* x, double* acc) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += a * x[i];
}

void acc_mul(std::size_t n, const double* x, const double* y, double* acc) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += x[i] * y[i];
}

void silu(std::size_t n, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * sigmoid(x[i]);
}

void silu_bwd(std::size_t n, const double* x, const double* g, double* acc) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = sigmoid(x[i]);
        acc[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
    }
}

double sum(std::size_t n, const double* x) {
    std::size_t nb = (n + kSumBlock - 1) / kSumBlock;
    if (nb == 0) return 0.0;
    std::vector<double> partial(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        std::size_t lo = b * kSumBlock;
        std::size_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += x[i];
        partial[b] = s;
    }
    double total = 0.0;
    for (std::size_t b = 0; b < nb; ++b) total += partial[b];
    return total;
}

double dot(std::size_t n, const double* x, const double* y) {
    std::size_t nb = (n + kSumBlock - 1) / kSumBlock;
    if (nb == 0) return 0.0;
    std::vector<double> partial(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        std::size_t lo = b * kSumBlock;
        std::size_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += x[i] * y[i];
        partial[b] = s;
    }
    double total = 0.0;
    for (std::size_t b = 0; b < nb; ++b) total += partial[b];
    return total;
}

void matmul(int M, int K, int N, const double* A, const double* B, double* C) {
    for (int m = 0; m < M; ++m) {
        double* crow = C + static_cast<std::size_t>(m) * N;
        for (int j = 0; j < N; ++j) crow[j] = 0.0;
        const double* arow = A + static_cast<std::size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            double a = arow[k];
            const double* brow = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

void matmul_tn_acc(int M, int K, int N, const double* A, const double* G, double* acc) {
    for (int k = 0; k < K; ++k) {
        double* arow = acc + static_cast<std::size_t>(k) * N;
        for (int m = 0; m < M; ++m) {
            double a = A[static_cast<std::size_t>(m) * K + k];
            const double* grow = G + static_cast<std::size_t>(m) * N;
            for (int j = 0; j < N; ++j) arow[j] += a * grow[j];
        }
    }
}

void matmul_nt_acc(int M, int K, int N, const double* G, const double* B, double* acc) {
    for (int m = 0; m < M; ++m) {
        const double* grow = G + static_cast<std::size_t>(m) * N;
        double* arow = acc + static_cast<std::size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const double* brow = B + static_cast<std::size_t>(k) * N;
            double s = 0.0;
            for (int j = 0; j < N; ++j) s += grow[j] * brow[j];
            arow[k] += s;
        }
    }
}

void conv2d(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
            const double* x, const double* w, const double* bias, double* out) {
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            double* o = out + (static_cast<std::size_t>(oy) * Wo + ox) * Co;
            for (int co = 0; co < Co; ++co) o[co] = bias ? bias[co] : 0.0;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= W) continue;
                    const double* xin = x + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                    const double* wk = w + (static_cast<std::size_t>(ky) * kw + kx) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                        double xv = xin[ci];
                        const double* wr = wk + static_cast<std::size_t>(ci) * Co;
                        for (int co = 0; co < Co; ++co) o[co] += xv * wr[co];
                    }
                }
            }
        }
    }
}

void conv2d_bwd_input(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                      const double* gout, const double* w, double* gx_acc) {
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double* g = gx_acc + (static_cast<std::size_t>(y) * W + x) * Ci;
            for (int ky = 0; ky < kh; ++ky) {
                int ty = y + pad - ky;
                if (ty < 0 || ty % stride != 0) continue;
                int oy = ty / stride;
                if (oy >= Ho) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int tx = x + pad - kx;
                    if (tx < 0 || tx % stride != 0) continue;
                    int ox = tx / stride;
                    if (ox >= Wo) continue;
                    const double* go = gout + (static_cast<std::size_t>(oy) * Wo + ox) * Co;
                    const double* wk = w + (static_cast<std::size_t>(ky) * kw + kx) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double* wr = wk + static_cast<std::size_t>(ci) * Co;
                        double s = 0.0;
                        for (int co = 0; co < Co; ++co) s += go[co] * wr[co];
                        g[ci] += s;
                    }
                }
            }
        }
    }
}

void conv2d_bwd_weight(int H, int W, int Ci, int Co, int kh, int kw, int pad, int stride,
                       const double* x, const double* gout, double* gw_acc, double* gb_acc) {
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    for (int kk = 0; kk < kh * kw; ++kk) {
        int ky = kk / kw;
        int kx = kk % kw;
        double* gw = gw_acc + static_cast<std::size_t>(kk) * Ci * Co;
        for (int oy = 0; oy < Ho; ++oy) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Wo; ++ox) {
                int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                const double* xin = x + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                const double* go = gout + (static_cast<std::size_t>(oy) * Wo + ox) * Co;
                for (int ci = 0; ci < Ci; ++ci) {
                    double xv = xin[ci];
                    double* gwr = gw + static_cast<std::size_t>(ci) * Co;
                    for (int co = 0; co < Co; ++co) gwr[co] += xv * go[co];
                }
            }
        }
    }
    if (gb_acc) {
        for (int co = 0; co < Co; ++co) {
            double s = 0.0;
            const double* go = gout + co;
            for (int p = 0; p < Ho * Wo; ++p) s += go[static_cast<std::size_t>(p) * Co];
            gb_acc[co] += s;
        }
    }
}

void conv2d_patch_unproject(int h, int w, int Cz, int Co, int k,
                            const double* z, const double* wgt, double* out) {
    // out[(y*k+dy), (x*k+dx), co] = sum_cz z[y, x, cz] * wgt[dy, dx, co, cz]
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* zin = z + (static_cast<std::size_t>(y) * w + x) * Cz;
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx) {
                    double* o = out +
                                ((static_cast<std::size_t>(y * k + dy)) * (w * k) + (x * k + dx)) * Co;
                    const double* wk = wgt + (static_cast<std::size_t>(dy) * k + dx) * Co * Cz;
                    for (int co = 0; co < Co; ++co) {
                        const double* wr = wk + static_cast<std::size_t>(co) * Cz;
                        double s = 0.0;
                        for (int cz = 0; cz < Cz; ++cz) s += zin[cz] * wr[cz];
                        o[co] = s;
                    }
                }
            }
        }
    }
}

void avgpool2(int H, int W, int C, const double* x, double* out) {
    int Ho = H / 2, Wo = W / 2;
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            double* o = out + (static_cast<std::size_t>(oy) * Wo + ox) * C;
            const double* r0 = x + (static_cast<std::size_t>(2 * oy) * W + 2 * ox) * C;
            const double* r1 = x + (static_cast<std::size_t>(2 * oy + 1) * W + 2 * ox) * C;
            for (int c = 0; c < C; ++c) o[c] = 0.25 * (r0[c] + r0[C + c] + r1[c] + r1[C + c]);
        }
    }
}

void avgpool2_bwd(int H, int W, int C, const double* gout, double* gx_acc) {
    int Ho = H / 2, Wo = W / 2;
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            const double* go = gout + (static_cast<std::size_t>(oy) * Wo + ox) * C;
            double* r0 = gx_acc + (static_cast<std::size_t>(2 * oy) * W + 2 * ox) * C;
            double* r1 = gx_acc + (static_cast<std::size_t>(2 * oy + 1) * W + 2 * ox) * C;
            for (int c = 0; c < C; ++c) {
                double g = 0.25 * go[c];
                r0[c] += g;
                r0[C + c] += g;
                r1[c] += g;
                r1[C + c] += g;
            }
        }
    }
}

void upsample2(int H, int W, int C, const double* x, double* out) {
    int Wo = 2 * W;
    for (int y = 0; y < H; ++y) {
        for (int x2 = 0; x2 < W; ++x2) {
            const double* in = x + (static_cast<std::size_t>(y) * W + x2) * C;
            double* o0 = out + (static_cast<std::size_t>(2 * y) * Wo + 2 * x2) * C;
            double* o1 = out + (static_cast<std::size_t>(2 * y + 1) * Wo + 2 * x2) * C;
            for (int c = 0; c < C; ++c) {
                o0[c] = in[c];
                o0[C + c] = in[c];
                o1[c] = in[c];
                o1[C + c] = in[c];
            }
        }
    }
}

void upsample2_bwd(int H, int W, int C, const double* gout, double* gx_acc) {
    int Wo = 2 * W;
    for (int y = 0; y < H; ++y) {
        for (int x2 = 0; x2 < W; ++x2) {
            double* g = gx_acc + (static_cast<std::size_t>(y) * W + x2) * C;
            const double* o0 = gout + (static_cast<std::size_t>(2 * y) * Wo + 2 * x2) * C;
            const double* o1 = gout + (static_cast<std::size_t>(2 * y + 1) * Wo + 2 * x2) * C;
            for (int c = 0; c < C; ++c) g[c] += o0[c] + o0[C + c] + o1[c] + o1[C + c];
        }
    }
}

void group_norm(int H, int W, int C, int groups, double eps, const double* x,
                const double* gamma, const double* beta, double* out,
                double* save_mean, double* save_rstd) {
    int Cg = C / groups;
    std::size_t HW = static_cast<std::size_t>(H) * W;
    double inv_n = 1.0 / (static_cast<double>(HW) * Cg);
    for (int g = 0; g < groups; ++g) {
        int c0 = g * Cg;
        double s = 0.0;
        for (std::size_t p = 0; p < HW; ++p) {
            const double* row = x + p * C + c0;
            for (int c = 0; c < Cg; ++c) s += row[c];
        }
        double mean = s * inv_n;
        double v = 0.0;
        for (std::size_t p = 0; p < HW; ++p) {
            const double* row = x + p * C + c0;
            for (int c = 0; c < Cg; ++c) {
                double d = row[c] - mean;
                v += d * d;
            }
        }
        double rstd = 1.0 / std::sqrt(v * inv_n + eps);
        save_mean[g] = mean;
        save_rstd[g] = rstd;
        for (std::size_t p = 0; p < HW; ++p) {
            const double* row = x + p * C + c0;
            double* orow = out + p * C + c0;
            for (int c = 0; c < Cg; ++c)
                orow[c] = gamma[c0 + c] * (row[c] - mean) * rstd + beta[c0 + c];
        }
    }
}

void group_norm_bwd(int H, int W, int C, int groups, const double* x,
                    const double* gamma, const double* gout, const double* save_mean,
                    const double* save_rstd, double* gx_acc, double* ggamma_acc,
                    double* gbeta_acc) {
    int Cg = C / groups;
    std::size_t HW = static_cast<std::size_t>(H) * W;
    double inv_n = 1.0 / (static_cast<double>(HW) * Cg);
    for (int g = 0; g < groups; ++g) {
        int c0 = g * Cg;
        double mean = save_mean[g];
        double rstd = save_rstd[g];
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t p = 0; p < HW; ++p) {
            const double* xrow = x + p * C + c0;
            const double* grow = gout + p * C + c0;
            for (int c = 0; c < Cg; ++c) {
                double a = gamma[c0 + c] * grow[c];
                s1 += a;
                s2 += a * (xrow[c] - mean) * rstd;
            }
        }
        double m1 = s1 * inv_n, m2 = s2 * inv_n;
        for (std::size_t p = 0; p < HW; ++p) {
            const double* xrow = x + p * C + c0;
            const double* grow = gout + p * C + c0;
            double* gx = gx_acc + p * C + c0;
            for (int c = 0; c < Cg; ++c) {
                double a = gamma[c0 + c] * grow[c];
                double xh = (xrow[c] - mean) * rstd;
                gx[c] += rstd * (a - m1 - xh * m2);
            }
        }
    }
    if (ggamma_acc || gbeta_acc) {
        for (int c = 0; c < C; ++c) {
            int g = c / Cg;
            double mean = save_mean[g];
            double rstd = save_rstd[g];
            double sg = 0.0, sb = 0.0;
            for (std::size_t p = 0; p < HW; ++p) {
                double go = gout[p * C + c];
                sg += go * (x[p * C + c] - mean) * rstd;
                sb += go;
            }
            if (ggamma_acc) ggamma_acc[c] += sg;
            if (gbeta_acc) gbeta_acc[c] += sb;
        }
    }
}

}  // namespace ldms::kern::serial
