#include "vsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "vsr/kernels.hpp"

namespace vsr {
namespace {

using Data = std::shared_ptr<TensorData>;

void require(bool cond, const char* what, const std::string& detail) {
    if (!cond) throw ShapeError(std::string(what) + ": " + detail);
}

void check_nchw(const Tensor& x, const char* what) {
    require(x.rank() == 4, what, "expected [N,C,H,W], got " + shape_str(x.shape()));
}

Tensor make_output(const Shape& shape) { return Tensor::zeros(shape); }

// Shared recording helper for single-output ops.
template <typename Fn>
void record1(Tape* tape, std::initializer_list<const Tensor*> inputs, Tensor& out, Fn&& fn) {
    if (!grad_needed(tape, inputs)) return;
    out.set_requires_grad(true);
    tape->record({out.ptr()}, std::forward<Fn>(fn));
}

// ---- im2col machinery ----------------------------------------------------

struct ConvDims {
    int C, H, W, k, s, p, Ho, Wo;
    std::size_t patch() const { return static_cast<std::size_t>(C) * k * k; }
    std::size_t cols() const { return static_cast<std::size_t>(Ho) * Wo; }
};

ConvDims conv_dims(int C, int H, int W, int k, int s, int p, const char* what) {
    require(k >= 1 && s >= 1 && p >= 0, what, "need k >= 1, stride >= 1, pad >= 0");
    require(H + 2 * p >= k && W + 2 * p >= k, what,
            "kernel larger than padded input (" + std::to_string(H) + "x" + std::to_string(W) +
                ", k=" + std::to_string(k) + ", pad=" + std::to_string(p) + ")");
    ConvDims d;
    d.C = C;
    d.H = H;
    d.W = W;
    d.k = k;
    d.s = s;
    d.p = p;
    d.Ho = (H + 2 * p - k) / s + 1;
    d.Wo = (W + 2 * p - k) / s + 1;
    return d;
}

// col is [C*k*k, Ho*Wo]; zero-padding materializes as zero entries.
void im2col(const double* x, const ConvDims& d, double* col) {
    const std::size_t P = d.cols();
    for (int c = 0; c < d.C; ++c) {
        const double* plane = x + static_cast<std::size_t>(c) * d.H * d.W;
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj) {
                double* row = col + (static_cast<std::size_t>(c) * d.k * d.k + ki * d.k + kj) * P;
                std::size_t idx = 0;
                for (int ho = 0; ho < d.Ho; ++ho) {
                    const int i = ho * d.s - d.p + ki;
                    if (i < 0 || i >= d.H) {
                        for (int wo = 0; wo < d.Wo; ++wo) row[idx++] = 0.0;
                        continue;
                    }
                    for (int wo = 0; wo < d.Wo; ++wo) {
                        const int j = wo * d.s - d.p + kj;
                        row[idx++] = (j < 0 || j >= d.W) ? 0.0 : plane[i * d.W + j];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add col back into the image.
void col2im_accum(const double* col, const ConvDims& d, double* x) {
    const std::size_t P = d.cols();
    for (int c = 0; c < d.C; ++c) {
        double* plane = x + static_cast<std::size_t>(c) * d.H * d.W;
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj) {
                const double* row =
                    col + (static_cast<std::size_t>(c) * d.k * d.k + ki * d.k + kj) * P;
                std::size_t idx = 0;
                for (int ho = 0; ho < d.Ho; ++ho) {
                    const int i = ho * d.s - d.p + ki;
                    if (i < 0 || i >= d.H) {
                        idx += static_cast<std::size_t>(d.Wo);
                        continue;
                    }
                    for (int wo = 0; wo < d.Wo; ++wo, ++idx) {
                        const int j = wo * d.s - d.p + kj;
                        if (j >= 0 && j < d.W) plane[i * d.W + j] += row[idx];
                    }
                }
            }
        }
    }
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols, double* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// out[F, P] for one sample; fma chains start from the bias value.
void conv_sample_forward(const double* x, const double* w, const double* bias, int F,
                         const ConvDims& d, double* col_scratch, double* out) {
    im2col(x, d, col_scratch);
    const std::size_t P = d.cols();
    for (int f = 0; f < F; ++f) {
        const double bv = bias ? bias[f] : 0.0;
        double* row = out + static_cast<std::size_t>(f) * P;
        for (std::size_t j = 0; j < P; ++j) row[j] = bv;
    }
    kernels().gemm(static_cast<std::size_t>(F), d.patch(), P, w, col_scratch, out);
}

// Accumulates the conv2d input-gradient for one sample into `x_accum`
// ([C,H,W]); `grid` is the [F, Ho*Wo] tensor on the output side. Also the
// forward path of conv_transpose2d, which is what makes the adjoint identity
// exact.
void conv_sample_input_grad(const double* grid, const double* w_t /*[C*k*k, F]*/, int F,
                            const ConvDims& d, double* col_scratch, double* x_accum) {
    const std::size_t P = d.cols();
    std::fill(col_scratch, col_scratch + d.patch() * P, 0.0);
    kernels().gemm(d.patch(), static_cast<std::size_t>(F), P, w_t, grid, col_scratch);
    col2im_accum(col_scratch, d, x_accum);
}

// gw[F, C*k*k] += grid[F, P] * im2col(image)^T for one sample.
void conv_sample_weight_grad(const double* image, const double* grid, int F, const ConvDims& d,
                             double* col_scratch, double* col_t_scratch, double* gw) {
    const std::size_t P = d.cols();
    im2col(image, d, col_scratch);
    transpose_into(col_scratch, d.patch(), P, col_t_scratch);
    kernels().gemm(static_cast<std::size_t>(F), P, d.patch(), grid, col_t_scratch, gw);
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_output(a.shape());
    kernels().add(out.data(), a.data(), b.data(), a.numel());
    record1(tape, {&a, &b}, out, [ap = a.ptr(), bp = b.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (!g) return;
        const std::size_t n = op->data.size();
        if (ap->requires_grad) kernels().accumulate(grad_accum(ap), g, n);
        if (bp->requires_grad) kernels().accumulate(grad_accum(bp), g, n);
    });
    return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_output(a.shape());
    kernels().sub(out.data(), a.data(), b.data(), a.numel());
    record1(tape, {&a, &b}, out, [ap = a.ptr(), bp = b.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (!g) return;
        const std::size_t n = op->data.size();
        if (ap->requires_grad) kernels().accumulate(grad_accum(ap), g, n);
        if (bp->requires_grad) kernels().axpy(grad_accum(bp), -1.0, g, n);
    });
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_output(a.shape());
    kernels().mul(out.data(), a.data(), b.data(), a.numel());
    record1(tape, {&a, &b}, out, [ap = a.ptr(), bp = b.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (!g) return;
        const std::size_t n = op->data.size();
        std::vector<double> tmp(n);
        if (ap->requires_grad) {
            kernels().mul(tmp.data(), g, bp->data.data(), n);
            kernels().accumulate(grad_accum(ap), tmp.data(), n);
        }
        if (bp->requires_grad) {
            kernels().mul(tmp.data(), g, ap->data.data(), n);
            kernels().accumulate(grad_accum(bp), tmp.data(), n);
        }
    });
    return out;
}

Tensor add_scalar(Tape* tape, const Tensor& x, double c) {
    Tensor out = make_output(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    for (std::size_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] + c;
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (g && xp->requires_grad) kernels().accumulate(grad_accum(xp), g, op->data.size());
    });
    return out;
}

Tensor scale(Tape* tape, const Tensor& x, double c) {
    Tensor out = make_output(x.shape());
    kernels().scale(out.data(), x.data(), c, x.numel());
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), c] {
        const double* g = grad_or_null(op);
        if (g && xp->requires_grad) kernels().axpy(grad_accum(xp), c, g, op->data.size());
    });
    return out;
}

Tensor exp(Tape* tape, const Tensor& x) {
    Tensor out = make_output(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    for (std::size_t i = 0; i < x.numel(); ++i) ov[i] = std::exp(xv[i]);
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        const std::size_t n = op->data.size();
        std::vector<double> tmp(n);
        kernels().mul(tmp.data(), g, op->data.data(), n);
        kernels().accumulate(grad_accum(xp), tmp.data(), n);
    });
    return out;
}

Tensor log(Tape* tape, const Tensor& x) {
    Tensor out = make_output(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (!(xv[i] > 0.0)) throw NumericError("log of non-positive value");
        ov[i] = std::log(xv[i]);
    }
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        const double* xv = xp->data.data();
        for (std::size_t i = 0; i < op->data.size(); ++i) gx[i] += g[i] / xv[i];
    });
    return out;
}

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky_relu slope must be in (0,1)");
    Tensor out = make_output(x.shape());
    kernels().leaky_relu(out.data(), x.data(), slope, x.numel());
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), slope] {
        const double* g = grad_or_null(op);
        if (g && xp->requires_grad)
            kernels().leaky_relu_grad(grad_accum(xp), xp->data.data(), g, slope, op->data.size());
    });
    return out;
}

// ---- reductions -----------------------------------------------------------

Tensor sum(Tape* tape, const Tensor& x) {
    Tensor out = Tensor::scalar(kernels().sum(x.data(), x.numel()));
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        const double gv = g[0];
        for (std::size_t i = 0; i < xp->data.size(); ++i) gx[i] += gv;
    });
    return out;
}

Tensor mean(Tape* tape, const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(kernels().sum(x.data(), x.numel()) * inv);
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), inv] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        const double gv = g[0] * inv;
        for (std::size_t i = 0; i < xp->data.size(); ++i) gx[i] += gv;
    });
    return out;
}

Tensor spatial_mean(Tape* tape, const Tensor& x) {
    check_nchw(x, "spatial_mean");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const double inv = 1.0 / static_cast<double>(hw);
    Tensor out = make_output({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            out.data()[n * C + c] = kernels().sum(x.data() + (n * C + c) * hw, hw) * inv;
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), N, C, hw, inv] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double gv = g[n * C + c] * inv;
                double* slice = gx + (n * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) slice[i] += gv;
            }
    });
    return out;
}

// ---- shape ----------------------------------------------------------------

Tensor reshape(Tape* tape, const Tensor& x, const Shape& shape) {
    require(shape_numel(shape) == x.numel(), "reshape",
            "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor out = Tensor::from_data(shape, x.values());
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr()] {
        const double* g = grad_or_null(op);
        if (g && xp->requires_grad) kernels().accumulate(grad_accum(xp), g, op->data.size());
    });
    return out;
}

Tensor transpose_last2(Tape* tape, const Tensor& x) {
    require(x.rank() == 3, "transpose_last2", "expected rank 3, got " + shape_str(x.shape()));
    const int N = x.dim(0), P = x.dim(1), Q = x.dim(2);
    Tensor out = make_output({N, Q, P});
    for (int n = 0; n < N; ++n)
        transpose_into(x.data() + static_cast<std::size_t>(n) * P * Q, static_cast<std::size_t>(P),
                       static_cast<std::size_t>(Q),
                       out.data() + static_cast<std::size_t>(n) * P * Q);
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), N, P, Q] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        for (int n = 0; n < N; ++n) {
            const double* gn = g + static_cast<std::size_t>(n) * P * Q;
            double* gxn = gx + static_cast<std::size_t>(n) * P * Q;
            for (int q = 0; q < Q; ++q)
                for (int p = 0; p < P; ++p) gxn[p * Q + q] += gn[q * P + p];
        }
    });
    return out;
}

Tensor slice_cols(Tape* tape, const Tensor& x, int c0, int c1) {
    require(x.rank() == 2, "slice_cols", "expected rank 2, got " + shape_str(x.shape()));
    const int N = x.dim(0), D = x.dim(1);
    require(0 <= c0 && c0 < c1 && c1 <= D, "slice_cols", "bad column range");
    const int M = c1 - c0;
    Tensor out = make_output({N, M});
    for (int n = 0; n < N; ++n)
        std::memcpy(out.data() + static_cast<std::size_t>(n) * M,
                    x.data() + static_cast<std::size_t>(n) * D + c0, sizeof(double) * M);
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), N, D, M, c0] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        for (int n = 0; n < N; ++n)
            kernels().accumulate(gx + static_cast<std::size_t>(n) * D + c0,
                                 g + static_cast<std::size_t>(n) * M,
                                 static_cast<std::size_t>(M));
    });
    return out;
}

Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
    check_nchw(a, "concat_channels");
    check_nchw(b, "concat_channels");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat_channels",
            "inputs " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " disagree");
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out = make_output({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::memcpy(out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * hw,
                    a.data() + static_cast<std::size_t>(n) * Ca * hw, sizeof(double) * Ca * hw);
        std::memcpy(out.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * hw,
                    b.data() + static_cast<std::size_t>(n) * Cb * hw, sizeof(double) * Cb * hw);
    }
    record1(tape, {&a, &b}, out, [ap = a.ptr(), bp = b.ptr(), op = out.ptr(), N, Ca, Cb, hw] {
        const double* g = grad_or_null(op);
        if (!g) return;
        for (int n = 0; n < N; ++n) {
            if (ap->requires_grad)
                kernels().accumulate(grad_accum(ap) + static_cast<std::size_t>(n) * Ca * hw,
                                     g + static_cast<std::size_t>(n) * (Ca + Cb) * hw, Ca * hw);
            if (bp->requires_grad)
                kernels().accumulate(grad_accum(bp) + static_cast<std::size_t>(n) * Cb * hw,
                                     g + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * hw,
                                     Cb * hw);
        }
    });
    return out;
}

// ---- conv -----------------------------------------------------------------

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_nchw(x, "conv2d");
    require(w.rank() == 4 && w.dim(2) == w.dim(3), "conv2d",
            "weight must be [F,C,k,k], got " + shape_str(w.shape()));
    require(w.dim(1) == x.dim(1), "conv2d",
            "input has " + std::to_string(x.dim(1)) + " channels but weight expects " +
                std::to_string(w.dim(1)));
    const int N = x.dim(0), F = w.dim(0);
    require(b.rank() == 1 && b.dim(0) == F, "conv2d", "bias must be [F]");
    const ConvDims d = conv_dims(x.dim(1), x.dim(2), x.dim(3), w.dim(2), stride, pad, "conv2d");
    const std::size_t P = d.cols();
    const std::size_t in_sz = static_cast<std::size_t>(d.C) * d.H * d.W;
    const std::size_t out_sz = static_cast<std::size_t>(F) * P;

    Tensor out = make_output({N, F, d.Ho, d.Wo});
    std::vector<double> col(d.patch() * P);
    for (int n = 0; n < N; ++n)
        conv_sample_forward(x.data() + n * in_sz, w.data(), b.data(), F, d, col.data(),
                            out.data() + n * out_sz);

    record1(tape, {&x, &w, &b}, out,
            [xp = x.ptr(), wp = w.ptr(), bp = b.ptr(), op = out.ptr(), N, F, d, in_sz, out_sz, P] {
                const double* g = grad_or_null(op);
                if (!g) return;
                std::vector<double> col(d.patch() * P);
                if (xp->requires_grad) {
                    std::vector<double> wt(d.patch() * F);
                    transpose_into(wp->data.data(), static_cast<std::size_t>(F), d.patch(),
                                   wt.data());
                    double* gx = grad_accum(xp);
                    for (int n = 0; n < N; ++n)
                        conv_sample_input_grad(g + n * out_sz, wt.data(), F, d, col.data(),
                                               gx + n * in_sz);
                }
                if (wp->requires_grad) {
                    std::vector<double> colt(d.patch() * P);
                    double* gw = grad_accum(wp);
                    for (int n = 0; n < N; ++n)
                        conv_sample_weight_grad(xp->data.data() + n * in_sz, g + n * out_sz, F, d,
                                                col.data(), colt.data(), gw);
                }
                if (bp->requires_grad) {
                    double* gb = grad_accum(bp);
                    for (int n = 0; n < N; ++n)
                        for (int f = 0; f < F; ++f)
                            gb[f] += kernels().sum(g + n * out_sz + f * P, P);
                }
            });
    return out;
}

Tensor conv_transpose2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int pad) {
    check_nchw(x, "conv_transpose2d");
    require(w.rank() == 4 && w.dim(2) == w.dim(3), "conv_transpose2d",
            "weight must be [F,C,k,k], got " + shape_str(w.shape()));
    require(w.dim(0) == x.dim(1), "conv_transpose2d",
            "input has " + std::to_string(x.dim(1)) + " channels but weight expects " +
                std::to_string(w.dim(0)));
    const int N = x.dim(0), F = w.dim(0), C = w.dim(1), k = w.dim(2);
    require(b.rank() == 1 && b.dim(0) == C, "conv_transpose2d", "bias must be [C]");
    const int H = x.dim(2), W = x.dim(3);
    const int Ho = (H - 1) * stride - 2 * pad + k;
    const int Wo = (W - 1) * stride - 2 * pad + k;
    require(Ho >= 1 && Wo >= 1, "conv_transpose2d", "output size would be empty");
    // The conv2d whose input-gradient this forward computes.
    const ConvDims d = conv_dims(C, Ho, Wo, k, stride, pad, "conv_transpose2d");
    require(d.Ho == H && d.Wo == W, "conv_transpose2d", "inconsistent geometry");

    const std::size_t P = d.cols();
    const std::size_t in_sz = static_cast<std::size_t>(F) * P;
    const std::size_t out_sz = static_cast<std::size_t>(C) * Ho * Wo;
    Tensor out = make_output({N, C, Ho, Wo});
    {
        std::vector<double> wt(d.patch() * F);
        transpose_into(w.data(), static_cast<std::size_t>(F), d.patch(), wt.data());
        std::vector<double> col(d.patch() * P);
        for (int n = 0; n < N; ++n) {
            double* on = out.data() + n * out_sz;
            for (int c = 0; c < C; ++c) {
                const double bv = b.data()[c];
                double* plane = on + static_cast<std::size_t>(c) * Ho * Wo;
                for (int i = 0; i < Ho * Wo; ++i) plane[i] = bv;
            }
            conv_sample_input_grad(x.data() + n * in_sz, wt.data(), F, d, col.data(), on);
        }
    }

    record1(tape, {&x, &w, &b}, out,
            [xp = x.ptr(), wp = w.ptr(), bp = b.ptr(), op = out.ptr(), N, F, C, d, in_sz, out_sz,
             P, Ho, Wo] {
                const double* g = grad_or_null(op);
                if (!g) return;
                std::vector<double> col(d.patch() * P);
                if (xp->requires_grad) {
                    // d(out)/d(x) is the plain conv2d of the output gradient.
                    double* gx = grad_accum(xp);
                    for (int n = 0; n < N; ++n) {
                        im2col(g + n * out_sz, d, col.data());
                        kernels().gemm(static_cast<std::size_t>(F), d.patch(), P, wp->data.data(),
                                       col.data(), gx + n * in_sz);
                    }
                }
                if (wp->requires_grad) {
                    std::vector<double> colt(d.patch() * P);
                    double* gw = grad_accum(wp);
                    for (int n = 0; n < N; ++n)
                        conv_sample_weight_grad(g + n * out_sz, xp->data.data() + n * in_sz, F, d,
                                                col.data(), colt.data(), gw);
                }
                if (bp->requires_grad) {
                    double* gb = grad_accum(bp);
                    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
                    for (int n = 0; n < N; ++n)
                        for (int c = 0; c < C; ++c)
                            gb[c] += kernels().sum(g + n * out_sz + c * plane, plane);
                }
            });
    return out;
}

Tensor fully_connected(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "fully_connected",
            "expected x[N,D], w[D,M], b[M]");
    const int N = x.dim(0), D = x.dim(1), M = w.dim(1);
    require(w.dim(0) == D, "fully_connected",
            "inner dims disagree: x " + shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
    require(b.dim(0) == M, "fully_connected", "bias must be [M]");
    Tensor out = make_output({N, M});
    for (int n = 0; n < N; ++n)
        std::memcpy(out.data() + static_cast<std::size_t>(n) * M, b.data(), sizeof(double) * M);
    kernels().gemm(static_cast<std::size_t>(N), static_cast<std::size_t>(D),
                   static_cast<std::size_t>(M), x.data(), w.data(), out.data());
    record1(tape, {&x, &w, &b}, out,
            [xp = x.ptr(), wp = w.ptr(), bp = b.ptr(), op = out.ptr(), N, D, M] {
                const double* g = grad_or_null(op);
                if (!g) return;
                if (xp->requires_grad) {
                    std::vector<double> wt(static_cast<std::size_t>(M) * D);
                    transpose_into(wp->data.data(), static_cast<std::size_t>(D),
                                   static_cast<std::size_t>(M), wt.data());
                    kernels().gemm(static_cast<std::size_t>(N), static_cast<std::size_t>(M),
                                   static_cast<std::size_t>(D), g, wt.data(), grad_accum(xp));
                }
                if (wp->requires_grad) {
                    std::vector<double> xt(static_cast<std::size_t>(D) * N);
                    transpose_into(xp->data.data(), static_cast<std::size_t>(N),
                                   static_cast<std::size_t>(D), xt.data());
                    kernels().gemm(static_cast<std::size_t>(D), static_cast<std::size_t>(N),
                                   static_cast<std::size_t>(M), xt.data(), g, grad_accum(wp));
                }
                if (bp->requires_grad) {
                    double* gb = grad_accum(bp);
                    for (int n = 0; n < N; ++n)
                        kernels().accumulate(gb, g + static_cast<std::size_t>(n) * M,
                                             static_cast<std::size_t>(M));
                }
            });
    return out;
}

// ---- softmax ---------------------------------------------------------------

Tensor softmax(Tape* tape, const Tensor& x, int axis) {
    require(axis >= 0 && axis < x.rank(), "softmax", "axis out of range");
    const int L = x.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
    for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.dim(i));

    Tensor out = make_output(x.shape());
    const double* xv = x.data();
    double* ov = out.data();
    std::vector<double> slice(static_cast<std::size_t>(L));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * L * inner + in;
            double m = xv[base];
            for (int l = 1; l < L; ++l) m = std::max(m, xv[base + l * inner]);
            double s = 0.0;
            for (int l = 0; l < L; ++l) {
                slice[l] = std::exp(xv[base + l * inner] - m);
                s += slice[l];
            }
            for (int l = 0; l < L; ++l) ov[base + l * inner] = slice[l] / s;
        }
    }
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), L, outer, inner] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        const double* y = op->data.data();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * L * inner + in;
                double dotgy = 0.0;
                for (int l = 0; l < L; ++l) dotgy += g[base + l * inner] * y[base + l * inner];
                for (int l = 0; l < L; ++l) {
                    const std::size_t i = base + l * inner;
                    gx[i] += y[i] * (g[i] - dotgy);
                }
            }
    });
    return out;
}

// ---- pixel shuffle ----------------------------------------------------------

namespace {

// dir=+1 shuffles, dir=-1 unshuffles (the inverse permutation).
Tensor pixel_shuffle_impl(Tape* tape, const Tensor& x, int r, bool unshuffle) {
    check_nchw(x, "pixel_shuffle");
    require(r >= 1, "pixel_shuffle", "factor must be >= 1");
    const int N = x.dim(0), C_in = x.dim(1), H = x.dim(2), W = x.dim(3);
    int C_out, Ho, Wo;
    if (!unshuffle) {
        require(C_in % (r * r) == 0, "pixel_shuffle",
                "channels " + std::to_string(C_in) + " not divisible by r^2");
        C_out = C_in / (r * r);
        Ho = H * r;
        Wo = W * r;
    } else {
        require(H % r == 0 && W % r == 0, "pixel_unshuffle", "spatial size not divisible by r");
        C_out = C_in * r * r;
        Ho = H / r;
        Wo = W / r;
    }
    Tensor out = make_output({N, C_out, Ho, Wo});
    const double* xv = x.data();
    double* ov = out.data();
    // shuffle: out[n, c, r*h+di, r*w+dj] = in[n, c*r*r + di*r + dj, h, w]
    const int Cs = unshuffle ? C_in : C_out;      // channel count on the small-spatial side
    const int Hs = unshuffle ? Ho : H;
    const int Ws = unshuffle ? Wo : W;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cs; ++c)
            for (int di = 0; di < r; ++di)
                for (int dj = 0; dj < r; ++dj)
                    for (int h = 0; h < Hs; ++h)
                        for (int w = 0; w < Ws; ++w) {
                            const std::size_t packed =
                                ((static_cast<std::size_t>(n) * Cs * r * r +
                                  static_cast<std::size_t>(c) * r * r + di * r + dj) *
                                     Hs +
                                 h) *
                                    Ws +
                                w;
                            const std::size_t wide =
                                ((static_cast<std::size_t>(n) * Cs + c) * (Hs * r) + h * r + di) *
                                    (Ws * r) +
                                w * r + dj;
                            if (!unshuffle)
                                ov[wide] = xv[packed];
                            else
                                ov[packed] = xv[wide];
                        }
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), N, Cs, Hs, Ws, r, unshuffle] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cs; ++c)
                for (int di = 0; di < r; ++di)
                    for (int dj = 0; dj < r; ++dj)
                        for (int h = 0; h < Hs; ++h)
                            for (int w = 0; w < Ws; ++w) {
                                const std::size_t packed =
                                    ((static_cast<std::size_t>(n) * Cs * r * r +
                                      static_cast<std::size_t>(c) * r * r + di * r + dj) *
                                         Hs +
                                     h) *
                                        Ws +
                                    w;
                                const std::size_t wide =
                                    ((static_cast<std::size_t>(n) * Cs + c) * (Hs * r) + h * r +
                                     di) *
                                        (Ws * r) +
                                    w * r + dj;
                                if (!unshuffle)
                                    gx[packed] += g[wide];
                                else
                                    gx[wide] += g[packed];
                            }
    });
    return out;
}

}  // namespace

Tensor pixel_shuffle(Tape* tape, const Tensor& x, int r) {
    return pixel_shuffle_impl(tape, x, r, false);
}

Tensor pixel_unshuffle(Tape* tape, const Tensor& x, int r) {
    return pixel_shuffle_impl(tape, x, r, true);
}

// ---- pooling ----------------------------------------------------------------

Tensor avg_pool2d(Tape* tape, const Tensor& x, int k) {
    check_nchw(x, "avg_pool2d");
    require(k >= 1, "avg_pool2d", "kernel must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(H % k == 0 && W % k == 0, "avg_pool2d",
            "spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                " not divisible by kernel " + std::to_string(k));
    const int Ho = H / k, Wo = W / k;
    const double inv = 1.0 / static_cast<double>(k * k);
    Tensor out = make_output({N, C, Ho, Wo});
    const double* xv = x.data();
    double* ov = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const double* plane = xv + static_cast<std::size_t>(nc) * H * W;
        double* oplane = ov + static_cast<std::size_t>(nc) * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo) {
                double s = 0.0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) s += plane[(ho * k + i) * W + wo * k + j];
                oplane[ho * Wo + wo] = s * inv;
            }
    }
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), N, C, H, W, Ho, Wo, k, inv] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        for (int nc = 0; nc < N * C; ++nc) {
            double* plane = gx + static_cast<std::size_t>(nc) * H * W;
            const double* gplane = g + static_cast<std::size_t>(nc) * Ho * Wo;
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    const double gv = gplane[ho * Wo + wo] * inv;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) plane[(ho * k + i) * W + wo * k + j] += gv;
                }
        }
    });
    return out;
}

// ---- batched matmul ----------------------------------------------------------

Tensor bmm(Tape* tape, const Tensor& a, const Tensor& b) {
    require(a.rank() == 3 && b.rank() == 3, "bmm", "expected [N,P,Q] x [N,Q,R]");
    const int N = a.dim(0), P = a.dim(1), Q = a.dim(2), R = b.dim(2);
    require(b.dim(0) == N && b.dim(1) == Q, "bmm",
            "shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " disagree");
    Tensor out = make_output({N, P, R});
    for (int n = 0; n < N; ++n)
        kernels().gemm(static_cast<std::size_t>(P), static_cast<std::size_t>(Q),
                       static_cast<std::size_t>(R),
                       a.data() + static_cast<std::size_t>(n) * P * Q,
                       b.data() + static_cast<std::size_t>(n) * Q * R,
                       out.data() + static_cast<std::size_t>(n) * P * R);
    record1(tape, {&a, &b}, out, [ap = a.ptr(), bp = b.ptr(), op = out.ptr(), N, P, Q, R] {
        const double* g = grad_or_null(op);
        if (!g) return;
        if (ap->requires_grad) {
            std::vector<double> bt(static_cast<std::size_t>(R) * Q);
            double* ga = grad_accum(ap);
            for (int n = 0; n < N; ++n) {
                transpose_into(bp->data.data() + static_cast<std::size_t>(n) * Q * R,
                               static_cast<std::size_t>(Q), static_cast<std::size_t>(R),
                               bt.data());
                kernels().gemm(static_cast<std::size_t>(P), static_cast<std::size_t>(R),
                               static_cast<std::size_t>(Q),
                               g + static_cast<std::size_t>(n) * P * R, bt.data(),
                               ga + static_cast<std::size_t>(n) * P * Q);
            }
        }
        if (bp->requires_grad) {
            std::vector<double> at(static_cast<std::size_t>(Q) * P);
            double* gb = grad_accum(bp);
            for (int n = 0; n < N; ++n) {
                transpose_into(ap->data.data() + static_cast<std::size_t>(n) * P * Q,
                               static_cast<std::size_t>(P), static_cast<std::size_t>(Q),
                               at.data());
                kernels().gemm(static_cast<std::size_t>(Q), static_cast<std::size_t>(P),
                               static_cast<std::size_t>(R), at.data(),
                               g + static_cast<std::size_t>(n) * P * R,
                               gb + static_cast<std::size_t>(n) * Q * R);
            }
        }
    });
    return out;
}

Tensor l1_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
    check_same_shape(pred, target, "l1_loss");
    const std::size_t n = pred.numel();
    const double inv = 1.0 / static_cast<double>(n);
    std::vector<double> diff(n);
    kernels().sub(diff.data(), pred.data(), target.data(), n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(diff[i]);
    Tensor out = Tensor::scalar(s * inv);
    record1(tape, {&pred, &target}, out, [pp = pred.ptr(), tp = target.ptr(), op = out.ptr(), inv] {
        const double* g = grad_or_null(op);
        if (!g) return;
        const double gv = g[0] * inv;
        const std::size_t n = pp->data.size();
        // subgradient at zero difference is taken as 0
        for (std::size_t i = 0; i < n; ++i) {
            const double d = pp->data[i] - tp->data[i];
            const double s = d > 0.0 ? gv : (d < 0.0 ? -gv : 0.0);
            if (pp->requires_grad) grad_accum(pp)[i] += s;
            if (tp->requires_grad) grad_accum(tp)[i] -= s;
        }
    });
    return out;
}

// ---- batch norm ---------------------------------------------------------------

BatchNormState make_batch_norm_state(int channels) {
    BatchNormState st;
    st.running_mean = Tensor::zeros({channels});
    st.running_var = Tensor::full({channels}, 1.0);
    return st;
}

Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum, double eps) {
    check_nchw(x, "batch_norm");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
            "batch_norm", "gamma/beta must be [C]");
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t plane = hw;
    const std::size_t sample = static_cast<std::size_t>(C) * hw;
    const std::size_t m = static_cast<std::size_t>(N) * hw;
    if (training && m < 2)
        throw ShapeError("batch_norm training mode needs N*H*W >= 2 per channel");

    std::vector<double> mu(C), inv_std(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n)
                s += kernels().sum(x.data() + n * sample + c * plane, hw);
            mu[c] = s / static_cast<double>(m);
        }
        for (int c = 0; c < C; ++c) {
            double v = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = x.data() + n * sample + c * plane;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = p[i] - mu[c];
                    v += d * d;
                }
            }
            v /= static_cast<double>(m);
            inv_std[c] = 1.0 / std::sqrt(v + eps);
            state.running_mean.data()[c] = (1.0 - momentum) * state.running_mean.data()[c] +
                                           momentum * mu[c];
            state.running_var.data()[c] =
                (1.0 - momentum) * state.running_var.data()[c] + momentum * v;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mu[c] = state.running_mean.data()[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var.data()[c] + eps);
        }
    }

    Tensor out = make_output(x.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = x.data() + n * sample + c * plane;
            double* o = out.data() + n * sample + c * plane;
            const double a = gamma.data()[c] * inv_std[c];
            const double b = beta.data()[c] - a * mu[c];
            for (std::size_t i = 0; i < hw; ++i) o[i] = std::fma(a, p[i], b);
        }

    record1(tape, {&x, &gamma, &beta}, out,
            [xp = x.ptr(), gp = gamma.ptr(), bp = beta.ptr(), op = out.ptr(), N, C, hw, sample,
             plane, m, mu, inv_std, training] {
                const double* g = grad_or_null(op);
                if (!g) return;
                const double invm = 1.0 / static_cast<double>(m);
                for (int c = 0; c < C; ++c) {
                    // per-channel sums over (N,H,W)
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const double* gc = g + n * sample + c * plane;
                        const double* xc = xp->data.data() + n * sample + c * plane;
                        for (std::size_t i = 0; i < hw; ++i) {
                            sum_g += gc[i];
                            sum_gx += gc[i] * (xc[i] - mu[c]) * inv_std[c];
                        }
                    }
                    if (gp->requires_grad) grad_accum(gp)[c] += sum_gx;
                    if (bp->requires_grad) grad_accum(bp)[c] += sum_g;
                    if (xp->requires_grad) {
                        double* gx = grad_accum(xp);
                        const double a = gp->data[c] * inv_std[c];
                        for (int n = 0; n < N; ++n) {
                            const double* gc = g + n * sample + c * plane;
                            const double* xc = xp->data.data() + n * sample + c * plane;
                            double* gxc = gx + n * sample + c * plane;
                            if (training) {
                                for (std::size_t i = 0; i < hw; ++i) {
                                    const double xhat = (xc[i] - mu[c]) * inv_std[c];
                                    gxc[i] += a * (gc[i] - sum_g * invm - xhat * sum_gx * invm);
                                }
                            } else {
                                for (std::size_t i = 0; i < hw; ++i) gxc[i] += a * gc[i];
                            }
                        }
                    }
                }
            });
    return out;
}

// ---- instance statistics -------------------------------------------------------

std::pair<Tensor, Tensor> instance_stats(Tape* tape, const Tensor& x, double eps) {
    check_nchw(x, "instance_stats");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const double inv = 1.0 / static_cast<double>(hw);
    Tensor mean_t = make_output({N, C});
    Tensor std_t = make_output({N, C});
    for (int nc = 0; nc < N * C; ++nc) {
        const double* p = x.data() + static_cast<std::size_t>(nc) * hw;
        const double mu = kernels().sum(p, hw) * inv;
        double v = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            const double d = p[i] - mu;
            v += d * d;
        }
        mean_t.data()[nc] = mu;
        std_t.data()[nc] = std::sqrt(v * inv + eps);
    }
    if (grad_needed(tape, {&x})) {
        mean_t.set_requires_grad(true);
        std_t.set_requires_grad(true);
        tape->record({mean_t.ptr(), std_t.ptr()},
                     [xp = x.ptr(), mp = mean_t.ptr(), sp = std_t.ptr(), N, C, hw, inv] {
                         if (!xp->requires_grad) return;
                         const double* gm = grad_or_null(mp);
                         const double* gs = grad_or_null(sp);
                         if (!gm && !gs) return;
                         double* gx = grad_accum(xp);
                         for (int nc = 0; nc < N * C; ++nc) {
                             const double* p = xp->data.data() + static_cast<std::size_t>(nc) * hw;
                             double* gp = gx + static_cast<std::size_t>(nc) * hw;
                             const double mu = mp->data[nc];
                             const double sd = sp->data[nc];
                             const double gmv = gm ? gm[nc] * inv : 0.0;
                             const double gsv = gs ? gs[nc] * inv / sd : 0.0;
                             for (std::size_t i = 0; i < hw; ++i)
                                 gp[i] += gmv + gsv * (p[i] - mu);
                         }
                     });
    }
    return {mean_t, std_t};
}

Tensor normalize_affine(Tape* tape, const Tensor& x, const Tensor& mean, const Tensor& stddev,
                        const Tensor& s, const Tensor& b) {
    check_nchw(x, "normalize_affine");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (const Tensor* t : {&mean, &stddev, &s, &b})
        require(t->rank() == 2 && t->dim(0) == N && t->dim(1) == C, "normalize_affine",
                "per-channel tensors must be [N,C], got " + shape_str(t->shape()));
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out = make_output(x.shape());
    for (int nc = 0; nc < N * C; ++nc) {
        const double a = s.data()[nc] / stddev.data()[nc];
        const double off = b.data()[nc] - a * mean.data()[nc];
        const double* p = x.data() + static_cast<std::size_t>(nc) * hw;
        double* o = out.data() + static_cast<std::size_t>(nc) * hw;
        for (std::size_t i = 0; i < hw; ++i) o[i] = std::fma(a, p[i], off);
    }
    record1(tape, {&x, &mean, &stddev, &s, &b}, out,
            [xp = x.ptr(), mp = mean.ptr(), sp = stddev.ptr(), scp = s.ptr(), bp = b.ptr(),
             op = out.ptr(), N, C, hw] {
                const double* g = grad_or_null(op);
                if (!g) return;
                for (int nc = 0; nc < N * C; ++nc) {
                    const double sd = sp->data[nc];
                    const double sc = scp->data[nc];
                    const double mu = mp->data[nc];
                    const double a = sc / sd;
                    const double* gc = g + static_cast<std::size_t>(nc) * hw;
                    const double* xc = xp->data.data() + static_cast<std::size_t>(nc) * hw;
                    double sum_g = 0.0, sum_gxm = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) {
                        sum_g += gc[i];
                        sum_gxm += gc[i] * (xc[i] - mu);
                    }
                    if (xp->requires_grad) {
                        double* gx = grad_accum(xp) + static_cast<std::size_t>(nc) * hw;
                        for (std::size_t i = 0; i < hw; ++i) gx[i] += a * gc[i];
                    }
                    if (mp->requires_grad) grad_accum(mp)[nc] -= a * sum_g;
                    if (sp->requires_grad) grad_accum(sp)[nc] -= sc * sum_gxm / (sd * sd);
                    if (scp->requires_grad) grad_accum(scp)[nc] += sum_gxm / sd;
                    if (bp->requires_grad) grad_accum(bp)[nc] += sum_g;
                }
            });
    return out;
}

Tensor gram_matrix(Tape* tape, const Tensor& x) {
    check_nchw(x, "gram_matrix");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const double inv = 1.0 / (static_cast<double>(C) * hw);
    Tensor out = make_output({N, C, C});
    std::vector<double> ft(hw * C);
    for (int n = 0; n < N; ++n) {
        const double* f = x.data() + static_cast<std::size_t>(n) * C * hw;
        double* gmat = out.data() + static_cast<std::size_t>(n) * C * C;
        transpose_into(f, static_cast<std::size_t>(C), hw, ft.data());
        kernels().gemm(static_cast<std::size_t>(C), hw, static_cast<std::size_t>(C), f, ft.data(),
                       gmat);
        kernels().scale(gmat, gmat, inv, static_cast<std::size_t>(C) * C);
    }
    record1(tape, {&x}, out, [xp = x.ptr(), op = out.ptr(), N, C, hw, inv] {
        const double* g = grad_or_null(op);
        if (!g || !xp->requires_grad) return;
        double* gx = grad_accum(xp);
        std::vector<double> s(static_cast<std::size_t>(C) * C);
        for (int n = 0; n < N; ++n) {
            const double* gn = g + static_cast<std::size_t>(n) * C * C;
            for (int i = 0; i < C; ++i)
                for (int j = 0; j < C; ++j)
                    s[static_cast<std::size_t>(i) * C + j] =
                        (gn[static_cast<std::size_t>(i) * C + j] +
                         gn[static_cast<std::size_t>(j) * C + i]) * inv;
            kernels().gemm(static_cast<std::size_t>(C), static_cast<std::size_t>(C), hw, s.data(),
                           xp->data.data() + static_cast<std::size_t>(n) * C * hw,
                           gx + static_cast<std::size_t>(n) * C * hw);
        }
    });
    return out;
}

Tensor scalar_residual(Tape* tape, const Tensor& lambda, const Tensor& o, const Tensor& x) {
    require(lambda.numel() == 1, "scalar_residual", "lambda must be a scalar");
    check_same_shape(o, x, "scalar_residual");
    const std::size_t n = x.numel();
    Tensor out = make_output(x.shape());
    std::memcpy(out.data(), x.data(), sizeof(double) * n);
    kernels().axpy(out.data(), lambda.item(), o.data(), n);
    record1(tape, {&lambda, &o, &x}, out,
            [lp = lambda.ptr(), opn = o.ptr(), xp = x.ptr(), op = out.ptr()] {
                const double* g = grad_or_null(op);
                if (!g) return;
                const std::size_t n = op->data.size();
                if (lp->requires_grad)
                    grad_accum(lp)[0] += kernels().dot(g, opn->data.data(), n);
                if (opn->requires_grad) kernels().axpy(grad_accum(opn), lp->data[0], g, n);
                if (xp->requires_grad) kernels().accumulate(grad_accum(xp), g, n);
            });
    return out;
}

// ---- local attention -------------------------------------------------------

namespace {

// Shared forward core: fills `omega` ([N, H*W, window^2] softmax weights) and,
// when `out` is non-null, the aggregated features.
void local_attention_core(const double* x, const double* q, const double* k, int N, int C, int H,
                          int W, int window, double* out, double* omega) {
    const int r = window / 2;
    const int wsq = window * window;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t sample = static_cast<std::size_t>(C) * hw;
    std::vector<double> scores(static_cast<std::size_t>(wsq));
    for (int n = 0; n < N; ++n) {
        const double* qn = q + n * sample;
        const double* kn = k + n * sample;
        const double* xn = x + n * sample;
        double* on = out ? out + n * sample : nullptr;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const std::size_t t = static_cast<std::size_t>(i) * W + j;
                // score_w = -sum_c (q_c(target) - k_c(src))^2, k = 0 outside
                for (int di = -r; di <= r; ++di)
                    for (int dj = -r; dj <= r; ++dj) {
                        const int si = i + di, sj = j + dj;
                        const bool inb = si >= 0 && si < H && sj >= 0 && sj < W;
                        double sneg = 0.0;
                        for (int c = 0; c < C; ++c) {
                            const double qc = qn[c * hw + t];
                            const double kc = inb ? kn[c * hw + si * W + sj] : 0.0;
                            const double d = qc - kc;
                            sneg += d * d;
                        }
                        scores[(di + r) * window + (dj + r)] = -sneg;
                    }
                double m = scores[0];
                for (int wv = 1; wv < wsq; ++wv) m = std::max(m, scores[wv]);
                double z = 0.0;
                double* om = omega + (static_cast<std::size_t>(n) * hw + t) * wsq;
                for (int wv = 0; wv < wsq; ++wv) {
                    om[wv] = std::exp(scores[wv] - m);
                    z += om[wv];
                }
                for (int wv = 0; wv < wsq; ++wv) om[wv] /= z;
                if (!on) continue;
                // aggregate raw features with the shared weights
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    int wv = 0;
                    for (int di = -r; di <= r; ++di)
                        for (int dj = -r; dj <= r; ++dj, ++wv) {
                            const int si = i + di, sj = j + dj;
                            if (si >= 0 && si < H && sj >= 0 && sj < W)
                                acc += om[wv] * xn[c * hw + si * W + sj];
                        }
                    on[c * hw + t] = acc;
                }
            }
    }
}

void check_local_attention_args(const Tensor& x, const Tensor& q, const Tensor& k, int window) {
    check_nchw(x, "local_attention");
    check_same_shape(x, q, "local_attention (q)");
    check_same_shape(x, k, "local_attention (k)");
    if (window < 3 || window % 2 == 0)
        throw ConfigError("local attention window must be odd and >= 3, got " +
                          std::to_string(window));
}

}  // namespace

Tensor local_attention_window(Tape* tape, const Tensor& x, const Tensor& q, const Tensor& k,
                              int window) {
    check_local_attention_args(x, q, k, window);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int r = window / 2;
    const int wsq = window * window;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t sample = static_cast<std::size_t>(C) * hw;

    Tensor out = make_output(x.shape());
    // Saved attention weights, [N, H*W, window^2]; shared by the backward pass.
    auto omega = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * hw * wsq);
    local_attention_core(x.data(), q.data(), k.data(), N, C, H, W, window, out.data(),
                         omega->data());

    record1(tape, {&x, &q, &k}, out,
            [xp = x.ptr(), qp = q.ptr(), kp = k.ptr(), op = out.ptr(), omega, N, C, H, W, r,
             window, wsq, hw, sample] {
                const double* g = grad_or_null(op);
                if (!g) return;
                double* gx = xp->requires_grad ? grad_accum(xp) : nullptr;
                double* gq = qp->requires_grad ? grad_accum(qp) : nullptr;
                double* gk = kp->requires_grad ? grad_accum(kp) : nullptr;
                std::vector<double> gom(static_cast<std::size_t>(wsq));
                for (int n = 0; n < N; ++n) {
                    const double* qn = qp->data.data() + n * sample;
                    const double* kn = kp->data.data() + n * sample;
                    const double* xn = xp->data.data() + n * sample;
                    const double* gn = g + n * sample;
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j) {
                            const std::size_t t = static_cast<std::size_t>(i) * W + j;
                            const double* om =
                                omega->data() + (static_cast<std::size_t>(n) * hw + t) * wsq;
                            // d out / d omega and value-path gradient
                            for (int wv = 0; wv < wsq; ++wv) gom[wv] = 0.0;
                            int wv = 0;
                            for (int di = -r; di <= r; ++di)
                                for (int dj = -r; dj <= r; ++dj, ++wv) {
                                    const int si = i + di, sj = j + dj;
                                    if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                                    for (int c = 0; c < C; ++c) {
                                        const double gc = gn[c * hw + t];
                                        gom[wv] += gc * xn[c * hw + si * W + sj];
                                        if (gx) gx[n * sample + c * hw + si * W + sj] +=
                                            om[wv] * gc;
                                    }
                                }
                            if (!gq && !gk) continue;
                            // softmax jacobian: gs_w = om_w * (gom_w - sum om*gom)
                            double dotv = 0.0;
                            for (int w2 = 0; w2 < wsq; ++w2) dotv += om[w2] * gom[w2];
                            wv = 0;
                            for (int di = -r; di <= r; ++di)
                                for (int dj = -r; dj <= r; ++dj, ++wv) {
                                    const double gs = om[wv] * (gom[wv] - dotv);
                                    if (gs == 0.0) continue;
                                    const int si = i + di, sj = j + dj;
                                    const bool inb = si >= 0 && si < H && sj >= 0 && sj < W;
                                    for (int c = 0; c < C; ++c) {
                                        const double qc = qn[c * hw + t];
                                        const double kc = inb ? kn[c * hw + si * W + sj] : 0.0;
                                        const double d2 = 2.0 * (qc - kc) * gs;
                                        if (gq) gq[n * sample + c * hw + t] -= d2;
                                        if (gk && inb)
                                            gk[n * sample + c * hw + si * W + sj] += d2;
                                    }
                                }
                        }
                }
            });
    return out;
}

Tensor local_attention_weight_map(const Tensor& x, const Tensor& q, const Tensor& k, int window) {
    check_local_attention_args(x, q, k, window);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor map = Tensor::zeros({N, H * W, window * window});
    local_attention_core(x.data(), q.data(), k.data(), N, C, H, W, window, nullptr, map.data());
    return map;
}

double max_value(const Tensor& x) {
    const double* v = x.data();
    double m = v[0];
    for (std::size_t i = 1; i < x.numel(); ++i) m = std::max(m, v[i]);
    return m;
}

}  // namespace vsr
