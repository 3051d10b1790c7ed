#include "uapforge/tensor/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace uapforge::ops {
namespace {

[[noreturn]] void shape_error(const char* op, const std::string& what) {
    throw ContractViolation(std::string(op) + ": " + what);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    shape_error(op, "incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <class T>
void require_rank(const char* op, const Var<T>& v, std::size_t rank) {
    if (v.value().rank() != rank) {
        shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(v.shape()));
    }
}

template <class T>
void require_scalar(const char* op, const Var<T>& v) {
    if (v.value().size() != 1) shape_error(op, "expected a scalar, got " + shape_str(v.shape()));
}

// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
                 std::size_t lda, const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, int(m), int(n),
                int(k), alpha, a, int(lda), b, int(ldb), beta, c, int(ldc));
}

inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, int(m), int(n),
                int(k), alpha, a, int(lda), b, int(ldb), beta, c, int(ldc));
}

// Patch geometry shared by conv2d and conv_transpose2d. The "image" side is
// channels x height x width; the "grid" side is out_h x out_w patch positions.
struct Patches {
    std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return out_h * out_w; }
};

template <class T>
void im2col(const T* img, const Patches& g, T* col) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                T* dst = col + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride + ki) - pad;
                    T* row = dst + oh * g.out_w;
                    if (ih < 0 || ih >= std::ptrdiff_t(g.height)) {
                        std::fill(row, row + g.out_w, T{0});
                        continue;
                    }
                    const T* src = img + (c * g.height + std::size_t(ih)) * g.width;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride + kj) - pad;
                        row[ow] = (iw < 0 || iw >= std::ptrdiff_t(g.width)) ? T{0} : src[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patch columns back into the image.
template <class T>
void col2im(const T* col, const Patches& g, T* img) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const T* src = col + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride + ki) - pad;
                    if (ih < 0 || ih >= std::ptrdiff_t(g.height)) continue;
                    T* dst = img + (c * g.height + std::size_t(ih)) * g.width;
                    const T* row = src + oh * g.out_w;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride + kj) - pad;
                        if (iw >= 0 && iw < std::ptrdiff_t(g.width)) dst[iw] += row[ow];
                    }
                }
            }
        }
    }
}

template <class T>
void check_bias(const char* op, const Var<T>& bias, std::size_t channels) {
    if (bias.valid() && (bias.value().rank() != 1 || bias.value().dim(0) != channels)) {
        shape_error(op, "bias " + shape_str(bias.shape()) + " does not match " + std::to_string(channels) +
                            " output channels");
    }
}

template <class T>
void add_channel_bias(BasicTensor<T>& out, const Var<T>& bias) {
    if (!bias.valid()) return;
    const std::size_t n = out.dim(0), c = out.dim(1), hw = out.size() / (n * c);
    const auto& b = bias.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            T* p = out.raw() + (i * c + j) * hw;
            for (std::size_t k = 0; k < hw; ++k) p[k] += b[j];
        }
}

template <class T>
void accumulate_channel_bias_grad(BasicTensor<T>* gb, const BasicTensor<T>& g) {
    if (!gb) return;
    const std::size_t n = g.dim(0), c = g.dim(1), hw = g.size() / (n * c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const T* p = g.raw() + (i * c + j) * hw;
            T s{0};
            for (std::size_t k = 0; k < hw; ++k) s += p[k];
            (*gb)[j] += s;
        }
}

template <class T>
std::vector<Var<T>> inputs_of(Var<T> a, Var<T> b, Var<T> c) {
    std::vector<Var<T>> v{a, b};
    if (c.valid()) v.push_back(c);
    return v;
}

template <class T>
BasicTensor<T>* sink_of(Var<T> v) {
    return v.valid() ? v.graph().grad_sink(v) : nullptr;
}

}  // namespace

template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, Conv2dOptions opt) {
    constexpr const char* op = "conv2d";
    require_rank(op, x, 4);
    require_rank(op, weight, 4);
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[1] != xs[1] || ws[2] != ws[3]) shape_error(op, xs, ws);
    if (opt.stride == 0) shape_error(op, "stride must be positive");
    const std::size_t k = ws[2];
    if (xs[2] + 2 * opt.padding < k || xs[3] + 2 * opt.padding < k) shape_error(op, xs, ws);
    check_bias(op, bias, ws[0]);

    const std::size_t n = xs[0], out_c = ws[0];
    const Patches g{xs[1], xs[2], xs[3], k, opt.stride, opt.padding,
                    (xs[2] + 2 * opt.padding - k) / opt.stride + 1, (xs[3] + 2 * opt.padding - k) / opt.stride + 1};
    BasicTensor<T> out({n, out_c, g.out_h, g.out_w});
    std::vector<T> col(g.rows() * g.cols());
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = out_c * g.cols();
    for (std::size_t i = 0; i < n; ++i) {
        im2col(x.value().raw() + i * in_stride, g, col.data());
        gemm(false, false, out_c, g.cols(), g.rows(), T{1}, weight.value().raw(), g.rows(), col.data(), g.cols(), T{0},
             out.raw() + i * out_stride, g.cols());
    }
    add_channel_bias(out, bias);

    return x.graph().record(op, std::move(out), inputs_of(x, weight, bias),
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                BasicTensor<T>* gw = sink_of(weight);
                                accumulate_channel_bias_grad(sink_of(bias), grad);
                                std::vector<T> buf(g.rows() * g.cols());
                                for (std::size_t i = 0; i < n; ++i) {
                                    const T* dout = grad.raw() + i * out_stride;
                                    if (gw) {
                                        im2col(x.value().raw() + i * in_stride, g, buf.data());
                                        gemm(false, true, out_c, g.rows(), g.cols(), T{1}, dout, g.cols(), buf.data(),
                                             g.cols(), T{1}, gw->raw(), g.rows());
                                    }
                                    if (gx) {
                                        gemm(true, false, g.rows(), g.cols(), out_c, T{1}, weight.value().raw(),
                                             g.rows(), dout, g.cols(), T{0}, buf.data(), g.cols());
                                        col2im(buf.data(), g, gx->raw() + i * in_stride);
                                    }
                                }
                            });
}

template <class T>
Var<T> conv_transpose2d(Var<T> x, Var<T> weight, Var<T> bias, Conv2dOptions opt) {
    constexpr const char* op = "conv_transpose2d";
    require_rank(op, x, 4);
    require_rank(op, weight, 4);
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[0] != xs[1] || ws[2] != ws[3]) shape_error(op, xs, ws);
    if (opt.stride == 0) shape_error(op, "stride must be positive");
    const std::size_t k = ws[2];
    if ((xs[2] - 1) * opt.stride + k <= 2 * opt.padding || (xs[3] - 1) * opt.stride + k <= 2 * opt.padding) {
        shape_error(op, xs, ws);
    }
    const std::size_t n = xs[0], in_c = xs[1], out_c = ws[1];
    check_bias(op, bias, out_c);
    const std::size_t out_h = (xs[2] - 1) * opt.stride + k - 2 * opt.padding;
    const std::size_t out_w = (xs[3] - 1) * opt.stride + k - 2 * opt.padding;
    // The output plays the image role; the input positions are the patch grid.
    const Patches g{out_c, out_h, out_w, k, opt.stride, opt.padding, xs[2], xs[3]};

    BasicTensor<T> out({n, out_c, out_h, out_w});
    std::vector<T> col(g.rows() * g.cols());
    const std::size_t in_stride = in_c * g.cols();
    const std::size_t out_stride = out_c * out_h * out_w;
    for (std::size_t i = 0; i < n; ++i) {
        gemm(true, false, g.rows(), g.cols(), in_c, T{1}, weight.value().raw(), g.rows(),
             x.value().raw() + i * in_stride, g.cols(), T{0}, col.data(), g.cols());
        col2im(col.data(), g, out.raw() + i * out_stride);
    }
    add_channel_bias(out, bias);

    return x.graph().record(op, std::move(out), inputs_of(x, weight, bias),
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                BasicTensor<T>* gw = sink_of(weight);
                                accumulate_channel_bias_grad(sink_of(bias), grad);
                                if (!gx && !gw) return;
                                std::vector<T> buf(g.rows() * g.cols());
                                for (std::size_t i = 0; i < n; ++i) {
                                    im2col(grad.raw() + i * out_stride, g, buf.data());
                                    if (gx) {
                                        gemm(false, false, in_c, g.cols(), g.rows(), T{1}, weight.value().raw(),
                                             g.rows(), buf.data(), g.cols(), T{1}, gx->raw() + i * in_stride,
                                             g.cols());
                                    }
                                    if (gw) {
                                        gemm(false, true, in_c, g.rows(), g.cols(), T{1},
                                             x.value().raw() + i * in_stride, g.cols(), buf.data(), g.cols(), T{1},
                                             gw->raw(), g.rows());
                                    }
                                }
                            });
}

template <class T>
Var<T> relu(Var<T> x) {
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return x.graph().record("relu", std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        const auto& xv = x.value();
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (xv[i] > T{0}) (*gx)[i] += grad[i];
    });
}

template <class T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
    constexpr const char* op = "linear";
    require_rank(op, x, 2);
    require_rank(op, weight, 2);
    if (x.shape()[1] != weight.shape()[1]) shape_error(op, x.shape(), weight.shape());
    const std::size_t n = x.shape()[0], in = x.shape()[1], out_f = weight.shape()[0];
    check_bias(op, bias, out_f);
    BasicTensor<T> out({n, out_f});
    gemm(false, true, n, out_f, in, T{1}, x.value().raw(), in, weight.value().raw(), in, T{0}, out.raw(), out_f);
    if (bias.valid()) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out_f; ++j) out[i * out_f + j] += bias.value()[j];
    }
    return x.graph().record(op, std::move(out), inputs_of(x, weight, bias),
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                if (BasicTensor<T>* gx = sink_of(x)) {
                                    gemm(false, false, n, in, out_f, T{1}, grad.raw(), out_f, weight.value().raw(), in,
                                         T{1}, gx->raw(), in);
                                }
                                if (BasicTensor<T>* gw = sink_of(weight)) {
                                    gemm(true, false, out_f, in, n, T{1}, grad.raw(), out_f, x.value().raw(), in, T{1},
                                         gw->raw(), in);
                                }
                                if (BasicTensor<T>* gb = sink_of(bias)) {
                                    for (std::size_t i = 0; i < n; ++i)
                                        for (std::size_t j = 0; j < out_f; ++j) (*gb)[j] += grad[i * out_f + j];
                                }
                            });
}

template <class T>
Var<T> max_pool2d(Var<T> x, std::size_t kernel, std::size_t stride) {
    constexpr const char* op = "max_pool2d";
    require_rank(op, x, 4);
    const auto& s = x.shape();
    if (kernel == 0 || stride == 0 || s[2] < kernel || s[3] < kernel) {
        shape_error(op, "kernel " + std::to_string(kernel) + " does not fit input " + shape_str(s));
    }
    const std::size_t oh = (s[2] - kernel) / stride + 1, ow = (s[3] - kernel) / stride + 1;
    BasicTensor<T> out({s[0], s[1], oh, ow});
    std::vector<std::size_t> argmax(out.size());
    const auto& xv = x.value();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < s[0] * s[1]; ++plane) {
        const std::size_t base = plane * s[2] * s[3];
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j, ++o) {
                std::size_t best = base + (i * stride) * s[3] + j * stride;
                for (std::size_t a = 0; a < kernel; ++a)
                    for (std::size_t b = 0; b < kernel; ++b) {
                        const std::size_t idx = base + (i * stride + a) * s[3] + j * stride + b;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                argmax[o] = best;
                out[o] = xv[best];
            }
    }
    return x.graph().record(op, std::move(out), {x},
                            [=, argmax = std::move(argmax)](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                for (std::size_t i = 0; i < argmax.size(); ++i) (*gx)[argmax[i]] += grad[i];
                            });
}

template <class T>
Var<T> global_avg_pool(Var<T> x) {
    constexpr const char* op = "global_avg_pool";
    require_rank(op, x, 4);
    const auto& s = x.shape();
    const std::size_t planes = s[0] * s[1], hw = s[2] * s[3];
    BasicTensor<T> out({s[0], s[1]});
    for (std::size_t p = 0; p < planes; ++p) {
        T acc{0};
        for (std::size_t k = 0; k < hw; ++k) acc += x.value()[p * hw + k];
        out[p] = acc / T(hw);
    }
    return x.graph().record(op, std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        for (std::size_t p = 0; p < planes; ++p) {
            const T g = grad[p] / T(hw);
            for (std::size_t k = 0; k < hw; ++k) (*gx)[p * hw + k] += g;
        }
    });
}

template <class T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>* stats, BatchNormOptions opt) {
    constexpr const char* op = "batch_norm";
    require_rank(op, x, 4);
    const auto& s = x.shape();
    const std::size_t n = s[0], c = s[1], hw = s[2] * s[3], count = n * hw;
    if (gamma.value().size() != c || beta.value().size() != c) shape_error(op, s, gamma.shape());
    if (!opt.training && (!stats || stats->mean.size() != c || stats->var.size() != c)) {
        shape_error(op, "inference mode needs running statistics for " + std::to_string(c) + " channels");
    }
    std::vector<T> mean(c), inv_std(c);
    const auto& xv = x.value();
    if (opt.training) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            T acc{0};
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < hw; ++k) acc += xv[(i * c + ch) * hw + k];
            const T mu = acc / T(count);
            T var{0};
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < hw; ++k) {
                    const T d = xv[(i * c + ch) * hw + k] - mu;
                    var += d * d;
                }
            var /= T(count);
            mean[ch] = mu;
            inv_std[ch] = T{1} / std::sqrt(var + T(opt.eps));
            if (stats) {
                if (stats->mean.size() != c) {
                    stats->mean = BasicTensor<T>({c});
                    stats->var = BasicTensor<T>({c}, T{1});
                }
                const T m = T(opt.momentum);
                const T unbiased = count > 1 ? var * T(count) / T(count - 1) : var;
                stats->mean[ch] = (T{1} - m) * stats->mean[ch] + m * mu;
                stats->var[ch] = (T{1} - m) * stats->var[ch] + m * unbiased;
            }
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = stats->mean[ch];
            inv_std[ch] = T{1} / std::sqrt(stats->var[ch] + T(opt.eps));
        }
    }
    BasicTensor<T> xhat(s);
    BasicTensor<T> out(s);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t k = 0; k < hw; ++k) {
                const std::size_t idx = (i * c + ch) * hw + k;
                xhat[idx] = (xv[idx] - mean[ch]) * inv_std[ch];
                out[idx] = gamma.value()[ch] * xhat[idx] + beta.value()[ch];
            }
    const bool training = opt.training;
    return x.graph().record(
        op, std::move(out), {x, gamma, beta},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>&, const BasicTensor<T>& grad) {
            BasicTensor<T>* gx = sink_of(x);
            BasicTensor<T>* gg = sink_of(gamma);
            BasicTensor<T>* gb = sink_of(beta);
            for (std::size_t ch = 0; ch < c; ++ch) {
                T sum_g{0}, sum_gx{0};
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < hw; ++k) {
                        const std::size_t idx = (i * c + ch) * hw + k;
                        sum_g += grad[idx];
                        sum_gx += grad[idx] * xhat[idx];
                    }
                if (gg) (*gg)[ch] += sum_gx;
                if (gb) (*gb)[ch] += sum_g;
                if (!gx) continue;
                const T scale_g = gamma.value()[ch] * inv_std[ch];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < hw; ++k) {
                        const std::size_t idx = (i * c + ch) * hw + k;
                        if (training) {
                            (*gx)[idx] += scale_g * (grad[idx] - sum_g / T(count) - xhat[idx] * sum_gx / T(count));
                        } else {
                            (*gx)[idx] += scale_g * grad[idx];
                        }
                    }
            }
        });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    constexpr const char* op = "add";
    const auto& as = a.shape();
    const auto& bs = b.shape();
    const bool broadcast = as != bs;
    if (broadcast && !(bs.size() == as.size() && bs[0] == 1 && std::equal(as.begin() + 1, as.end(), bs.begin() + 1))) {
        shape_error(op, as, bs);
    }
    BasicTensor<T> out = a.value();
    const std::size_t inner = b.value().size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % inner];
    return a.graph().record(op, std::move(out), {a, b}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        if (BasicTensor<T>* ga = sink_of(a))
            for (std::size_t i = 0; i < grad.size(); ++i) (*ga)[i] += grad[i];
        if (BasicTensor<T>* gb = sink_of(b))
            for (std::size_t i = 0; i < grad.size(); ++i) (*gb)[i % inner] += grad[i];
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
    BasicTensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return a.graph().record("mul", std::move(out), {a, b}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        if (BasicTensor<T>* ga = sink_of(a))
            for (std::size_t i = 0; i < grad.size(); ++i) (*ga)[i] += grad[i] * b.value()[i];
        if (BasicTensor<T>* gb = sink_of(b))
            for (std::size_t i = 0; i < grad.size(); ++i) (*gb)[i] += grad[i] * a.value()[i];
    });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) v *= factor;
    return x.graph().record("scale", std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i] * factor;
    });
}

template <class T>
Var<T> scale_by(Var<T> x, Var<T> s) {
    require_scalar("scale_by", s);
    const T factor = s.value()[0];
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) v *= factor;
    return x.graph().record("scale_by", std::move(out), {x, s}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        if (BasicTensor<T>* gx = sink_of(x))
            for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i] * factor;
        if (BasicTensor<T>* gs = sink_of(s)) {
            T acc{0};
            for (std::size_t i = 0; i < grad.size(); ++i) acc += grad[i] * x.value()[i];
            (*gs)[0] += acc;
        }
    });
}

template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
    if (!(lo <= hi)) shape_error("clamp", "empty interval");
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) v = std::clamp(v, lo, hi);
    return x.graph().record("clamp", std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        const auto& xv = x.value();
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (xv[i] > lo && xv[i] < hi) (*gx)[i] += grad[i];
    });
}

template <class T>
Var<T> softmax(Var<T> x) {
    constexpr const char* op = "softmax";
    require_rank(op, x, 2);
    const std::size_t n = x.shape()[0], m = x.shape()[1];
    BasicTensor<T> out(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.value().raw() + i * m;
        T* dst = out.raw() + i * m;
        const T peak = *std::max_element(row, row + m);
        T total{0};
        for (std::size_t j = 0; j < m; ++j) total += dst[j] = std::exp(row[j] - peak);
        for (std::size_t j = 0; j < m; ++j) dst[j] /= total;
    }
    BasicTensor<T> probs = out;
    return x.graph().record(op, std::move(out), {x},
                            [=, probs = std::move(probs)](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                for (std::size_t i = 0; i < n; ++i) {
                                    T dot{0};
                                    for (std::size_t j = 0; j < m; ++j) dot += grad[i * m + j] * probs[i * m + j];
                                    for (std::size_t j = 0; j < m; ++j)
                                        (*gx)[i * m + j] += probs[i * m + j] * (grad[i * m + j] - dot);
                                }
                            });
}

template <class T>
Var<T> log_softmax(Var<T> x) {
    constexpr const char* op = "log_softmax";
    require_rank(op, x, 2);
    const std::size_t n = x.shape()[0], m = x.shape()[1];
    BasicTensor<T> out(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.value().raw() + i * m;
        T* dst = out.raw() + i * m;
        const T peak = *std::max_element(row, row + m);
        T total{0};
        for (std::size_t j = 0; j < m; ++j) total += std::exp(row[j] - peak);
        const T shift = peak + std::log(total);
        for (std::size_t j = 0; j < m; ++j) dst[j] = row[j] - shift;
    }
    BasicTensor<T> logp = out;
    return x.graph().record(op, std::move(out), {x},
                            [=, logp = std::move(logp)](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                for (std::size_t i = 0; i < n; ++i) {
                                    T total{0};
                                    for (std::size_t j = 0; j < m; ++j) total += grad[i * m + j];
                                    for (std::size_t j = 0; j < m; ++j)
                                        (*gx)[i * m + j] += grad[i * m + j] - std::exp(logp[i * m + j]) * total;
                                }
                            });
}

template <class T>
Var<T> clamp_min(Var<T> x, T lo) {
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) v = std::max(v, lo);
    return x.graph().record("clamp_min", std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        const auto& xv = x.value();
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (xv[i] > lo) (*gx)[i] += grad[i];
    });
}

template <class T>
Var<T> log(Var<T> x) {
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) {
        if (!(v > T{0})) throw NumericFailure("log: non-positive input");
        v = std::log(v);
    }
    return x.graph().record("log", std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i] / x.value()[i];
    });
}

template <class T>
Var<T> reciprocal(Var<T> x) {
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) {
        if (v == T{0}) throw NumericFailure("reciprocal: division by zero");
        v = T{1} / v;
    }
    return x.graph().record("reciprocal", std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const T v = x.value()[i];
            (*gx)[i] -= grad[i] / (v * v);
        }
    });
}

template <class T>
Var<T> mean(Var<T> x) {
    const std::size_t n = x.value().size();
    T acc{0};
    for (T v : x.value().data()) acc += v;
    return x.graph().record("mean", BasicTensor<T>::scalar(acc / T(n)), {x},
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                const T g = grad[0] / T(n);
                                for (T& v : gx->data()) v += g;
                            });
}

template <class T>
Var<T> sum(Var<T> x) {
    T acc{0};
    for (T v : x.value().data()) acc += v;
    return x.graph().record("sum", BasicTensor<T>::scalar(acc), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        for (T& v : gx->data()) v += grad[0];
    });
}

template <class T>
Var<T> l2_norm(Var<T> x) {
    T acc{0};
    for (T v : x.value().data()) acc += v * v;
    const T norm = std::sqrt(acc);
    return x.graph().record("l2_norm", BasicTensor<T>::scalar(norm), {x},
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                if (norm == T{0}) return;
                                BasicTensor<T>* gx = sink_of(x);
                                const T g = grad[0] / norm;
                                for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g * x.value()[i];
                            });
}

template <class T>
Var<T> l2_norm_rows(Var<T> x) {
    const std::size_t rows = x.shape()[0], width = x.value().size() / rows;
    BasicTensor<T> out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        T acc{0};
        for (std::size_t k = 0; k < width; ++k) {
            const T v = x.value()[r * width + k];
            acc += v * v;
        }
        out[r] = std::sqrt(acc);
    }
    BasicTensor<T> norms = out;
    return x.graph().record("l2_norm_rows", std::move(out), {x},
                            [=, norms = std::move(norms)](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                for (std::size_t r = 0; r < rows; ++r) {
                                    if (norms[r] == T{0}) continue;
                                    const T g = grad[r] / norms[r];
                                    for (std::size_t k = 0; k < width; ++k)
                                        (*gx)[r * width + k] += g * x.value()[r * width + k];
                                }
                            });
}

template <class T>
Var<T> max_abs(Var<T> x) {
    const auto& xv = x.value();
    std::size_t best = 0;
    for (std::size_t i = 1; i < xv.size(); ++i)
        if (std::abs(xv[i]) > std::abs(xv[best])) best = i;
    return x.graph().record("max_abs", BasicTensor<T>::scalar(std::abs(xv[best])), {x},
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                const T v = x.value()[best];
                                if (v > T{0}) (*gx)[best] += grad[0];
                                if (v < T{0}) (*gx)[best] -= grad[0];
                            });
}

template <class T>
Var<T> channel_mean(Var<T> x) {
    constexpr const char* op = "channel_mean";
    require_rank(op, x, 4);
    const auto& s = x.shape();
    const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
    BasicTensor<T> out({n, s[2], s[3]});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t k = 0; k < hw; ++k) out[i * hw + k] += x.value()[(i * c + ch) * hw + k];
    for (T& v : out.data()) v /= T(c);
    return x.graph().record(op, std::move(out), {x}, [=](Graph<T>&, const BasicTensor<T>& grad) {
        BasicTensor<T>* gx = sink_of(x);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t k = 0; k < hw; ++k) (*gx)[(i * c + ch) * hw + k] += grad[i * hw + k] / T(c);
    });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
    if (shape_size(shape) != x.value().size()) shape_error("reshape", x.shape(), shape);
    return x.graph().record("reshape", x.value().reshaped(std::move(shape)), {x},
                            [=](Graph<T>&, const BasicTensor<T>& grad) {
                                BasicTensor<T>* gx = sink_of(x);
                                for (std::size_t i = 0; i < grad.size(); ++i) (*gx)[i] += grad[i];
                            });
}

template <class T>
Var<T> sign(Var<T> x) {
    BasicTensor<T> out = x.value();
    for (T& v : out.data()) v = T((v > T{0}) - (v < T{0}));
    return x.graph().record_detached("sign", std::move(out));
}

#define UAPFORGE_INSTANTIATE_OPS(T)                                                                    \
    template Var<T> conv2d(Var<T>, Var<T>, Var<T>, Conv2dOptions);                                     \
    template Var<T> conv_transpose2d(Var<T>, Var<T>, Var<T>, Conv2dOptions);                           \
    template Var<T> relu(Var<T>);                                                                      \
    template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                    \
    template Var<T> max_pool2d(Var<T>, std::size_t, std::size_t);                                     \
    template Var<T> global_avg_pool(Var<T>);                                                           \
    template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, BatchNormStats<T>*, BatchNormOptions);          \
    template Var<T> add(Var<T>, Var<T>);                                                               \
    template Var<T> mul(Var<T>, Var<T>);                                                               \
    template Var<T> scale(Var<T>, T);                                                                  \
    template Var<T> scale_by(Var<T>, Var<T>);                                                          \
    template Var<T> clamp(Var<T>, T, T);                                                               \
    template Var<T> softmax(Var<T>);                                                                   \
    template Var<T> log_softmax(Var<T>);                                                               \
    template Var<T> clamp_min(Var<T>, T);                                                              \
    template Var<T> log(Var<T>);                                                                       \
    template Var<T> reciprocal(Var<T>);                                                                \
    template Var<T> mean(Var<T>);                                                                      \
    template Var<T> sum(Var<T>);                                                                       \
    template Var<T> l2_norm(Var<T>);                                                                   \
    template Var<T> l2_norm_rows(Var<T>);                                                              \
    template Var<T> max_abs(Var<T>);                                                                   \
    template Var<T> channel_mean(Var<T>);                                                              \
    template Var<T> reshape(Var<T>, Shape);                                                            \
    template Var<T> sign(Var<T>);

UAPFORGE_INSTANTIATE_OPS(float)
UAPFORGE_INSTANTIATE_OPS(double)

}  // namespace uapforge::ops
