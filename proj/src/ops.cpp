#include "synthrad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "synthrad/parallel.hpp"

namespace synthrad::ops {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

std::string pair_str(const char* op, const Tensor& a, const Tensor& b) {
    std::ostringstream out;
    out << op << ": shapes " << shape_str(a.shape()) << " and " << shape_str(b.shape());
    return out.str();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), pair_str(op, a, b) + " must match");
}

std::int64_t index4(int C, int H, int W, int n, int c, int y, int x) {
    return ((static_cast<std::int64_t>(n) * C + c) * H + y) * W + x;
}

// Gradient span of a tensor inside a backward closure; buffers are
// guaranteed by Tape::backward before the closure runs.
std::span<float> grad_of(const Tensor& t) {
    Tensor h = t;
    return h.grad();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape("add", a, b);
    Tensor y = Tensor::zeros(a.shape());
    auto ya = y.data();
    auto da = a.data(), db = b.data();
    for (std::int64_t i = 0; i < a.size(); ++i) ya[i] = da[i] + db[i];
    if (tape)
        tape->record("add", {a, b}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto ga = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
        });
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape("mul", a, b);
    Tensor y = Tensor::zeros(a.shape());
    auto ya = y.data();
    auto da = a.data(), db = b.data();
    for (std::int64_t i = 0; i < a.size(); ++i) ya[i] = da[i] * db[i];
    if (tape)
        tape->record("mul", {a, b}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto ga = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            auto da = node.inputs[0].data(), db = node.inputs[1].data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i] * db[i];
                gb[i] += gy[i] * da[i];
            }
        });
    return y;
}

Tensor lerp(const Tensor& a, const Tensor& b, float alpha, Tape* tape) {
    require_same_shape("lerp", a, b);
    Tensor y = Tensor::zeros(a.shape());
    auto ya = y.data();
    auto da = a.data(), db = b.data();
    if (alpha == 0.0f) {
        std::copy(da.begin(), da.end(), ya.begin());
    } else if (alpha == 1.0f) {
        std::copy(db.begin(), db.end(), ya.begin());
    } else {
        const float w0 = 1.0f - alpha;
        for (std::int64_t i = 0; i < a.size(); ++i) ya[i] = w0 * da[i] + alpha * db[i];
    }
    if (tape)
        tape->record("lerp", {a, b}, y, [alpha](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto ga = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            const float w0 = 1.0f - alpha;
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += w0 * gy[i];
                gb[i] += alpha * gy[i];
            }
        });
    return y;
}

Tensor scale(const Tensor& x, float factor, Tape* tape) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) yd[i] = factor * xd[i];
    if (tape)
        tape->record("scale", {x}, y, [factor](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
        });
    return y;
}

Tensor clamp(const Tensor& x, float lo, float hi, Tape* tape) {
    require(lo < hi, "clamp: lo must be below hi");
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) yd[i] = std::min(std::max(xd[i], lo), hi);
    if (tape)
        tape->record("clamp", {x}, y, [lo, hi](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto xd = node.inputs[0].data();
            for (std::size_t i = 0; i < gy.size(); ++i)
                if (xd[i] > lo && xd[i] < hi) gx[i] += gy[i];
        });
    return y;
}

Tensor leaky_relu(const Tensor& x, float negative_slope, Tape* tape) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i)
        yd[i] = xd[i] > 0.0f ? xd[i] : negative_slope * xd[i];
    if (tape)
        tape->record("leaky_relu", {x}, y, [negative_slope](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto xd = node.inputs[0].data();
            for (std::size_t i = 0; i < gy.size(); ++i)
                gx[i] += xd[i] > 0.0f ? gy[i] : negative_slope * gy[i];
        });
    return y;
}

Tensor silu(const Tensor& x, Tape* tape) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xd[i])));
        yd[i] = static_cast<float>(xd[i] * s);
    }
    if (tape)
        tape->record("silu", {x}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto xd = node.inputs[0].data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xd[i])));
                gx[i] += static_cast<float>(gy[i] * s * (1.0 + xd[i] * (1.0 - s)));
            }
        });
    return y;
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i)
        yd[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(xd[i]))));
    if (tape)
        tape->record("sigmoid", {x}, y, [y](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto s = node.output.data();
            (void)y;
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * s[i] * (1.0f - s[i]);
        });
    return y;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    require(a.ndim() == 2 && b.ndim() == 2,
            pair_str("matmul", a, b) + " must both be 2-D");
    require(a.dim(1) == b.dim(0),
            pair_str("matmul", a, b) + " have mismatched inner dims");
    const int N = a.dim(0), K = a.dim(1), M = b.dim(1);
    Tensor y = Tensor::zeros({N, M});
    {
        auto yd = y.data();
        auto ad = a.data();
        auto bd = b.data();
        parallel_for(N, [&](std::int64_t begin, std::int64_t end) {
            for (std::int64_t i = begin; i < end; ++i)
                for (int j = 0; j < M; ++j) {
                    double acc = 0.0;
                    for (int k = 0; k < K; ++k) acc += static_cast<double>(ad[i * K + k]) * bd[k * M + j];
                    yd[i * M + j] = static_cast<float>(acc);
                }
        });
    }
    if (tape)
        tape->record("matmul", {a, b}, y, [N, K, M](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto ga = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            auto ad = node.inputs[0].data();
            auto bd = node.inputs[1].data();
            parallel_for(N, [&](std::int64_t begin, std::int64_t end) {
                for (std::int64_t i = begin; i < end; ++i)
                    for (int k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j < M; ++j) acc += static_cast<double>(gy[i * M + j]) * bd[k * M + j];
                        ga[i * K + k] += static_cast<float>(acc);
                    }
            });
            parallel_for(K, [&](std::int64_t begin, std::int64_t end) {
                for (std::int64_t k = begin; k < end; ++k)
                    for (int j = 0; j < M; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < N; ++i) acc += static_cast<double>(ad[i * K + k]) * gy[i * M + j];
                        gb[k * M + j] += static_cast<float>(acc);
                    }
            });
        });
    return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, Tape* tape) {
    require(x.ndim() == 4 && w.ndim() == 4,
            pair_str("conv2d", x, w) + " must be (N,Ci,H,W) and (Co,Ci,k,k)");
    require(x.dim(1) == w.dim(1),
            pair_str("conv2d", x, w) + " disagree on input channels");
    require(w.dim(2) == w.dim(3) && w.dim(2) % 2 == 1,
            "conv2d: kernel must be square with odd size, got " + shape_str(w.shape()));
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), k = w.dim(2), pad = k / 2;
    Tensor y = Tensor::zeros({N, Co, H, W});
    {
        auto yd = y.data();
        auto xd = x.data();
        auto wd = w.data();
        parallel_for(static_cast<std::int64_t>(N) * Co, [&](std::int64_t begin, std::int64_t end) {
            for (std::int64_t item = begin; item < end; ++item) {
                const int n = static_cast<int>(item / Co);
                const int co = static_cast<int>(item % Co);
                for (int oy = 0; oy < H; ++oy)
                    for (int ox = 0; ox < W; ++ox) {
                        double acc = 0.0;
                        for (int ci = 0; ci < Ci; ++ci)
                            for (int kh = 0; kh < k; ++kh) {
                                const int iy = oy + kh - pad;
                                if (iy < 0 || iy >= H) continue;
                                const std::int64_t xrow = index4(Ci, H, W, n, ci, iy, 0);
                                const std::int64_t wrow = index4(Ci, k, k, co, ci, kh, 0);
                                for (int kw = 0; kw < k; ++kw) {
                                    const int ix = ox + kw - pad;
                                    if (ix < 0 || ix >= W) continue;
                                    acc += static_cast<double>(xd[xrow + ix]) * wd[wrow + kw];
                                }
                            }
                        yd[index4(Co, H, W, n, co, oy, ox)] = static_cast<float>(acc);
                    }
            }
        });
    }
    if (tape)
        tape->record("conv2d", {x, w}, y, [N, Ci, H, W, Co, k, pad](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto gw = grad_of(node.inputs[1]);
            auto xd = node.inputs[0].data();
            auto wd = node.inputs[1].data();
            // dX: gather over output positions; one task per (n, ci) plane.
            parallel_for(static_cast<std::int64_t>(N) * Ci, [&](std::int64_t begin, std::int64_t end) {
                for (std::int64_t item = begin; item < end; ++item) {
                    const int n = static_cast<int>(item / Ci);
                    const int ci = static_cast<int>(item % Ci);
                    for (int iy = 0; iy < H; ++iy)
                        for (int ix = 0; ix < W; ++ix) {
                            double acc = 0.0;
                            for (int co = 0; co < Co; ++co)
                                for (int kh = 0; kh < k; ++kh) {
                                    const int oy = iy - kh + pad;
                                    if (oy < 0 || oy >= H) continue;
                                    const std::int64_t grow = index4(Co, H, W, n, co, oy, 0);
                                    const std::int64_t wrow = index4(Ci, k, k, co, ci, kh, 0);
                                    for (int kw = 0; kw < k; ++kw) {
                                        const int ox = ix - kw + pad;
                                        if (ox < 0 || ox >= W) continue;
                                        acc += static_cast<double>(gy[grow + ox]) * wd[wrow + kw];
                                    }
                                }
                            gx[index4(Ci, H, W, n, ci, iy, ix)] += static_cast<float>(acc);
                        }
                }
            });
            // dW: every weight is a full serial sum; one task per (co, ci).
            parallel_for(static_cast<std::int64_t>(Co) * Ci, [&](std::int64_t begin, std::int64_t end) {
                for (std::int64_t item = begin; item < end; ++item) {
                    const int co = static_cast<int>(item / Ci);
                    const int ci = static_cast<int>(item % Ci);
                    for (int kh = 0; kh < k; ++kh)
                        for (int kw = 0; kw < k; ++kw) {
                            double acc = 0.0;
                            for (int n = 0; n < N; ++n)
                                for (int oy = 0; oy < H; ++oy) {
                                    const int iy = oy + kh - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    const std::int64_t grow = index4(Co, H, W, n, co, oy, 0);
                                    const std::int64_t xrow = index4(Ci, H, W, n, ci, iy, 0);
                                    for (int ox = 0; ox < W; ++ox) {
                                        const int ix = ox + kw - pad;
                                        if (ix < 0 || ix >= W) continue;
                                        acc += static_cast<double>(gy[grow + ox]) * xd[xrow + ix];
                                    }
                                }
                            gw[index4(Ci, k, k, co, ci, kh, kw)] += static_cast<float>(acc);
                        }
                }
            });
        });
    return y;
}

Tensor upsample_nearest2(const Tensor& x, Tape* tape) {
    require(x.ndim() == 4, "upsample_nearest2: expected NCHW, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y = Tensor::zeros({N, C, 2 * H, 2 * W});
    auto yd = y.data();
    auto xd = x.data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix) {
                    const float v = xd[index4(C, H, W, n, c, iy, ix)];
                    const std::int64_t base = index4(C, 2 * H, 2 * W, n, c, 2 * iy, 2 * ix);
                    yd[base] = v;
                    yd[base + 1] = v;
                    yd[base + 2 * W] = v;
                    yd[base + 2 * W + 1] = v;
                }
    if (tape)
        tape->record("upsample_nearest2", {x}, y, [N, C, H, W](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int iy = 0; iy < H; ++iy)
                        for (int ix = 0; ix < W; ++ix) {
                            const std::int64_t base = index4(C, 2 * H, 2 * W, n, c, 2 * iy, 2 * ix);
                            gx[index4(C, H, W, n, c, iy, ix)] +=
                                gy[base] + gy[base + 1] + gy[base + 2 * W] + gy[base + 2 * W + 1];
                        }
        });
    return y;
}

Tensor avg_pool2(const Tensor& x, Tape* tape) {
    require(x.ndim() == 4, "avg_pool2: expected NCHW, got " + shape_str(x.shape()));
    require(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0,
            "avg_pool2: H and W must be even, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H / 2, Wo = W / 2;
    Tensor y = Tensor::zeros({N, C, Ho, Wo});
    auto yd = y.data();
    auto xd = x.data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    const std::int64_t base = index4(C, H, W, n, c, 2 * oy, 2 * ox);
                    const double s = static_cast<double>(xd[base]) + xd[base + 1] +
                                     xd[base + W] + xd[base + W + 1];
                    yd[index4(C, Ho, Wo, n, c, oy, ox)] = static_cast<float>(s * 0.25);
                }
    if (tape)
        tape->record("avg_pool2", {x}, y, [N, C, H, W, Ho, Wo](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int oy = 0; oy < Ho; ++oy)
                        for (int ox = 0; ox < Wo; ++ox) {
                            const float g = gy[index4(C, Ho, Wo, n, c, oy, ox)] * 0.25f;
                            const std::int64_t base = index4(C, H, W, n, c, 2 * oy, 2 * ox);
                            gx[base] += g;
                            gx[base + 1] += g;
                            gx[base + W] += g;
                            gx[base + W + 1] += g;
                        }
        });
    return y;
}

Tensor add_bias(const Tensor& x, const Tensor& b, Tape* tape) {
    require(b.ndim() == 1, "add_bias: bias must be 1-D, got " + shape_str(b.shape()));
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    auto bd = b.data();
    if (x.ndim() == 2) {
        const int N = x.dim(0), F = x.dim(1);
        require(F == b.dim(0), pair_str("add_bias", x, b) + " disagree on features");
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < F; ++j) yd[i * F + j] = xd[i * F + j] + bd[j];
    } else if (x.ndim() == 4) {
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        require(C == b.dim(0), pair_str("add_bias", x, b) + " disagree on channels");
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const std::int64_t base = index4(C, H, W, n, c, 0, 0);
                for (int i = 0; i < H * W; ++i) yd[base + i] = xd[base + i] + bd[c];
            }
    } else {
        throw ShapeError("add_bias: x must be 2-D or 4-D, got " + shape_str(x.shape()));
    }
    if (tape)
        tape->record("add_bias", {x, b}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            const Tensor& x_in = node.inputs[0];
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            if (x_in.ndim() == 2) {
                const int N = x_in.dim(0), F = x_in.dim(1);
                for (int j = 0; j < F; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < N; ++i) acc += gy[static_cast<std::size_t>(i) * F + j];
                    gb[j] += static_cast<float>(acc);
                }
            } else {
                const int N = x_in.dim(0), C = x_in.dim(1), H = x_in.dim(2), W = x_in.dim(3);
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const std::int64_t base = index4(C, H, W, n, c, 0, 0);
                        for (int i = 0; i < H * W; ++i) acc += gy[base + i];
                    }
                    gb[c] += static_cast<float>(acc);
                }
            }
        });
    return y;
}

Tensor add_channel_vector(const Tensor& x, const Tensor& v, Tape* tape) {
    require(x.ndim() == 4 && v.ndim() == 2,
            pair_str("add_channel_vector", x, v) + " must be (N,C,H,W) and (N,C)");
    require(x.dim(0) == v.dim(0) && x.dim(1) == v.dim(1),
            pair_str("add_channel_vector", x, v) + " disagree on N or C");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y = Tensor::zeros(x.shape());
    auto yd = y.data();
    auto xd = x.data();
    auto vd = v.data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float add = vd[static_cast<std::size_t>(n) * C + c];
            const std::int64_t base = index4(C, H, W, n, c, 0, 0);
            for (int i = 0; i < H * W; ++i) yd[base + i] = xd[base + i] + add;
        }
    if (tape)
        tape->record("add_channel_vector", {x, v}, y, [N, C, H, W](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto gv = grad_of(node.inputs[1]);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    const std::int64_t base = index4(C, H, W, n, c, 0, 0);
                    for (int i = 0; i < H * W; ++i) acc += gy[base + i];
                    gv[static_cast<std::size_t>(n) * C + c] += static_cast<float>(acc);
                }
        });
    return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b, Tape* tape) {
    require(a.ndim() == 4 && b.ndim() == 4,
            pair_str("concat_channels", a, b) + " must be NCHW");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            pair_str("concat_channels", a, b) + " disagree outside the channel dim");
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor y = Tensor::zeros({N, Ca + Cb, H, W});
    auto yd = y.data();
    auto ad = a.data(), bd = b.data();
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(ad.begin() + n * Ca * plane, Ca * plane, yd.begin() + n * (Ca + Cb) * plane);
        std::copy_n(bd.begin() + n * Cb * plane, Cb * plane,
                    yd.begin() + (n * (Ca + Cb) + Ca) * plane);
    }
    if (tape)
        tape->record("concat_channels", {a, b}, y, [N, Ca, Cb, plane](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto ga = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            for (int n = 0; n < N; ++n) {
                const std::int64_t ybase = n * (Ca + Cb) * plane;
                for (std::int64_t i = 0; i < Ca * plane; ++i) ga[n * Ca * plane + i] += gy[ybase + i];
                for (std::int64_t i = 0; i < Cb * plane; ++i)
                    gb[n * Cb * plane + i] += gy[ybase + Ca * plane + i];
            }
        });
    return y;
}

Tensor concat_rows(std::span<const Tensor> parts, Tape* tape) {
    require(!parts.empty(), "concat_rows: no inputs");
    const int D = parts[0].dim(1);
    int rows = 0;
    for (const Tensor& p : parts) {
        require(p.ndim() == 2 && p.dim(1) == D,
                "concat_rows: all parts must be (R," + std::to_string(D) + "), got " +
                    shape_str(p.shape()));
        rows += p.dim(0);
    }
    Tensor y = Tensor::zeros({rows, D});
    auto yd = y.data();
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
        std::copy_n(p.data().begin(), p.size(), yd.begin() + offset);
        offset += p.size();
    }
    if (tape)
        tape->record("concat_rows", {parts.begin(), parts.end()}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            std::int64_t offset = 0;
            for (const Tensor& p : node.inputs) {
                auto gp = grad_of(p);
                for (std::int64_t i = 0; i < p.size(); ++i) gp[i] += gy[offset + i];
                offset += p.size();
            }
        });
    return y;
}

Tensor sum_rows(const Tensor& x, Tape* tape) {
    require(x.ndim() == 2, "sum_rows: expected 2-D, got " + shape_str(x.shape()));
    const int R = x.dim(0), D = x.dim(1);
    Tensor y = Tensor::zeros({1, D});
    auto yd = y.data();
    auto xd = x.data();
    for (int j = 0; j < D; ++j) {
        double acc = 0.0;
        for (int i = 0; i < R; ++i) acc += xd[static_cast<std::size_t>(i) * D + j];
        yd[j] = static_cast<float>(acc);
    }
    if (tape)
        tape->record("sum_rows", {x}, y, [R, D](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < D; ++j) gx[static_cast<std::size_t>(i) * D + j] += gy[j];
        });
    return y;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  Tape* tape, float eps) {
    require(x.ndim() == 4, "group_norm: expected NCHW, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(groups >= 1 && C % groups == 0,
            "group_norm: channels " + std::to_string(C) + " not divisible by groups " +
                std::to_string(groups));
    require(gamma.ndim() == 1 && gamma.dim(0) == C && beta.ndim() == 1 && beta.dim(0) == C,
            "group_norm: gamma/beta must be (C) with C=" + std::to_string(C));
    const int gs = C / groups;
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t m = gs * plane;

    Tensor y = Tensor::zeros(x.shape());
    auto means = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * groups);
    auto invs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * groups);
    {
        auto yd = y.data();
        auto xd = x.data();
        auto gd = gamma.data();
        auto bd = beta.data();
        for (int n = 0; n < N; ++n)
            for (int g = 0; g < groups; ++g) {
                const std::int64_t base = index4(C, H, W, n, g * gs, 0, 0);
                double s1 = 0.0, s2 = 0.0;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double v = xd[base + i];
                    s1 += v;
                    s2 += v * v;
                }
                const double mean = s1 / static_cast<double>(m);
                const double var = s2 / static_cast<double>(m) - mean * mean;
                const double inv = 1.0 / std::sqrt(std::max(var, 0.0) + eps);
                (*means)[static_cast<std::size_t>(n) * groups + g] = mean;
                (*invs)[static_cast<std::size_t>(n) * groups + g] = inv;
                for (int cc = 0; cc < gs; ++cc) {
                    const int c = g * gs + cc;
                    const std::int64_t cbase = index4(C, H, W, n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const double xhat = (xd[cbase + i] - mean) * inv;
                        yd[cbase + i] = static_cast<float>(gd[c] * xhat + bd[c]);
                    }
                }
            }
    }
    if (tape)
        tape->record("group_norm", {x, gamma, beta}, y,
                     [N, C, H, W, groups, gs, plane, m, means, invs](const TapeNode& node) {
                         auto gy = grad_of(node.output);
                         auto gx = grad_of(node.inputs[0]);
                         auto ggamma = grad_of(node.inputs[1]);
                         auto gbeta = grad_of(node.inputs[2]);
                         auto xd = node.inputs[0].data();
                         auto gd = node.inputs[1].data();
                         for (int n = 0; n < N; ++n)
                             for (int g = 0; g < groups; ++g) {
                                 const double mean = (*means)[static_cast<std::size_t>(n) * groups + g];
                                 const double inv = (*invs)[static_cast<std::size_t>(n) * groups + g];
                                 double s1 = 0.0, s2 = 0.0;
                                 for (int cc = 0; cc < gs; ++cc) {
                                     const int c = g * gs + cc;
                                     const std::int64_t cbase = index4(C, H, W, n, c, 0, 0);
                                     for (std::int64_t i = 0; i < plane; ++i) {
                                         const double xhat = (xd[cbase + i] - mean) * inv;
                                         const double dxhat = static_cast<double>(gy[cbase + i]) * gd[c];
                                         s1 += dxhat;
                                         s2 += dxhat * xhat;
                                     }
                                 }
                                 const double inv_m = 1.0 / static_cast<double>(m);
                                 for (int cc = 0; cc < gs; ++cc) {
                                     const int c = g * gs + cc;
                                     const std::int64_t cbase = index4(C, H, W, n, c, 0, 0);
                                     for (std::int64_t i = 0; i < plane; ++i) {
                                         const double xhat = (xd[cbase + i] - mean) * inv;
                                         const double dxhat = static_cast<double>(gy[cbase + i]) * gd[c];
                                         gx[cbase + i] += static_cast<float>(
                                             inv * (dxhat - (s1 + xhat * s2) * inv_m));
                                     }
                                 }
                             }
                         for (int c = 0; c < C; ++c) {
                             const int g = c / gs;
                             double dgamma = 0.0, dbeta = 0.0;
                             for (int n = 0; n < N; ++n) {
                                 const double mean = (*means)[static_cast<std::size_t>(n) * groups + g];
                                 const double inv = (*invs)[static_cast<std::size_t>(n) * groups + g];
                                 const std::int64_t cbase = index4(C, H, W, n, c, 0, 0);
                                 for (std::int64_t i = 0; i < plane; ++i) {
                                     const double xhat = (xd[cbase + i] - mean) * inv;
                                     dgamma += static_cast<double>(gy[cbase + i]) * xhat;
                                     dbeta += gy[cbase + i];
                                 }
                             }
                             ggamma[c] += static_cast<float>(dgamma);
                             gbeta[c] += static_cast<float>(dbeta);
                         }
                     });
    return y;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, Tape* tape) {
    require(table.ndim() == 2, "embedding_lookup: table must be (V,D), got " + shape_str(table.shape()));
    require(!ids.empty(), "embedding_lookup: empty id list");
    const int V = table.dim(0), D = table.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] < 0 || ids[i] >= V)
            throw DataError("embedding_lookup: id " + std::to_string(ids[i]) + " at position " +
                            std::to_string(i) + " outside vocabulary of size " + std::to_string(V));
    const int n = static_cast<int>(ids.size());
    Tensor y = Tensor::zeros({n, D});
    auto yd = y.data();
    auto td = table.data();
    for (int i = 0; i < n; ++i)
        std::copy_n(td.begin() + static_cast<std::int64_t>(ids[i]) * D, D,
                    yd.begin() + static_cast<std::int64_t>(i) * D);
    if (tape) {
        std::vector<int> saved(ids.begin(), ids.end());
        tape->record("embedding_lookup", {table}, y, [saved, D](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gt = grad_of(node.inputs[0]);
            for (std::size_t i = 0; i < saved.size(); ++i)
                for (int j = 0; j < D; ++j)
                    gt[static_cast<std::int64_t>(saved[i]) * D + j] +=
                        gy[static_cast<std::int64_t>(i) * D + j];
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
    require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " cannot view as " +
                                          shape_str(shape));
    Tensor y = Tensor::from(std::move(shape), {x.data().begin(), x.data().end()});
    if (tape)
        tape->record("reshape", {x}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        });
    return y;
}

Tensor spatial_mean(const Tensor& x, Tape* tape) {
    require(x.ndim() == 4, "spatial_mean: expected NCHW, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor y = Tensor::zeros({N, C});
    auto yd = y.data();
    auto xd = x.data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            const std::int64_t base = index4(C, H, W, n, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) acc += xd[base + i];
            yd[static_cast<std::size_t>(n) * C + c] = static_cast<float>(acc / static_cast<double>(plane));
        }
    if (tape)
        tape->record("spatial_mean", {x}, y, [N, C, H, W, plane](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            const float inv = 1.0f / static_cast<float>(plane);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const float g = gy[static_cast<std::size_t>(n) * C + c] * inv;
                    const std::int64_t base = index4(C, H, W, n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) gx[base + i] += g;
                }
        });
    return y;
}

Tensor sum(const Tensor& x, Tape* tape) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    Tensor y = Tensor::scalar(static_cast<float>(acc));
    if (tape)
        tape->record("sum", {x}, y, [](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[0];
        });
    return y;
}

Tensor mse(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape("mse", a, b);
    const std::int64_t n = a.size();
    auto ad = a.data(), bd = b.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(ad[i]) - bd[i];
        acc += d * d;
    }
    Tensor y = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    if (tape)
        tape->record("mse", {a, b}, y, [n](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto ga = grad_of(node.inputs[0]);
            auto gb = grad_of(node.inputs[1]);
            auto ad = node.inputs[0].data(), bd = node.inputs[1].data();
            const double c = 2.0 * gy[0] / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const float g = static_cast<float>(c * (static_cast<double>(ad[i]) - bd[i]));
                ga[i] += g;
                gb[i] -= g;
            }
        });
    return y;
}

Tensor bce(const Tensor& p, const Tensor& target, Tape* tape) {
    require_same_shape("bce", p, target);
    const std::int64_t n = p.size();
    auto pd = p.data(), td = target.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!(pd[i] > 0.0f && pd[i] < 1.0f))
            throw DomainError("bce: input " + std::to_string(pd[i]) + " at index " +
                              std::to_string(i) + " outside (0,1)");
        if (td[i] < 0.0f || td[i] > 1.0f)
            throw DomainError("bce: target " + std::to_string(td[i]) + " at index " +
                              std::to_string(i) + " outside [0,1]");
        acc += static_cast<double>(td[i]) * std::log(static_cast<double>(pd[i])) +
               (1.0 - td[i]) * std::log1p(-static_cast<double>(pd[i]));
    }
    Tensor y = Tensor::scalar(static_cast<float>(-acc / static_cast<double>(n)));
    if (tape)
        tape->record("bce", {p, target}, y, [n](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gp = grad_of(node.inputs[0]);
            auto gt = grad_of(node.inputs[1]);
            auto pd = node.inputs[0].data(), td = node.inputs[1].data();
            const double c = gy[0] / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const double pv = pd[i], tv = td[i];
                gp[i] += static_cast<float>(-c * (tv / pv - (1.0 - tv) / (1.0 - pv)));
                gt[i] += static_cast<float>(-c * (std::log(pv) - std::log1p(-pv)));
            }
        });
    return y;
}

Tensor softmax(const Tensor& logits, Tape* tape) {
    require(logits.ndim() == 2, "softmax: expected (N,K), got " + shape_str(logits.shape()));
    const int N = logits.dim(0), K = logits.dim(1);
    Tensor y = Tensor::zeros(logits.shape());
    auto yd = y.data();
    auto xd = logits.data();
    for (int i = 0; i < N; ++i) {
        const std::int64_t base = static_cast<std::int64_t>(i) * K;
        double mx = xd[base];
        for (int j = 1; j < K; ++j) mx = std::max(mx, static_cast<double>(xd[base + j]));
        double z = 0.0;
        for (int j = 0; j < K; ++j) z += std::exp(static_cast<double>(xd[base + j]) - mx);
        for (int j = 0; j < K; ++j)
            yd[base + j] = static_cast<float>(std::exp(static_cast<double>(xd[base + j]) - mx) / z);
    }
    if (tape)
        tape->record("softmax", {logits}, y, [N, K](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            auto pd = node.output.data();
            for (int i = 0; i < N; ++i) {
                const std::int64_t base = static_cast<std::int64_t>(i) * K;
                double dot = 0.0;
                for (int j = 0; j < K; ++j) dot += static_cast<double>(gy[base + j]) * pd[base + j];
                for (int j = 0; j < K; ++j)
                    gx[base + j] += static_cast<float>(pd[base + j] * (gy[base + j] - dot));
            }
        });
    return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tape* tape) {
    require(logits.ndim() == 2, "softmax_cross_entropy: expected (N,K), got " + shape_str(logits.shape()));
    const int N = logits.dim(0), K = logits.dim(1);
    require(static_cast<int>(labels.size()) == N,
            "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(N) + " rows");
    for (int i = 0; i < N; ++i)
        if (labels[i] < 0 || labels[i] >= K)
            throw DataError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                            " at row " + std::to_string(i) + " outside [0," + std::to_string(K) + ")");
    auto xd = logits.data();
    auto probs = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * K);
    double loss = 0.0;
    for (int i = 0; i < N; ++i) {
        const std::int64_t base = static_cast<std::int64_t>(i) * K;
        double mx = xd[base];
        for (int j = 1; j < K; ++j) mx = std::max(mx, static_cast<double>(xd[base + j]));
        double z = 0.0;
        for (int j = 0; j < K; ++j) z += std::exp(static_cast<double>(xd[base + j]) - mx);
        for (int j = 0; j < K; ++j)
            (*probs)[base + j] = static_cast<float>(std::exp(static_cast<double>(xd[base + j]) - mx) / z);
        loss += mx + std::log(z) - xd[base + labels[i]];
    }
    Tensor y = Tensor::scalar(static_cast<float>(loss / N));
    if (tape) {
        std::vector<int> saved(labels.begin(), labels.end());
        tape->record("softmax_cross_entropy", {logits}, y, [N, K, saved, probs](const TapeNode& node) {
            auto gy = grad_of(node.output);
            auto gx = grad_of(node.inputs[0]);
            const float c = gy[0] / static_cast<float>(N);
            for (int i = 0; i < N; ++i) {
                const std::int64_t base = static_cast<std::int64_t>(i) * K;
                for (int j = 0; j < K; ++j) {
                    const float onehot = j == saved[static_cast<std::size_t>(i)] ? 1.0f : 0.0f;
                    gx[base + j] += c * ((*probs)[base + j] - onehot);
                }
            }
        });
    }
    return y;
}

}  // namespace synthrad::ops
