#include "captnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace captnet {

namespace {

using detail::TensorImpl;

std::vector<double>* grad_of(const Tensor& t) {
    return t.requires_grad() ? &detail::grad_buffer(t.impl()) : nullptr;
}

void require(bool cond, const std::string& message) {
    if (!cond) {
        throw ShapeError(message);
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                  ", got " + shape_str(t.shape()));
}

// out[y][x] += sum_{dy,dx} w[dy][dx] * in[y+dy-1][x+dx-1], zero padded
void stencil3_forward(const double* in, const double* w, double* out, std::size_t h,
                      std::size_t wd) {
    for (std::size_t dy = 0; dy < 3; ++dy) {
        const std::size_t y0 = dy == 0 ? 1 : 0;
        const std::size_t y1 = dy == 2 ? h - 1 : h;
        for (std::size_t dx = 0; dx < 3; ++dx) {
            const double wv = w[dy * 3 + dx];
            const std::size_t x0 = dx == 0 ? 1 : 0;
            const std::size_t x1 = dx == 2 ? wd - 1 : wd;
            for (std::size_t y = y0; y < y1; ++y) {
                const double* src = in + (y + dy - 1) * wd + (dx - 1);
                double* dst = out + y * wd;
                for (std::size_t x = x0; x < x1; ++x) {
                    dst[x] += wv * src[x];
                }
            }
        }
    }
}

void stencil3_backward(const double* in, const double* w, const double* gout, double* gin,
                       double* gw, std::size_t h, std::size_t wd) {
    for (std::size_t dy = 0; dy < 3; ++dy) {
        const std::size_t y0 = dy == 0 ? 1 : 0;
        const std::size_t y1 = dy == 2 ? h - 1 : h;
        for (std::size_t dx = 0; dx < 3; ++dx) {
            const double wv = w[dy * 3 + dx];
            const std::size_t x0 = dx == 0 ? 1 : 0;
            const std::size_t x1 = dx == 2 ? wd - 1 : wd;
            double acc = 0.0;
            for (std::size_t y = y0; y < y1; ++y) {
                const std::size_t off = (y + dy - 1) * wd + (dx - 1);
                const double* g = gout + y * wd;
                if (gin != nullptr) {
                    double* dst = gin + off;
                    for (std::size_t x = x0; x < x1; ++x) {
                        dst[x] += wv * g[x];
                    }
                }
                if (gw != nullptr) {
                    const double* src = in + off;
                    for (std::size_t x = x0; x < x1; ++x) {
                        acc += g[x] * src[x];
                    }
                }
            }
            if (gw != nullptr) {
                gw[dy * 3 + dx] += acc;
            }
        }
    }
}

// Flat index into b for every flat index of a, under the broadcast rule.
std::vector<std::size_t> broadcast_index(const Shape& a, const Shape& b, const char* op) {
    require(b.size() <= a.size(), std::string(op) + ": cannot broadcast " + shape_str(b) +
                                      " to " + shape_str(a));
    const std::size_t rank = a.size();
    const std::size_t offset = rank - b.size();
    std::vector<std::size_t> bstride(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = b.size(); i-- > 0;) {
        const std::size_t ad = a[i + offset];
        require(b[i] == ad || b[i] == 1, std::string(op) + ": cannot broadcast " + shape_str(b) +
                                             " to " + shape_str(a));
        bstride[i + offset] = b[i] == 1 ? 0 : stride;
        stride *= b[i];
    }
    const std::size_t n = shape_numel(a);
    std::vector<std::size_t> index(n);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t bi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        index[i] = bi;
        for (std::size_t axis = rank; axis-- > 0;) {
            ++counter[axis];
            bi += bstride[axis];
            if (counter[axis] < a[axis]) {
                break;
            }
            bi -= bstride[axis] * counter[axis];
            counter[axis] = 0;
        }
    }
    return index;
}

Tensor permute_flat(const char* op, const Tensor& x, Shape out_shape,
                    std::vector<std::size_t> src_of_out) {
    const auto in = x.data();
    std::vector<double> out(src_of_out.size());
    for (std::size_t o = 0; o < out.size(); ++o) {
        out[o] = in[src_of_out[o]];
    }
    return make_op_result(op, std::move(out_shape), std::move(out), {x},
                          [x, src_of_out = std::move(src_of_out)](const TensorImpl& self) {
                              if (auto* gx = grad_of(x)) {
                                  for (std::size_t o = 0; o < src_of_out.size(); ++o) {
                                      (*gx)[src_of_out[o]] += self.grad[o];
                                  }
                              }
                          });
}

// output flat index -> input flat index for pixel_unshuffle
std::vector<std::size_t> unshuffle_map(const Shape& in, std::size_t r) {
    const std::size_t n = in[0], c = in[1], h = in[2], w = in[3];
    const std::size_t oh = h / r, ow = w / r, oc = c * r * r;
    std::vector<std::size_t> map(n * oc * oh * ow);
    std::size_t o = 0;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < oc; ++ch) {
            const std::size_t src_c = ch / (r * r);
            const std::size_t i = (ch % (r * r)) / r;
            const std::size_t j = ch % r;
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    map[o++] = ((b * c + src_c) * h + (y * r + i)) * w + (xx * r + j);
                }
            }
        }
    }
    return map;
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t groups) {
    require_rank(x, 4, "conv2d");
    require_rank(w, 4, "conv2d weight");
    require_rank(b, 1, "conv2d bias");
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), cin_g = w.dim(1), k = w.dim(2);
    require(groups == 1 || groups == cin,
            "conv2d: groups must be 1 or Cin=" + std::to_string(cin) + ", got " +
                std::to_string(groups));
    require(k == w.dim(3) && (k == 1 || k == 3), "conv2d: kernel must be 1x1 or 3x3, got " +
                                                     shape_str(w.shape()));
    require(cin_g * groups == cin, "conv2d: weight " + shape_str(w.shape()) +
                                       " inconsistent with input " + shape_str(x.shape()));
    require(groups == 1 || cout == cin,
            "conv2d: depthwise convolution requires Cout == Cin, got " + std::to_string(cout));
    require(b.dim(0) == cout, "conv2d: bias length " + std::to_string(b.dim(0)) +
                                  " != Cout " + std::to_string(cout));

    const std::size_t cout_g = cout / groups;
    const std::size_t hw = h * wd;
    const std::size_t kk = k * k;
    const auto xd = x.data();
    const auto wdat = w.data();
    const auto bd = b.data();
    std::vector<double> out(n * cout * hw);
    for (std::size_t bn = 0; bn < n; ++bn) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* dst = out.data() + (bn * cout + co) * hw;
            std::fill(dst, dst + hw, bd[co]);
            const std::size_t g = co / cout_g;
            for (std::size_t cig = 0; cig < cin_g; ++cig) {
                const std::size_t ci = g * cin_g + cig;
                const double* src = xd.data() + (bn * cin + ci) * hw;
                const double* wp = wdat.data() + (co * cin_g + cig) * kk;
                if (k == 1) {
                    const double wv = wp[0];
                    for (std::size_t p = 0; p < hw; ++p) {
                        dst[p] += wv * src[p];
                    }
                } else {
                    stencil3_forward(src, wp, dst, h, wd);
                }
            }
        }
    }

    return make_op_result(
        "conv2d", {n, cout, h, wd}, std::move(out), {x, w, b},
        [x, w, b, n, cin, cout, cin_g, cout_g, h, wd, k](const TensorImpl& self) {
            auto* gx = grad_of(x);
            auto* gw = grad_of(w);
            auto* gb = grad_of(b);
            const std::size_t hw = h * wd;
            const std::size_t kk = k * k;
            const auto xd = x.data();
            const auto wdat = w.data();
            for (std::size_t bn = 0; bn < n; ++bn) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* g = self.grad.data() + (bn * cout + co) * hw;
                    if (gb != nullptr) {
                        double acc = 0.0;
                        for (std::size_t p = 0; p < hw; ++p) {
                            acc += g[p];
                        }
                        (*gb)[co] += acc;
                    }
                    const std::size_t grp = co / cout_g;
                    for (std::size_t cig = 0; cig < cin_g; ++cig) {
                        const std::size_t ci = grp * cin_g + cig;
                        const double* src = xd.data() + (bn * cin + ci) * hw;
                        const double* wp = wdat.data() + (co * cin_g + cig) * kk;
                        double* gin = gx ? gx->data() + (bn * cin + ci) * hw : nullptr;
                        double* gwp = gw ? gw->data() + (co * cin_g + cig) * kk : nullptr;
                        if (k == 1) {
                            const double wv = wp[0];
                            double acc = 0.0;
                            for (std::size_t p = 0; p < hw; ++p) {
                                acc += g[p] * src[p];
                            }
                            if (gin != nullptr) {
                                for (std::size_t p = 0; p < hw; ++p) {
                                    gin[p] += wv * g[p];
                                }
                            }
                            if (gwp != nullptr) {
                                gwp[0] += acc;
                            }
                        } else {
                            stencil3_backward(src, wp, g, gin, gwp, h, wd);
                        }
                    }
                }
            }
        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& shift, double eps) {
    require(x.rank() >= 2, "layer_norm: rank >= 2 required, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1);
    const std::size_t s = x.numel() / (n * c);
    require(gamma.numel() == c && shift.numel() == c,
            "layer_norm: affine params must have " + std::to_string(c) + " entries");
    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto sd = shift.data();
    std::vector<double> xhat(x.numel());
    std::vector<double> rstd(n * s);
    std::vector<double> out(x.numel());
    std::vector<double> mu(s);
    std::vector<double> var(s);
    const double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t bn = 0; bn < n; ++bn) {
        const std::size_t base = bn * c * s;
        std::fill(mu.begin(), mu.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = xd.data() + base + ch * s;
            for (std::size_t p = 0; p < s; ++p) {
                mu[p] += src[p];
            }
        }
        for (std::size_t p = 0; p < s; ++p) {
            mu[p] *= inv_c;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = xd.data() + base + ch * s;
            for (std::size_t p = 0; p < s; ++p) {
                const double d = src[p] - mu[p];
                var[p] += d * d;
            }
        }
        double* rs = rstd.data() + bn * s;
        for (std::size_t p = 0; p < s; ++p) {
            rs[p] = 1.0 / std::sqrt(var[p] * inv_c + eps);
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = xd.data() + base + ch * s;
            double* xh = xhat.data() + base + ch * s;
            double* dst = out.data() + base + ch * s;
            for (std::size_t p = 0; p < s; ++p) {
                xh[p] = (src[p] - mu[p]) * rs[p];
                dst[p] = xh[p] * gd[ch] + sd[ch];
            }
        }
    }

    return make_op_result(
        "layer_norm", x.shape(), std::move(out), {x, gamma, shift},
        [x, gamma, shift, n, c, s, xhat = std::move(xhat), rstd = std::move(rstd)](
            const TensorImpl& self) {
            auto* gx = grad_of(x);
            auto* gg = grad_of(gamma);
            auto* gs = grad_of(shift);
            const auto gd = gamma.data();
            const double inv_c = 1.0 / static_cast<double>(c);
            std::vector<double> m1(s);
            std::vector<double> m2(s);
            for (std::size_t bn = 0; bn < n; ++bn) {
                const std::size_t base = bn * c * s;
                std::fill(m1.begin(), m1.end(), 0.0);
                std::fill(m2.begin(), m2.end(), 0.0);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.data() + base + ch * s;
                    const double* xh = xhat.data() + base + ch * s;
                    double acc_g = 0.0;
                    double acc_s = 0.0;
                    for (std::size_t p = 0; p < s; ++p) {
                        const double dxh = g[p] * gd[ch];
                        m1[p] += dxh;
                        m2[p] += dxh * xh[p];
                        acc_g += g[p] * xh[p];
                        acc_s += g[p];
                    }
                    if (gg != nullptr) {
                        (*gg)[ch] += acc_g;
                    }
                    if (gs != nullptr) {
                        (*gs)[ch] += acc_s;
                    }
                }
                if (gx == nullptr) {
                    continue;
                }
                const double* rs = rstd.data() + bn * s;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.data() + base + ch * s;
                    const double* xh = xhat.data() + base + ch * s;
                    double* dst = gx->data() + base + ch * s;
                    for (std::size_t p = 0; p < s; ++p) {
                        const double dxh = g[p] * gd[ch];
                        dst[p] += rs[p] * (dxh - m1[p] * inv_c - xh[p] * m2[p] * inv_c);
                    }
                }
            }
        });
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.numel() / len;
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = xd.data() + r * len;
        double* dst = out.data() + r * len;
        const double mx = *std::max_element(src, src + len);
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            dst[i] = std::exp(src[i] - mx);
            total += dst[i];
        }
        for (std::size_t i = 0; i < len; ++i) {
            dst[i] /= total;
        }
    }
    return make_op_result("softmax_lastdim", x.shape(), std::move(out), {x},
                          [x, len, rows](const TensorImpl& self) {
                              auto* gx = grad_of(x);
                              if (gx == nullptr) {
                                  return;
                              }
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const double* y = self.data.data() + r * len;
                                  const double* g = self.grad.data() + r * len;
                                  double dot = 0.0;
                                  for (std::size_t i = 0; i < len; ++i) {
                                      dot += g[i] * y[i];
                                  }
                                  double* dst = gx->data() + r * len;
                                  for (std::size_t i = 0; i < len; ++i) {
                                      dst[i] += y[i] * (g[i] - dot);
                                  }
                              }
                          });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, MacCounter* counter) {
    require(a.rank() >= 2 && a.rank() == b.rank(),
            "batched_matmul: ranks must match and be >= 2, got " + shape_str(a.shape()) +
                " and " + shape_str(b.shape()));
    const std::size_t rank = a.rank();
    for (std::size_t i = 0; i + 2 < rank; ++i) {
        require(a.dim(i) == b.dim(i), "batched_matmul: leading dims differ: " +
                                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(rank - 2), k = a.dim(rank - 1), nn = b.dim(rank - 1);
    require(b.dim(rank - 2) == k, "batched_matmul: non-conformant " + shape_str(a.shape()) +
                                      " x " + shape_str(b.shape()));
    const std::size_t batch = a.numel() / (m * k);
    Shape out_shape = a.shape();
    out_shape[rank - 1] = nn;
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(batch * m * nn, 0.0);
    for (std::size_t bt = 0; bt < batch; ++bt) {
        const double* ap = ad.data() + bt * m * k;
        const double* bp = bd.data() + bt * k * nn;
        double* op = out.data() + bt * m * nn;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ap[i * k + p];
                const double* brow = bp + p * nn;
                double* orow = op + i * nn;
                for (std::size_t j = 0; j < nn; ++j) {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
    if (counter != nullptr) {
        counter->macs += static_cast<std::uint64_t>(batch * m * k * nn);
    }
    return make_op_result(
        "batched_matmul", std::move(out_shape), std::move(out), {a, b},
        [a, b, batch, m, k, nn](const TensorImpl& self) {
            auto* ga = grad_of(a);
            auto* gb = grad_of(b);
            const auto ad = a.data();
            const auto bd = b.data();
            for (std::size_t bt = 0; bt < batch; ++bt) {
                const double* ap = ad.data() + bt * m * k;
                const double* bp = bd.data() + bt * k * nn;
                const double* g = self.grad.data() + bt * m * nn;
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g + i * nn;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = bp + p * nn;
                        if (ga != nullptr) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < nn; ++j) {
                                acc += grow[j] * brow[j];
                            }
                            (*ga)[bt * m * k + i * k + p] += acc;
                        }
                        if (gb != nullptr) {
                            const double av = ap[i * k + p];
                            double* gbrow = gb->data() + bt * k * nn + p * nn;
                            for (std::size_t j = 0; j < nn; ++j) {
                                gbrow[j] += av * grow[j];
                            }
                        }
                    }
                }
            }
        });
}

Tensor transpose_last2(const Tensor& x) {
    require(x.rank() >= 2, "transpose_last2: rank >= 2 required");
    const std::size_t rank = x.rank();
    const std::size_t m = x.dim(rank - 2), nn = x.dim(rank - 1);
    const std::size_t batch = x.numel() / (m * nn);
    Shape out_shape = x.shape();
    std::swap(out_shape[rank - 2], out_shape[rank - 1]);
    std::vector<std::size_t> src(x.numel());
    std::size_t o = 0;
    for (std::size_t bt = 0; bt < batch; ++bt) {
        for (std::size_t j = 0; j < nn; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                src[o++] = bt * m * nn + i * nn + j;
            }
        }
    }
    return permute_flat("transpose_last2", x, std::move(out_shape), std::move(src));
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
    require_rank(x, 4, "pixel_unshuffle");
    require(r >= 1 && x.dim(2) % r == 0 && x.dim(3) % r == 0,
            "pixel_unshuffle: H and W must be divisible by " + std::to_string(r) + ", got " +
                shape_str(x.shape()));
    Shape out{x.dim(0), x.dim(1) * r * r, x.dim(2) / r, x.dim(3) / r};
    return permute_flat("pixel_unshuffle", x, std::move(out), unshuffle_map(x.shape(), r));
}

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
    require_rank(x, 4, "pixel_shuffle");
    require(r >= 1 && x.dim(1) % (r * r) == 0,
            "pixel_shuffle: C must be divisible by " + std::to_string(r * r) + ", got " +
                shape_str(x.shape()));
    const Shape out{x.dim(0), x.dim(1) / (r * r), x.dim(2) * r, x.dim(3) * r};
    // invert the unshuffle map of the output shape
    const auto fwd = unshuffle_map(out, r);
    std::vector<std::size_t> src(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        src[fwd[i]] = i;
    }
    return permute_flat("pixel_shuffle", x, out, std::move(src));
}

Tensor pixel_resample(const Tensor& x, std::size_t r, ResampleDirection direction) {
    return direction == ResampleDirection::Shuffle ? pixel_shuffle(x, r) : pixel_unshuffle(x, r);
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t hw = x.dim(2) * x.dim(3);
    const auto xd = x.data();
    std::vector<double> out(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            acc += xd[p * hw + i];
        }
        out[p] = acc / static_cast<double>(hw);
    }
    return make_op_result("global_avg_pool", {x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                          [x, planes, hw](const TensorImpl& self) {
                              auto* gx = grad_of(x);
                              if (gx == nullptr) {
                                  return;
                              }
                              const double inv = 1.0 / static_cast<double>(hw);
                              for (std::size_t p = 0; p < planes; ++p) {
                                  const double g = self.grad[p] * inv;
                                  for (std::size_t i = 0; i < hw; ++i) {
                                      (*gx)[p * hw + i] += g;
                                  }
                              }
                          });
}

Tensor channel_slice(const Tensor& x, std::size_t begin, std::size_t count) {
    require(x.rank() >= 2, "channel_slice: rank >= 2 required");
    const std::size_t n = x.dim(0), c = x.dim(1);
    require(count > 0 && begin + count <= c, "channel_slice: range out of bounds for " +
                                                 shape_str(x.shape()));
    const std::size_t s = x.numel() / (n * c);
    Shape out_shape = x.shape();
    out_shape[1] = count;
    std::vector<std::size_t> src(n * count * s);
    std::size_t o = 0;
    for (std::size_t bn = 0; bn < n; ++bn) {
        for (std::size_t ch = 0; ch < count; ++ch) {
            const std::size_t base = (bn * c + begin + ch) * s;
            for (std::size_t p = 0; p < s; ++p) {
                src[o++] = base + p;
            }
        }
    }
    return permute_flat("channel_slice", x, std::move(out_shape), std::move(src));
}

std::pair<Tensor, Tensor> channel_chunk2(const Tensor& x) {
    require(x.rank() >= 2 && x.dim(1) % 2 == 0,
            "channel_chunk2: even channel count required, got " + shape_str(x.shape()));
    const std::size_t half = x.dim(1) / 2;
    return {channel_slice(x, 0, half), channel_slice(x, half, half)};
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.rank() >= 2 && a.rank() == b.rank() && a.dim(0) == b.dim(0),
            "concat_channels: incompatible " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    for (std::size_t i = 2; i < a.rank(); ++i) {
        require(a.dim(i) == b.dim(i), "concat_channels: incompatible " + shape_str(a.shape()) +
                                          " and " + shape_str(b.shape()));
    }
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t s = a.numel() / (n * ca);
    Shape out_shape = a.shape();
    out_shape[1] = ca + cb;
    std::vector<double> out;
    out.reserve(n * (ca + cb) * s);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t bn = 0; bn < n; ++bn) {
        out.insert(out.end(), ad.begin() + bn * ca * s, ad.begin() + (bn + 1) * ca * s);
        out.insert(out.end(), bd.begin() + bn * cb * s, bd.begin() + (bn + 1) * cb * s);
    }
    return make_op_result("concat_channels", std::move(out_shape), std::move(out), {a, b},
                          [a, b, n, ca, cb, s](const TensorImpl& self) {
                              auto* ga = grad_of(a);
                              auto* gb = grad_of(b);
                              for (std::size_t bn = 0; bn < n; ++bn) {
                                  const double* g = self.grad.data() + bn * (ca + cb) * s;
                                  if (ga != nullptr) {
                                      for (std::size_t i = 0; i < ca * s; ++i) {
                                          (*ga)[bn * ca * s + i] += g[i];
                                      }
                                  }
                                  if (gb != nullptr) {
                                      for (std::size_t i = 0; i < cb * s; ++i) {
                                          (*gb)[bn * cb * s + i] += g[ca * s + i];
                                      }
                                  }
                              }
                          });
}

namespace {

enum class Binary { Add, Sub, Mul };

Tensor binary(Binary kind, const char* op, const Tensor& a, const Tensor& b) {
    const auto ad = a.data();
    const auto bd = b.data();
    const bool same = a.shape() == b.shape();
    std::vector<std::size_t> bidx;
    if (!same) {
        bidx = broadcast_index(a.shape(), b.shape(), op);
    }
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double bv = bd[same ? i : bidx[i]];
        switch (kind) {
        case Binary::Add: out[i] = ad[i] + bv; break;
        case Binary::Sub: out[i] = ad[i] - bv; break;
        case Binary::Mul: out[i] = ad[i] * bv; break;
        }
    }
    return make_op_result(
        op, a.shape(), std::move(out), {a, b},
        [a, b, kind, same, bidx = std::move(bidx)](const TensorImpl& self) {
            auto* ga = grad_of(a);
            auto* gb = grad_of(b);
            const auto ad = a.data();
            const auto bd = b.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const std::size_t j = same ? i : bidx[i];
                const double g = self.grad[i];
                switch (kind) {
                case Binary::Add:
                    if (ga) (*ga)[i] += g;
                    if (gb) (*gb)[j] += g;
                    break;
                case Binary::Sub:
                    if (ga) (*ga)[i] += g;
                    if (gb) (*gb)[j] -= g;
                    break;
                case Binary::Mul:
                    if (ga) (*ga)[i] += g * bd[j];
                    if (gb) (*gb)[j] += g * ad[i];
                    break;
                }
            }
        });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::Add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::Sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::Mul, "mul", a, b); }

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) {
        v *= s;
    }
    return make_op_result("scale", a.shape(), std::move(out), {a}, [a, s](const TensorImpl& self) {
        if (auto* ga = grad_of(a)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*ga)[i] += s * self.grad[i];
            }
        }
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) {
        v += s;
    }
    return make_op_result("add_scalar", a.shape(), std::move(out), {a},
                          [a](const TensorImpl& self) {
                              if (auto* ga = grad_of(a)) {
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      (*ga)[i] += self.grad[i];
                                  }
                              }
                          });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    return op == ElementwiseOp::Add ? add(a, b) : mul(a, b);
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, double b) {
    return op == ElementwiseOp::Add ? add_scalar(a, b) : scale(a, b);
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(shape_numel(shape) == x.numel(),
            "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes numel");
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_op_result("reshape", std::move(shape), std::move(out), {x},
                          [x](const TensorImpl& self) {
                              if (auto* gx = grad_of(x)) {
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      (*gx)[i] += self.grad[i];
                                  }
                              }
                          });
}

Tensor l2_normalize_lastdim(const Tensor& x, double eps) {
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.numel() / len;
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = xd.data() + r * len;
        double sq = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            sq += src[i] * src[i];
        }
        norms[r] = std::max(std::sqrt(sq), eps);
        for (std::size_t i = 0; i < len; ++i) {
            out[r * len + i] = src[i] / norms[r];
        }
    }
    return make_op_result(
        "l2_normalize_lastdim", x.shape(), std::move(out), {x},
        [x, len, rows, eps, norms = std::move(norms)](const TensorImpl& self) {
            auto* gx = grad_of(x);
            if (gx == nullptr) {
                return;
            }
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.data.data() + r * len;
                const double* g = self.grad.data() + r * len;
                double* dst = gx->data() + r * len;
                if (norms[r] <= eps) {
                    for (std::size_t i = 0; i < len; ++i) {
                        dst[i] += g[i] / eps;
                    }
                    continue;
                }
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i) {
                    dot += g[i] * y[i];
                }
                for (std::size_t i = 0; i < len; ++i) {
                    dst[i] += (g[i] - y[i] * dot) / norms[r];
                }
            }
        });
}

Tensor reciprocal_clamped(const Tensor& x, double min_abs) {
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xd[i];
        out[i] = std::abs(v) >= min_abs ? 1.0 / v : (v < 0.0 ? -1.0 / min_abs : 1.0 / min_abs);
    }
    return make_op_result("reciprocal_clamped", x.shape(), std::move(out), {x},
                          [x, min_abs](const TensorImpl& self) {
                              auto* gx = grad_of(x);
                              if (gx == nullptr) {
                                  return;
                              }
                              const auto xd = x.data();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                  if (std::abs(xd[i]) >= min_abs) {
                                      (*gx)[i] -= self.grad[i] / (xd[i] * xd[i]);
                                  }
                              }
                          });
}

Tensor log(const Tensor& x) {
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::log(xd[i]);
    }
    return make_op_result("log", x.shape(), std::move(out), {x}, [x](const TensorImpl& self) {
        if (auto* gx = grad_of(x)) {
            const auto xd = x.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*gx)[i] += self.grad[i] / xd[i];
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) {
        acc += v;
    }
    return make_op_result("sum", {1}, {acc}, {x}, [x](const TensorImpl& self) {
        if (auto* gx = grad_of(x)) {
            for (double& g : *gx) {
                g += self.grad[0];
            }
        }
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

} // namespace captnet
