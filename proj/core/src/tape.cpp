#include "vred/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vred/errors.hpp"

namespace vred::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                             " vs " + shape_str(b.shape));
    }
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw InternalError("tape: invalid node handle");
    }
}

Var Tape::leaf(Tensor value) {
    if (!value.all_finite()) {
        throw DomainError("tape: non-finite value at graph boundary");
    }
    return push(std::move(value), nullptr);
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) {
        throw DomainError("tape: non-finite constant at graph boundary");
    }
    return push(std::move(value), nullptr);
}

const Tensor& Tape::value(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
    check(v);
    const Tensor& g = nodes_[static_cast<std::size_t>(v.id)].grad;
    if (g.data.empty() && nodes_[static_cast<std::size_t>(v.id)].value.numel() != 0) {
        throw InternalError("tape: gradient requested before backward()");
    }
    return g;
}

Var Tape::add(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "add");
    Tensor out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, a, b](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "sub");
    Tensor out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, a, b](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "mul");
    Tensor out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, a, b](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "div");
    Tensor out = va;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= vb[i];
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, a, b](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i] / vb[i];
            gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
    });
}

Var Tape::affine(Var x, double a, double b) {
    Tensor out = value(x);
    for (double& v : out.data) v = a * v + b;
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x, a](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += a * g[i];
    });
}

Var Tape::sigmoid(Var x) {
    Tensor out = value(x);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var Tape::tanh(Var x) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::tanh(v);
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var Tape::log(Var x) {
    Tensor out = value(x);
    for (double& v : out.data) {
        if (v <= 0.0) {
            throw DomainError("log: non-positive input " + std::to_string(v));
        }
        v = std::log(v);
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& vx = t.value(x);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] / vx[i];
    });
}

Var Tape::square(Var x) {
    Tensor out = value(x);
    for (double& v : out.data) v = v * v;
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& vx = t.value(x);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += 2.0 * vx[i] * g[i];
    });
}

Var Tape::clamp(Var x, double lo, double hi) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x, lo, hi](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& vx = t.value(x);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (vx[i] >= lo && vx[i] <= hi) gx[i] += g[i];
        }
    });
}

Var Tape::max_scalar(Var x, double m) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::max(v, m);
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x, m](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& vx = t.value(x);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (vx[i] >= m) gx[i] += g[i];
        }
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.shape.size() != 2) {
        throw DimensionError("matmul: left operand must be a matrix, got " +
                             shape_str(va.shape));
    }
    const std::size_t m = va.shape[0];
    const std::size_t k = va.shape[1];
    const bool vec = vb.shape.size() == 1;
    const std::size_t kb = vec ? vb.shape[0] : (vb.shape.size() == 2 ? vb.shape[0] : 0);
    const std::size_t n = vec ? 1 : (vb.shape.size() == 2 ? vb.shape[1] : 0);
    if ((vb.shape.size() != 1 && vb.shape.size() != 2) || kb != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(va.shape) +
                             " vs " + shape_str(vb.shape));
    }
    Tensor out = vec ? Tensor::zeros({m}) : Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = va.data.data() + i * k;
        double* orow = out.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = vb.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, a, b, m, k, n](Tape& t) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * vb[p * n + j];
                ga[i * k + p] += acc;
            }
        }
        // dB = A^T * G
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t i = 0; i < m; ++i) {
                const double av = va[i * k + p];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
            }
        }
    });
}

Var Tape::sum(Var x) {
    const Tensor& vx = value(x);
    double acc = 0.0;
    for (double v : vx.data) acc += v;
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(Tensor::from_scalar(acc), [self, x](Tape& t) {
        const double g = t.grad(self)[0];
        Tensor& gx = t.grad_mut(x);
        for (double& v : gx.data) v += g;
    });
}

Var Tape::bias_add(Var x, Var b) {
    const Tensor& vx = value(x);
    const Tensor& vb = value(b);
    if (vx.shape.size() != 2 || vb.shape.size() != 1 || vb.shape[0] != vx.shape[0]) {
        throw DimensionError("bias_add: x " + shape_str(vx.shape) + " bias " +
                             shape_str(vb.shape));
    }
    const std::size_t rows = vx.shape[0];
    const std::size_t cols = vx.shape[1];
    Tensor out = vx;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += vb[r];
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x, b, rows, cols](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                gx[r * cols + c] += g[r * cols + c];
                acc += g[r * cols + c];
            }
            gb[r] += acc;
        }
    });
}

Var Tape::concat(std::span<const Var> parts) {
    std::vector<double> out;
    std::vector<Var> ids(parts.begin(), parts.end());
    std::vector<std::size_t> lens;
    for (Var p : parts) {
        const Tensor& v = value(p);
        lens.push_back(v.numel());
        out.insert(out.end(), v.data.begin(), v.data.end());
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(Tensor::from_vector(std::move(out)),
                [self, ids = std::move(ids), lens = std::move(lens)](Tape& t) {
                    const Tensor& g = t.grad(self);
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                        Tensor& gp = t.grad_mut(ids[p]);
                        for (std::size_t i = 0; i < lens[p]; ++i) gp[i] += g[off + i];
                        off += lens[p];
                    }
                });
}

Var Tape::concat(Var a, Var b) {
    const Var parts[2] = {a, b};
    return concat(std::span<const Var>(parts, 2));
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
    const Tensor& vx = value(x);
    if (shape_numel(shape) != vx.numel()) {
        throw DimensionError("reshape: " + shape_str(vx.shape) + " to " + shape_str(shape));
    }
    Tensor out(std::move(shape), vx.data);
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Tensor& vx = value(x);
    if (vx.shape.size() != 2 || end > vx.shape[1] || begin >= end) {
        throw DimensionError("slice_cols: bad range on " + shape_str(vx.shape));
    }
    const std::size_t rows = vx.shape[0];
    const std::size_t cols = vx.shape[1];
    const std::size_t w = end - begin;
    Tensor out = Tensor::zeros({rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < w; ++c) out[r * w + c] = vx[r * cols + begin + c];
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, x, rows, cols, begin, w](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
        }
    });
}

Var Tape::concat_cols(std::span<const Var> blocks) {
    if (blocks.empty()) throw DimensionError("concat_cols: no blocks");
    const std::size_t rows = value(blocks[0]).shape[0];
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (Var b : blocks) {
        const Tensor& v = value(b);
        if (v.shape.size() != 2 || v.shape[0] != rows) {
            throw DimensionError("concat_cols: inconsistent block shape " +
                                 shape_str(v.shape));
        }
        widths.push_back(v.shape[1]);
        total += v.shape[1];
    }
    Tensor out = Tensor::zeros({rows, total});
    std::size_t off = 0;
    for (std::size_t p = 0; p < blocks.size(); ++p) {
        const Tensor& v = value(blocks[p]);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < widths[p]; ++c) {
                out[r * total + off + c] = v[r * widths[p] + c];
            }
        }
        off += widths[p];
    }
    std::vector<Var> ids(blocks.begin(), blocks.end());
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out),
                [self, ids = std::move(ids), widths = std::move(widths), rows, total](Tape& t) {
                    const Tensor& g = t.grad(self);
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                        Tensor& gp = t.grad_mut(ids[p]);
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < widths[p]; ++c) {
                                gp[r * widths[p] + c] += g[r * total + off + c];
                            }
                        }
                        off += widths[p];
                    }
                });
}

Var Tape::conv1d(Var x, Var kernels, std::size_t stride, std::size_t pad_left,
                 std::size_t pad_right) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(kernels);
    if (vx.shape.size() != 2 || vw.shape.size() != 3 || vw.shape[1] != vx.shape[0]) {
        throw DimensionError("conv1d: x " + shape_str(vx.shape) + " kernels " +
                             shape_str(vw.shape));
    }
    const std::size_t cin = vx.shape[0];
    const std::size_t len = vx.shape[1];
    const std::size_t cout = vw.shape[0];
    const std::size_t ksz = vw.shape[2];
    const std::size_t padded = len + pad_left + pad_right;
    if (padded < ksz || (padded - ksz) % stride != 0) {
        throw ConfigError("conv1d: length " + std::to_string(len) + " with pad " +
                          std::to_string(pad_left) + "+" + std::to_string(pad_right) +
                          " incompatible with kernel " + std::to_string(ksz) +
                          " stride " + std::to_string(stride));
    }
    const std::size_t lout = (padded - ksz) / stride + 1;
    Tensor out = Tensor::zeros({cout, lout});
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t j = 0; j < lout; ++j) {
            double acc = 0.0;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* xr = vx.data.data() + ci * len;
                const double* wr = vw.data.data() + (o * cin + ci) * ksz;
                for (std::size_t k = 0; k < ksz; ++k) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(j * stride + k) -
                        static_cast<std::ptrdiff_t>(pad_left);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(len)) continue;
                    acc += wr[k] * xr[ix];
                }
            }
            out[o * lout + j] = acc;
        }
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out),
                [self, x, kernels, stride, pad_left, cin, len, cout, ksz, lout](Tape& t) {
                    const Tensor& g = t.grad(self);
                    const Tensor& vx = t.value(x);
                    const Tensor& vw = t.value(kernels);
                    Tensor& gx = t.grad_mut(x);
                    Tensor& gw = t.grad_mut(kernels);
                    for (std::size_t o = 0; o < cout; ++o) {
                        for (std::size_t j = 0; j < lout; ++j) {
                            const double gv = g[o * lout + j];
                            if (gv == 0.0) continue;
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                const double* xr = vx.data.data() + ci * len;
                                const double* wr = vw.data.data() + (o * cin + ci) * ksz;
                                double* gxr = gx.data.data() + ci * len;
                                double* gwr = gw.data.data() + (o * cin + ci) * ksz;
                                for (std::size_t k = 0; k < ksz; ++k) {
                                    const std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(j * stride + k) -
                                        static_cast<std::ptrdiff_t>(pad_left);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(len))
                                        continue;
                                    gxr[ix] += gv * wr[k];
                                    gwr[k] += gv * xr[ix];
                                }
                            }
                        }
                    }
                });
}

Var Tape::conv1d_transposed(Var x, Var kernels, std::size_t stride,
                            std::size_t crop_left, std::size_t crop_right) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(kernels);
    if (vx.shape.size() != 2 || vw.shape.size() != 3 || vw.shape[0] != vx.shape[0]) {
        throw DimensionError("conv1d_transposed: x " + shape_str(vx.shape) + " kernels " +
                             shape_str(vw.shape));
    }
    const std::size_t cin = vx.shape[0];
    const std::size_t len = vx.shape[1];
    const std::size_t cout = vw.shape[1];
    const std::size_t ksz = vw.shape[2];
    const std::size_t full = (len - 1) * stride + ksz;
    if (crop_left + crop_right >= full) {
        throw ConfigError("conv1d_transposed: crop " + std::to_string(crop_left) + "+" +
                          std::to_string(crop_right) + " exceeds reconstructable length " +
                          std::to_string(full));
    }
    const std::size_t lout = full - crop_left - crop_right;
    Tensor out = Tensor::zeros({cout, lout});
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t j = 0; j < len; ++j) {
            const double xv = vx[ci * len + j];
            if (xv == 0.0) continue;
            for (std::size_t co = 0; co < cout; ++co) {
                const double* wr = vw.data.data() + (ci * cout + co) * ksz;
                double* orow = out.data.data() + co * lout;
                for (std::size_t k = 0; k < ksz; ++k) {
                    const std::ptrdiff_t m =
                        static_cast<std::ptrdiff_t>(j * stride + k) -
                        static_cast<std::ptrdiff_t>(crop_left);
                    if (m < 0 || m >= static_cast<std::ptrdiff_t>(lout)) continue;
                    orow[m] += xv * wr[k];
                }
            }
        }
    }
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out),
                [self, x, kernels, stride, crop_left, cin, len, cout, ksz, lout](Tape& t) {
                    const Tensor& g = t.grad(self);
                    const Tensor& vx = t.value(x);
                    const Tensor& vw = t.value(kernels);
                    Tensor& gx = t.grad_mut(x);
                    Tensor& gw = t.grad_mut(kernels);
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        for (std::size_t j = 0; j < len; ++j) {
                            const double xv = vx[ci * len + j];
                            double gxa = 0.0;
                            for (std::size_t co = 0; co < cout; ++co) {
                                const double* wr = vw.data.data() + (ci * cout + co) * ksz;
                                double* gwr = gw.data.data() + (ci * cout + co) * ksz;
                                const double* grow = g.data.data() + co * lout;
                                for (std::size_t k = 0; k < ksz; ++k) {
                                    const std::ptrdiff_t m =
                                        static_cast<std::ptrdiff_t>(j * stride + k) -
                                        static_cast<std::ptrdiff_t>(crop_left);
                                    if (m < 0 || m >= static_cast<std::ptrdiff_t>(lout))
                                        continue;
                                    gxa += grow[m] * wr[k];
                                    gwr[k] += grow[m] * xv;
                                }
                            }
                            gx[ci * len + j] += gxa;
                        }
                    }
                });
}

Var Tape::add_detached(Var p, Tensor c) {
    const Tensor& vp = value(p);
    require_same_shape(vp, c, "add_detached");
    Tensor out = vp;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c[i];
    Var self{static_cast<std::int32_t>(nodes_.size())};
    return push(std::move(out), [self, p](Tape& t) {
        const Tensor& g = t.grad(self);
        Tensor& gp = t.grad_mut(p);
        for (std::size_t i = 0; i < g.numel(); ++i) gp[i] += g[i];
    });
}

void Tape::backward(Var loss) {
    check(loss);
    const Tensor& lv = value(loss);
    if (lv.numel() != 1) {
        throw InternalError("backward: loss must be scalar, got " + shape_str(lv.shape));
    }
    for (Node& n : nodes_) {
        n.grad = Tensor(n.value.shape, std::vector<double>(n.value.numel(), 0.0));
    }
    grad_mut(loss)[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.back) continue;
        bool nonzero = false;
        for (double v : n.grad.data) {
            if (v != 0.0) {
                nonzero = true;
                break;
            }
        }
        if (nonzero) n.back(*this);
    }
}

double finite_difference_check(const std::function<double()>& f, Tensor& param,
                               const Tensor& analytic_grad, double eps) {
    if (!param.same_shape(analytic_grad)) {
        throw DimensionError("finite_difference_check: gradient shape mismatch");
    }
    double max_err = 0.0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double saved = param[i];
        param[i] = saved + eps;
        const double fp = f();
        param[i] = saved - eps;
        const double fm = f();
        param[i] = saved;
        const double fd = (fp - fm) / (2.0 * eps);
        const double ga = analytic_grad[i];
        if (!std::isfinite(fd) || !std::isfinite(ga)) {
            return std::numeric_limits<double>::infinity();
        }
        // The denominator floor absorbs central-difference roundoff noise
        // (~|f| * 2^-53 / eps) on coordinates whose true gradient is ~0;
        // below the floor the comparison is effectively absolute.
        const double err = std::abs(ga - fd) / std::max(1e-4, std::abs(ga) + std::abs(fd));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace vred::ad
