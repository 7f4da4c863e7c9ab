#include "egghand/nn/graph.hpp"

#include <Eigen/Core>
#include <cmath>
#include <mutex>
#include <numbers>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "egghand/error.hpp"

namespace egghand::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool is_trailing(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// outer x axis x inner decomposition used by concat and slice.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t length = 0;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

// tanh through the vectorized exp: 1 - 2 / (exp(2z) + 1), exact at +-inf.
Eigen::ArrayXd gelu_tanh(const ConstArrayMap& x) {
    const Eigen::ArrayXd z = kGeluC * (x + kGeluA * x.cube());
    return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

}  // namespace

const char* to_string(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Parameter: return "parameter";
        case Op::Add: return "add";
        case Op::Subtract: return "subtract";
        case Op::Multiply: return "multiply";
        case Op::MatMul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Reshape: return "reshape";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Softmax: return "softmax";
        case Op::LayerNorm: return "layer_norm";
        case Op::Gelu: return "gelu";
        case Op::MaskedMean: return "masked_mean";
        case Op::Scale: return "scale";
        case Op::Sum: return "sum";
    }
    return "unknown";
}

void tune_allocator() {
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 512 << 20);
    });
#endif
}

Var Graph::push(Op op, Tensor value, std::vector<int> inputs,
                std::function<void(Graph&, int)> backward) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (int in : n.inputs) n.tracked = n.tracked || node(in).tracked;
    if (n.tracked) n.backward = std::move(backward);
    if (nodes_.empty()) nodes_.reserve(512);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buffer(int id) {
    Node& n = node(id);
    if (n.grad.size() != n.val().size() || n.grad.shape() != n.val().shape())
        n.grad = Tensor(n.val().shape(), 0.0);
    return n.grad;
}

Var Graph::constant(Tensor value) { return push(Op::Constant, std::move(value), {}, nullptr); }

Var Graph::parameter(Tensor value, bool track) {
    Var v = push(Op::Parameter, std::move(value), {}, nullptr);
    node(v.id).tracked = track;
    return v;
}

Var Graph::parameter_ref(const Tensor& value, bool track) {
    Var v = push(Op::Parameter, Tensor{}, {}, nullptr);
    node(v.id).ref = &value;
    node(v.id).tracked = track;
    return v;
}

const Tensor& Graph::value(Var v) const { return node(v.id).val(); }
const Tensor& Graph::grad(Var v) const { return node(v.id).grad; }
Tensor Graph::take_grad(Var v) { return std::move(node(v.id).grad); }
bool Graph::tracked(Var v) const { return node(v.id).tracked; }
Op Graph::op(Var v) const { return node(v.id).op; }
const std::vector<int>& Graph::inputs(Var v) const { return node(v.id).inputs; }

Var Graph::binary(Op op, Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!is_trailing(va.shape(), vb.shape()))
        fail(ErrorKind::Validation, std::string(to_string(op)) + ": incompatible shapes " +
                                        shape_string(va.shape()) + " and " +
                                        shape_string(vb.shape()));
    Tensor out(va.shape());
    const std::size_t n = va.size();
    const std::size_t m = vb.size();
    const double* pa = va.data();
    const double* pb = vb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; i += m) {
        switch (op) {
            case Op::Add:
                for (std::size_t k = 0; k < m; ++k) po[i + k] = pa[i + k] + pb[k];
                break;
            case Op::Subtract:
                for (std::size_t k = 0; k < m; ++k) po[i + k] = pa[i + k] - pb[k];
                break;
            default:
                for (std::size_t k = 0; k < m; ++k) po[i + k] = pa[i + k] * pb[k];
                break;
        }
    }
    const int ia = a.id, ib = b.id;
    return push(op, std::move(out), {ia, ib}, [op, ia, ib, n, m](Graph& g, int self) {
        const double* go = g.node(self).grad.data();
        if (g.node(ia).tracked) {
            double* ga = g.grad_buffer(ia).data();
            if (op == Op::Multiply) {
                const double* pb = g.node(ib).val().data();
                for (std::size_t i = 0; i < n; i += m)
                    for (std::size_t k = 0; k < m; ++k) ga[i + k] += go[i + k] * pb[k];
            } else {
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
            }
        }
        if (g.node(ib).tracked) {
            double* gb = g.grad_buffer(ib).data();
            const double* pa = g.node(ia).val().data();
            for (std::size_t i = 0; i < n; i += m) {
                switch (op) {
                    case Op::Add:
                        for (std::size_t k = 0; k < m; ++k) gb[k] += go[i + k];
                        break;
                    case Op::Subtract:
                        for (std::size_t k = 0; k < m; ++k) gb[k] -= go[i + k];
                        break;
                    default:
                        for (std::size_t k = 0; k < m; ++k) gb[k] += go[i + k] * pa[i + k];
                        break;
                }
            }
        }
    });
}

Var Graph::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Graph::subtract(Var a, Var b) { return binary(Op::Subtract, a, b); }
Var Graph::multiply(Var a, Var b) { return binary(Op::Multiply, a, b); }

Var Graph::matmul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (vb.rank() != 2 || va.rank() < 1 || va.cols() != vb.dim(0))
        fail(ErrorKind::Validation, "matmul: incompatible shapes " + shape_string(va.shape()) +
                                        " and " + shape_string(vb.shape()));
    const auto rows = static_cast<Eigen::Index>(va.rows());
    const auto inner = static_cast<Eigen::Index>(va.cols());
    const auto cols = static_cast<Eigen::Index>(vb.dim(1));
    Shape out_shape = va.shape();
    out_shape.back() = vb.dim(1);
    Tensor out(out_shape);
    MapMat(out.data(), rows, cols).noalias() =
        ConstMapMat(va.data(), rows, inner) * ConstMapMat(vb.data(), inner, cols);
    const int ia = a.id, ib = b.id;
    return push(Op::MatMul, std::move(out), {ia, ib},
                [ia, ib, rows, inner, cols](Graph& g, int self) {
                    ConstMapMat go(g.node(self).grad.data(), rows, cols);
                    if (g.node(ia).tracked) {
                        MapMat ga(g.grad_buffer(ia).data(), rows, inner);
                        ga.noalias() +=
                            go * ConstMapMat(g.node(ib).val().data(), inner, cols).transpose();
                    }
                    if (g.node(ib).tracked) {
                        MapMat gb(g.grad_buffer(ib).data(), inner, cols);
                        gb.noalias() +=
                            ConstMapMat(g.node(ia).val().data(), rows, inner).transpose() * go;
                    }
                });
}

Var Graph::transpose(Var a) {
    const Tensor& va = value(a);
    if (va.rank() != 2)
        fail(ErrorKind::Validation, "transpose: expected rank 2, got " + shape_string(va.shape()));
    const auto r = static_cast<Eigen::Index>(va.dim(0));
    const auto c = static_cast<Eigen::Index>(va.dim(1));
    Tensor out(Shape{va.dim(1), va.dim(0)});
    MapMat(out.data(), c, r) = ConstMapMat(va.data(), r, c).transpose();
    const int ia = a.id;
    return push(Op::Transpose, std::move(out), {ia}, [ia, r, c](Graph& g, int self) {
        MapMat(g.grad_buffer(ia).data(), r, c) +=
            ConstMapMat(g.node(self).grad.data(), c, r).transpose();
    });
}

Var Graph::reshape(Var a, Shape shape) {
    Tensor out = value(a).reshaped(std::move(shape));
    const int ia = a.id;
    return push(Op::Reshape, std::move(out), {ia}, [ia](Graph& g, int self) {
        double* ga = g.grad_buffer(ia).data();
        const Tensor& go = g.node(self).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
}

Var Graph::concat(const std::vector<Var>& parts, std::size_t axis) {
    require(!parts.empty(), "concat: no inputs");
    const Shape& first = value(parts[0]).shape();
    require(axis < first.size(), "concat: axis out of range for " + shape_string(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (Var p : parts) {
        const Shape& s = value(p).shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i)
            if (i != axis && s[i] != first[i]) ok = false;
        if (!ok)
            fail(ErrorKind::Validation,
                 "concat: incompatible shapes " + shape_string(first) + " and " + shape_string(s));
        out_shape[axis] += s[axis];
    }
    Tensor out(out_shape);
    const AxisSplit os = split_at(out_shape, axis);
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor& v = value(p);
        const std::size_t block = v.shape()[axis] * os.inner;
        for (std::size_t o = 0; o < os.outer; ++o)
            std::copy_n(v.data() + o * block, block,
                        out.data() + o * os.length * os.inner + offset * os.inner);
        ids.push_back(p.id);
        offsets.push_back(offset);
        offset += v.shape()[axis];
    }
    return push(Op::Concat, std::move(out), ids, [ids, offsets, os, axis](Graph& g, int self) {
        const double* go = g.node(self).grad.data();
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!g.node(ids[k]).tracked) continue;
            const std::size_t block = g.node(ids[k]).val().shape()[axis] * os.inner;
            double* gp = g.grad_buffer(ids[k]).data();
            for (std::size_t o = 0; o < os.outer; ++o) {
                const double* src = go + o * os.length * os.inner + offsets[k] * os.inner;
                for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += src[i];
            }
        }
    });
}

Var Graph::slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
    const Tensor& va = value(a);
    require(axis < va.rank(), "slice: axis out of range for " + shape_string(va.shape()));
    require(begin < end && end <= va.shape()[axis],
            "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                ") invalid for " + shape_string(va.shape()));
    const AxisSplit s = split_at(va.shape(), axis);
    Shape out_shape = va.shape();
    out_shape[axis] = end - begin;
    Tensor out(out_shape);
    const std::size_t block = (end - begin) * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(va.data() + o * s.length * s.inner + begin * s.inner, block,
                    out.data() + o * block);
    const int ia = a.id;
    return push(Op::Slice, std::move(out), {ia}, [ia, s, begin, block](Graph& g, int self) {
        const double* go = g.node(self).grad.data();
        double* ga = g.grad_buffer(ia).data();
        for (std::size_t o = 0; o < s.outer; ++o) {
            double* dst = ga + o * s.length * s.inner + begin * s.inner;
            for (std::size_t i = 0; i < block; ++i) dst[i] += go[o * block + i];
        }
    });
}

Var Graph::softmax(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const std::size_t rows = va.rows(), cols = va.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = va.data() + r * cols;
        double* y = out.data() + r * cols;
        double mx = x[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        const auto n = static_cast<Eigen::Index>(cols);
        ArrayMap row(y, n);
        row = (ConstArrayMap(x, n) - mx).exp();
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += y[c];
        row /= total;
    }
    const int ia = a.id;
    return push(Op::Softmax, std::move(out), {ia}, [ia, rows, cols](Graph& g, int self) {
        const double* y = g.node(self).val().data();
        const double* go = g.node(self).grad.data();
        double* ga = g.grad_buffer(ia).data();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += go[o + c] * y[o + c];
            for (std::size_t c = 0; c < cols; ++c) ga[o + c] += y[o + c] * (go[o + c] - dot);
        }
    });
}

Var Graph::layer_norm(Var a, double eps) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const std::size_t rows = va.rows(), cols = va.cols();
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = va.data() + r * cols;
        double* y = out.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += x[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) y[c] = (x[c] - mean) * inv_std[r];
    }
    const int ia = a.id;
    return push(Op::LayerNorm, std::move(out), {ia},
                [ia, rows, cols, inv_std = std::move(inv_std)](Graph& g, int self) {
                    const double* y = g.node(self).val().data();
                    const double* go = g.node(self).grad.data();
                    double* ga = g.grad_buffer(ia).data();
                    const double n = static_cast<double>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const std::size_t o = r * cols;
                        double mean_g = 0.0, mean_gy = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) {
                            mean_g += go[o + c];
                            mean_gy += go[o + c] * y[o + c];
                        }
                        mean_g /= n;
                        mean_gy /= n;
                        for (std::size_t c = 0; c < cols; ++c)
                            ga[o + c] += inv_std[r] * (go[o + c] - mean_g - y[o + c] * mean_gy);
                    }
                });
}

Var Graph::gelu(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    const auto n = static_cast<Eigen::Index>(va.size());
    const ConstArrayMap x(va.data(), n);
    ArrayMap(out.data(), n) = 0.5 * x * (1.0 + gelu_tanh(x));
    const int ia = a.id;
    return push(Op::Gelu, std::move(out), {ia}, [ia, n](Graph& g, int self) {
        const ConstArrayMap v(g.node(ia).val().data(), n);
        const ConstArrayMap go(g.node(self).grad.data(), n);
        const Eigen::ArrayXd th = gelu_tanh(v);
        const Eigen::ArrayXd dth = (1.0 - th.square()) * kGeluC * (1.0 + 3.0 * kGeluA * v.square());
        ArrayMap(g.grad_buffer(ia).data(), n) += go * (0.5 * (1.0 + th) + 0.5 * v * dth);
    });
}

Var Graph::masked_mean(Var a, const Tensor& mask) {
    const Tensor& va = value(a);
    if (mask.shape() != va.shape())
        fail(ErrorKind::Validation, "masked_mean: mask shape " + shape_string(mask.shape()) +
                                        " does not match " + shape_string(va.shape()));
    double total = 0.0, count = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (mask[i] != 0.0) {
            total += va[i];
            count += 1.0;
        }
    }
    const double mean = count > 0.0 ? total / count : 0.0;
    const int ia = a.id;
    return push(Op::MaskedMean, Tensor::scalar(mean), {ia}, [ia, mask, count](Graph& g, int self) {
        if (count == 0.0) return;
        const double go = g.node(self).grad.item() / count;
        double* ga = g.grad_buffer(ia).data();
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i] != 0.0) ga[i] += go;
    });
}

Var Graph::scale(Var a, double s) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * s;
    const int ia = a.id;
    return push(Op::Scale, std::move(out), {ia}, [ia, s](Graph& g, int self) {
        const Tensor& go = g.node(self).grad;
        double* ga = g.grad_buffer(ia).data();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    });
}

Var Graph::sum(Var a) {
    const Tensor& va = value(a);
    double total = 0.0;
    for (double v : va.values()) total += v;
    const int ia = a.id;
    return push(Op::Sum, Tensor::scalar(total), {ia}, [ia](Graph& g, int self) {
        const double go = g.node(self).grad.item();
        for (double& v : g.grad_buffer(ia).values()) v += go;
    });
}

void Graph::backward(Var out, const Tensor& seed) {
    Node& root = node(out.id);
    if (seed.shape() != root.val().shape())
        fail(ErrorKind::Validation, "backward: seed shape " + shape_string(seed.shape()) +
                                        " does not match output " +
                                        shape_string(root.val().shape()));
    if (!root.tracked) return;
    Tensor& g = grad_buffer(out.id);
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
    for (int id = out.id; id >= 0; --id) {
        Node& n = node(id);
        if (!n.tracked || !n.backward || n.grad.size() == 0) continue;
        n.backward(*this, id);
    }
}

void Graph::backward(Var out) { backward(out, Tensor(value(out).shape(), 1.0)); }

}  // namespace egghand::nn
