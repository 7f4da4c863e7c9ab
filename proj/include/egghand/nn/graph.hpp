#pragma once

#include <functional>
#include <string>
#include <vector>

#include "egghand/nn/tensor.hpp"

namespace egghand::nn {

enum class Op {
    Constant,
    Parameter,
    Add,
    Subtract,
    Multiply,
    MatMul,
    Transpose,
    Reshape,
    Concat,
    Slice,
    Softmax,
    LayerNorm,
    Gelu,
    MaskedMean,
    Scale,
    Sum,
};

const char* to_string(Op op);

/// Keeps large tensor buffers on the heap between graphs (glibc only; no-op elsewhere).
/// Graph-per-sample training otherwise pays an mmap/munmap round trip per large tensor.
void tune_allocator();

/// Handle into a Graph. Only meaningful for the graph that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Tape-based reverse-mode graph. Nodes are appended in topological order;
/// backward walks them in reverse id order so accumulation is deterministic.
///
/// Binary elementwise ops broadcast the right operand when its shape equals
/// the trailing axes of the left operand (e.g. a bias row over a matrix).
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Var constant(Tensor value);
    /// Leaf whose adjoint is tracked when `track` is set.
    Var parameter(Tensor value, bool track = true);
    /// Same, without copying; `value` must outlive the graph.
    Var parameter_ref(const Tensor& value, bool track = true);

    Var add(Var a, Var b);
    Var subtract(Var a, Var b);
    Var multiply(Var a, Var b);
    /// a: [..., K] treated as rows x K; b: [K, N]. Result [..., N].
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var reshape(Var a, Shape shape);
    Var concat(const std::vector<Var>& parts, std::size_t axis);
    Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
    Var softmax(Var a);
    Var layer_norm(Var a, double eps = 1e-5);
    Var gelu(Var a);
    /// Mean of a over entries where mask != 0; 0 when the mask is empty.
    Var masked_mean(Var a, const Tensor& mask);
    Var scale(Var a, double s);
    Var sum(Var a);

    const Tensor& value(Var v) const;
    /// Adjoint after backward(); empty tensor when the node is not tracked.
    const Tensor& grad(Var v) const;
    /// Moves the adjoint out of the graph.
    Tensor take_grad(Var v);
    bool tracked(Var v) const;
    Op op(Var v) const;
    const std::vector<int>& inputs(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Seeds the adjoint of `out` (shape must match) and back-propagates.
    void backward(Var out, const Tensor& seed);
    /// Scalar outputs: seed 1.
    void backward(Var out);

private:
    struct Node {
        Op op = Op::Constant;
        Tensor value;
        const Tensor* ref = nullptr;
        Tensor grad;
        std::vector<int> inputs;
        bool tracked = false;
        std::function<void(Graph&, int)> backward;
        const Tensor& val() const { return ref ? *ref : value; }
    };

    Var push(Op op, Tensor value, std::vector<int> inputs,
             std::function<void(Graph&, int)> backward);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor& grad_buffer(int id);
    Var binary(Op op, Var a, Var b);

    std::vector<Node> nodes_;
};

}  // namespace egghand::nn
