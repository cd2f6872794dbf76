#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vred/tensor.hpp"

namespace vred::ad {

/// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Define-by-run reverse-mode tape over dense tensors. Nodes are appended in
/// topological order by construction; backward() runs a single reverse sweep
/// and accumulates gradients additively across fan-out.
///
/// A tape is single-threaded during construction and backward. It is rebuilt
/// for every training step, so nodes own their values outright.
class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Tracked input. NaN/Inf values are rejected at this boundary.
    Var leaf(Tensor value);
    /// Untracked input: participates in forward values, receives no gradient.
    Var constant(Tensor value);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward() loss w.r.t. this node.
    const Tensor& grad(Var v) const;

    // elementwise, shapes must match
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    /// a*x + b applied elementwise.
    Var affine(Var x, double a, double b);
    Var neg(Var x) { return affine(x, -1.0, 0.0); }

    Var sigmoid(Var x);
    Var tanh(Var x);
    /// Natural log; every input must be strictly positive.
    Var log(Var x);
    Var square(Var x);

    /// Clamp into [lo, hi]; gradient is zero where the clamp is active.
    Var clamp(Var x, double lo, double hi);
    /// max(x, m) elementwise; gradient zero where the floor is active.
    Var max_scalar(Var x, double m);

    /// a[m x k] * b[k x n] -> [m x n], or a[m x k] * b[k] -> [m].
    Var matmul(Var a, Var b);

    /// Sum of all entries, scalar result.
    Var sum(Var x);

    /// x[r x c] with b[r] added to every column. The only broadcast in the
    /// kernel.
    Var bias_add(Var x, Var b);

    /// Flatten-and-concatenate 1-D vectors.
    Var concat(std::span<const Var> parts);
    Var concat(Var a, Var b);

    /// Shape change only; data order is preserved, gradient passes through.
    Var reshape(Var x, std::vector<std::size_t> shape);

    /// Column block [begin, end) of a [rows x cols] matrix.
    Var slice_cols(Var x, std::size_t begin, std::size_t end);
    /// Inverse of slice_cols: stitch [rows x w] blocks into [rows x n*w].
    Var concat_cols(std::span<const Var> blocks);

    /// x[C_in x L] convolved with kernels[C_out x C_in x K] (cross-correlation
    /// with explicit zero padding). Output length (L+pl+pr-K)/stride + 1;
    /// the division must be exact.
    Var conv1d(Var x, Var kernels, std::size_t stride, std::size_t pad_left,
               std::size_t pad_right);

    /// Exact adjoint of conv1d. kernels[C_in x C_out x K]; output length
    /// (L-1)*stride + K - cl - cr.
    Var conv1d_transposed(Var x, Var kernels, std::size_t stride,
                          std::size_t crop_left, std::size_t crop_right);

    /// p + c with c held constant: the Bernoulli reparameterization carrier.
    /// Gradient w.r.t. p is the identity.
    Var add_detached(Var p, Tensor c);

    /// Reverse sweep from a scalar loss node. May be called once per tape.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

   private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily by backward()
        std::function<void(Tape&)> back;
    };

    Var push(Tensor value, std::function<void(Tape&)> back);
    Tensor& grad_mut(Var v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    void check(Var v) const;

    std::vector<Node> nodes_;
};

/// Max over coordinates of |g_ad - g_fd| / max(1e-4, |g_ad| + |g_fd|), where
/// g_fd is the central difference of f and g_ad the supplied analytic
/// gradient. f is re-evaluated with param perturbed in place; NaN coordinates
/// count as failures (returned error is +inf).
double finite_difference_check(const std::function<double()>& f, Tensor& param,
                               const Tensor& analytic_grad, double eps = 1e-5);

}  // namespace vred::ad
