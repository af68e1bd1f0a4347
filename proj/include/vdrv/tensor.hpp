#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vdrv/errors.hpp"
#include "vdrv/rng.hpp"

namespace vdrv {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major f64 tensor and tape node in one. A node produced by an op
// keeps shared ownership of its parents and a closure that pushes its
// gradient to them; backward() runs the closures in reverse topological
// order, so every node's grad is complete before it is propagated.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated on demand, same length as data
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return rank() >= 2 ? shape[1] : 1; }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

    void ensure_grad();
    void zero_grad() { grad.assign(grad.size(), 0.0); }

    static TensorPtr zeros(std::vector<int> shape);
    static TensorPtr full(std::vector<int> shape, double v);
    static TensorPtr from(std::vector<int> shape, std::vector<double> values);
    static TensorPtr randn(std::vector<int> shape, Rng& rng, double stddev);
    static TensorPtr scalar(double v);
};

std::string shape_str(const Tensor& t);
size_t shape_numel(const std::vector<int>& shape);

// Runs reverse-mode accumulation from a scalar loss. Parameter grads
// accumulate across calls (minibatching); fresh graph nodes start at zero.
void backward(const TensorPtr& loss);

namespace ag {

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr silu(const TensorPtr& a);

// Per-row zero mean / unit variance (eps inside the sqrt), scaled by gain.
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, double eps = 1e-6);

// Adds the mask (entries 0 or -1e9, no gradient) to the scores and applies a
// row softmax. A row with every position disallowed is a contract violation.
TensorPtr masked_softmax(const TensorPtr& scores, const TensorPtr& mask);
TensorPtr softmax_rows(const TensorPtr& scores);

TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& a, int r0, int r1);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);

// Row lookup: out[i] = table[ids[i]]. Gradient scatters into the table.
TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids);

// out = base, with parts[g][r] added at row idx[g][r] (residual merge).
TensorPtr merge_rows(const TensorPtr& base, const std::vector<TensorPtr>& parts,
                     const std::vector<std::vector<int>>& idx);

TensorPtr mean_rows(const TensorPtr& a);  // 1 x d
TensorPtr sum_all(const TensorPtr& a);    // scalar
TensorPtr sum_sq(const TensorPtr& a);     // scalar, sum of squares

// Mean squared error against a constant target (no grad to target).
TensorPtr mse(const TensorPtr& pred, const TensorPtr& target);

// Mean over masked rows of -log softmax(logits[i])[targets[i]].
TensorPtr cross_entropy_mean(const TensorPtr& logits, const std::vector<int>& targets,
                             const std::vector<bool>& mask);

double value(const TensorPtr& t);

}  // namespace ag

}  // namespace vdrv
