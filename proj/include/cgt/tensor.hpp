#pragma once

// Dense row-major float64 tensors with tape-based reverse-mode autodiff.
//
// A Tensor is a cheap handle to a shared node. Operations on tensors that
// require gradients record their parents and a backward closure; calling
// backward() on a scalar result topologically orders the recorded graph and
// propagates gradients into every leaf with requires_grad set. Leaf
// gradients accumulate across backward() calls until zero_grad().
//
// Broadcasting follows the usual right-aligned rule: trailing axes are
// matched, and an axis of size 1 (or a missing leading axis) stretches.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cgt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return parents.empty(); }
    std::vector<double>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const;
    // Mutable access is only meaningful on leaves (parameters, inputs).
    std::span<double> data_mut();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    // Copy of the values with no history.
    Tensor detach() const;

    const detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> node);

private:
    std::shared_ptr<detail::Node> node_;
};

// Disables recording for the lifetime of the guard (thread-local).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Reverse topological record of the nodes reachable from a scalar root.
/// Each node that requires a gradient appears exactly once, after all of
/// its parents.
class ComputationTape {
public:
    static ComputationTape record(const Tensor& root);

    std::size_t size() const { return order_.size(); }
    const std::vector<detail::Node*>& order() const { return order_; }

    // Propagate d(root)/d(node) through every recorded node.
    void backward();

private:
    std::shared_ptr<detail::Node> root_;
    std::vector<detail::Node*> order_;
};

// Throws ContractError unless `scalar` holds exactly one element and has
// recorded history or is itself a gradient leaf.
void backward(const Tensor& scalar);

enum class ElementwiseKind { add, subtract, hadamard };

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
// factor * a + offset
Tensor affine(const Tensor& a, double factor, double offset);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// [..., M, K] x [..., K, N]. Leading (batch) axes must agree unless one
// operand is rank 2, in which case it is shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);

// Softmax over the last axis, max-subtracted.
Tensor softmax_rows(const Tensor& logits);

// Softmax over the last axis restricted to entries where `weights` > 0,
// with log(weight) added to each allowed logit. `weights` is a constant
// matrix matching the two trailing axes of `logits` and is shared across
// leading axes. Rows with no allowed entry produce zeros.
Tensor masked_softmax(const Tensor& logits, const Tensor& weights);

// Symmetric n x n matrix whose strict upper triangle (row-major order) is
// taken from `upper` (length n(n-1)/2); diagonal entries are `diagonal`.
Tensor symmetric_from_upper(const Tensor& upper, std::size_t n, double diagonal);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

bool all_finite(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace cgt
