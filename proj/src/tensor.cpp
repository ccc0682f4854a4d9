#include "cgt/tensor.hpp"

#include "cgt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cgt {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr make_node(Shape shape, std::vector<double> value, const char* op,
                  std::initializer_list<NodePtr> parents) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->requires_grad) {
                node->requires_grad = true;
                break;
            }
        }
        if (node->requires_grad) node->parents.assign(parents.begin(), parents.end());
    }
    return node;
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) +
                                 " with " + shape_str(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

// Row-major strides of `in` expressed against `out`; stretched axes get 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t in_axis = in.size() - 1 - k;
        const std::size_t out_axis = out.size() - 1 - k;
        strides[out_axis] = in[in_axis] == 1 ? 0 : stride;
        stride *= in[in_axis];
    }
    return strides;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t total = shape_numel(out);
    if (total == 0) return;
    const std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < total; ++o) {
        f(o, ia, ib);
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            ia += sa[ax];
            ib += sb[ax];
            if (idx[ax] < out[ax]) break;
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

template <class Fwd, class Da, class Db>
Tensor binary_broadcast(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Da da, Db db) {
    require_defined(a, op);
    require_defined(b, op);
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape(), op);
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(shape_numel(out_shape));
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    } else {
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = fwd(av[ia], bv[ib]); });
    }
    auto node = make_node(out_shape, std::move(out), op, {a.node_ptr(), b.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [sa, sb, da, db](detail::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const bool ga = pa.requires_grad;
            const bool gb = pb.requires_grad;
            double* gav = ga ? pa.ensure_grad().data() : nullptr;
            double* gbv = gb ? pb.ensure_grad().data() : nullptr;
            const auto& g = self.grad;
            const auto& x = pa.value;
            const auto& y = pb.value;
            if (pa.shape == pb.shape) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (ga) gav[i] += g[i] * da(x[i], y[i]);
                    if (gb) gbv[i] += g[i] * db(x[i], y[i]);
                }
                return;
            }
            for_each_broadcast(self.shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                if (ga) gav[ia] += g[o] * da(x[ia], y[ib]);
                if (gb) gbv[ib] += g[o] * db(x[ia], y[ib]);
            });
        };
    }
    return Tensor::from_node(std::move(node));
}

// Unary op whose derivative is expressed via input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
    require_defined(a, op);
    const auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    auto node = make_node(a.shape(), std::move(out), op, {a.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [deriv](detail::Node& self) {
            auto& p = *self.parents[0];
            auto& gp = p.ensure_grad();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
        };
    }
    return Tensor::from_node(std::move(node));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct MatmulLayout {
    std::size_t batch_a, batch_b, batch, m, k, n;
    Shape out_shape;
};

MatmulLayout matmul_layout(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a) + " and " +
                             shape_str(b));
    }
    MatmulLayout l{};
    l.m = a[a.size() - 2];
    l.k = a[a.size() - 1];
    l.n = b[b.size() - 1];
    if (b[b.size() - 2] != l.k) {
        throw DimensionError("matmul: inner dimensions differ: " + shape_str(a) + " x " + shape_str(b));
    }
    const Shape lead_a(a.begin(), a.end() - 2);
    const Shape lead_b(b.begin(), b.end() - 2);
    l.batch_a = shape_numel(lead_a);
    l.batch_b = shape_numel(lead_b);
    Shape lead;
    if (lead_a.empty()) {
        lead = lead_b;
    } else if (lead_b.empty() || lead_a == lead_b) {
        lead = lead_a;
    } else {
        throw DimensionError("matmul: batch axes differ: " + shape_str(a) + " x " + shape_str(b));
    }
    l.batch = shape_numel(lead);
    l.out_shape = lead;
    l.out_shape.push_back(l.m);
    l.out_shape.push_back(l.n);
    return l;
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t m,
              std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x k] += g[m x n] * b[k x n]^T, via an explicit transpose of b so the
// inner loop stays a vectorizable axpy.
void gemm_acc_bt(const double* g, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
                 std::vector<double>& scratch) {
    scratch.resize(n * k);
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) scratch[j * k + p] = b[p * n + j];
    }
    gemm_acc(g, scratch.data(), c, m, n, k);
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_acc_at(const double* __restrict a, const double* __restrict g, double* __restrict c, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* __restrict grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* __restrict crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) {
    node_ = std::make_shared<detail::Node>();
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

const Shape& Tensor::shape() const {
    require_defined(*this, "shape");
    return node_->shape;
}

std::size_t Tensor::size() const { return defined() ? node_->value.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw DimensionError("dim: axis out of range for " + shape_str(s));
    return s[axis];
}

std::span<const double> Tensor::data() const {
    require_defined(*this, "data");
    return node_->value;
}

std::span<double> Tensor::data_mut() {
    require_defined(*this, "data_mut");
    return node_->value;
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw DimensionError("at: index rank mismatch for " + shape_str(s));
    std::size_t flat = 0;
    std::size_t ax = 0;
    for (std::size_t i : index) {
        if (i >= s[ax]) throw DimensionError("at: index out of range for " + shape_str(s));
        flat = flat * s[ax] + i;
        ++ax;
    }
    return node_->value[flat];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    require_defined(*this, "set_requires_grad");
    if (!node_->is_leaf()) throw ContractError("set_requires_grad: only leaves can be toggled");
    node_->requires_grad = on;
    if (!on) node_->grad.clear();
    return *this;
}

bool Tensor::is_leaf() const { return defined() && node_->is_leaf(); }

bool Tensor::has_grad() const { return defined() && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad: tensor has no gradient");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (defined() && node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const {
    require_defined(*this, "detach");
    return Tensor(node_->shape, node_->value);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Tape

ComputationTape ComputationTape::record(const Tensor& root) {
    require_defined(root, "backward");
    ComputationTape tape;
    tape.root_ = root.node_ptr();
    if (!tape.root_->requires_grad) return tape;
    std::unordered_set<detail::Node*> visited;
    // Iterative post-order DFS: parents are emitted before children.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(tape.root_.get(), 0);
    visited.insert(tape.root_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void ComputationTape::backward() {
    if (!root_) return;
    for (auto* node : order_) {
        if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
    }
    root_->ensure_grad()[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
    // Intermediate gradients are only needed during the sweep.
    for (auto* node : order_) {
        if (!node->is_leaf()) std::vector<double>().swap(node->grad);
    }
}

void backward(const Tensor& scalar) {
    require_defined(scalar, "backward");
    if (scalar.size() != 1) {
        throw ContractError("backward: expected a scalar, got shape " + shape_str(scalar.shape()));
    }
    if (!scalar.requires_grad()) throw ContractError("backward: nothing on the tape requires a gradient");
    auto tape = ComputationTape::record(scalar);
    tape.backward();
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
    switch (kind) {
        case ElementwiseKind::add: return add(a, b);
        case ElementwiseKind::subtract: return sub(a, b);
        case ElementwiseKind::hadamard: return mul(a, b);
    }
    throw ContractError("elementwise: unknown kind");
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_broadcast(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor neg(const Tensor& a) {
    return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, "scale", [factor](double x) { return factor * x; },
                 [factor](double, double) { return factor; });
}

Tensor affine(const Tensor& a, double factor, double offset) {
    return unary(a, "affine", [factor, offset](double x) { return factor * x + offset; },
                 [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
    return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    double total = 0.0;
    for (double v : a.data()) total += v;
    auto node = make_node(Shape{}, {total}, "sum", {a.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](detail::Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (double& g : gp) g += self.grad[0];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ContractError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mse: shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    return mean(square(sub(a, b)));
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    const MatmulLayout l = matmul_layout(a.shape(), b.shape());
    std::vector<double> out(shape_numel(l.out_shape), 0.0);
    const double* av = a.data().data();
    const double* bv = b.data().data();
    if (l.batch_b == 1 && b.rank() == 2) {
        // Shared right operand: fold the batch into the row dimension.
        gemm_acc(av, bv, out.data(), l.batch_a * l.m, l.k, l.n);
    } else {
        for (std::size_t bi = 0; bi < l.batch; ++bi) {
            const double* ap = av + (a.rank() == 2 ? 0 : bi * l.m * l.k);
            const double* bp = bv + (b.rank() == 2 ? 0 : bi * l.k * l.n);
            gemm_acc(ap, bp, out.data() + bi * l.m * l.n, l.m, l.k, l.n);
        }
    }
    auto node = make_node(l.out_shape, std::move(out), "matmul", {a.node_ptr(), b.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [l](detail::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            const bool a_batched = pa.shape.size() > 2;
            const bool b_batched = pb.shape.size() > 2;
            const double* g = self.grad.data();
            if (pa.requires_grad) {
                std::vector<double> scratch;
                double* ga = pa.ensure_grad().data();
                for (std::size_t bi = 0; bi < l.batch; ++bi) {
                    const double* bp = pb.value.data() + (b_batched ? bi * l.k * l.n : 0);
                    double* gap = ga + (a_batched ? bi * l.m * l.k : 0);
                    gemm_acc_bt(g + bi * l.m * l.n, bp, gap, l.m, l.n, l.k, scratch);
                }
            }
            if (pb.requires_grad) {
                double* gb = pb.ensure_grad().data();
                if (!b_batched && a_batched) {
                    gemm_acc_at(pa.value.data(), g, gb, l.batch * l.m, l.k, l.n);
                } else {
                    for (std::size_t bi = 0; bi < l.batch; ++bi) {
                        const double* ap = pa.value.data() + (a_batched ? bi * l.m * l.k : 0);
                        double* gbp = gb + (b_batched ? bi * l.k * l.n : 0);
                        gemm_acc_at(ap, g + bi * l.m * l.n, gbp, l.m, l.k, l.n);
                    }
                }
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    require_defined(a, "permute");
    const Shape& in = a.shape();
    if (axes.size() != in.size()) throw DimensionError("permute: axes do not match rank of " + shape_str(in));
    std::vector<bool> seen(in.size(), false);
    Shape out_shape(in.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= in.size() || seen[axes[i]]) throw DimensionError("permute: invalid axis list");
        seen[axes[i]] = true;
        out_shape[i] = in[axes[i]];
    }
    std::vector<std::size_t> in_strides(in.size(), 1);
    for (std::size_t i = in.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
    // Source offset for each output position, following the output odometer.
    std::vector<std::size_t> src_strides(in.size());
    for (std::size_t i = 0; i < axes.size(); ++i) src_strides[i] = in_strides[axes[i]];
    const std::vector<std::size_t> zero(in.size(), 0);
    std::vector<std::size_t> gather(a.size());
    for_each_broadcast(out_shape, src_strides, zero,
                       [&](std::size_t o, std::size_t src, std::size_t) { gather[o] = src; });
    const auto av = a.data();
    std::vector<double> out(gather.size());
    for (std::size_t o = 0; o < gather.size(); ++o) out[o] = av[gather[o]];
    auto node = make_node(out_shape, std::move(out), "permute", {a.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [gather = std::move(gather)](detail::Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (std::size_t o = 0; o < gather.size(); ++o) gp[gather[o]] += self.grad[o];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor transpose_last(const Tensor& a) {
    const std::size_t r = a.rank();
    if (r < 2) throw DimensionError("transpose_last: rank < 2 for " + shape_str(a.shape()));
    std::vector<std::size_t> axes(r);
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[r - 1], axes[r - 2]);
    return permute(a, axes);
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape_numel(shape) != a.size()) {
        throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    auto node = make_node(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), "reshape",
                          {a.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](detail::Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
        };
    }
    return Tensor::from_node(std::move(node));
}

// ---------------------------------------------------------------------------
// Softmax family

namespace {

void softmax_backward(detail::Node& self, std::size_t cols) {
    auto& gp = self.parents[0]->ensure_grad();
    const std::size_t rows = cols == 0 ? 0 : self.value.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * cols;
        const double* g = self.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
        double* out = gp.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) out[j] += y[j] * (g[j] - dot);
    }
}

}  // namespace

Tensor softmax_rows(const Tensor& logits) {
    require_defined(logits, "softmax_rows");
    if (logits.rank() < 1) throw DimensionError("softmax_rows: scalar input");
    const std::size_t cols = logits.shape().back();
    const std::size_t rows = cols == 0 ? 0 : logits.size() / cols;
    const auto x = logits.data();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = out.data() + r * cols;
        const double mx = *std::max_element(xr, xr + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        for (std::size_t j = 0; j < cols; ++j) yr[j] /= total;
    }
    auto node = make_node(logits.shape(), std::move(out), "softmax", {logits.node_ptr()});
    if (node->requires_grad) node->backward_fn = [cols](detail::Node& self) { softmax_backward(self, cols); };
    return Tensor::from_node(std::move(node));
}

Tensor masked_softmax(const Tensor& logits, const Tensor& weights) {
    require_defined(logits, "masked_softmax");
    require_defined(weights, "masked_softmax");
    if (logits.rank() < 2 || weights.rank() != 2 ||
        logits.dim(logits.rank() - 1) != weights.dim(1) || logits.dim(logits.rank() - 2) != weights.dim(0)) {
        throw DimensionError("masked_softmax: logits " + shape_str(logits.shape()) + " vs weights " +
                             shape_str(weights.shape()));
    }
    const std::size_t n_rows = weights.dim(0);
    const std::size_t cols = weights.dim(1);
    const std::size_t block = n_rows * cols;
    const std::size_t batch = logits.size() / block;
    const auto w = weights.data();
    std::vector<double> log_w(block, 0.0);
    for (std::size_t i = 0; i < block; ++i) log_w[i] = w[i] > 0.0 ? std::log(w[i]) : 0.0;
    const auto x = logits.data();
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < n_rows; ++r) {
            const std::size_t base = b * block + r * cols;
            const std::size_t wbase = r * cols;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < cols; ++j) {
                if (w[wbase + j] > 0.0) mx = std::max(mx, x[base + j] + log_w[wbase + j]);
            }
            if (mx == -std::numeric_limits<double>::infinity()) continue;
            double total = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                if (w[wbase + j] > 0.0) {
                    out[base + j] = std::exp(x[base + j] + log_w[wbase + j] - mx);
                    total += out[base + j];
                }
            }
            for (std::size_t j = 0; j < cols; ++j) out[base + j] /= total;
        }
    }
    auto node = make_node(logits.shape(), std::move(out), "masked_softmax", {logits.node_ptr()});
    if (node->requires_grad) node->backward_fn = [cols](detail::Node& self) { softmax_backward(self, cols); };
    return Tensor::from_node(std::move(node));
}

Tensor symmetric_from_upper(const Tensor& upper, std::size_t n, double diagonal) {
    require_defined(upper, "symmetric_from_upper");
    const std::size_t expected = n * (n - (n > 0 ? 1 : 0)) / 2;
    if (upper.size() != expected) {
        throw DimensionError("symmetric_from_upper: need " + std::to_string(expected) + " entries for n=" +
                             std::to_string(n) + ", got " + std::to_string(upper.size()));
    }
    const auto u = upper.data();
    std::vector<double> out(n * n, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i * n + i] = diagonal;
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
            out[i * n + j] = u[k];
            out[j * n + i] = u[k];
        }
    }
    auto node = make_node(Shape{n, n}, std::move(out), "symmetric_from_upper", {upper.node_ptr()});
    if (node->requires_grad) {
        node->backward_fn = [n](detail::Node& self) {
            auto& gp = self.parents[0]->ensure_grad();
            std::size_t k = 0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j, ++k) gp[k] += self.grad[i * n + j] + self.grad[j * n + i];
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

// ---------------------------------------------------------------------------

bool all_finite(const Tensor& t) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double worst = 0.0;
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
    return worst;
}

}  // namespace cgt
