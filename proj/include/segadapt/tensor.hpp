#pragma once

// Dense tensor type with reverse-mode automatic differentiation.
// Scalar type is a template parameter: float is the working precision for
// training and adaptation, double instantiations exist for the
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "segadapt/errors.hpp"
#include "segadapt/rng.hpp"

namespace sga {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

template <typename S>
struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<Node<S>>> parents;
    std::function<void(Node<S>&)> backward_fn;
};

template <typename S>
inline void accum_ensure(Node<S>& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), S(0));
}

template <typename S>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

    static TensorT leaf(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node<S>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        std::vector<S> d(shape_numel(shape), S(0));
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT full(Shape shape, S v, bool requires_grad = false) {
        std::vector<S> d(shape_numel(shape), v);
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT scalar(S v) { return leaf(Shape{}, {v}, false); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[i < 0 ? node_->shape.size() + i : i]; }
    int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<S>& value() const { return node_->value; }
    // Mutable access to raw values. Meant for leaves (parameter updates,
    // in-place initialization); mutating an interior node invalidates the graph.
    std::vector<S>& data() { return node_->value; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<S>& grad() const {
        if (node_->grad.empty()) throw StateError("tensor has no accumulated gradient");
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }

    S item() const {
        if (size() != 1) throw DimensionError("item() requires a single-element tensor, got " + shape_str(shape()));
        return node_->value[0];
    }

    // Leaf copy sharing no graph history.
    TensorT detach() const { return leaf(node_->shape, node_->value, false); }

    // Reverse-mode sweep from a scalar root. Gradients accumulate into every
    // reachable requires_grad tensor, in reverse topological order. Running a
    // second sweep over the same graph is an error.
    void backward() {
        Node<S>* root = node_.get();
        if (!root) throw StateError("backward() on an undefined tensor");
        if (shape_numel(root->shape) != 1)
            throw DimensionError("backward() requires a scalar root, got " + shape_str(root->shape));
        if (!root->requires_grad)
            throw StateError("backward() on a graph with no differentiable leaves");
        if (root->backward_done)
            throw StateError("backward() called twice on the same graph");

        std::vector<Node<S>*> order;
        std::unordered_set<Node<S>*> visited;
        std::vector<std::pair<Node<S>*, size_t>> stack;
        visited.insert(root);
        stack.push_back({root, 0});
        while (!stack.empty()) {
            auto& top = stack.back();
            Node<S>* n = top.first;
            if (top.second < n->parents.size()) {
                Node<S>* p = n->parents[top.second++].get();
                if (p && p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        root->grad.assign(1, S(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<S>* n = *it;
            if (!n->backward_fn) continue;
            if (n->backward_done) throw StateError("backward() reached an already consumed subgraph");
            if (n->grad.empty()) continue;  // unreachable from root
            n->backward_fn(*n);
            n->backward_done = true;
        }
    }

    std::shared_ptr<Node<S>> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <typename S>
TensorT<S> make_op(Shape shape, std::vector<S> value,
                   std::vector<std::shared_ptr<Node<S>>> parents,
                   std::function<void(Node<S>&)> backward_fn) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rq = false;
    for (const auto& p : parents)
        if (p && p->requires_grad) rq = true;
    n->requires_grad = rq;
    if (rq) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return TensorT<S>(std::move(n));
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Row-major split of a shape around one axis: outer * axis * inner.
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& n, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    n = s[axis];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

inline int normalize_axis(int axis, int rank, const char* op) {
    int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for rank " + std::to_string(rank));
    return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "add");
    std::vector<S> v(a.size());
    const S* pa = a.value().data();
    const S* pb = b.value().data();
    for (int64_t i = 0; i < a.size(); ++i) v[i] = pa[i] + pb[i];
    auto na = a.node_, nb = b.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na, nb}, [na, nb](Node<S>& n) {
        for (Node<S>* p : {na.get(), nb.get()}) {
            if (!p->requires_grad) continue;
            accum_ensure(*p);
            for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "sub");
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] - b.value()[i];
    auto na = a.node_, nb = b.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na, nb}, [na, nb](Node<S>& n) {
        if (na->requires_grad) {
            accum_ensure(*na);
            for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i];
        }
        if (nb->requires_grad) {
            accum_ensure(*nb);
            for (size_t i = 0; i < n.grad.size(); ++i) nb->grad[i] -= n.grad[i];
        }
    });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a.shape(), b.shape(), "mul");
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] * b.value()[i];
    auto na = a.node_, nb = b.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na, nb}, [na, nb](Node<S>& n) {
        if (na->requires_grad) {
            accum_ensure(*na);
            for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i] * nb->value[i];
        }
        if (nb->requires_grad) {
            accum_ensure(*nb);
            for (size_t i = 0; i < n.grad.size(); ++i) nb->grad[i] += n.grad[i] * na->value[i];
        }
    });
}

template <typename S>
TensorT<S> neg(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = -a.value()[i];
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] -= n.grad[i];
    });
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] + c;
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i];
    });
}

template <typename S>
TensorT<S> mul_scalar(const TensorT<S>& a, S c) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] * c;
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na, c](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i] * c;
    });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] > S(0) ? a.value()[i] : S(0);
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (na->value[i] > S(0)) na->grad[i] += n.grad[i];
    });
}

template <typename S>
TensorT<S> exp_(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = std::exp(a.value()[i]);
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i] * n.value[i];
    });
}

template <typename S>
TensorT<S> log_(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = std::log(a.value()[i]);
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i] / na->value[i];
    });
}

template <typename S>
TensorT<S> square(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] * a.value()[i];
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += S(2) * n.grad[i] * na->value[i];
    });
}

template <typename S>
TensorT<S> sqrt_(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = std::sqrt(a.value()[i]);
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) na->grad[i] += n.grad[i] / (S(2) * n.value[i]);
    });
}

template <typename S>
TensorT<S> abs_(const TensorT<S>& a) {
    std::vector<S> v(a.size());
    for (int64_t i = 0; i < a.size(); ++i) v[i] = std::abs(a.value()[i]);
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        for (size_t i = 0; i < n.grad.size(); ++i) {
            S x = na->value[i];
            if (x > S(0)) na->grad[i] += n.grad[i];
            else if (x < S(0)) na->grad[i] -= n.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
TensorT<S> sum_all(const TensorT<S>& a) {
    S acc = 0;
    for (int64_t i = 0; i < a.size(); ++i) acc += a.value()[i];
    auto na = a.node_;
    return detail::make_op<S>(Shape{}, {acc}, {na}, [na](Node<S>& n) {
        accum_ensure(*na);
        S g = n.grad[0];
        for (auto& x : na->grad) x += g;
    });
}

template <typename S>
TensorT<S> mean_all(const TensorT<S>& a) {
    S acc = 0;
    for (int64_t i = 0; i < a.size(); ++i) acc += a.value()[i];
    S inv = S(1) / static_cast<S>(a.size());
    auto na = a.node_;
    return detail::make_op<S>(Shape{}, {acc * inv}, {na}, [na, inv](Node<S>& n) {
        accum_ensure(*na);
        S g = n.grad[0] * inv;
        for (auto& x : na->grad) x += g;
    });
}

template <typename S>
TensorT<S> sum_axis(const TensorT<S>& a, int axis, bool keepdim = false) {
    int ax = detail::normalize_axis(axis, a.rank(), "sum_axis");
    int64_t outer, n, inner;
    detail::axis_split(a.shape(), ax, outer, n, inner);
    Shape os = a.shape();
    if (keepdim) os[ax] = 1;
    else os.erase(os.begin() + ax);
    std::vector<S> v(outer * inner, S(0));
    const S* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < n; ++k) {
            const S* row = src + (o * n + k) * inner;
            S* dst = v.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += row[i];
        }
    auto na = a.node_;
    return detail::make_op<S>(std::move(os), std::move(v), {na}, [na, outer, n, inner](Node<S>& nd) {
        accum_ensure(*na);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < n; ++k) {
                S* dst = na->grad.data() + (o * n + k) * inner;
                const S* g = nd.grad.data() + o * inner;
                for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
            }
    });
}

template <typename S>
TensorT<S> mean_axis(const TensorT<S>& a, int axis, bool keepdim = false) {
    int ax = detail::normalize_axis(axis, a.rank(), "mean_axis");
    S inv = S(1) / static_cast<S>(a.shape()[ax]);
    return mul_scalar(sum_axis(a, ax, keepdim), inv);
}

// ---------------------------------------------------------------------------
// Softmax family (fused, numerically stabilized by max subtraction)

template <typename S>
TensorT<S> softmax(const TensorT<S>& a, int axis) {
    int ax = detail::normalize_axis(axis, a.rank(), "softmax");
    int64_t outer, n, inner;
    detail::axis_split(a.shape(), ax, outer, n, inner);
    std::vector<S> v(a.size());
    const S* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const S* x = src + o * n * inner + i;
            S* y = v.data() + o * n * inner + i;
            S m = x[0];
            for (int64_t k = 1; k < n; ++k) m = std::max(m, x[k * inner]);
            S z = 0;
            for (int64_t k = 0; k < n; ++k) {
                S e = std::exp(x[k * inner] - m);
                y[k * inner] = e;
                z += e;
            }
            S invz = S(1) / z;
            for (int64_t k = 0; k < n; ++k) y[k * inner] *= invz;
        }
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na, outer, n, inner](Node<S>& nd) {
        accum_ensure(*na);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                const S* p = nd.value.data() + o * n * inner + i;
                const S* g = nd.grad.data() + o * n * inner + i;
                S* dx = na->grad.data() + o * n * inner + i;
                S dot = 0;
                for (int64_t k = 0; k < n; ++k) dot += p[k * inner] * g[k * inner];
                for (int64_t k = 0; k < n; ++k)
                    dx[k * inner] += p[k * inner] * (g[k * inner] - dot);
            }
    });
}

template <typename S>
TensorT<S> log_softmax(const TensorT<S>& a, int axis) {
    int ax = detail::normalize_axis(axis, a.rank(), "log_softmax");
    int64_t outer, n, inner;
    detail::axis_split(a.shape(), ax, outer, n, inner);
    std::vector<S> v(a.size());
    const S* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const S* x = src + o * n * inner + i;
            S* y = v.data() + o * n * inner + i;
            S m = x[0];
            for (int64_t k = 1; k < n; ++k) m = std::max(m, x[k * inner]);
            S z = 0;
            for (int64_t k = 0; k < n; ++k) z += std::exp(x[k * inner] - m);
            S lse = m + std::log(z);
            for (int64_t k = 0; k < n; ++k) y[k * inner] = x[k * inner] - lse;
        }
    auto na = a.node_;
    return detail::make_op<S>(a.shape(), std::move(v), {na}, [na, outer, n, inner](Node<S>& nd) {
        accum_ensure(*na);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                const S* lp = nd.value.data() + o * n * inner + i;
                const S* g = nd.grad.data() + o * n * inner + i;
                S* dx = na->grad.data() + o * n * inner + i;
                S sg = 0;
                for (int64_t k = 0; k < n; ++k) sg += g[k * inner];
                for (int64_t k = 0; k < n; ++k)
                    dx[k * inner] += g[k * inner] - std::exp(lp[k * inner]) * sg;
            }
    });
}

// ---------------------------------------------------------------------------
// GEMM helpers (row-major)

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
template <typename S>
void gemm_nn(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        S* c = C + i * n;
        const S* a = A + i * k;
        for (int64_t p = 0; p < k; ++p) {
            S av = a[p];
            if (av == S(0)) continue;
            const S* b = B + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m x n] += A[m x k] * B^T where B is [n x k]
template <typename S>
void gemm_nt(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const S* a = A + i * k;
        S* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const S* b = B + j * k;
            S acc = 0;
            for (int64_t p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C[m x n] += A^T * B where A is [k x m], B is [k x n]
template <typename S>
void gemm_tn(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const S* a = A + p * m;
        const S* b = B + p * n;
        for (int64_t i = 0; i < m; ++i) {
            S av = a[i];
            if (av == S(0)) continue;
            S* c = C + i * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace detail

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<S> v(m * n, S(0));
    detail::gemm_nn(a.value().data(), b.value().data(), v.data(), m, k, n);
    auto na = a.node_, nb = b.node_;
    return detail::make_op<S>(Shape{(int)m, (int)n}, std::move(v), {na, nb}, [na, nb, m, k, n](Node<S>& nd) {
        if (na->requires_grad) {
            accum_ensure(*na);
            detail::gemm_nt(nd.grad.data(), nb->value.data(), na->grad.data(), m, n, k);
        }
        if (nb->requires_grad) {
            accum_ensure(*nb);
            detail::gemm_tn(na->value.data(), nd.grad.data(), nb->grad.data(), k, m, n);
        }
    });
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.size())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
    auto na = a.node_;
    return detail::make_op<S>(std::move(new_shape), a.value(), {na}, [na](Node<S>& nd) {
        accum_ensure(*na);
        for (size_t i = 0; i < nd.grad.size(); ++i) na->grad[i] += nd.grad[i];
    });
}

template <typename S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<int>& perm) {
    int r = a.rank();
    if (static_cast<int>(perm.size()) != r)
        throw DimensionError("permute: order length " + std::to_string(perm.size()) +
                             " does not match rank " + std::to_string(r));
    Shape os(r);
    for (int i = 0; i < r; ++i) os[i] = a.shape()[perm[i]];
    std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.shape()[i + 1];
    for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * os[i + 1];
    // stride of output axis i in the input layout
    std::vector<int64_t> map_strides(r);
    for (int i = 0; i < r; ++i) map_strides[i] = in_strides[perm[i]];

    std::vector<S> v(a.size());
    const S* src = a.value().data();
    for (int64_t o = 0; o < a.size(); ++o) {
        int64_t idx = 0;
        int64_t rem = o;
        for (int i = 0; i < r; ++i) {
            int64_t c = rem / out_strides[i];
            rem -= c * out_strides[i];
            idx += c * map_strides[i];
        }
        v[o] = src[idx];
    }
    auto na = a.node_;
    return detail::make_op<S>(std::move(os), std::move(v), {na},
                              [na, out_strides, map_strides, r](Node<S>& nd) {
        accum_ensure(*na);
        int64_t total = static_cast<int64_t>(nd.grad.size());
        for (int64_t o = 0; o < total; ++o) {
            int64_t idx = 0;
            int64_t rem = o;
            for (int i = 0; i < r; ++i) {
                int64_t c = rem / out_strides[i];
                rem -= c * out_strides[i];
                idx += c * map_strides[i];
            }
            na->grad[idx] += nd.grad[o];
        }
    });
}

template <typename S>
TensorT<S> transpose2d(const TensorT<S>& a) {
    if (a.rank() != 2) throw DimensionError("transpose2d: expected rank 2, got " + shape_str(a.shape()));
    return permute(a, {1, 0});
}

template <typename S>
TensorT<S> slice(const TensorT<S>& a, const std::vector<int>& starts, const std::vector<int>& sizes) {
    int r = a.rank();
    if (static_cast<int>(starts.size()) != r || static_cast<int>(sizes.size()) != r)
        throw DimensionError("slice: starts/sizes rank mismatch for " + shape_str(a.shape()));
    for (int i = 0; i < r; ++i)
        if (starts[i] < 0 || sizes[i] <= 0 || starts[i] + sizes[i] > a.shape()[i])
            throw DimensionError("slice: window out of bounds on axis " + std::to_string(i) +
                                 " for " + shape_str(a.shape()));
    Shape os(sizes.begin(), sizes.end());
    std::vector<int64_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.shape()[i + 1];
    int64_t count = shape_numel(os);
    int64_t inner = sizes[r - 1];
    int64_t rows = count / inner;
    std::vector<S> v(count);
    const S* src = a.value().data();
    for (int64_t row = 0; row < rows; ++row) {
        int64_t base = 0;
        int64_t rem = row;
        for (int i = r - 2; i >= 0; --i) {
            int64_t c = rem % sizes[i];
            rem /= sizes[i];
            base += (starts[i] + c) * in_strides[i];
        }
        base += starts[r - 1];
        std::copy(src + base, src + base + inner, v.data() + row * inner);
    }
    auto na = a.node_;
    std::vector<int> st = starts, sz = sizes;
    return detail::make_op<S>(std::move(os), std::move(v), {na},
                              [na, st, sz, in_strides, r](Node<S>& nd) {
        accum_ensure(*na);
        int64_t inner = sz[r - 1];
        int64_t rows = static_cast<int64_t>(nd.grad.size()) / inner;
        for (int64_t row = 0; row < rows; ++row) {
            int64_t base = 0;
            int64_t rem = row;
            for (int i = r - 2; i >= 0; --i) {
                int64_t c = rem % sz[i];
                rem /= sz[i];
                base += (st[i] + c) * in_strides[i];
            }
            base += st[r - 1];
            const S* g = nd.grad.data() + row * inner;
            S* dst = na->grad.data() + base;
            for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
        }
    });
}

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    int r = parts[0].rank();
    int ax = detail::normalize_axis(axis, r, "concat");
    Shape os = parts[0].shape();
    int total_axis = 0;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        ps[ax] = os[ax];
        detail::check_same_shape(ps, os, "concat");
        total_axis += p.shape()[ax];
    }
    os[ax] = total_axis;
    int64_t outer, n, inner;
    detail::axis_split(os, ax, outer, n, inner);
    std::vector<S> v(shape_numel(os));
    int64_t off = 0;
    for (const auto& p : parts) {
        int64_t pn = p.shape()[ax];
        const S* src = p.value().data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(src + o * pn * inner, src + (o + 1) * pn * inner,
                      v.data() + (o * n + off) * inner);
        off += pn;
    }
    std::vector<std::shared_ptr<Node<S>>> ns;
    std::vector<int64_t> axis_sizes;
    for (const auto& p : parts) {
        ns.push_back(p.node_);
        axis_sizes.push_back(p.shape()[ax]);
    }
    return detail::make_op<S>(std::move(os), std::move(v), ns,
                              [ns, axis_sizes, outer, n, inner](Node<S>& nd) {
        int64_t off = 0;
        for (size_t pi = 0; pi < ns.size(); ++pi) {
            Node<S>* p = ns[pi].get();
            int64_t pn = axis_sizes[pi];
            if (p->requires_grad) {
                accum_ensure(*p);
                for (int64_t o = 0; o < outer; ++o) {
                    const S* g = nd.grad.data() + (o * n + off) * inner;
                    S* dst = p->grad.data() + o * pn * inner;
                    for (int64_t i = 0; i < pn * inner; ++i) dst[i] += g[i];
                }
            }
            off += pn;
        }
    });
}

// ---------------------------------------------------------------------------
// Spatial ops on the trailing two axes

// Counter-clockwise quarter turns. k is taken mod 4.
template <typename S>
TensorT<S> rot90(const TensorT<S>& a, int k) {
    int r = a.rank();
    if (r < 2) throw DimensionError("rot90: rank >= 2 required, got " + shape_str(a.shape()));
    int kk = ((k % 4) + 4) % 4;
    int H = a.shape()[r - 2], W = a.shape()[r - 1];
    Shape os = a.shape();
    if (kk % 2 == 1) {
        os[r - 2] = W;
        os[r - 1] = H;
    }
    int64_t outer = a.size() / (static_cast<int64_t>(H) * W);
    int Ho = os[r - 2], Wo = os[r - 1];
    std::vector<S> v(a.size());
    const S* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o) {
        const S* in = src + o * H * W;
        S* out = v.data() + o * Ho * Wo;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
                int si, sj;
                switch (kk) {
                    case 0: si = i; sj = j; break;
                    case 1: si = j; sj = W - 1 - i; break;
                    case 2: si = H - 1 - i; sj = W - 1 - j; break;
                    default: si = H - 1 - j; sj = i; break;
                }
                out[i * Wo + j] = in[si * W + sj];
            }
    }
    auto na = a.node_;
    return detail::make_op<S>(std::move(os), std::move(v), {na},
                              [na, kk, H, W, Ho, Wo, outer](Node<S>& nd) {
        accum_ensure(*na);
        for (int64_t o = 0; o < outer; ++o) {
            const S* g = nd.grad.data() + o * Ho * Wo;
            S* dst = na->grad.data() + o * H * W;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    int si, sj;
                    switch (kk) {
                        case 0: si = i; sj = j; break;
                        case 1: si = j; sj = W - 1 - i; break;
                        case 2: si = H - 1 - i; sj = W - 1 - j; break;
                        default: si = H - 1 - j; sj = i; break;
                    }
                    dst[si * W + sj] += g[i * Wo + j];
                }
        }
    });
}

template <typename S>
TensorT<S> crop2d(const TensorT<S>& a, int top, int left, int h, int w) {
    int r = a.rank();
    if (r < 2) throw DimensionError("crop2d: rank >= 2 required, got " + shape_str(a.shape()));
    std::vector<int> starts(r, 0), sizes(a.shape().begin(), a.shape().end());
    starts[r - 2] = top;
    starts[r - 1] = left;
    sizes[r - 2] = h;
    sizes[r - 1] = w;
    return slice(a, starts, sizes);
}

// Permute square patches of side `patch` over the trailing two axes.
// Output cell c takes the content of input cell perm[c] (cells row-major).
template <typename S>
TensorT<S> patch_permute(const TensorT<S>& a, int patch, const std::vector<int>& perm) {
    int r = a.rank();
    if (r < 2) throw DimensionError("patch_permute: rank >= 2 required");
    int H = a.shape()[r - 2], W = a.shape()[r - 1];
    if (patch <= 0 || H % patch != 0 || W % patch != 0)
        throw ConfigError("patch_permute: patch size " + std::to_string(patch) +
                          " does not divide spatial dims " + shape_str(a.shape()));
    int gh = H / patch, gw = W / patch;
    if (static_cast<int>(perm.size()) != gh * gw)
        throw DimensionError("patch_permute: permutation length " + std::to_string(perm.size()) +
                             " != cell count " + std::to_string(gh * gw));
    int64_t outer = a.size() / (static_cast<int64_t>(H) * W);
    std::vector<S> v(a.size());
    const S* src = a.value().data();
    for (int64_t o = 0; o < outer; ++o) {
        const S* in = src + o * H * W;
        S* out = v.data() + o * H * W;
        for (int c = 0; c < gh * gw; ++c) {
            int sc = perm[c];
            int dr = (c / gw) * patch, dc = (c % gw) * patch;
            int sr = (sc / gw) * patch, scc = (sc % gw) * patch;
            for (int i = 0; i < patch; ++i)
                std::copy(in + (sr + i) * W + scc, in + (sr + i) * W + scc + patch,
                          out + (dr + i) * W + dc);
        }
    }
    auto na = a.node_;
    std::vector<int> pm = perm;
    return detail::make_op<S>(a.shape(), std::move(v), {na},
                              [na, pm, patch, H, W, gh, gw, outer](Node<S>& nd) {
        accum_ensure(*na);
        for (int64_t o = 0; o < outer; ++o) {
            const S* g = nd.grad.data() + o * H * W;
            S* dst = na->grad.data() + o * H * W;
            for (int c = 0; c < gh * gw; ++c) {
                int sc = pm[c];
                int dr = (c / gw) * patch, dc = (c % gw) * patch;
                int sr = (sc / gw) * patch, scc = (sc % gw) * patch;
                for (int i = 0; i < patch; ++i)
                    for (int j = 0; j < patch; ++j)
                        dst[(sr + i) * W + scc + j] += g[(dr + i) * W + dc + j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation over [B, C, H, W]

template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                  int stride = 1, int padding = 0) {
    if (x.rank() != 4 || w.rank() != 4)
        throw DimensionError("conv2d: expected rank-4 input and weight, got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    int B = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    int Cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != Cin)
        throw DimensionError("conv2d: channel mismatch, input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(w.shape()));
    bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.shape()[0] != Cout))
        throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) +
                             " does not match output channels " + std::to_string(Cout));
    int Ho = (H + 2 * padding - kh) / stride + 1;
    int Wo = (W + 2 * padding - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0)
        throw DimensionError("conv2d: empty output for input " + shape_str(x.shape()));

    const int64_t K = static_cast<int64_t>(Cin) * kh * kw;
    const int64_t N = static_cast<int64_t>(Ho) * Wo;

    auto im2col = [=](const S* img, S* col) {
        // col is [K x N]
        for (int c = 0; c < Cin; ++c)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    S* dst = col + ((static_cast<int64_t>(c) * kh + i) * kw + j) * N;
                    for (int oh = 0; oh < Ho; ++oh) {
                        int ih = oh * stride - padding + i;
                        if (ih < 0 || ih >= H) {
                            std::fill(dst + static_cast<int64_t>(oh) * Wo, dst + (static_cast<int64_t>(oh) + 1) * Wo, S(0));
                            continue;
                        }
                        const S* srow = img + (static_cast<int64_t>(c) * H + ih) * W;
                        S* drow = dst + static_cast<int64_t>(oh) * Wo;
                        for (int ow = 0; ow < Wo; ++ow) {
                            int iw = ow * stride - padding + j;
                            drow[ow] = (iw >= 0 && iw < W) ? srow[iw] : S(0);
                        }
                    }
                }
    };

    std::vector<S> v(static_cast<int64_t>(B) * Cout * N, S(0));
    std::vector<S> col(K * N);
    for (int b = 0; b < B; ++b) {
        im2col(x.value().data() + static_cast<int64_t>(b) * Cin * H * W, col.data());
        detail::gemm_nn(w.value().data(), col.data(), v.data() + static_cast<int64_t>(b) * Cout * N, Cout, K, N);
    }
    if (has_bias) {
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < Cout; ++c) {
                S bv = bias.value()[c];
                S* out = v.data() + (static_cast<int64_t>(b) * Cout + c) * N;
                for (int64_t i = 0; i < N; ++i) out[i] += bv;
            }
    }

    auto nx = x.node_, nw = w.node_;
    auto nb = has_bias ? bias.node_ : nullptr;
    std::vector<std::shared_ptr<Node<S>>> parents = {nx, nw};
    if (nb) parents.push_back(nb);
    return detail::make_op<S>(Shape{B, Cout, Ho, Wo}, std::move(v), parents,
                              [=](Node<S>& nd) {
        std::vector<S> colbuf(K * N);
        if (nw->requires_grad) accum_ensure(*nw);
        if (nx->requires_grad) accum_ensure(*nx);
        if (nb && nb->requires_grad) accum_ensure(*nb);
        std::vector<S> dcol(K * N);
        for (int b = 0; b < B; ++b) {
            const S* gy = nd.grad.data() + static_cast<int64_t>(b) * Cout * N;
            if (nw->requires_grad) {
                im2col(nx->value.data() + static_cast<int64_t>(b) * Cin * H * W, colbuf.data());
                detail::gemm_nt(gy, colbuf.data(), nw->grad.data(), Cout, N, K);
            }
            if (nx->requires_grad) {
                std::fill(dcol.begin(), dcol.end(), S(0));
                detail::gemm_tn(nw->value.data(), gy, dcol.data(), K, Cout, N);
                // col2im scatter
                S* dst = nx->grad.data() + static_cast<int64_t>(b) * Cin * H * W;
                for (int c = 0; c < Cin; ++c)
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j) {
                            const S* g = dcol.data() + ((static_cast<int64_t>(c) * kh + i) * kw + j) * N;
                            for (int oh = 0; oh < Ho; ++oh) {
                                int ih = oh * stride - padding + i;
                                if (ih < 0 || ih >= H) continue;
                                S* drow = dst + (static_cast<int64_t>(c) * H + ih) * W;
                                const S* grow = g + static_cast<int64_t>(oh) * Wo;
                                for (int ow = 0; ow < Wo; ++ow) {
                                    int iw = ow * stride - padding + j;
                                    if (iw >= 0 && iw < W) drow[iw] += grow[ow];
                                }
                            }
                        }
            }
            if (nb && nb->requires_grad) {
                for (int c = 0; c < Cout; ++c) {
                    const S* g = gy + static_cast<int64_t>(c) * N;
                    S acc = 0;
                    for (int64_t i = 0; i < N; ++i) acc += g[i];
                    nb->grad[c] += acc;
                }
            }
        }
    });
}

template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, int stride = 1, int padding = 0) {
    return conv2d(x, w, TensorT<S>{}, stride, padding);
}

// ---------------------------------------------------------------------------
// Bilinear resize on [B, C, H, W] (half-pixel sampling, edges clamped)

template <typename S>
TensorT<S> bilinear_resize(const TensorT<S>& x, int Ho, int Wo) {
    if (x.rank() != 4) throw DimensionError("bilinear_resize: expected rank-4, got " + shape_str(x.shape()));
    int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (Ho <= 0 || Wo <= 0) throw DimensionError("bilinear_resize: target size must be positive");

    auto taps = [](int in, int out, std::vector<int>& i0, std::vector<int>& i1, std::vector<S>& t) {
        i0.resize(out);
        i1.resize(out);
        t.resize(out);
        double scale = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double s = (o + 0.5) * scale - 0.5;
            if (s < 0) s = 0;
            if (s > in - 1) s = in - 1;
            int lo = static_cast<int>(s);
            i0[o] = lo;
            i1[o] = std::min(lo + 1, in - 1);
            t[o] = static_cast<S>(s - lo);
        }
    };
    std::vector<int> y0, y1, x0, x1;
    std::vector<S> ty, tx;
    taps(H, Ho, y0, y1, ty);
    taps(W, Wo, x0, x1, tx);

    std::vector<S> v(static_cast<int64_t>(B) * C * Ho * Wo);
    const S* src = x.value().data();
    for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        const S* in = src + bc * H * W;
        S* out = v.data() + bc * Ho * Wo;
        for (int i = 0; i < Ho; ++i) {
            const S* r0 = in + static_cast<int64_t>(y0[i]) * W;
            const S* r1 = in + static_cast<int64_t>(y1[i]) * W;
            S wy = ty[i];
            for (int j = 0; j < Wo; ++j) {
                S wx = tx[j];
                S a = r0[x0[j]] * (S(1) - wx) + r0[x1[j]] * wx;
                S b = r1[x0[j]] * (S(1) - wx) + r1[x1[j]] * wx;
                out[i * Wo + j] = a * (S(1) - wy) + b * wy;
            }
        }
    }
    auto nx = x.node_;
    return detail::make_op<S>(Shape{B, C, Ho, Wo}, std::move(v), {nx},
                              [nx, B, C, H, W, Ho, Wo, y0, y1, x0, x1, ty, tx](Node<S>& nd) {
        accum_ensure(*nx);
        for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
            const S* g = nd.grad.data() + bc * Ho * Wo;
            S* dst = nx->grad.data() + bc * H * W;
            for (int i = 0; i < Ho; ++i) {
                S wy = ty[i];
                for (int j = 0; j < Wo; ++j) {
                    S wx = tx[j];
                    S gv = g[i * Wo + j];
                    dst[static_cast<int64_t>(y0[i]) * W + x0[j]] += gv * (S(1) - wy) * (S(1) - wx);
                    dst[static_cast<int64_t>(y0[i]) * W + x1[j]] += gv * (S(1) - wy) * wx;
                    dst[static_cast<int64_t>(y1[i]) * W + x0[j]] += gv * wy * (S(1) - wx);
                    dst[static_cast<int64_t>(y1[i]) * W + x1[j]] += gv * wy * wx;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// layernorm over the last axis

template <typename S>
TensorT<S> layernorm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta, S eps) {
    int C = x.dim(-1);
    if (gamma.rank() != 1 || gamma.shape()[0] != C || beta.rank() != 1 || beta.shape()[0] != C)
        throw DimensionError("layernorm: affine params must be [" + std::to_string(C) + "]");
    if (eps <= S(0)) throw ConfigError("layernorm: eps must be positive");
    int64_t rows = x.size() / C;
    std::vector<S> v(x.size());
    auto xhat = std::make_shared<std::vector<S>>(x.size());
    auto ivar = std::make_shared<std::vector<S>>(rows);
    const S* src = x.value().data();
    const S* g = gamma.value().data();
    const S* b = beta.value().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = src + r * C;
        S m = 0;
        for (int c = 0; c < C; ++c) m += row[c];
        m /= C;
        S var = 0;
        for (int c = 0; c < C; ++c) {
            S d = row[c] - m;
            var += d * d;
        }
        var /= C;
        S iv = S(1) / std::sqrt(var + eps);
        (*ivar)[r] = iv;
        for (int c = 0; c < C; ++c) {
            S h = (row[c] - m) * iv;
            (*xhat)[r * C + c] = h;
            v[r * C + c] = h * g[c] + b[c];
        }
    }
    auto nx = x.node_;
    auto ng = gamma.node_;
    auto nb = beta.node_;
    return detail::make_op<S>(x.shape(), std::move(v), {nx, ng, nb},
                              [nx, ng, nb, xhat, ivar, rows, C](Node<S>& nd) {
        if (ng->requires_grad) accum_ensure(*ng);
        if (nb->requires_grad) accum_ensure(*nb);
        if (nx->requires_grad) accum_ensure(*nx);
        for (int64_t r = 0; r < rows; ++r) {
            const S* gy = nd.grad.data() + r * C;
            const S* h = xhat->data() + r * C;
            if (ng->requires_grad)
                for (int c = 0; c < C; ++c) ng->grad[c] += gy[c] * h[c];
            if (nb->requires_grad)
                for (int c = 0; c < C; ++c) nb->grad[c] += gy[c];
            if (nx->requires_grad) {
                S m1 = 0, m2 = 0;
                for (int c = 0; c < C; ++c) {
                    S dh = gy[c] * ng->value[c];
                    m1 += dh;
                    m2 += dh * h[c];
                }
                m1 /= C;
                m2 /= C;
                S iv = (*ivar)[r];
                S* dst = nx->grad.data() + r * C;
                for (int c = 0; c < C; ++c) {
                    S dh = gy[c] * ng->value[c];
                    dst[c] += iv * (dh - m1 - h[c] * m2);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Dropout (inverted convention: kept activations scale by 1/(1-rate))

template <typename S>
TensorT<S> dropout(const TensorT<S>& x, double rate, Rng& rng, bool active) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
    if (!active || rate == 0.0) return x;
    S scale = static_cast<S>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<S>>(x.size());
    std::vector<S> v(x.size());
    for (int64_t i = 0; i < x.size(); ++i) {
        S m = rng.uniform() >= rate ? scale : S(0);
        (*mask)[i] = m;
        v[i] = x.value()[i] * m;
    }
    auto nx = x.node_;
    return detail::make_op<S>(x.shape(), std::move(v), {nx}, [nx, mask](Node<S>& nd) {
        accum_ensure(*nx);
        for (size_t i = 0; i < nd.grad.size(); ++i) nx->grad[i] += nd.grad[i] * (*mask)[i];
    });
}

// ---------------------------------------------------------------------------
// Batch normalization over [B, C, H, W] with explicit statistics modes.

enum class BnMode {
    train,  // batch statistics, running stats updated
    eval,   // running statistics (must be initialized)
    adapt,  // statistics from the current forward only, running stats untouched
};

template <typename S>
struct BatchNorm2d {
    TensorT<S> gamma, beta;
    std::vector<S> running_mean, running_var;
    int64_t batches_tracked = 0;
    S eps = static_cast<S>(1e-5);
    S momentum = static_cast<S>(0.1);

    explicit BatchNorm2d(int channels = 0) { init(channels); }

    void init(int channels) {
        gamma = TensorT<S>::full(Shape{channels}, S(1), true);
        beta = TensorT<S>::zeros(Shape{channels}, true);
        running_mean.assign(channels, S(0));
        running_var.assign(channels, S(1));
        batches_tracked = 0;
    }

    int channels() const { return gamma.defined() ? gamma.shape()[0] : 0; }

    TensorT<S> forward(const TensorT<S>& x, BnMode mode) {
        if (x.rank() != 4 || x.shape()[1] != channels())
            throw DimensionError("batchnorm2d: expected [B," + std::to_string(channels()) +
                                 ",H,W], got " + shape_str(x.shape()));
        int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
        int64_t N = static_cast<int64_t>(B) * H * W;
        int64_t plane = static_cast<int64_t>(H) * W;

        std::vector<S> mean(C), var(C);
        if (mode == BnMode::eval) {
            if (batches_tracked == 0)
                throw StateError("batchnorm2d: eval mode before any training step (running stats uninitialized)");
            mean = running_mean;
            var = running_var;
        } else {
            const S* src = x.value().data();
            for (int c = 0; c < C; ++c) {
                S acc = 0;
                for (int b = 0; b < B; ++b) {
                    const S* p = src + (static_cast<int64_t>(b) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) acc += p[i];
                }
                mean[c] = acc / static_cast<S>(N);
            }
            for (int c = 0; c < C; ++c) {
                S acc = 0;
                for (int b = 0; b < B; ++b) {
                    const S* p = src + (static_cast<int64_t>(b) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        S d = p[i] - mean[c];
                        acc += d * d;
                    }
                }
                var[c] = acc / static_cast<S>(N);
            }
            if (mode == BnMode::train) {
                for (int c = 0; c < C; ++c) {
                    running_mean[c] = (S(1) - momentum) * running_mean[c] + momentum * mean[c];
                    running_var[c] = (S(1) - momentum) * running_var[c] + momentum * var[c];
                }
                ++batches_tracked;
            }
        }

        auto ivar = std::make_shared<std::vector<S>>(C);
        for (int c = 0; c < C; ++c) (*ivar)[c] = S(1) / std::sqrt(var[c] + eps);
        auto xhat = std::make_shared<std::vector<S>>(x.size());
        std::vector<S> v(x.size());
        {
            const S* src = x.value().data();
            const S* g = gamma.value().data();
            const S* bt = beta.value().data();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const S* p = src + (static_cast<int64_t>(b) * C + c) * plane;
                    S* h = xhat->data() + (static_cast<int64_t>(b) * C + c) * plane;
                    S* out = v.data() + (static_cast<int64_t>(b) * C + c) * plane;
                    S mu = mean[c], iv = (*ivar)[c], gc = g[c], bc = bt[c];
                    for (int64_t i = 0; i < plane; ++i) {
                        S hh = (p[i] - mu) * iv;
                        h[i] = hh;
                        out[i] = hh * gc + bc;
                    }
                }
        }

        bool batch_stats = mode != BnMode::eval;
        auto nx = x.node_;
        auto ng = gamma.node_;
        auto nb = beta.node_;
        return detail::make_op<S>(x.shape(), std::move(v), {nx, ng, nb},
                                  [nx, ng, nb, xhat, ivar, B, C, plane, N, batch_stats](Node<S>& nd) {
            if (ng->requires_grad) accum_ensure(*ng);
            if (nb->requires_grad) accum_ensure(*nb);
            if (nx->requires_grad) accum_ensure(*nx);
            for (int c = 0; c < C; ++c) {
                S sum_g = 0, sum_gh = 0;
                for (int b = 0; b < B; ++b) {
                    const S* gy = nd.grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                    const S* h = xhat->data() + (static_cast<int64_t>(b) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        sum_g += gy[i];
                        sum_gh += gy[i] * h[i];
                    }
                }
                if (ng->requires_grad) ng->grad[c] += sum_gh;
                if (nb->requires_grad) nb->grad[c] += sum_g;
                if (nx->requires_grad) {
                    S gc = ng->value[c];
                    S iv = (*ivar)[c];
                    if (batch_stats) {
                        S k = gc * iv / static_cast<S>(N);
                        for (int b = 0; b < B; ++b) {
                            const S* gy = nd.grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            const S* h = xhat->data() + (static_cast<int64_t>(b) * C + c) * plane;
                            S* dst = nx->grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            for (int64_t i = 0; i < plane; ++i)
                                dst[i] += k * (static_cast<S>(N) * gy[i] - sum_g - h[i] * sum_gh);
                        }
                    } else {
                        S k = gc * iv;
                        for (int b = 0; b < B; ++b) {
                            const S* gy = nd.grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            S* dst = nx->grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                            for (int64_t i = 0; i < plane; ++i) dst[i] += k * gy[i];
                        }
                    }
                }
            }
        });
    }
};

// ---------------------------------------------------------------------------
// Initialization helpers

template <typename S>
TensorT<S> init_normal(Shape shape, double stddev, Rng& rng) {
    std::vector<S> d(shape_numel(shape));
    for (auto& x : d) x = static_cast<S>(rng.normal() * stddev);
    return TensorT<S>::leaf(std::move(shape), std::move(d), true);
}

template <typename S>
TensorT<S> init_he(Shape shape, int fan_in, Rng& rng) {
    double stddev = std::sqrt(2.0 / fan_in);
    return init_normal<S>(std::move(shape), stddev, rng);
}

template <typename S>
TensorT<S> init_xavier_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<S> d(shape_numel(shape));
    for (auto& x : d) x = static_cast<S>(rng.uniform(-a, a));
    return TensorT<S>::leaf(std::move(shape), std::move(d), true);
}

// Precision conversion (float working copy <-> double shadow copy).
template <typename To, typename From>
TensorT<To> cast_tensor(const TensorT<From>& t, bool requires_grad) {
    std::vector<To> d(t.size());
    for (int64_t i = 0; i < t.size(); ++i) d[i] = static_cast<To>(t.value()[i]);
    return TensorT<To>::leaf(t.shape(), std::move(d), requires_grad);
}

}  // namespace sga
