#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "floe/common.hpp"

namespace floe {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "," : "");
    os << ")";
    return os.str();
}

template <class S>
class TapeT;

namespace detail {

template <class S>
struct TensorDataT {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty until backward touches it
    bool requires_grad = false;
    TapeT<S>* tape = nullptr;  // tape that produced this tensor, if any
    uint64_t tape_id = 0;      // disambiguates reused tape addresses
};

template <class S>
void finite_or_throw(const std::vector<S>& v, const char* op) {
    for (const S x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NumericError(std::string(op) + ": non-finite value produced");
        }
    }
}

}  // namespace detail

// Dense row-major tensor. Value-semantics handle over shared storage;
// contents are immutable after creation except for the gradient slot,
// which only the owning tape's backward writes.
template <class S>
class TensorT {
public:
    using Data = detail::TensorDataT<S>;

    TensorT() = default;

    static TensorT from(Shape shape, std::vector<S> value, bool requires_grad = false) {
        if (static_cast<int64_t>(value.size()) != shape_numel(shape)) {
            throw ShapeError("tensor: data length " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
        }
        for (int64_t d : shape) {
            if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
        }
        detail::finite_or_throw(value, "tensor");
        TensorT t;
        t.d_ = std::make_shared<Data>();
        t.d_->shape = std::move(shape);
        t.d_->value = std::move(value);
        t.d_->requires_grad = requires_grad;
        return t;
    }

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        std::vector<S> v(static_cast<size_t>(shape_numel(shape)), S(0));
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static TensorT full(Shape shape, S fill, bool requires_grad = false) {
        std::vector<S> v(static_cast<size_t>(shape_numel(shape)), fill);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static TensorT scalar(S v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    // Seeded Gaussian fill; pure function of (seed, element index).
    static TensorT randn(Shape shape, uint64_t seed, double stddev = 1.0, bool requires_grad = false) {
        std::vector<S> v(static_cast<size_t>(shape_numel(shape)));
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = static_cast<S>(stddev * gaussian(seed, static_cast<uint64_t>(i)));
        }
        return from(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int64_t rank() const { return static_cast<int64_t>(d_->shape.size()); }
    int64_t dim(int64_t i) const { return d_->shape[static_cast<size_t>(i >= 0 ? i : rank() + i)]; }
    int64_t numel() const { return static_cast<int64_t>(d_->value.size()); }

    const std::vector<S>& vec() const { return d_->value; }
    const S* data() const { return d_->value.data(); }
    S at(int64_t i) const { return d_->value[static_cast<size_t>(i)]; }

    S item() const {
        if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
        return d_->value[0];
    }

    bool requires_grad() const { return d_->requires_grad; }
    bool has_grad() const { return d_ && !d_->grad.empty(); }
    const std::vector<S>& grad() const {
        if (d_->grad.empty()) throw Error("grad: no gradient present (run backward first)");
        return d_->grad;
    }
    void clear_grad() { d_->grad.clear(); }

    template <class T>
    std::vector<T> to_vector() const {
        std::vector<T> out(d_->value.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(d_->value[i]);
        return out;
    }

    std::shared_ptr<Data> d_;
};

// Recording tape for one forward pass. Nodes are appended in creation order,
// so parents always precede children and reverse iteration is a topological
// order. A tape is single-threaded; independent tapes can run in parallel.
template <class S>
class TapeT {
public:
    using Data = detail::TensorDataT<S>;

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    static TapeT*& current() {
        static thread_local TapeT* tl = nullptr;
        return tl;
    }

    uint64_t id() const { return id_; }

    void record(const std::shared_ptr<Data>& out, std::function<void()> back) {
        out->tape = this;
        out->tape_id = id_;
        nodes_.push_back({out, std::move(back)});
    }

    void watch(const std::shared_ptr<Data>& leaf) {
        for (const auto& w : watched_) {
            if (w == leaf) return;
        }
        watched_.push_back(leaf);
    }

    // Seeds d(loss)/d(loss)=1 and sweeps the node list once in reverse.
    // Every watched leaf ends up with a gradient; leaves that did not
    // contribute to the loss get zeros.
    void backward(const TensorT<S>& loss) {
        if (!loss.defined() || loss.d_->tape != this || loss.d_->tape_id != id_) {
            throw Error("backward: loss tensor was not produced under this tape");
        }
        if (loss.numel() != 1) {
            throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        }
        if (used_) throw Error("backward: tape already consumed");
        used_ = true;

        loss.d_->grad.assign(1, S(1));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!it->out->grad.empty()) it->back();
        }
        for (auto& leaf : watched_) {
            if (leaf->grad.empty()) leaf->grad.assign(leaf->value.size(), S(0));
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::shared_ptr<Data> out;
        std::function<void()> back;
    };

    static uint64_t next_id() {
        static std::atomic<uint64_t> counter{1};
        return counter.fetch_add(1);
    }

    std::vector<Node> nodes_;
    std::vector<std::shared_ptr<Data>> watched_;
    uint64_t id_ = next_id();
    bool used_ = false;
};

// RAII guard installing a tape as the thread's recording target.
template <class S>
class TapeScopeT {
public:
    explicit TapeScopeT(TapeT<S>& t) : prev_(TapeT<S>::current()) { TapeT<S>::current() = &t; }
    ~TapeScopeT() { TapeT<S>::current() = prev_; }
    TapeScopeT(const TapeScopeT&) = delete;
    TapeScopeT& operator=(const TapeScopeT&) = delete;

private:
    TapeT<S>* prev_;
};

// ---------------------------------------------------------------------------
// Op plumbing
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
bool tracked(const TensorT<S>& t) {
    return t.d_->requires_grad || t.d_->tape != nullptr;
}

// True when the op should record: a tape is open and some input is tracked.
// Also validates that tape-produced inputs belong to the open tape and
// registers participating leaves for the zero-grad guarantee.
template <class S>
bool begin_record(std::initializer_list<const TensorT<S>*> inputs) {
    TapeT<S>* cur = TapeT<S>::current();
    bool any = false;
    for (const TensorT<S>* t : inputs) {
        if (!(*t).defined()) continue;
        if ((*t).d_->tape != nullptr &&
            (cur == nullptr || (*t).d_->tape != cur || (*t).d_->tape_id != cur->id())) {
            throw Error("op: input tensor belongs to a different tape");
        }
        if (tracked(*t)) any = true;
    }
    if (cur == nullptr || !any) return false;
    for (const TensorT<S>* t : inputs) {
        if ((*t).defined() && (*t).d_->requires_grad && (*t).d_->tape == nullptr) {
            cur->watch((*t).d_);
        }
    }
    return true;
}

template <class S>
void add_grad(const std::shared_ptr<TensorDataT<S>>& d, int64_t i, S g) {
    if (d->grad.empty()) d->grad.assign(d->value.size(), S(0));
    d->grad[static_cast<size_t>(i)] += g;
}

template <class S>
std::vector<S>& grad_buf(const std::shared_ptr<TensorDataT<S>>& d) {
    if (d->grad.empty()) d->grad.assign(d->value.size(), S(0));
    return d->grad;
}

template <class S>
TensorT<S> make_out(Shape shape, std::vector<S> value, const char* op) {
    finite_or_throw(value, op);
    TensorT<S> t;
    t.d_ = std::make_shared<TensorDataT<S>>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(value);
    return t;
}

// C(M,N) = A(M,K) * B(K,N)
template <class S>
void mm_nn(const S* A, const S* B, S* C, int64_t M, int64_t K, int64_t N) {
    parallel_for(M, K * N, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            S* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] = S(0);
            const S* a = A + i * K;
            for (int64_t k = 0; k < K; ++k) {
                const S aik = a[k];
                const S* b = B + k * N;
                for (int64_t j = 0; j < N; ++j) c[j] += aik * b[j];
            }
        }
    });
}

// C(M,K) += A(M,N) * B(K,N)^T
template <class S>
void mm_nt_acc(const S* A, const S* B, S* C, int64_t M, int64_t N, int64_t K) {
    parallel_for(M, K * N, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const S* a = A + i * N;
            S* c = C + i * K;
            for (int64_t k = 0; k < K; ++k) {
                const S* b = B + k * N;
                S acc = S(0);
                for (int64_t j = 0; j < N; ++j) acc += a[j] * b[j];
                c[k] += acc;
            }
        }
    });
}

// C(K,N) += A(M,K)^T * B(M,N)
template <class S>
void mm_tn_acc(const S* A, const S* B, S* C, int64_t M, int64_t K, int64_t N) {
    parallel_for(K, M * N, [&](int64_t k0, int64_t k1) {
        for (int64_t k = k0; k < k1; ++k) {
            S* c = C + k * N;
            for (int64_t i = 0; i < M; ++i) {
                const S aik = A[i * K + k];
                const S* b = B + i * N;
                for (int64_t j = 0; j < N; ++j) c[j] += aik * b[j];
            }
        }
    });
}

template <class S>
double logistic(S x) {
    const double v = static_cast<double>(x);
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations. Each returns a fresh tensor; gradients are recorded on the
// currently open tape when any input is tracked.
// ---------------------------------------------------------------------------

// Batched matrix product. Both operands must have the same rank (>= 2) and
// equal leading dims; contraction over the last dim of a / second-to-last of b.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank()) {
        throw ShapeError("matmul: ranks must match and be >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    }
    const int64_t r = a.rank();
    for (int64_t i = 0; i < r - 2; ++i) {
        if (a.dim(i) != b.dim(i)) {
            throw ShapeError("matmul: batch dims differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
        }
    }
    const int64_t M = a.dim(r - 2), K = a.dim(r - 1), Kb = b.dim(r - 2), N = b.dim(r - 1);
    if (K != Kb) {
        throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    int64_t batch = 1;
    for (int64_t i = 0; i < r - 2; ++i) batch *= a.dim(i);

    Shape os(a.shape());
    os[static_cast<size_t>(r - 1)] = N;
    std::vector<S> out(static_cast<size_t>(batch * M * N));
    for (int64_t g = 0; g < batch; ++g) {
        detail::mm_nn(a.data() + g * M * K, b.data() + g * K * N, out.data() + g * M * N, M, K, N);
    }
    TensorT<S> res = detail::make_out(std::move(os), std::move(out), "matmul");

    if (detail::begin_record<S>({&a, &b})) {
        const bool na = detail::tracked(a), nb = detail::tracked(b);
        TapeT<S>::current()->record(res.d_, [ad = a.d_, bd = b.d_, od = res.d_, na, nb, batch, M, K, N] {
            const S* g = od->grad.data();
            if (na) {
                S* ga = detail::grad_buf(ad).data();
                for (int64_t i = 0; i < batch; ++i) {
                    detail::mm_nt_acc(g + i * M * N, bd->value.data() + i * K * N, ga + i * M * K, M, N, K);
                }
            }
            if (nb) {
                S* gb = detail::grad_buf(bd).data();
                for (int64_t i = 0; i < batch; ++i) {
                    detail::mm_tn_acc(ad->value.data() + i * M * K, g + i * M * N, gb + i * K * N, M, K, N);
                }
            }
        });
    }
    return res;
}

template <class S>
TensorT<S> transpose_last2(const TensorT<S>& a) {
    if (a.rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2");
    const int64_t r = a.rank(), M = a.dim(r - 2), N = a.dim(r - 1);
    int64_t batch = a.numel() / (M * N);
    Shape os(a.shape());
    std::swap(os[static_cast<size_t>(r - 2)], os[static_cast<size_t>(r - 1)]);
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (int64_t g = 0; g < batch; ++g) {
        const S* src = a.data() + g * M * N;
        S* dst = out.data() + g * M * N;
        for (int64_t i = 0; i < M; ++i)
            for (int64_t j = 0; j < N; ++j) dst[j * M + i] = src[i * N + j];
    }
    TensorT<S> res = detail::make_out(std::move(os), std::move(out), "transpose_last2");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, batch, M, N] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                const S* gs = g + b * M * N;
                S* gd = ga + b * M * N;
                for (int64_t j = 0; j < N; ++j)
                    for (int64_t i = 0; i < M; ++i) gd[i * N + j] += gs[j * M + i];
            }
        });
    }
    return res;
}

// Numerically stabilized softmax over the last dimension.
template <class S>
TensorT<S> softmax_lastdim(const TensorT<S>& a) {
    if (a.rank() < 1 || a.dim(-1) < 1) throw ShapeError("softmax_lastdim: empty last dimension");
    const int64_t D = a.dim(-1), rows = a.numel() / D;
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (int64_t r = 0; r < rows; ++r) {
        const S* x = a.data() + r * D;
        S* y = out.data() + r * D;
        S mx = x[0];
        for (int64_t j = 1; j < D; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < D; ++j) {
            const double e = std::exp(static_cast<double>(x[j] - mx));
            y[j] = static_cast<S>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < D; ++j) y[j] = static_cast<S>(static_cast<double>(y[j]) * inv);
    }
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "softmax_lastdim");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, D, rows] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            const S* p = od->value.data();
            for (int64_t r = 0; r < rows; ++r) {
                S dot = S(0);
                for (int64_t j = 0; j < D; ++j) dot += g[r * D + j] * p[r * D + j];
                for (int64_t j = 0; j < D; ++j) ga[r * D + j] += p[r * D + j] * (g[r * D + j] - dot);
            }
        });
    }
    return res;
}

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    TensorT<S> res = detail::make_out(std::move(shape), a.vec(), "reshape");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) ga[i] += g[i];
        });
    }
    return res;
}

namespace detail {

enum class EwKind { add, sub, mul };

template <class S>
TensorT<S> elementwise(const TensorT<S>& a, const TensorT<S>& b, EwKind kind, const char* name) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(name) + ": shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<S> out(static_cast<size_t>(a.numel()));
    const S* x = a.data();
    const S* y = b.data();
    switch (kind) {
        case EwKind::add: for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i]; break;
        case EwKind::sub: for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i]; break;
        case EwKind::mul: for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i]; break;
    }
    TensorT<S> res = make_out(a.shape(), std::move(out), name);
    if (begin_record<S>({&a, &b})) {
        const bool na = tracked(a), nb = tracked(b);
        TapeT<S>::current()->record(res.d_, [ad = a.d_, bd = b.d_, od = res.d_, kind, na, nb] {
            const S* g = od->grad.data();
            const size_t n = od->value.size();
            if (na) {
                S* ga = grad_buf(ad).data();
                if (kind == EwKind::mul) {
                    for (size_t i = 0; i < n; ++i) ga[i] += g[i] * bd->value[i];
                } else {
                    for (size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
            }
            if (nb) {
                S* gb = grad_buf(bd).data();
                if (kind == EwKind::mul) {
                    for (size_t i = 0; i < n; ++i) gb[i] += g[i] * ad->value[i];
                } else if (kind == EwKind::sub) {
                    for (size_t i = 0; i < n; ++i) gb[i] -= g[i];
                } else {
                    for (size_t i = 0; i < n; ++i) gb[i] += g[i];
                }
            }
        });
    }
    return res;
}

}  // namespace detail

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::elementwise(a, b, detail::EwKind::add, "add");
}
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::elementwise(a, b, detail::EwKind::sub, "sub");
}
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::elementwise(a, b, detail::EwKind::mul, "mul");
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, double c) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>(a.data()[i] * static_cast<S>(c));
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "scale");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, c] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) ga[i] += g[i] * static_cast<S>(c);
        });
    }
    return res;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, double c) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>(a.data()[i] + static_cast<S>(c));
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "add_scalar");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) ga[i] += g[i];
        });
    }
    return res;
}

// a(..., D) + bias(D), broadcast over leading dims.
template <class S>
TensorT<S> add_bias_lastdim(const TensorT<S>& a, const TensorT<S>& bias) {
    if (bias.rank() != 1 || bias.dim(0) != a.dim(-1)) {
        throw ShapeError("add_bias_lastdim: bias " + shape_str(bias.shape()) +
                         " does not match last dim of " + shape_str(a.shape()));
    }
    const int64_t D = a.dim(-1), rows = a.numel() / D;
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < D; ++j) out[r * D + j] = a.data()[r * D + j] + bias.data()[j];
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "add_bias_lastdim");
    if (detail::begin_record<S>({&a, &bias})) {
        const bool na = detail::tracked(a), nb = detail::tracked(bias);
        TapeT<S>::current()->record(res.d_, [ad = a.d_, bd = bias.d_, od = res.d_, na, nb, D, rows] {
            const S* g = od->grad.data();
            if (na) {
                S* ga = detail::grad_buf(ad).data();
                for (size_t i = 0; i < ad->value.size(); ++i) ga[i] += g[i];
            }
            if (nb) {
                S* gb = detail::grad_buf(bd).data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < D; ++j) gb[j] += g[r * D + j];
            }
        });
    }
    return res;
}

// Layer normalization over the last dimension, epsilon fixed at 1e-5.
// gain/bias may be undefined tensors for the non-affine form.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& a, const TensorT<S>& gain = {}, const TensorT<S>& bias = {}) {
    const int64_t D = a.dim(-1);
    if (D < 2) throw ShapeError("layer_norm: last dim must be >= 2, got " + shape_str(a.shape()));
    const bool affine = gain.defined();
    if (affine && (gain.rank() != 1 || gain.dim(0) != D || !bias.defined() || bias.shape() != gain.shape())) {
        throw ShapeError("layer_norm: gain/bias must be 1-d of length " + std::to_string(D));
    }
    constexpr double kEps = 1e-5;
    const int64_t rows = a.numel() / D;
    std::vector<S> out(static_cast<size_t>(a.numel()));
    auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(a.numel()));
    auto rstd = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const S* x = a.data() + r * D;
        double mean = 0.0;
        for (int64_t j = 0; j < D; ++j) mean += x[j];
        mean /= D;
        double var = 0.0;
        for (int64_t j = 0; j < D; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= D;
        const double rs = 1.0 / std::sqrt(var + kEps);
        (*rstd)[static_cast<size_t>(r)] = static_cast<S>(rs);
        for (int64_t j = 0; j < D; ++j) {
            const S h = static_cast<S>((x[j] - mean) * rs);
            (*xhat)[r * D + j] = h;
            out[r * D + j] = affine ? h * gain.data()[j] + bias.data()[j] : h;
        }
    }
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "layer_norm");
    if (detail::begin_record<S>({&a, &gain, &bias})) {
        const bool na = detail::tracked(a);
        const bool ng = affine && detail::tracked(gain);
        const bool nb = affine && detail::tracked(bias);
        auto gd = affine ? gain.d_ : nullptr;
        auto bd = affine ? bias.d_ : nullptr;
        TapeT<S>::current()->record(res.d_, [ad = a.d_, gd, bd, od = res.d_, xhat, rstd, na, ng, nb, D, rows, affine] {
            const S* g = od->grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g + r * D;
                const S* h = xhat->data() + r * D;
                if (ng) {
                    S* gg = detail::grad_buf(gd).data();
                    for (int64_t j = 0; j < D; ++j) gg[j] += gr[j] * h[j];
                }
                if (nb) {
                    S* gb = detail::grad_buf(bd).data();
                    for (int64_t j = 0; j < D; ++j) gb[j] += gr[j];
                }
                if (na) {
                    S* ga = detail::grad_buf(ad).data() + r * D;
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t j = 0; j < D; ++j) {
                        const double dh = affine ? static_cast<double>(gr[j]) * gd->value[static_cast<size_t>(j)]
                                                 : static_cast<double>(gr[j]);
                        m1 += dh;
                        m2 += dh * h[j];
                    }
                    m1 /= D;
                    m2 /= D;
                    const double rs = (*rstd)[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < D; ++j) {
                        const double dh = affine ? static_cast<double>(gr[j]) * gd->value[static_cast<size_t>(j)]
                                                 : static_cast<double>(gr[j]);
                        ga[j] += static_cast<S>((dh - m1 - static_cast<double>(h[j]) * m2) * rs);
                    }
                }
            }
        });
    }
    return res;
}

// Bilinear interpolation (align-corners = false) of the trailing two dims.
// Upsampling only: out_h >= h, out_w >= w.
template <class S>
TensorT<S> bilinear_upsample(const TensorT<S>& a, int64_t out_h, int64_t out_w) {
    if (a.rank() < 2) throw ShapeError("bilinear_upsample: rank must be >= 2");
    const int64_t h = a.dim(-2), w = a.dim(-1);
    if (h < 1 || w < 1 || out_h < 1 || out_w < 1) {
        throw ShapeError("bilinear_upsample: zero-size spatial dims");
    }
    if (out_h < h || out_w < w) {
        throw ShapeError("bilinear_upsample: output must not be smaller than input");
    }
    const int64_t batch = a.numel() / (h * w);

    struct Tap {
        int64_t i0, i1;
        double f;  // weight of i1
    };
    auto make_taps = [](int64_t in, int64_t out) {
        std::vector<Tap> taps(static_cast<size_t>(out));
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (int64_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            int64_t i0 = static_cast<int64_t>(src);
            if (i0 > in - 1) i0 = in - 1;
            const int64_t i1 = std::min<int64_t>(i0 + 1, in - 1);
            taps[static_cast<size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
        }
        return taps;
    };
    auto ty = std::make_shared<std::vector<Tap>>(make_taps(h, out_h));
    auto tx = std::make_shared<std::vector<Tap>>(make_taps(w, out_w));

    Shape os(a.shape());
    os[os.size() - 2] = out_h;
    os[os.size() - 1] = out_w;
    std::vector<S> out(static_cast<size_t>(batch * out_h * out_w));
    for (int64_t b = 0; b < batch; ++b) {
        const S* src = a.data() + b * h * w;
        S* dst = out.data() + b * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y) {
            const Tap& py = (*ty)[static_cast<size_t>(y)];
            for (int64_t x = 0; x < out_w; ++x) {
                const Tap& px = (*tx)[static_cast<size_t>(x)];
                const double v00 = src[py.i0 * w + px.i0];
                const double v01 = src[py.i0 * w + px.i1];
                const double v10 = src[py.i1 * w + px.i0];
                const double v11 = src[py.i1 * w + px.i1];
                const double top = v00 + (v01 - v00) * px.f;
                const double bot = v10 + (v11 - v10) * px.f;
                dst[y * out_w + x] = static_cast<S>(top + (bot - top) * py.f);
            }
        }
    }
    TensorT<S> res = detail::make_out(std::move(os), std::move(out), "bilinear_upsample");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, ty, tx, batch, h, w, out_h, out_w] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (int64_t b = 0; b < batch; ++b) {
                const S* gs = g + b * out_h * out_w;
                S* gd = ga + b * h * w;
                for (int64_t y = 0; y < out_h; ++y) {
                    const Tap& py = (*ty)[static_cast<size_t>(y)];
                    for (int64_t x = 0; x < out_w; ++x) {
                        const Tap& px = (*tx)[static_cast<size_t>(x)];
                        const double gv = gs[y * out_w + x];
                        gd[py.i0 * w + px.i0] += static_cast<S>(gv * (1 - py.f) * (1 - px.f));
                        gd[py.i0 * w + px.i1] += static_cast<S>(gv * (1 - py.f) * px.f);
                        gd[py.i1 * w + px.i0] += static_cast<S>(gv * py.f * (1 - px.f));
                        gd[py.i1 * w + px.i1] += static_cast<S>(gv * py.f * px.f);
                    }
                }
            }
        });
    }
    return res;
}

// out[i] = a[index[i]]; gradient scatter-adds back through the map.
template <class S>
TensorT<S> gather(const TensorT<S>& a, Shape out_shape,
                  std::shared_ptr<const std::vector<int64_t>> index) {
    if (static_cast<int64_t>(index->size()) != shape_numel(out_shape)) {
        throw ShapeError("gather: index size does not match output shape");
    }
    std::vector<S> out(index->size());
    const int64_t n = a.numel();
    for (size_t i = 0; i < index->size(); ++i) {
        const int64_t src = (*index)[i];
        if (src < 0 || src >= n) throw ShapeError("gather: index out of range");
        out[i] = a.data()[src];
    }
    TensorT<S> res = detail::make_out(std::move(out_shape), std::move(out), "gather");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, index] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < index->size(); ++i) ga[(*index)[i]] += g[i];
        });
    }
    return res;
}

template <class S>
TensorT<S> concat_lastdim(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_lastdim: no inputs");
    const int64_t rank = parts[0].rank();
    int64_t D = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat_lastdim: rank mismatch");
        for (int64_t i = 0; i < rank - 1; ++i) {
            if (p.dim(i) != parts[0].dim(i)) throw ShapeError("concat_lastdim: leading dims differ");
        }
        D += p.dim(-1);
    }
    const int64_t rows = parts[0].numel() / parts[0].dim(-1);
    Shape os(parts[0].shape());
    os[os.size() - 1] = D;
    std::vector<S> out(static_cast<size_t>(rows * D));
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t d = p.dim(-1);
        for (int64_t r = 0; r < rows; ++r) {
            std::memcpy(out.data() + r * D + off, p.data() + r * d, sizeof(S) * static_cast<size_t>(d));
        }
        off += d;
    }
    TensorT<S> res = detail::make_out(std::move(os), std::move(out), "concat_lastdim");

    std::vector<const TensorT<S>*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    TapeT<S>* cur = TapeT<S>::current();
    bool any = false;
    for (const auto& p : parts) {
        if (p.d_->tape != nullptr &&
            (cur == nullptr || p.d_->tape != cur || p.d_->tape_id != cur->id())) {
            throw Error("op: input tensor belongs to a different tape");
        }
        if (detail::tracked(p)) any = true;
    }
    if (cur && any) {
        std::vector<std::shared_ptr<detail::TensorDataT<S>>> pds;
        std::vector<int64_t> widths;
        for (const auto& p : parts) {
            if (p.d_->requires_grad && p.d_->tape == nullptr) cur->watch(p.d_);
            pds.push_back(p.d_);
            widths.push_back(p.dim(-1));
        }
        cur->record(res.d_, [pds, widths, od = res.d_, rows, D] {
            const S* g = od->grad.data();
            int64_t off = 0;
            for (size_t k = 0; k < pds.size(); ++k) {
                S* gp = detail::grad_buf(pds[k]).data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < widths[k]; ++j) gp[r * widths[k] + j] += g[r * D + off + j];
                off += widths[k];
            }
        });
    }
    return res;
}

// Stacks equal-shape tensors along a new leading axis.
template <class S>
TensorT<S> stack_first(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("stack_first: no inputs");
    for (const auto& p : parts) {
        if (p.shape() != parts[0].shape()) throw ShapeError("stack_first: shapes differ");
    }
    const int64_t slab = parts[0].numel();
    Shape os;
    os.push_back(static_cast<int64_t>(parts.size()));
    for (int64_t d : parts[0].shape()) os.push_back(d);
    std::vector<S> out(static_cast<size_t>(slab * static_cast<int64_t>(parts.size())));
    for (size_t k = 0; k < parts.size(); ++k) {
        std::memcpy(out.data() + static_cast<int64_t>(k) * slab, parts[k].data(),
                    sizeof(S) * static_cast<size_t>(slab));
    }
    TensorT<S> res = detail::make_out(std::move(os), std::move(out), "stack_first");

    TapeT<S>* cur = TapeT<S>::current();
    bool any = false;
    for (const auto& p : parts) {
        if (p.d_->tape != nullptr &&
            (cur == nullptr || p.d_->tape != cur || p.d_->tape_id != cur->id())) {
            throw Error("op: input tensor belongs to a different tape");
        }
        if (detail::tracked(p)) any = true;
    }
    if (cur && any) {
        std::vector<std::shared_ptr<detail::TensorDataT<S>>> pds;
        for (const auto& p : parts) {
            if (p.d_->requires_grad && p.d_->tape == nullptr) cur->watch(p.d_);
            pds.push_back(p.d_);
        }
        cur->record(res.d_, [pds, od = res.d_, slab] {
            const S* g = od->grad.data();
            for (size_t k = 0; k < pds.size(); ++k) {
                S* gp = detail::grad_buf(pds[k]).data();
                const S* gs = g + static_cast<int64_t>(k) * slab;
                for (int64_t i = 0; i < slab; ++i) gp[i] += gs[i];
            }
        });
    }
    return res;
}

template <class S>
TensorT<S> slice_first(const TensorT<S>& a, int64_t i) {
    if (a.rank() < 1 || i < 0 || i >= a.dim(0)) throw ShapeError("slice_first: index out of range");
    const int64_t slab = a.numel() / a.dim(0);
    Shape os(a.shape().begin() + 1, a.shape().end());
    if (os.empty()) os.push_back(1);
    std::vector<S> out(a.data() + i * slab, a.data() + (i + 1) * slab);
    TensorT<S> res = detail::make_out(std::move(os), std::move(out), "slice_first");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, i, slab] {
            S* ga = detail::grad_buf(ad).data() + i * slab;
            const S* g = od->grad.data();
            for (int64_t k = 0; k < slab; ++k) ga[k] += g[k];
        });
    }
    return res;
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
    TensorT<S> res = detail::make_out(Shape{1}, std::vector<S>{static_cast<S>(acc)}, "sum_all");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            const S g = od->grad[0];
            S* ga = detail::grad_buf(ad).data();
            for (size_t i = 0; i < ad->value.size(); ++i) ga[i] += g;
        });
    }
    return res;
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

template <class S>
TensorT<S> abs(const TensorT<S>& a) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.data()[i]);
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "abs");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) {
                const S x = ad->value[i];
                ga[i] += x > S(0) ? g[i] : (x < S(0) ? -g[i] : S(0));
            }
        });
    }
    return res;
}

template <class S>
TensorT<S> log(const TensorT<S>& a) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>(std::log(static_cast<double>(a.data()[i])));
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "log");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) ga[i] += g[i] / ad->value[i];
        });
    }
    return res;
}

template <class S>
TensorT<S> softplus(const TensorT<S>& a) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = static_cast<S>(std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))));
    }
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "softplus");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) {
                ga[i] += g[i] * static_cast<S>(detail::logistic(ad->value[i]));
            }
        });
    }
    return res;
}

// Saturating unit-interval squash: clamp(x + 0.5, 0, 1). Linear with unit
// slope in the open interval, zero gradient once saturated.
template <class S>
TensorT<S> hard_sigmoid(const TensorT<S>& a) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) {
        const S v = a.data()[i] + S(0.5);
        out[i] = v < S(0) ? S(0) : (v > S(1) ? S(1) : v);
    }
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "hard_sigmoid");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) {
                const S v = ad->value[i] + S(0.5);
                if (v > S(0) && v < S(1)) ga[i] += g[i];
            }
        });
    }
    return res;
}

enum class DropoutMode { train, infer_stochastic, infer_off };

// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
// The mask is a pure function of (seed, element index).
template <class S>
TensorT<S> dropout(const TensorT<S>& a, double p, DropoutMode mode, uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
    if (mode == DropoutMode::infer_off || p == 0.0) return a;

    const uint64_t s = seed_stream(seed, "dropout");
    auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(a.numel()));
    const double inv = 1.0 / (1.0 - p);
    std::vector<S> out(static_cast<size_t>(a.numel()));
    for (size_t i = 0; i < out.size(); ++i) {
        const bool keep = uniform01(s, static_cast<uint64_t>(i)) >= p;
        (*mask)[i] = keep ? 1 : 0;
        out[i] = keep ? static_cast<S>(a.data()[i] * static_cast<S>(inv)) : S(0);
    }
    TensorT<S> res = detail::make_out(a.shape(), std::move(out), "dropout");
    if (detail::begin_record<S>({&a})) {
        TapeT<S>::current()->record(res.d_, [ad = a.d_, od = res.d_, mask, inv] {
            S* ga = detail::grad_buf(ad).data();
            const S* g = od->grad.data();
            for (size_t i = 0; i < ad->value.size(); ++i) {
                if ((*mask)[i]) ga[i] += g[i] * static_cast<S>(inv);
            }
        });
    }
    return res;
}

}  // namespace floe
