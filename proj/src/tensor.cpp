#include "tlbench/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tlbench/errors.hpp"
#include "tlbench/rng.hpp"

namespace tlbench {

using detail::Node;

namespace {

std::atomic<std::uint64_t> g_sequence{1};
std::atomic<GradientFault> g_fault{GradientFault::None};
thread_local bool t_grad_enabled = true;

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value produced");
        }
    }
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

/// Splits a shape around one axis into (outer, axis length, inner) extents.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
    check_finite(op, data);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
    if (t_grad_enabled) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || in.requires_grad();
        if (needs) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

// --- broadcasting ----------------------------------------------------------

struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_stride;
    std::vector<std::size_t> b_stride;
    enum class Kind { Same, BSuffix, ASuffix, General } kind = Kind::General;
    std::size_t a_numel = 0;
    std::size_t b_numel = 0;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

bool is_suffix(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    Broadcast p;
    p.a_numel = shape_numel(a);
    p.b_numel = shape_numel(b);
    const std::size_t r = std::max(a.size(), b.size());
    p.out.assign(r, 1);
    Shape ae(r, 1), be(r, 1);
    std::copy(a.begin(), a.end(), ae.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
    std::copy(b.begin(), b.end(), be.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
    for (std::size_t i = 0; i < r; ++i) {
        if (ae[i] != be[i] && ae[i] != 1 && be[i] != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                                 " are not broadcast-compatible");
        }
        p.out[i] = std::max(ae[i], be[i]);
    }
    if (a == b) {
        p.kind = Broadcast::Kind::Same;
    } else if (a == p.out && is_suffix(a, b)) {
        p.kind = Broadcast::Kind::BSuffix;
    } else if (b == p.out && is_suffix(b, a)) {
        p.kind = Broadcast::Kind::ASuffix;
    } else {
        const auto as = contiguous_strides(ae);
        const auto bs = contiguous_strides(be);
        p.a_stride.resize(r);
        p.b_stride.resize(r);
        for (std::size_t i = 0; i < r; ++i) {
            p.a_stride[i] = ae[i] == 1 ? 0 : as[i];
            p.b_stride[i] = be[i] == 1 ? 0 : bs[i];
        }
    }
    return p;
}

/// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const Broadcast& p, Fn&& fn) {
    const std::size_t n = shape_numel(p.out);
    switch (p.kind) {
    case Broadcast::Kind::Same:
        for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
        return;
    case Broadcast::Kind::BSuffix:
        for (std::size_t i = 0; i < n; ++i) fn(i, i, i % p.b_numel);
        return;
    case Broadcast::Kind::ASuffix:
        for (std::size_t i = 0; i < n; ++i) fn(i, i % p.a_numel, i);
        return;
    case Broadcast::Kind::General:
        break;
    }
    const std::size_t r = p.out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        fn(i, ia, ib);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += p.a_stride[d];
            ib += p.b_stride[d];
            if (idx[d] < p.out[d]) break;
            ia -= p.a_stride[d] * idx[d];
            ib -= p.b_stride[d] * idx[d];
            idx[d] = 0;
        }
    }
}

enum class BinaryOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp kind, const char* op) {
    require_defined(a, op);
    require_defined(b, op);
    auto plan = plan_broadcast(a.shape(), b.shape(), op);
    std::vector<double> out(shape_numel(plan.out));
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    switch (kind) {
    case BinaryOp::Add:
        for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = ad[ia] + bd[ib]; });
        break;
    case BinaryOp::Sub:
        for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = ad[ia] - bd[ib]; });
        break;
    case BinaryOp::Mul:
        for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = ad[ia] * bd[ib]; });
        break;
    }
    Shape out_shape = plan.out;
    return make_result(op, std::move(out_shape), std::move(out), {a, b}, [plan, kind](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        const double* g = self.grad.data();
        double* ga = na.requires_grad ? na.grad_buffer() : nullptr;
        double* gb = nb.requires_grad ? nb.grad_buffer() : nullptr;
        const double* ad = na.data.data();
        const double* bd = nb.data.data();
        for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            switch (kind) {
            case BinaryOp::Add:
                if (ga) ga[ia] += g[i];
                if (gb) gb[ib] += g[i];
                break;
            case BinaryOp::Sub:
                if (ga) ga[ia] += g[i];
                if (gb) gb[ib] -= g[i];
                break;
            case BinaryOp::Mul:
                if (ga) ga[ia] += g[i] * bd[ib];
                if (gb) gb[ib] += g[i] * ad[ia];
                break;
            }
        });
    });
}

// --- matmul kernels ---------------------------------------------------------

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += dC[m,n] * B[k,n]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = dc + i * n;
        double* arow = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            arow[p] += acc;
        }
    }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* brow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double x) {
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

} // namespace

// ---------------------------------------------------------------------------

double* Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("Tensor: dimension sizes must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("Tensor: shape " + shape_string(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    check_finite("Tensor::from", values);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
    require_defined(*this, "Tensor::shape");
    return node_->shape;
}

std::size_t Tensor::dim(int axis) const {
    return shape()[normalize_axis(axis, rank(), "Tensor::dim")];
}

std::size_t Tensor::numel() const {
    return node_ ? node_->data.size() : 0;
}

std::span<const double> Tensor::data() const {
    require_defined(*this, "Tensor::data");
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    require_defined(*this, "Tensor::mutable_data");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw DimensionError("Tensor::at: index rank mismatch");
    std::size_t off = 0;
    std::size_t d = 0;
    for (auto i : index) {
        if (i >= s[d]) throw DimensionError("Tensor::at: index out of range");
        off = off * s[d] + i;
        ++d;
    }
    return node_->data[off];
}

bool Tensor::requires_grad() const {
    return node_ && node_->requires_grad;
}

void Tensor::set_requires_grad(bool value) {
    require_defined(*this, "Tensor::set_requires_grad");
    node_->requires_grad = value;
}

bool Tensor::has_grad() const {
    return node_ && !node_->grad.empty();
}

std::span<const double> Tensor::grad() const {
    require_defined(*this, "Tensor::grad");
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    require_defined(*this, "Tensor::mutable_grad");
    node_->grad_buffer();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

const char* Tensor::op_name() const {
    return node_ ? node_->op : "undefined";
}

Tensor Tensor::detach() const {
    require_defined(*this, "Tensor::detach");
    return from(node_->shape, node_->data, false);
}

void Tensor::backward() const {
    require_defined(*this, "backward");
    if (numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_string(shape()));
    }
    if (!node_->requires_grad) {
        throw ContractError("backward: loss does not depend on any tensor that requires grad");
    }
    // Owning handles: clearing a node's inputs below must not free nodes that
    // are still waiting in the sweep.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen;
    std::vector<std::shared_ptr<Node>> stack{node_};
    while (!stack.empty()) {
        std::shared_ptr<Node> n = std::move(stack.back());
        stack.pop_back();
        if (!seen.insert(n.get()).second) continue;
        for (auto& in : n->inputs) {
            if (in->requires_grad) stack.push_back(in);
        }
        order.push_back(std::move(n));
    }
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) { return x->seq > y->seq; });
    node_->grad.assign(1, 1.0);
    for (auto& n : order) {
        n->grad_buffer();
        if (n->backward) {
            n->backward(*n);
            n->backward = nullptr;
            n->inputs.clear();
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
    t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    t_grad_enabled = previous_;
}

bool grad_enabled() {
    return t_grad_enabled;
}

void set_gradient_fault(GradientFault fault) {
    g_fault.store(fault);
}

GradientFault gradient_fault() {
    return g_fault.load();
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, BinaryOp::Add, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, BinaryOp::Sub, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, BinaryOp::Mul, "mul");
}

Tensor scale(const Tensor& a, double factor) {
    require_defined(a, "scale");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return make_result("scale", a.shape(), std::move(out), {a}, [factor](Node& self) {
        Node& in = *self.inputs[0];
        double* g = in.grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    const auto& as = a.shape();
    const auto& bs = b.shape();
    std::size_t batch = 1;
    bool shared_rhs = false;
    if (as.size() == 2 && bs.size() == 2) {
        batch = 1;
    } else if (as.size() == 3 && bs.size() == 3) {
        if (as[0] != bs[0]) {
            throw DimensionError("matmul: batch sizes differ: " + shape_string(as) + " x " + shape_string(bs));
        }
        batch = as[0];
    } else if (as.size() == 3 && bs.size() == 2) {
        batch = as[0];
        shared_rhs = true;
    } else {
        throw DimensionError("matmul: unsupported operand ranks " + shape_string(as) + " x " + shape_string(bs));
    }
    const std::size_t m = as[as.size() - 2];
    const std::size_t k = as.back();
    const std::size_t kb = bs[bs.size() - 2];
    const std::size_t n = bs.back();
    if (k != kb) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_string(as) + " x " + shape_string(bs));
    }
    Shape out_shape = as.size() == 2 ? Shape{m, n} : Shape{batch, m, n};
    if (shared_rhs) {
        // Fold the batch into rows: [B*m, k] x [k, n].
        std::vector<double> out(batch * m * n, 0.0);
        gemm_nn(a.data().data(), b.data().data(), out.data(), batch * m, k, n);
        return make_result("matmul", std::move(out_shape), std::move(out), {a, b},
                           [rows = batch * m, k, n](Node& self) {
                               Node& na = *self.inputs[0];
                               Node& nb = *self.inputs[1];
                               if (na.requires_grad) gemm_nt(self.grad.data(), nb.data.data(), na.grad_buffer(), rows, k, n);
                               if (nb.requires_grad) gemm_tn(na.data.data(), self.grad.data(), nb.grad_buffer(), rows, k, n);
                           });
    }
    std::vector<double> out(batch * m * n, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
        gemm_nn(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n, m, k, n);
    }
    return make_result("matmul", std::move(out_shape), std::move(out), {a, b}, [batch, m, k, n](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        const bool fault = gradient_fault() == GradientFault::Matmul;
        for (std::size_t s = 0; s < batch; ++s) {
            const double* g = self.grad.data() + s * m * n;
            if (na.requires_grad) {
                double* ga = na.grad_buffer() + s * m * k;
                gemm_nt(g, nb.data.data() + s * k * n, ga, m, k, n);
                if (fault) {
                    for (std::size_t i = 0; i < m * k; ++i) ga[i] *= 0.5;
                }
            }
            if (nb.requires_grad) gemm_tn(na.data.data() + s * m * k, g, nb.grad_buffer() + s * k * n, m, k, n);
        }
    });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
    require_defined(a, "permute");
    const auto& s = a.shape();
    const std::size_t r = s.size();
    if (order.size() != r) throw DimensionError("permute: order has wrong length");
    std::vector<bool> used(r, false);
    for (auto o : order) {
        if (o >= r || used[o]) throw DimensionError("permute: invalid axis order");
        used[o] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[order[i]];
    const auto in_strides = contiguous_strides(s);
    // src_stride[i]: input stride of the axis that lands at output position i.
    std::vector<std::size_t> src_stride(r);
    for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[order[i]];
    const std::size_t n = a.numel();
    // map[out_index] = in_index
    auto mapping = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (*mapping)[i] = src;
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            src += src_stride[d];
            if (idx[d] < out_shape[d]) break;
            src -= src_stride[d] * idx[d];
            idx[d] = 0;
        }
    }
    std::vector<double> out(n);
    const double* in = a.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = in[(*mapping)[i]];
    return make_result("permute", std::move(out_shape), std::move(out), {a}, [mapping](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < mapping->size(); ++i) g[(*mapping)[i]] += self.grad[i];
    });
}

Tensor transpose(const Tensor& a) {
    require_defined(a, "transpose");
    const std::size_t r = a.rank();
    if (r < 2) throw DimensionError("transpose: rank must be at least 2");
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[r - 1], order[r - 2]);
    return permute(a, order);
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor softmax(const Tensor& x, int axis) {
    require_defined(x, "softmax");
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
    }
    const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
    const AxisSplit sp = split_at(x.shape(), ax);
    std::vector<double> out(x.numel());
    const double* in = x.data().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.len * sp.inner + i;
            double mx = in[base];
            for (std::size_t j = 1; j < sp.len; ++j) mx = std::max(mx, in[base + j * sp.inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < sp.len; ++j) {
                const double e = std::exp(in[base + j * sp.inner] - mx);
                out[base + j * sp.inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < sp.len; ++j) out[base + j * sp.inner] /= total;
        }
    }
    return make_result("softmax", x.shape(), std::move(out), {x}, [sp](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        const double* y = self.data.data();
        const double* dy = self.grad.data();
        const bool fault = gradient_fault() == GradientFault::Softmax;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.len * sp.inner + i;
                double dot = 0.0;
                if (!fault) {
                    for (std::size_t j = 0; j < sp.len; ++j) {
                        const std::size_t k = base + j * sp.inner;
                        dot += dy[k] * y[k];
                    }
                }
                for (std::size_t j = 0; j < sp.len; ++j) {
                    const std::size_t k = base + j * sp.inner;
                    g[k] += y[k] * (dy[k] - dot);
                }
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    require_defined(x, "relu");
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_result("relu", x.shape(), std::move(out), {x}, [](Node& self) {
        Node& in = *self.inputs[0];
        double* g = in.grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (in.data[i] > 0.0) g[i] += self.grad[i];
        }
    });
}

Tensor gelu(const Tensor& x) {
    require_defined(x, "gelu");
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * normal_cdf(in[i]);
    return make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
        Node& in = *self.inputs[0];
        double* g = in.grad_buffer();
        const bool fault = gradient_fault() == GradientFault::Gelu;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double v = in.data[i];
            const double d = fault ? normal_cdf(v) : normal_cdf(v) + v * normal_pdf(v);
            g[i] += self.grad[i] * d;
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_defined(x, "layer_norm");
    const std::size_t n = x.shape().back();
    if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
        throw DimensionError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
    }
    const std::size_t rows = x.numel() / n;
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    const double* in = x.data().data();
    const double* gm = gamma.data().data();
    const double* bt = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * rs;
            (*xhat)[r * n + j] = h;
            out[r * n + j] = gm[j] * h + bt[j];
        }
    }
    return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [xhat, rstd, n, rows](Node& self) {
        Node& nx = *self.inputs[0];
        Node& ng = *self.inputs[1];
        Node& nb = *self.inputs[2];
        const double* dy = self.grad.data();
        const double* gm = ng.data.data();
        if (ng.requires_grad || nb.requires_grad) {
            double* dg = ng.requires_grad ? ng.grad_buffer() : nullptr;
            double* db = nb.requires_grad ? nb.grad_buffer() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (dg) dg[j] += dy[r * n + j] * (*xhat)[r * n + j];
                    if (db) db[j] += dy[r * n + j];
                }
            }
        }
        if (!nx.requires_grad) return;
        double* dx = nx.grad_buffer();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0;
            double mean_dh_h = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double dh = dy[r * n + j] * gm[j];
                mean_dh += dh;
                mean_dh_h += dh * (*xhat)[r * n + j];
            }
            mean_dh *= inv_n;
            mean_dh_h *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
                const double dh = dy[r * n + j] * gm[j];
                dx[r * n + j] += (*rstd)[r] * (dh - mean_dh - (*xhat)[r * n + j] * mean_dh_h);
            }
        }
    });
}

Tensor dropout(const Tensor& x, double rate, bool train, Rng* rng) {
    require_defined(x, "dropout");
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout: training mode requires a generator");
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = rng->uniform() >= rate ? keep_scale : 0.0;
        out[i] = in[i] * (*mask)[i];
    }
    return make_result("dropout", x.shape(), std::move(out), {x}, [mask](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    });
}

Tensor sum(const Tensor& x) {
    require_defined(x, "sum");
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_result("sum", {1}, {total}, {x}, [](Node& self) {
        Node& in = *self.inputs[0];
        double* g = in.grad_buffer();
        for (std::size_t i = 0; i < in.data.size(); ++i) g[i] += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    require_defined(x, "mean");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) {
    require_defined(x, "mean_axis");
    const std::size_t ax = normalize_axis(axis, x.rank(), "mean_axis");
    const AxisSplit sp = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    if (keepdim) {
        out_shape[ax] = 1;
    } else {
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
        if (out_shape.empty()) out_shape = {1};
    }
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    const double* in = x.data().data();
    const double inv = 1.0 / static_cast<double>(sp.len);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.len; ++j) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                out[o * sp.inner + i] += in[(o * sp.len + j) * sp.inner + i];
            }
        }
    }
    for (auto& v : out) v *= inv;
    return make_result("mean_axis", std::move(out_shape), std::move(out), {x}, [sp, inv](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t j = 0; j < sp.len; ++j) {
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    g[(o * sp.len + j) * sp.inner + i] += self.grad[o * sp.inner + i] * inv;
                }
            }
        }
    });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
    require_defined(prediction, "mse_loss");
    require_defined(target, "mse_loss");
    if (prediction.shape() != target.shape()) {
        throw DimensionError("mse_loss: prediction " + shape_string(prediction.shape()) + " vs target " +
                             shape_string(target.shape()));
    }
    const auto p = prediction.data();
    const auto t = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
    const double n = static_cast<double>(p.size());
    return make_result("mse_loss", {1}, {total / n}, {prediction, target}, [n](Node& self) {
        Node& np = *self.inputs[0];
        Node& nt = *self.inputs[1];
        const double g = self.grad[0] * 2.0 / n;
        double* gp = np.requires_grad ? np.grad_buffer() : nullptr;
        double* gt = nt.requires_grad ? nt.grad_buffer() : nullptr;
        for (std::size_t i = 0; i < np.data.size(); ++i) {
            const double d = g * (np.data[i] - nt.data[i]);
            if (gp) gp[i] += d;
            if (gt) gt[i] -= d;
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    for (const auto& p : parts) require_defined(p, "concat");
    const std::size_t ax = normalize_axis(axis, parts[0].rank(), "concat");
    Shape out_shape = parts[0].shape();
    out_shape[ax] = 0;
    std::vector<std::size_t> lens;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != ax && s[d] != parts[0].shape()[d]) {
                throw DimensionError("concat: shapes " + shape_string(parts[0].shape()) + " and " + shape_string(s) +
                                     " differ off the concat axis");
            }
        }
        lens.push_back(s[ax]);
        out_shape[ax] += s[ax];
    }
    const AxisSplit sp = split_at(out_shape, ax);
    std::vector<double> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const double* in = parts[k].data().data();
        const std::size_t block = lens[k] * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(in + o * block, block, out.begin() + static_cast<std::ptrdiff_t>(o * sp.len * sp.inner + offset));
        }
        offset += block;
    }
    return make_result("concat", std::move(out_shape), std::move(out), parts, [sp, lens](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            Node& in = *self.inputs[k];
            const std::size_t block = lens[k] * sp.inner;
            if (in.requires_grad) {
                double* g = in.grad_buffer();
                for (std::size_t o = 0; o < sp.outer; ++o) {
                    const double* src = self.grad.data() + o * sp.len * sp.inner + offset;
                    for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
                }
            }
            offset += block;
        }
    });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
    require_defined(x, "slice");
    const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
    if (begin >= end || end > x.shape()[ax]) {
        throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") invalid for axis of length " + std::to_string(x.shape()[ax]));
    }
    const AxisSplit sp = split_at(x.shape(), ax);
    Shape out_shape = x.shape();
    out_shape[ax] = end - begin;
    const std::size_t block = (end - begin) * sp.inner;
    std::vector<double> out(sp.outer * block);
    const double* in = x.data().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        std::copy_n(in + (o * sp.len + begin) * sp.inner, block, out.begin() + static_cast<std::ptrdiff_t>(o * block));
    }
    return make_result("slice", std::move(out_shape), std::move(out), {x}, [sp, begin, block](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < block; ++i) g[(o * sp.len + begin) * sp.inner + i] += self.grad[o * block + i];
        }
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& rows) {
    require_defined(x, "gather_rows");
    if (x.rank() != 3) throw DimensionError("gather_rows: expected [N, L, d], got " + shape_string(x.shape()));
    const std::size_t n = x.shape()[0], len = x.shape()[1], d = x.shape()[2];
    if (rows.size() != n) throw DimensionError("gather_rows: index list count differs from batch");
    const std::size_t u = rows.empty() ? 0 : rows[0].size();
    if (u == 0) throw DimensionError("gather_rows: empty row selection");
    for (const auto& r : rows) {
        if (r.size() != u) throw DimensionError("gather_rows: ragged row selection");
        for (auto i : r) {
            if (i >= len) throw DimensionError("gather_rows: row index out of range");
        }
    }
    std::vector<double> out(n * u * d);
    const double* in = x.data().data();
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < u; ++j) {
            std::copy_n(in + (s * len + rows[s][j]) * d, d, out.begin() + static_cast<std::ptrdiff_t>((s * u + j) * d));
        }
    }
    return make_result("gather_rows", {n, u, d}, std::move(out), {x}, [rows, len, u, d](Node& self) {
        double* g = self.inputs[0]->grad_buffer();
        for (std::size_t s = 0; s < rows.size(); ++s) {
            for (std::size_t j = 0; j < u; ++j) {
                for (std::size_t c = 0; c < d; ++c) g[(s * len + rows[s][j]) * d + c] += self.grad[(s * u + j) * d + c];
            }
        }
    });
}

Tensor scatter_rows(const Tensor& base, const std::vector<std::vector<std::size_t>>& rows, const Tensor& values) {
    require_defined(base, "scatter_rows");
    require_defined(values, "scatter_rows");
    if (base.rank() != 3 || values.rank() != 3) throw DimensionError("scatter_rows: expected rank-3 operands");
    const std::size_t n = base.shape()[0], len = base.shape()[1], d = base.shape()[2];
    const std::size_t u = values.shape()[1];
    if (values.shape()[0] != n || values.shape()[2] != d || rows.size() != n) {
        throw DimensionError("scatter_rows: values " + shape_string(values.shape()) + " incompatible with base " +
                             shape_string(base.shape()));
    }
    auto overwritten = std::make_shared<std::vector<char>>(n * len, 0);
    std::vector<double> out(base.data().begin(), base.data().end());
    const double* vals = values.data().data();
    for (std::size_t s = 0; s < n; ++s) {
        if (rows[s].size() != u) throw DimensionError("scatter_rows: ragged row selection");
        for (std::size_t j = 0; j < u; ++j) {
            const std::size_t r = rows[s][j];
            if (r >= len) throw DimensionError("scatter_rows: row index out of range");
            if ((*overwritten)[s * len + r]) throw ContractError("scatter_rows: duplicate row index");
            (*overwritten)[s * len + r] = 1;
            std::copy_n(vals + (s * u + j) * d, d, out.begin() + static_cast<std::ptrdiff_t>((s * len + r) * d));
        }
    }
    return make_result("scatter_rows", base.shape(), std::move(out), {base, values},
                       [rows, overwritten, len, u, d](Node& self) {
                           Node& nb = *self.inputs[0];
                           Node& nv = *self.inputs[1];
                           if (nb.requires_grad) {
                               double* g = nb.grad_buffer();
                               for (std::size_t row = 0; row < overwritten->size(); ++row) {
                                   if ((*overwritten)[row]) continue;
                                   for (std::size_t c = 0; c < d; ++c) g[row * d + c] += self.grad[row * d + c];
                               }
                           }
                           if (nv.requires_grad) {
                               double* g = nv.grad_buffer();
                               for (std::size_t s = 0; s < rows.size(); ++s) {
                                   for (std::size_t j = 0; j < u; ++j) {
                                       for (std::size_t c = 0; c < d; ++c) {
                                           g[(s * u + j) * d + c] += self.grad[(s * len + rows[s][j]) * d + c];
                                       }
                                   }
                               }
                           }
                       });
}

std::size_t patch_count(std::size_t length, std::size_t patch_len, std::size_t stride) {
    if (patch_len == 0 || stride == 0) throw ConfigError("patchify: patch length and stride must be positive");
    if (patch_len > length) {
        throw ConfigError("patchify: patch length " + std::to_string(patch_len) + " exceeds series length " +
                          std::to_string(length));
    }
    return (length - patch_len) / stride + 1;
}

Tensor patchify(const Tensor& series, std::size_t patch_len, std::size_t stride) {
    require_defined(series, "patchify");
    const auto& s = series.shape();
    std::size_t batch = 1, len = 0, feat = 1;
    if (s.size() == 1) {
        len = s[0];
    } else if (s.size() == 3) {
        batch = s[0];
        len = s[1];
        feat = s[2];
    } else {
        throw DimensionError("patchify: expected [L] or [B, L, F], got " + shape_string(s));
    }
    const std::size_t count = patch_count(len, patch_len, stride);
    const std::size_t width = patch_len * feat;
    std::vector<double> out(batch * count * width);
    const double* in = series.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t p = 0; p < count; ++p) {
            std::copy_n(in + (b * len + p * stride) * feat, width,
                        out.begin() + static_cast<std::ptrdiff_t>((b * count + p) * width));
        }
    }
    Shape out_shape = s.size() == 1 ? Shape{count, patch_len} : Shape{batch, count, width};
    return make_result("patchify", std::move(out_shape), std::move(out), {series},
                       [batch, len, feat, count, width, stride](Node& self) {
                           double* g = self.inputs[0]->grad_buffer();
                           for (std::size_t b = 0; b < batch; ++b) {
                               for (std::size_t p = 0; p < count; ++p) {
                                   const double* src = self.grad.data() + (b * count + p) * width;
                                   double* dst = g + (b * len + p * stride) * feat;
                                   for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                               }
                           }
                       });
}

} // namespace tlbench
