#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tlbench {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

/// One node of the reverse-mode graph. Nodes are created in forward order and
/// stamped with a global sequence number; backward visits reachable nodes in
/// strictly decreasing sequence order, i.e. the exact reverse of the forward
/// pass.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until populated
    bool requires_grad = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    double* grad_buffer();  // allocates zeros on first use
};

} // namespace detail

/// Dense row-major tensor of doubles. Copies are shallow: two Tensor handles
/// may refer to the same node, like a shared reference in a dynamic graph.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Size of one axis; negative axes count from the back.
    std::size_t dim(int axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Direct write access. Intended for leaves (parameters, inputs); writing
    /// through an intermediate node does not invalidate cached activations.
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Reverse-mode sweep from a scalar loss. Populates grad on every
    /// requires_grad tensor reachable from this one and releases the
    /// intermediate graph.
    void backward() const;

    /// Copy of the values with no graph history.
    Tensor detach() const;
    const char* op_name() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
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

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast numpy-style (right-aligned).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Matrix product. Supported operand ranks: [m,k]x[k,n], [B,m,k]x[B,k,n] and
/// [B,m,k]x[k,n] (shared right-hand side).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor reshape(const Tensor& a, Shape shape);

/// Max-subtracted softmax along one axis.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor relu(const Tensor& x);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
/// Normalizes the last axis to zero mean / unit variance, then applies
/// gamma * x + beta with gamma, beta of shape [last].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Inverted dropout; identity when train is false or rate is zero.
Tensor dropout(const Tensor& x, double rate, bool train, Rng* rng);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = true);
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);

/// Row gather on a [N, L, d] tensor: out[n, j, :] = x[n, rows[n][j], :].
Tensor gather_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& rows);
/// Row overwrite: out = base except out[n, rows[n][j], :] = values[n, j, :].
Tensor scatter_rows(const Tensor& base, const std::vector<std::vector<std::size_t>>& rows,
                    const Tensor& values);

/// Sliding windows of length patch_len and step stride along the time axis.
/// [L] -> [N, P]; [B, L, F] -> [B, N, P*F] (each patch flattened time-major).
Tensor patchify(const Tensor& series, std::size_t patch_len, std::size_t stride);
std::size_t patch_count(std::size_t length, std::size_t patch_len, std::size_t stride);

// ---------------------------------------------------------------------------

/// Deliberately wrong backward rules, used as negative controls for the
/// finite-difference checker.
enum class GradientFault { None, Gelu, Softmax, Matmul };
void set_gradient_fault(GradientFault fault);
GradientFault gradient_fault();

} // namespace tlbench
