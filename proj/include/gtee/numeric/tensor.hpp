#pragma once

// Dense f64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Ops build new nodes that keep
// their inputs alive until backward() runs; after that the intermediate nodes
// drop their parents unless retain_graph is requested, and only leaves keep
// their accumulated gradients.
//
// All ops work on row-major data. Most are defined on 2-D tensors
// (rows x cols); "last dimension" ops (softmax, layernorm, bias add) treat any
// tensor as a stack of rows of length shape.back().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gtee::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    bool is_leaf = true;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const;
    // 2-D views: rows() is the product of all leading dims, cols() the last one.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // Writable access is only allowed on leaves (parameters, inputs).
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Populates grad on every requires_grad leaf reachable from this scalar.
    void backward(bool retain_graph = false) const;

    // New leaf sharing nothing with the graph.
    Tensor detach() const;
    Tensor clone(bool requires_grad = false) const { return detach_as(requires_grad); }

    std::string_view op_name() const;
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

   private:
    Tensor detach_as(bool requires_grad) const;
    std::shared_ptr<detail::Node> node_;
};

// Gradient recording switch (thread-local).
bool grad_enabled();

class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool prev_;
};

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);       // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);    // [m,k] x [n,k]^T
Tensor add(const Tensor& a, const Tensor& b);          // same shape, or b = [cols(a)] bias
Tensor sub(const Tensor& a, const Tensor& b);          // same shape
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor softmax(const Tensor& a);                       // along the last dim
Tensor log_softmax(const Tensor& a);                   // along the last dim
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& a);                          // tanh approximation
Tensor relu(const Tensor& a);
Tensor embedding(const Tensor& table, std::span<const int> ids);  // gathers rows
Tensor concat(std::span<const Tensor> parts, std::size_t axis);   // 2-D, axis 0 or 1
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);                     // 2-D
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean token cross-entropy of row-wise logits against class ids; positions whose
// target equals ignore_index are excluded. Returns a scalar.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index = -1);

// GELU constants (tanh form).
inline constexpr double kGeluCoeff = 0.044715;
inline constexpr double kSqrt2OverPi = 0.7978845608028654;

}  // namespace gtee::num
