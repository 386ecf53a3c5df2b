#include "gtee/numeric/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "gtee/error.hpp"

namespace gtee::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Node = detail::Node;
using NodePtr = std::shared_ptr<Node>;

thread_local bool g_grad_enabled = true;

ConstMatMap cmap(const std::vector<double>& v, std::size_t r, std::size_t c) {
    return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

MatMap mmap(std::vector<double>& v, std::size_t r, std::size_t c) {
    return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

std::size_t rows_of(const Shape& s) {
    if (s.empty()) return 1;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
    return r;
}

std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

[[noreturn]] void dim_error(std::string_view op, const std::string& detail) {
    throw DimensionError(std::string(op) + ": " + detail);
}

const NodePtr& need(const Tensor& t, std::string_view op) {
    if (!t.defined()) dim_error(op, "undefined input tensor");
    return t.node();
}

// Creates the output node and wires parents when any input needs a gradient.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->is_leaf = false;
    bool any = false;
    if (g_grad_enabled) {
        for (const Tensor* t : inputs) any = any || t->requires_grad();
    }
    if (any) {
        n->requires_grad = true;
        for (const Tensor* t : inputs) n->parents.push_back(t->node());
        n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
}

Tensor make_result_n(std::string_view op, Shape shape, std::vector<double> value,
                     std::span<const Tensor> inputs, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->is_leaf = false;
    bool any = false;
    if (g_grad_enabled) {
        for (const Tensor& t : inputs) any = any || t.requires_grad();
    }
    if (any) {
        n->requires_grad = true;
        for (const Tensor& t : inputs) n->parents.push_back(t.node());
        n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(num::numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (num::numel(shape) != data.size()) {
        dim_error("from", "shape " + num::to_string(shape) + " does not hold " + std::to_string(data.size()) +
                              " values");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }

std::size_t Tensor::dim(std::size_t i) const {
    const auto& s = shape();
    if (i >= s.size()) dim_error("dim", "axis " + std::to_string(i) + " out of range for " + num::to_string(s));
    return s[i];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }
std::span<const double> Tensor::data() const { return need(*this, "data")->value; }

std::span<double> Tensor::mutable_data() {
    if (!need(*this, "mutable_data")->is_leaf) {
        throw ContractError("mutable_data: tensors produced by an op are immutable");
    }
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item: tensor of shape " + num::to_string(shape()) + " is not a scalar");
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (!need(*this, "set_requires_grad")->is_leaf) {
        throw ContractError("set_requires_grad: only leaves can change gradient tracking");
    }
    node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return need(*this, "is_leaf")->is_leaf; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return need(*this, "grad")->grad; }
std::span<double> Tensor::mutable_grad() { return need(*this, "grad")->grad_buffer(); }

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

std::string_view Tensor::op_name() const { return need(*this, "op_name")->op; }

Tensor Tensor::detach() const { return detach_as(false); }

Tensor Tensor::detach_as(bool requires_grad) const {
    const auto& n = need(*this, "detach");
    return from(n->shape, n->value, requires_grad);
}

void Tensor::backward(bool retain_graph) const {
    const auto& root = need(*this, "backward");
    if (root->value.size() != 1) {
        throw ContractError("backward: output of shape " + num::to_string(root->shape) + " is not a scalar");
    }
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order (inputs before users).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    if (!retain_graph) {
        for (Node* n : order) {
            if (n->is_leaf) continue;
            n->parents.clear();
            n->backward_fn = nullptr;
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- ops -----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    need(a, "matmul");
    need(b, "matmul");
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        dim_error("matmul", "cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    mmap(out, m, n).noalias() = cmap(a.node()->value, m, k) * cmap(b.node()->value, k, n);
    return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        auto g = cmap(self.grad, m, n);
        if (pa.requires_grad) mmap(pa.grad_buffer(), m, k).noalias() += g * cmap(pb.value, k, n).transpose();
        if (pb.requires_grad) mmap(pb.grad_buffer(), k, n).noalias() += cmap(pa.value, m, k).transpose() * g;
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    need(a, "matmul_nt");
    need(b, "matmul_nt");
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
        dim_error("matmul_nt", "cannot multiply " + to_string(a.shape()) + " by transpose of " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<double> out(m * n);
    mmap(out, m, n).noalias() = cmap(a.node()->value, m, k) * cmap(b.node()->value, n, k).transpose();
    return make_result("matmul_nt", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        auto g = cmap(self.grad, m, n);
        if (pa.requires_grad) mmap(pa.grad_buffer(), m, k).noalias() += g * cmap(pb.value, n, k);
        if (pb.requires_grad) mmap(pb.grad_buffer(), n, k).noalias() += g.transpose() * cmap(pa.value, m, k);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    need(a, "add");
    need(b, "add");
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.data().begin(), a.data().end());
        const auto& bv = b.node()->value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
        return make_result("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
            for (auto* p : {self.parents[0].get(), self.parents[1].get()}) {
                if (!p->requires_grad) continue;
                auto& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        });
    }
    if (b.ndim() == 1 && b.dim(0) == a.cols()) {
        const std::size_t r = a.rows(), c = a.cols();
        std::vector<double> out(a.data().begin(), a.data().end());
        const auto& bv = b.node()->value;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
        return make_result("add", a.shape(), std::move(out), {&a, &b}, [r, c](Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                auto& g = pa.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
            }
        });
    }
    dim_error("add", "shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " are not compatible");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    need(a, "sub");
    need(b, "sub");
    if (a.shape() != b.shape()) {
        dim_error("sub", "shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto& bv = b.node()->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_result("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    need(a, "mul");
    need(b, "mul");
    if (a.shape() != b.shape()) {
        dim_error("mul", "shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto& bv = b.node()->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_result("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    need(a, "scale");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return make_result("scale", a.shape(), std::move(out), {&a}, [s](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Tensor softmax(const Tensor& a) {
    need(a, "softmax");
    const std::size_t r = a.rows(), c = a.cols();
    if (c == 0) dim_error("softmax", "empty last dimension");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw ContractError("softmax: every entry of row " + std::to_string(i) + " is -inf");
        }
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (row[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) row[j] /= z;
    }
    return make_result("softmax", a.shape(), std::move(out), {&a}, [r, c](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = self.value.data() + i * c;
            const double* dy = self.grad.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& a) {
    need(a, "log_softmax");
    const std::size_t r = a.rows(), c = a.cols();
    if (c == 0) dim_error("log_softmax", "empty last dimension");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
    }
    return make_result("log_softmax", a.shape(), std::move(out), {&a}, [r, c](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = self.value.data() + i * c;
            const double* dy = self.grad.data() + i * c;
            double total = 0.0;
            for (std::size_t j = 0; j < c; ++j) total += dy[j];
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += dy[j] - std::exp(y[j]) * total;
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    need(x, "layernorm");
    need(gamma, "layernorm");
    need(beta, "layernorm");
    const std::size_t r = x.rows(), c = x.cols();
    if (gamma.numel() != c || beta.numel() != c) {
        dim_error("layernorm", "gain/bias of size " + std::to_string(gamma.numel()) + "/" +
                                   std::to_string(beta.numel()) + " for rows of width " + std::to_string(c));
    }
    std::vector<double> out(r * c), xhat(r * c), rstd(r);
    const auto& xv = x.node()->value;
    const auto& gv = gamma.node()->value;
    const auto& bv = beta.node()->value;
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = xv.data() + i * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * rstd[i];
            out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
        }
    }
    return make_result(
        "layernorm", x.shape(), std::move(out), {&x, &gamma, &beta},
        [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const auto& dy = self.grad;
            if (pg.requires_grad || pb.requires_grad) {
                auto* gg = pg.requires_grad ? pg.grad_buffer().data() : nullptr;
                auto* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        if (gg) gg[j] += dy[i * c + j] * xhat[i * c + j];
                        if (gb) gb[j] += dy[i * c + j];
                    }
            }
            if (px.requires_grad) {
                auto& gx = px.grad_buffer();
                const double inv_c = 1.0 / static_cast<double>(c);
                for (std::size_t i = 0; i < r; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double g = dy[i * c + j] * pg.value[j];
                        s1 += g;
                        s2 += g * xhat[i * c + j];
                    }
                    for (std::size_t j = 0; j < c; ++j) {
                        const double g = dy[i * c + j] * pg.value[j];
                        gx[i * c + j] += rstd[i] * (g - s1 * inv_c - xhat[i * c + j] * s2 * inv_c);
                    }
                }
            }
        });
}

Tensor gelu(const Tensor& a) {
    need(a, "gelu");
    std::vector<double> out(a.numel());
    const auto& xv = a.node()->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = xv[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x)));
    }
    return make_result("gelu", a.shape(), std::move(out), {&a}, [](Node& self) {
        auto& p = *self.parents[0];
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = p.value[i];
            const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
            const double t = std::tanh(u);
            const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
            g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
        }
    });
}

Tensor relu(const Tensor& a) {
    need(a, "relu");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_result("relu", a.shape(), std::move(out), {&a}, [](Node& self) {
        auto& p = *self.parents[0];
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.value[i] > 0.0) g[i] += self.grad[i];
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    need(table, "embedding");
    if (table.ndim() != 2) dim_error("embedding", "table must be 2-D, got " + to_string(table.shape()));
    const std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    const auto& tv = table.node()->value;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
            dim_error("embedding", "id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v) + " rows");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return make_result("embedding", {ids.size(), d}, std::move(out), {&table}, [d, idv = std::move(idv)](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < idv.size(); ++i) {
            double* dst = g.data() + static_cast<std::size_t>(idv[i]) * d;
            const double* src = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) dim_error("concat", "no inputs");
    if (axis > 1) dim_error("concat", "axis must be 0 or 1");
    std::vector<std::size_t> sizes;
    std::size_t other = 0, total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        need(parts[i], "concat");
        if (parts[i].ndim() != 2) dim_error("concat", "input " + std::to_string(i) + " is not 2-D");
        const std::size_t o = parts[i].dim(1 - axis);
        if (i == 0) other = o;
        if (o != other) {
            dim_error("concat", "input " + std::to_string(i) + " has shape " + to_string(parts[i].shape()) +
                                    ", incompatible along axis " + std::to_string(axis));
        }
        sizes.push_back(parts[i].dim(axis));
        total += sizes.back();
    }
    Shape shape = axis == 0 ? Shape{total, other} : Shape{other, total};
    std::vector<double> out(total * other);
    if (axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<std::ptrdiff_t>(off));
            off += p.numel();
        }
    } else {
        std::size_t off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto& pv = parts[k].node()->value;
            for (std::size_t i = 0; i < other; ++i)
                std::copy_n(pv.data() + i * sizes[k], sizes[k], out.data() + i * total + off);
            off += sizes[k];
        }
    }
    return make_result_n("concat", std::move(shape), std::move(out), parts,
                         [axis, other, total, sizes = std::move(sizes)](Node& self) {
                             std::size_t off = 0;
                             for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                 auto& p = *self.parents[k];
                                 if (p.requires_grad) {
                                     auto& g = p.grad_buffer();
                                     if (axis == 0) {
                                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off * other + i];
                                     } else {
                                         for (std::size_t i = 0; i < other; ++i)
                                             for (std::size_t j = 0; j < sizes[k]; ++j)
                                                 g[i * sizes[k] + j] += self.grad[i * total + off + j];
                                     }
                                 }
                                 off += sizes[k];
                             }
                         });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    need(a, "slice");
    if (a.ndim() != 2 || axis > 1 || begin > end || end > a.dim(axis)) {
        dim_error("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                               std::to_string(axis) + " of " + to_string(a.shape()));
    }
    const std::size_t r = a.dim(0), c = a.dim(1), n = end - begin;
    const auto& av = a.node()->value;
    std::vector<double> out;
    Shape shape;
    if (axis == 0) {
        out.assign(av.begin() + static_cast<std::ptrdiff_t>(begin * c), av.begin() + static_cast<std::ptrdiff_t>(end * c));
        shape = {n, c};
    } else {
        out.resize(r * n);
        for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + begin, n, out.data() + i * n);
        shape = {r, n};
    }
    return make_result("slice", std::move(shape), std::move(out), {&a}, [axis, begin, r, c, n](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        if (axis == 0) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
        } else {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * c + begin + j] += self.grad[i * n + j];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    need(a, "reshape");
    if (num::numel(shape) != a.numel()) {
        dim_error("reshape", "cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {&a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor transpose(const Tensor& a) {
    need(a, "transpose");
    if (a.ndim() != 2) dim_error("transpose", "expects 2-D, got " + to_string(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(r * c);
    mmap(out, c, r) = cmap(a.node()->value, r, c).transpose();
    return make_result("transpose", {c, r}, std::move(out), {&a}, [r, c](Node& self) {
        mmap(self.parents[0]->grad_buffer(), r, c) += cmap(self.grad, c, r).transpose();
    });
}

Tensor sum(const Tensor& a) {
    need(a, "sum");
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result("sum", {}, {s}, {&a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    need(a, "mean");
    if (a.numel() == 0) throw ContractError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index) {
    need(logits, "cross_entropy");
    const std::size_t r = logits.rows(), c = logits.cols();
    if (targets.size() != r) {
        dim_error("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(r) + " rows");
    }
    std::vector<double> probs(logits.data().begin(), logits.data().end());
    double loss = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < r; ++i) {
        double* row = probs.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (row[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) row[j] /= z;
        if (targets[i] == ignore_index) continue;
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
            dim_error("cross_entropy", "target " + std::to_string(targets[i]) + " outside " + std::to_string(c) +
                                           " classes");
        }
        const double x = logits.data()[i * c + static_cast<std::size_t>(targets[i])];
        loss += mx + std::log(z) - x;
        ++count;
    }
    if (count == 0) throw ContractError("cross_entropy: every target is ignored");
    loss /= static_cast<double>(count);
    std::vector<int> tv(targets.begin(), targets.end());
    return make_result("cross_entropy", {}, {loss}, {&logits},
                       [r, c, count, ignore_index, tv = std::move(tv), probs = std::move(probs)](Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           const double s = self.grad[0] / static_cast<double>(count);
                           for (std::size_t i = 0; i < r; ++i) {
                               if (tv[i] == ignore_index) continue;
                               for (std::size_t j = 0; j < c; ++j) g[i * c + j] += s * probs[i * c + j];
                               g[i * c + static_cast<std::size_t>(tv[i])] -= s;
                           }
                       });
}

}  // namespace gtee::num
