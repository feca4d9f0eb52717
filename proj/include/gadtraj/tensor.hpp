#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gadtraj {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a caller breaks a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Receives the node itself so closures never hold an owning cycle.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }
    std::vector<double>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/**
 * Dense row-major float64 array with an optional gradient slot.
 *
 * A Tensor is a cheap handle: copies share storage. Values produced by an
 * operation are never modified afterwards; only leaves (parameters) are
 * updated in place, by the optimizer or a gradient check.
 */
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
        for (auto d : shape)
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        if (numel(shape) != values.size())
            throw DimensionError("shape " + shape_str(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
        if (requires_grad) node_->ensure_grad();
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                            bool requires_grad = false) {
        std::vector<double> data;
        std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& r : rows) {
            if (r.size() != cols) throw DimensionError("ragged initializer rows");
            data.insert(data.end(), r.begin(), r.end());
        }
        return Tensor({rows.size(), cols}, std::move(data), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.size() == 1 ? 1 : node_->shape[0]; }
    std::size_t cols() const { return node_->shape.back(); }
    bool is_matrix() const { return node_->shape.size() <= 2; }

    std::span<const double> data() const { return node_->value; }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    double item() const {
        if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }

    /// Gradient buffer; all zeros if backward never reached this tensor.
    std::span<const double> grad() const { return node_->ensure_grad(); }

    // Leaf mutation. Used by optimizers, checkpoint restore and gradient checks.
    std::span<double> mutable_data() {
        if (!is_leaf()) throw ContractError("only leaf tensors may be modified in place");
        return node_->value;
    }
    std::span<double> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() {
        auto& g = node_->ensure_grad();
        std::fill(g.begin(), g.end(), 0.0);
    }

    /// Deep copy with no history.
    Tensor detach_copy(bool requires_grad = false) const {
        return Tensor(node_->shape, node_->value, requires_grad);
    }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    /// Builds an op result. Parents are recorded only when grad mode is on and
    /// at least one input needs a gradient.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::initializer_list<Tensor> inputs,
                              std::function<void(detail::Node&)> backward) {
        return make_result(std::move(shape), std::move(values),
                           std::vector<Tensor>(inputs.begin(), inputs.end()), std::move(backward));
    }

    static Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                              std::function<void(detail::Node&)> backward) {
        Tensor out(std::move(shape), std::move(values));
        bool track = false;
        if (grad_enabled())
            for (const auto& t : inputs) track = track || t.requires_grad();
        if (track) {
            out.node_->requires_grad = true;
            out.node_->parents.reserve(inputs.size());
            for (const auto& t : inputs) out.node_->parents.push_back(t.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

} // namespace gadtraj
