#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace stpp {
class Rng;
}

namespace stpp::ad {

using Shape = std::vector<std::size_t>;

[[nodiscard]] std::string shape_string(const Shape& shape);
[[nodiscard]] std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 array holds one value.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array scalar(double v) { return Array(Shape{}, v); }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t rank() const { return shape_.size(); }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    /// Size of `axis`; negative values count from the back.
    [[nodiscard]] std::size_t dim(int axis) const;

    [[nodiscard]] double* data() { return data_.data(); }
    [[nodiscard]] const double* data() const { return data_.data(); }
    [[nodiscard]] std::vector<double>& values() { return data_; }
    [[nodiscard]] const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Element at a full multi-index.
    [[nodiscard]] double at(std::initializer_list<std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);

    /// The single value of a size-1 array.
    [[nodiscard]] double item() const;
    [[nodiscard]] bool all_finite() const;

    void fill(double v);
    [[nodiscard]] Array reshaped(Shape shape) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

class Tape;

/// Handle to a tape node.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] const Array& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] Tape* tape() const { return tape_; }
    [[nodiscard]] bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_{nullptr};
    std::size_t id_{0};
};

/// Record of a forward computation for reverse-mode differentiation.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf without gradient.
    Var constant(Array value);
    /// Leaf with gradient; a named leaf is reported by backward().
    Var variable(Array value, std::string name = {});
    /// Named leaf created once per name; later calls return the same node.
    Var named(const std::string& name, const Array& value, bool trainable = true);

    /// Adds an interior node. `back` reads grad(self) and accumulates into
    /// the inputs' gradients.
    Var push(Array value, std::vector<std::size_t> inputs, Backward back);

    [[nodiscard]] const Array& value(std::size_t id) const { return nodes_[id].value; }
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Gradient slot of a node, allocated as zeros on first use.
    Array& grad(std::size_t id);
    [[nodiscard]] const Array& grad(Var v) const;

    /// Reverse sweep from a scalar loss. Gradient slots are reset first, so
    /// repeated calls give identical results. Returns gradients of every
    /// named leaf that requires a gradient.
    std::map<std::string, Array> backward(Var loss);

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Array value;
        Array grad;
        std::vector<std::size_t> inputs;
        Backward back;
        bool requires_grad{false};
        std::string name;
    };
    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

// Elementwise binary ops with numpy-style broadcasting.
[[nodiscard]] Var add(Var a, Var b);
[[nodiscard]] Var sub(Var a, Var b);
[[nodiscard]] Var mul(Var a, Var b);
/// Throws std::domain_error on division by exactly zero.
[[nodiscard]] Var div(Var a, Var b);

[[nodiscard]] Var add(Var a, double c);
[[nodiscard]] Var mul(Var a, double c);
/// c - a
[[nodiscard]] Var rsub(double c, Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double c) { return add(a, c); }
inline Var operator+(double c, Var a) { return add(a, c); }
inline Var operator-(Var a, double c) { return add(a, -c); }
inline Var operator-(double c, Var a) { return rsub(c, a); }
inline Var operator*(Var a, double c) { return mul(a, c); }
inline Var operator*(double c, Var a) { return mul(a, c); }
inline Var operator/(Var a, double c) { return mul(a, 1.0 / c); }

// Elementwise unary ops.
[[nodiscard]] Var negate(Var a);
inline Var operator-(Var a) { return negate(a); }
[[nodiscard]] Var exp(Var a);
/// Throws std::domain_error on nonpositive input.
[[nodiscard]] Var log(Var a);
[[nodiscard]] Var tanh(Var a);
[[nodiscard]] Var sigmoid(Var a);
/// ELU with unit alpha.
[[nodiscard]] Var elu(Var a);
[[nodiscard]] Var softplus(Var a);
[[nodiscard]] Var square(Var a);
/// Throws std::domain_error on negative input.
[[nodiscard]] Var sqrt(Var a);

// Reductions.
[[nodiscard]] Var sum(Var a);
[[nodiscard]] Var mean(Var a);
[[nodiscard]] Var sum(Var a, int axis, bool keepdim = false);
[[nodiscard]] Var mean(Var a, int axis, bool keepdim = false);

// Shape ops.
[[nodiscard]] Var reshape(Var a, Shape shape);
/// Explicit broadcast to a larger shape.
[[nodiscard]] Var broadcast_to(Var a, Shape shape);
/// Swaps two axes.
[[nodiscard]] Var transpose(Var a, int axis1 = -2, int axis2 = -1);
[[nodiscard]] Var slice(Var a, int axis, std::size_t start, std::size_t length);
[[nodiscard]] Var concat(const std::vector<Var>& parts, int axis);

/// (..., m, k) x (k, n) or (..., m, k) x (..., k, n) with equal batch dims.
[[nodiscard]] Var matmul(Var a, Var b);
/// x W + b over the last axis.
[[nodiscard]] Var linear(Var x, Var w, Var b);

/// Softmax along `axis`. Throws if a slice is entirely -infinity.
[[nodiscard]] Var softmax(Var a, int axis = -1);
/// Sets entries where the (broadcast) mask is nonzero to `value`. Masked
/// entries get zero gradient.
[[nodiscard]] Var masked_fill(Var a, const Array& mask, double value = -std::numeric_limits<double>::infinity());
/// (x - mean) / sqrt(var + eps) along the last axis; a constant slice maps to
/// exact zeros.
[[nodiscard]] Var normalize_last(Var a, double eps = 1e-5);
[[nodiscard]] Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
/// Inverted dropout. Identity when !train or rate == 0.
[[nodiscard]] Var dropout(Var a, double rate, bool train, Rng& rng);

}  // namespace stpp::ad
