#include "stpp/autodiff.hpp"

#include "stpp/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace stpp::ad {

using Index = std::size_t;

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ')';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
        throw std::invalid_argument("array data length " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_string(shape_));
    }
}

std::size_t Array::dim(int axis) const {
    const int r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[static_cast<std::size_t>(a)];
}

namespace {

std::size_t flat_index(const Shape& shape, std::initializer_list<std::size_t> index) {
    if (index.size() != shape.size()) {
        throw std::invalid_argument("index rank does not match shape " + shape_string(shape));
    }
    std::size_t flat = 0;
    std::size_t k = 0;
    for (std::size_t i : index) {
        if (i >= shape[k]) {
            throw std::out_of_range("index out of range for shape " + shape_string(shape));
        }
        flat = flat * shape[k] + i;
        ++k;
    }
    return flat;
}

}  // namespace

double Array::at(std::initializer_list<std::size_t> index) const {
    return data_[flat_index(shape_, index)];
}

double& Array::at(std::initializer_list<std::size_t> index) {
    return data_[flat_index(shape_, index)];
}

double Array::item() const {
    if (data_.size() != 1) {
        throw std::invalid_argument("item() on array of shape " + shape_string(shape_));
    }
    return data_[0];
}

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

Array Array::reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
        throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Array(std::move(shape), data_);
}

const Array& Var::value() const {
    if (tape_ == nullptr) {
        throw std::logic_error("use of an unbound Var");
    }
    return tape_->value(id_);
}

Var Tape::constant(Array value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Array value, std::string name) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, true, std::move(name)});
    return Var(this, nodes_.size() - 1);
}

Var Tape::named(const std::string& name, const Array& value, bool trainable) {
    if (auto it = by_name_.find(name); it != by_name_.end()) {
        return Var(this, it->second);
    }
    nodes_.push_back(Node{value, {}, {}, {}, trainable, name});
    by_name_.emplace(name, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Tape::push(Array value, std::vector<std::size_t> inputs, Backward back) {
    bool rg = false;
    for (auto i : inputs) {
        rg = rg || nodes_[i].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), rg ? std::move(back) : Backward{}, rg, {}});
    return Var(this, nodes_.size() - 1);
}

Array& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
        n.grad = Array(n.value.shape(), 0.0);
    }
    return n.grad;
}

const Array& Tape::grad(Var v) const {
    return nodes_.at(v.id()).grad;
}

std::map<std::string, Array> Tape::backward(Var loss) {
    if (loss.tape() != this) {
        throw std::invalid_argument("loss belongs to a different tape");
    }
    if (value(loss.id()).size() != 1) {
        throw std::invalid_argument("backward needs a scalar loss, got shape " + shape_string(value(loss.id()).shape()));
    }
    for (auto& n : nodes_) {
        n.grad = Array();
    }
    grad(loss.id()).fill(1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.back && n.requires_grad && n.grad.size() == n.value.size() && !n.value.values().empty()) {
            n.back(*this, id);
        }
    }
    std::map<std::string, Array> out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (!n.name.empty() && n.requires_grad) {
            out[n.name] = n.grad.shape() == n.value.shape() && n.grad.size() == n.value.size() ? n.grad
                                                                                                : Array(n.value.shape());
        }
    }
    return out;
}

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) {
        throw std::logic_error("use of an unbound Var");
    }
    return *a.tape();
}

Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape() || !a.valid()) {
        throw std::invalid_argument("operands live on different tapes");
    }
    return *a.tape();
}

std::size_t norm_axis(int axis, std::size_t rank, const Shape& shape) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
    }
    return static_cast<std::size_t>(a);
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                                        shape_string(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

/// Strides of `in` aligned to `out`, zero along broadcast axes.
std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> st(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t k = in.size(); k-- > 0;) {
        const std::size_t o = k + out.size() - in.size();
        st[o] = in[k] == 1 ? 0 : stride;
        stride *= in[k];
    }
    return st;
}

/// Calls f(o, ia, ib) for every flat output index o with matching input
/// offsets under the given strides.
template <typename F>
void for_each2(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t n = shape_size(out);
    if (n == 0) {
        return;
    }
    if (out.empty()) {
        f(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    const std::size_t r = out.size();
    const std::size_t inner = out[r - 1];
    const std::size_t ia_step = sa[r - 1];
    const std::size_t ib_step = sb[r - 1];
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < n; o += inner) {
        for (std::size_t j = 0; j < inner; ++j) {
            f(o + j, ia + j * ia_step, ib + j * ib_step);
        }
        for (std::size_t d = r - 1; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

template <typename Fwd, typename Da, typename Db>
Var binary(Var a, Var b, const char* op, Fwd fwd, Da da, Db db) {
    Tape& t = tape_of(a, b);
    const Shape sa_shape = a.shape();
    const Shape sb_shape = b.shape();
    Shape out = broadcast_shape(sa_shape, sb_shape, op);
    auto sa = aligned_strides(sa_shape, out);
    auto sb = aligned_strides(sb_shape, out);
    Array y(out);
    const double* A = a.value().data();
    const double* B = b.value().data();
    double* Y = y.data();
    for_each2(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { Y[o] = fwd(A[ia], B[ib]); });
    const std::size_t ida = a.id(), idb = b.id();
    return t.push(std::move(y), {ida, idb},
                  [ida, idb, out, sa = std::move(sa), sb = std::move(sb), da, db](Tape& tp, std::size_t self) {
                      const double* G = tp.grad(self).data();
                      const double* A = tp.value(ida).data();
                      const double* B = tp.value(idb).data();
                      const double* Y = tp.value(self).data();
                      if (tp.requires_grad(ida)) {
                          double* GA = tp.grad(ida).data();
                          for_each2(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                              GA[ia] += G[o] * da(A[ia], B[ib], Y[o]);
                          });
                      }
                      if (tp.requires_grad(idb)) {
                          double* GB = tp.grad(idb).data();
                          for_each2(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                              GB[ib] += G[o] * db(A[ia], B[ib], Y[o]);
                          });
                      }
                  });
}

template <typename Fwd, typename D>
Var unary(Var a, Fwd fwd, D deriv) {
    Tape& t = tape_of(a);
    const Array& x = a.value();
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = fwd(x[i]);
    }
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, deriv](Tape& tp, std::size_t self) {
        const Array& g = tp.grad(self);
        const Array& x = tp.value(ida);
        const Array& y = tp.value(self);
        Array& gx = tp.grad(ida);
        for (std::size_t i = 0; i < x.size(); ++i) {
            gx[i] += g[i] * deriv(x[i], y[i]);
        }
    });
}

/// (outer, length, inner) decomposition around one axis.
struct AxisSplit {
    std::size_t outer{1}, len{1}, inner{1};
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) {
        r.outer *= s[i];
    }
    r.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) {
        r.inner *= s[i];
    }
    return r;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

}  // namespace

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
    for (double v : b.value().values()) {
        if (v == 0.0) {
            throw std::domain_error("div: division by zero");
        }
    }
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double z) { return -z / y; });
}

Var add(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul(Var a, double c) {
    return unary(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var rsub(double c, Var a) {
    return unary(a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Var negate(Var a) {
    return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    for (double v : a.value().values()) {
        if (!(v > 0.0)) {
            throw std::domain_error("log: nonpositive input " + std::to_string(v));
        }
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var elu(Var a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var softplus(Var a) {
    return unary(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
    for (double v : a.value().values()) {
        if (v < 0.0) {
            throw std::domain_error("sqrt: negative input " + std::to_string(v));
        }
    }
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    const std::size_t ida = a.id();
    return t.push(Array::scalar(s), {ida}, [ida](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        for (auto& v : tp.grad(ida).values()) {
            v += g;
        }
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) {
        throw std::invalid_argument("mean of an empty array");
    }
    return mul(sum(a), 1.0 / static_cast<double>(n));
}

Var sum(Var a, int axis, bool keepdim) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    const std::size_t ax = norm_axis(axis, s.size(), s);
    const AxisSplit sp = split_axis(s, ax);
    Shape out = s;
    if (keepdim) {
        out[ax] = 1;
    } else {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(ax));
    }
    Array y(out);
    const double* X = a.value().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t l = 0; l < sp.len; ++l) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                y[o * sp.inner + i] += X[(o * sp.len + l) * sp.inner + i];
            }
        }
    }
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, sp](Tape& tp, std::size_t self) {
        const Array& g = tp.grad(self);
        double* GX = tp.grad(ida).data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t l = 0; l < sp.len; ++l) {
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    GX[(o * sp.len + l) * sp.inner + i] += g[o * sp.inner + i];
                }
            }
        }
    });
}

Var mean(Var a, int axis, bool keepdim) {
    const std::size_t n = a.value().dim(axis);
    if (n == 0) {
        throw std::invalid_argument("mean over an empty axis");
    }
    return mul(sum(a, axis, keepdim), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, Shape shape) {
    Tape& t = tape_of(a);
    Array y = a.value().reshaped(std::move(shape));
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida](Tape& tp, std::size_t self) {
        const Array& g = tp.grad(self);
        Array& gx = tp.grad(ida);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i];
        }
    });
}

Var broadcast_to(Var a, Shape shape) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    if (broadcast_shape(s, shape, "broadcast_to") != shape) {
        throw std::invalid_argument("broadcast_to: cannot broadcast " + shape_string(s) + " to " + shape_string(shape));
    }
    auto sa = aligned_strides(s, shape);
    std::vector<std::size_t> zero(shape.size(), 0);
    Array y(shape);
    const double* X = a.value().data();
    for_each2(shape, sa, zero, [&](std::size_t o, std::size_t ia, std::size_t) { y[o] = X[ia]; });
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, shape, sa, zero](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        double* GX = tp.grad(ida).data();
        for_each2(shape, sa, zero, [&](std::size_t o, std::size_t ia, std::size_t) { GX[ia] += G[o]; });
    });
}

Var transpose(Var a, int axis1, int axis2) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    const std::size_t a1 = norm_axis(axis1, s.size(), s);
    const std::size_t a2 = norm_axis(axis2, s.size(), s);
    std::vector<std::size_t> in_strides(s.size(), 1);
    for (std::size_t k = s.size(); k-- > 1;) {
        in_strides[k - 1] = in_strides[k] * s[k];
    }
    Shape out = s;
    std::swap(out[a1], out[a2]);
    std::vector<std::size_t> st = in_strides;
    std::swap(st[a1], st[a2]);
    std::vector<std::size_t> zero(s.size(), 0);
    Array y(out);
    const double* X = a.value().data();
    for_each2(out, st, zero, [&](std::size_t o, std::size_t ia, std::size_t) { y[o] = X[ia]; });
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, out, st, zero](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        double* GX = tp.grad(ida).data();
        for_each2(out, st, zero, [&](std::size_t o, std::size_t ia, std::size_t) { GX[ia] += G[o]; });
    });
}

Var slice(Var a, int axis, std::size_t start, std::size_t length) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    const std::size_t ax = norm_axis(axis, s.size(), s);
    if (start + length > s[ax]) {
        throw std::out_of_range("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") out of range for axis of size " + std::to_string(s[ax]));
    }
    const AxisSplit sp = split_axis(s, ax);
    Shape out = s;
    out[ax] = length;
    Array y(out);
    const double* X = a.value().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        std::copy_n(X + (o * sp.len + start) * sp.inner, length * sp.inner, y.data() + o * length * sp.inner);
    }
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, sp, start, length](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        double* GX = tp.grad(ida).data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t k = 0; k < length * sp.inner; ++k) {
                GX[(o * sp.len + start) * sp.inner + k] += G[o * length * sp.inner + k];
            }
        }
    });
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) {
        throw std::invalid_argument("concat of no arrays");
    }
    Tape& t = tape_of(parts.front());
    const Shape s0 = parts.front().shape();
    const std::size_t ax = norm_axis(axis, s0.size(), s0);
    Shape out = s0;
    out[ax] = 0;
    std::vector<std::size_t> ids, lens;
    for (const auto& p : parts) {
        if (p.tape() != &t) {
            throw std::invalid_argument("concat operands live on different tapes");
        }
        const Shape s = p.shape();
        bool ok = s.size() == s0.size();
        for (std::size_t k = 0; ok && k < s.size(); ++k) {
            ok = k == ax || s[k] == s0[k];
        }
        if (!ok) {
            throw std::invalid_argument("concat: shape mismatch " + shape_string(s0) + " vs " + shape_string(s));
        }
        out[ax] += s[ax];
        ids.push_back(p.id());
        lens.push_back(s[ax]);
    }
    const AxisSplit sp = split_axis(out, ax);
    Array y(out);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const double* X = parts[p].value().data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(X + o * lens[p] * sp.inner, lens[p] * sp.inner, y.data() + (o * sp.len + offset) * sp.inner);
        }
        offset += lens[p];
    }
    auto inputs = ids;
    return t.push(std::move(y), std::move(inputs), [ids, lens, sp](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (tp.requires_grad(ids[p])) {
                double* GX = tp.grad(ids[p]).data();
                for (std::size_t o = 0; o < sp.outer; ++o) {
                    for (std::size_t k = 0; k < lens[p] * sp.inner; ++k) {
                        GX[o * lens[p] * sp.inner + k] += G[(o * sp.len + offset) * sp.inner + k];
                    }
                }
            }
            offset += lens[p];
        }
    });
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw std::invalid_argument("matmul needs rank >= 2 operands, got " + shape_string(sa) + " and " +
                                    shape_string(sb));
    }
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa.back();
    const std::size_t n = sb.back();
    if (sb[sb.size() - 2] != k) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_string(sa) + " vs " + shape_string(sb));
    }
    const bool shared_b = sb.size() == 2;
    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) {
        batch *= sa[i];
    }
    if (!shared_b) {
        if (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
            throw std::invalid_argument("matmul: batch dims differ " + shape_string(sa) + " vs " + shape_string(sb));
        }
    }
    Shape out(sa.begin(), sa.end() - 1);
    out.push_back(n);
    Array y(out);
    const double* A = a.value().data();
    const double* B = b.value().data();
    const auto im = static_cast<Eigen::Index>(m), ik = static_cast<Eigen::Index>(k), in = static_cast<Eigen::Index>(n);
    if (shared_b) {
        Map(y.data(), static_cast<Eigen::Index>(batch) * im, in).noalias() =
            MapC(A, static_cast<Eigen::Index>(batch) * im, ik) * MapC(B, ik, in);
    } else {
        for (std::size_t bi = 0; bi < batch; ++bi) {
            Map(y.data() + bi * m * n, im, in).noalias() = MapC(A + bi * m * k, im, ik) * MapC(B + bi * k * n, ik, in);
        }
    }
    const std::size_t ida = a.id(), idb = b.id();
    return t.push(std::move(y), {ida, idb}, [=](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        const double* A = tp.value(ida).data();
        const double* B = tp.value(idb).data();
        const auto ib = static_cast<Eigen::Index>(batch);
        if (shared_b) {
            if (tp.requires_grad(ida)) {
                Map(tp.grad(ida).data(), ib * im, ik).noalias() += MapC(G, ib * im, in) * MapC(B, ik, in).transpose();
            }
            if (tp.requires_grad(idb)) {
                Map(tp.grad(idb).data(), ik, in).noalias() += MapC(A, ib * im, ik).transpose() * MapC(G, ib * im, in);
            }
            return;
        }
        for (std::size_t bi = 0; bi < batch; ++bi) {
            if (tp.requires_grad(ida)) {
                Map(tp.grad(ida).data() + bi * m * k, im, ik).noalias() +=
                    MapC(G + bi * m * n, im, in) * MapC(B + bi * k * n, ik, in).transpose();
            }
            if (tp.requires_grad(idb)) {
                Map(tp.grad(idb).data() + bi * k * n, ik, in).noalias() +=
                    MapC(A + bi * m * k, im, ik).transpose() * MapC(G + bi * m * n, im, in);
            }
        }
    });
}

Var linear(Var x, Var w, Var b) {
    return add(matmul(x, w), b);
}

Var softmax(Var a, int axis) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    const std::size_t ax = norm_axis(axis, s.size(), s);
    const AxisSplit sp = split_axis(s, ax);
    Array y(s);
    const double* X = a.value().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.len * sp.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < sp.len; ++l) {
                mx = std::max(mx, X[base + l * sp.inner]);
            }
            if (!std::isfinite(mx)) {
                throw std::domain_error("softmax: slice is entirely masked or non-finite");
            }
            double z = 0.0;
            for (std::size_t l = 0; l < sp.len; ++l) {
                const double e = std::exp(X[base + l * sp.inner] - mx);
                y[base + l * sp.inner] = e;
                z += e;
            }
            for (std::size_t l = 0; l < sp.len; ++l) {
                y[base + l * sp.inner] /= z;
            }
        }
    }
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, sp](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        const double* Y = tp.value(self).data();
        double* GX = tp.grad(ida).data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.len * sp.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < sp.len; ++l) {
                    dot += G[base + l * sp.inner] * Y[base + l * sp.inner];
                }
                for (std::size_t l = 0; l < sp.len; ++l) {
                    const std::size_t j = base + l * sp.inner;
                    GX[j] += Y[j] * (G[j] - dot);
                }
            }
        }
    });
}

Var masked_fill(Var a, const Array& mask, double value) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    if (broadcast_shape(mask.shape(), s, "masked_fill") != s) {
        throw std::invalid_argument("masked_fill: mask " + shape_string(mask.shape()) + " does not broadcast to " +
                                    shape_string(s));
    }
    auto sm = aligned_strides(mask.shape(), s);
    std::vector<std::size_t> zero(s.size(), 0);
    Array keep(s);
    const double* M = mask.data();
    for_each2(s, sm, zero, [&](std::size_t o, std::size_t im, std::size_t) { keep[o] = M[im] != 0.0 ? 0.0 : 1.0; });
    Array y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (keep[i] == 0.0) {
            y[i] = value;
        }
    }
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, keep = std::move(keep)](Tape& tp, std::size_t self) {
        const Array& g = tp.grad(self);
        Array& gx = tp.grad(ida);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += keep[i] * g[i];
        }
    });
}

Var normalize_last(Var a, double eps) {
    Tape& t = tape_of(a);
    const Shape s = a.shape();
    if (s.empty()) {
        throw std::invalid_argument("normalize_last needs rank >= 1");
    }
    const std::size_t n = s.back();
    const std::size_t rows = a.value().size() / std::max<std::size_t>(n, 1);
    Array y(s);
    std::vector<double> inv_std(rows);
    const double* X = a.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = X + r * n;
        const bool constant = std::all_of(x, x + n, [&](double v) { return v == x[0]; });
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += x[j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            var += (x[j] - mu) * (x[j] - mu);
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            y[r * n + j] = constant ? 0.0 : (x[j] - mu) * inv_std[r];
        }
    }
    const std::size_t ida = a.id();
    return t.push(std::move(y), {ida}, [ida, n, rows, inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
        const double* G = tp.grad(self).data();
        const double* Y = tp.value(self).data();
        double* GX = tp.grad(ida).data();
        for (std::size_t r = 0; r < rows; ++r) {
            double mg = 0.0, mgy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                mg += G[r * n + j];
                mgy += G[r * n + j] * Y[r * n + j];
            }
            mg /= static_cast<double>(n);
            mgy /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
                GX[r * n + j] += inv_std[r] * (G[r * n + j] - mg - Y[r * n + j] * mgy);
            }
        }
    });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
    return add(mul(normalize_last(a, eps), gamma), beta);
}

Var dropout(Var a, double rate, bool train, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    }
    if (!train || rate == 0.0) {
        return a;
    }
    Array mask(a.shape());
    const double scale = 1.0 / (1.0 - rate);
    for (auto& v : mask.values()) {
        v = rng.uniform() >= rate ? scale : 0.0;
    }
    return mul(a, a.tape()->constant(std::move(mask)));
}

}  // namespace stpp::ad
