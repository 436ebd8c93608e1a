#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfae::ad {

struct DomainError : std::runtime_error {
  DomainError(const std::string& op, std::int32_t node, double operand)
      : std::runtime_error("autodiff domain error in '" + op + "' at node " +
                           std::to_string(node) + " (operand " + std::to_string(operand) + ")"),
        op_name(op),
        node_id(node) {}
  std::string op_name;
  std::int32_t node_id;
};

class Tape;

/// Handle to a scalar node on the active tape. Reverse-mode only; forward
/// directional derivatives are carried by Dual<Var> (see dual.hpp).
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode Wengert list. Each node stores its value and a span of
/// (parent, local-partial) edges; one backward sweep visits every node once.
/// A tape is confined to a single thread. Ops below record on the
/// thread-local active tape installed by TapeScope.
class Tape {
 public:
  void clear() {
    values_.clear();
    edge_parent_.clear();
    edge_partial_.clear();
    edge_begin_.clear();
    adjoint_.clear();
  }

  std::size_t size() const { return values_.size(); }
  std::size_t edge_count() const { return edge_parent_.size(); }
  double value(Var v) const { return values_[std::size_t(v.id)]; }

  Var leaf(double v) {
    values_.push_back(v);
    edge_begin_.push_back(std::int64_t(edge_parent_.size()));
    return Var{std::int32_t(values_.size() - 1)};
  }

  /// Leaf with no parents and a fixed value; used where generic code needs a
  /// literal inside Var arithmetic.
  Var constant(double v) { return leaf(v); }

  Var node1(double v, Var p, double w) {
    edge_parent_.push_back(p.id);
    edge_partial_.push_back(w);
    values_.push_back(v);
    edge_begin_.push_back(std::int64_t(edge_parent_.size()));
    return Var{std::int32_t(values_.size() - 1)};
  }

  Var node2(double v, Var p0, double w0, Var p1, double w1) {
    edge_parent_.push_back(p0.id);
    edge_partial_.push_back(w0);
    edge_parent_.push_back(p1.id);
    edge_partial_.push_back(w1);
    values_.push_back(v);
    edge_begin_.push_back(std::int64_t(edge_parent_.size()));
    return Var{std::int32_t(values_.size() - 1)};
  }

  /// Fused dot product sum_j a_j*b_j (+ optional bias). Records 2n (+1) edges
  /// instead of 2n-1 binary nodes; this is the workhorse of network layers.
  Var dot(std::span<const Var> a, std::span<const Var> b, const Var* bias = nullptr) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double av = values_[std::size_t(a[j].id)];
      const double bv = values_[std::size_t(b[j].id)];
      acc += av * bv;
      edge_parent_.push_back(a[j].id);
      edge_partial_.push_back(bv);
      edge_parent_.push_back(b[j].id);
      edge_partial_.push_back(av);
    }
    if (bias) {
      acc += values_[std::size_t(bias->id)];
      edge_parent_.push_back(bias->id);
      edge_partial_.push_back(1.0);
    }
    values_.push_back(acc);
    edge_begin_.push_back(std::int64_t(edge_parent_.size()));
    return Var{std::int32_t(values_.size() - 1)};
  }

  Var sum(std::span<const Var> xs) {
    double acc = 0.0;
    for (Var x : xs) {
      acc += values_[std::size_t(x.id)];
      edge_parent_.push_back(x.id);
      edge_partial_.push_back(1.0);
    }
    values_.push_back(acc);
    edge_begin_.push_back(std::int64_t(edge_parent_.size()));
    return Var{std::int32_t(values_.size() - 1)};
  }

  /// One reverse sweep from `out`; adjoints of all nodes become available via
  /// adjoint(). The tape is immutable during and after the sweep, so repeated
  /// calls give identical results.
  void backward(Var out) {
    if (!out.valid() || std::size_t(out.id) >= values_.size())
      throw std::invalid_argument("backward: output is not a node on this tape");
    const std::size_t n = values_.size();
    adjoint_.assign(n, 0.0);
    adjoint_[std::size_t(out.id)] = 1.0;
    for (std::size_t i = n; i-- > 0;) {
      const double a = adjoint_[i];
      if (a == 0.0) continue;
      const std::int64_t b = i == 0 ? 0 : edge_begin_[i - 1];
      const std::int64_t e = edge_begin_[i];
      for (std::int64_t k = b; k < e; ++k)
        adjoint_[std::size_t(edge_parent_[std::size_t(k)])] += edge_partial_[std::size_t(k)] * a;
    }
  }

  double adjoint(Var v) const { return adjoint_[std::size_t(v.id)]; }
  const std::vector<double>& adjoints() const { return adjoint_; }

  /// Gradient of `out` with respect to the first n_leaves nodes (leaves are
  /// created first by convention).
  std::vector<double> gradient(Var out, std::size_t n_leaves) {
    backward(out);
    return std::vector<double>(adjoint_.begin(), adjoint_.begin() + std::ptrdiff_t(n_leaves));
  }

 private:
  std::vector<double> values_;
  std::vector<std::int32_t> edge_parent_;
  std::vector<double> edge_partial_;
  std::vector<std::int64_t> edge_begin_;  // edges of node i: [edge_begin_[i-1], edge_begin_[i])
  std::vector<double> adjoint_;
};

Tape* active_tape();
void set_active_tape(Tape* t);

/// RAII installer for the thread-local active tape.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(active_tape()) { set_active_tape(&t); }
  ~TapeScope() { set_active_tape(prev_); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

inline Tape& tape() {
  Tape* t = active_tape();
  if (!t) throw std::logic_error("no active tape (missing TapeScope)");
  return *t;
}

inline double val(double x) { return x; }
inline double val(Var v) { return tape().value(v); }

inline Var konst(double v) { return tape().constant(v); }

/// Scalar literal of type T (tape constant when T is Var).
template <class T>
T tcon(double v);
template <>
inline double tcon<double>(double v) {
  return v;
}
template <>
inline Var tcon<Var>(double v) {
  return konst(v);
}

// Bring the double overloads into this namespace so generic code written
// against rfae::ad names resolves for plain doubles too.
using std::cos;
using std::erf;
using std::exp;
using std::log;
using std::pow;
using std::sin;
using std::sqrt;
using std::tanh;

// ---- arithmetic -----------------------------------------------------------

inline Var operator+(Var a, Var b) { return tape().node2(val(a) + val(b), a, 1.0, b, 1.0); }
inline Var operator-(Var a, Var b) { return tape().node2(val(a) - val(b), a, 1.0, b, -1.0); }
inline Var operator*(Var a, Var b) { return tape().node2(val(a) * val(b), a, val(b), b, val(a)); }
inline Var operator-(Var a) { return tape().node1(-val(a), a, -1.0); }

inline Var operator/(Var a, Var b) {
  const double bv = val(b);
  if (bv == 0.0) throw DomainError("div", b.id, bv);
  const double q = val(a) / bv;
  return tape().node2(q, a, 1.0 / bv, b, -q / bv);
}

inline Var operator+(Var a, double c) { return tape().node1(val(a) + c, a, 1.0); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return tape().node1(val(a) - c, a, 1.0); }
inline Var operator-(double c, Var a) { return tape().node1(c - val(a), a, -1.0); }
inline Var operator*(Var a, double c) { return tape().node1(val(a) * c, a, c); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) {
  if (c == 0.0) throw DomainError("div", a.id, c);
  return tape().node1(val(a) / c, a, 1.0 / c);
}
inline Var operator/(double c, Var a) {
  const double av = val(a);
  if (av == 0.0) throw DomainError("div", a.id, av);
  return tape().node1(c / av, a, -c / (av * av));
}

inline Var exp(Var a) {
  const double y = std::exp(val(a));
  return tape().node1(y, a, y);
}

inline Var log(Var a) {
  const double x = val(a);
  if (x <= 0.0) throw DomainError("log", a.id, x);
  return tape().node1(std::log(x), a, 1.0 / x);
}

inline Var sin(Var a) { return tape().node1(std::sin(val(a)), a, std::cos(val(a))); }
inline Var cos(Var a) { return tape().node1(std::cos(val(a)), a, -std::sin(val(a))); }

inline Var tanh(Var a) {
  const double y = std::tanh(val(a));
  return tape().node1(y, a, 1.0 - y * y);
}

inline Var erf(Var a) {
  const double x = val(a);
  return tape().node1(std::erf(x), a, 1.1283791670955126 * std::exp(-x * x));
}

inline Var sqrt(Var a) {
  const double x = val(a);
  if (x < 0.0) throw DomainError("sqrt", a.id, x);
  const double y = std::sqrt(x);
  if (y == 0.0) throw DomainError("sqrt", a.id, x);
  return tape().node1(y, a, 0.5 / y);
}

/// x^c for constant exponent.
inline Var pow(Var a, double c) {
  const double x = val(a);
  const double y = std::pow(x, c);
  if (!std::isfinite(y)) throw DomainError("pow", a.id, x);
  const double d = c * std::pow(x, c - 1.0);
  if (!std::isfinite(d)) throw DomainError("pow", a.id, x);
  return tape().node1(y, a, d);
}

inline Var sqr(Var a) {
  const double x = val(a);
  return tape().node1(x * x, a, 2.0 * x);
}
inline double sqr(double x) { return x * x; }

/// GELU in the exact erf form; C-infinity, so nested second derivatives are
/// well defined.
template <class T>
T gelu(const T& x) {
  return x * 0.5 * (1.0 + erf(x * 0.7071067811865475244));
}

using std::erf;

}  // namespace rfae::ad
