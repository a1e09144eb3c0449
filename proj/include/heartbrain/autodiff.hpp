#pragma once

// Reverse-mode automatic differentiation over scalar computation graphs.
//
// A Tape records nodes in creation order, so parents always precede their
// children. Each node stores its value, the indices of its parents and the
// local partial derivative with respect to each parent; a reverse sweep then
// accumulates adjoints. Multi-parent nodes (sum, dot, custom composites) keep
// the node count small for the dense layers and Gaussian-process terms used
// elsewhere in the library.

#include <cstdint>
#include <span>
#include <vector>

namespace hb::ad {

enum class OpKind : std::uint8_t {
  Input,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Pow,
  Tanh,
  Softplus,
  Clamp,
  Sum,
  Dot,
  Custom,
};

const char* op_name(OpKind kind);

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  double value() const;
  std::uint32_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(double value);
  Var constant(double value);

  // Appends a node with explicit local partials. Used by composite operations
  // that compute their own derivatives.
  Var push(OpKind kind, double value, std::span<const std::uint32_t> parents,
           std::span<const double> partials);

  // Elementary dispatch. Throws ConfigurationError when `kind` is not a
  // supported operation of the requested arity.
  Var unary(OpKind kind, Var a);
  Var binary(OpKind kind, Var a, Var b);

  // Adjoint of every node with respect to `output` (d output / d node).
  std::vector<double> adjoints(Var output) const;

  std::size_t size() const { return values_.size(); }
  double value(std::uint32_t node) const { return values_[node]; }
  OpKind kind(std::uint32_t node) const { return kinds_[node]; }
  std::span<const std::uint32_t> parents(std::uint32_t node) const;

  void clear();
  void reserve(std::size_t nodes, std::size_t edges);

 private:
  std::vector<double> values_;
  std::vector<OpKind> kinds_;
  std::vector<std::uint32_t> offsets_{0};
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);

Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

Var exp(Var a);
Var log(Var a);
Var pow(Var a, double exponent);
Var pow(Var a, Var exponent);
Var tanh(Var a);
Var softplus(Var a);
// Gradient is 1 strictly inside (lo, hi) and 0 where the clamp is active.
Var clamp(Var a, double lo, double hi);
Var sum(std::span<const Var> terms);
Var dot(std::span<const Var> a, std::span<const Var> b);
// a·b + bias as one node.
Var affine(std::span<const Var> weights, std::span<const Var> x, Var bias);

// Gradient of a scalar function of `x`. `f` receives the tape and the input
// variables and returns the output variable.
template <class F>
std::vector<double> grad(F&& f, std::span<const double> x) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(x.size());
  for (double xi : x) inputs.push_back(tape.input(xi));
  const Var out = f(tape, std::span<const Var>(inputs));
  const std::vector<double> adj = tape.adjoints(out);
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = adj[inputs[i].index()];
  return g;
}

}  // namespace hb::ad
