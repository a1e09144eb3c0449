#include "heartbrain/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <string>

#include "heartbrain/errors.hpp"

namespace hb::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Pow: return "pow";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softplus: return "softplus";
    case OpKind::Clamp: return "clamp";
    case OpKind::Sum: return "sum";
    case OpKind::Dot: return "dot";
    case OpKind::Custom: return "custom";
  }
  return "unknown";
}

double Var::value() const { return tape_->value(index_); }

Var Tape::input(double value) { return push(OpKind::Input, value, {}, {}); }

Var Tape::constant(double value) {
  return push(OpKind::Constant, value, {}, {});
}

Var Tape::push(OpKind kind, double value,
               std::span<const std::uint32_t> parents,
               std::span<const double> partials) {
  assert(parents.size() == partials.size());
  const auto index = static_cast<std::uint32_t>(values_.size());
  values_.push_back(value);
  kinds_.push_back(kind);
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  partials_.insert(partials_.end(), partials.begin(), partials.end());
  offsets_.push_back(static_cast<std::uint32_t>(parents_.size()));
  return Var(this, index);
}

std::span<const std::uint32_t> Tape::parents(std::uint32_t node) const {
  return {parents_.data() + offsets_[node],
          parents_.data() + offsets_[node + 1]};
}

namespace {

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::unary(OpKind kind, Var a) {
  const double x = a.value();
  const std::array<std::uint32_t, 1> p{a.index()};
  double value = 0.0;
  double d = 0.0;
  switch (kind) {
    case OpKind::Neg:
      value = -x;
      d = -1.0;
      break;
    case OpKind::Exp:
      value = std::exp(x);
      d = value;
      break;
    case OpKind::Log:
      value = std::log(x);
      d = 1.0 / x;
      break;
    case OpKind::Tanh:
      value = std::tanh(x);
      d = 1.0 - value * value;
      break;
    case OpKind::Softplus:
      value = stable_softplus(x);
      d = sigmoid(x);
      break;
    default:
      throw ConfigurationError(std::string("unsupported unary op kind: ") +
                               op_name(kind));
  }
  const std::array<double, 1> partial{d};
  return push(kind, value, p, partial);
}

Var Tape::binary(OpKind kind, Var a, Var b) {
  const double x = a.value();
  const double y = b.value();
  const std::array<std::uint32_t, 2> p{a.index(), b.index()};
  double value = 0.0;
  std::array<double, 2> d{};
  switch (kind) {
    case OpKind::Add:
      value = x + y;
      d = {1.0, 1.0};
      break;
    case OpKind::Sub:
      value = x - y;
      d = {1.0, -1.0};
      break;
    case OpKind::Mul:
      value = x * y;
      d = {y, x};
      break;
    case OpKind::Div:
      value = x / y;
      d = {1.0 / y, -x / (y * y)};
      break;
    case OpKind::Pow:
      value = std::pow(x, y);
      d = {y * std::pow(x, y - 1.0), x > 0 ? value * std::log(x) : 0.0};
      break;
    default:
      throw ConfigurationError(std::string("unsupported binary op kind: ") +
                               op_name(kind));
  }
  return push(kind, value, p, d);
}

std::vector<double> Tape::adjoints(Var output) const {
  std::vector<double> adj(values_.size(), 0.0);
  adj[output.index()] = 1.0;
  for (std::uint32_t i = output.index() + 1; i-- > 0;) {
    const double a = adj[i];
    if (a == 0.0) continue;
    for (std::uint32_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      adj[parents_[e]] += a * partials_[e];
    }
  }
  return adj;
}

void Tape::clear() {
  values_.clear();
  kinds_.clear();
  offsets_.assign(1, 0);
  parents_.clear();
  partials_.clear();
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  values_.reserve(nodes);
  kinds_.reserve(nodes);
  offsets_.reserve(nodes + 1);
  parents_.reserve(edges);
  partials_.reserve(edges);
}

namespace {

Tape& tape_of(Var a, Var b) {
  assert(a.tape() == b.tape());
  (void)b;
  return *a.tape();
}

Var scaled(Var a, double scale, double offset, OpKind kind) {
  const std::array<std::uint32_t, 1> p{a.index()};
  const std::array<double, 1> d{scale};
  return a.tape()->push(kind, scale * a.value() + offset, p, d);
}

}  // namespace

Var operator+(Var a, Var b) { return tape_of(a, b).binary(OpKind::Add, a, b); }
Var operator-(Var a, Var b) { return tape_of(a, b).binary(OpKind::Sub, a, b); }
Var operator*(Var a, Var b) { return tape_of(a, b).binary(OpKind::Mul, a, b); }
Var operator/(Var a, Var b) { return tape_of(a, b).binary(OpKind::Div, a, b); }
Var operator-(Var a) { return a.tape()->unary(OpKind::Neg, a); }

Var operator+(Var a, double b) { return scaled(a, 1.0, b, OpKind::Add); }
Var operator+(double a, Var b) { return scaled(b, 1.0, a, OpKind::Add); }
Var operator-(Var a, double b) { return scaled(a, 1.0, -b, OpKind::Sub); }
Var operator-(double a, Var b) { return scaled(b, -1.0, a, OpKind::Sub); }
Var operator*(Var a, double b) { return scaled(a, b, 0.0, OpKind::Mul); }
Var operator*(double a, Var b) { return scaled(b, a, 0.0, OpKind::Mul); }
Var operator/(Var a, double b) { return scaled(a, 1.0 / b, 0.0, OpKind::Div); }

Var operator/(double a, Var b) {
  const double y = b.value();
  const std::array<std::uint32_t, 1> p{b.index()};
  const std::array<double, 1> d{-a / (y * y)};
  return b.tape()->push(OpKind::Div, a / y, p, d);
}

Var exp(Var a) { return a.tape()->unary(OpKind::Exp, a); }
Var log(Var a) { return a.tape()->unary(OpKind::Log, a); }
Var tanh(Var a) { return a.tape()->unary(OpKind::Tanh, a); }
Var softplus(Var a) { return a.tape()->unary(OpKind::Softplus, a); }

Var pow(Var a, double exponent) {
  const double x = a.value();
  const std::array<std::uint32_t, 1> p{a.index()};
  const std::array<double, 1> d{exponent * std::pow(x, exponent - 1.0)};
  return a.tape()->push(OpKind::Pow, std::pow(x, exponent), p, d);
}

Var pow(Var a, Var exponent) {
  return tape_of(a, exponent).binary(OpKind::Pow, a, exponent);
}

Var clamp(Var a, double lo, double hi) {
  const double x = a.value();
  const std::array<std::uint32_t, 1> p{a.index()};
  const std::array<double, 1> d{(x > lo && x < hi) ? 1.0 : 0.0};
  return a.tape()->push(OpKind::Clamp, std::clamp(x, lo, hi), p, d);
}

Var sum(std::span<const Var> terms) {
  assert(!terms.empty());
  Tape& tape = *terms.front().tape();
  std::vector<std::uint32_t> p(terms.size());
  std::vector<double> d(terms.size(), 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    p[i] = terms[i].index();
    total += terms[i].value();
  }
  return tape.push(OpKind::Sum, total, p, d);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  assert(a.size() == b.size() && !a.empty());
  Tape& tape = *a.front().tape();
  const std::size_t n = a.size();
  std::vector<std::uint32_t> p(2 * n);
  std::vector<double> d(2 * n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a[i].value();
    const double y = b[i].value();
    total += x * y;
    p[i] = a[i].index();
    d[i] = y;
    p[n + i] = b[i].index();
    d[n + i] = x;
  }
  return tape.push(OpKind::Dot, total, p, d);
}

Var affine(std::span<const Var> weights, std::span<const Var> x, Var bias) {
  assert(weights.size() == x.size());
  Tape& tape = *bias.tape();
  const std::size_t n = x.size();
  thread_local std::vector<std::uint32_t> p;
  thread_local std::vector<double> d;
  p.resize(2 * n + 1);
  d.resize(2 * n + 1);
  double total = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i].value();
    const double xi = x[i].value();
    total += w * xi;
    p[i] = weights[i].index();
    d[i] = xi;
    p[n + i] = x[i].index();
    d[n + i] = w;
  }
  p[2 * n] = bias.index();
  d[2 * n] = 1.0;
  return tape.push(OpKind::Dot, total, p, d);
}

}  // namespace hb::ad
