#include <cmath>

#include "ldct/error.hpp"
#include "ldct/ops.hpp"

namespace ldct::ad {
namespace {

void check_same(const Var& a, const Var& b, const char* op) {
  require(a.value().same_shape(b.value()), ErrorKind::kShape,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.wants_grad(k)) continue;
      auto& g = self.inputs[k]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.wants_grad(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.wants_grad(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (self.wants_grad(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (self.wants_grad(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same(a, b, "div");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (self.wants_grad(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bv[i];
    }
    if (self.wants_grad(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var scale(const Var& a, double factor) {
  Array out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_op(std::move(out), {a}, [factor](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Var add_scalar(const Var& a, double offset) {
  Array out = a.value();
  for (auto& v : out.values()) v += offset;
  return make_op(std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var leaky_relu(const Var& a, double slope) {
  Array out = a.value();
  for (auto& v : out.values())
    if (v < 0.0) v *= slope;
  return make_op(std::move(out), {a}, [slope](Node& self) {
    const auto& x = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] < 0.0 ? slope * self.grad[i] : self.grad[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return make_op(Array(Shape{}, total), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, ErrorKind::kShape, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse(const Var& a, const Var& b) {
  check_same(a, b, "mse");
  const auto n = static_cast<double>(a.value().size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    total += d * d;
  }
  return make_op(Array(Shape{}, total / n), {a, b}, [n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const double s = 2.0 * self.grad[0] / n;
    if (self.wants_grad(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (av[i] - bv[i]);
    }
    if (self.wants_grad(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s * (av[i] - bv[i]);
    }
  });
}

}  // namespace ldct::ad
