#include "mimnet/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mimnet/error.hpp"

namespace mimnet {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  value.set_requires_grad(requires_grad);
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool tracked = false;
  for (const auto& p : parents) tracked = tracked || p.requires_grad();
  value.set_requires_grad(tracked);
  nodes_.push_back(Node{std::move(value), Tensor{}, tracked, tracked ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  bool tracked = false;
  for (const auto& p : parents) tracked = tracked || p.requires_grad();
  value.set_requires_grad(tracked);
  nodes_.push_back(Node{std::move(value), Tensor{}, tracked, tracked ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(lv.shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor(node.value.shape(), 0.0);
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.requires_grad && node.backward) node.backward(*this, node.value, node.grad);
  }
}

void Tape::accumulate(std::size_t id, const Tensor& delta) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  auto g = node.grad.values();
  auto d = delta.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (!t.is_matrix()) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// out += op(a) * op(b), with op an optional transpose.
void gemm(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& out) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? pa[p * lda + i] : pa[i * lda + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = tb ? pb[j * ldb + p] : pb[p * ldb + j];
        po[i * n + j] += av * bv;
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  gemm(a, false, b, false, out);
  return out;
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  Tensor out({x.cols(), x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(c, r) = x.at(r, c);
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  require_matrix(x, "softmax");
  if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  Tensor out(x.shape());
  const std::size_t lines = axis == 1 ? x.rows() : x.cols();
  const std::size_t len = axis == 1 ? x.cols() : x.rows();
  auto idx = [&](std::size_t line, std::size_t i) { return axis == 1 ? line * x.cols() + i : i * x.cols() + line; };
  for (std::size_t line = 0; line < lines; ++line) {
    double mx = x[idx(line, 0)];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[idx(line, i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[idx(line, i)] - mx);
      out[idx(line, i)] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[idx(line, i)] /= z;
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (a.requires_grad()) gemm(g, false, b.value(), true, tape.grad_buffer(a.id()));
    if (b.requires_grad()) gemm(a.value(), true, g, false, tape.grad_buffer(b.id()));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    tape.accumulate(a.id(), g);
    tape.accumulate(b.id(), g);
  });
}

Var add_row(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row");
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row: bias " + shape_to_string(bv.shape()) + " does not match " +
                         shape_to_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) += bv[c];
  return x.tape().record(std::move(out), {x, bias}, [x, bias](Tape& tape, const Tensor&, const Tensor& g) {
    tape.accumulate(x.id(), g);
    if (bias.requires_grad()) {
      Tensor& gb = tape.grad_buffer(bias.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    tape.accumulate(a.id(), g);
    if (b.requires_grad()) {
      Tensor& gb = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = tape.grad_buffer(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var x, double c) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= c;
  return x.tape().record(std::move(out), {x}, [x, c](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

Var add_scalar(Var x, double c) {
  Tensor out = x.value();
  for (auto& v : out.values()) v += c;
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Tensor&, const Tensor& g) { tape.accumulate(x.id(), g); });
}

Var scale_by(Var s, Var x) {
  if (s.value().size() != 1) throw DimensionError("scale_by: factor must be 1x1, got " + shape_to_string(s.value().shape()));
  const double f = s.value()[0];
  Tensor out = x.value();
  for (auto& v : out.values()) v *= f;
  return x.tape().record(std::move(out), {s, x}, [s, x](Tape& tape, const Tensor&, const Tensor& g) {
    if (s.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.value()[i];
      tape.grad_buffer(s.id())[0] += acc;
    }
    if (x.requires_grad()) {
      const double f = s.value()[0];
      Tensor& gx = tape.grad_buffer(x.id());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i];
    }
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    require_matrix(v, "concat");
    if (axis == 0) {
      if (cols && v.cols() != cols) throw DimensionError("concat: column mismatch at " + shape_to_string(v.shape()));
      cols = v.cols();
      rows += v.rows();
    } else {
      if (rows && v.rows() != rows) throw DimensionError("concat: row mismatch at " + shape_to_string(v.shape()));
      rows = v.rows();
      cols += v.cols();
    }
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out.at(offset + r, c) = v.at(r, c);
        else out.at(r, offset + c) = v.at(r, c);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [parts, axis](Tape& tape, const Tensor&, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const Tensor& v = p.value();
      if (p.requires_grad()) {
        Tensor& gp = tape.grad_buffer(p.id());
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c) gp.at(r, c) += axis == 0 ? g.at(off + r, c) : g.at(r, off + c);
      }
      off += axis == 0 ? v.rows() : v.cols();
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.value().size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.value().shape()) + " as " +
                         shape_to_string({rows, cols}));
  }
  Tensor out({rows, cols}, x.value().storage());
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Tensor&, const Tensor& g) { tape.accumulate(x.id(), g); });
}

Var transpose(Var x) {
  Tensor out = transpose(x.value());
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx.at(c, r) += g.at(r, c);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    for (auto& v : gx.values()) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s / n), {x}, [x, n](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    for (auto& v : gx.values()) v += g[0] / n;
  });
}

Var softmax(Var x, int axis) {
  Tensor out = softmax(x.value(), axis);
  return x.tape().record(std::move(out), {x}, [x, axis](Tape& tape, const Tensor& y, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    const std::size_t cols = y.cols();
    const std::size_t lines = axis == 1 ? y.rows() : cols;
    const std::size_t len = axis == 1 ? cols : y.rows();
    auto idx = [&](std::size_t line, std::size_t i) { return axis == 1 ? line * cols + i : i * cols + line; };
    for (std::size_t line = 0; line < lines; ++line) {
      double inner = 0.0;
      for (std::size_t i = 0; i < len; ++i) inner += g[idx(line, i)] * y[idx(line, i)];
      for (std::size_t i = 0; i < len; ++i) gx[idx(line, i)] += y[idx(line, i)] * (g[idx(line, i)] - inner);
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Tensor& y, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& gx = tape.grad_buffer(x.id());
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
  });
}

Var l2_norm(Var x) {
  double ss = 0.0;
  for (double v : x.value().values()) ss += v * v;
  const double n = std::sqrt(ss);
  return x.tape().record(Tensor::scalar(n), {x}, [x, n](Tape& tape, const Tensor&, const Tensor& g) {
    if (n == 0.0) return;  // subgradient 0 at the origin
    Tensor& gx = tape.grad_buffer(x.id());
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * xv[i] / n;
  });
}

Var dot(Var a, Var b) {
  if (a.value().size() != b.value().size()) {
    throw DimensionError("dot: size mismatch " + shape_to_string(a.value().shape()) + " vs " +
                         shape_to_string(b.value().shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
  return a.tape().record(Tensor::scalar(s), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = tape.grad_buffer(a.id());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * a.value()[i];
    }
  });
}

}  // namespace mimnet
