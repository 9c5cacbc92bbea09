#include "mimnet/interest.hpp"

#include <algorithm>
#include <cmath>

#include "mimnet/error.hpp"
#include "mimnet/random.hpp"

namespace mimnet {

namespace {

double order_free_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

Tensor capsule_sum_value(const Tensor& w, const Tensor& x) {
  const std::size_t n = w.rows(), k = w.cols(), d = x.cols();
  Tensor z({k, d});
  std::vector<double> terms(n);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < n; ++i) terms[i] = w.at(i, c) * x.at(i, j);
      z.at(c, j) = order_free_sum(terms);
    }
  return z;
}

Tensor squash_rows_value(const Tensor& z) {
  Tensor out(z.shape());
  const std::size_t d = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += z.at(r, c) * z.at(r, c);
    if (sq == 0.0) continue;
    const double factor = std::sqrt(sq) / (1.0 + sq);
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = factor * z.at(r, c);
  }
  return out;
}

}  // namespace

void RoutingConfig::validate() const {
  if (interests < 1) throw ConfigError("routing needs at least one interest capsule");
  if (iterations < 1) throw ConfigError("routing needs at least one iteration");
  if (!(logit_init_sigma >= 0.0)) throw ConfigError("logit init sigma must be non-negative");
}

Tensor squash(const Tensor& z) {
  return squash_rows_value(z.reshaped({1, z.size()})).reshaped(z.shape());
}

Var squash_rows(Var z) {
  Tensor out = squash_rows_value(z.value());
  return z.tape().record(std::move(out), {z}, [z](Tape& tape, const Tensor&, const Tensor& g) {
    const Tensor& zv = z.value();
    Tensor& gz = tape.grad_buffer(z.id());
    const std::size_t d = zv.cols();
    for (std::size_t r = 0; r < zv.rows(); ++r) {
      double sq = 0.0, zg = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        sq += zv.at(r, c) * zv.at(r, c);
        zg += zv.at(r, c) * g.at(r, c);
      }
      if (sq == 0.0) continue;
      // out = f(n) z with f(n) = n / (1 + n^2); f'(n) = (1 - n^2) / (1 + n^2)^2.
      const double n = std::sqrt(sq);
      const double f = n / (1.0 + sq);
      const double fprime_over_n = (1.0 - sq) / ((1.0 + sq) * (1.0 + sq) * n);
      for (std::size_t c = 0; c < d; ++c) gz.at(r, c) += f * g.at(r, c) + fprime_over_n * zg * zv.at(r, c);
    }
  });
}

Var capsule_sum(Var weights, Var inputs) {
  const Tensor& w = weights.value();
  const Tensor& x = inputs.value();
  if (w.rows() != x.rows()) {
    throw DimensionError("capsule_sum: weights " + shape_to_string(w.shape()) + " vs inputs " +
                         shape_to_string(x.shape()));
  }
  return weights.tape().record(capsule_sum_value(w, x), {weights, inputs},
                               [weights, inputs](Tape& tape, const Tensor&, const Tensor& g) {
                                 const Tensor& wv = weights.value();
                                 const Tensor& xv = inputs.value();
                                 const std::size_t n = wv.rows(), k = wv.cols(), d = xv.cols();
                                 if (weights.requires_grad()) {
                                   Tensor& gw = tape.grad_buffer(weights.id());
                                   for (std::size_t i = 0; i < n; ++i)
                                     for (std::size_t c = 0; c < k; ++c) {
                                       double acc = 0.0;
                                       for (std::size_t j = 0; j < d; ++j) acc += g.at(c, j) * xv.at(i, j);
                                       gw.at(i, c) += acc;
                                     }
                                 }
                                 if (inputs.requires_grad()) {
                                   Tensor& gx = tape.grad_buffer(inputs.id());
                                   for (std::size_t i = 0; i < n; ++i)
                                     for (std::size_t j = 0; j < d; ++j) {
                                       double acc = 0.0;
                                       for (std::size_t c = 0; c < k; ++c) acc += wv.at(i, c) * g.at(c, j);
                                       gx.at(i, j) += acc;
                                     }
                                 }
                               });
}

Tensor initial_logits(std::size_t n, const RoutingConfig& config, std::uint64_t user_key) {
  Rng rng(mix_seed(config.seed, user_key));
  return normal_tensor({n, config.interests}, config.logit_init_sigma, rng);
}

Var route(Var history, Var transform, const Tensor& init_logits, const RoutingConfig& config, RoutingTrace* trace) {
  config.validate();
  const Tensor& h = history.value();
  if (h.rank() != 2 || h.rows() == 0) throw RoutingError("routing needs a non-empty history");
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();
  const Tensor& m = transform.value();
  if (m.rows() != d || m.cols() != d) {
    throw DimensionError("routing: transform " + shape_to_string(m.shape()) + " does not match history width " +
                         std::to_string(d));
  }
  if (init_logits.rows() != n || init_logits.cols() != config.interests) {
    throw DimensionError("routing: initial logits " + shape_to_string(init_logits.shape()) + " vs expected " +
                         shape_to_string({n, config.interests}));
  }

  // Row j of predictions is M v_j.
  Var predictions = matmul(history, transpose(transform));
  Tensor logits = init_logits;
  for (std::size_t round = 0;; ++round) {
    Tensor w = softmax(logits, 1);
    if (trace) trace->weights.push_back(w);
    if (round + 1 == config.iterations) {
      Var coupling = history.tape().constant(std::move(w));
      return squash_rows(capsule_sum(coupling, predictions));
    }
    const Tensor interests = squash_rows_value(capsule_sum_value(w, predictions.value()));
    // agreement[j, k] = e_k . (M v_j)
    const Tensor& pv = predictions.value();
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < config.interests; ++k) {
        double agreement = 0.0;
        for (std::size_t c = 0; c < d; ++c) agreement += interests.at(k, c) * pv.at(j, c);
        logits.at(j, k) = config.accumulate_logits ? logits.at(j, k) + agreement : agreement;
      }
  }
}

Tensor route(const Tensor& history, const Tensor& transform, const RoutingConfig& config, std::uint64_t user_key,
             RoutingTrace* trace) {
  config.validate();
  if (history.rank() != 2 || history.rows() == 0) throw RoutingError("routing needs a non-empty history");
  Tape tape;
  Var h = tape.constant(history);
  Var m = tape.constant(transform);
  return route(h, m, initial_logits(history.rows(), config, user_key), config, trace).value();
}

}  // namespace mimnet
