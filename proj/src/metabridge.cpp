#include "mimnet/metabridge.hpp"

#include <cmath>

#include "mimnet/error.hpp"

namespace mimnet {

Mlp init_meta_net(std::size_t dim, std::size_t hidden, Rng& rng, double weight_sigma) {
  if (dim < 1 || hidden < 1) throw ConfigError("meta network widths must be positive");
  return Mlp::init({dim, hidden, dim * dim}, weight_sigma, rng);
}

Var generate_bridges(Var interests, const MlpVars& meta) {
  const Tensor& e = interests.value();
  const Tensor& first = meta.weights.front().value();
  const Tensor& last = meta.weights.back().value();
  if (!e.is_matrix() || e.cols() != first.rows() || last.cols() != e.cols() * e.cols()) {
    throw DimensionError("generate_bridges: interests " + shape_to_string(e.shape()) + " incompatible with meta net " +
                         shape_to_string(first.shape()) + " -> " + shape_to_string(last.shape()));
  }
  return mlp_forward(interests, meta);
}

Var transform_user(Var user_source, Var bridges) {
  const Tensor& u = user_source.value();
  const Tensor& w = bridges.value();
  const std::size_t d = u.size();
  if (u.cols() != 1 || w.cols() != d * d) {
    throw DimensionError("transform_user: user " + shape_to_string(u.shape()) + " vs bridges " +
                         shape_to_string(w.shape()));
  }
  const std::size_t k = w.rows();
  Var stacked = reshape(bridges, k * d, d);
  return reshape(matmul(stacked, user_source), k, d);
}

Tensor bridge_matrix(const Tensor& bridges, std::size_t k) {
  const auto d = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(bridges.cols()))));
  if (d * d != bridges.cols()) throw DimensionError("bridge rows must hold d*d values, got " + shape_to_string(bridges.shape()));
  return bridges.row(k).reshaped({d, d});
}

Tensor generate_bridges(const Tensor& interests, const Mlp& meta) {
  Tape tape;
  return generate_bridges(tape.constant(interests), MlpVars::bind(tape, meta, false)).value();
}

Tensor transform_user(const Tensor& user_source, const Tensor& bridges) {
  Tape tape;
  return transform_user(tape.constant(user_source), tape.constant(bridges)).value();
}

}  // namespace mimnet
