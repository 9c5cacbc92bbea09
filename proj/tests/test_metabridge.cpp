#include <doctest.h>

#include "mimnet/error.hpp"
#include "mimnet/metabridge.hpp"
#include "support/oracles.hpp"
#include "support/reference_model.hpp"

using namespace mimnet;
using namespace mimnet::testing;
namespace ref = mimnet::reference;

namespace {

// Random biases so the oracle exercises every term.
Mlp random_meta(std::size_t d, std::size_t hidden, Rng& rng) {
  Mlp meta = init_meta_net(d, hidden, rng, 0.5);
  for (auto& layer : meta.layers) layer.bias = random_tensor(layer.bias.shape(), rng, 0.3);
  return meta;
}

}  // namespace

TEST_CASE("meta network shapes") {
  Rng rng(1);
  const Mlp meta = init_meta_net(4, 8, rng);
  REQUIRE(meta.layers.size() == 2);
  CHECK(meta.input_width() == 4);
  CHECK(meta.layers[0].weight.cols() == 8);
  CHECK(meta.output_width() == 16);
  for (const auto& layer : meta.layers)
    for (double b : layer.bias.values()) CHECK(b == 0.0);
  const Tensor bridges = generate_bridges(random_tensor({3, 4}, rng), meta);
  CHECK(bridges.rows() == 3);
  CHECK(bridges.cols() == 16);
}

TEST_CASE("zero meta weights give zero bridges") {
  Rng rng(2);
  Mlp meta = init_meta_net(3, 6, rng);
  for (Tensor* p : meta.parameters()) *p = Tensor(p->shape());
  const Tensor bridges = generate_bridges(random_tensor({4, 3}, rng, 5.0), meta);
  for (double v : bridges.values()) CHECK(v == 0.0);
}

TEST_CASE("duplicate interest rows give identical bridge rows") {
  Rng rng(3);
  const Mlp meta = random_meta(3, 6, rng);
  const Tensor e = random_tensor({1, 3}, rng);
  Tensor twice({2, 3});
  for (std::size_t c = 0; c < 3; ++c) twice.at(0, c) = twice.at(1, c) = e[c];
  const Tensor b = generate_bridges(twice, meta);
  for (std::size_t c = 0; c < 9; ++c) CHECK(b.at(0, c) == b.at(1, c));
}

TEST_CASE("bridges and transformed rows match the straight-line oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = trial == 0 ? 2 : 1 + rng() % 5, d = trial == 0 ? 2 : 1 + rng() % 6;
    const std::size_t hidden = trial == 0 ? 4 : 2 * d;
    const Mlp meta = random_meta(d, hidden, rng);
    const Tensor e = random_tensor({k, d}, rng);
    const Tensor u = random_tensor({d, 1}, rng);
    const Tensor bridges = generate_bridges(e, meta);
    const Tensor rows = transform_user(u, bridges);
    const ref::Mat oracle_rows = ref::transformed_users(ref::to_mat(e), meta, ref::to_vec(u));
    for (std::size_t r = 0; r < k; ++r) {
      const ref::Vec w = ref::mlp(meta, ref::to_vec(e.row(r)));
      for (std::size_t c = 0; c < d * d; ++c) CHECK(std::abs(bridges.at(r, c) - w[c]) < 1e-12);
      for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(rows.at(r, c) - oracle_rows[r][c]) < 1e-12);
    }
  }
}

TEST_CASE("bridge matrices are the row-major reshape of the generated rows") {
  Rng rng(5);
  const Tensor bridges = random_tensor({3, 9}, rng);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor m = bridge_matrix(bridges, k);
    REQUIRE(m.rows() == 3);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) CHECK(m.at(r, c) == bridges.at(k, r * 3 + c));
  }
}

TEST_CASE("transform_user examples") {
  const Tensor u = Tensor::column({1, 2});
  const Tensor identity_rows = Tensor::matrix({{1, 0, 0, 1}, {1, 0, 0, 1}});
  const Tensor same = transform_user(u, identity_rows);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(same.at(k, 0) == 1.0);
    CHECK(same.at(k, 1) == 2.0);
  }
  const Tensor zero = transform_user(u, Tensor::zeros(3, 4));
  for (double v : zero.values()) CHECK(v == 0.0);
  const Tensor swapped = transform_user(u, Tensor::matrix({{0, 1, 1, 0}}));
  CHECK(swapped.at(0, 0) == 2.0);
  CHECK(swapped.at(0, 1) == 1.0);
  CHECK_THROWS_AS(transform_user(Tensor::column({1, 2, 3}), Tensor::zeros(1, 4)), DimensionError);
}

TEST_CASE("generate_bridges rejects a mismatched interest width") {
  Rng rng(6);
  const Mlp meta = init_meta_net(3, 6, rng);
  CHECK_THROWS_AS(generate_bridges(Tensor::zeros(2, 4), meta), DimensionError);
}

TEST_CASE("transform_user is linear in the source embedding") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor bridges = random_tensor({3, 16}, rng);
    const Tensor u = random_tensor({4, 1}, rng);
    const double a = 4.0 * (static_cast<double>(rng() % 1000) / 1000.0) - 2.0;
    Tensor au = u;
    for (std::size_t i = 0; i < 4; ++i) au[i] *= a;
    const Tensor lhs = transform_user(au, bridges);
    const Tensor rhs = transform_user(u, bridges);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - a * rhs[i]) <= 1e-12 * (1.0 + std::abs(lhs[i])));
  }
}

TEST_CASE("gradient of the transformed rows with respect to the meta network matches central differences") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp meta = random_meta(3, 6, rng);
    const Tensor e = random_tensor({2, 3}, rng);
    Tensor u = random_tensor({3, 1}, rng);
    const Tensor probe = random_tensor({2, 3}, rng);
    Tape tape;
    const MlpVars vars = MlpVars::bind(tape, meta, true);
    Var uv = tape.parameter(u);
    Var rows = transform_user(uv, generate_bridges(tape.constant(e), vars));
    tape.backward(dot(rows, tape.constant(probe)));
    std::vector<Tensor> analytic;
    for (const Var& v : vars.all()) analytic.push_back(v.grad());
    analytic.push_back(uv.grad());
    std::vector<Tensor*> params = meta.parameters();
    params.push_back(&u);
    const auto report = finite_difference_check(params, [&] {
      const ref::Mat t = ref::transformed_users(ref::to_mat(e), meta, ref::to_vec(u));
      double s = 0.0;
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t c = 0; c < 3; ++c) s += t[k][c] * probe.at(k, c);
      return s;
    }, analytic);
    INFO(report.worst);
    CHECK(report.max_rel_err < kFdTolerance);
  }
}
