#pragma once

// Straight-line forward pass of the whole model on nested vectors, written
// without the tape or any library kernel. Used as an oracle by the tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mimnet/nn.hpp"
#include "mimnet/pipeline.hpp"
#include "mimnet/tensor.hpp"

namespace mimnet::reference {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline Vec to_vec(const Tensor& t) { return Vec(t.values().begin(), t.values().end()); }

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec squash(const Vec& z) {
  const double n2 = dot(z, z);
  Vec out(z.size(), 0.0);
  if (n2 == 0.0) return out;
  const double factor = n2 / (1.0 + n2) / std::sqrt(n2);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = factor * z[i];
  return out;
}

inline Vec softmax(const Vec& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  Vec out(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += out[i] = std::exp(x[i] - mx);
  for (auto& v : out) v /= s;
  return out;
}

struct Routing {
  Mat interests;               // K x d
  std::vector<Mat> couplings;  // per round, n x K
};

/// Dynamic routing. With `frozen_final` the last round uses those coupling
/// weights instead of the softmax of the current logits.
inline Routing route(const Mat& history, const Mat& m, Mat logits, std::size_t iterations, bool accumulate,
                     const Mat* frozen_final = nullptr) {
  const std::size_t n = history.size(), d = m.size(), k = logits[0].size();
  Mat predicted(n, Vec(d, 0.0));  // M v_j
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) predicted[j][r] += m[r][c] * history[j][c];
  Routing out;
  for (std::size_t round = 0; round < iterations; ++round) {
    const bool last = round + 1 == iterations;
    Mat w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = (last && frozen_final) ? (*frozen_final)[j] : softmax(logits[j]);
    out.couplings.push_back(w);
    out.interests.assign(k, Vec(d, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
      Vec z(d, 0.0);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < d; ++r) z[r] += w[j][c] * predicted[j][r];
      out.interests[c] = squash(z);
    }
    if (last) break;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < k; ++c) {
        const double agreement = dot(out.interests[c], predicted[j]);
        logits[j][c] = accumulate ? logits[j][c] + agreement : agreement;
      }
  }
  return out;
}

/// Feed-forward stack, ReLU between layers.
inline Vec mlp(const Mlp& net, Vec x) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Tensor& w = net.layers[l].weight;
    const Tensor& b = net.layers[l].bias;
    Vec y(w.cols());
    for (std::size_t o = 0; o < w.cols(); ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < w.rows(); ++i) s += x[i] * w.at(i, o);
      y[o] = (l + 1 < net.layers.size()) ? std::max(0.0, s) : s;
    }
    x = std::move(y);
  }
  return x;
}

/// Row k: reshape(meta(e_k), d, d) * u.
inline Mat transformed_users(const Mat& interests, const Mlp& meta, const Vec& user) {
  const std::size_t d = user.size();
  Mat out;
  for (const auto& e : interests) {
    const Vec w = mlp(meta, e);
    Vec row(d, 0.0);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) row[r] += w[r * d + c] * user[c];
    out.push_back(row);
  }
  return out;
}

inline Vec attend(const Vec& query, const Mat& rows) {
  Vec scores;
  for (const auto& r : rows) scores.push_back(dot(query, r) / std::sqrt(static_cast<double>(query.size())));
  const Vec w = softmax(scores);
  Vec out(query.size(), 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[k] * rows[k][c];
  return out;
}

struct Prediction {
  double rating = 0.0;
  double alpha = 1.0;
  Mat final_coupling;
};

/// Full forward pass for one (source user, target item).
inline Prediction predict(const MimnetModel& model, const std::vector<std::uint32_t>& history,
                          std::uint32_t source_user, std::uint32_t item, const Mat* frozen_final = nullptr) {
  const RoutingConfig routing = model.effective_routing();
  Mat h;
  for (auto j : history) h.push_back(to_vec(model.source.items.row(j)));
  const Mat logits = to_mat(initial_logits(history.size(), routing, source_user));
  const auto r = route(h, to_mat(model.capsule), logits, routing.iterations, routing.accumulate_logits, frozen_final);
  const Mat rows = transformed_users(r.interests, model.meta, to_vec(model.source.users.row(source_user)));

  const Vec v = to_vec(model.target.items.row(item));
  const Vec p = to_vec(model.prototypes.prototype_of(item));
  const AblationFlags& f = model.flags;
  Prediction out;
  out.final_coupling = r.couplings.back();
  Vec user;
  if (f.target_fine && f.target_proto) {
    const Vec fine = attend(v, rows), coarse = attend(p, rows);
    if (f.fixed_alpha) out.alpha = *f.fixed_alpha;
    else if (!f.adapt) out.alpha = 0.5;
    else {
      Vec joined = v;
      joined.insert(joined.end(), p.begin(), p.end());
      out.alpha = 1.0 / (1.0 + std::exp(-mlp(model.gate, joined)[0]));
    }
    for (std::size_t c = 0; c < v.size(); ++c) user.push_back(out.alpha * fine[c] + (1.0 - out.alpha) * coarse[c]);
  } else if (f.target_fine) {
    user = attend(v, rows);
  } else {
    user = attend(p, rows);
    out.alpha = 0.0;
  }
  out.rating = dot(user, v);
  return out;
}

}  // namespace mimnet::reference
