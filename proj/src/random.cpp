#include "mimnet/random.hpp"

namespace mimnet {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor normal_tensor(Shape shape, double sigma, Rng& rng) {
  Tensor t(std::move(shape));
  if (sigma == 0.0) return t;
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace mimnet
