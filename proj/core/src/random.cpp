#include "htan/random.hpp"

namespace htan {

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

Tensor normal_tensor(Shape shape, double mean, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

}  // namespace htan
