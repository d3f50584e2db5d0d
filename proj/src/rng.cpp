#include "blurcast/rng.hpp"

namespace blurcast {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

Rng make_rng(std::initializer_list<std::uint64_t> keys) { return Rng(derive_seed(keys)); }

Tensor standard_normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace blurcast
