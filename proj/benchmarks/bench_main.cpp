#include <benchmark/benchmark.h>

#include "boundcf/boundary.hpp"
#include "boundcf/classifier.hpp"
#include "boundcf/intervention.hpp"
#include "boundcf/nn.hpp"
#include "boundcf/rng.hpp"

namespace bd = boundcf::boundary;
namespace clf = boundcf::classifier;
namespace data = boundcf::data;
namespace iv = boundcf::intervention;
namespace nn = boundcf::nn;
using boundcf::Rng;
using nn::Vector;

namespace {

Vector random_vector(Rng& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform();
  return v;
}

std::vector<Vector> random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_vector(rng, d));
  return out;
}

clf::ClassifierModel random_classifier(std::size_t d, std::uint64_t seed) {
  return clf::ClassifierModel(nn::Network(
      d, {{16, nn::Activation::elu()}, {8, nn::Activation::elu()}, {2, nn::Activation::softmax()}}, seed));
}

data::Encoder continuous_encoder(std::size_t d) {
  data::FeatureSchema s;
  for (std::size_t i = 0; i < d; ++i)
    s.features.push_back({"f" + std::to_string(i), data::FeatureKind::Continuous, {}, true,
                          static_cast<int>(i + 1)});
  return data::Encoder(s, std::vector<data::FeatureRange>(d, {0.0, 1.0}),
                       std::vector<std::vector<bool>>(d));
}

void BM_DistanceToSet(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto points = random_points(n, 20, 1);
  Rng rng(2);
  const Vector x = random_vector(rng, 20);
  for (auto _ : state) benchmark::DoNotOptimize(iv::distance_to_set(x, points));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_DistanceToSet)->Arg(100)->Arg(1000)->Arg(10000);

void BM_Forward(benchmark::State& state) {
  const auto m = random_classifier(20, 3);
  Rng rng(4);
  const Vector x = random_vector(rng, 20);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict_proba(x));
}
BENCHMARK(BM_Forward);

void BM_Bisect(benchmark::State& state) {
  // Abnormal iff x0 > 1/3; endpoints on either side.
  nn::DenseLayer layer;
  layer.weights = nn::Matrix::Zero(2, 8);
  layer.weights(1, 0) = 3.0;
  layer.biases = Vector::Zero(2);
  layer.biases(1) = -1.0;
  layer.activation = nn::Activation::softmax();
  const clf::ClassifierModel m(nn::Network({layer}));
  Vector left = Vector::Constant(8, 0.5);
  Vector right = left;
  left(0) = 0.0;
  right(0) = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(bd::bisect_pair(left, right, m, {0.02, 20}));
}
BENCHMARK(BM_Bisect);

void BM_ConstrainedIntervention(benchmark::State& state) {
  const std::size_t d = 8;
  const auto encoder = continuous_encoder(d);
  const auto mask = iv::ConstraintMask::from_schema(encoder.schema());
  const auto m = random_classifier(d, 5);
  bd::CriticalSet set;
  for (const auto& p : random_points(static_cast<std::size_t>(state.range(0)), d, 6))
    set.instances.push_back({p, 0.5, 0.5, bd::Provenance::Bisected});
  Rng rng(7);
  iv::FactualCase fc;
  fc.encoded = random_vector(rng, d);
  fc.raw.assign(fc.encoded.data(), fc.encoded.data() + d);
  for (auto _ : state) benchmark::DoNotOptimize(iv::constrained_intervention(fc, set, mask, m, encoder));
}
BENCHMARK(BM_ConstrainedIntervention)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
