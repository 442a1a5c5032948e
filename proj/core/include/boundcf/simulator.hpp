#pragma once

// External validity oracle: a model of a different family from the dense
// classifier, trained on the same split. Two families are available: k-nearest
// neighbours and an L2-regularised logistic model over a degree-2 expansion.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "boundcf/data.hpp"
#include "boundcf/nn.hpp"

namespace boundcf::simulator {

using nn::Vector;

enum class Kind { Knn, LogisticQuadratic };

std::string kind_name(Kind kind);  // "knn" / "logistic_quadratic"
Kind parse_kind(const std::string& name);

struct SimulatorSpec {
  Kind kind = Kind::Knn;
  std::size_t k = 7;   // knn
  double l2 = 1.0;     // logistic: penalty on non-bias weights
  std::size_t max_newton_iters = 100;

  void validate() const;
};

// Degree-2 expansion: [1, x_1..x_n, x_i * x_j for i <= j].
Vector quadratic_features(const Vector& x);

class SimulatorModel {
 public:
  SimulatorModel() = default;

  static SimulatorModel knn(SimulatorSpec spec, std::vector<Vector> rows, std::vector<int> labels);
  static SimulatorModel logistic(SimulatorSpec spec, Vector weights, std::size_t input_width);

  const SimulatorSpec& spec() const { return spec_; }
  std::size_t input_width() const { return width_; }
  const Vector& weights() const { return weights_; }

  // Pure function of (model, x). knn: majority of the k nearest rows (distance
  // ties by lower row index), equal votes go to class 0. logistic: class 1 iff
  // the linear score is strictly positive.
  int simulate_class(const Vector& x) const;
  // Logistic score, or the abnormal vote fraction for knn.
  double score(const Vector& x) const;
  double accuracy(const data::EncodedDataset& ds) const;

  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  std::uint64_t seed = 0;
  std::size_t newton_iterations = 0;

  std::string to_json_text() const;
  static SimulatorModel from_json_text(const std::string& text);

 private:
  SimulatorSpec spec_;
  std::size_t width_ = 0;
  std::vector<Vector> rows_;
  std::vector<int> labels_;
  Vector weights_;
};

// Throws ValidationError when the training split holds a single class.
SimulatorModel train_simulator(const data::EncodedDataset& train, const SimulatorSpec& spec,
                               std::uint64_t seed, const data::EncodedDataset* test = nullptr);

}  // namespace boundcf::simulator
