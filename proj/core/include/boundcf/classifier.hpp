#pragma once

// The predictive model f: a dense network with a 2-unit Softmax head over the
// encoded feature space. Class 0 is "normal", class 1 "abnormal".

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "boundcf/data.hpp"
#include "boundcf/nn.hpp"

namespace boundcf::classifier {

using nn::Vector;

inline constexpr int kNormal = 0;
inline constexpr int kAbnormal = 1;

struct ArchSpec {
  std::vector<nn::LayerSpec> hidden;  // Softmax head is appended automatically

  std::vector<nn::LayerSpec> layers(std::size_t classes = 2) const;
};

// Index of the largest component; equal components resolve to the lower index.
int argmax_label(const Vector& proba);

class ClassifierModel {
 public:
  ClassifierModel() = default;
  explicit ClassifierModel(nn::Network network);

  const nn::Network& network() const { return network_; }
  std::size_t input_width() const { return network_.input_dim(); }

  // Throws ValidationError on a width mismatch.
  Vector predict_proba(const Vector& x) const;
  int predict_label(const Vector& x) const { return argmax_label(predict_proba(x)); }
  double accuracy(const data::EncodedDataset& ds) const;

  static std::string class_name(int label) { return label == kNormal ? "normal" : "abnormal"; }

 private:
  nn::Network network_;
};

struct TrainingLog {
  std::vector<nn::EpochRecord> epochs;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct TrainedClassifier {
  ClassifierModel model;
  TrainingLog log;
};

// Crossentropy training on one-hot labels. The network is seeded from
// `config.seed`.
TrainedClassifier train_classifier(const data::EncodedDataset& train, const ArchSpec& arch,
                                   const nn::TrainConfig& config,
                                   const data::EncodedDataset* test = nullptr);

}  // namespace boundcf::classifier
