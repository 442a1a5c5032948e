#include "boundcf/classifier.hpp"

#include "boundcf/errors.hpp"

namespace boundcf::classifier {

std::vector<nn::LayerSpec> ArchSpec::layers(std::size_t classes) const {
  auto out = hidden;
  out.push_back({classes, nn::Activation::softmax(), 0.0, 0.0});
  return out;
}

int argmax_label(const Vector& proba) {
  int best = 0;
  for (Eigen::Index k = 1; k < proba.size(); ++k)
    if (proba(k) > proba(best)) best = static_cast<int>(k);
  return best;
}

ClassifierModel::ClassifierModel(nn::Network network) : network_(std::move(network)) {
  const auto& layers = network_.layers();
  if (layers.empty() || layers.back().activation.kind != nn::ActivationKind::Softmax ||
      network_.output_dim() != 2)
    throw ValidationError("a classifier needs a 2-unit Softmax output layer");
}

Vector ClassifierModel::predict_proba(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != network_.input_dim())
    throw ValidationError("classifier expects width " + std::to_string(network_.input_dim()) +
                          ", got " + std::to_string(x.size()));
  return network_.predict(x);
}

double ClassifierModel::accuracy(const data::EncodedDataset& ds) const {
  if (ds.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (predict_label(ds.rows[i]) == ds.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

TrainedClassifier train_classifier(const data::EncodedDataset& train, const ArchSpec& arch,
                                   const nn::TrainConfig& config,
                                   const data::EncodedDataset* test) {
  if (train.size() == 0) throw ValidationError("empty training set");
  config.validate();
  const auto width = static_cast<std::size_t>(train.rows.front().size());
  nn::Network net(width, arch.layers(2), config.seed);

  std::vector<Vector> targets;
  targets.reserve(train.size());
  for (int y : train.labels) targets.push_back(nn::one_hot(static_cast<std::size_t>(y), 2));

  nn::Trainer trainer(net, config);
  TrainedClassifier out;
  out.log.epochs = trainer.fit(train.rows, targets, nn::CrossEntropyLoss{});
  out.model = ClassifierModel(std::move(net));
  out.log.train_accuracy = out.model.accuracy(train);
  if (test) out.log.test_accuracy = out.model.accuracy(*test);
  return out;
}

}  // namespace boundcf::classifier
