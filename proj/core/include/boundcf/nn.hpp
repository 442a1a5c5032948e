#pragma once

// Dense feedforward networks with exact backpropagation.
//
// Parameters live in Eigen matrices (weights are out_dim x in_dim). A forward
// pass records every pre- and post-activation so that gradients with respect
// to both the parameters and the network input can be recovered; the input
// gradient is what lets an autoencoder train against a frozen classifier.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "boundcf/rng.hpp"

namespace boundcf::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ActivationKind { Identity, ReLU, LeakyReLU, ELU, Tanh, Sigmoid, Softmax };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double param = 0.0;  // LeakyReLU slope or ELU alpha

  static Activation identity() { return {ActivationKind::Identity, 0.0}; }
  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation leaky_relu(double slope = 0.3) { return {ActivationKind::LeakyReLU, slope}; }
  static Activation elu(double alpha = 1.0) { return {ActivationKind::ELU, alpha}; }
  static Activation tanh() { return {ActivationKind::Tanh, 0.0}; }
  static Activation sigmoid() { return {ActivationKind::Sigmoid, 0.0}; }
  static Activation softmax() { return {ActivationKind::Softmax, 0.0}; }

  bool operator==(const Activation&) const = default;
};

std::string activation_name(ActivationKind kind);
// Accepts "relu", "leaky_relu", "elu", "tanh", "sigmoid", "softmax", "identity".
// `param` is ignored unless the activation takes one; nullopt selects the default.
Activation parse_activation(std::string_view name, std::optional<double> param = std::nullopt);

Vector activate(const Activation& act, const Vector& z);
// Given dL/da and the layer's (z, a), return dL/dz.
Vector activation_backward(const Activation& act, const Vector& z, const Vector& a,
                           const Vector& grad_a);

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector biases;   // out_dim
  Activation activation;
  double l2_factor = 0.0;
  double dropout_rate = 0.0;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

struct LayerSpec {
  std::size_t units = 0;
  Activation activation;
  double l2_factor = 0.0;
  double dropout_rate = 0.0;
};

struct ForwardTrace {
  std::vector<Vector> inputs;       // input to each layer (after the previous dropout)
  std::vector<Vector> pre;          // z = W a + b
  std::vector<Vector> post;         // activation(z), before dropout
  std::vector<Vector> dropout_scale;  // empty when dropout inactive for the layer
  const Vector& output() const;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double factor);
  double max_abs() const;
};

class Network {
 public:
  Network() = default;
  // He-uniform initialisation (limit sqrt(6 / fan_in)), zero biases.
  Network(std::size_t input_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed);
  // Adopts explicit layers; throws ValidationError if dimensions do not chain or a
  // Softmax layer is not terminal.
  explicit Network(std::vector<DenseLayer> layers, std::uint64_t seed = 0);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::uint64_t seed() const { return seed_; }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  // Deterministic inference pass (no dropout).
  Vector predict(const Vector& x) const;

  // Full pass with every intermediate retained. `dropout_rng` is only read when
  // `training` is set; `dropout_override` replaces every hidden layer's rate when
  // given (used to jitter generation passes).
  ForwardTrace forward(const Vector& x, bool training = false, Rng* dropout_rng = nullptr,
                       std::optional<double> dropout_override = std::nullopt) const;

  // Backpropagate dL/d(output). Accumulates parameter gradients into `grads`
  // when non-null and returns dL/d(input).
  Vector backward(const ForwardTrace& trace, const Vector& grad_output,
                  Gradients* grads = nullptr) const;

  Gradients zero_gradients() const;

  // sum_k l2_k * ||W_k||^2 (biases are not regularised).
  double l2_penalty() const;
  // Adds d(l2_penalty)/dW into grads.
  void add_l2_gradient(Gradients& grads) const;

 private:
  void validate() const;

  std::vector<DenseLayer> layers_;
  std::uint64_t seed_ = 0;
};

// ---- losses ---------------------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-12;

Vector one_hot(std::size_t label, std::size_t classes);

// -sum_k t_k log(max(p_k, 1e-12)); natural log.
double crossentropy(const Vector& pred, const Vector& target);
Vector crossentropy_gradient(const Vector& pred, const Vector& target);

// Sum of squared componentwise differences.
double mse(const Vector& x, const Vector& y);
Vector mse_gradient(const Vector& pred, const Vector& target);

struct CrossEntropyLoss {};
struct MseLoss {};
// ||target - g(x)||^2 + alpha * CE(f(g(x)), one_hot(adversarial_class)) where g is
// the network being trained and f the frozen `classifier`.
struct CompositeLoss {
  const Network* classifier = nullptr;
  double alpha = 1.0;
  std::size_t adversarial_class = 1;
};
using LossSpec = std::variant<CrossEntropyLoss, MseLoss, CompositeLoss>;

struct LossEvaluation {
  double total = 0.0;
  double reconstruction = 0.0;  // composite only
  double adversarial = 0.0;     // composite only
  Vector grad_output;
};

LossEvaluation evaluate_loss(const LossSpec& loss, const Vector& output, const Vector& target);

// ---- optimisation -----------------------------------------------------------

struct SgdConfig {
  double lr = 0.01;
  double weight_decay = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  double weight_decay = 0.0;
};

struct TrainConfig {
  std::variant<SgdConfig, AdamConfig> optimizer = AdamConfig{};
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  double learning_rate() const;
  void validate() const;
};

struct StepResult {
  double loss = 0.0;  // mean sample loss + l2 penalty
  double reconstruction = 0.0;
  double adversarial = 0.0;
};

struct EpochRecord {
  double loss = 0.0;
  double reconstruction = 0.0;
  double adversarial = 0.0;
};

// Owns optimiser state and the dropout/shuffle generator for one training run.
// Training is single-threaded; the same seed reproduces the same parameters bit
// for bit on a given build.
class Trainer {
 public:
  Trainer(Network& network, TrainConfig config);

  // One optimiser update on a mini-batch. Throws NonFiniteLoss on NaN/inf.
  StepResult step(const std::vector<Vector>& inputs, const std::vector<Vector>& targets,
                  const LossSpec& loss);

  // `epochs` passes over shuffled mini-batches.
  std::vector<EpochRecord> fit(const std::vector<Vector>& inputs,
                               const std::vector<Vector>& targets, const LossSpec& loss);

  std::size_t steps_taken() const { return steps_; }

 private:
  void apply(const Gradients& grads);

  Network& network_;
  TrainConfig config_;
  Rng rng_;
  std::size_t steps_ = 0;
  Gradients first_moment_;
  Gradients second_moment_;
};

// ---- gradient checking -----------------------------------------------------

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  bool near_kink = false;  // some ReLU-family pre-activation lies within the probe step
};

// Compares backprop gradients of (sample loss + l2 penalty) against central
// differences with step h. Relative error is |a - n| / max(1e-8, |a| + |n|).
GradientCheckResult gradient_check(const Network& network, const LossSpec& loss,
                                   const Vector& input, const Vector& target, double h = 1e-5);

// ---- persistence ------------------------------------------------------------

// Plain JSON document: dims, activations and row-major parameter arrays. Values
// are written with shortest round-trip formatting, so save -> load is exact.
std::string save_network(const Network& network);
Network load_network(std::string_view document);

}  // namespace boundcf::nn
