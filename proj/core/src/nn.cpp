#include "boundcf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "boundcf/errors.hpp"

namespace boundcf::nn {

std::string activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::LeakyReLU: return "leaky_relu";
    case ActivationKind::ELU: return "elu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Softmax: return "softmax";
  }
  return "identity";
}

Activation parse_activation(std::string_view name, std::optional<double> param) {
  if (name == "identity" || name == "linear") return Activation::identity();
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu" || name == "leakyrelu") return Activation::leaky_relu(param.value_or(0.3));
  if (name == "elu") return Activation::elu(param.value_or(1.0));
  if (name == "tanh") return Activation::tanh();
  if (name == "sigmoid") return Activation::sigmoid();
  if (name == "softmax") return Activation::softmax();
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

Vector activate(const Activation& act, const Vector& z) {
  switch (act.kind) {
    case ActivationKind::Identity: return z;
    case ActivationKind::ReLU: return z.cwiseMax(0.0);
    case ActivationKind::LeakyReLU:
      return z.unaryExpr([s = act.param](double v) { return v > 0.0 ? v : s * v; });
    case ActivationKind::ELU:
      return z.unaryExpr([a = act.param](double v) { return v > 0.0 ? v : a * std::expm1(v); });
    case ActivationKind::Tanh: return z.array().tanh().matrix();
    case ActivationKind::Sigmoid:
      return z.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
    case ActivationKind::Softmax: {
      const double shift = z.maxCoeff();
      Vector e = (z.array() - shift).exp().matrix();
      return e / e.sum();
    }
  }
  return z;
}

Vector activation_backward(const Activation& act, const Vector& z, const Vector& a,
                           const Vector& grad_a) {
  switch (act.kind) {
    case ActivationKind::Identity: return grad_a;
    case ActivationKind::ReLU:
      return (z.array() > 0.0).select(grad_a, 0.0);
    case ActivationKind::LeakyReLU:
      return (z.array() > 0.0).select(grad_a, act.param * grad_a);
    case ActivationKind::ELU:
      // d/dz alpha*(e^z - 1) = a + alpha on the negative branch
      return (z.array() > 0.0).select(grad_a, grad_a.array() * (a.array() + act.param));
    case ActivationKind::Tanh:
      return (grad_a.array() * (1.0 - a.array().square())).matrix();
    case ActivationKind::Sigmoid:
      return (grad_a.array() * a.array() * (1.0 - a.array())).matrix();
    case ActivationKind::Softmax: {
      const double dot = a.dot(grad_a);
      return (a.array() * (grad_a.array() - dot)).matrix();
    }
  }
  return grad_a;
}

const Vector& ForwardTrace::output() const { return post.empty() ? inputs.front() : post.back(); }

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += other.weights[k];
    biases[k] += other.biases[k];
  }
  return *this;
}

Gradients& Gradients::operator*=(double factor) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] *= factor;
    biases[k] *= factor;
  }
  return *this;
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].size() > 0) m = std::max(m, weights[k].cwiseAbs().maxCoeff());
    if (biases[k].size() > 0) m = std::max(m, biases[k].cwiseAbs().maxCoeff());
  }
  return m;
}

Network::Network(std::size_t input_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed)
    : seed_(seed) {
  if (input_dim == 0) throw ValidationError("network input dimension must be positive");
  Rng rng(seed);
  std::size_t fan_in = input_dim;
  for (const auto& spec : specs) {
    if (spec.units == 0) throw ValidationError("layer with zero units");
    DenseLayer layer;
    layer.weights.resize(static_cast<Eigen::Index>(spec.units), static_cast<Eigen::Index>(fan_in));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    // Row-major fill order so the draw sequence is independent of Eigen storage.
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = rng.uniform(-limit, limit);
    layer.biases = Vector::Zero(static_cast<Eigen::Index>(spec.units));
    layer.activation = spec.activation;
    layer.l2_factor = spec.l2_factor;
    layer.dropout_rate = spec.dropout_rate;
    layers_.push_back(std::move(layer));
    fan_in = spec.units;
  }
  validate();
}

Network::Network(std::vector<DenseLayer> layers, std::uint64_t seed)
    : layers_(std::move(layers)), seed_(seed) {
  validate();
}

void Network::validate() const {
  if (layers_.empty()) throw ValidationError("network needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    if (layer.biases.size() != layer.weights.rows()) {
      throw ValidationError("layer " + std::to_string(k) + ": bias length does not match out_dim");
    }
    if (k > 0 && layer.in_dim() != layers_[k - 1].out_dim()) {
      throw ValidationError("layer " + std::to_string(k) + ": in_dim " +
                            std::to_string(layer.in_dim()) + " does not chain with previous out_dim " +
                            std::to_string(layers_[k - 1].out_dim()));
    }
    if (layer.activation.kind == ActivationKind::Softmax && k + 1 != layers_.size()) {
      throw ValidationError("softmax is only allowed as the terminal activation");
    }
    if (layer.l2_factor < 0.0) throw ValidationError("negative l2 factor");
    if (layer.dropout_rate < 0.0 || layer.dropout_rate >= 1.0) {
      throw ValidationError("dropout rate must lie in [0, 1)");
    }
  }
}

std::size_t Network::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Network::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

Vector Network::predict(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw ValidationError("input length " + std::to_string(x.size()) + " != network input_dim " +
                          std::to_string(input_dim()));
  }
  Vector a = x;
  for (const auto& layer : layers_) {
    a = activate(layer.activation, layer.weights * a + layer.biases);
  }
  return a;
}

ForwardTrace Network::forward(const Vector& x, bool training, Rng* dropout_rng,
                              std::optional<double> dropout_override) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw ValidationError("input length " + std::to_string(x.size()) + " != network input_dim " +
                          std::to_string(input_dim()));
  }
  ForwardTrace trace;
  trace.inputs.reserve(layers_.size());
  trace.pre.reserve(layers_.size());
  trace.post.reserve(layers_.size());
  trace.dropout_scale.reserve(layers_.size());
  Vector a = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    trace.inputs.push_back(a);
    trace.pre.push_back(layer.weights * a + layer.biases);
    trace.post.push_back(activate(layer.activation, trace.pre.back()));
    // Dropout never touches the terminal layer.
    const bool terminal = k + 1 == layers_.size();
    const double rate = terminal ? 0.0 : dropout_override.value_or(layer.dropout_rate);
    Vector scale;
    if (training && rate > 0.0 && dropout_rng != nullptr) {
      scale.resize(trace.post.back().size());
      const double keep = 1.0 - rate;
      for (Eigen::Index i = 0; i < scale.size(); ++i) {
        scale(i) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
      a = trace.post.back().cwiseProduct(scale);
    } else {
      a = trace.post.back();
    }
    trace.dropout_scale.push_back(std::move(scale));
  }
  return trace;
}

Vector Network::backward(const ForwardTrace& trace, const Vector& grad_output,
                         Gradients* grads) const {
  Vector g = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    if (trace.dropout_scale[k].size() > 0) g = g.cwiseProduct(trace.dropout_scale[k]);
    const Vector gz = activation_backward(layer.activation, trace.pre[k], trace.post[k], g);
    if (grads != nullptr) {
      grads->weights[k].noalias() += gz * trace.inputs[k].transpose();
      grads->biases[k] += gz;
    }
    g = layer.weights.transpose() * gz;
  }
  return g;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Vector::Zero(l.biases.size()));
  }
  return g;
}

double Network::l2_penalty() const {
  double p = 0.0;
  for (const auto& l : layers_) {
    if (l.l2_factor > 0.0) p += l.l2_factor * l.weights.squaredNorm();
  }
  return p;
}

void Network::add_l2_gradient(Gradients& grads) const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].l2_factor > 0.0) grads.weights[k] += 2.0 * layers_[k].l2_factor * layers_[k].weights;
  }
}

// ---- losses ---------------------------------------------------------------

Vector one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(classes) + " classes");
  }
  Vector v = Vector::Zero(static_cast<Eigen::Index>(classes));
  v(static_cast<Eigen::Index>(label)) = 1.0;
  return v;
}

namespace {
void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
}
}  // namespace

double crossentropy(const Vector& pred, const Vector& target) {
  require_same_length(pred, target, "crossentropy");
  double loss = 0.0;
  for (Eigen::Index k = 0; k < pred.size(); ++k) {
    if (target(k) != 0.0) loss -= target(k) * std::log(std::max(pred(k), kProbabilityClamp));
  }
  return loss;
}

Vector crossentropy_gradient(const Vector& pred, const Vector& target) {
  require_same_length(pred, target, "crossentropy");
  Vector g = Vector::Zero(pred.size());
  for (Eigen::Index k = 0; k < pred.size(); ++k) {
    // clamped region is flat
    if (target(k) != 0.0 && pred(k) > kProbabilityClamp) g(k) = -target(k) / pred(k);
  }
  return g;
}

double mse(const Vector& x, const Vector& y) {
  require_same_length(x, y, "mse");
  return (x - y).squaredNorm();
}

Vector mse_gradient(const Vector& pred, const Vector& target) {
  require_same_length(pred, target, "mse");
  return 2.0 * (pred - target);
}

LossEvaluation evaluate_loss(const LossSpec& loss, const Vector& output, const Vector& target) {
  LossEvaluation ev;
  if (std::holds_alternative<CrossEntropyLoss>(loss)) {
    ev.total = crossentropy(output, target);
    ev.grad_output = crossentropy_gradient(output, target);
  } else if (std::holds_alternative<MseLoss>(loss)) {
    ev.total = mse(output, target);
    ev.grad_output = mse_gradient(output, target);
  } else {
    const auto& c = std::get<CompositeLoss>(loss);
    if (c.classifier == nullptr) throw ValidationError("composite loss needs a classifier");
    ev.reconstruction = mse(output, target);
    const ForwardTrace ct = c.classifier->forward(output);
    const Vector adversarial_target = one_hot(c.adversarial_class, c.classifier->output_dim());
    ev.adversarial = crossentropy(ct.output(), adversarial_target);
    const Vector g_in =
        c.classifier->backward(ct, crossentropy_gradient(ct.output(), adversarial_target));
    ev.total = ev.reconstruction + c.alpha * ev.adversarial;
    ev.grad_output = mse_gradient(output, target) + c.alpha * g_in;
  }
  return ev;
}

// ---- optimisation -----------------------------------------------------------

double TrainConfig::learning_rate() const {
  return std::visit([](const auto& o) { return o.lr; }, optimizer);
}

void TrainConfig::validate() const {
  std::visit(
      [](const auto& o) {
        if (!(o.lr >= 0.0)) throw ValidationError("learning rate must be non-negative");
        if (o.weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
      },
      optimizer);
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

Trainer::Trainer(Network& network, TrainConfig config)
    : network_(network), config_(config), rng_(config.seed) {
  config_.validate();
}

StepResult Trainer::step(const std::vector<Vector>& inputs, const std::vector<Vector>& targets,
                         const LossSpec& loss) {
  if (inputs.empty()) throw ValidationError("train step on an empty batch");
  if (inputs.size() != targets.size()) throw ValidationError("inputs/targets size mismatch");

  Gradients grads = network_.zero_gradients();
  StepResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ForwardTrace trace = network_.forward(inputs[i], true, &rng_);
    const LossEvaluation ev = evaluate_loss(loss, trace.output(), targets[i]);
    network_.backward(trace, ev.grad_output, &grads);
    result.loss += ev.total;
    result.reconstruction += ev.reconstruction;
    result.adversarial += ev.adversarial;
  }
  const double inv = 1.0 / static_cast<double>(inputs.size());
  grads *= inv;
  result.loss = result.loss * inv + network_.l2_penalty();
  result.reconstruction *= inv;
  result.adversarial *= inv;
  if (!std::isfinite(result.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at optimiser step " << steps_ << " (loss=" << result.loss
        << ", reconstruction=" << result.reconstruction << ", adversarial=" << result.adversarial
        << ")";
    throw NonFiniteLoss(msg.str());
  }
  network_.add_l2_gradient(grads);
  apply(grads);
  ++steps_;
  return result;
}

void Trainer::apply(const Gradients& grads) {
  auto& layers = network_.mutable_layers();
  if (const auto* sgd = std::get_if<SgdConfig>(&config_.optimizer)) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].weights -= sgd->lr * (grads.weights[k] + sgd->weight_decay * layers[k].weights);
      layers[k].biases -= sgd->lr * (grads.biases[k] + sgd->weight_decay * layers[k].biases);
    }
    return;
  }
  const auto& adam = std::get<AdamConfig>(config_.optimizer);
  if (first_moment_.weights.empty()) {
    first_moment_ = network_.zero_gradients();
    second_moment_ = network_.zero_gradients();
  }
  const double t = static_cast<double>(steps_ + 1);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    const auto g = (grad + adam.weight_decay * param).eval();
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g.cwiseProduct(g);
    param.array() -= adam.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + adam.eps);
  };
  for (std::size_t k = 0; k < layers.size(); ++k) {
    update(layers[k].weights, grads.weights[k], first_moment_.weights[k], second_moment_.weights[k]);
    update(layers[k].biases, grads.biases[k], first_moment_.biases[k], second_moment_.biases[k]);
  }
}

std::vector<EpochRecord> Trainer::fit(const std::vector<Vector>& inputs,
                                      const std::vector<Vector>& targets, const LossSpec& loss) {
  if (inputs.empty()) throw ValidationError("cannot train on an empty data set");
  if (inputs.size() != targets.size()) throw ValidationError("inputs/targets size mismatch");
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochRecord> history;
  history.reserve(config_.epochs);
  std::vector<Vector> bx, bt;
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    rng_.shuffle(order);
    EpochRecord rec;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config_.batch_size);
      bx.clear();
      bt.clear();
      for (std::size_t i = start; i < stop; ++i) {
        bx.push_back(inputs[order[i]]);
        bt.push_back(targets[order[i]]);
      }
      const StepResult r = step(bx, bt, loss);
      rec.loss += r.loss;
      rec.reconstruction += r.reconstruction;
      rec.adversarial += r.adversarial;
      ++batches;
    }
    rec.loss /= static_cast<double>(batches);
    rec.reconstruction /= static_cast<double>(batches);
    rec.adversarial /= static_cast<double>(batches);
    history.push_back(rec);
  }
  return history;
}

// ---- gradient checking -----------------------------------------------------

namespace {
double objective(const Network& net, const LossSpec& loss, const Vector& x, const Vector& t) {
  return evaluate_loss(loss, net.predict(x), t).total + net.l2_penalty();
}
}  // namespace

GradientCheckResult gradient_check(const Network& network, const LossSpec& loss,
                                   const Vector& input, const Vector& target, double h) {
  GradientCheckResult result;
  const ForwardTrace trace = network.forward(input);
  for (std::size_t k = 0; k < network.layers().size(); ++k) {
    const auto kind = network.layers()[k].activation.kind;
    if (kind == ActivationKind::ReLU || kind == ActivationKind::LeakyReLU) {
      if (trace.pre[k].cwiseAbs().minCoeff() < 1e3 * h) result.near_kink = true;
    }
  }

  Gradients analytic = network.zero_gradients();
  const LossEvaluation ev = evaluate_loss(loss, trace.output(), target);
  network.backward(trace, ev.grad_output, &analytic);
  network.add_l2_gradient(analytic);

  Network probe = network;
  auto check = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = objective(probe, loss, input, target);
    param = saved - h;
    const double down = objective(probe, loss, input, target);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(grad - numeric) / std::max(1e-8, std::abs(grad) + std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.parameters_checked;
  };
  auto& layers = probe.mutable_layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    for (Eigen::Index r = 0; r < layers[k].weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layers[k].weights.cols(); ++c)
        check(layers[k].weights(r, c), analytic.weights[k](r, c));
    for (Eigen::Index r = 0; r < layers[k].biases.size(); ++r)
      check(layers[k].biases(r), analytic.biases[k](r));
  }
  return result;
}

}  // namespace boundcf::nn
