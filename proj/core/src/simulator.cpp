#include "boundcf/simulator.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <utility>

#include "boundcf/errors.hpp"
#include "json_codec.hpp"

namespace boundcf::simulator {

using detail::json;

std::string kind_name(Kind kind) { return kind == Kind::Knn ? "knn" : "logistic_quadratic"; }

Kind parse_kind(const std::string& name) {
  if (name == "knn") return Kind::Knn;
  if (name == "logistic_quadratic") return Kind::LogisticQuadratic;
  throw ValidationError("unknown simulator kind '" + name + "' (expected knn or logistic_quadratic)");
}

void SimulatorSpec::validate() const {
  if (kind == Kind::Knn && k < 1) throw ValidationError("knn needs k >= 1");
  if (kind == Kind::LogisticQuadratic && !(l2 >= 0.0))
    throw ValidationError("logistic l2 must be nonnegative");
  if (max_newton_iters < 1) throw ValidationError("max_newton_iters must be at least 1");
}

Vector quadratic_features(const Vector& x) {
  const Eigen::Index n = x.size();
  Vector phi(1 + n + n * (n + 1) / 2);
  phi(0) = 1.0;
  phi.segment(1, n) = x;
  Eigen::Index k = 1 + n;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) phi(k++) = x(i) * x(j);
  return phi;
}

SimulatorModel SimulatorModel::knn(SimulatorSpec spec, std::vector<Vector> rows,
                                   std::vector<int> labels) {
  spec.kind = Kind::Knn;
  spec.validate();
  if (rows.empty() || rows.size() != labels.size())
    throw ValidationError("knn needs a nonempty, labelled reference set");
  SimulatorModel m;
  m.spec_ = spec;
  m.width_ = static_cast<std::size_t>(rows.front().size());
  m.rows_ = std::move(rows);
  m.labels_ = std::move(labels);
  return m;
}

SimulatorModel SimulatorModel::logistic(SimulatorSpec spec, Vector weights, std::size_t input_width) {
  spec.kind = Kind::LogisticQuadratic;
  spec.validate();
  const auto n = static_cast<Eigen::Index>(input_width);
  if (weights.size() != 1 + n + n * (n + 1) / 2)
    throw ValidationError("logistic weight vector does not match the input width");
  SimulatorModel m;
  m.spec_ = spec;
  m.width_ = input_width;
  m.weights_ = std::move(weights);
  return m;
}

double SimulatorModel::score(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != width_)
    throw ValidationError("simulator expects width " + std::to_string(width_));
  if (spec_.kind == Kind::LogisticQuadratic) return weights_.dot(quadratic_features(x));
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) d.emplace_back((rows_[i] - x).squaredNorm(), i);
  const std::size_t k = std::min(spec_.k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::size_t abnormal = 0;
  for (std::size_t i = 0; i < k; ++i) abnormal += labels_[d[i].second] == 1 ? 1 : 0;
  return static_cast<double>(abnormal) / static_cast<double>(k);
}

int SimulatorModel::simulate_class(const Vector& x) const {
  const double s = score(x);
  if (spec_.kind == Kind::LogisticQuadratic) return s > 0.0 ? 1 : 0;
  return s > 0.5 ? 1 : 0;
}

double SimulatorModel::accuracy(const data::EncodedDataset& ds) const {
  if (ds.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += simulate_class(ds.rows[i]) == ds.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

std::string SimulatorModel::to_json_text() const {
  json doc;
  doc["format"] = "boundcf-simulator";
  doc["kind"] = kind_name(spec_.kind);
  doc["k"] = spec_.k;
  doc["l2"] = spec_.l2;
  doc["max_newton_iters"] = spec_.max_newton_iters;
  doc["seed"] = seed;
  doc["input_width"] = width_;
  doc["train_accuracy"] = train_accuracy;
  doc["test_accuracy"] = test_accuracy ? json(*test_accuracy) : json(nullptr);
  doc["newton_iterations"] = newton_iterations;
  if (spec_.kind == Kind::Knn) {
    json rows = json::array();
    for (const auto& r : rows_) rows.push_back(detail::vector_to_json(r));
    doc["rows"] = std::move(rows);
    doc["labels"] = labels_;
  } else {
    doc["weights"] = detail::vector_to_json(weights_);
  }
  return detail::dump(doc);
}

SimulatorModel SimulatorModel::from_json_text(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "boundcf-simulator")
      throw ValidationError("not a simulator document");
    SimulatorSpec spec;
    spec.kind = parse_kind(doc.at("kind").get<std::string>());
    spec.k = doc.at("k").get<std::size_t>();
    spec.l2 = doc.at("l2").get<double>();
    spec.max_newton_iters = doc.at("max_newton_iters").get<std::size_t>();
    SimulatorModel m;
    if (spec.kind == Kind::Knn) {
      std::vector<Vector> rows;
      for (const auto& r : doc.at("rows")) rows.push_back(detail::vector_from_json(r));
      m = knn(spec, std::move(rows), doc.at("labels").get<std::vector<int>>());
    } else {
      m = logistic(spec, detail::vector_from_json(doc.at("weights")),
                   doc.at("input_width").get<std::size_t>());
    }
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.train_accuracy = doc.at("train_accuracy").get<double>();
    if (!doc.at("test_accuracy").is_null()) m.test_accuracy = doc["test_accuracy"].get<double>();
    m.newton_iterations = doc.at("newton_iterations").get<std::size_t>();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed simulator document: ") + e.what());
  }
}

namespace {

// Newton / IRLS on  sum_i logloss(y_i, w . phi_i) + l2 * ||w_{1:}||^2.
std::pair<Vector, std::size_t> fit_logistic(const data::EncodedDataset& train,
                                            const SimulatorSpec& spec) {
  const auto n = static_cast<Eigen::Index>(train.size());
  const Vector first = quadratic_features(train.rows.front());
  const Eigen::Index p = first.size();
  nn::Matrix phi(n, p);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    phi.row(i) = quadratic_features(train.rows[static_cast<std::size_t>(i)]).transpose();
    y(i) = train.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
  }
  Vector reg = Vector::Constant(p, 2.0 * spec.l2);
  reg(0) = 1e-8;  // keeps the Hessian definite when the bias is unpenalised
  Vector w = Vector::Zero(p);
  std::size_t it = 0;
  for (; it < spec.max_newton_iters; ++it) {
    const Vector z = phi * w;
    Vector mu(n);
    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = 1.0 / (1.0 + std::exp(-z(i)));
      s(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    Vector grad = phi.transpose() * (mu - y) + reg.cwiseProduct(w);
    grad(0) -= reg(0) * w(0);
    nn::Matrix hess = phi.transpose() * s.asDiagonal() * phi;
    hess.diagonal() += reg;
    const Vector step = hess.ldlt().solve(grad);
    if (!step.allFinite()) throw RuntimeFailure("logistic simulator: Newton step is not finite");
    w -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) {
      ++it;
      break;
    }
  }
  return {w, it};
}

}  // namespace

SimulatorModel train_simulator(const data::EncodedDataset& train, const SimulatorSpec& spec,
                               std::uint64_t seed, const data::EncodedDataset* test) {
  spec.validate();
  if (train.size() == 0) throw ValidationError("simulator training set is empty");
  const auto ones = std::count(train.labels.begin(), train.labels.end(), 1);
  if (ones == 0 || static_cast<std::size_t>(ones) == train.size())
    throw ValidationError("simulator training set holds a single class");

  SimulatorModel m;
  if (spec.kind == Kind::Knn) {
    m = SimulatorModel::knn(spec, train.rows, train.labels);
  } else {
    auto [w, iters] = fit_logistic(train, spec);
    m = SimulatorModel::logistic(spec, std::move(w), static_cast<std::size_t>(train.rows.front().size()));
    m.newton_iterations = iters;
  }
  m.seed = seed;
  m.train_accuracy = m.accuracy(train);
  if (test) m.test_accuracy = m.accuracy(*test);
  return m;
}

}  // namespace boundcf::simulator
