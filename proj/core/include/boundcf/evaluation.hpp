#pragma once

// Batch metrics over counterfactual results: validity (judged by the external
// simulator), proximity, sparsity, violations, plausibility and per-feature
// diversity, plus the report document built from them.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "boundcf/data.hpp"
#include "boundcf/intervention.hpp"
#include "boundcf/simulator.hpp"

namespace boundcf::evaluation {

using intervention::InterventionResult;
using nn::Vector;

inline constexpr double kChangeTolerance = 1e-6;  // encoded units

enum class ProximityVariant {
  // sqrt(||c*/|c*| - c/|c|||^2 + (mismatched categoricals / m2)^2) with c the
  // raw continuous sub-vector
  Combined,
  // encoded Euclidean distance divided by the feature count
  EncodedPerFeature,
};

// Fraction of results the simulator places in the normal class. Unflipped
// results stay in the denominator. Throws on an empty batch.
double validity(const std::vector<InterventionResult>& results,
                const simulator::SimulatorModel& sim);
// Same fraction judged by the classifier itself.
double classifier_validity(const std::vector<InterventionResult>& results);

double proximity(const InterventionResult& result, const data::Encoder& encoder,
                 ProximityVariant variant = ProximityVariant::Combined);
double mean_proximity(const std::vector<InterventionResult>& results,
                      const data::Encoder& encoder,
                      ProximityVariant variant = ProximityVariant::Combined);

// Features whose encoded value moved by more than tau (categoricals: level change).
std::size_t count_changes(const InterventionResult& result, const data::Encoder& encoder,
                          double tau = kChangeTolerance);
// Changes restricted to masked features.
std::size_t count_violations(const InterventionResult& result,
                             const intervention::ConstraintMask& mask,
                             const data::Encoder& encoder, double tau = kChangeTolerance);

double sparsity(const std::vector<InterventionResult>& results, const data::Encoder& encoder);
double violations(const std::vector<InterventionResult>& results,
                  const intervention::ConstraintMask& mask, const data::Encoder& encoder);

// Every continuous raw value inside the training range and every categorical
// level seen in training.
bool plausible(const std::vector<double>& raw, const data::Encoder& encoder);
double plausibility(const std::vector<InterventionResult>& results, const data::Encoder& encoder);

struct Diversity {
  // per feature: sum over ordered pairs i != j of |x_i - x_j| divided by N
  std::vector<double> literal;
  // same sum divided by N (N - 1)
  std::vector<double> averaged;
};

// Continuous features are compared in encoded (min-max) units, categoricals by
// level mismatch. Throws with fewer than two results.
Diversity diversity(const std::vector<InterventionResult>& results, const data::Encoder& encoder);

struct RunMetadata {
  std::string dataset;
  std::uint64_t seed = 0;
  double beta = 0.0;
  double alpha = 0.0;
  std::string norm;
  std::string simulator;
  std::size_t critical_set_size = 0;
  std::size_t skipped_cases = 0;  // factuals excluded before the search
};

struct MetricsReport {
  RunMetadata meta;
  std::string mode;
  std::size_t cases = 0;
  std::size_t classifier_flips = 0;
  std::size_t simulator_flips = 0;
  std::size_t fallbacks = 0;
  double validity = 0.0;
  double classifier_validity = 0.0;
  std::optional<double> secondary_validity;  // judged by the other simulator family
  std::string secondary_simulator;
  double proximity = 0.0;
  double proximity_encoded = 0.0;
  double sparsity = 0.0;
  double violations = 0.0;
  double plausibility = 0.0;
  std::vector<std::string> features;
  std::optional<Diversity> diversity;
};

// Throws ValidationError on an empty batch rather than producing zeros.
MetricsReport assemble_report(const std::vector<InterventionResult>& results,
                              const std::string& mode, const RunMetadata& meta,
                              const simulator::SimulatorModel& sim,
                              const intervention::ConstraintMask& mask,
                              const data::Encoder& encoder,
                              const simulator::SimulatorModel* secondary = nullptr);

// One block per report; keys include the short column names val., prox.,
// spar., viol., plau.
std::string reports_to_json(const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> reports_from_json(const std::string& text);

// One row per result, for plotting proximity against invalidity.
std::string cases_csv(const std::vector<InterventionResult>& results, const std::string& mode,
                      const simulator::SimulatorModel& sim,
                      const intervention::ConstraintMask& mask, const data::Encoder& encoder);

}  // namespace boundcf::evaluation
