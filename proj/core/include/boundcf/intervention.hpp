#pragma once

// Counterfactual search over the critical set.
//
// Minimal mode returns the critical instance nearest to the factual (under a
// selectable normalisation) pushed slightly past the boundary. Constrained mode
// walks the user's preference order, clamping the first preferred feature into
// the critical set's range and then copying further preferred features from the
// closest critical instance until the classifier prefers the normal class.
// Masked features are never touched.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "boundcf/boundary.hpp"
#include "boundcf/classifier.hpp"
#include "boundcf/data.hpp"

namespace boundcf::intervention {

using nn::Vector;

enum class NormMode { MinMax, Literal };
enum class Mode { Minimal, Constrained };

std::string norm_name(NormMode mode);   // "minmax" / "literal"
NormMode parse_norm(const std::string& name);
std::string mode_name(Mode mode);

struct Nearest {
  double distance = 0.0;
  std::size_t index = 0;
};

// Exact linear scan; ties resolve to the lowest index. Throws on an empty set.
Nearest distance_to_set(const Vector& x, const std::vector<Vector>& points);

// Critical set members mapped into the comparison space of a norm mode.
//   MinMax:  the encoded vector itself (continuous columns already min-max
//            scaled, categoricals one-hot).
//   Literal: the decoded raw vector (categoricals as level index) divided by
//            its own L2 norm.
class NormalizedSet {
 public:
  NormalizedSet(const boundary::CriticalSet& set, const data::Encoder& encoder, NormMode mode);

  Vector transform(const Vector& encoded) const;
  Nearest nearest(const Vector& encoded) const;
  const std::vector<Vector>& points() const { return points_; }
  NormMode mode() const { return mode_; }

 private:
  const data::Encoder* encoder_;
  NormMode mode_;
  std::vector<Vector> points_;
};

struct FactualCase {
  std::size_t index = 0;  // row index in the source split
  std::vector<double> raw;
  Vector encoded;
  int predicted = classifier::kAbnormal;
};

// Encodes and classifies a raw row.
FactualCase make_case(std::size_t index, const std::vector<double>& raw,
                      const data::Encoder& encoder, const classifier::ClassifierModel& clf);

// True when every continuous feature lies within the training range.
bool within_training_range(const Vector& encoded, const data::Encoder& encoder);

struct ConstraintMask {
  std::vector<bool> z;            // true = must not change
  std::vector<std::size_t> order; // modifiable features by (rank, schema index)

  // Actionable and ranked features are modifiable, everything else is masked.
  // `ranks` overrides the schema's ranks when given (one entry per feature).
  static ConstraintMask from_schema(const data::FeatureSchema& schema,
                                    const std::optional<std::vector<std::optional<int>>>& ranks =
                                        std::nullopt);
  std::size_t masked_count() const;
  void validate() const;
};

struct ObjectiveBreakdown {
  double ce = 0.0;          // CE(f(x*), normal one-hot)
  double proximity = 0.0;   // encoded Euclidean distance to the factual
  double realism = 0.0;     // distance to the nearest normal training row
  double preference = 0.0;  // sum of (d - r + 1)/d * |encoded change| over ranked features
};

struct InterventionResult {
  Mode mode = Mode::Minimal;
  NormMode norm = NormMode::MinMax;
  std::size_t case_index = 0;
  std::vector<double> factual_raw;
  std::vector<double> cf_raw;
  Vector factual_encoded;
  Vector cf_encoded;
  std::vector<double> delta;  // cf - factual in raw units (categoricals: level index difference)
  std::vector<std::size_t> changed;  // features that differ, in order of modification
  bool flipped = false;
  bool fallback_used = false;
  bool violated = false;  // some masked feature differs (never set by the searches here)
  bool clamped = false;   // constrained: first preferred feature was clamped
  double lambda = 0.0;    // minimal: nudge used
  std::size_t critical_index = 0;
  std::size_t prefix_length = 0;  // constrained: how many entries of P were visited
  double p_n = 0.0;
  double p_a = 0.0;
  ObjectiveBreakdown objective;
};

struct InterventionConfig {
  NormMode norm = NormMode::MinMax;
  std::vector<double> lambdas{0.05, 0.1, 0.2};

  void validate() const;
};

InterventionResult minimal_intervention(const FactualCase& fc, const boundary::CriticalSet& set,
                                        const NormalizedSet& normalized,
                                        const classifier::ClassifierModel& clf,
                                        const data::Encoder& encoder,
                                        const InterventionConfig& config);

InterventionResult constrained_intervention(const FactualCase& fc,
                                            const boundary::CriticalSet& set,
                                            const ConstraintMask& mask,
                                            const classifier::ClassifierModel& clf,
                                            const data::Encoder& encoder);

ObjectiveBreakdown score_objective(const FactualCase& fc, const Vector& cf_encoded,
                                   const classifier::ClassifierModel& clf,
                                   const data::Encoder& encoder,
                                   const std::vector<Vector>& normal_train_rows);

}  // namespace boundcf::intervention
