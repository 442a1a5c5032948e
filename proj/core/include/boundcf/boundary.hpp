#pragma once

// Decision-boundary approximation. Two autoencoders are trained against the
// frozen classifier: one maps normal rows towards the abnormal class, the other
// abnormal rows towards the normal class. Their outputs are paired across the
// boundary and each pair is refined by bisection until the two class
// probabilities balance within beta. The surviving points form the critical set.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "boundcf/classifier.hpp"
#include "boundcf/data.hpp"
#include "boundcf/nn.hpp"

namespace boundcf::boundary {

using nn::Vector;

enum class Side { FromNormal, FromAbnormal };
enum class ReconstructionTarget { Self, NearestOpposite };

std::string side_name(Side side);
std::string target_name(ReconstructionTarget target);
ReconstructionTarget parse_target(const std::string& name);

struct BoundaryTrainConfig {
  double alpha = 1.0;
  std::vector<nn::LayerSpec> hidden;  // encoder + code + decoder hidden layers
  nn::Activation output_activation = nn::Activation::sigmoid();
  nn::TrainConfig train;
  ReconstructionTarget target = ReconstructionTarget::Self;
  // Extra generation passes with dropout jitter; 1 = deterministic pass only.
  std::size_t replicas = 1;
  double replica_dropout = 0.1;

  void validate() const;
};

struct BisectionConfig {
  double beta = 0.02;
  std::size_t max_iters = 20;

  void validate() const;
};

struct AutoencoderLog {
  std::vector<nn::EpochRecord> epochs;
  double opposite_rate = 0.0;      // snapped outputs labelled as the opposite class
  double opposite_rate_raw = 0.0;  // same, before snapping
  double mean_reconstruction = 0.0;
};

struct TrainedAutoencoder {
  nn::Network network;
  AutoencoderLog log;
};

// `rows` are the training rows of the side's own class; `opposite_rows` are only
// read for the NearestOpposite reconstruction target. The classifier is read only.
TrainedAutoencoder train_boundary_autoencoder(Side side, const std::vector<Vector>& rows,
                                              const std::vector<Vector>& opposite_rows,
                                              const classifier::ClassifierModel& clf,
                                              const data::Encoder& encoder,
                                              const BoundaryTrainConfig& config);

struct QuasiSample {
  Vector x;
  double p_n = 0.0;
  double p_a = 0.0;
  int label = 0;

  double gap() const;
};

QuasiSample make_quasi(Vector x, const classifier::ClassifierModel& clf);

// Runs the autoencoder over `inputs`, snaps categorical blocks to one-hot and
// clips continuous columns to the training range. With `dropout` set the pass
// uses that dropout rate on every hidden layer, drawing masks from `rng`.
std::vector<QuasiSample> generate_quasi(const nn::Network& autoencoder,
                                        const std::vector<Vector>& inputs,
                                        const classifier::ClassifierModel& clf,
                                        const data::Encoder& encoder,
                                        std::optional<double> dropout = std::nullopt,
                                        Rng* rng = nullptr);

struct EndpointPair {
  Vector left;   // predicted normal
  Vector right;  // predicted abnormal
  std::size_t anchor = 0;   // index into the first input sequence
  std::size_t partner = 0;  // index into the second input sequence
  bool harmonized = false;  // right's categorical blocks were overwritten
};

struct PairingResult {
  std::vector<EndpointPair> pairs;
  std::size_t dropped_no_partner = 0;
  std::size_t dropped_after_harmonize = 0;
  std::string diagnostic;  // non-empty when no pair could be formed
};

// Every item of `anchors` is matched with the nearest item of `candidates` that
// has the opposite predicted label. Candidates with identical categorical
// blocks are preferred; otherwise the normal endpoint's blocks are copied into
// the abnormal endpoint, and the pair is kept only if labels still differ.
// Ties resolve to the lowest candidate index.
PairingResult pair_candidates(const std::vector<QuasiSample>& anchors,
                              const std::vector<QuasiSample>& candidates,
                              const classifier::ClassifierModel& clf,
                              const data::Encoder& encoder);

struct BisectionOutcome {
  bool converged = false;
  Vector point;             // last midpoint
  std::size_t iterations = 0;
  double p_n = 0.0;
  double p_a = 0.0;
  double t = 0.0;           // segment parameter of `point`, 0 = left, 1 = right
};

// Halves the segment [left, right] towards the probability crossing. Stops once
// |p_n - p_a| <= beta at a midpoint; gives up after max_iters midpoints.
BisectionOutcome bisect_pair(const Vector& left, const Vector& right,
                             const classifier::ClassifierModel& clf,
                             const BisectionConfig& config);

enum class Provenance { AeOnly, Bisected };
std::string provenance_name(Provenance p);

struct CriticalInstance {
  Vector x;
  double p_n = 0.0;
  double p_a = 0.0;
  Provenance provenance = Provenance::Bisected;

  double gap() const;
};

struct CriticalSet {
  std::vector<CriticalInstance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  const CriticalInstance& operator[](std::size_t i) const { return instances[i]; }
};

struct GapSummary {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::vector<std::size_t> histogram;  // equal bins over [0, beta]
};

GapSummary summarize_gaps(const CriticalSet& set, double beta, std::size_t bins = 5);

struct BoundaryStats {
  std::size_t quasi_from_normal = 0;
  std::size_t quasi_from_abnormal = 0;
  std::size_t pairs = 0;
  std::size_t dropped_no_partner = 0;
  std::size_t dropped_after_harmonize = 0;
  std::size_t bisected = 0;
  std::size_t rejected = 0;
  std::size_t ae_only = 0;
  std::size_t duplicates = 0;
  double quasi_gap_mean = 0.0;   // over all generated quasi samples
  double input_gap_mean = 0.0;   // over the autoencoder inputs
  GapSummary gaps;
};

struct BoundaryRun {
  TrainedAutoencoder from_normal;
  TrainedAutoencoder from_abnormal;
  CriticalSet set;
  BoundaryStats stats;
};

// Full pipeline: both autoencoders, quasi generation (with replicas), pairing
// and bisection. Throws RuntimeFailure when the resulting set is empty.
BoundaryRun build_critical_set(const classifier::ClassifierModel& clf,
                               const data::Encoder& encoder,
                               const data::EncodedDataset& train,
                               const BoundaryTrainConfig& boundary_config,
                               const BisectionConfig& bisection_config);

// CSV with encoded columns, decoded columns, p_n, p_a and provenance. Numbers use
// 17 significant digits so an export/import round trip is exact.
std::string critical_set_to_csv(const CriticalSet& set, const data::Encoder& encoder);
CriticalSet critical_set_from_csv(const std::string& text, const data::Encoder& encoder);
void save_critical_set(const std::filesystem::path& path, const CriticalSet& set,
                       const data::Encoder& encoder);
CriticalSet load_critical_set(const std::filesystem::path& path, const data::Encoder& encoder);

}  // namespace boundcf::boundary
