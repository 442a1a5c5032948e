#pragma once

// Config-driven pipeline stages shared by the command-line tool and the
// acceptance suite. Every stage reads its inputs from the config and the run
// directory, writes fixed-name artifacts into `<output_dir>/<run_id>/`, and
// updates the run manifest (config echo, seeds, artifact hashes).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "boundcf/boundary.hpp"
#include "boundcf/classifier.hpp"
#include "boundcf/data.hpp"
#include "boundcf/evaluation.hpp"
#include "boundcf/intervention.hpp"
#include "boundcf/simulator.hpp"

namespace boundcf::pipeline {

namespace fs = std::filesystem;

enum class ModeSelection { Minimal, Constrained, Both };
std::string selection_name(ModeSelection m);
ModeSelection parse_selection(const std::string& name);

struct Seeds {
  std::uint64_t data = 0;
  std::uint64_t classifier = 1;
  std::uint64_t boundary = 2;
  std::uint64_t simulator = 3;
};

struct CaseSelector {
  enum class Kind { AllAbnormal, Indices, File };
  Kind kind = Kind::AllAbnormal;
  std::vector<std::size_t> indices;  // test-split row indices
  fs::path file;                     // ad-hoc cases, same columns as the dataset
};

struct RunConfig {
  fs::path source;  // the config file itself; empty for in-memory configs
  std::string name;
  std::string run_id;
  fs::path dataset;
  fs::path schema;
  fs::path output_dir;
  double train_fraction = 0.7;
  bool balance_train = false;
  std::uint64_t seed = 0;
  Seeds seeds;
  classifier::ArchSpec classifier_arch;
  nn::TrainConfig classifier_train;
  boundary::BoundaryTrainConfig boundary;
  boundary::BisectionConfig bisection;
  ModeSelection mode = ModeSelection::Both;
  intervention::InterventionConfig intervention;
  CaseSelector cases;
  simulator::SimulatorSpec simulator;

  fs::path run_dir() const { return output_dir / run_id; }
  // Every field, defaults included, as a JSON document.
  std::string to_json_text() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<double> alpha;
  std::optional<std::string> mode;
  std::optional<std::string> norm;
  std::optional<fs::path> output_dir;
};

// Relative paths resolve against `base_dir`. All problems are collected and
// reported together in one ValidationError.
RunConfig parse_config(const std::string& text, const fs::path& base_dir,
                       const Overrides& overrides = {});
RunConfig load_config(const fs::path& path, const Overrides& overrides = {});

struct PreparedData {
  data::Dataset full;
  data::Dataset train;  // balanced when configured
  data::Dataset test;
  data::Encoder encoder;
  data::EncodedDataset train_encoded;
  data::EncodedDataset test_encoded;
  std::string dataset_hash;
  std::size_t unencodable_test_rows = 0;
};

PreparedData prepare_data(const RunConfig& config);

// ---- artifacts --------------------------------------------------------------

struct ClassifierArtifact {
  classifier::ClassifierModel model;
  data::Encoder encoder;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

std::string classifier_artifact_to_json(const ClassifierArtifact& artifact);
ClassifierArtifact classifier_artifact_from_json(const std::string& text);

// Explanation records: factual/counterfactual raw values, deltas, flags and the
// objective breakdown, plus encoded columns so the records can be re-read.
std::string explanations_to_csv(const std::vector<intervention::InterventionResult>& results,
                                const data::Encoder& encoder);
std::vector<intervention::InterventionResult> explanations_from_csv(const std::string& text,
                                                                    const data::Encoder& encoder);
// Human-readable aligned table.
std::string explanations_table(const std::vector<intervention::InterventionResult>& results,
                               const data::Encoder& encoder);

// ---- stages -------------------------------------------------------------------

struct TrainOutcome {
  ClassifierArtifact classifier;
  classifier::TrainingLog log;
  simulator::SimulatorModel simulator;
  simulator::SimulatorModel secondary_simulator;
};

struct BoundaryOutcome {
  boundary::CriticalSet set;
  boundary::BoundaryStats stats;
  boundary::AutoencoderLog from_normal;
  boundary::AutoencoderLog from_abnormal;
};

struct ExplainOutcome {
  std::vector<intervention::InterventionResult> results;  // sorted by (case, mode)
  std::vector<std::string> notices;                       // skipped cases
  std::size_t skipped = 0;
};

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);
BoundaryOutcome cmd_boundary(const RunConfig& config, std::ostream& log);
ExplainOutcome cmd_explain(const RunConfig& config, std::ostream& log);
std::vector<evaluation::MetricsReport> cmd_evaluate(const RunConfig& config, std::ostream& log);
// train -> boundary -> explain -> evaluate
std::vector<evaluation::MetricsReport> cmd_run(const RunConfig& config, std::ostream& log);

// Fixed artifact names inside the run directory.
namespace artifact {
inline constexpr const char* kManifest = "manifest";
inline constexpr const char* kClassifier = "classifier.model";
inline constexpr const char* kSimulator = "simulator.model";
inline constexpr const char* kSecondarySimulator = "simulator_secondary.model";
inline constexpr const char* kCriticalSet = "critical_set.csv";
inline constexpr const char* kBoundaryStats = "boundary_stats.json";
inline constexpr const char* kExplanations = "explanations.csv";
inline constexpr const char* kExplanationsTable = "explanations.txt";
inline constexpr const char* kReport = "report";
inline constexpr const char* kReportCases = "report_cases.csv";
}  // namespace artifact

}  // namespace boundcf::pipeline
