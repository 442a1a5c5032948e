#pragma once

// Tabular data: schema sidecars, CSV ingestion, class balancing, deterministic
// splits, one-hot/min-max encoding and a synthetic two-Gaussian oracle.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "boundcf/nn.hpp"

namespace boundcf::data {

using nn::Vector;

enum class FeatureKind { Continuous, Categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  std::vector<std::string> levels;  // categorical only, index = encoded level
  bool actionable = false;
  std::optional<int> preference_rank;  // 1 = most willing to modify

  std::size_t cardinality() const { return levels.size(); }
  bool categorical() const { return kind == FeatureKind::Categorical; }
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string label_column = "target";
  std::size_t classes = 2;
  std::vector<std::string> ignored_columns;  // present in the file, not used

  std::size_t size() const { return features.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features[i]; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::size_t continuous_count() const;
  std::size_t categorical_count() const;

  // Unique names, categorical cardinality >= 2, ranks in 1..d.
  void validate() const;

  static FeatureSchema from_json_text(const std::string& text);
  static FeatureSchema load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

// Raw rows in engineering units; categorical cells hold the level index.
struct Dataset {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  FeatureSchema schema;
  std::string split_tag = "all";

  std::size_t size() const { return rows.size(); }
  std::vector<std::size_t> class_counts() const;
  Dataset subset(const std::vector<std::size_t>& indices, std::string tag) const;
};

// Parses a header + comma separated data file. Errors carry the 1-based line.
Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
Dataset parse_csv(const std::string& text, const FeatureSchema& schema,
                  const std::string& source_name = "<memory>");

// Copies randomly chosen rows of every minority class until all classes reach
// the largest class count. Added rows are appended after the originals.
Dataset balance_upsample(const Dataset& dataset, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Random partition with round(n * fraction) training rows; index lists are
// returned in ascending order.
SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

struct ColumnBlock {
  std::size_t feature = 0;
  std::size_t offset = 0;
  std::size_t width = 1;
  FeatureKind kind = FeatureKind::Continuous;
};

struct EncodedDataset {
  std::vector<Vector> rows;
  std::vector<int> labels;

  std::size_t size() const { return rows.size(); }
  std::vector<Vector> rows_with_label(int label) const;
};

// Continuous features are min-max scaled on the training split, categoricals
// one-hot expanded over the schema's levels. Test rows may land outside [0, 1].
class Encoder {
 public:
  Encoder() = default;
  static Encoder fit(const Dataset& train);
  Encoder(FeatureSchema schema, std::vector<FeatureRange> ranges,
          std::vector<std::vector<bool>> seen_levels);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<ColumnBlock>& blocks() const { return blocks_; }
  const ColumnBlock& block(std::size_t feature) const { return blocks_[feature]; }
  std::size_t width() const { return width_; }
  std::size_t feature_count() const { return schema_.size(); }
  const FeatureRange& range(std::size_t feature) const { return ranges_[feature]; }
  bool level_seen(std::size_t feature, std::size_t level) const;

  // Throws ValidationError for an unseen categorical level or a bad row length.
  Vector encode(const std::vector<double>& raw) const;
  EncodedDataset encode(const Dataset& dataset) const;
  // Categorical blocks decode by argmax; continuous values inside [0, 1] are
  // clamped to the training range so decoded values never drift past it.
  std::vector<double> decode(const Vector& encoded) const;

  // Argmax-snap every categorical block to a one-hot and clip continuous
  // columns into [0, 1].
  void snap(Vector& encoded) const;
  // True if every column belongs to a continuous feature.
  std::vector<bool> continuous_columns() const;

  // Level index of a categorical feature in an encoded vector (argmax, lowest
  // index on ties).
  std::size_t level_of(const Vector& encoded, std::size_t feature) const;
  // Per-feature change test: continuous |delta| > tau in encoded units,
  // categorical level mismatch.
  bool feature_changed(const Vector& a, const Vector& b, std::size_t feature,
                       double tau = 1e-6) const;

  std::string to_json_text() const;
  static Encoder from_json_text(const std::string& text);

 private:
  void build_blocks();

  FeatureSchema schema_;
  std::vector<FeatureRange> ranges_;
  std::vector<std::vector<bool>> seen_levels_;
  std::vector<ColumnBlock> blocks_;
  std::size_t width_ = 0;
};

// Two isotropic unit-variance Gaussian classes in 2-D: class 0 centred at the
// origin, class 1 at (separation, 0). The Bayes boundary is the perpendicular
// bisector {x : normal . x = offset}.
struct SyntheticDataset {
  Dataset data;
  Vector boundary_normal;
  double boundary_offset = 0.0;
  double mean_separation = 0.0;
};

SyntheticDataset synth_gaussian(std::size_t n, double separation, std::uint64_t seed);

}  // namespace boundcf::data
