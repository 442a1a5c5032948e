#include "boundcf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "boundcf/errors.hpp"
#include "boundcf/rng.hpp"
#include "boundcf/text_io.hpp"
#include "json_codec.hpp"

namespace boundcf::data {

using detail::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string kind_name(FeatureKind kind) {
  return kind == FeatureKind::Categorical ? "categorical" : "continuous";
}

}  // namespace

// ---- schema -------------------------------------------------------------------

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return i;
  return std::nullopt;
}

std::size_t FeatureSchema::continuous_count() const {
  return static_cast<std::size_t>(std::count_if(
      features.begin(), features.end(), [](const FeatureSpec& f) { return !f.categorical(); }));
}

std::size_t FeatureSchema::categorical_count() const { return size() - continuous_count(); }

void FeatureSchema::validate() const {
  std::vector<std::string> problems;
  if (features.empty()) problems.push_back("schema declares no features");
  if (classes != 2) problems.push_back("only binary classification (classes = 2) is supported");
  std::set<std::string> names;
  for (const auto& f : features) {
    if (f.name.empty()) problems.push_back("feature with empty name");
    if (!names.insert(f.name).second) problems.push_back("duplicate feature name '" + f.name + "'");
    if (f.name == label_column) problems.push_back("feature '" + f.name + "' collides with the label column");
    if (f.categorical()) {
      if (f.levels.size() < 2)
        problems.push_back("categorical feature '" + f.name + "' needs at least 2 levels");
      std::set<std::string> lv(f.levels.begin(), f.levels.end());
      if (lv.size() != f.levels.size())
        problems.push_back("categorical feature '" + f.name + "' repeats a level");
    } else if (!f.levels.empty()) {
      problems.push_back("continuous feature '" + f.name + "' must not list levels");
    }
    if (f.preference_rank) {
      if (*f.preference_rank < 1 || static_cast<std::size_t>(*f.preference_rank) > features.size())
        problems.push_back("feature '" + f.name + "' has preference_rank outside 1.." +
                           std::to_string(features.size()));
      if (!f.actionable)
        problems.push_back("feature '" + f.name + "' is ranked but not actionable");
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid schema:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
}

FeatureSchema FeatureSchema::from_json_text(const std::string& text) {
  FeatureSchema schema;
  try {
    const json doc = json::parse(text);
    schema.label_column = doc.value("label_column", std::string("target"));
    schema.classes = doc.value("classes", std::size_t{2});
    if (doc.contains("ignored_columns"))
      schema.ignored_columns = doc["ignored_columns"].get<std::vector<std::string>>();
    for (const auto& jf : doc.at("features")) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      const auto kind = jf.at("kind").get<std::string>();
      if (kind == "continuous") {
        f.kind = FeatureKind::Continuous;
      } else if (kind == "categorical") {
        f.kind = FeatureKind::Categorical;
        f.levels = jf.at("levels").get<std::vector<std::string>>();
      } else {
        throw ValidationError("feature '" + f.name + "' has unknown kind '" + kind + "'");
      }
      f.actionable = jf.value("actionable", false);
      if (jf.contains("preference_rank") && !jf["preference_rank"].is_null())
        f.preference_rank = jf["preference_rank"].get<int>();
      schema.features.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed schema document: ") + e.what());
  }
  schema.validate();
  return schema;
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  try {
    return from_json_text(text::read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string FeatureSchema::to_json_text() const {
  json doc;
  doc["label_column"] = label_column;
  doc["classes"] = classes;
  doc["ignored_columns"] = ignored_columns;
  json arr = json::array();
  for (const auto& f : features) {
    json jf;
    jf["name"] = f.name;
    jf["kind"] = kind_name(f.kind);
    if (f.categorical()) jf["levels"] = f.levels;
    jf["actionable"] = f.actionable;
    jf["preference_rank"] = f.preference_rank ? json(*f.preference_rank) : json(nullptr);
    arr.push_back(std::move(jf));
  }
  doc["features"] = std::move(arr);
  return detail::dump(doc);
}

// ---- dataset --------------------------------------------------------------------

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(schema.classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices, std::string tag) const {
  Dataset out;
  out.schema = schema;
  out.split_tag = std::move(tag);
  out.rows.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.rows.push_back(rows.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Dataset parse_csv(const std::string& text, const FeatureSchema& schema,
                  const std::string& source_name) {
  schema.validate();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ValidationError(source_name + ":" + std::to_string(line_no) + ": " + what);
  };

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw ValidationError(source_name + ": empty file");

  // column -> feature index (or label)
  std::vector<std::optional<std::size_t>> column_feature(header.size());
  std::optional<std::size_t> label_col;
  std::vector<bool> seen(schema.size(), false);
  std::vector<std::string> problems;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == schema.label_column) {
      label_col = c;
      continue;
    }
    if (std::find(schema.ignored_columns.begin(), schema.ignored_columns.end(), header[c]) !=
        schema.ignored_columns.end())
      continue;
    auto idx = schema.index_of(header[c]);
    if (!idx) {
      problems.push_back("unexpected column '" + header[c] + "'");
      continue;
    }
    column_feature[c] = *idx;
    seen[*idx] = true;
  }
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (!seen[f]) problems.push_back("missing column '" + schema[f].name + "'");
  if (!label_col) problems.push_back("missing label column '" + schema.label_column + "'");
  if (!problems.empty()) {
    std::string msg = "header does not match schema:";
    for (const auto& p : problems) msg += "\n  - " + p;
    fail(msg);
  }

  Dataset ds;
  ds.schema = schema;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_fields(line);
    if (cells.size() != header.size())
      fail("expected " + std::to_string(header.size()) + " cells, found " +
           std::to_string(cells.size()));
    std::vector<double> row(schema.size(), 0.0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      if (c != *label_col && !column_feature[c]) continue;
      if (cell.empty()) fail("blank cell in column '" + header[c] + "'");
      if (c == *label_col) continue;
      const auto& spec = schema[*column_feature[c]];
      if (spec.categorical()) {
        auto it = std::find(spec.levels.begin(), spec.levels.end(), cell);
        if (it == spec.levels.end()) {
          // numeric cells may be written differently from the level text ("1.0" vs "1")
          auto num = parse_number(cell);
          if (num) {
            it = std::find_if(spec.levels.begin(), spec.levels.end(), [&](const std::string& lv) {
              auto lvn = parse_number(lv);
              return lvn && *lvn == *num;
            });
          }
        }
        if (it == spec.levels.end())
          fail("unknown level '" + cell + "' for categorical feature '" + spec.name + "'");
        row[*column_feature[c]] = static_cast<double>(it - spec.levels.begin());
      } else {
        auto num = parse_number(cell);
        if (!num) fail("cannot parse '" + cell + "' as a number in column '" + header[c] + "'");
        row[*column_feature[c]] = *num;
      }
    }
    auto label = parse_number(cells[*label_col]);
    if (!label || *label != std::floor(*label) || *label < 0 ||
        *label >= static_cast<double>(schema.classes))
      fail("label '" + cells[*label_col] + "' is not a class index in [0, " +
           std::to_string(schema.classes) + ")");
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(static_cast<int>(*label));
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  return parse_csv(text::read_file(path), schema, path.string());
}

Dataset balance_upsample(const Dataset& dataset, std::uint64_t seed) {
  const auto counts = dataset.class_counts();
  if (counts.size() < 2) throw ValidationError("balancing needs at least two classes");
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] == 0)
      throw ValidationError("cannot balance: class " + std::to_string(k) + " has no rows");
  const std::size_t target = *std::max_element(counts.begin(), counts.end());

  Dataset out = dataset;
  Rng rng(seed);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (static_cast<std::size_t>(dataset.labels[i]) == k) members.push_back(i);
    for (std::size_t added = counts[k]; added < target; ++added) {
      const std::size_t pick = members[rng.index(members.size())];
      out.rows.push_back(dataset.rows[pick]);
      out.labels.push_back(dataset.labels[pick]);
    }
  }
  return out;
}

SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
  auto idx = split_indices(dataset.size(), train_fraction, seed);
  return {dataset.subset(idx.train, "train"), dataset.subset(idx.test, "test")};
}

// ---- encoding -------------------------------------------------------------------

std::vector<Vector> EncodedDataset::rows_with_label(int label) const {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (labels[i] == label) out.push_back(rows[i]);
  return out;
}

Encoder Encoder::fit(const Dataset& train) {
  if (train.size() == 0) throw ValidationError("cannot fit an encoder on an empty split");
  const auto& schema = train.schema;
  std::vector<FeatureRange> ranges(schema.size());
  std::vector<std::vector<bool>> seen(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].categorical()) {
      seen[f].assign(schema[f].cardinality(), false);
      for (const auto& row : train.rows) seen[f][static_cast<std::size_t>(row[f])] = true;
    } else {
      double lo = train.rows[0][f];
      double hi = lo;
      for (const auto& row : train.rows) {
        lo = std::min(lo, row[f]);
        hi = std::max(hi, row[f]);
      }
      ranges[f] = {lo, hi};
    }
  }
  return Encoder(schema, std::move(ranges), std::move(seen));
}

Encoder::Encoder(FeatureSchema schema, std::vector<FeatureRange> ranges,
                 std::vector<std::vector<bool>> seen_levels)
    : schema_(std::move(schema)), ranges_(std::move(ranges)), seen_levels_(std::move(seen_levels)) {
  if (ranges_.size() != schema_.size() || seen_levels_.size() != schema_.size())
    throw ValidationError("encoder state does not match the schema");
  for (std::size_t f = 0; f < schema_.size(); ++f) {
    if (schema_[f].categorical()) {
      if (seen_levels_[f].size() != schema_[f].cardinality())
        throw ValidationError("seen-level table for '" + schema_[f].name + "' has wrong size");
    } else if (ranges_[f].min > ranges_[f].max) {
      throw ValidationError("range of '" + schema_[f].name + "' has min > max");
    }
  }
  build_blocks();
}

void Encoder::build_blocks() {
  blocks_.clear();
  std::size_t offset = 0;
  for (std::size_t f = 0; f < schema_.size(); ++f) {
    ColumnBlock b;
    b.feature = f;
    b.offset = offset;
    b.kind = schema_[f].kind;
    b.width = schema_[f].categorical() ? schema_[f].cardinality() : 1;
    offset += b.width;
    blocks_.push_back(b);
  }
  width_ = offset;
}

bool Encoder::level_seen(std::size_t feature, std::size_t level) const {
  const auto& s = seen_levels_.at(feature);
  return level < s.size() && s[level];
}

Vector Encoder::encode(const std::vector<double>& raw) const {
  if (raw.size() != schema_.size())
    throw ValidationError("row has " + std::to_string(raw.size()) + " features, schema has " +
                          std::to_string(schema_.size()));
  Vector out = Vector::Zero(static_cast<Eigen::Index>(width_));
  for (const auto& b : blocks_) {
    const double v = raw[b.feature];
    if (b.kind == FeatureKind::Categorical) {
      const auto level = static_cast<std::size_t>(v);
      if (v < 0 || v != std::floor(v) || !level_seen(b.feature, level)) {
        const auto& spec = schema_[b.feature];
        const std::string name = level < spec.levels.size() ? spec.levels[level] : std::to_string(v);
        throw ValidationError("categorical level '" + name + "' of '" + spec.name +
                              "' was not seen in training");
      }
      out(static_cast<Eigen::Index>(b.offset + level)) = 1.0;
    } else {
      const auto& r = ranges_[b.feature];
      const double span = r.max - r.min;
      out(static_cast<Eigen::Index>(b.offset)) = span > 0 ? (v - r.min) / span : 0.0;
    }
  }
  return out;
}

EncodedDataset Encoder::encode(const Dataset& dataset) const {
  EncodedDataset out;
  out.rows.reserve(dataset.size());
  for (const auto& row : dataset.rows) out.rows.push_back(encode(row));
  out.labels = dataset.labels;
  return out;
}

std::size_t Encoder::level_of(const Vector& encoded, std::size_t feature) const {
  const auto& b = blocks_.at(feature);
  std::size_t best = 0;
  for (std::size_t k = 1; k < b.width; ++k)
    if (encoded(static_cast<Eigen::Index>(b.offset + k)) >
        encoded(static_cast<Eigen::Index>(b.offset + best)))
      best = k;
  return best;
}

std::vector<double> Encoder::decode(const Vector& encoded) const {
  if (static_cast<std::size_t>(encoded.size()) != width_)
    throw ValidationError("encoded vector has width " + std::to_string(encoded.size()) +
                          ", expected " + std::to_string(width_));
  std::vector<double> raw(schema_.size(), 0.0);
  for (const auto& b : blocks_) {
    if (b.kind == FeatureKind::Categorical) {
      raw[b.feature] = static_cast<double>(level_of(encoded, b.feature));
    } else {
      const double t = encoded(static_cast<Eigen::Index>(b.offset));
      const auto& r = ranges_[b.feature];
      double v = r.min + t * (r.max - r.min);
      if (t >= 0.0 && t <= 1.0) v = std::clamp(v, r.min, r.max);
      raw[b.feature] = v;
    }
  }
  return raw;
}

void Encoder::snap(Vector& encoded) const {
  for (const auto& b : blocks_) {
    if (b.kind == FeatureKind::Categorical) {
      const std::size_t level = level_of(encoded, b.feature);
      for (std::size_t k = 0; k < b.width; ++k)
        encoded(static_cast<Eigen::Index>(b.offset + k)) = k == level ? 1.0 : 0.0;
    } else {
      auto& v = encoded(static_cast<Eigen::Index>(b.offset));
      v = std::clamp(v, 0.0, 1.0);
    }
  }
}

std::vector<bool> Encoder::continuous_columns() const {
  std::vector<bool> out(width_, false);
  for (const auto& b : blocks_)
    if (b.kind == FeatureKind::Continuous) out[b.offset] = true;
  return out;
}

bool Encoder::feature_changed(const Vector& a, const Vector& b, std::size_t feature,
                              double tau) const {
  const auto& blk = blocks_.at(feature);
  if (blk.kind == FeatureKind::Categorical) return level_of(a, feature) != level_of(b, feature);
  const auto col = static_cast<Eigen::Index>(blk.offset);
  return std::abs(a(col) - b(col)) > tau;
}

std::string Encoder::to_json_text() const {
  json doc;
  doc["format"] = "boundcf-encoder";
  doc["schema"] = json::parse(schema_.to_json_text());
  json ranges = json::array();
  json seen = json::array();
  for (std::size_t f = 0; f < schema_.size(); ++f) {
    ranges.push_back({ranges_[f].min, ranges_[f].max});
    json s = json::array();
    for (bool b : seen_levels_[f]) s.push_back(b);
    seen.push_back(std::move(s));
  }
  doc["ranges"] = std::move(ranges);
  doc["seen_levels"] = std::move(seen);
  return detail::dump(doc);
}

Encoder Encoder::from_json_text(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "boundcf-encoder")
      throw ValidationError("not an encoder document");
    auto schema = FeatureSchema::from_json_text(doc.at("schema").dump());
    std::vector<FeatureRange> ranges;
    for (const auto& r : doc.at("ranges")) ranges.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    std::vector<std::vector<bool>> seen;
    for (const auto& s : doc.at("seen_levels")) seen.push_back(s.get<std::vector<bool>>());
    return Encoder(std::move(schema), std::move(ranges), std::move(seen));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed encoder document: ") + e.what());
  }
}

// ---- synthetic oracle ------------------------------------------------------------

SyntheticDataset synth_gaussian(std::size_t n, double separation, std::uint64_t seed) {
  if (n < 2) throw ValidationError("synthetic dataset needs n >= 2");
  if (separation < 0) throw ValidationError("separation must be nonnegative");
  SyntheticDataset out;
  out.mean_separation = separation;
  out.data.schema.features = {FeatureSpec{"x1", FeatureKind::Continuous, {}, true, 1},
                              FeatureSpec{"x2", FeatureKind::Continuous, {}, true, 2}};
  out.data.split_tag = "synthetic";
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label == 1 ? separation : 0.0;
    out.data.rows.push_back({cx + rng.normal(), rng.normal()});
    out.data.labels.push_back(label);
  }
  out.boundary_normal = Vector::Zero(2);
  out.boundary_normal(0) = 1.0;
  out.boundary_offset = separation / 2.0;
  return out;
}

}  // namespace boundcf::data
