#include "boundcf/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "boundcf/errors.hpp"

namespace boundcf::intervention {

using classifier::kNormal;

std::string norm_name(NormMode mode) { return mode == NormMode::MinMax ? "minmax" : "literal"; }

NormMode parse_norm(const std::string& name) {
  if (name == "minmax") return NormMode::MinMax;
  if (name == "literal") return NormMode::Literal;
  throw ValidationError("unknown norm mode '" + name + "' (expected minmax or literal)");
}

std::string mode_name(Mode mode) { return mode == Mode::Minimal ? "minimal" : "constrained"; }

Nearest distance_to_set(const Vector& x, const std::vector<Vector>& points) {
  if (points.empty()) throw ValidationError("distance to an empty set is undefined");
  Nearest best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != x.size()) throw ValidationError("set member width differs from query");
    const double d = (points[i] - x).squaredNorm();
    if (d < best.distance) best = {d, i};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

NormalizedSet::NormalizedSet(const boundary::CriticalSet& set, const data::Encoder& encoder,
                             NormMode mode)
    : encoder_(&encoder), mode_(mode) {
  points_.reserve(set.size());
  for (const auto& s : set.instances) points_.push_back(transform(s.x));
}

Vector NormalizedSet::transform(const Vector& encoded) const {
  if (mode_ == NormMode::MinMax) return encoded;
  const auto raw = encoder_->decode(encoded);
  Vector v = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  const double n = v.norm();
  if (n > 0) v /= n;
  return v;
}

Nearest NormalizedSet::nearest(const Vector& encoded) const {
  return distance_to_set(transform(encoded), points_);
}

FactualCase make_case(std::size_t index, const std::vector<double>& raw,
                      const data::Encoder& encoder, const classifier::ClassifierModel& clf) {
  FactualCase fc;
  fc.index = index;
  fc.raw = raw;
  fc.encoded = encoder.encode(raw);
  fc.predicted = clf.predict_label(fc.encoded);
  return fc;
}

bool within_training_range(const Vector& encoded, const data::Encoder& encoder) {
  for (const auto& blk : encoder.blocks()) {
    if (blk.kind != data::FeatureKind::Continuous) continue;
    const double v = encoded(static_cast<Eigen::Index>(blk.offset));
    if (v < 0.0 || v > 1.0) return false;
  }
  return true;
}

ConstraintMask ConstraintMask::from_schema(
    const data::FeatureSchema& schema,
    const std::optional<std::vector<std::optional<int>>>& ranks) {
  if (ranks && ranks->size() != schema.size())
    throw ValidationError("rank override must list one entry per feature");
  ConstraintMask m;
  m.z.assign(schema.size(), true);
  std::vector<std::pair<int, std::size_t>> keyed;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto rank = ranks ? (*ranks)[f] : schema[f].preference_rank;
    if (schema[f].actionable && rank) {
      if (*rank < 1 || static_cast<std::size_t>(*rank) > schema.size())
        throw ValidationError("preference rank of '" + schema[f].name + "' outside 1..d");
      m.z[f] = false;
      keyed.emplace_back(*rank, f);
    }
  }
  std::sort(keyed.begin(), keyed.end());
  for (const auto& [rank, f] : keyed) m.order.push_back(f);
  m.validate();
  return m;
}

std::size_t ConstraintMask::masked_count() const {
  return static_cast<std::size_t>(std::count(z.begin(), z.end(), true));
}

void ConstraintMask::validate() const {
  if (masked_count() >= z.size())
    throw ValidationError("constraint mask leaves no modifiable feature");
  if (order.size() != z.size() - masked_count())
    throw ValidationError("preference order does not match the mask");
  for (std::size_t f : order)
    if (f >= z.size() || z[f]) throw ValidationError("preference order lists a masked feature");
}

void InterventionConfig::validate() const {
  if (lambdas.empty()) throw ValidationError("lambda schedule is empty");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("lambda values must be nonnegative");
}

namespace {

void copy_block(const Vector& from, Vector& to, const data::ColumnBlock& blk) {
  to.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.width)) =
      from.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.width));
}

void finish(InterventionResult& r, const FactualCase& fc, const Vector& cf,
            const std::vector<std::size_t>& touched, const classifier::ClassifierModel& clf,
            const data::Encoder& encoder, const ConstraintMask* mask) {
  r.case_index = fc.index;
  r.factual_raw = fc.raw;
  r.factual_encoded = fc.encoded;
  r.cf_encoded = cf;
  r.cf_raw = encoder.decode(cf);
  // masked features keep their exact factual values (decode may re-quantise them)
  for (std::size_t f = 0; f < encoder.feature_count(); ++f)
    if (!encoder.feature_changed(fc.encoded, cf, f, 0.0)) r.cf_raw[f] = fc.raw[f];
  r.delta.resize(r.cf_raw.size());
  for (std::size_t f = 0; f < r.cf_raw.size(); ++f) r.delta[f] = r.cf_raw[f] - fc.raw[f];
  r.changed.clear();
  for (std::size_t f : touched)
    if (encoder.feature_changed(fc.encoded, cf, f) &&
        std::find(r.changed.begin(), r.changed.end(), f) == r.changed.end())
      r.changed.push_back(f);
  const Vector p = clf.predict_proba(cf);
  r.p_n = p(kNormal);
  r.p_a = p(classifier::kAbnormal);
  r.flipped = classifier::argmax_label(p) == kNormal;
  r.violated = false;
  if (mask)
    for (std::size_t f = 0; f < mask->z.size(); ++f)
      if (mask->z[f] && encoder.feature_changed(fc.encoded, cf, f)) r.violated = true;
}

std::vector<std::size_t> all_features(const data::Encoder& encoder) {
  std::vector<std::size_t> v(encoder.feature_count());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

InterventionResult minimal_intervention(const FactualCase& fc, const boundary::CriticalSet& set,
                                        const NormalizedSet& normalized,
                                        const classifier::ClassifierModel& clf,
                                        const data::Encoder& encoder,
                                        const InterventionConfig& config) {
  config.validate();
  if (set.empty()) throw ValidationError("critical set is empty");
  const Nearest nn = normalized.nearest(fc.encoded);
  const Vector& s = set[nn.index].x;

  InterventionResult r;
  r.mode = Mode::Minimal;
  r.norm = normalized.mode();
  r.critical_index = nn.index;
  Vector candidate = s;
  for (double lambda : config.lambdas) {
    candidate = s + lambda * (s - fc.encoded);
    for (const auto& blk : encoder.blocks()) {
      if (blk.kind == data::FeatureKind::Categorical) {
        copy_block(s, candidate, blk);
      } else {
        auto& v = candidate(static_cast<Eigen::Index>(blk.offset));
        v = std::clamp(v, 0.0, 1.0);
      }
    }
    r.lambda = lambda;
    if (clf.predict_label(candidate) == kNormal) break;
  }
  finish(r, fc, candidate, all_features(encoder), clf, encoder, nullptr);
  return r;
}

InterventionResult constrained_intervention(const FactualCase& fc,
                                            const boundary::CriticalSet& set,
                                            const ConstraintMask& mask,
                                            const classifier::ClassifierModel& clf,
                                            const data::Encoder& encoder) {
  mask.validate();
  if (set.empty()) throw ValidationError("critical set is empty");
  if (mask.z.size() != encoder.feature_count())
    throw ValidationError("mask does not match the schema");
  const auto& P = mask.order;
  const auto& first = encoder.block(P[0]);
  const auto first_col = static_cast<Eigen::Index>(first.offset);

  InterventionResult r;
  r.mode = Mode::Constrained;
  std::vector<std::size_t> touched;
  Vector x = fc.encoded;

  // Clamp the most preferred feature into the critical set's range.
  if (first.kind == data::FeatureKind::Continuous) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : set.instances) {
      lo = std::min(lo, s.x(first_col));
      hi = std::max(hi, s.x(first_col));
    }
    const double clamped = std::clamp(x(first_col), lo, hi);
    if (clamped != x(first_col)) {
      x(first_col) = clamped;
      r.clamped = true;
      touched.push_back(P[0]);
    }
  }
  r.prefix_length = 1;
  const Vector after_clamp = x;
  auto is_normal = [&](const Vector& v) { return clf.predict_label(v) == kNormal; };
  if (is_normal(x)) {
    finish(r, fc, x, touched, clf, encoder, &mask);
    return r;
  }

  // Closest critical instance on the most preferred feature (factual value).
  auto first_distance = [&](const Vector& s) {
    if (first.kind == data::FeatureKind::Continuous) return std::abs(s(first_col) - fc.encoded(first_col));
    return encoder.level_of(s, P[0]) == encoder.level_of(fc.encoded, P[0]) ? 0.0 : 1.0;
  };
  std::size_t C = 0;
  for (std::size_t i = 1; i < set.size(); ++i)
    if (first_distance(set[i].x) < first_distance(set[C].x)) C = i;
  r.critical_index = C;

  for (std::size_t i = 1; i < P.size(); ++i) {
    copy_block(set[C].x, x, encoder.block(P[i]));
    touched.push_back(P[i]);
    r.prefix_length = i + 1;
    if (is_normal(x)) {
      finish(r, fc, x, touched, clf, encoder, &mask);
      return r;
    }
  }

  // Fallback: nearest critical instance over all modifiable features.
  auto modifiable_distance = [&](const Vector& s) {
    double d = 0.0;
    for (std::size_t f : P) {
      const auto& blk = encoder.block(f);
      const auto seg_s = s.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.width));
      const auto seg_x = fc.encoded.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.width));
      d += (seg_s - seg_x).squaredNorm();
    }
    return d;
  };
  std::size_t C2 = 0;
  double best = modifiable_distance(set[0].x);
  for (std::size_t i = 1; i < set.size(); ++i) {
    const double d = modifiable_distance(set[i].x);
    if (d < best) {
      best = d;
      C2 = i;
    }
  }
  r.fallback_used = true;
  r.critical_index = C2;
  x = after_clamp;
  touched.assign(r.clamped ? 1 : 0, P[0]);
  r.prefix_length = 1;
  for (std::size_t i = 1; i < P.size(); ++i) {
    copy_block(set[C2].x, x, encoder.block(P[i]));
    touched.push_back(P[i]);
    r.prefix_length = i + 1;
    if (is_normal(x)) break;
  }
  if (!is_normal(x)) {
    copy_block(set[C2].x, x, first);
    if (std::find(touched.begin(), touched.end(), P[0]) == touched.end()) touched.push_back(P[0]);
  }
  finish(r, fc, x, touched, clf, encoder, &mask);
  return r;
}

ObjectiveBreakdown score_objective(const FactualCase& fc, const Vector& cf_encoded,
                                   const classifier::ClassifierModel& clf,
                                   const data::Encoder& encoder,
                                   const std::vector<Vector>& normal_train_rows) {
  ObjectiveBreakdown o;
  o.ce = nn::crossentropy(clf.predict_proba(cf_encoded), nn::one_hot(kNormal, 2));
  o.proximity = (cf_encoded - fc.encoded).norm();
  o.realism = normal_train_rows.empty() ? 0.0 : distance_to_set(cf_encoded, normal_train_rows).distance;
  const auto& schema = encoder.schema();
  const double d = static_cast<double>(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const auto& rank = schema[f].preference_rank;
    if (!rank) continue;
    const double w = (d - *rank + 1.0) / d;
    const auto& blk = encoder.block(f);
    double change = 0.0;
    if (blk.kind == data::FeatureKind::Continuous) {
      change = std::abs(cf_encoded(static_cast<Eigen::Index>(blk.offset)) -
                        fc.encoded(static_cast<Eigen::Index>(blk.offset)));
    } else {
      change = encoder.level_of(cf_encoded, f) != encoder.level_of(fc.encoded, f) ? 1.0 : 0.0;
    }
    o.preference += w * change;
  }
  return o;
}

}  // namespace boundcf::intervention
