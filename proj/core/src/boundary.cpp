#include "boundcf/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "boundcf/errors.hpp"
#include "boundcf/text_io.hpp"

namespace boundcf::boundary {

using classifier::kAbnormal;
using classifier::kNormal;

std::string side_name(Side side) {
  return side == Side::FromNormal ? "from_normal" : "from_abnormal";
}

std::string target_name(ReconstructionTarget target) {
  return target == ReconstructionTarget::Self ? "self" : "nearest_opposite";
}

ReconstructionTarget parse_target(const std::string& name) {
  if (name == "self") return ReconstructionTarget::Self;
  if (name == "nearest_opposite") return ReconstructionTarget::NearestOpposite;
  throw ValidationError("unknown reconstruction target '" + name +
                        "' (expected self or nearest_opposite)");
}

void BoundaryTrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw ValidationError("boundary alpha must be a finite nonnegative number");
  if (replicas < 1) throw ValidationError("boundary replicas must be at least 1");
  if (!(replica_dropout >= 0.0 && replica_dropout < 1.0))
    throw ValidationError("replica_dropout must lie in [0, 1)");
  if (output_activation.kind == nn::ActivationKind::Softmax)
    throw ValidationError("autoencoder output activation cannot be softmax");
  for (const auto& h : hidden)
    if (h.units == 0) throw ValidationError("autoencoder hidden layer with zero units");
  train.validate();
}

void BisectionConfig::validate() const {
  if (!(beta > 0.0 && beta < 0.5)) throw ValidationError("beta must lie in (0, 0.5)");
  if (max_iters < 1) throw ValidationError("bisection max_iters must be at least 1");
}

namespace {

std::size_t nearest_index(const Vector& x, const std::vector<Vector>& pool) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < pool.size(); ++j) {
    const double d = (pool[j] - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

std::size_t categorical_mismatches(const Vector& a, const Vector& b, const data::Encoder& enc) {
  std::size_t n = 0;
  for (const auto& blk : enc.blocks())
    if (blk.kind == data::FeatureKind::Categorical && enc.level_of(a, blk.feature) != enc.level_of(b, blk.feature))
      ++n;
  return n;
}

void copy_categorical(const Vector& from, Vector& to, const data::Encoder& enc) {
  for (const auto& blk : enc.blocks())
    if (blk.kind == data::FeatureKind::Categorical)
      to.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.width)) =
          from.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.width));
}

double mean_gap(const std::vector<QuasiSample>& q) {
  if (q.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : q) s += x.gap();
  return s / static_cast<double>(q.size());
}

}  // namespace

TrainedAutoencoder train_boundary_autoencoder(Side side, const std::vector<Vector>& rows,
                                              const std::vector<Vector>& opposite_rows,
                                              const classifier::ClassifierModel& clf,
                                              const data::Encoder& encoder,
                                              const BoundaryTrainConfig& config) {
  config.validate();
  if (rows.empty()) throw ValidationError("autoencoder " + side_name(side) + ": empty class subset");
  const std::size_t width = encoder.width();
  if (clf.input_width() != width) throw ValidationError("classifier and encoder widths differ");

  std::vector<Vector> targets;
  targets.reserve(rows.size());
  if (config.target == ReconstructionTarget::Self) {
    targets = rows;
  } else {
    if (opposite_rows.empty())
      throw ValidationError("nearest_opposite target needs rows of the opposite class");
    for (const auto& x : rows) targets.push_back(opposite_rows[nearest_index(x, opposite_rows)]);
  }

  auto layers = config.hidden;
  layers.push_back({width, config.output_activation, 0.0, 0.0});
  nn::TrainConfig tc = config.train;
  tc.seed = config.train.seed * 2 + (side == Side::FromNormal ? 0 : 1);
  nn::Network ae(width, layers, tc.seed);

  const std::size_t adversarial = side == Side::FromNormal ? kAbnormal : kNormal;
  nn::CompositeLoss loss{&clf.network(), config.alpha, adversarial};

  TrainedAutoencoder out;
  nn::Trainer trainer(ae, tc);
  out.log.epochs = trainer.fit(rows, targets, loss);

  std::size_t flipped = 0;
  std::size_t flipped_raw = 0;
  double recon = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Vector y = ae.predict(rows[i]);
    recon += nn::mse(targets[i], y);
    if (clf.predict_label(y) == static_cast<int>(adversarial)) ++flipped_raw;
    encoder.snap(y);
    if (clf.predict_label(y) == static_cast<int>(adversarial)) ++flipped;
  }
  const auto n = static_cast<double>(rows.size());
  out.log.opposite_rate = static_cast<double>(flipped) / n;
  out.log.opposite_rate_raw = static_cast<double>(flipped_raw) / n;
  out.log.mean_reconstruction = recon / n;
  out.network = std::move(ae);
  return out;
}

double QuasiSample::gap() const { return std::abs(p_n - p_a); }
double CriticalInstance::gap() const { return std::abs(p_n - p_a); }

QuasiSample make_quasi(Vector x, const classifier::ClassifierModel& clf) {
  QuasiSample q;
  const Vector p = clf.predict_proba(x);
  q.p_n = p(kNormal);
  q.p_a = p(kAbnormal);
  q.label = classifier::argmax_label(p);
  q.x = std::move(x);
  return q;
}

std::vector<QuasiSample> generate_quasi(const nn::Network& autoencoder,
                                        const std::vector<Vector>& inputs,
                                        const classifier::ClassifierModel& clf,
                                        const data::Encoder& encoder,
                                        std::optional<double> dropout, Rng* rng) {
  if (dropout && !rng) throw ValidationError("dropout generation needs a generator");
  std::vector<QuasiSample> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    Vector y = dropout ? Vector(autoencoder.forward(x, true, rng, dropout).output())
                       : autoencoder.predict(x);
    encoder.snap(y);
    out.push_back(make_quasi(std::move(y), clf));
  }
  return out;
}

PairingResult pair_candidates(const std::vector<QuasiSample>& anchors,
                              const std::vector<QuasiSample>& candidates,
                              const classifier::ClassifierModel& clf,
                              const data::Encoder& encoder) {
  PairingResult out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    bool found = false;
    std::tuple<std::size_t, double, std::size_t> best{};
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const auto& c = candidates[j];
      if (c.label == a.label) continue;
      std::tuple<std::size_t, double, std::size_t> key{categorical_mismatches(a.x, c.x, encoder),
                                                       (a.x - c.x).squaredNorm(), j};
      if (!found || key < best) {
        best = key;
        found = true;
      }
    }
    if (!found) {
      ++out.dropped_no_partner;
      continue;
    }
    const std::size_t j = std::get<2>(best);
    const auto& c = candidates[j];
    EndpointPair pair;
    pair.anchor = i;
    pair.partner = j;
    pair.left = a.label == kNormal ? a.x : c.x;
    pair.right = a.label == kNormal ? c.x : a.x;
    if (std::get<0>(best) > 0) {
      copy_categorical(pair.left, pair.right, encoder);
      pair.harmonized = true;
      if (clf.predict_label(pair.right) != kAbnormal) {
        ++out.dropped_after_harmonize;
        continue;
      }
    }
    out.pairs.push_back(std::move(pair));
  }
  if (out.pairs.empty()) {
    if (anchors.empty() || candidates.empty())
      out.diagnostic = "no pairs: one side has no quasi samples";
    else
      out.diagnostic = "no pairs: no anchor has an opposite-label partner (" +
                       std::to_string(out.dropped_no_partner) + " without partner, " +
                       std::to_string(out.dropped_after_harmonize) +
                       " lost their label after categorical harmonisation)";
  }
  return out;
}

BisectionOutcome bisect_pair(const Vector& left, const Vector& right,
                             const classifier::ClassifierModel& clf,
                             const BisectionConfig& config) {
  config.validate();
  if (left.size() != right.size()) throw ValidationError("bisection endpoints differ in width");
  Vector l = left;
  Vector r = right;
  double tl = 0.0;
  double tr = 1.0;
  BisectionOutcome out;
  while (out.iterations < config.max_iters) {
    ++out.iterations;
    Vector m = 0.5 * (l + r);
    const double tm = 0.5 * (tl + tr);
    const Vector p = clf.predict_proba(m);
    out.p_n = p(kNormal);
    out.p_a = p(kAbnormal);
    out.point = m;
    out.t = tm;
    if (std::abs(out.p_n - out.p_a) <= config.beta) {
      out.converged = true;
      return out;
    }
    if (out.p_n > out.p_a) {
      l = std::move(m);
      tl = tm;
    } else {
      r = std::move(m);
      tr = tm;
    }
  }
  return out;
}

std::string provenance_name(Provenance p) { return p == Provenance::AeOnly ? "ae_only" : "bisected"; }

GapSummary summarize_gaps(const CriticalSet& set, double beta, std::size_t bins) {
  GapSummary g;
  g.histogram.assign(bins, 0);
  if (set.empty()) return g;
  std::vector<double> gaps;
  for (const auto& s : set.instances) gaps.push_back(s.gap());
  double sum = 0.0;
  for (double v : gaps) {
    sum += v;
    g.max = std::max(g.max, v);
    auto bin = static_cast<std::size_t>(v / beta * static_cast<double>(bins));
    g.histogram[std::min(bin, bins - 1)] += 1;
  }
  g.mean = sum / static_cast<double>(gaps.size());
  std::sort(gaps.begin(), gaps.end());
  const std::size_t n = gaps.size();
  g.median = n % 2 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
  return g;
}

BoundaryRun build_critical_set(const classifier::ClassifierModel& clf,
                               const data::Encoder& encoder,
                               const data::EncodedDataset& train,
                               const BoundaryTrainConfig& boundary_config,
                               const BisectionConfig& bisection_config) {
  boundary_config.validate();
  bisection_config.validate();
  const auto normal_rows = train.rows_with_label(kNormal);
  const auto abnormal_rows = train.rows_with_label(kAbnormal);

  BoundaryRun run;
  run.from_normal = train_boundary_autoencoder(Side::FromNormal, normal_rows, abnormal_rows, clf,
                                               encoder, boundary_config);
  run.from_abnormal = train_boundary_autoencoder(Side::FromAbnormal, abnormal_rows, normal_rows,
                                                 clf, encoder, boundary_config);

  std::vector<QuasiSample> qn;
  std::vector<QuasiSample> qa;
  Rng jitter(boundary_config.train.seed ^ 0x5eedf00dULL);
  for (std::size_t r = 0; r < boundary_config.replicas; ++r) {
    std::optional<double> drop;
    if (r > 0) drop = boundary_config.replica_dropout;
    auto a = generate_quasi(run.from_normal.network, normal_rows, clf, encoder, drop, &jitter);
    auto b = generate_quasi(run.from_abnormal.network, abnormal_rows, clf, encoder, drop, &jitter);
    qn.insert(qn.end(), std::make_move_iterator(a.begin()), std::make_move_iterator(a.end()));
    qa.insert(qa.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  }

  auto& st = run.stats;
  st.quasi_from_normal = qn.size();
  st.quasi_from_abnormal = qa.size();
  {
    double s = 0.0;
    for (const auto& x : train.rows) {
      const Vector p = clf.predict_proba(x);
      s += std::abs(p(kNormal) - p(kAbnormal));
    }
    st.input_gap_mean = train.rows.empty() ? 0.0 : s / static_cast<double>(train.rows.size());
    std::vector<QuasiSample> all = qn;
    all.insert(all.end(), qa.begin(), qa.end());
    st.quasi_gap_mean = mean_gap(all);
  }

  std::set<std::vector<double>> seen;
  auto add = [&](const Vector& x, double p_n, double p_a, Provenance prov) {
    std::vector<double> key(x.data(), x.data() + x.size());
    if (!seen.insert(std::move(key)).second) {
      ++st.duplicates;
      return;
    }
    run.set.instances.push_back({x, p_n, p_a, prov});
    if (prov == Provenance::AeOnly) ++st.ae_only;
    else ++st.bisected;
  };

  for (const auto* side : {&qn, &qa})
    for (const auto& q : *side)
      if (q.gap() <= bisection_config.beta) add(q.x, q.p_n, q.p_a, Provenance::AeOnly);

  auto pairing = pair_candidates(qn, qa, clf, encoder);
  st.pairs = pairing.pairs.size();
  st.dropped_no_partner = pairing.dropped_no_partner;
  st.dropped_after_harmonize = pairing.dropped_after_harmonize;
  for (const auto& pair : pairing.pairs) {
    auto res = bisect_pair(pair.left, pair.right, clf, bisection_config);
    if (!res.converged) {
      ++st.rejected;
      continue;
    }
    add(res.point, res.p_n, res.p_a, Provenance::Bisected);
  }

  if (run.set.empty()) {
    std::string msg = "critical set is empty: " + std::to_string(qn.size()) + " + " +
                      std::to_string(qa.size()) + " quasi samples, " + std::to_string(st.pairs) +
                      " pairs, " + std::to_string(st.rejected) + " rejected by bisection";
    if (!pairing.diagnostic.empty()) msg += "; " + pairing.diagnostic;
    throw RuntimeFailure(msg);
  }
  st.gaps = summarize_gaps(run.set, bisection_config.beta);
  return run;
}

// ---- CSV ----------------------------------------------------------------------

namespace {

std::vector<std::string> encoded_column_names(const data::Encoder& enc) {
  std::vector<std::string> names;
  for (const auto& blk : enc.blocks()) {
    const auto& spec = enc.schema()[blk.feature];
    if (blk.kind == data::FeatureKind::Continuous) {
      names.push_back("enc:" + spec.name);
    } else {
      for (const auto& level : spec.levels) names.push_back("enc:" + spec.name + "=" + level);
    }
  }
  return names;
}

}  // namespace

std::string critical_set_to_csv(const CriticalSet& set, const data::Encoder& encoder) {
  std::vector<std::string> header = encoded_column_names(encoder);
  for (const auto& f : encoder.schema().features) header.push_back(f.name);
  header.insert(header.end(), {"p_normal", "p_abnormal", "provenance"});
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += "\n";
  for (const auto& s : set.instances) {
    std::string line;
    for (Eigen::Index i = 0; i < s.x.size(); ++i) line += text::exact(s.x(i)) + ",";
    const auto raw = encoder.decode(s.x);
    for (std::size_t f = 0; f < raw.size(); ++f) {
      const auto& spec = encoder.schema()[f];
      line += (spec.categorical() ? spec.levels[static_cast<std::size_t>(raw[f])] : text::exact(raw[f])) + ",";
    }
    line += text::exact(s.p_n) + "," + text::exact(s.p_a) + "," + provenance_name(s.provenance);
    out += line + "\n";
  }
  return out;
}

CriticalSet critical_set_from_csv(const std::string& content, const data::Encoder& encoder) {
  const auto all = text::lines(content);
  if (all.empty()) throw ValidationError("critical set file is empty");
  const auto header = text::split_csv_line(all[0]);
  const auto expected = encoded_column_names(encoder);
  const std::size_t width = encoder.width();
  const std::size_t columns = width + encoder.feature_count() + 3;
  if (header.size() != columns || !std::equal(expected.begin(), expected.end(), header.begin()))
    throw ValidationError("critical set header does not match the encoder schema");
  CriticalSet set;
  for (std::size_t ln = 1; ln < all.size(); ++ln) {
    if (all[ln].empty()) continue;
    const auto cells = text::split_csv_line(all[ln]);
    if (cells.size() != columns)
      throw ValidationError("critical set line " + std::to_string(ln + 1) + ": wrong cell count");
    CriticalInstance s;
    s.x.resize(static_cast<Eigen::Index>(width));
    try {
      for (std::size_t i = 0; i < width; ++i) s.x(static_cast<Eigen::Index>(i)) = std::stod(cells[i]);
      s.p_n = std::stod(cells[columns - 3]);
      s.p_a = std::stod(cells[columns - 2]);
    } catch (const std::exception&) {
      throw ValidationError("critical set line " + std::to_string(ln + 1) + ": bad number");
    }
    const auto& prov = cells[columns - 1];
    if (prov == "ae_only") s.provenance = Provenance::AeOnly;
    else if (prov == "bisected") s.provenance = Provenance::Bisected;
    else throw ValidationError("critical set line " + std::to_string(ln + 1) + ": unknown provenance");
    set.instances.push_back(std::move(s));
  }
  return set;
}

void save_critical_set(const std::filesystem::path& path, const CriticalSet& set,
                       const data::Encoder& encoder) {
  text::write_file(path, critical_set_to_csv(set, encoder));
}

CriticalSet load_critical_set(const std::filesystem::path& path, const data::Encoder& encoder) {
  return critical_set_from_csv(text::read_file(path), encoder);
}

}  // namespace boundcf::boundary
