#include "boundcf/evaluation.hpp"

#include <cmath>

#include "boundcf/classifier.hpp"
#include "boundcf/errors.hpp"
#include "boundcf/text_io.hpp"
#include "json_codec.hpp"

namespace boundcf::evaluation {

using detail::json;

namespace {

void require_nonempty(const std::vector<InterventionResult>& results, const char* what) {
  if (results.empty()) throw ValidationError(std::string(what) + ": empty counterfactual batch");
}

}  // namespace

double validity(const std::vector<InterventionResult>& results,
                const simulator::SimulatorModel& sim) {
  require_nonempty(results, "validity");
  std::size_t ok = 0;
  for (const auto& r : results) ok += sim.simulate_class(r.cf_encoded) == classifier::kNormal ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

double classifier_validity(const std::vector<InterventionResult>& results) {
  require_nonempty(results, "validity");
  std::size_t ok = 0;
  for (const auto& r : results) ok += r.flipped ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

double proximity(const InterventionResult& result, const data::Encoder& encoder,
                 ProximityVariant variant) {
  const auto& schema = encoder.schema();
  if (variant == ProximityVariant::EncodedPerFeature)
    return (result.cf_encoded - result.factual_encoded).norm() / static_cast<double>(schema.size());

  std::vector<double> a;
  std::vector<double> b;
  std::size_t categorical = 0;
  std::size_t mismatched = 0;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].categorical()) {
      ++categorical;
      mismatched += encoder.level_of(result.cf_encoded, f) != encoder.level_of(result.factual_encoded, f);
    } else {
      a.push_back(result.cf_raw[f]);
      b.push_back(result.factual_raw[f]);
    }
  }
  double cont_sq = 0.0;
  if (!a.empty()) {
    Vector va = Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
    Vector vb = Eigen::Map<Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    if (va.norm() > 0) va /= va.norm();
    if (vb.norm() > 0) vb /= vb.norm();
    cont_sq = (va - vb).squaredNorm();
  }
  double cat = 0.0;
  if (categorical > 0) cat = static_cast<double>(mismatched) / static_cast<double>(categorical);
  return std::sqrt(cont_sq + cat * cat);
}

double mean_proximity(const std::vector<InterventionResult>& results,
                      const data::Encoder& encoder, ProximityVariant variant) {
  require_nonempty(results, "proximity");
  double s = 0.0;
  for (const auto& r : results) s += proximity(r, encoder, variant);
  return s / static_cast<double>(results.size());
}

std::size_t count_changes(const InterventionResult& result, const data::Encoder& encoder,
                          double tau) {
  std::size_t n = 0;
  for (std::size_t f = 0; f < encoder.feature_count(); ++f)
    n += encoder.feature_changed(result.factual_encoded, result.cf_encoded, f, tau) ? 1 : 0;
  return n;
}

std::size_t count_violations(const InterventionResult& result,
                             const intervention::ConstraintMask& mask,
                             const data::Encoder& encoder, double tau) {
  std::size_t n = 0;
  for (std::size_t f = 0; f < encoder.feature_count(); ++f)
    if (mask.z.at(f) && encoder.feature_changed(result.factual_encoded, result.cf_encoded, f, tau)) ++n;
  return n;
}

double sparsity(const std::vector<InterventionResult>& results, const data::Encoder& encoder) {
  require_nonempty(results, "sparsity");
  double s = 0.0;
  for (const auto& r : results) s += static_cast<double>(count_changes(r, encoder));
  return s / static_cast<double>(results.size());
}

double violations(const std::vector<InterventionResult>& results,
                  const intervention::ConstraintMask& mask, const data::Encoder& encoder) {
  require_nonempty(results, "violations");
  double s = 0.0;
  for (const auto& r : results) s += static_cast<double>(count_violations(r, mask, encoder));
  return s / static_cast<double>(results.size());
}

bool plausible(const std::vector<double>& raw, const data::Encoder& encoder) {
  const auto& schema = encoder.schema();
  if (raw.size() != schema.size()) return false;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].categorical()) {
      const double v = raw[f];
      if (v < 0 || v != std::floor(v) || !encoder.level_seen(f, static_cast<std::size_t>(v))) return false;
    } else {
      const auto& r = encoder.range(f);
      if (!(raw[f] >= r.min && raw[f] <= r.max)) return false;
    }
  }
  return true;
}

double plausibility(const std::vector<InterventionResult>& results, const data::Encoder& encoder) {
  require_nonempty(results, "plausibility");
  std::size_t ok = 0;
  for (const auto& r : results) ok += plausible(r.cf_raw, encoder) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

Diversity diversity(const std::vector<InterventionResult>& results, const data::Encoder& encoder) {
  if (results.size() < 2) throw ValidationError("diversity needs at least two counterfactuals");
  const std::size_t n = results.size();
  Diversity d;
  d.literal.assign(encoder.feature_count(), 0.0);
  d.averaged.assign(encoder.feature_count(), 0.0);
  for (std::size_t f = 0; f < encoder.feature_count(); ++f) {
    const auto& blk = encoder.block(f);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto& a = results[i].cf_encoded;
        const auto& b = results[j].cf_encoded;
        if (blk.kind == data::FeatureKind::Categorical)
          sum += encoder.level_of(a, f) != encoder.level_of(b, f) ? 1.0 : 0.0;
        else
          sum += std::abs(a(static_cast<Eigen::Index>(blk.offset)) - b(static_cast<Eigen::Index>(blk.offset)));
      }
    d.literal[f] = sum / static_cast<double>(n);
    d.averaged[f] = sum / static_cast<double>(n * (n - 1));
  }
  return d;
}

MetricsReport assemble_report(const std::vector<InterventionResult>& results,
                              const std::string& mode, const RunMetadata& meta,
                              const simulator::SimulatorModel& sim,
                              const intervention::ConstraintMask& mask,
                              const data::Encoder& encoder,
                              const simulator::SimulatorModel* secondary) {
  if (results.empty())
    throw ValidationError("cannot assemble a report for mode '" + mode + "': no counterfactuals");
  MetricsReport r;
  r.meta = meta;
  r.mode = mode;
  r.cases = results.size();
  for (const auto& x : results) {
    r.classifier_flips += x.flipped ? 1 : 0;
    r.fallbacks += x.fallback_used ? 1 : 0;
    r.simulator_flips += sim.simulate_class(x.cf_encoded) == classifier::kNormal ? 1 : 0;
  }
  r.validity = validity(results, sim);
  r.classifier_validity = classifier_validity(results);
  if (secondary) {
    r.secondary_validity = validity(results, *secondary);
    r.secondary_simulator = simulator::kind_name(secondary->spec().kind);
  }
  r.proximity = mean_proximity(results, encoder, ProximityVariant::Combined);
  r.proximity_encoded = mean_proximity(results, encoder, ProximityVariant::EncodedPerFeature);
  r.sparsity = sparsity(results, encoder);
  r.violations = violations(results, mask, encoder);
  r.plausibility = plausibility(results, encoder);
  for (const auto& f : encoder.schema().features) r.features.push_back(f.name);
  if (results.size() >= 2) r.diversity = diversity(results, encoder);
  return r;
}

std::string reports_to_json(const std::vector<MetricsReport>& reports) {
  json blocks = json::array();
  for (const auto& r : reports) {
    json b;
    b["dataset"] = r.meta.dataset;
    b["mode"] = r.mode;
    b["seed"] = r.meta.seed;
    b["beta"] = r.meta.beta;
    b["alpha"] = r.meta.alpha;
    b["norm"] = r.meta.norm;
    b["simulator"] = r.meta.simulator;
    b["critical_set_size"] = r.meta.critical_set_size;
    b["skipped_cases"] = r.meta.skipped_cases;
    b["cases"] = r.cases;
    b["classifier_flips"] = r.classifier_flips;
    b["simulator_flips"] = r.simulator_flips;
    b["fallbacks"] = r.fallbacks;
    b["val."] = r.validity;
    b["prox."] = r.proximity;
    b["spar."] = r.sparsity;
    b["viol."] = r.violations;
    b["plau."] = r.plausibility;
    b["validity_classifier"] = r.classifier_validity;
    b["proximity_encoded_per_feature"] = r.proximity_encoded;
    if (r.secondary_validity) {
      b["validity_secondary"] = *r.secondary_validity;
      b["secondary_simulator"] = r.secondary_simulator;
    }
    if (r.diversity) {
      json lit = json::object();
      json avg = json::object();
      for (std::size_t f = 0; f < r.features.size(); ++f) {
        lit[r.features[f]] = r.diversity->literal[f];
        avg[r.features[f]] = r.diversity->averaged[f];
      }
      b["diversity"] = std::move(lit);
      b["diversity_pair_averaged"] = std::move(avg);
    }
    b["features"] = r.features;
    blocks.push_back(std::move(b));
  }
  json doc;
  doc["format"] = "boundcf-report";
  doc["blocks"] = std::move(blocks);
  return detail::dump(doc);
}

std::vector<MetricsReport> reports_from_json(const std::string& text) {
  std::vector<MetricsReport> out;
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "boundcf-report")
      throw ValidationError("not a report document");
    for (const auto& b : doc.at("blocks")) {
      MetricsReport r;
      r.meta.dataset = b.at("dataset").get<std::string>();
      r.mode = b.at("mode").get<std::string>();
      r.meta.seed = b.at("seed").get<std::uint64_t>();
      r.meta.beta = b.at("beta").get<double>();
      r.meta.alpha = b.at("alpha").get<double>();
      r.meta.norm = b.at("norm").get<std::string>();
      r.meta.simulator = b.at("simulator").get<std::string>();
      r.meta.critical_set_size = b.at("critical_set_size").get<std::size_t>();
      r.meta.skipped_cases = b.at("skipped_cases").get<std::size_t>();
      r.cases = b.at("cases").get<std::size_t>();
      r.classifier_flips = b.at("classifier_flips").get<std::size_t>();
      r.simulator_flips = b.at("simulator_flips").get<std::size_t>();
      r.fallbacks = b.at("fallbacks").get<std::size_t>();
      r.validity = b.at("val.").get<double>();
      r.proximity = b.at("prox.").get<double>();
      r.sparsity = b.at("spar.").get<double>();
      r.violations = b.at("viol.").get<double>();
      r.plausibility = b.at("plau.").get<double>();
      r.classifier_validity = b.at("validity_classifier").get<double>();
      r.proximity_encoded = b.at("proximity_encoded_per_feature").get<double>();
      if (b.contains("validity_secondary")) {
        r.secondary_validity = b["validity_secondary"].get<double>();
        r.secondary_simulator = b.at("secondary_simulator").get<std::string>();
      }
      r.features = b.at("features").get<std::vector<std::string>>();
      if (b.contains("diversity")) {
        Diversity d;
        for (const auto& f : r.features) {
          d.literal.push_back(b["diversity"].at(f).get<double>());
          d.averaged.push_back(b.at("diversity_pair_averaged").at(f).get<double>());
        }
        r.diversity = std::move(d);
      }
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report document: ") + e.what());
  }
  return out;
}

std::string cases_csv(const std::vector<InterventionResult>& results, const std::string& mode,
                      const simulator::SimulatorModel& sim,
                      const intervention::ConstraintMask& mask, const data::Encoder& encoder) {
  std::string out =
      "case,mode,classifier_flipped,simulator_class,proximity,proximity_encoded_per_feature,"
      "changes,violations,plausible,fallback_used,p_normal\n";
  for (const auto& r : results) {
    out += std::to_string(r.case_index) + "," + mode + "," + (r.flipped ? "1" : "0") + "," +
           std::to_string(sim.simulate_class(r.cf_encoded)) + "," +
           text::exact(proximity(r, encoder, ProximityVariant::Combined)) + "," +
           text::exact(proximity(r, encoder, ProximityVariant::EncodedPerFeature)) + "," +
           std::to_string(count_changes(r, encoder)) + "," +
           std::to_string(count_violations(r, mask, encoder)) + "," +
           (plausible(r.cf_raw, encoder) ? "1" : "0") + "," + (r.fallback_used ? "1" : "0") + "," +
           text::exact(r.p_n) + "\n";
  }
  return out;
}

}  // namespace boundcf::evaluation
