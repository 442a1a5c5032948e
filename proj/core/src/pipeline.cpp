#include "boundcf/pipeline.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

#include "boundcf/errors.hpp"
#include "boundcf/text_io.hpp"
#include "json_codec.hpp"

namespace boundcf::pipeline {

using detail::json;

std::string selection_name(ModeSelection m) {
  switch (m) {
    case ModeSelection::Minimal: return "minimal";
    case ModeSelection::Constrained: return "constrained";
    case ModeSelection::Both: return "both";
  }
  return "both";
}

ModeSelection parse_selection(const std::string& name) {
  if (name == "minimal") return ModeSelection::Minimal;
  if (name == "constrained") return ModeSelection::Constrained;
  if (name == "both") return ModeSelection::Both;
  throw ValidationError("unknown mode '" + name + "' (expected minimal, constrained or both)");
}

// ---- config parsing -----------------------------------------------------------

namespace {

// Collects every problem instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> errors;

  template <typename T>
  T get(const json& obj, const std::string& key, T fallback, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key) || obj[key].is_null()) return fallback;
    try {
      return obj[key].get<T>();
    } catch (const json::exception&) {
      errors.push_back(where + key + ": wrong type");
      return fallback;
    }
  }

  const json& section(const json& obj, const std::string& key) {
    static const json empty = json::object();
    if (!obj.contains(key)) return empty;
    if (!obj[key].is_object()) {
      errors.push_back(key + ": expected an object");
      return empty;
    }
    return obj[key];
  }

  template <typename F>
  void check(F&& f) {
    try {
      f();
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    } catch (const json::exception& e) {
      errors.push_back(e.what());
    }
  }
};

std::vector<nn::LayerSpec> parse_layers(Reader& rd, const json& arr, const std::string& where) {
  std::vector<nn::LayerSpec> out;
  if (arr.is_null()) return out;
  if (!arr.is_array()) {
    rd.errors.push_back(where + ": expected an array of layers");
    return out;
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& l = arr[i];
    const std::string w = where + "[" + std::to_string(i) + "].";
    nn::LayerSpec spec;
    spec.units = rd.get<std::size_t>(l, "units", 0, w);
    if (spec.units == 0) rd.errors.push_back(w + "units: must be positive");
    const auto act = rd.get<std::string>(l, "activation", "relu", w);
    std::optional<double> param;
    if (l.contains("activation_param")) param = rd.get<double>(l, "activation_param", 0.0, w);
    rd.check([&] {
      spec.activation = nn::parse_activation(act, param);
      if (spec.activation.kind == nn::ActivationKind::Softmax)
        throw ValidationError(w + "activation: softmax is reserved for the output layer");
    });
    spec.l2_factor = rd.get<double>(l, "l2", 0.0, w);
    spec.dropout_rate = rd.get<double>(l, "dropout", 0.0, w);
    if (spec.l2_factor < 0) rd.errors.push_back(w + "l2: must be nonnegative");
    if (!(spec.dropout_rate >= 0 && spec.dropout_rate < 1)) rd.errors.push_back(w + "dropout: must lie in [0, 1)");
    out.push_back(spec);
  }
  return out;
}

nn::TrainConfig parse_training(Reader& rd, const json& sec, const std::string& where,
                               nn::TrainConfig base) {
  const json& opt = sec.contains("optimizer") ? sec["optimizer"] : json::object();
  const std::string w = where + "optimizer.";
  const auto kind = rd.get<std::string>(opt, "kind", "adam", w);
  if (kind == "adam") {
    nn::AdamConfig a;
    a.lr = rd.get<double>(opt, "lr", base.learning_rate(), w);
    a.beta1 = rd.get<double>(opt, "beta1", a.beta1, w);
    a.beta2 = rd.get<double>(opt, "beta2", a.beta2, w);
    a.eps = rd.get<double>(opt, "eps", a.eps, w);
    a.weight_decay = rd.get<double>(opt, "weight_decay", 0.0, w);
    base.optimizer = a;
  } else if (kind == "sgd") {
    nn::SgdConfig s;
    s.lr = rd.get<double>(opt, "lr", base.learning_rate(), w);
    s.weight_decay = rd.get<double>(opt, "weight_decay", 0.0, w);
    base.optimizer = s;
  } else {
    rd.errors.push_back(w + "kind: unknown optimizer '" + kind + "' (expected adam or sgd)");
  }
  base.epochs = rd.get<std::size_t>(sec, "epochs", base.epochs, where);
  base.batch_size = rd.get<std::size_t>(sec, "batch_size", base.batch_size, where);
  rd.check([&] {
    try {
      base.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  });
  return base;
}

json layers_to_json(const std::vector<nn::LayerSpec>& layers) {
  json arr = json::array();
  for (const auto& l : layers) {
    arr.push_back({{"units", l.units},
                   {"activation", nn::activation_name(l.activation.kind)},
                   {"activation_param", l.activation.param},
                   {"l2", l.l2_factor},
                   {"dropout", l.dropout_rate}});
  }
  return arr;
}

json training_to_json(const nn::TrainConfig& t) {
  json opt;
  if (const auto* a = std::get_if<nn::AdamConfig>(&t.optimizer)) {
    opt = {{"kind", "adam"}, {"lr", a->lr}, {"beta1", a->beta1}, {"beta2", a->beta2},
           {"eps", a->eps}, {"weight_decay", a->weight_decay}};
  } else {
    const auto& s = std::get<nn::SgdConfig>(t.optimizer);
    opt = {{"kind", "sgd"}, {"lr", s.lr}, {"weight_decay", s.weight_decay}};
  }
  return {{"optimizer", opt}, {"epochs", t.epochs}, {"batch_size", t.batch_size}, {"seed", t.seed}};
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir,
                       const Overrides& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");

  Reader rd;
  RunConfig c;
  auto resolve = [&](const std::string& p) { return (base_dir / p).lexically_normal(); };

  c.name = rd.get<std::string>(doc, "name", "run", "");
  c.run_id = rd.get<std::string>(doc, "run_id", c.name, "");
  if (c.run_id.empty() || c.run_id.find('/') != std::string::npos)
    rd.errors.push_back("run_id: must be a non-empty name without '/'");

  const auto dataset = rd.get<std::string>(doc, "dataset", "", "");
  const auto schema = rd.get<std::string>(doc, "schema", "", "");
  if (dataset.empty()) rd.errors.push_back("dataset: required");
  else c.dataset = resolve(dataset);
  if (schema.empty()) rd.errors.push_back("schema: required");
  else c.schema = resolve(schema);
  if (!c.dataset.empty() && !fs::is_regular_file(c.dataset))
    rd.errors.push_back("dataset: file not found: " + c.dataset.string());
  if (!c.schema.empty() && !fs::is_regular_file(c.schema))
    rd.errors.push_back("schema: file not found: " + c.schema.string());
  c.output_dir = overrides.output_dir ? *overrides.output_dir
                                      : resolve(rd.get<std::string>(doc, "output_dir", "runs", ""));

  const json& split = rd.section(doc, "split");
  c.train_fraction = rd.get<double>(split, "train_fraction", 0.7, "split.");
  if (!(c.train_fraction > 0 && c.train_fraction < 1))
    rd.errors.push_back("split.train_fraction: must lie strictly between 0 and 1");
  c.balance_train = rd.get<bool>(split, "balance_train", false, "split.");

  c.seed = overrides.seed ? *overrides.seed : rd.get<std::uint64_t>(doc, "seed", 0, "");
  c.seeds = {c.seed, c.seed + 1, c.seed + 2, c.seed + 3};
  if (!overrides.seed) {
    const json& s = rd.section(doc, "seeds");
    c.seeds.data = rd.get<std::uint64_t>(s, "data", c.seeds.data, "seeds.");
    c.seeds.classifier = rd.get<std::uint64_t>(s, "classifier", c.seeds.classifier, "seeds.");
    c.seeds.boundary = rd.get<std::uint64_t>(s, "boundary", c.seeds.boundary, "seeds.");
    c.seeds.simulator = rd.get<std::uint64_t>(s, "simulator", c.seeds.simulator, "seeds.");
  }

  const json& clf = rd.section(doc, "classifier");
  c.classifier_arch.hidden =
      parse_layers(rd, clf.contains("hidden") ? clf["hidden"] : json(), "classifier.hidden");
  if (c.classifier_arch.hidden.empty()) rd.errors.push_back("classifier.hidden: at least one layer required");
  nn::TrainConfig clf_default;
  clf_default.epochs = 100;
  c.classifier_train = parse_training(rd, clf, "classifier.", clf_default);
  c.classifier_train.seed = c.seeds.classifier;

  const json& bd = rd.section(doc, "boundary");
  c.boundary.alpha = overrides.alpha ? *overrides.alpha : rd.get<double>(bd, "alpha", 1.0, "boundary.");
  c.boundary.hidden = parse_layers(rd, bd.contains("hidden") ? bd["hidden"] : json(), "boundary.hidden");
  if (c.boundary.hidden.empty()) rd.errors.push_back("boundary.hidden: at least one layer required");
  rd.check([&] {
    c.boundary.output_activation =
        nn::parse_activation(rd.get<std::string>(bd, "output_activation", "sigmoid", "boundary."));
  });
  nn::TrainConfig bd_default;
  bd_default.epochs = 50;
  c.boundary.train = parse_training(rd, bd, "boundary.", bd_default);
  c.boundary.train.seed = c.seeds.boundary;
  rd.check([&] {
    c.boundary.target =
        boundary::parse_target(rd.get<std::string>(bd, "reconstruction_target", "self", "boundary."));
  });
  c.boundary.replicas = rd.get<std::size_t>(bd, "replicas", 1, "boundary.");
  c.boundary.replica_dropout = rd.get<double>(bd, "replica_dropout", 0.1, "boundary.");
  rd.check([&] { c.boundary.validate(); });

  const json& bis = rd.section(doc, "bisection");
  c.bisection.beta = overrides.beta ? *overrides.beta : rd.get<double>(bis, "beta", 0.02, "bisection.");
  c.bisection.max_iters = rd.get<std::size_t>(bis, "max_iters", 20, "bisection.");
  rd.check([&] { c.bisection.validate(); });

  const json& iv = rd.section(doc, "intervention");
  rd.check([&] {
    c.mode = parse_selection(overrides.mode ? *overrides.mode
                                            : rd.get<std::string>(iv, "mode", "both", "intervention."));
  });
  rd.check([&] {
    c.intervention.norm = intervention::parse_norm(
        overrides.norm ? *overrides.norm : rd.get<std::string>(iv, "norm", "minmax", "intervention."));
  });
  c.intervention.lambdas =
      rd.get<std::vector<double>>(iv, "lambdas", c.intervention.lambdas, "intervention.");
  rd.check([&] { c.intervention.validate(); });
  if (iv.contains("cases")) {
    const auto& cs = iv["cases"];
    if (cs.is_string()) {
      if (cs.get<std::string>() != "all-abnormal")
        rd.errors.push_back("intervention.cases: expected \"all-abnormal\", {\"indices\": [...]} or {\"file\": ...}");
    } else if (cs.is_object() && cs.contains("indices")) {
      c.cases.kind = CaseSelector::Kind::Indices;
      c.cases.indices = rd.get<std::vector<std::size_t>>(cs, "indices", {}, "intervention.cases.");
    } else if (cs.is_object() && cs.contains("file")) {
      c.cases.kind = CaseSelector::Kind::File;
      c.cases.file = resolve(rd.get<std::string>(cs, "file", "", "intervention.cases."));
      if (!fs::is_regular_file(c.cases.file))
        rd.errors.push_back("intervention.cases.file: file not found: " + c.cases.file.string());
    } else {
      rd.errors.push_back("intervention.cases: expected \"all-abnormal\", {\"indices\": [...]} or {\"file\": ...}");
    }
  }

  const json& sim = rd.section(doc, "simulator");
  rd.check([&] { c.simulator.kind = simulator::parse_kind(rd.get<std::string>(sim, "kind", "knn", "simulator.")); });
  c.simulator.k = rd.get<std::size_t>(sim, "k", 7, "simulator.");
  c.simulator.l2 = rd.get<double>(sim, "l2", 1.0, "simulator.");
  c.simulator.max_newton_iters = rd.get<std::size_t>(sim, "max_newton_iters", 100, "simulator.");
  rd.check([&] { c.simulator.validate(); });

  static const std::vector<std::string> known = {"name", "run_id", "dataset", "schema", "output_dir",
                                                 "split", "seed", "seeds", "classifier", "boundary",
                                                 "bisection", "intervention", "simulator", "comment"};
  for (const auto& [key, value] : doc.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      rd.errors.push_back(key + ": unknown config key");

  if (!rd.errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(rd.errors.size()) + " problem" +
                      (rd.errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : rd.errors) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
  return c;
}

RunConfig load_config(const fs::path& path, const Overrides& overrides) {
  if (!fs::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
  auto c = parse_config(text::read_file(path), path.parent_path(), overrides);
  c.source = path;
  return c;
}

std::string RunConfig::to_json_text() const {
  json d;
  d["name"] = name;
  d["run_id"] = run_id;
  d["dataset"] = dataset.string();
  d["schema"] = schema.string();
  d["output_dir"] = output_dir.string();
  d["split"] = {{"train_fraction", train_fraction}, {"balance_train", balance_train}};
  d["seed"] = seed;
  d["seeds"] = {{"data", seeds.data}, {"classifier", seeds.classifier},
                {"boundary", seeds.boundary}, {"simulator", seeds.simulator}};
  json clf = training_to_json(classifier_train);
  clf["hidden"] = layers_to_json(classifier_arch.hidden);
  d["classifier"] = clf;
  json bd = training_to_json(boundary.train);
  bd["alpha"] = boundary.alpha;
  bd["hidden"] = layers_to_json(boundary.hidden);
  bd["output_activation"] = nn::activation_name(boundary.output_activation.kind);
  bd["reconstruction_target"] = boundary::target_name(boundary.target);
  bd["replicas"] = boundary.replicas;
  bd["replica_dropout"] = boundary.replica_dropout;
  d["boundary"] = bd;
  d["bisection"] = {{"beta", bisection.beta}, {"max_iters", bisection.max_iters}};
  json cases;
  switch (this->cases.kind) {
    case CaseSelector::Kind::AllAbnormal: cases = "all-abnormal"; break;
    case CaseSelector::Kind::Indices: cases = {{"indices", this->cases.indices}}; break;
    case CaseSelector::Kind::File: cases = {{"file", this->cases.file.string()}}; break;
  }
  d["intervention"] = {{"mode", selection_name(mode)},
                       {"norm", intervention::norm_name(intervention.norm)},
                       {"lambdas", intervention.lambdas},
                       {"cases", cases}};
  d["simulator"] = {{"kind", simulator::kind_name(simulator.kind)},
                    {"k", simulator.k},
                    {"l2", simulator.l2},
                    {"max_newton_iters", simulator.max_newton_iters}};
  return detail::dump(d);
}

// ---- data -------------------------------------------------------------------------

PreparedData prepare_data(const RunConfig& config) {
  PreparedData p;
  const auto schema = data::FeatureSchema::load(config.schema);
  const std::string raw = text::read_file(config.dataset);
  p.dataset_hash = text::hex64(text::fnv1a(raw));
  p.full = data::parse_csv(raw, schema, config.dataset.string());
  if (p.full.size() < 4) throw ValidationError("dataset has fewer than 4 rows");
  auto [train, test] = data::split(p.full, config.train_fraction, config.seeds.data);
  p.train = config.balance_train ? data::balance_upsample(train, config.seeds.data + 101) : std::move(train);
  p.test = std::move(test);
  p.encoder = data::Encoder::fit(p.train);
  p.train_encoded = p.encoder.encode(p.train);
  // a test row holding a categorical level never seen in training cannot be
  // encoded; it is left out of the encoded test split (and of accuracy)
  for (std::size_t i = 0; i < p.test.size(); ++i) {
    try {
      p.test_encoded.rows.push_back(p.encoder.encode(p.test.rows[i]));
      p.test_encoded.labels.push_back(p.test.labels[i]);
    } catch (const ValidationError&) {
      ++p.unencodable_test_rows;
    }
  }
  return p;
}

// ---- artifacts ---------------------------------------------------------------------

std::string classifier_artifact_to_json(const ClassifierArtifact& a) {
  json d;
  d["format"] = "boundcf-classifier";
  d["network"] = detail::network_to_json(a.model.network());
  d["encoder"] = json::parse(a.encoder.to_json_text());
  d["train_accuracy"] = a.train_accuracy;
  d["test_accuracy"] = a.test_accuracy ? json(*a.test_accuracy) : json(nullptr);
  return detail::dump(d);
}

ClassifierArtifact classifier_artifact_from_json(const std::string& text) {
  try {
    const json d = json::parse(text);
    if (d.at("format").get<std::string>() != "boundcf-classifier")
      throw ValidationError("not a classifier artifact");
    ClassifierArtifact a;
    a.model = classifier::ClassifierModel(detail::network_from_json(d.at("network")));
    a.encoder = data::Encoder::from_json_text(d.at("encoder").dump());
    a.train_accuracy = d.at("train_accuracy").get<double>();
    if (!d.at("test_accuracy").is_null()) a.test_accuracy = d["test_accuracy"].get<double>();
    return a;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed classifier artifact: ") + e.what());
  }
}

namespace {

std::string raw_cell(const data::FeatureSpec& spec, double v) {
  if (spec.categorical()) return spec.levels.at(static_cast<std::size_t>(v));
  return text::exact(v);
}

double parse_raw_cell(const data::FeatureSpec& spec, const std::string& cell) {
  if (spec.categorical()) {
    auto it = std::find(spec.levels.begin(), spec.levels.end(), cell);
    if (it == spec.levels.end()) throw ValidationError("unknown level '" + cell + "' for " + spec.name);
    return static_cast<double>(it - spec.levels.begin());
  }
  return std::stod(cell);
}

std::vector<std::string> encoded_names(const data::Encoder& enc) {
  std::vector<std::string> names;
  for (const auto& blk : enc.blocks()) {
    const auto& spec = enc.schema()[blk.feature];
    if (blk.kind == data::FeatureKind::Continuous) names.push_back(spec.name);
    else
      for (const auto& l : spec.levels) names.push_back(spec.name + "=" + l);
  }
  return names;
}

std::string delta_cell(const data::FeatureSpec& spec, double factual, double cf) {
  if (!spec.categorical()) return text::exact(cf - factual);
  if (factual == cf) return "=";
  return spec.levels.at(static_cast<std::size_t>(factual)) + "->" +
         spec.levels.at(static_cast<std::size_t>(cf));
}

}  // namespace

std::string explanations_to_csv(const std::vector<intervention::InterventionResult>& results,
                                const data::Encoder& encoder) {
  const auto& schema = encoder.schema();
  std::vector<std::string> header = {"case", "mode", "norm", "flipped", "fallback_used", "violated",
                                     "clamped", "lambda", "critical_index", "prefix_length",
                                     "p_normal", "p_abnormal", "changed", "obj_ce",
                                     "obj_proximity", "obj_realism", "obj_preference"};
  for (const auto& f : schema.features) {
    header.push_back(f.name + ":factual");
    header.push_back(f.name + ":cf");
    header.push_back(f.name + ":delta");
  }
  const auto enc = encoded_names(encoder);
  for (const auto& n : enc) header.push_back("enc_factual:" + n);
  for (const auto& n : enc) header.push_back("enc_cf:" + n);

  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\n";
  for (const auto& r : results) {
    std::vector<std::string> row = {std::to_string(r.case_index),
                                    intervention::mode_name(r.mode),
                                    intervention::norm_name(r.norm),
                                    r.flipped ? "1" : "0",
                                    r.fallback_used ? "1" : "0",
                                    r.violated ? "1" : "0",
                                    r.clamped ? "1" : "0",
                                    text::exact(r.lambda),
                                    std::to_string(r.critical_index),
                                    std::to_string(r.prefix_length),
                                    text::exact(r.p_n),
                                    text::exact(r.p_a)};
    std::string changed;
    for (std::size_t f : r.changed) changed += (changed.empty() ? "" : ";") + schema[f].name;
    row.push_back(changed);
    row.push_back(text::exact(r.objective.ce));
    row.push_back(text::exact(r.objective.proximity));
    row.push_back(text::exact(r.objective.realism));
    row.push_back(text::exact(r.objective.preference));
    for (std::size_t f = 0; f < schema.size(); ++f) {
      row.push_back(raw_cell(schema[f], r.factual_raw[f]));
      row.push_back(raw_cell(schema[f], r.cf_raw[f]));
      row.push_back(delta_cell(schema[f], r.factual_raw[f], r.cf_raw[f]));
    }
    for (Eigen::Index k = 0; k < r.factual_encoded.size(); ++k) row.push_back(text::exact(r.factual_encoded(k)));
    for (Eigen::Index k = 0; k < r.cf_encoded.size(); ++k) row.push_back(text::exact(r.cf_encoded(k)));
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

std::vector<intervention::InterventionResult> explanations_from_csv(const std::string& content,
                                                                    const data::Encoder& encoder) {
  const auto all = text::lines(content);
  if (all.empty()) throw ValidationError("explanations file is empty");
  const auto header = text::split_csv_line(all[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto at = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw ValidationError("explanations file lacks column '" + name + "'");
    return it->second;
  };
  const auto& schema = encoder.schema();
  const auto enc = encoded_names(encoder);
  std::vector<intervention::InterventionResult> out;
  for (std::size_t ln = 1; ln < all.size(); ++ln) {
    if (all[ln].empty()) continue;
    const auto cells = text::split_csv_line(all[ln]);
    if (cells.size() != header.size())
      throw ValidationError("explanations line " + std::to_string(ln + 1) + ": wrong cell count");
    try {
      intervention::InterventionResult r;
      r.case_index = std::stoul(cells[at("case")]);
      const auto& mode = cells[at("mode")];
      if (mode == "minimal") r.mode = intervention::Mode::Minimal;
      else if (mode == "constrained") r.mode = intervention::Mode::Constrained;
      else throw ValidationError("unknown mode '" + mode + "'");
      r.norm = intervention::parse_norm(cells[at("norm")]);
      r.flipped = cells[at("flipped")] == "1";
      r.fallback_used = cells[at("fallback_used")] == "1";
      r.violated = cells[at("violated")] == "1";
      r.clamped = cells[at("clamped")] == "1";
      r.lambda = std::stod(cells[at("lambda")]);
      r.critical_index = std::stoul(cells[at("critical_index")]);
      r.prefix_length = std::stoul(cells[at("prefix_length")]);
      r.p_n = std::stod(cells[at("p_normal")]);
      r.p_a = std::stod(cells[at("p_abnormal")]);
      r.objective.ce = std::stod(cells[at("obj_ce")]);
      r.objective.proximity = std::stod(cells[at("obj_proximity")]);
      r.objective.realism = std::stod(cells[at("obj_realism")]);
      r.objective.preference = std::stod(cells[at("obj_preference")]);
      std::stringstream changed(cells[at("changed")]);
      std::string name;
      while (std::getline(changed, name, ';')) {
        auto idx = schema.index_of(name);
        if (!idx) throw ValidationError("unknown feature '" + name + "' in changed list");
        r.changed.push_back(*idx);
      }
      for (std::size_t f = 0; f < schema.size(); ++f) {
        r.factual_raw.push_back(parse_raw_cell(schema[f], cells[at(schema[f].name + ":factual")]));
        r.cf_raw.push_back(parse_raw_cell(schema[f], cells[at(schema[f].name + ":cf")]));
        r.delta.push_back(r.cf_raw.back() - r.factual_raw.back());
      }
      r.factual_encoded.resize(static_cast<Eigen::Index>(enc.size()));
      r.cf_encoded.resize(static_cast<Eigen::Index>(enc.size()));
      for (std::size_t k = 0; k < enc.size(); ++k) {
        r.factual_encoded(static_cast<Eigen::Index>(k)) = std::stod(cells[at("enc_factual:" + enc[k])]);
        r.cf_encoded(static_cast<Eigen::Index>(k)) = std::stod(cells[at("enc_cf:" + enc[k])]);
      }
      out.push_back(std::move(r));
    } catch (const ValidationError& e) {
      throw ValidationError("explanations line " + std::to_string(ln + 1) + ": " + e.what());
    } catch (const std::exception&) {
      throw ValidationError("explanations line " + std::to_string(ln + 1) + ": malformed value");
    }
  }
  return out;
}

std::string explanations_table(const std::vector<intervention::InterventionResult>& results,
                               const data::Encoder& encoder) {
  const auto& schema = encoder.schema();
  auto shown = [&](std::size_t f, double v) {
    return schema[f].categorical() ? schema[f].levels.at(static_cast<std::size_t>(v)) : text::fixed(v, 3);
  };
  std::string out;
  for (const auto& r : results) {
    out += "case " + std::to_string(r.case_index) + " [" + intervention::mode_name(r.mode) +
           "] flipped=" + (r.flipped ? "yes" : "no") + " fallback=" + (r.fallback_used ? "yes" : "no") +
           " p(normal)=" + text::fixed(r.p_n, 4) + "\n";
    std::vector<std::vector<std::string>> rows = {{"  feature", "factual", "counterfactual", "delta", ""}};
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const bool changed = std::find(r.changed.begin(), r.changed.end(), f) != r.changed.end();
      std::string delta = schema[f].categorical() ? delta_cell(schema[f], r.factual_raw[f], r.cf_raw[f])
                                                  : text::fixed(r.cf_raw[f] - r.factual_raw[f], 3);
      rows.push_back({"  " + schema[f].name, shown(f, r.factual_raw[f]), shown(f, r.cf_raw[f]), delta,
                      changed ? "*" : ""});
    }
    out += text::table(rows);
    out += "  objective: ce=" + text::fixed(r.objective.ce, 4) +
           " proximity=" + text::fixed(r.objective.proximity, 4) +
           " realism=" + text::fixed(r.objective.realism, 4) +
           " preference=" + text::fixed(r.objective.preference, 4) + "\n\n";
  }
  return out;
}

// ---- manifest -------------------------------------------------------------------------

namespace {

json read_manifest(const RunConfig& config) {
  const auto path = config.run_dir() / artifact::kManifest;
  if (!fs::is_regular_file(path)) return json::object();
  try {
    return json::parse(text::read_file(path));
  } catch (const json::exception&) {
    return json::object();
  }
}

void write_manifest(const RunConfig& config, json manifest, const std::string& stage,
                    json stage_info, const std::vector<std::string>& artifacts,
                    const std::string& dataset_hash) {
  manifest["format"] = "boundcf-manifest";
  manifest["config"] = json::parse(config.to_json_text());
  manifest["dataset_hash"] = dataset_hash;
  manifest["stages"][stage] = std::move(stage_info);
  for (const auto& name : artifacts) {
    const auto path = config.run_dir() / name;
    manifest["artifacts"][name] = text::hex64(text::fnv1a(text::read_file(path)));
  }
  text::write_file(config.run_dir() / artifact::kManifest, detail::dump(manifest));
}

ClassifierArtifact load_classifier(const RunConfig& config) {
  const auto path = config.run_dir() / artifact::kClassifier;
  if (!fs::is_regular_file(path))
    throw ValidationError("classifier artifact missing (run `train` first): " + path.string());
  return classifier_artifact_from_json(text::read_file(path));
}

simulator::SimulatorModel load_simulator(const RunConfig& config, const char* name) {
  const auto path = config.run_dir() / name;
  if (!fs::is_regular_file(path))
    throw ValidationError("simulator artifact missing (run `train` first): " + path.string());
  return simulator::SimulatorModel::from_json_text(text::read_file(path));
}

boundary::CriticalSet load_set(const RunConfig& config, const data::Encoder& encoder) {
  const auto path = config.run_dir() / artifact::kCriticalSet;
  if (!fs::is_regular_file(path))
    throw ValidationError("critical set missing (run `boundary` first): " + path.string());
  return boundary::load_critical_set(path, encoder);
}

json autoencoder_log_json(const boundary::AutoencoderLog& log) {
  json d;
  d["opposite_rate"] = log.opposite_rate;
  d["opposite_rate_raw"] = log.opposite_rate_raw;
  d["mean_reconstruction"] = log.mean_reconstruction;
  if (!log.epochs.empty()) {
    d["final_loss"] = log.epochs.back().loss;
    d["final_reconstruction"] = log.epochs.back().reconstruction;
    d["final_adversarial"] = log.epochs.back().adversarial;
    d["first_reconstruction"] = log.epochs.front().reconstruction;
  }
  return d;
}

}  // namespace

// ---- stages ---------------------------------------------------------------------------

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
  auto data = prepare_data(config);
  log << "[train] " << config.name << ": " << data.full.size() << " rows, train " << data.train.size()
      << " / test " << data.test.size() << ", encoded width " << data.encoder.width() << "\n";

  TrainOutcome out;
  auto trained = classifier::train_classifier(data.train_encoded, config.classifier_arch,
                                              config.classifier_train, &data.test_encoded);
  out.log = trained.log;
  out.classifier.model = std::move(trained.model);
  out.classifier.encoder = data.encoder;
  out.classifier.train_accuracy = trained.log.train_accuracy;
  out.classifier.test_accuracy = trained.log.test_accuracy;
  log << "[train] classifier accuracy: train " << text::fixed(trained.log.train_accuracy, 4)
      << ", test " << text::fixed(trained.log.test_accuracy.value_or(0.0), 4) << "\n";

  out.simulator = simulator::train_simulator(data.train_encoded, config.simulator,
                                             config.seeds.simulator, &data.test_encoded);
  simulator::SimulatorSpec other;
  other.kind = config.simulator.kind == simulator::Kind::Knn ? simulator::Kind::LogisticQuadratic
                                                             : simulator::Kind::Knn;
  out.secondary_simulator =
      simulator::train_simulator(data.train_encoded, other, config.seeds.simulator, &data.test_encoded);
  log << "[train] simulator " << simulator::kind_name(out.simulator.spec().kind) << " accuracy: test "
      << text::fixed(out.simulator.test_accuracy.value_or(0.0), 4) << "; secondary "
      << simulator::kind_name(other.kind) << " test "
      << text::fixed(out.secondary_simulator.test_accuracy.value_or(0.0), 4) << "\n";

  const auto dir = config.run_dir();
  text::write_file(dir / artifact::kClassifier, classifier_artifact_to_json(out.classifier));
  text::write_file(dir / artifact::kSimulator, out.simulator.to_json_text());
  text::write_file(dir / artifact::kSecondarySimulator, out.secondary_simulator.to_json_text());

  json info;
  info["rows"] = data.full.size();
  info["train_rows"] = data.train.size();
  info["test_rows"] = data.test.size();
  info["unencodable_test_rows"] = data.unencodable_test_rows;
  info["train_class_counts"] = data.train.class_counts();
  info["classifier_train_accuracy"] = out.classifier.train_accuracy;
  info["classifier_test_accuracy"] = out.classifier.test_accuracy.value_or(0.0);
  info["classifier_final_loss"] = out.log.epochs.empty() ? 0.0 : out.log.epochs.back().loss;
  info["simulator_kind"] = simulator::kind_name(out.simulator.spec().kind);
  info["simulator_test_accuracy"] = out.simulator.test_accuracy.value_or(0.0);
  info["secondary_simulator_kind"] = simulator::kind_name(other.kind);
  info["secondary_simulator_test_accuracy"] = out.secondary_simulator.test_accuracy.value_or(0.0);
  write_manifest(config, read_manifest(config), "train", info,
                 {artifact::kClassifier, artifact::kSimulator, artifact::kSecondarySimulator},
                 data.dataset_hash);
  return out;
}

BoundaryOutcome cmd_boundary(const RunConfig& config, std::ostream& log) {
  auto data = prepare_data(config);
  const auto clf = load_classifier(config);
  auto run = boundary::build_critical_set(clf.model, clf.encoder, data.train_encoded, config.boundary,
                                          config.bisection);
  for (const auto& s : run.set.instances)
    if (!intervention::within_training_range(s.x, clf.encoder))
      throw RuntimeFailure("critical instance outside the training range");

  BoundaryOutcome out;
  out.set = std::move(run.set);
  out.stats = run.stats;
  out.from_normal = run.from_normal.log;
  out.from_abnormal = run.from_abnormal.log;
  const auto& st = out.stats;
  log << "[boundary] |S| = " << out.set.size() << " (" << st.bisected << " bisected, " << st.ae_only
      << " ae_only); pairs " << st.pairs << ", rejected " << st.rejected << ", unpaired "
      << st.dropped_no_partner + st.dropped_after_harmonize << ", duplicates " << st.duplicates << "\n";
  log << "[boundary] autoencoder opposite-class rate: from_normal "
      << text::fixed(out.from_normal.opposite_rate, 3) << ", from_abnormal "
      << text::fixed(out.from_abnormal.opposite_rate, 3) << "\n";
  log << "[boundary] gap |p_n - p_a|: mean " << text::fixed(st.gaps.mean, 5) << ", median "
      << text::fixed(st.gaps.median, 5) << ", max " << text::fixed(st.gaps.max, 5) << "; histogram over [0, beta]:";
  for (auto h : st.gaps.histogram) log << " " << h;
  log << "\n";

  const auto dir = config.run_dir();
  boundary::save_critical_set(dir / artifact::kCriticalSet, out.set, clf.encoder);
  json stats;
  stats["size"] = out.set.size();
  stats["bisected"] = st.bisected;
  stats["ae_only"] = st.ae_only;
  stats["pairs"] = st.pairs;
  stats["rejected"] = st.rejected;
  stats["dropped_no_partner"] = st.dropped_no_partner;
  stats["dropped_after_harmonize"] = st.dropped_after_harmonize;
  stats["duplicates"] = st.duplicates;
  stats["quasi_from_normal"] = st.quasi_from_normal;
  stats["quasi_from_abnormal"] = st.quasi_from_abnormal;
  stats["input_gap_mean"] = st.input_gap_mean;
  stats["quasi_gap_mean"] = st.quasi_gap_mean;
  stats["gap_mean"] = st.gaps.mean;
  stats["gap_median"] = st.gaps.median;
  stats["gap_max"] = st.gaps.max;
  stats["gap_histogram"] = st.gaps.histogram;
  stats["autoencoder_from_normal"] = autoencoder_log_json(out.from_normal);
  stats["autoencoder_from_abnormal"] = autoencoder_log_json(out.from_abnormal);
  text::write_file(dir / artifact::kBoundaryStats, detail::dump(stats));
  write_manifest(config, read_manifest(config), "boundary", stats,
                 {artifact::kCriticalSet, artifact::kBoundaryStats}, data.dataset_hash);
  return out;
}

ExplainOutcome cmd_explain(const RunConfig& config, std::ostream& log) {
  auto data = prepare_data(config);
  const auto clf = load_classifier(config);
  const auto& encoder = clf.encoder;
  const auto set = load_set(config, encoder);
  if (set.empty()) throw RuntimeFailure("critical set is empty");
  const auto mask = intervention::ConstraintMask::from_schema(encoder.schema());
  const intervention::NormalizedSet normalized(set, encoder, config.intervention.norm);
  const auto normal_rows = data.train_encoded.rows_with_label(classifier::kNormal);

  ExplainOutcome out;
  std::vector<std::pair<std::size_t, std::vector<double>>> candidates;
  bool explicit_selection = true;
  switch (config.cases.kind) {
    case CaseSelector::Kind::AllAbnormal:
      explicit_selection = false;
      for (std::size_t i = 0; i < data.test.size(); ++i) candidates.emplace_back(i, data.test.rows[i]);
      break;
    case CaseSelector::Kind::Indices:
      for (std::size_t i : config.cases.indices) {
        if (i >= data.test.size()) {
          out.notices.push_back("case " + std::to_string(i) + ": no such test row");
          ++out.skipped;
          continue;
        }
        candidates.emplace_back(i, data.test.rows[i]);
      }
      break;
    case CaseSelector::Kind::File: {
      auto cases = data::parse_csv(text::read_file(config.cases.file), encoder.schema(),
                                   config.cases.file.string());
      for (std::size_t i = 0; i < cases.size(); ++i) candidates.emplace_back(i, cases.rows[i]);
      break;
    }
  }

  const bool want_min = config.mode != ModeSelection::Constrained;
  const bool want_con = config.mode != ModeSelection::Minimal;
  for (const auto& [index, raw] : candidates) {
    intervention::FactualCase fc;
    try {
      fc = intervention::make_case(index, raw, encoder, clf.model);
    } catch (const ValidationError& e) {
      out.notices.push_back("case " + std::to_string(index) + ": skipped, " + e.what());
      ++out.skipped;
      continue;
    }
    if (fc.predicted != classifier::kAbnormal) {
      if (explicit_selection) {
        out.notices.push_back("case " + std::to_string(index) + ": skipped, already predicted normal");
        ++out.skipped;
      }
      continue;
    }
    if (!intervention::within_training_range(fc.encoded, encoder)) {
      out.notices.push_back("case " + std::to_string(index) +
                            ": skipped, a continuous feature lies outside the training range");
      ++out.skipped;
      continue;
    }
    if (want_min) {
      auto r = intervention::minimal_intervention(fc, set, normalized, clf.model, encoder, config.intervention);
      r.objective = intervention::score_objective(fc, r.cf_encoded, clf.model, encoder, normal_rows);
      out.results.push_back(std::move(r));
    }
    if (want_con) {
      auto r = intervention::constrained_intervention(fc, set, mask, clf.model, encoder);
      r.norm = config.intervention.norm;
      r.objective = intervention::score_objective(fc, r.cf_encoded, clf.model, encoder, normal_rows);
      out.results.push_back(std::move(r));
    }
  }
  for (const auto& n : out.notices) log << "[explain] " << n << "\n";
  if (out.results.empty()) throw ValidationError("case selector matches no abnormal case");
  std::stable_sort(out.results.begin(), out.results.end(), [](const auto& a, const auto& b) {
    return std::make_pair(a.case_index, a.mode) < std::make_pair(b.case_index, b.mode);
  });
  log << "[explain] " << out.results.size() << " explanation records, " << out.skipped
      << " cases skipped\n";

  const auto dir = config.run_dir();
  text::write_file(dir / artifact::kExplanations, explanations_to_csv(out.results, encoder));
  text::write_file(dir / artifact::kExplanationsTable, explanations_table(out.results, encoder));
  json info;
  info["records"] = out.results.size();
  info["skipped"] = out.skipped;
  info["notices"] = out.notices;
  info["critical_set_size"] = set.size();
  write_manifest(config, read_manifest(config), "explain", info,
                 {artifact::kExplanations, artifact::kExplanationsTable}, data.dataset_hash);
  return out;
}

std::vector<evaluation::MetricsReport> cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const auto clf = load_classifier(config);
  const auto& encoder = clf.encoder;
  const auto sim = load_simulator(config, artifact::kSimulator);
  const auto sim2 = load_simulator(config, artifact::kSecondarySimulator);
  const auto path = config.run_dir() / artifact::kExplanations;
  if (!fs::is_regular_file(path))
    throw ValidationError("explanations missing (run `explain` first): " + path.string());
  const auto results = explanations_from_csv(text::read_file(path), encoder);
  if (results.empty()) throw ValidationError("explanations file holds no records");
  const auto mask = intervention::ConstraintMask::from_schema(encoder.schema());
  const auto manifest = read_manifest(config);

  evaluation::RunMetadata meta;
  meta.dataset = config.name;
  meta.seed = config.seed;
  meta.beta = config.bisection.beta;
  meta.alpha = config.boundary.alpha;
  meta.norm = intervention::norm_name(config.intervention.norm);
  meta.simulator = simulator::kind_name(sim.spec().kind);
  if (manifest.contains("stages") && manifest["stages"].contains("explain")) {
    meta.critical_set_size = manifest["stages"]["explain"].value("critical_set_size", std::size_t{0});
    meta.skipped_cases = manifest["stages"]["explain"].value("skipped", std::size_t{0});
  }

  std::vector<evaluation::MetricsReport> reports;
  std::string cases;
  for (auto mode : {intervention::Mode::Minimal, intervention::Mode::Constrained}) {
    std::vector<intervention::InterventionResult> batch;
    for (const auto& r : results)
      if (r.mode == mode) batch.push_back(r);
    if (batch.empty()) continue;
    const auto name = intervention::mode_name(mode);
    reports.push_back(evaluation::assemble_report(batch, name, meta, sim, mask, encoder, &sim2));
    auto rows = evaluation::cases_csv(batch, name, sim, mask, encoder);
    if (!cases.empty()) rows.erase(0, rows.find('\n') + 1);
    cases += rows;
    const auto& rep = reports.back();
    log << "[evaluate] " << config.name << " " << name << ": val. " << text::fixed(rep.validity, 3)
        << " prox. " << text::fixed(rep.proximity, 3) << " spar. " << text::fixed(rep.sparsity, 2)
        << " viol. " << text::fixed(rep.violations, 2) << " plau. " << text::fixed(rep.plausibility, 2)
        << " (" << rep.cases << " cases, classifier validity "
        << text::fixed(rep.classifier_validity, 3) << ", " << rep.secondary_simulator << " validity "
        << text::fixed(rep.secondary_validity.value_or(0.0), 3) << ")\n";
  }
  const auto dir = config.run_dir();
  text::write_file(dir / artifact::kReport, evaluation::reports_to_json(reports));
  text::write_file(dir / artifact::kReportCases, cases);
  json info;
  info["blocks"] = reports.size();
  write_manifest(config, manifest, "evaluate", info, {artifact::kReport, artifact::kReportCases},
                 manifest.value("dataset_hash", std::string()));
  return reports;
}

std::vector<evaluation::MetricsReport> cmd_run(const RunConfig& config, std::ostream& log) {
  cmd_train(config, log);
  cmd_boundary(config, log);
  cmd_explain(config, log);
  return cmd_evaluate(config, log);
}

}  // namespace boundcf::pipeline
