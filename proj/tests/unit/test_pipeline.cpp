#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "boundcf/errors.hpp"
#include "boundcf/pipeline.hpp"
#include "boundcf/text_io.hpp"

namespace fs = std::filesystem;
namespace pl = boundcf::pipeline;
namespace bd = boundcf::boundary;
using boundcf::ValidationError;

namespace {

const fs::path kData = BOUNDCF_DATA_DIR;
const fs::path kConfigs = BOUNDCF_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("boundcf_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string small_config(const fs::path& out, const std::string& extra_boundary = "") {
  return R"({
    "name": "pima_small",
    "dataset": ")" + (kData / "pima_diabetes.csv").string() + R"(",
    "schema": ")" + (kData / "pima.schema.json").string() + R"(",
    "output_dir": ")" + out.string() + R"(",
    "seed": 11,
    "split": {"train_fraction": 0.7, "balance_train": true},
    "classifier": {"hidden": [{"units": 8, "activation": "elu"}], "optimizer": {"kind": "adam", "lr": 0.01},
                   "epochs": 20, "batch_size": 32},
    "boundary": {"alpha": 5, "hidden": [{"units": 8, "activation": "relu"}], "epochs": 10,
                 "batch_size": 32)" + extra_boundary + R"(},
    "bisection": {"beta": 0.02, "max_iters": 20},
    "intervention": {"mode": "both", "norm": "minmax"},
    "simulator": {"kind": "knn", "k": 7}
  })";
}

std::string read(const fs::path& p) { return boundcf::text::read_file(p); }

}  // namespace

TEST(Config, ShippedConfigsParse) {
  for (const auto& [name, alpha] : {std::pair{"pima.json", 20.0}, std::pair{"heart_cleveland.json", 80.0}}) {
    const auto c = pl::load_config(kConfigs / name);
    EXPECT_EQ(c.bisection.beta, 0.02);
    EXPECT_EQ(c.bisection.max_iters, 20u);
    EXPECT_EQ(c.boundary.alpha, alpha);
    EXPECT_FALSE(c.classifier_arch.hidden.empty());
  }
}

TEST(Config, ProblemsAreListedTogether) {
  const std::string text = R"({
    "dataset": "nowhere.csv",
    "schema": "missing.schema.json",
    "split": {"train_fraction": 1.5},
    "classifier": {"hidden": []},
    "boundary": {"hidden": [{"units": 4}], "alpha": -1},
    "bisection": {"beta": 0.7},
    "intervention": {"mode": "sideways"},
    "simulator": {"kind": "xgboost"},
    "colour": "blue"
  })";
  try {
    pl::parse_config(text, "/tmp");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const char* needle : {"nowhere.csv", "missing.schema.json", "train_fraction", "classifier.hidden",
                               "alpha", "beta", "sideways", "xgboost", "colour"})
      EXPECT_NE(msg.find(needle), std::string::npos) << needle << "\n" << msg;
  }
}

TEST(Config, MissingSchemaNamesThePath) {
  const auto out = scratch("schema");
  std::string text = small_config(out);
  const auto pos = text.find("pima.schema.json");
  text.replace(pos, 16, "absent.schema.json");
  try {
    pl::parse_config(text, out);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find((kData / "absent.schema.json").string()), std::string::npos);
  }
  EXPECT_THROW(pl::parse_config("[1, 2]", out), ValidationError);
  EXPECT_THROW(pl::parse_config("{", out), ValidationError);
  EXPECT_THROW(pl::load_config(out / "no_such.json"), ValidationError);
}

TEST(Config, OverridesTakePrecedence) {
  const auto out = scratch("overrides");
  pl::Overrides o;
  o.seed = 99;
  o.beta = 0.01;
  o.alpha = 3.0;
  o.mode = "constrained";
  o.norm = "literal";
  o.output_dir = out / "elsewhere";
  const auto c = pl::parse_config(small_config(out), out, o);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.seeds.classifier, 100u);
  EXPECT_EQ(c.bisection.beta, 0.01);
  EXPECT_EQ(c.boundary.alpha, 3.0);
  EXPECT_EQ(c.mode, pl::ModeSelection::Constrained);
  EXPECT_EQ(c.intervention.norm, boundcf::intervention::NormMode::Literal);
  EXPECT_EQ(c.run_dir(), out / "elsewhere" / "pima_small");
  // Defaults are echoed.
  const std::string echo = c.to_json_text();
  for (const char* key : {"lambdas", "max_iters", "replica_dropout", "train_fraction"})
    EXPECT_NE(echo.find(key), std::string::npos) << key;
}

TEST(Pipeline, EndToEndIsDeterministic) {
  const auto out = scratch("determinism");
  std::ostringstream log;
  auto run_once = [&](const fs::path& dir) {
    pl::Overrides o;
    o.output_dir = dir;
    const auto c = pl::parse_config(small_config(out), out, o);
    pl::cmd_run(c, log);
    return c.run_dir();
  };
  const auto a = run_once(out / "a");
  const auto b = run_once(out / "b");
  for (const char* name : {pl::artifact::kManifest, pl::artifact::kClassifier, pl::artifact::kSimulator,
                           pl::artifact::kCriticalSet, pl::artifact::kExplanations, pl::artifact::kReport,
                           pl::artifact::kReportCases}) {
    ASSERT_TRUE(fs::is_regular_file(a / name)) << name;
    if (std::string(name) != pl::artifact::kManifest) EXPECT_EQ(read(a / name), read(b / name)) << name;
  }
  const auto reports = boundcf::evaluation::reports_from_json(read(a / pl::artifact::kReport));
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].mode, "minimal");
  EXPECT_EQ(reports[1].mode, "constrained");
  EXPECT_EQ(reports[1].violations, 0.0);
  EXPECT_EQ(reports[0].meta.seed, 11u);
}

TEST(Pipeline, ArtifactsRoundTrip) {
  const auto out = scratch("roundtrip");
  std::ostringstream log;
  const auto c = pl::parse_config(small_config(out), out);
  pl::cmd_train(c, log);
  const auto clf = pl::classifier_artifact_from_json(read(c.run_dir() / pl::artifact::kClassifier));
  EXPECT_EQ(pl::classifier_artifact_to_json(clf), read(c.run_dir() / pl::artifact::kClassifier));

  const auto bo = pl::cmd_boundary(c, log);
  const auto loaded = bd::load_critical_set(c.run_dir() / pl::artifact::kCriticalSet, clf.encoder);
  ASSERT_EQ(loaded.size(), bo.set.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].x, bo.set[i].x);
    EXPECT_LE(loaded[i].gap(), c.bisection.beta + 1e-12);
  }

  const auto ex = pl::cmd_explain(c, log);
  const auto back = pl::explanations_from_csv(read(c.run_dir() / pl::artifact::kExplanations), clf.encoder);
  ASSERT_EQ(back.size(), ex.results.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].cf_encoded, ex.results[i].cf_encoded);
    EXPECT_EQ(back[i].mode, ex.results[i].mode);
    EXPECT_EQ(back[i].flipped, ex.results[i].flipped);
  }
  EXPECT_EQ(pl::explanations_to_csv(back, clf.encoder), read(c.run_dir() / pl::artifact::kExplanations));
  EXPECT_FALSE(pl::cmd_evaluate(c, log).empty());
}

TEST(Pipeline, ReplicasDensifyTheCriticalSet) {
  const auto out = scratch("replicas");
  std::ostringstream log;
  auto size_with = [&](const std::string& replicas) {
    pl::Overrides o;
    o.output_dir = out / replicas;
    const auto c = pl::parse_config(small_config(out, ", \"replicas\": " + replicas), out, o);
    pl::cmd_train(c, log);
    return pl::cmd_boundary(c, log).set.size();
  };
  EXPECT_GT(size_with("3"), size_with("1"));
}

TEST(Pipeline, SelectorsAndSkips) {
  const auto out = scratch("selectors");
  std::ostringstream log;
  auto c = pl::parse_config(small_config(out), out);
  pl::cmd_train(c, log);
  pl::cmd_boundary(c, log);
  c.cases.kind = pl::CaseSelector::Kind::Indices;
  c.cases.indices = {100000};
  EXPECT_THROW(pl::cmd_explain(c, log), ValidationError);

  const auto clf = pl::classifier_artifact_from_json(read(c.run_dir() / pl::artifact::kClassifier));
  const auto data = pl::prepare_data(c);
  std::size_t normal_row = data.test.size();
  std::size_t abnormal_row = data.test.size();
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const int label = clf.model.predict_label(data.test_encoded.rows[i]);
    const bool in_range = boundcf::intervention::within_training_range(data.test_encoded.rows[i], clf.encoder);
    if (label == 0 && normal_row == data.test.size()) normal_row = i;
    if (label == 1 && in_range && abnormal_row == data.test.size()) abnormal_row = i;
  }
  ASSERT_LT(normal_row, data.test.size());
  ASSERT_LT(abnormal_row, data.test.size());
  c.cases.indices = {normal_row, abnormal_row};
  c.mode = pl::ModeSelection::Constrained;
  const auto ex = pl::cmd_explain(c, log);
  EXPECT_EQ(ex.skipped, 1u);
  ASSERT_EQ(ex.results.size(), 1u);
  EXPECT_EQ(ex.results[0].case_index, abnormal_row);
  EXPECT_NE(ex.notices[0].find("already predicted normal"), std::string::npos);
}
