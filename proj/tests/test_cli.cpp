#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "phenopred/cli.hpp"

using namespace phenopred;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "phenopred");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = oracle::slurp(e.path());
  return files;
}

std::string symptom_block(const std::string& sid, int sev, int freq) {
  std::string s;
  for (const auto& id : scoring::tot_score().symptom_subset)
    s += sid + "\tCDC\t" + id + "\t" + std::to_string(sev) + "\t" + std::to_string(freq) + "\n";
  for (const auto& id : scoring::sf36_score().symptom_subset) s += sid + "\tSF36\t" + id + "\t50\t\n";
  for (const auto& id : scoring::mfi_score().symptom_subset) s += sid + "\tMFI\t" + id + "\t4\t\n";
  return s;
}

const char* kSymptomHeader = "subject_id\tinstrument\tsymptom_id\tseverity_code\tfrequency_code\n";

// Small synthetic bundle plus a run over a reduced grid.
fs::path small_run(const std::string& name) {
  const auto dir = oracle::temp_dir(name);
  auto r = invoke({"synth", "-o", dir.string(), "--set", "n_subjects=40", "--set", "n_features=80", "--set",
                "n_terms=14", "--set", "n_planted_terms=2", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  r = invoke({"run", (dir / "run.conf").string(), "--set", "thresholds=0.1,0.25", "--set", "components=1,2,3",
           "--set", "logistic_thresholds=1.5,2.5", "--set", "logistic_components=1,2"});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

}  // namespace

TEST(Config, ParseAndOverride) {
  auto kv = config::KeyValues::parse({"# comment", "", "seed = 4  # trailing", "q=0.3"}, "c.conf");
  EXPECT_EQ(kv.integer("seed", 0), 4);
  EXPECT_EQ(kv.real("q", 0.0), 0.3);
  kv.set_assignment("seed=9");
  EXPECT_EQ(kv.integer("seed", 0), 9);
  EXPECT_THROW(kv.set_assignment("seed"), InputError);
  try {
    config::KeyValues::parse({"a = 1", "a = 2"}, "c.conf");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("c.conf:2:"), std::string::npos);
  }
  EXPECT_THROW(config::KeyValues::parse({"novalue"}, "c.conf"), InputError);
}

TEST(Config, RunConfigResolvesPathsAndAxes) {
  auto kv = config::KeyValues::parse(
      {"expression = e.tsv", "mapping = /abs/m.tsv", "phenotypes = p.tsv", "thresholds = 0.1, 0.2",
       "components = 1,3", "stages = GoStart,GoEnd"},
      "x");
  auto c = config::RunConfig::from(kv, "/base/dir");
  EXPECT_EQ(c.expression, "/base/dir/e.tsv");
  EXPECT_EQ(c.mapping, "/abs/m.tsv");
  EXPECT_EQ(c.axes.thresholds, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.axes.components, (std::vector<int>{1, 3}));
  EXPECT_EQ(c.stages, (std::vector<pipeline::Stage>{pipeline::Stage::GoStart, pipeline::Stage::GoEnd}));
  EXPECT_EQ(c.axes.thresholds.size(), 2u);
  kv.set("bogus", "1");
  EXPECT_THROW(config::RunConfig::from(kv), InputError);
  auto kv2 = config::KeyValues::parse({"expression = e", "mapping = m"}, "x");
  EXPECT_THROW(config::RunConfig::from(kv2), InputError);
  auto kv3 = config::KeyValues::parse({"expression = e", "mapping = m", "phenotypes = p", "q = 0"}, "x");
  EXPECT_THROW(config::RunConfig::from(kv3), InputError);
}

TEST(Config, SynthNoiseDefaultMatchesSignalVariance) {
  auto kv = config::KeyValues::parse({"n_planted_terms = 4", "effect_weights = 1,2,2,4"}, "x");
  EXPECT_DOUBLE_EQ(config::SynthRunConfig::from(kv).synth.noise_sd, 5.0);
  kv.set("noise_sd", "0.5");
  EXPECT_EQ(config::SynthRunConfig::from(kv).synth.noise_sd, 0.5);
}

TEST(Report, GridTableRoundTrip) {
  std::mt19937_64 rng(1);
  std::vector<consensus::ModelRecord> models;
  for (std::size_t i = 0; i < 4; ++i) {
    consensus::ModelRecord m;
    m.spec = {pipeline::Stage::GoMid, numerics::ScreenStat::pearson, 0.05 + 0.025 * static_cast<double>(i),
              static_cast<int>(i) + 1, numerics::Family::linear, "P1"};
    m.grid_index = i;
    m.predictive_correlation = oracle::random_vector(1, rng)(0) / 3.0;
    m.degenerate_folds = static_cast<int>(i % 2);
    m.term_ids = {"T1", "T2", "T3"};
    m.term_coefs = oracle::random_vector(3, rng) * 1e-7;
    models.push_back(m);
  }
  const auto dir = oracle::temp_dir("grid_rt");
  const auto path = (dir / "g.tsv").string();
  report::write_grid_table(models, path);
  auto back = report::read_grid_table(path);
  ASSERT_EQ(back.size(), models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    EXPECT_EQ(back[i].spec.describe(), models[i].spec.describe());
    EXPECT_EQ(back[i].spec.threshold, models[i].spec.threshold);
    EXPECT_EQ(back[i].predictive_correlation, models[i].predictive_correlation);
    EXPECT_EQ(back[i].degenerate_folds, models[i].degenerate_folds);
    EXPECT_EQ(back[i].term_ids, models[i].term_ids);
    EXPECT_TRUE((back[i].term_coefs.array() == models[i].term_coefs.array()).all());
  }
  oracle::write_file(dir / "bad.tsv", "grid_index\tstage\n0\tGoStart\n");
  EXPECT_THROW(report::read_grid_table((dir / "bad.tsv").string()), InputError);
}

TEST(Report, QuantilesAndFormatting) {
  auto f = report::five_number({4, 1, 3, 2});
  EXPECT_EQ(f.min, 1.0);
  EXPECT_EQ(f.q1, 1.75);
  EXPECT_EQ(f.median, 2.5);
  EXPECT_EQ(f.q3, 3.25);
  EXPECT_EQ(f.max, 4.0);
  EXPECT_EQ(report::fixed(-1e-9), "0.000000");
  EXPECT_EQ(report::fixed(-0.5, 2), "-0.50");
  EXPECT_EQ(report::hex64(report::fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(report::hex64(report::fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(Cli, ScoreHandOracle) {
  const auto dir = oracle::temp_dir("cli_score");
  oracle::write_file(dir / "s.tsv", std::string(kSymptomHeader) + symptom_block("A", 0, 0) + symptom_block("B", 2, 3));
  auto r = invoke({"score", (dir / "s.tsv").string(), "-o", (dir / "p.tsv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto p = load_phenotypes_tsv((dir / "p.tsv").string(), {"A", "B"});
  EXPECT_EQ(p.at("TotScore")(0), 0.0);
  EXPECT_EQ(p.at("CFSScore")(0), 0.0);
  EXPECT_EQ(p.at("TotScore")(1), 19 * 2.5 * 3);
  EXPECT_EQ(p.at("CFSScore")(1), 9 * 2.5 * 3);
  EXPECT_EQ(p.at("SF36")(1), 400.0);
  EXPECT_EQ(p.at("MFI")(1), 20.0);
}

TEST(Cli, ScoreMissingInstrument) {
  const auto dir = oracle::temp_dir("cli_score_missing");
  std::string text = std::string(kSymptomHeader) + symptom_block("A", 1, 1);
  for (const auto& id : scoring::tot_score().symptom_subset) text += "Q9\tCDC\t" + id + "\t1\t1\n";
  oracle::write_file(dir / "s.tsv", text);
  auto r = invoke({"score", (dir / "s.tsv").string(), "-o", (dir / "p.tsv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Q9"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"run", "/nonexistent/run.conf"}).code, 2);
}

TEST(Cli, SynthOutputsLoadAndSeedMatters) {
  const auto a = oracle::temp_dir("cli_synth_a"), b = oracle::temp_dir("cli_synth_b");
  const std::vector<std::string> common = {"--set", "n_subjects=20", "--set", "n_features=30", "--set", "n_terms=6",
                                           "--set", "n_planted_terms=2"};
  auto args = std::vector<std::string>{"synth", "-o", a.string(), "--seed", "1"};
  args.insert(args.end(), common.begin(), common.end());
  ASSERT_EQ(invoke(args).code, 0);
  args = {"synth", "-o", b.string(), "--seed", "2"};
  args.insert(args.end(), common.begin(), common.end());
  ASSERT_EQ(invoke(args).code, 0);
  auto ds = load_expression_tsv((a / "expression.tsv").string());
  EXPECT_EQ(ds.n_subjects(), 20);
  EXPECT_EQ(ds.n_features(), 30);
  EXPECT_EQ(load_term_mapping_tsv((a / "mapping.tsv").string()).size(), 6u);
  EXPECT_NE(oracle::slurp(a / "expression.tsv"), oracle::slurp(b / "expression.tsv"));
  auto r = invoke({"synth", "-o", a.string(), "--set", "n_features=10", "--set", "n_terms=6",
                 "--set", "n_planted_terms=2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos);
}

TEST(Cli, RunWritesReportsAndIsReproducible) {
  const auto dir = small_run("cli_run");
  const auto res = dir / "results";
  for (const char* f : {"manifest.json", "models_summary.tsv", "terms.tsv", "coef_correlation.tsv",
                        "top_overlap.tsv", "common_terms.tsv", "recovery.tsv",
                        "goend_marginal_terms.tsv", "phenotype_summary.tsv", "binary_prediction.tsv",
                        "grids/P1__GoStart.tsv", "grids/status__GoMid__t_test.tsv"})
    EXPECT_TRUE(fs::exists(res / f)) << f;
  const auto manifest = nlohmann::json::parse(oracle::slurp(res / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_EQ(manifest["folds"], 5);
  EXPECT_EQ(manifest["grids"].size(), 6u + 6u);

  const auto first = snapshot(res);
  auto r = invoke({"run", (dir / "run.conf").string(), "--set", "thresholds=0.1,0.25", "--set", "components=1,2,3",
                "--set", "logistic_thresholds=1.5,2.5", "--set", "logistic_components=1,2", "--jobs", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(snapshot(res), first);

  const auto other = oracle::temp_dir("cli_consensus");
  r = invoke({"consensus", res.string(), "-o", other.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"coef_correlation.tsv", "top_overlap.tsv", "common_terms.tsv",
                        "recovery.tsv"})
    EXPECT_EQ(oracle::slurp(other / f), first.at(f)) << f;
  r = invoke({"consensus", res.string(), "-o", other.string(), "--set", "q=0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(oracle::slurp(other / "top_overlap.tsv"), first.at("top_overlap.tsv"));
}

TEST(Cli, IdentityMappingStagesAgree) {
  const auto dir = oracle::temp_dir("cli_identity");
  auto r = invoke({"synth", "-o", dir.string(), "--set", "n_subjects=30", "--set", "n_features=25", "--set",
                "n_terms=5", "--set", "n_planted_terms=1"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto ds = load_expression_tsv((dir / "expression.tsv").string());
  TermMapping id;
  for (const auto& f : ds.feature_ids) id.add("T_" + f, f);
  save_term_mapping_tsv(id, (dir / "identity.tsv").string());
  oracle::write_file(dir / "id.conf",
                     "expression = expression.tsv\nmapping = identity.tsv\nphenotypes = phenotypes.tsv\n"
                     "stages = GoStart, GoEnd\nthresholds = 0.1, 0.3\ncomponents = 1, 2, 4\noutput = out\n");
  r = invoke({"run", (dir / "id.conf").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = tsv::read_lines((dir / "out" / "models_summary.tsv").string());
  // (phenotype, grid_index) -> stage -> remaining columns
  std::map<std::string, std::map<std::string, std::string>> by;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto f = tsv::split(rows[i]);
    std::string rest;
    for (std::size_t k = 3; k < f.size(); ++k) rest += f[k] + "|";
    by[f[0] + "#" + f[2]][f[1]] = rest;
  }
  ASSERT_EQ(by.size(), 2u * 6u);
  for (const auto& [p, stages] : by) EXPECT_EQ(stages.at("GoStart"), stages.at("GoEnd")) << p;
}
