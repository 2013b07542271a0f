#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "phenopred/annotate.hpp"
#include "phenopred/config.hpp"
#include "phenopred/consensus.hpp"
#include "phenopred/domain_io.hpp"
#include "phenopred/error.hpp"
#include "phenopred/pipeline.hpp"
#include "phenopred/report.hpp"
#include "phenopred/scoring.hpp"
#include "phenopred/synthgen.hpp"
#include "phenopred/tsv.hpp"

namespace phenopred::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using pipeline::Stage;

inline constexpr const char* kVersion = "0.1.0";

inline std::string eigen_version() {
  return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
}

// File-name-safe form of a phenotype name.
inline std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return report::hex64(report::fnv1a(ss.str()));
}

inline std::vector<std::string> load_id_list(const std::string& path) {
  std::vector<std::string> ids;
  for (const auto& line : tsv::read_lines(path))
    if (!tsv::is_blank(line)) ids.emplace_back(tsv::trim(line));
  return ids;
}

inline void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + dir + "'");
}

// ---------------------------------------------------------------------------
// score

inline void cmd_score(const std::string& symptoms, const std::string& output, std::ostream& log) {
  const auto records = scoring::load_symptom_tsv(symptoms);
  for (const auto& r : records) scoring::check_complete(r);
  const auto table = scoring::derive_phenotypes(records);
  save_phenotypes_tsv(table.subject_ids, table.columns, output);
  log << "scored " << table.subject_ids.size() << " subjects -> " << output << '\n';
}

// ---------------------------------------------------------------------------
// synth

inline void cmd_synth(const config::SynthRunConfig& cfg, std::ostream& log) {
  const auto bundle = synthgen::generate_synthetic(cfg.synth);
  const fs::path dir(cfg.output);
  make_dir(cfg.output);
  const auto& ds = bundle.dataset;
  save_expression_tsv(ds, (dir / "expression.tsv").string());
  save_term_mapping_tsv(bundle.mapping, (dir / "mapping.tsv").string());
  save_term_names_tsv(bundle.mapping, (dir / "term_names.tsv").string());
  std::vector<std::pair<std::string, Eigen::VectorXd>> cols(ds.phenotypes.begin(), ds.phenotypes.end());
  save_phenotypes_tsv(ds.subject_ids, cols, (dir / "phenotypes.tsv").string());
  save_labels_tsv(ds.subject_ids, *ds.binary_labels, (dir / "labels.tsv").string());
  {
    auto out = tsv::open_output((dir / "planted_terms.txt").string());
    for (const auto& t : bundle.planted_terms) out << t << '\n';
  }
  {
    auto out = tsv::open_output((dir / "run.conf").string());
    out << "# synthetic bundle, seed " << cfg.synth.seed << "\n"
        << "expression = expression.tsv\n"
        << "mapping = mapping.tsv\n"
        << "term_names = term_names.tsv\n"
        << "phenotypes = phenotypes.tsv\n"
        << "labels = labels.tsv\n"
        << "planted_terms = planted_terms.txt\n"
        << "output = results\n"
        << "seed = " << cfg.synth.seed << '\n';
  }
  log << "synthetic bundle: " << ds.n_subjects() << " subjects, " << ds.n_features() << " features, "
      << bundle.mapping.size() << " terms, " << bundle.planted_terms.size() << " planted -> " << cfg.output << '\n';
}

// ---------------------------------------------------------------------------
// Consensus outputs, shared by `run` and `consensus`.

struct ConsensusInputs {
  std::vector<consensus::Scenario> scenarios;
  std::vector<std::vector<consensus::ModelRecord>> grids;
  std::map<std::string, std::string> names;
  std::optional<std::vector<std::string>> planted;
  double q = 0.2;
  double delta = 0.05;
};

inline void write_recovery(const consensus::ConsensusReport& rep, const std::vector<std::string>& planted,
                           const std::string& path) {
  const std::set<std::string> truth(planted.begin(), planted.end());
  auto out = tsv::open_output(path);
  out << "set\tsize\tplanted_recovered\tplanted\trecall\n";
  auto row = [&](const std::string& label, const std::vector<std::string>& ids) {
    std::size_t hit = 0;
    for (const auto& id : ids) hit += truth.count(id);
    const double recall = truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
    out << label << '\t' << ids.size() << '\t' << hit << '\t' << truth.size() << '\t' << report::fixed(recall, 4)
        << '\n';
  };
  for (const auto& m : rep.models) row(m.label(), consensus::top_fraction_terms(m.model, rep.q));
  std::vector<std::string> common;
  for (const auto& t : rep.common_terms) common.push_back(t.id);
  row("common_terms", common);
}

inline consensus::ConsensusReport write_consensus(const ConsensusInputs& in, const fs::path& dir) {
  auto rep = consensus::build_report(in.scenarios, in.grids, in.q, in.delta, in.names);
  report::write_coef_correlation(rep, (dir / "coef_correlation.tsv").string());
  report::write_top_overlap(rep, (dir / "top_overlap.tsv").string());
  report::write_common_terms(rep, (dir / "common_terms.tsv").string());
  if (in.planted) write_recovery(rep, *in.planted, (dir / "recovery.tsv").string());
  return rep;
}

// ---------------------------------------------------------------------------
// run

inline Dataset load_run_dataset(const config::RunConfig& cfg) {
  Dataset ds = load_expression_tsv(cfg.expression);
  if (cfg.phenotypes) {
    ds.phenotypes = load_phenotypes_tsv(*cfg.phenotypes, ds.subject_ids);
  } else {
    const auto records = scoring::load_symptom_tsv(*cfg.symptoms);
    for (const auto& r : records) scoring::check_complete(r);
    std::vector<scoring::PhenotypeDefinition> defs;
    for (const auto& d : scoring::standard_definitions())
      if (cfg.phenotype_list.empty() ||
          std::find(cfg.phenotype_list.begin(), cfg.phenotype_list.end(), d.name) != cfg.phenotype_list.end())
        defs.push_back(d);
    auto table = scoring::derive_phenotypes(records, defs, ds.subject_ids);
    for (auto& [name, v] : table.columns) ds.phenotypes.emplace(name, std::move(v));
  }
  if (cfg.labels) ds.binary_labels = load_labels_tsv(*cfg.labels, ds.subject_ids);
  ds.validate();
  return ds;
}

struct GridRun {
  std::string name;  // file stem under grids/
  std::vector<pipeline::ModelSpec> specs;
  std::vector<pipeline::CVResult> results;
  std::vector<consensus::ModelRecord> records;
};

inline std::uint64_t grid_hash(const std::vector<GridRun>& runs) {
  std::uint64_t h = report::fnv1a("");
  for (const auto& g : runs)
    for (const auto& s : g.specs) h = report::fnv1a(s.describe() + "\n", h);
  return h;
}

inline std::size_t best_index(const std::vector<consensus::ModelRecord>& records) {
  return consensus::select_best(records);
}

inline void cmd_run(const config::RunConfig& cfg, const config::KeyValues& kv, std::ostream& log) {
  const Dataset ds = load_run_dataset(cfg);
  TermMapping mapping = load_term_mapping_tsv(cfg.mapping);
  if (cfg.term_names) load_term_names_tsv(*cfg.term_names, mapping);
  auto resolved = annotate::resolve(mapping, ds.feature_ids);
  if (resolved.size() == 0) throw InputError("no mapping term has a member among the expression features");
  if (!resolved.coverage.complete()) {
    std::size_t missing = 0;
    for (const auto& [_, f] : resolved.coverage.missing_features) missing += f.size();
    log << "mapping: " << missing << " member feature(s) absent from the expression data in "
        << resolved.coverage.missing_features.size() << " term(s); " << resolved.unusable_terms.size()
        << " term(s) unusable\n";
  }

  std::vector<std::string> phenos = cfg.phenotype_list;
  if (phenos.empty())
    for (const auto& [name, _] : ds.phenotypes) phenos.push_back(name);
  for (const auto& p : phenos) ds.phenotype(p);
  const bool binary = cfg.binary && ds.binary_labels.has_value();

  const auto folds = make_folds(static_cast<std::size_t>(ds.n_subjects()), cfg.folds, cfg.seed);
  const pipeline::CvEngine engine(ds, resolved, folds);
  const pipeline::GridOptions opts{cfg.jobs, false};

  std::vector<GridRun> runs;
  for (const auto& p : phenos)
    for (Stage st : cfg.stages)
      runs.push_back({slug(p) + "__" + pipeline::to_string(st), pipeline::make_grid(st, p, cfg.axes), {}, {}});
  if (binary) {
    const pipeline::GridAxes pearson_axes{cfg.axes.thresholds, cfg.logistic_components};
    const pipeline::GridAxes t_axes{cfg.logistic_thresholds, cfg.logistic_components};
    for (Stage st : cfg.stages) {
      runs.push_back({"status__" + pipeline::to_string(st) + "__pearson",
                      pipeline::make_grid(st, "status", pearson_axes, numerics::ScreenStat::pearson,
                                          numerics::Family::logistic),
                      {},
                      {}});
      runs.push_back({"status__" + pipeline::to_string(st) + "__t_test",
                      pipeline::make_grid(st, "status", t_axes, numerics::ScreenStat::t_test,
                                          numerics::Family::logistic),
                      {},
                      {}});
    }
  }

  const fs::path dir(cfg.output);
  make_dir(cfg.output);
  make_dir((dir / "grids").string());
  for (auto& g : runs) {
    g.results = engine.grid(g.specs, opts);
    g.records = consensus::to_records(g.results);
    report::write_grid_table(g.records, (dir / "grids" / (g.name + ".tsv")).string());
    std::size_t degenerate = 0;
    for (const auto& r : g.results) degenerate += r.degenerate_folds > 0 ? 1 : 0;
    const auto& best = g.records[best_index(g.records)];
    log << g.name << ": " << g.records.size() << " models, best r = " << report::fixed(best.predictive_correlation, 4)
        << " (" << best.spec.describe() << ")";
    if (degenerate) log << ", " << degenerate << " cell(s) with degenerate folds";
    log << '\n';
  }

  {
    std::vector<std::vector<consensus::ModelRecord>> all;
    for (const auto& g : runs) all.push_back(g.records);
    report::write_model_summary(all, (dir / "models_summary.tsv").string());
  }

  {
    auto out = tsv::open_output((dir / "terms.tsv").string());
    out << "term_id\tterm_name\n";
    for (const auto& id : resolved.term_ids) {
      auto it = resolved.term_names.find(id);
      out << id << '\t' << (it == resolved.term_names.end() ? "" : it->second) << '\n';
    }
  }

  // Consensus over the joint-coefficient scenarios.
  ConsensusInputs ci;
  ci.q = cfg.q;
  ci.delta = cfg.delta;
  ci.names = resolved.term_names;
  if (cfg.planted_terms) ci.planted = load_id_list(*cfg.planted_terms);
  json scen = json::array();
  for (const auto& p : phenos)
    for (Stage st : cfg.stages) {
      if (st == Stage::GoEnd) continue;
      const std::string name = slug(p) + "__" + pipeline::to_string(st);
      auto it = std::find_if(runs.begin(), runs.end(), [&](const GridRun& g) { return g.name == name; });
      ci.scenarios.push_back(consensus::make_scenario(p, st));
      ci.grids.push_back(it->records);
      scen.push_back({{"phenotype", p}, {"stage", pipeline::to_string(st)}, {"grid", "grids/" + name + ".tsv"}});
    }
  if (!ci.scenarios.empty()) {
    const auto rep = write_consensus(ci, dir);
    log << "consensus: " << rep.alt_models.size() << " scenario(s), capacity " << rep.capacity << ", "
        << rep.common_terms.size() << " common term(s)\n";
  } else {
    log << "consensus skipped: no GoStart or GoMid scenario\n";
  }

  // GoEnd marginal term view of each phenotype's best GoEnd model.
  {
    std::vector<const consensus::ModelRecord*> goend;
    std::vector<std::string> labels;
    for (const auto& p : phenos) {
      const std::string name = slug(p) + "__GoEnd";
      auto it = std::find_if(runs.begin(), runs.end(), [&](const GridRun& g) { return g.name == name; });
      if (it == runs.end()) continue;
      goend.push_back(&it->records[best_index(it->records)]);
      labels.push_back(p + ":GoEnd:Best");
    }
    if (!goend.empty()) {
      auto out = tsv::open_output((dir / "goend_marginal_terms.tsv").string());
      out << "term_id\tterm_name";
      for (const auto& l : labels) out << '\t' << l;
      out << '\n';
      for (std::size_t t = 0; t < resolved.term_ids.size(); ++t) {
        const auto& id = resolved.term_ids[t];
        auto nm = resolved.term_names.find(id);
        out << id << '\t' << (nm == resolved.term_names.end() ? "" : nm->second);
        for (const auto* m : goend) out << '\t' << report::fixed(m->term_coefs(static_cast<Eigen::Index>(t)), 8);
        out << '\n';
      }
    }
  }

  if (binary) {
    report::write_phenotype_summary(ds, phenos, (dir / "phenotype_summary.tsv").string());
    auto out = tsv::open_output((dir / "binary_prediction.tsv").string());
    out << "method\tphenotype\tstage\tscreen_stat\tthreshold\tn_components\tpredictive_correlation\tcutoff\t"
           "accuracy\n";
    for (const auto& p : phenos) {
      const auto r = pipeline::threshold_classify(ds.phenotype(p), *ds.binary_labels,
                                                  pipeline::CutoffRule::best_split());
      out << "observed_cutoff\t" << p << "\t-\t-\t-\t-\t-\t" << tsv::format_real(r.cutoff) << '\t'
          << report::fixed(r.accuracy, 4) << '\n';
    }
    for (const auto& g : runs) {
      const auto b = best_index(g.records);
      const auto& m = g.records[b];
      const auto& oof = g.results[b].oof_predictions;
      const bool logistic = m.spec.family == numerics::Family::logistic;
      const auto r = pipeline::threshold_classify(
          oof, *ds.binary_labels, logistic ? pipeline::CutoffRule::fixed(0.5) : pipeline::CutoffRule::best_split());
      out << (logistic ? "logistic" : "predicted_cutoff") << '\t' << m.spec.phenotype << '\t'
          << pipeline::to_string(m.spec.stage) << '\t' << numerics::to_string(m.spec.screen_stat) << '\t'
          << tsv::format_real(m.spec.threshold) << '\t' << m.spec.n_components << '\t'
          << report::fixed(m.predictive_correlation, 6) << '\t' << tsv::format_real(r.cutoff) << '\t'
          << report::fixed(r.accuracy, 4) << '\n';
    }
  }

  // Manifest: everything needed to reproduce the reports. No timestamps.
  json m;
  m["tool"] = "phenopred";
  m["version"] = kVersion;
  m["eigen"] = eigen_version();
  m["seed"] = cfg.seed;
  m["folds"] = cfg.folds;
  {
    std::string a;
    for (int f : folds.assignment) a += std::to_string(f) + ",";
    m["fold_assignment_hash"] = report::hex64(report::fnv1a(a));
  }
  m["grid_hash"] = report::hex64(grid_hash(runs));
  m["q"] = cfg.q;
  m["delta"] = cfg.delta;
  json settings = json::object();
  for (const auto& [k, v] : kv.values())
    if (k != "jobs") settings[k] = v;
  m["config"] = settings;
  json inputs = json::object();
  auto add_input = [&](const std::string& role, const std::optional<std::string>& path) {
    if (path) inputs[role] = {{"path", fs::absolute(*path).lexically_normal().string()}, {"fnv1a", file_digest(*path)}};
  };
  add_input("expression", cfg.expression);
  add_input("mapping", cfg.mapping);
  add_input("term_names", cfg.term_names);
  add_input("phenotypes", cfg.phenotypes);
  add_input("symptoms", cfg.symptoms);
  add_input("labels", cfg.labels);
  add_input("planted_terms", cfg.planted_terms);
  m["inputs"] = inputs;
  m["dataset"] = {{"subjects", ds.n_subjects()},
                  {"features", ds.n_features()},
                  {"terms", resolved.size()},
                  {"unusable_terms", resolved.unusable_terms.size()}};
  json grids = json::array();
  for (const auto& g : runs) grids.push_back({{"grid", "grids/" + g.name + ".tsv"}, {"cells", g.specs.size()}});
  m["grids"] = grids;
  m["scenarios"] = scen;
  auto out = tsv::open_output((dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// consensus: recompute the consensus tables from a finished run directory.

inline void cmd_consensus(const std::string& run_dir, const config::KeyValues& kv, const std::string& output,
                          std::ostream& log) {
  kv.require_known({"q", "delta"});
  const fs::path dir(run_dir);
  json m;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw InputError("no manifest.json in '" + run_dir + "'");
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw InputError("manifest.json: " + std::string(e.what()));
    }
  }
  ConsensusInputs ci;
  try {
    ci.q = kv.real("q", m.at("q").get<double>());
    ci.delta = kv.real("delta", m.at("delta").get<double>());
    for (const auto& s : m.at("scenarios")) {
      auto st = pipeline::parse_stage(s.at("stage").get<std::string>());
      if (!st) throw InputError("manifest.json: bad stage");
      ci.scenarios.push_back(consensus::make_scenario(s.at("phenotype").get<std::string>(), *st));
      ci.grids.push_back(report::read_grid_table((dir / s.at("grid").get<std::string>()).string()));
    }
    if (m.at("inputs").contains("planted_terms"))
      ci.planted = load_id_list(m["inputs"]["planted_terms"]["path"].get<std::string>());
  } catch (const json::exception& e) {
    throw InputError("manifest.json: " + std::string(e.what()));
  }
  if (ci.scenarios.empty()) throw InputError("manifest lists no consensus scenarios");
  {
    auto lines = tsv::read_lines((dir / "terms.tsv").string());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto f = tsv::split(lines[i]);
      if (f.size() == 2 && !f[1].empty()) ci.names[f[0]] = f[1];
    }
  }
  const std::string out_dir = output.empty() ? run_dir : output;
  make_dir(out_dir);
  const auto rep = write_consensus(ci, fs::path(out_dir));
  log << "consensus: " << rep.alt_models.size() << " scenario(s), " << rep.common_terms.size()
      << " common term(s) -> " << out_dir << '\n';
}

// ---------------------------------------------------------------------------

// Exit codes: 0 success, 2 input or usage error, 3 numerical or internal failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Supervised principal component phenotype prediction with term-level integration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("phenopred ") + kVersion);

  std::vector<std::string> overrides;
  std::string output;
  std::optional<long long> seed;
  int jobs = 0;

  auto* score = app.add_subcommand("score", "Derive phenotype scores from a symptom inventory TSV");
  std::string symptoms;
  std::string score_out = "phenotypes.tsv";
  score->add_option("symptoms", symptoms, "symptom TSV")->required();
  score->add_option("-o,--output", score_out, "phenotype TSV to write");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic bundle with planted terms");
  std::string synth_conf;
  synth->add_option("config", synth_conf, "key = value config file");
  synth->add_option("--set", overrides, "override a config key (key=value)");
  synth->add_option("-o,--output", output, "output directory");
  synth->add_option("--seed", seed, "random seed");

  auto* run = app.add_subcommand("run", "Run the model grids, consensus and reports");
  std::string run_conf;
  run->add_option("config", run_conf, "key = value config file")->required();
  run->add_option("--set", overrides, "override a config key (key=value)");
  run->add_option("-o,--output", output, "output directory");
  run->add_option("--seed", seed, "fold seed");
  run->add_option("--jobs", jobs, "maximum worker threads")->check(CLI::PositiveNumber);

  auto* cons = app.add_subcommand("consensus", "Recompute consensus tables from a run directory");
  std::string run_dir;
  cons->add_option("run_dir", run_dir, "output directory of a previous run")->required();
  cons->add_option("--set", overrides, "override q or delta (key=value)");
  cons->add_option("-o,--output", output, "directory for the tables (default: run_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (score->parsed()) {
      cmd_score(symptoms, score_out, err);
    } else if (synth->parsed()) {
      config::KeyValues kv = synth_conf.empty() ? config::KeyValues{} : config::KeyValues::load(synth_conf);
      for (const auto& o : overrides) kv.set_assignment(o);
      if (seed) kv.set("seed", std::to_string(*seed));
      if (!output.empty()) kv.set("output", output);
      cmd_synth(config::SynthRunConfig::from(kv), err);
    } else if (run->parsed()) {
      config::KeyValues kv = config::KeyValues::load(run_conf);
      for (const auto& o : overrides) kv.set_assignment(o);
      if (seed) kv.set("seed", std::to_string(*seed));
      if (jobs > 0) kv.set("jobs", std::to_string(jobs));
      if (!output.empty()) kv.set("output", output);
      const auto base = fs::path(run_conf).parent_path();
      auto cfg = config::RunConfig::from(kv, base);
      // A relative output directory is taken from the working directory when
      // given on the command line, otherwise from the config file location.
      if (output.empty() && fs::path(cfg.output).is_relative() && !base.empty())
        cfg.output = (base / cfg.output).lexically_normal().string();
      cmd_run(cfg, kv, err);
    } else if (cons->parsed()) {
      config::KeyValues kv;
      for (const auto& o : overrides) kv.set_assignment(o);
      cmd_consensus(run_dir, kv, output, err);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "internal failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace phenopred::cli
