// palsim command-line driver: gen-lens -> synth -> analyze -> train -> explain -> report.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "palsim/config.hpp"
#include "palsim/field_io.hpp"
#include "palsim/manifest.hpp"
#include "palsim/pipeline.hpp"
#include "palsim/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace palsim;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out = "out";
  bool json_out = false;
  bool verbose = false;
  json cfg = json::object();
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "TOML run config; command-line flags take precedence");
  c.seed_opt = cmd->add_option("--seed", c.seed, "Master seed (default 1, config key: seed)");
  c.out_opt = cmd->add_option("--out", c.out, "Output root directory (default out, config key: out)");
  cmd->add_flag("--json", c.json_out, "Print a JSON summary on stdout");
  cmd->add_flag("-v,--verbose", c.verbose, "Progress messages on stderr");
}

void load_common(Common& c) {
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path)) throw ValidationError("config file not found: " + c.config_path, "config");
    c.cfg = read_config(c.config_path);
  }
  if (!c.seed_opt->count()) c.seed = config_value<std::uint64_t>(c.cfg, "seed", c.seed);
  if (!c.out_opt->count()) c.out = config_value<std::string>(c.cfg, "out", c.out);
}

// Flag value if given, else config key, else the flag's default.
template <class T>
T pick(const CLI::Option* opt, const T& flag_value, const Common& c, const std::string& key) {
  return opt->count() ? flag_value : config_value<T>(c.cfg, key, flag_value);
}

void log(const Common& c, const std::string& msg) {
  if (c.verbose) std::cerr << msg << '\n';
}

std::string lens_stem(LensCondition l) {
  std::string s = lens_name(l);
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

std::string row_key(const std::string& subject, LensCondition lens, int trial) {
  return subject + "|" + lens_name(lens) + "|" + std::to_string(trial);
}

void require_file(const fs::path& p, const std::string& field) {
  if (!fs::is_regular_file(p)) throw ValidationError("input not found: " + p.generic_string(), field);
}

json read_json_file(const fs::path& p, const std::string& field) {
  require_file(p, field);
  const auto bytes = read_file_bytes(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(p.generic_string() + ": " + e.what(), e.byte);
  }
}

void finish(const Common& c, RunManifest m, const fs::path& dir, json summary) {
  m.seed = c.seed;
  m.config = c.cfg.empty() ? nullptr : &c.cfg;
  const fs::path manifest = write_manifest(m, dir);
  summary["manifest"] = manifest.generic_string();
  if (c.json_out) std::cout << summary.dump(2) << '\n';
}

std::map<LensCondition, DecompositionMaps> load_lens_maps(const Common& c, const fs::path& lens_dir,
                                                         const std::set<LensCondition>& needed,
                                                         std::vector<fs::path>& inputs) {
  std::map<LensCondition, DecompositionMaps> maps;
  for (LensCondition l : needed) {
    fs::path p = lens_dir / (lens_stem(l) + ".dstf");
    p = config_value<std::string>(c.cfg, "lens_fields." + lens_stem(l), p.generic_string());
    require_file(p, "lens_fields." + lens_stem(l));
    log(c, "decomposing " + p.generic_string());
    maps[l] = decompose(read_field_file(p));
    inputs.push_back(p);
  }
  return maps;
}

// ---- gen-lens ---------------------------------------------------------------

struct GenLensArgs {
  std::string preset;
  std::string name = "custom";
  LensSpec spec;
  std::size_t width = 201, height = 201;
  double half_extent = 1.0;
  CLI::Option *width_opt = nullptr, *height_opt = nullptr, *extent_opt = nullptr;
};

int run_gen_lens(Common& c, GenLensArgs& a) {
  load_common(c);
  a.width = pick(a.width_opt, a.width, c, "lenses.width");
  a.height = pick(a.height_opt, a.height, c, "lenses.height");
  a.half_extent = pick(a.extent_opt, a.half_extent, c, "lenses.half_extent");
  if (a.width < 3 || a.height < 3) throw ValidationError("grid must be at least 3 x 3", a.width < 3 ? "width" : "height");
  if (a.preset.empty()) a.preset = config_value<std::string>(c.cfg, "lenses.preset", "");

  std::vector<std::pair<std::string, LensSpec>> lenses;
  if (a.preset == "paper") {
    for (LensCondition l : kAllLensConditions) lenses.emplace_back(lens_stem(l), lens_spec_for(l));
  } else if (a.preset.empty()) {
    lenses.emplace_back(a.name, a.spec);
  } else {
    throw ValidationError("unknown preset '" + a.preset + "' (expected: paper)", "preset");
  }
  for (const auto& [name, spec] : lenses) spec.validate();

  const fs::path dir = fs::path(c.out) / "lenses";
  fs::create_directories(dir);
  RunManifest m;
  m.command = "gen-lens";
  json summary = {{"command", "gen-lens"}, {"lenses", json::array()}};
  for (const auto& [name, spec] : lenses) {
    log(c, "generating " + name);
    const DistortionField f = synth_pal_field(spec, a.width, a.height, a.half_extent);
    const fs::path field_path = dir / (name + ".dstf");
    write_field_file(f, field_path);
    m.outputs.push_back(field_path);
    const DecompositionMaps d = decompose(f);
    const std::pair<const char*, const Grid*> grids[] = {{"displacement", &d.displacement_deg},
                                                         {"magnification", &d.magnification},
                                                         {"aspect", &d.aspect},
                                                         {"skew", &d.skew_deg},
                                                         {"rotation", &d.rotation_deg}};
    for (const auto& [map_name, g] : grids) {
      const fs::path p = dir / (name + "." + map_name + ".pfm");
      write_file_atomic(p, encode_pfm(*g));
      m.outputs.push_back(p);
    }
    const auto& v = d.displacement_deg.values;
    summary["lenses"].push_back({{"name", name},
                                 {"sphere", spec.sphere_power},
                                 {"addition", spec.addition_power},
                                 {"max_displacement_deg", *std::max_element(v.begin(), v.end())},
                                 {"degenerate_cells", d.degenerate_cells}});
  }
  finish(c, std::move(m), dir, std::move(summary));
  return 0;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string lenses;
  int subjects = 18, trials_per_lens = 5;
  SynthConfig cfg;
  CLI::Option *subjects_opt = nullptr, *trials_opt = nullptr, *rate_opt = nullptr, *dur_opt = nullptr,
              *noise_opt = nullptr;
};

int run_synth(Common& c, SynthArgs& a) {
  load_common(c);
  a.subjects = pick(a.subjects_opt, a.subjects, c, "synth.subjects");
  a.trials_per_lens = pick(a.trials_opt, a.trials_per_lens, c, "synth.trials_per_lens");
  a.cfg.frame_rate = pick(a.rate_opt, a.cfg.frame_rate, c, "synth.frame_rate");
  a.cfg.mean_duration_s = pick(a.dur_opt, a.cfg.mean_duration_s, c, "synth.mean_duration_s");
  a.cfg.rating_noise_sd = pick(a.noise_opt, a.cfg.rating_noise_sd, c, "synth.rating_noise_sd");
  a.cfg.rating_bias_min = config_value<int>(c.cfg, "synth.rating_bias_min", a.cfg.rating_bias_min);
  a.cfg.rating_bias_max = config_value<int>(c.cfg, "synth.rating_bias_max", a.cfg.rating_bias_max);
  a.cfg.weights.displacement_mean = config_value<double>(c.cfg, "synth.weight_displacement_mean", a.cfg.weights.displacement_mean);
  a.cfg.weights.skew_sd = config_value<double>(c.cfg, "synth.weight_skew_sd", a.cfg.weights.skew_sd);
  a.cfg.weights.aspect_sd = config_value<double>(c.cfg, "synth.weight_aspect_sd", a.cfg.weights.aspect_sd);
  if (a.subjects < 1) throw ValidationError("need at least one subject", "subjects");
  if (a.trials_per_lens < 1) throw ValidationError("need at least one trial per lens", "trials-per-lens");
  if (!(a.cfg.rating_noise_sd >= 0.0)) throw ValidationError("rating noise must be >= 0", "noise");

  const fs::path lens_dir = a.lenses.empty() ? fs::path(c.out) / "lenses" : fs::path(a.lenses);
  RunManifest m;
  m.command = "synth";
  const auto maps = load_lens_maps(c, lens_dir, {std::begin(kAllLensConditions), std::end(kAllLensConditions)}, m.inputs);

  log(c, "generating study");
  std::vector<SubjectProfile> profiles;
  const auto trials = generate_study(a.subjects, a.trials_per_lens, maps, SceneLayout{}, a.cfg, c.seed, &profiles);
  std::map<std::string, const SubjectProfile*> by_id;
  for (const auto& p : profiles) by_id[p.id] = &p;

  const fs::path dir = fs::path(c.out) / "sessions";
  fs::create_directories(dir);
  json truth = {{"subjects", json::array()}, {"trials", json::array()}};
  for (const auto& p : profiles)
    truth["subjects"].push_back({{"id", p.id}, {"age", p.age}, {"gender", p.gender}, {"rating_bias", p.rating_bias},
                                 {"sensitivity", p.sensitivity}, {"yaw_peaks", p.yaw_peaks},
                                 {"cube_side_weight", p.cube_side_weight}});
  for (const auto& t : trials) {
    char name[96];
    std::snprintf(name, sizeof name, "%s_%s_%02d.jsonl", t.subject_id.c_str(), lens_stem(t.lens_condition).c_str(),
                  t.trial_id);
    const fs::path p = dir / name;
    write_session(session_from_trial(t, *by_id.at(t.subject_id)), p);
    m.outputs.push_back(p);
    truth["trials"].push_back({{"subject_id", t.subject_id},
                               {"lens_condition", lens_name(t.lens_condition)},
                               {"trial_id", t.trial_id},
                               {"raw_rating", t.raw_rating},
                               {"true_score", t.true_score},
                               {"true_exposure", to_json(t.true_exposure)},
                               {"n_true_saccades", t.true_saccades.size()}});
  }
  const fs::path truth_path = dir / "truth.json";
  write_text_atomic(truth_path, truth.dump(1) + "\n");
  m.outputs.push_back(truth_path);
  finish(c, std::move(m), dir,
         {{"command", "synth"}, {"subjects", a.subjects}, {"trials", trials.size()}, {"dir", dir.generic_string()}});
  return 0;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string sessions, lenses;
};

int run_analyze(Common& c, AnalyzeArgs& a) {
  load_common(c);
  const fs::path session_dir = a.sessions.empty() ? fs::path(c.out) / "sessions" : fs::path(a.sessions);
  const fs::path lens_dir = a.lenses.empty() ? fs::path(c.out) / "lenses" : fs::path(a.lenses);
  if (!fs::is_directory(session_dir)) throw ValidationError("session directory not found: " + session_dir.generic_string(), "sessions");

  RunManifest m;
  m.command = "analyze";
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(session_dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .jsonl sessions in " + session_dir.generic_string(), "sessions");

  std::vector<Session> sessions;
  std::set<LensCondition> needed;
  for (const auto& f : files) {
    try {
      sessions.push_back(read_session(f));
    } catch (const FormatError& e) {
      throw FormatError(f.generic_string() + ": " + e.what(), e.location());
    }
    needed.insert(sessions.back().header.lens_condition);
    m.inputs.push_back(f);
  }
  log(c, "read " + std::to_string(sessions.size()) + " sessions");
  const auto maps = load_lens_maps(c, lens_dir, needed, m.inputs);

  log(c, "analysing");
  const DatasetBuild db = build_dataset(sessions, maps, AnalysisOptions{c.seed});

  const fs::path dir = fs::path(c.out) / "analysis";
  fs::create_directories(dir);
  const fs::path features = dir / "features.csv";
  write_feature_csv(db.table, features);
  json trials = json::array();
  for (std::size_t i = 0; i < db.table.rows.size(); ++i) {
    const FeatureRow& r = db.table.rows[i];
    trials.push_back({{"subject_id", r.subject_id},
                      {"lens_condition", lens_name(r.lens_condition)},
                      {"trial_id", r.trial_id},
                      {"analysis", to_json(db.analyses[i])}});
  }
  json rejected = json::array();
  for (const auto& r : db.rejected)
    rejected.push_back({{"subject_id", r.subject_id},
                        {"lens_condition", lens_name(r.lens_condition)},
                        {"trial_id", r.trial_id},
                        {"reason", r.reason}});
  const fs::path trials_path = dir / "trials.json", rejected_path = dir / "rejected.json";
  write_text_atomic(trials_path, trials.dump(1) + "\n");
  write_text_atomic(rejected_path, rejected.dump(1) + "\n");
  m.outputs = {features, trials_path, rejected_path};
  for (const auto& r : db.rejected) std::cerr << "skipped " << row_key(r.subject_id, r.lens_condition, r.trial_id) << ": " << r.reason << '\n';
  finish(c, std::move(m), dir,
         {{"command", "analyze"}, {"rows", db.table.rows.size()}, {"rejected", db.rejected.size()},
          {"features", features.generic_string()}});
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string features;
  TrainConfig cfg;
  int sweep_seeds = 0;
  bool no_subject_ratings = false, with_lens_code = false;
  CLI::Option *cand_opt = nullptr, *folds_opt = nullptr, *frac_opt = nullptr, *maxf_opt = nullptr,
              *sweep_opt = nullptr;
};

ModelDataOptions model_data_options(const Common& c, bool no_subject_ratings, bool with_lens_code) {
  ModelDataOptions o;
  o.include_subject_ratings = no_subject_ratings ? false : config_value<bool>(c.cfg, "train.subject_rating_features", true);
  o.include_lens_code = with_lens_code || config_value<bool>(c.cfg, "train.lens_code_feature", false);
  return o;
}

int run_train(Common& c, TrainArgs& a) {
  load_common(c);
  a.cfg.n_candidates = pick(a.cand_opt, a.cfg.n_candidates, c, "train.n_candidates");
  a.cfg.k_folds = pick(a.folds_opt, a.cfg.k_folds, c, "train.k_folds");
  a.cfg.test_fraction = pick(a.frac_opt, a.cfg.test_fraction, c, "train.test_fraction");
  a.cfg.max_features = pick(a.maxf_opt, a.cfg.max_features, c, "train.max_features");
  a.sweep_seeds = pick(a.sweep_opt, a.sweep_seeds, c, "train.sweep_seeds");
  a.cfg.seed = c.seed;
  if (a.cfg.n_candidates < 1) throw ValidationError("need at least one candidate", "candidates");
  if (a.cfg.max_features < 1 || a.cfg.max_features > kMaxShapleyFeatures)
    throw ValidationError("max-features must be in [1, 15]", "max-features");

  const fs::path features = a.features.empty() ? fs::path(c.out) / "analysis" / "features.csv" : fs::path(a.features);
  require_file(features, "features");
  const FeatureTable table = read_feature_csv(features);
  const ModelData data = make_model_data(table, model_data_options(c, a.no_subject_ratings, a.with_lens_code));

  log(c, "training on " + std::to_string(table.rows.size()) + " rows");
  const TrainOutcome o = train_pipeline(data, a.cfg);

  const fs::path dir = fs::path(c.out) / "model";
  fs::create_directories(dir);
  RunManifest m;
  m.command = "train";
  m.inputs.push_back(features);
  const fs::path model_path = dir / "model.json", metrics_path = dir / "metrics.json", split_path = dir / "split.json";
  write_text_atomic(model_path, to_json(o.model).dump(1) + "\n");
  json metrics = to_json(o, data);
  write_text_atomic(metrics_path, metrics.dump(2) + "\n");
  json split = {{"seed", c.seed}, {"test_fraction", a.cfg.test_fraction}, {"train", json::array()}, {"test", json::array()}};
  for (std::size_t i : o.split.train)
    split["train"].push_back(row_key(table.rows[i].subject_id, table.rows[i].lens_condition, table.rows[i].trial_id));
  for (std::size_t i : o.split.test)
    split["test"].push_back(row_key(table.rows[i].subject_id, table.rows[i].lens_condition, table.rows[i].trial_id));
  write_text_atomic(split_path, split.dump(1) + "\n");
  m.outputs = {model_path, metrics_path, split_path};

  json summary = {{"command", "train"}, {"train", to_json(o.train_metrics)}, {"test", to_json(o.test_metrics)},
                  {"best_params", to_json(o.search.best)}, {"model", model_path.generic_string()}};
  if (a.sweep_seeds > 0) {
    log(c, "sweeping " + std::to_string(a.sweep_seeds) + " split seeds");
    const SeedSweep sw = sweep_split_seeds(data, a.cfg, o.search.best, a.sweep_seeds);
    const fs::path sweep_path = dir / "sweep.json";
    write_text_atomic(sweep_path, to_json(sw).dump(1) + "\n");
    m.outputs.push_back(sweep_path);
    summary["sweep"] = {{"n", a.sweep_seeds}, {"r2_test_mean", sw.mean}, {"r2_test_sd", sw.sd}};
  }
  finish(c, std::move(m), dir, std::move(summary));
  return 0;
}

// ---- explain ----------------------------------------------------------------

struct ExplainArgs {
  std::string model, features, split, rows = "test";
  std::size_t background = 100;
  CLI::Option* bg_opt = nullptr;
};

int run_explain(Common& c, ExplainArgs& a) {
  load_common(c);
  a.background = pick(a.bg_opt, a.background, c, "explain.background_size");
  if (a.background < 1) throw ValidationError("background size must be >= 1", "background");
  if (a.rows != "test" && a.rows != "train" && a.rows != "all")
    throw ValidationError("rows must be test, train or all", "rows");
  const fs::path model_path = a.model.empty() ? fs::path(c.out) / "model" / "model.json" : fs::path(a.model);
  const fs::path features = a.features.empty() ? fs::path(c.out) / "analysis" / "features.csv" : fs::path(a.features);
  const fs::path split_path = a.split.empty() ? model_path.parent_path() / "split.json" : fs::path(a.split);
  require_file(features, "features");

  BoostedModel model;
  try {
    model = boosted_model_from_json(read_json_file(model_path, "model"));
  } catch (const json::exception& e) {
    throw FormatError(model_path.generic_string() + ": " + e.what(), 0);
  }
  const FeatureTable table = read_feature_csv(features);
  const ModelData data = make_model_data(table, {true, true});
  if (model.feature_names != data.names) throw ValidationError("model columns do not match the feature table", "features");

  const json split = read_json_file(split_path, "split");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    index[row_key(table.rows[i].subject_id, table.rows[i].lens_condition, table.rows[i].trial_id)] = i;
  auto rows_of = [&](const char* side) {
    std::vector<std::size_t> out;
    for (const auto& k : split.at(side)) {
      const auto it = index.find(k.get<std::string>());
      if (it == index.end()) throw ValidationError("split row " + k.get<std::string>() + " is not in the feature table", "split");
      out.push_back(it->second);
    }
    return out;
  };
  const std::vector<std::size_t> train_rows = rows_of("train");
  std::vector<std::size_t> rows = a.rows == "train" ? train_rows : a.rows == "test" ? rows_of("test") : std::vector<std::size_t>{};
  if (a.rows == "all")
    for (std::size_t i = 0; i < table.rows.size(); ++i) rows.push_back(i);

  const Matrix background = background_sample(data.X, train_rows, a.background, c.seed);
  log(c, "explaining " + std::to_string(rows.size()) + " rows");
  const ShapSummary s = explain_rows(model, data.X, rows, background);

  const fs::path dir = fs::path(c.out) / "explain";
  fs::create_directories(dir);
  RunManifest m;
  m.command = "explain";
  m.inputs = {model_path, features, split_path};
  json report = to_json(s);
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const FeatureRow& r = table.rows[s.rows[i]];
    report["rows"][i]["id"] = row_key(r.subject_id, r.lens_condition, r.trial_id);
    report["rows"][i]["actual"] = r.normalized_rating;
  }
  report["background_size"] = background.rows;
  const fs::path shap_path = dir / "shap.json", svg_path = dir / "shap_summary.svg";
  write_text_atomic(shap_path, report.dump(1) + "\n");
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& f : s.ranking) bars.emplace_back(f.name, f.mean_abs);
  write_text_atomic(svg_path, svg_bars(bars, "Mean |SHAP| per feature", "mean |SHAP value|"));
  m.outputs = {shap_path, svg_path};
  json top = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(5, s.ranking.size()); ++i) top.push_back(s.ranking[i].name);
  finish(c, std::move(m), dir, {{"command", "explain"}, {"rows", rows.size()}, {"top_features", top}});
  return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::string artifacts;
};

json describe(std::vector<double> v) {
  if (v.empty()) return {{"n", 0}};
  std::sort(v.begin(), v.end());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const std::size_t n = v.size();
  return {{"n", n},
          {"mean", mean},
          {"sd", n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0},
          {"median", n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2])},
          {"min", v.front()},
          {"max", v.back()}};
}

int run_report(Common& c, ReportArgs& a) {
  load_common(c);
  const fs::path root = a.artifacts.empty() ? fs::path(c.out) : fs::path(a.artifacts);
  const fs::path features = root / "analysis" / "features.csv";
  require_file(features, "artifacts");
  RunManifest m;
  m.command = "report";
  m.inputs.push_back(features);
  const FeatureTable table = read_feature_csv(features);

  std::map<LensCondition, std::vector<double>> ratings, displacement;
  const auto& cols = feature_columns();
  const std::size_t disp_col = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "displacement_mean") - cols.begin());
  for (const auto& r : table.rows) {
    ratings[r.lens_condition].push_back(r.normalized_rating);
    displacement[r.lens_condition].push_back(r.values[disp_col]);
  }
  json per_lens = json::object();
  std::vector<std::pair<std::string, std::vector<double>>> series;
  for (LensCondition l : kAllLensConditions) {
    if (!ratings.count(l)) continue;
    per_lens[lens_name(l)] = {{"normalized_rating", describe(ratings[l])},
                              {"displacement_mean_deg", describe(displacement[l])}};
    series.emplace_back(lens_name(l), ratings[l]);
  }

  json report = {{"tool", "palsim"}, {"version", kToolVersion}, {"rows", table.rows.size()}, {"per_lens", per_lens}};
  auto attach = [&](const fs::path& p, const char* key, auto&& pick_fn) {
    if (!fs::is_regular_file(p)) return;
    report[key] = pick_fn(read_json_file(p, key));
    m.inputs.push_back(p);
  };
  attach(root / "analysis" / "rejected.json", "rejected", [](const json& j) { return j.size(); });
  attach(root / "model" / "metrics.json", "model", [](const json& j) {
    return json{{"train", j.at("train")}, {"test", j.at("test")}, {"best_params", j.at("best_params")},
                {"selected_features", j.at("selected_features")}};
  });
  attach(root / "model" / "sweep.json", "seed_sweep",
         [](const json& j) { return json{{"n", j.at("seeds").size()}, {"mean", j.at("mean")}, {"sd", j.at("sd")}}; });
  attach(root / "explain" / "shap.json", "shap_ranking", [](const json& j) { return j.at("ranking"); });
  // Published human-study figures; context only, not a target for synthetic data.
  report["published_reference"] = {{"r2_test", 0.53}, {"r2_test_sd", 0.08}, {"mape", 0.4418}, {"mse", 0.33},
                                    {"max_error", 2.12}};

  const fs::path dir = fs::path(c.out) / "report";
  fs::create_directories(dir);
  const fs::path report_path = dir / "report.json", svg_path = dir / "ratings_by_lens.svg";
  write_text_atomic(report_path, report.dump(2) + "\n");
  write_text_atomic(svg_path, svg_histograms(series, 15, "Normalized discomfort rating by lens", "normalized rating"));
  m.outputs = {report_path, svg_path};
  finish(c, std::move(m), dir, {{"command", "report"}, {"report", report_path.generic_string()}});
  return 0;
}

void print_error(const char* kind, const std::string& message, const json& extra = json::object()) {
  json j = {{"error", kind}, {"message", message}};
  j.update(extra);
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive-lens distortion simulation and discomfort modelling"};
  app.require_subcommand(1);
  Common common;

  GenLensArgs gl;
  auto* gen = app.add_subcommand("gen-lens", "Write PAL distortion fields and their decomposition maps");
  add_common(gen, common);
  gen->add_option("--preset", gl.preset, "'paper' writes the baseline and the four study lenses");
  gen->add_option("--name", gl.name, "File stem for a single lens (default custom)");
  gen->add_option("--sphere", gl.spec.sphere_power, "Sphere power, D");
  gen->add_option("--add", gl.spec.addition_power, "Addition power, D");
  gen->add_option("--corridor", gl.spec.corridor_length_mm, "Corridor length, mm");
  gen->add_option("--index", gl.spec.refractive_index, "Refractive index");
  gen->add_option("--inset", gl.spec.nasal_inset_mm, "Nasal inset of the near zone, mm");
  gen->add_option("--vertex", gl.spec.vertex_distance_mm, "Vertex distance, mm");
  gen->add_option("--pantoscopic", gl.spec.pantoscopic_angle_deg, "Pantoscopic angle, degrees");
  gen->add_option("--base-curve", gl.spec.base_curve, "Base curve");
  gl.width_opt = gen->add_option("--width", gl.width, "Grid width in cells (default 201)");
  gl.height_opt = gen->add_option("--height", gl.height, "Grid height in cells (default 201)");
  gl.extent_opt = gen->add_option("--half-extent", gl.half_extent, "Tangent-plane half width (default 1.0)");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate synthetic sessions through the lens fields");
  add_common(synth, common);
  synth->add_option("--lenses", sy.lenses, "Directory of .dstf fields (default <out>/lenses)");
  sy.subjects_opt = synth->add_option("--subjects", sy.subjects, "Number of subjects (default 18)");
  sy.trials_opt = synth->add_option("--trials-per-lens", sy.trials_per_lens, "Trials per lens condition (default 5)");
  sy.rate_opt = synth->add_option("--frame-rate", sy.cfg.frame_rate, "Frames per second (default 90)");
  sy.dur_opt = synth->add_option("--mean-duration", sy.cfg.mean_duration_s, "Mean trial duration, s (default 36)");
  sy.noise_opt = synth->add_option("--noise", sy.cfg.rating_noise_sd, "Rating noise SD (default 0.3)");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Fit kinematics, detect gaze events and build the feature table");
  add_common(analyze, common);
  analyze->add_option("--sessions", an.sessions, "Directory of .jsonl sessions (default <out>/sessions)");
  analyze->add_option("--lenses", an.lenses, "Directory of .dstf fields (default <out>/lenses)");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Select features, tune and fit the boosted model");
  add_common(train, common);
  train->add_option("--features", tr.features, "Feature CSV (default <out>/analysis/features.csv)");
  tr.cand_opt = train->add_option("--candidates", tr.cfg.n_candidates, "Random-search candidates (default 20)");
  tr.folds_opt = train->add_option("--folds", tr.cfg.k_folds, "Subject-grouped CV folds (default 5)");
  tr.frac_opt = train->add_option("--test-fraction", tr.cfg.test_fraction, "Held-out share (default 0.3)");
  tr.maxf_opt = train->add_option("--max-features", tr.cfg.max_features, "Cap on selected features (default 15)");
  tr.sweep_opt = train->add_option("--sweep-seeds", tr.sweep_seeds, "Also report test R^2 over this many split seeds");
  train->add_flag("--no-subject-ratings", tr.no_subject_ratings, "Drop baseline/max/min rating features");
  train->add_flag("--with-lens-code", tr.with_lens_code, "Let the model see the lens condition");

  ExplainArgs ex;
  auto* explain = app.add_subcommand("explain", "Shapley attributions for held-out rows");
  add_common(explain, common);
  explain->add_option("--model", ex.model, "Model JSON (default <out>/model/model.json)");
  explain->add_option("--features", ex.features, "Feature CSV (default <out>/analysis/features.csv)");
  explain->add_option("--split", ex.split, "Split JSON written by train (default next to the model)");
  explain->add_option("--rows", ex.rows, "Rows to explain: test, train or all (default test)");
  ex.bg_opt = explain->add_option("--background", ex.background, "Background rows drawn from the training side (default 100)");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Summary JSON and rating histograms");
  add_common(report, common);
  report->add_option("--artifacts", rp.artifacts, "Root of earlier outputs (default <out>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return run_gen_lens(common, gl);
    if (*synth) return run_synth(common, sy);
    if (*analyze) return run_analyze(common, an);
    if (*train) return run_train(common, tr);
    if (*explain) return run_explain(common, ex);
    if (*report) return run_report(common, rp);
  } catch (const ValidationError& e) {
    print_error("validation", e.what(), {{"field", e.field()}});
    return 2;
  } catch (const FormatError& e) {
    print_error("format", e.what(), {{"location", e.location()}});
    return 2;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
