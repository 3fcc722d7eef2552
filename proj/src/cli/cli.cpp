#include "retain/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "retain/evaluation/analysis.hpp"
#include "retain/evaluation/crossval.hpp"
#include "retain/evaluation/metrics.hpp"
#include "retain/evaluation/report.hpp"
#include "retain/evaluation/robustness.hpp"
#include "retain/featurize.hpp"
#include "retain/learners/model.hpp"
#include "retain/synthcohort.hpp"
#include "retain/telemetry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace retain::cli {

namespace {

struct DigestContext {
  EVP_MD_CTX* ctx;
  DigestContext() : ctx(EVP_MD_CTX_new()) {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("cannot initialise SHA-256");
  }
  ~DigestContext() { EVP_MD_CTX_free(ctx); }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx, data, n) != 1) throw Error("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, md, &len) != 1) throw Error("SHA-256 final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Resolved values of every flag, shared by all subcommands.
struct Options {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string config;

  std::string input;
  std::string format = "auto";
  std::string study_start;
  std::string study_end;

  std::string out;
  std::string out_dir = ".";

  std::string feature_window = "day";
  std::string eval_window = "8:14";
  std::string long_eval_window = "60:67";

  // synth
  std::size_t players = 1000;
  double corruption_rate = 0.0;
  bool calibrate = false;
  double tolerance = 0.005;

  // learners
  std::string model = "lr";
  std::string models = "lr,svm,rf,ensemble";
  std::size_t max_rules = 4;
  std::int64_t min_leaf = 1;
  std::string kernel = "rbf";
  double cost = 1.0;
  double gamma = 0.01;
  std::size_t svm_rows = 3000;
  std::size_t trees = 128;
  std::size_t mtry = 0;
  std::size_t lr_rows = 10000;

  // tune / evaluate
  std::string family = "rf";
  std::size_t subsample = 10000;
  std::size_t folds = 10;
  std::size_t cv = 10;

  // heuristic / robustness / report
  std::string export_path;
  std::size_t chunks = 10;
  std::size_t levels = 9;
  bool rotate = false;
  std::string windows = "session,day,7d";
};

std::int64_t parse_int64(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(std::string(what) + ": expected an integer, got '" + s + "'");
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
  if (!f) throw IoError("write failed: " + path.string());
}

// Outputs land in one directory; the manifest records their digests.
class Run {
 public:
  Run(std::string subcommand, const Options& o, json parameters, fs::path dir, fs::path manifest_path)
      : opts_(o), dir_(std::move(dir)), manifest_path_(std::move(manifest_path)) {
    manifest_.subcommand = std::move(subcommand);
    manifest_.parameters = std::move(parameters);
    manifest_.seed = o.seed;
    manifest_.tool_version = kToolVersion;
    manifest_.started_at = utc_timestamp();
    if (!dir_.empty()) fs::create_directories(dir_);
  }

  const Options& opts() const { return opts_; }
  RunManifest& manifest() { return manifest_; }
  fs::path path(const std::string& name) const { return dir_ / name; }
  std::string manifest_name() const { return manifest_path_.filename().string(); }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = path(name);
    write_file(p, content);
    manifest_.add_output(p);
  }

  void finish() {
    manifest_.finished_at = utc_timestamp();
    write_file(manifest_path_, manifest_.to_json().dump(2) + "\n");
  }

 private:
  const Options& opts_;
  fs::path dir_;
  fs::path manifest_path_;
  RunManifest manifest_;
};

// Single-file commands write next to their --out file.
fs::path parent_dir(const std::string& file) {
  const fs::path p(file);
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

EventLog load_input(Run& run) {
  const Options& o = run.opts();
  const fs::path in(o.input);
  if (!fs::exists(in)) throw InputError("input not found: " + o.input);
  EventFormat format;
  if (o.format == "auto") {
    format = fs::is_directory(in) ? EventFormat::csv : EventFormat::jsonl;
  } else {
    format = o.format == "csv" ? EventFormat::csv : EventFormat::jsonl;
  }
  if (format == EventFormat::csv) {
    for (const char* f : {"installs.csv", "sessions.csv", "rounds.csv"}) {
      if (fs::exists(in / f)) run.manifest().add_input(in / f);
    }
  } else {
    run.manifest().add_input(in);
  }
  ParseOptions po;
  if (!o.study_start.empty()) po.study_start = parse_int64(o.study_start, "--study-start");
  if (!o.study_end.empty()) po.study_end = parse_int64(o.study_end, "--study-end");
  return load_events(in, format, po);
}

EventLog load_cohort(Run& run) {
  const EventLog log = apply_cohort_filter(load_input(run));
  if (log.player_count() == 0) throw InputError("no player passes the cohort filter");
  return log;
}

std::vector<FeatureVector> rows_for(const EventLog& log, const Options& o, const std::string& window) {
  return build_rows(log, FeatureWindow::parse(window), EvalWindow::parse(o.eval_window),
                    EvalWindow::parse(o.long_eval_window), o.threads);
}

// Encoding fitted on every row, for models trained on the whole cohort.
Dataset encode_all(const std::vector<FeatureVector>& rows) { return encode(rows, rows, Target::retained_short); }

ModelSpec spec_for(Family family, const Options& o) {
  ModelSpec s;
  s.family = family;
  s.tree.max_rules = o.max_rules;
  s.tree.min_leaf = o.min_leaf;
  s.lr.selection_rows = o.lr_rows;
  s.lr.seed = mix_seed(o.seed, 2);
  s.lr.threads = o.threads;
  s.svm.kernel = parse_kernel(o.kernel);
  s.svm.C = o.cost;
  s.svm.gamma = o.gamma;
  s.svm.max_train_rows = o.svm_rows;
  s.svm.seed = mix_seed(o.seed, 3);
  s.rf.n_trees = o.trees;
  s.rf.m_try = o.mtry;
  s.rf.seed = mix_seed(o.seed, 4);
  s.rf.threads = o.threads;
  return s;
}

std::vector<ModelSpec> specs_for(const std::string& list, const Options& o) {
  std::vector<ModelSpec> specs;
  std::set<Family> seen;
  for (const auto& name : split_list(list)) {
    const Family f = parse_family(name);
    if (seen.insert(f).second) specs.push_back(spec_for(f, o));
  }
  if (specs.empty()) throw InputError("no models given");
  return specs;
}

FoldPlan plan_for(const EventLog& log, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> players;
  players.reserve(log.player_count());
  for (const auto& i : log.installs()) players.push_back(i.player_id);
  return make_folds(players, k, seed);
}

std::string manifest_line(const Run& run) {
  return "Produced by run manifest `" + run.manifest_name() + "` (seed " + std::to_string(run.opts().seed) + ").\n";
}

std::vector<std::string> metric_cells(const std::string& name, const MetricSet& m) {
  return {name, format_number(m.accuracy), format_number(m.precision), format_number(m.recall), format_number(m.f1),
          format_number(m.auc)};
}

const std::vector<std::string> kMetricHeader = {"model", "accuracy", "precision", "recall", "f1", "auc"};

std::string describe_rule(const json& rule) {
  std::string text;
  for (const auto& c : rule.at("if")) {
    if (!text.empty()) text += " and ";
    const std::string op = c.at("op");
    text += c.at("feature").get<std::string>() + " " + op + " ";
    if (op == "in" || op == "not_in") {
      std::string vals;
      for (const auto& v : c.at("values")) vals += (vals.empty() ? "" : ", ") + v.get<std::string>();
      text += "{" + vals + "}";
    } else {
      text += format_number(c.at("value").get<double>(), 4);
    }
  }
  return text.empty() ? "always" : text;
}

// ---------------------------------------------------------------------------

void cmd_synth(Run& run) {
  const Options& o = run.opts();
  GeneratorConfig config;
  config.n_players = o.players;
  config.seed = o.seed;
  config.corruption_rate = o.corruption_rate;
  config.validate();
  if (o.calibrate) config = calibrate(config, o.tolerance, o.threads).config;

  const fs::path out(o.out);
  const std::string truth_name = out.filename().string() + ".truth.jsonl";
  if (o.format == "csv") {
    if (o.corruption_rate > 0.0) throw InputError("corruption is only supported for JSONL output");
    const SynthLog synth = generate_log(config, o.threads);
    fs::create_directories(out);
    write_events_csv(synth.log, out);
    for (const char* f : {"installs.csv", "sessions.csv", "rounds.csv"}) run.manifest().add_output(out / f);
    std::ostringstream truth;
    write_truth_jsonl(synth.truth, truth);
    run.write(truth_name, truth.str());
  } else {
    std::ostringstream events, truth;
    generate_jsonl(config, events, truth);
    run.write(out.filename().string(), events.str());
    run.write(truth_name, truth.str());
  }
}

void cmd_ingest(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_input(run);
  const EventLog cohort = apply_cohort_filter(log);

  std::ostringstream valid, filtered, rejected;
  write_events_jsonl(log, valid);
  write_events_jsonl(cohort, filtered);
  write_rejected_jsonl(log, rejected);
  run.write("events.jsonl", valid.str());
  run.write("cohort.jsonl", filtered.str());
  run.write(fs::path(o.input).filename().string() + ".rejected.jsonl", rejected.str());

  const CohortSummary all = cohort_summary(log);
  std::ostringstream funnel;
  funnel << "stage,count\n"
         << "installed," << all.installed << '\n'
         << "opened," << all.opened << '\n'
         << "played," << all.played << '\n'
         << "passed_filter," << all.passed_filter << '\n'
         << "rejected_records," << log.rejected().size() << '\n';
  run.write("funnel.csv", funnel.str());

  const CohortSummary active = cohort_summary(cohort);
  std::ostringstream activity;
  write_activity_csv(active, activity);
  run.write("activity.csv", activity.str());
  std::vector<Series> players(1), rounds(1);
  players[0].name = "active players";
  rounds[0].name = "rounds per active player";
  for (std::size_t d = 0; d < active.active_players.size(); ++d) {
    players[0].points.emplace_back(static_cast<double>(d), static_cast<double>(active.active_players[d]));
    rounds[0].points.emplace_back(static_cast<double>(d), active.mean_rounds_per_active[d]);
  }
  run.write("activity.svg", svg_line_chart("Active players by day since install", "day", "players", players));
  run.write("rounds.svg", svg_line_chart("Rounds per active player", "day", "rounds", rounds));

  std::ostringstream md;
  md << "# Ingest summary\n\n" << manifest_line(run) << '\n'
     << markdown_table({"stage", "count"}, {{"installed", std::to_string(all.installed)},
                                            {"opened", std::to_string(all.opened)},
                                            {"played", std::to_string(all.played)},
                                            {"passed_filter", std::to_string(all.passed_filter)},
                                            {"rejected_records", std::to_string(log.rejected().size())}});
  run.write("ingest.md", md.str());
}

void cmd_featurize(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_cohort(run);
  const auto rows = rows_for(log, o, o.feature_window);
  std::ostringstream out;
  write_features_csv(rows, out);
  run.write(fs::path(o.out).filename().string(), out.str());
}

void cmd_train(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_cohort(run);
  const ModelSpec spec = spec_for(parse_family(o.model), o);
  const Dataset data = encode_all(rows_for(log, o, o.feature_window));
  const TrainedModel model = train_model(data.design, spec);
  json envelope = save_model(model, data.encoder);
  envelope["window"] = FeatureWindow::parse(o.feature_window).name();
  envelope["eval_window"] = EvalWindow::parse(o.eval_window).name();
  run.write(fs::path(o.out).filename().string(), envelope.dump(2) + "\n");
}

void cmd_tune(Run& run) {
  const Options& o = run.opts();
  const Family family = parse_family(o.family);
  if (family != Family::svm && family != Family::rf) throw InputError("tune supports the svm and rf families");
  const EventLog log = load_cohort(run);
  const Dataset data = encode_all(rows_for(log, o, o.feature_window));
  const auto grid = family == Family::svm ? default_svm_grid() : default_forest_grid(data.design.columns.size());
  const TuneResult r = tune(data.design, family, grid, o.subsample, o.seed, o.threads, o.folds);

  json doc;
  doc["family"] = to_string(family);
  doc["window"] = FeatureWindow::parse(o.feature_window).name();
  doc["eval_window"] = EvalWindow::parse(o.eval_window).name();
  doc["rows_used"] = r.rows_used;
  doc["folds"] = o.folds;
  doc["grid"] = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    doc["grid"].push_back({{"point", grid[i].to_json(family)}, {"accuracy", r.accuracy[i]}});
  }
  doc["best"] = {{"index", r.best}, {"point", r.point.to_json(family)}, {"accuracy", r.accuracy[r.best]}};
  run.write(fs::path(o.out).filename().string(), doc.dump(2) + "\n");
}

void cmd_evaluate(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_cohort(run);
  const FeatureWindow fw = FeatureWindow::parse(o.feature_window);
  const EvalWindow ev = EvalWindow::parse(o.eval_window);
  const auto specs = specs_for(o.models, o);
  const FoldPlan plan = plan_for(log, o.cv, o.seed);
  const auto results = cross_validate(log, fw, ev, specs, plan, o.threads);

  std::vector<int> labels(log.player_count());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = label_player(log.player(i), ev);

  std::vector<MetricRow> rows;
  std::vector<std::pair<std::string, std::vector<RocPoint>>> curves;
  std::vector<Series> roc_series;
  std::vector<std::vector<std::string>> table;
  for (const auto& r : results) {
    const std::string name = to_string(r.spec.family);
    rows.push_back({fw.name(), ev.name(), name, r.pooled});
    curves.emplace_back(name, roc_curve(labels, r.predictions.scores));
    Series s{name, {}};
    for (const auto& p : curves.back().second) s.points.emplace_back(p.fpr, p.tpr);
    roc_series.push_back(std::move(s));
    table.push_back(metric_cells(name, r.pooled));
  }

  std::ostringstream metrics, folds, roc, preds;
  write_metric_rows_csv(rows, metrics);
  write_fold_metrics_csv(results, folds);
  write_roc_csv(curves, roc);
  preds << "player_id,fold,label";
  for (const auto& r : results) preds << ',' << to_string(r.spec.family) << "_score," << to_string(r.spec.family) << "_class";
  preds << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& id = log.installs()[i].player_id;
    preds << id << ',' << plan.fold_of(id) << ',' << labels[i];
    for (const auto& r : results) {
      preds << ',' << format_number(r.predictions.scores[i], 6) << ',' << r.predictions.classes[i];
    }
    preds << '\n';
  }
  run.write("metrics.csv", metrics.str());
  run.write("folds.csv", folds.str());
  run.write("roc.csv", roc.str());
  run.write("predictions.csv", preds.str());
  run.write("roc.svg", svg_line_chart("ROC, window " + fw.name() + ", labels " + ev.name(), "false positive rate",
                                      "true positive rate", roc_series));

  std::ostringstream md;
  md << "# Cross-validated evaluation\n\n"
     << manifest_line(run) << '\n'
     << "Feature window `" << fw.name() << "`, evaluation window `" << ev.name() << "`, " << o.cv << " folds, "
     << log.player_count() << " players.\n\n"
     << markdown_table(kMetricHeader, table);
  run.write("evaluate.md", md.str());
}

void cmd_heuristic(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_cohort(run);
  const FeatureWindow fw = FeatureWindow::parse(o.feature_window);
  const EvalWindow ev = EvalWindow::parse(o.eval_window);
  const auto rows = rows_for(log, o, o.feature_window);
  const Dataset data = encode_all(rows);
  RuleTreeParams params;
  params.max_rules = o.max_rules;
  params.min_leaf = o.min_leaf;
  const RuleTree tree = train_rule_tree(data.design, params);
  const json doc = export_rules(tree);

  // The written document must reproduce the tree on every training row.
  const RuleSet rules = RuleSet::from_json(json::parse(doc.dump()));
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    if (rules.classify(data.rows[i]) != tree.leaf(data.design.unscaled.row(i)).predicted_class()) {
      throw Error("exported rules disagree with the tree for player " + data.rows[i].player_id);
    }
  }
  const std::string name = fs::path(o.export_path).filename().string();
  run.write(name, doc.dump(2) + "\n");

  std::ostringstream md;
  md << "# Heuristic rules\n\n" << manifest_line(run) << '\n'
     << "Feature window `" << fw.name() << "`, evaluation window `" << ev.name() << "`, " << tree.rule_count()
     << " splits.\n\n";
  std::vector<std::vector<std::string>> table;
  for (const auto& r : doc.at("rules")) {
    const auto& then = r.at("then");
    table.push_back({describe_rule(r), then.at("class").get<int>() ? "retained" : "churned",
                     format_number(then.at("probability").get<double>()),
                     std::to_string(then.at("support").get<std::size_t>())});
  }
  md << markdown_table({"condition", "prediction", "retained fraction", "support"}, table);

  if (o.cv > 0) {
    const ModelSpec spec = spec_for(Family::rule_tree, o);
    const auto results = cross_validate(log, fw, ev, std::span(&spec, 1), plan_for(log, o.cv, o.seed), o.threads);
    const std::vector<MetricRow> rows_out = {{fw.name(), ev.name(), "tree", results[0].pooled}};
    std::ostringstream csv;
    write_metric_rows_csv(rows_out, csv);
    run.write(name + ".metrics.csv", csv.str());
    md << "\n" << o.cv << "-fold cross-validation:\n\n"
       << markdown_table(kMetricHeader, {metric_cells("tree", results[0].pooled)});
  }
  run.write(name + ".md", md.str());
}

void cmd_robustness(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_cohort(run);
  const auto rows = rows_for(log, o, o.feature_window);
  const Dataset data = encode_all(rows);
  RobustnessParams p;
  p.tree.max_rules = o.max_rules;
  p.tree.min_leaf = o.min_leaf;
  p.n_chunks = o.chunks;
  p.max_level = o.levels;
  p.seed = o.seed;
  p.rotate = o.rotate;
  p.threads = o.threads;
  const RobustnessReport rep = robustness_study(data, p);

  std::ostringstream csv, rates;
  write_robustness_csv(rep, csv);
  rates << "level,tree,rate\n";
  std::vector<std::vector<std::string>> table;
  for (const auto& l : rep.levels) {
    for (std::size_t t = 0; t < l.rates.size(); ++t) rates << l.level << ',' << t << ',' << format_number(l.rates[t], 6) << '\n';
    table.push_back({std::to_string(l.level), format_number(l.min), format_number(l.max), format_number(l.mean),
                     format_number(l.std)});
  }
  run.write("robustness.csv", csv.str());
  run.write("robustness_rates.csv", rates.str());

  std::ostringstream md;
  md << "# Heuristic robustness\n\n" << manifest_line(run) << '\n'
     << rep.n_chunks << " chunks, hold-out of " << rep.holdout_rows << " players"
     << (rep.rotated ? ", every chunk held out in turn" : "") << ".\n\n"
     << markdown_table({"level", "min", "max", "mean", "std"}, table);
  run.write("robustness.md", md.str());
}

void cmd_report(Run& run) {
  const Options& o = run.opts();
  const EventLog log = load_cohort(run);

  std::vector<FeatureReport> reports;
  for (const auto& w : split_list(o.windows)) {
    const FeatureWindow fw = FeatureWindow::parse(w);
    const Dataset data = encode_all(rows_for(log, o, w));
    const ModelSpec spec = spec_for(Family::lr, o);
    const LinearModel lr = train_logistic(data.design, spec.lr);
    const Forest rf = train_forest(data.design, spec_for(Family::rf, o).rf);
    reports.push_back(feature_report(fw.name(), data.rows, lr, rf, Target::retained_short));
  }
  if (reports.empty()) throw InputError("no feature windows given");

  // Long-term view of held-out short-term predictions.
  const FeatureWindow fw = FeatureWindow::parse(o.feature_window);
  const EvalWindow short_eval = EvalWindow::parse(o.eval_window);
  const EvalWindow long_eval = EvalWindow::parse(o.long_eval_window);
  const auto specs = specs_for(o.models, o);
  const auto results = cross_validate(log, fw, short_eval, specs, plan_for(log, o.cv, o.seed), o.threads);
  std::map<std::string, std::map<std::string, int>> predicted;
  for (const auto& r : results) {
    auto& m = predicted[to_string(r.spec.family)];
    for (std::size_t i = 0; i < log.player_count(); ++i) m[log.installs()[i].player_id] = r.predictions.classes[i];
  }
  const LongtermReport longterm = longterm_analysis(log, predicted, short_eval, long_eval);

  std::ostringstream corr, coef, imp, lt;
  write_correlations_csv(reports, corr);
  write_coefficients_csv(reports, coef);
  write_importance_csv(reports, imp);
  write_longterm_csv(longterm, lt);
  run.write("correlations.csv", corr.str());
  run.write("coefficients.csv", coef.str());
  run.write("importance.csv", imp.str());
  run.write("longterm.csv", lt.str());
  for (const auto& rep : reports) {
    std::vector<std::pair<std::string, double>> bars(rep.importance.begin(),
                                                     rep.importance.begin() + std::min<std::ptrdiff_t>(15, std::ssize(rep.importance)));
    run.write("importance_" + rep.window + ".svg", svg_bar_chart("Forest importance, window " + rep.window, bars));
  }

  std::ostringstream md;
  md << "# Retention report\n\n" << manifest_line(run) << '\n';
  for (const auto& rep : reports) {
    md << "## Window " << rep.window << "\n\n";
    std::vector<std::vector<std::string>> c, l, r;
    for (const auto& x : rep.correlations) c.push_back({x.feature, x.constant ? "constant" : format_number(x.r)});
    for (const auto& x : rep.coefficients) l.push_back({x.term, format_number(x.weight), format_number(x.std_error)});
    for (std::size_t i = 0; i < rep.importance.size() && i < 10; ++i) {
      r.push_back({std::to_string(i + 1), rep.importance[i].first, format_number(rep.importance[i].second)});
    }
    md << "Correlation with short-term retention:\n\n" << markdown_table({"feature", "r"}, c) << '\n'
       << "Logistic regression terms:\n\n" << markdown_table({"term", "weight", "std error"}, l) << '\n'
       << "Forest importance (top 10):\n\n" << markdown_table({"rank", "column", "importance"}, r) << '\n';
  }
  md << "## Long-term retention (" << long_eval.name() << ")\n\n";
  std::vector<std::vector<std::string>> t = {
      {"all players", std::to_string(longterm.players), format_number(longterm.base_rate)},
      {"actually retained " + short_eval.name(), std::to_string(longterm.short_retained),
       format_number(longterm.long_given_actual_short)}};
  for (const auto& m : longterm.models) {
    t.push_back({"predicted retained by " + m.model, std::to_string(m.predicted_retained), format_number(m.long_given_predicted)});
  }
  md << markdown_table({"group", "players", "long-term retained"}, t);
  run.write("report.md", md.str());
}

// ---------------------------------------------------------------------------

json resolved_parameters(const CLI::App& sub) {
  json p = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      p[name] = r.empty() ? std::string("true") : r.back();
    } else {
      const std::string d = opt->get_default_str();
      p[name] = d.empty() && opt->get_expected_max() == 0 ? std::string("false") : d;
    }
  }
  return p;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  DigestContext d;
  d.update(data.data(), data.size());
  return d.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  DigestContext d;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

void RunManifest::add_input(const fs::path& path) {
  inputs.push_back({path.generic_string(), sha256_file(path), fs::file_size(path)});
}

void RunManifest::add_output(const fs::path& path) {
  outputs.push_back({path.filename().string(), sha256_file(path), fs::file_size(path)});
}

json RunManifest::to_json() const {
  auto files = [](const std::vector<FileDigest>& v) {
    json a = json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return a;
  };
  return {{"subcommand", subcommand}, {"parameters", parameters}, {"seed", seed},
          {"tool_version", tool_version}, {"started_at", started_at}, {"finished_at", finished_at},
          {"inputs", files(inputs)}, {"outputs", files(outputs)}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.parameters = j.at("parameters");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    for (const char* key : {"inputs", "outputs"}) {
      auto& dst = std::string(key) == "inputs" ? m.inputs : m.outputs;
      for (const auto& f : j.at(key)) {
        dst.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(), f.at("bytes").get<std::uintmax_t>()});
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::map<std::string, std::string> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.starts_with("--")) key = key.substr(2);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty() || value.empty()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": empty key or value");
    }
    if (!out.emplace(key, value).second) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
  }
  return out;
}

std::vector<std::string> resolve_arguments(std::vector<std::string> args, std::string_view env_seed) {
  if (args.empty() || args[0].starts_with("-")) return args;
  std::vector<std::string> explicit_flags;
  std::optional<std::string> config_path;
  bool has_seed = false;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
      continue;
    }
    if (a.starts_with("--config=")) {
      config_path = a.substr(9);
      continue;
    }
    if (a == "--seed" || a.starts_with("--seed=")) has_seed = true;
    explicit_flags.push_back(a);
  }
  std::vector<std::string> out = {args[0]};
  if (config_path) {
    for (const auto& [k, v] : read_config(*config_path)) {
      if (k == "config") throw InputError("config files cannot include other config files");
      if (k == "seed") has_seed = true;
      out.push_back("--" + k + "=" + v);
    }
  }
  if (!has_seed && !env_seed.empty()) out.push_back("--seed=" + std::string(env_seed));
  out.insert(out.end(), explicit_flags.begin(), explicit_flags.end());
  return out;
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"retain: early player retention prediction from game telemetry", "retain"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Options o;
  o.threads = std::max(1u, std::thread::hardware_concurrency());

  const std::vector<std::string> families = {"tree", "lr", "svm", "rf", "ensemble", "majority"};
  auto common = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "Master seed (falls back to RETAIN_SEED)");
    s->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    s->add_option("--config", o.config, "Flat key = value file; explicit flags take precedence");
  };
  auto input = [&](CLI::App* s) {
    s->add_option("--input", o.input, "Event log: JSONL file or directory of CSV files")->required();
    s->add_option("--format", o.format, "Input format")->check(CLI::IsMember({"auto", "jsonl", "csv"}));
    s->add_option("--study-start", o.study_start, "Earliest accepted install timestamp (inclusive)");
    s->add_option("--study-end", o.study_end, "Latest accepted install timestamp (exclusive)");
  };
  auto windows = [&](CLI::App* s, const std::string& feature_default) {
    s->add_option("--feature-window", o.feature_window, "session, day or <n>d")->default_str(feature_default);
    s->add_option("--eval-window", o.eval_window, "Short-term label window start:end in days");
    s->add_option("--long-eval-window", o.long_eval_window, "Long-term label window start:end in days");
  };
  auto learners = [&](CLI::App* s) {
    s->add_option("--max-rules", o.max_rules, "Rule tree splits")->check(CLI::PositiveNumber);
    s->add_option("--min-leaf", o.min_leaf, "Rule tree minimum rows per leaf")->check(CLI::PositiveNumber);
    s->add_option("--kernel", o.kernel, "SVM kernel")->check(CLI::IsMember({"linear", "rbf"}));
    s->add_option("--cost", o.cost, "SVM box constraint C")->check(CLI::PositiveNumber);
    s->add_option("--gamma", o.gamma, "RBF kernel width")->check(CLI::PositiveNumber);
    s->add_option("--svm-rows", o.svm_rows, "SVM training subsample cap")->check(CLI::PositiveNumber);
    s->add_option("--trees", o.trees, "Forest size")->check(CLI::PositiveNumber);
    s->add_option("--mtry", o.mtry, "Forest features per split (0: square root)");
    s->add_option("--lr-rows", o.lr_rows, "Rows used by the stepwise term search")->check(CLI::PositiveNumber);
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic event log and its truth sidecar");
  common(synth);
  synth->add_option("--players", o.players, "Installs to simulate")->check(CLI::PositiveNumber);
  synth->add_option("--out", o.out, "Output JSONL file (or directory for csv)")->required();
  synth->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"jsonl", "csv"}))->default_str("jsonl");
  synth->add_option("--corruption-rate", o.corruption_rate, "Fraction of emitted lines to corrupt");
  synth->add_flag("--calibrate", o.calibrate, "Recalibrate hazard scales to the retention targets first");
  synth->add_option("--tolerance", o.tolerance, "Calibration tolerance");

  CLI::App* ingest = app.add_subcommand("ingest", "Validate events, report rejects, cohort funnel and activity");
  common(ingest);
  input(ingest);
  ingest->add_option("--out-dir", o.out_dir, "Output directory");

  CLI::App* featurize = app.add_subcommand("featurize", "Compute per-player features and labels");
  common(featurize);
  input(featurize);
  windows(featurize, "day");
  featurize->add_option("--out", o.out, "Output CSV")->required();

  CLI::App* train = app.add_subcommand("train", "Train one model on all cohort players");
  common(train);
  input(train);
  windows(train, "day");
  learners(train);
  train->add_option("--model", o.model, "Model family")->check(CLI::IsMember(families));
  train->add_option("--out", o.out, "Output model JSON")->required();

  CLI::App* tune_cmd = app.add_subcommand("tune", "Grid search by cross-validated accuracy");
  common(tune_cmd);
  input(tune_cmd);
  windows(tune_cmd, "day");
  tune_cmd->add_option("--family", o.family, "svm or rf")->check(CLI::IsMember({"svm", "rf"}));
  tune_cmd->add_option("--subsample", o.subsample, "Rows sampled for tuning")->check(CLI::PositiveNumber);
  tune_cmd->add_option("--folds", o.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  tune_cmd->add_option("--out", o.out, "Output JSON")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "Cross-validated metrics for several models");
  common(evaluate);
  input(evaluate);
  windows(evaluate, "day");
  learners(evaluate);
  evaluate->add_option("--models", o.models, "Comma-separated model families");
  evaluate->add_option("--cv", o.cv, "Folds")->check(CLI::Range(2, 1000));
  evaluate->add_option("--out-dir", o.out_dir, "Output directory");

  CLI::App* heuristic = app.add_subcommand("heuristic", "Train and export the small rule tree");
  common(heuristic);
  input(heuristic);
  windows(heuristic, "day");
  heuristic->add_option("--max-rules", o.max_rules, "Rule tree splits")->check(CLI::PositiveNumber);
  heuristic->add_option("--min-leaf", o.min_leaf, "Minimum rows per leaf")->check(CLI::PositiveNumber);
  heuristic->add_option("--cv", o.cv, "Folds for the accuracy estimate (0 skips it)");
  heuristic->add_option("--export", o.export_path, "Rule document path")->required();

  CLI::App* robust = app.add_subcommand("robustness", "Rule tree stability under neighbour perturbation");
  common(robust);
  input(robust);
  windows(robust, "day");
  robust->add_option("--max-rules", o.max_rules, "Rule tree splits")->check(CLI::PositiveNumber);
  robust->add_option("--min-leaf", o.min_leaf, "Minimum rows per leaf")->check(CLI::PositiveNumber);
  robust->add_option("--chunks", o.chunks, "Player chunks")->check(CLI::Range(3, 1000));
  robust->add_option("--levels", o.levels, "Perturbation levels")->check(CLI::PositiveNumber);
  robust->add_flag("--rotate", o.rotate, "Hold out every chunk in turn");
  robust->add_option("--out-dir", o.out_dir, "Output directory");

  CLI::App* report = app.add_subcommand("report", "Feature analysis and long-term retention report");
  common(report);
  input(report);
  windows(report, "7d");
  learners(report);
  report->add_option("--windows", o.windows, "Feature windows analysed");
  report->add_option("--models", o.models, "Models whose held-out predictions are followed up");
  report->add_option("--cv", o.cv, "Folds")->check(CLI::Range(2, 1000));
  report->add_option("--out-dir", o.out_dir, "Output directory");

  const char* env_seed = std::getenv("RETAIN_SEED");
  try {
    try {
      args = resolve_arguments(std::move(args), env_seed ? env_seed : "");
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    if (const CLI::Option* fw = sub->get_option_no_throw("--feature-window"); fw && fw->count() == 0) {
      o.feature_window = fw->get_default_str();
    }
    set_default_threads(o.threads);
    const std::string name = sub->get_name();
    const json params = resolved_parameters(*sub);

    using Handler = void (*)(Run&);
    const std::map<std::string, Handler> handlers = {
        {"synth", cmd_synth},         {"ingest", cmd_ingest},   {"featurize", cmd_featurize},
        {"train", cmd_train},         {"tune", cmd_tune},       {"evaluate", cmd_evaluate},
        {"heuristic", cmd_heuristic}, {"robustness", cmd_robustness}, {"report", cmd_report}};
    fs::path dir, manifest;
    if (name == "synth" || name == "featurize" || name == "train" || name == "tune" || name == "heuristic") {
      const std::string& file = name == "heuristic" ? o.export_path : o.out;
      dir = parent_dir(file);
      manifest = dir / (fs::path(file).filename().string() + ".manifest.json");
    } else {
      dir = o.out_dir;
      manifest = dir / "manifest.json";
    }
    Run r(name, o, params, dir, manifest);
    handlers.at(name)(r);
    r.finish();
    out << "wrote " << r.manifest().outputs.size() << " files and " << manifest.generic_string() << '\n';
    return kExitOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace retain::cli
