#include "retain/learners/model.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace retain {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

LinearModel train_lr(const Design& design, const ModelSpec& spec) {
  if (!spec.lr_fixed_terms) return train_logistic(design, spec.lr);
  std::vector<Term> terms;
  auto column = [&](const std::string& name) -> int {
    const auto it = std::find(design.columns.begin(), design.columns.end(), name);
    return it == design.columns.end() ? -1 : static_cast<int>(it - design.columns.begin());
  };
  for (const auto& [a, b] : spec.lr_terms) {
    const int ia = column(a);
    const int ib = b.empty() ? -1 : column(b);
    if (ia < 0 || (!b.empty() && ib < 0)) continue;  // level absent from this training split
    terms.push_back({ia, ib});
  }
  return fit_logistic_terms(design, terms);
}

void check_columns(const std::vector<std::string>& expected, const Design& design) {
  if (expected != design.columns) {
    throw InputError("column mismatch: model expects " + std::to_string(expected.size()) + " columns, data has " +
                     std::to_string(design.columns.size()) + " (or different names)");
  }
}

template <class M>
std::vector<double> row_scores(const M& m, const Matrix& x) {
  std::vector<double> s(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) s[r] = m.score(x.row(r));
  return s;
}

std::vector<double> scores_of(const TrainedModel& model, const Design& d) {
  return std::visit(overloaded{
                        [&](const RuleTree& m) { return row_scores(m, d.unscaled); },
                        [&](const LinearModel& m) { return row_scores(m, d.scaled); },
                        [&](const KernelMachine& m) { return row_scores(m, d.scaled); },
                        [&](const Forest& m) { return row_scores(m, d.unscaled); },
                        [&](const Ensemble&) -> std::vector<double> { throw Error("ensemble scored as a member"); },
                        [&](const MajorityModel& m) { return std::vector<double>(d.rows(), m.rate); },
                    },
                    model);
}

std::vector<std::size_t> fold_positions(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[order[k]] = k % folds;
  return fold;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::rule_tree: return "tree";
    case Family::lr: return "lr";
    case Family::svm: return "svm";
    case Family::rf: return "rf";
    case Family::ensemble: return "ensemble";
    case Family::majority: return "majority";
  }
  return "unknown";
}

Family parse_family(std::string_view s) {
  for (Family f : {Family::rule_tree, Family::lr, Family::svm, Family::rf, Family::ensemble, Family::majority}) {
    if (s == to_string(f)) return f;
  }
  throw InputError("unknown model family '" + std::string(s) + "' (expected tree, lr, svm, rf, ensemble or majority)");
}

Family family_of(const TrainedModel& m) {
  return std::visit(overloaded{
                        [](const RuleTree&) { return Family::rule_tree; },
                        [](const LinearModel&) { return Family::lr; },
                        [](const KernelMachine&) { return Family::svm; },
                        [](const Forest&) { return Family::rf; },
                        [](const Ensemble&) { return Family::ensemble; },
                        [](const MajorityModel&) { return Family::majority; },
                    },
                    m);
}

json ModelSpec::to_json() const {
  json j = {{"family", to_string(family)}};
  if (family == Family::rule_tree) {
    j["max_rules"] = tree.max_rules;
    j["min_leaf"] = tree.min_leaf;
  }
  if (family == Family::lr || family == Family::ensemble) {
    if (lr_fixed_terms) {
      json terms = json::array();
      for (const auto& [a, b] : lr_terms) terms.push_back(b.empty() ? a : a + ":" + b);
      j["lr_terms"] = terms;
    } else {
      j["lr"] = {{"max_steps", lr.max_steps}, {"pool_top", lr.pool_top}, {"selection_rows", lr.selection_rows},
                 {"seed", lr.seed}};
    }
  }
  if (family == Family::svm || family == Family::ensemble) {
    j["svm"] = {{"kernel", to_string(svm.kernel)}, {"C", svm.C},
                {"gamma", svm.gamma},             {"tolerance", svm.tolerance},
                {"max_train_rows", svm.max_train_rows}, {"calibrate", svm.calibrate},
                {"seed", svm.seed}};
  }
  if (family == Family::rf || family == Family::ensemble) {
    j["rf"] = {{"n_trees", rf.n_trees}, {"m_try", rf.m_try}, {"bootstrap", rf.bootstrap}, {"seed", rf.seed}};
  }
  return j;
}

TrainedModel train_model(const Design& design, const ModelSpec& spec) {
  if (design.rows() == 0) throw InputError("cannot train on an empty dataset");
  switch (spec.family) {
    case Family::rule_tree: return train_rule_tree(design, spec.tree);
    case Family::lr: return train_lr(design, spec);
    case Family::svm: return train_svm(design, spec.svm);
    case Family::rf: return train_forest(design, spec.rf);
    case Family::ensemble: return Ensemble{train_lr(design, spec), train_svm(design, spec.svm), train_forest(design, spec.rf)};
    case Family::majority: {
      MajorityModel m;
      m.columns = design.columns;
      std::size_t pos = 0, n = 0;
      for (int y : design.labels) {
        if (y < 0) continue;
        ++n;
        pos += y == 1 ? 1 : 0;
      }
      m.rate = n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;
      return m;
    }
  }
  throw Error("unhandled model family");
}

const std::vector<std::string>& model_columns(const TrainedModel& m) {
  return std::visit(overloaded{
                        [](const Ensemble& e) -> const std::vector<std::string>& { return e.lr.columns; },
                        [](const auto& x) -> const std::vector<std::string>& { return x.columns; },
                    },
                    m);
}

Predictions predict(const TrainedModel& model, const Design& design) {
  check_columns(model_columns(model), design);
  Predictions p;
  const std::size_t n = design.rows();
  p.classes.resize(n);
  if (const auto* e = std::get_if<Ensemble>(&model)) {
    const auto a = row_scores(e->lr, design.scaled);
    const auto b = row_scores(e->svm, design.scaled);
    const auto c = row_scores(e->rf, design.unscaled);
    p.scores.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const int votes = (a[r] >= 0.5) + (b[r] >= 0.5) + (c[r] >= 0.5);
      p.classes[r] = votes >= 2 ? 1 : 0;
      p.scores[r] = (a[r] + b[r] + c[r]) / 3.0;
    }
    return p;
  }
  p.scores = scores_of(model, design);
  for (std::size_t r = 0; r < n; ++r) p.classes[r] = p.scores[r] >= 0.5 ? 1 : 0;
  return p;
}

namespace {

json model_parameters(const TrainedModel& model) {
  return std::visit(overloaded{
                        [](const RuleTree& m) { return json{{"tree", m.to_json()}, {"rules", export_rules(m)}}; },
                        [](const LinearModel& m) { return m.to_json(); },
                        [](const KernelMachine& m) { return m.to_json(); },
                        [](const Forest& m) { return m.to_json(); },
                        [](const Ensemble& m) {
                          return json{{"lr", m.lr.to_json()}, {"svm", m.svm.to_json()}, {"rf", m.rf.to_json()}};
                        },
                        [](const MajorityModel& m) { return json{{"columns", m.columns}, {"rate", m.rate}}; },
                    },
                    model);
}

}  // namespace

json save_model(const TrainedModel& model, const Encoder& encoder) {
  check_columns(model_columns(model), Design{encoder.column_names(), {}, {}, {}});
  return {{"family", to_string(family_of(model))}, {"encoding", encoder.to_json()}, {"parameters", model_parameters(model)}};
}

std::pair<TrainedModel, Encoder> load_model(const json& env) {
  try {
    const Family family = parse_family(env.at("family").get<std::string>());
    Encoder enc = Encoder::from_json(env.at("encoding"));
    const json& p = env.at("parameters");
    TrainedModel m;
    switch (family) {
      case Family::rule_tree: m = RuleTree::from_json(p.at("tree")); break;
      case Family::lr: m = LinearModel::from_json(p); break;
      case Family::svm: m = KernelMachine::from_json(p); break;
      case Family::rf: m = Forest::from_json(p); break;
      case Family::ensemble:
        m = Ensemble{LinearModel::from_json(p.at("lr")), KernelMachine::from_json(p.at("svm")), Forest::from_json(p.at("rf"))};
        break;
      case Family::majority: m = MajorityModel{p.at("columns").get<std::vector<std::string>>(), p.at("rate").get<double>()}; break;
    }
    check_columns(model_columns(m), Design{enc.column_names(), {}, {}, {}});
    return {std::move(m), std::move(enc)};
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

json GridPoint::to_json(Family family) const {
  if (family == Family::svm) {
    json j = {{"kernel", to_string(kernel)}, {"C", C}};
    if (kernel == KernelKind::rbf) j["gamma"] = gamma;
    return j;
  }
  return {{"m_try", m_try}, {"n_trees", n_trees}};
}

std::vector<GridPoint> default_svm_grid() {
  std::vector<GridPoint> grid;
  for (double c : {0.1, 1.0, 10.0, 100.0}) {
    GridPoint g;
    g.kernel = KernelKind::linear;
    g.C = c;
    grid.push_back(g);
  }
  for (double c : {0.1, 1.0, 10.0, 100.0}) {
    for (double gamma : {0.001, 0.01, 0.1, 1.0}) {
      GridPoint g;
      g.kernel = KernelKind::rbf;
      g.C = c;
      g.gamma = gamma;
      grid.push_back(g);
    }
  }
  return grid;
}

std::vector<GridPoint> default_forest_grid(std::size_t columns) {
  std::vector<std::size_t> tries;
  for (std::size_t m : {default_m_try(columns), columns / 3, columns / 2}) {
    m = std::max<std::size_t>(1, m);
    if (std::find(tries.begin(), tries.end(), m) == tries.end()) tries.push_back(m);
  }
  std::vector<GridPoint> grid;
  for (std::size_t m : tries) {
    for (std::size_t t : {128u, 256u, 512u}) {
      GridPoint g;
      g.m_try = m;
      g.n_trees = t;
      grid.push_back(g);
    }
  }
  return grid;
}

TuneResult tune(const Design& design, Family family, const std::vector<GridPoint>& grid, std::size_t subsample,
                std::uint64_t seed, std::size_t threads, std::size_t folds) {
  if (grid.empty()) throw InputError("tuning grid is empty");
  if (family != Family::svm && family != Family::rf) throw InputError("tuning supports the svm and rf families only");
  if (folds < 2) throw InputError("tuning needs at least 2 folds");

  std::vector<std::size_t> idx(design.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  if (idx.size() > subsample) {
    rng.shuffle(idx);
    idx.resize(subsample);
    std::sort(idx.begin(), idx.end());
  }
  if (idx.size() < folds) throw InputError("too few rows to tune with " + std::to_string(folds) + " folds");
  const Design data = design.select_rows(idx);
  const std::vector<std::size_t> fold = fold_positions(data.rows(), folds, mix_seed(seed, 1));

  std::vector<Design> train(folds), test(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < data.rows(); ++i) (fold[i] == f ? te : tr).push_back(i);
    train[f] = data.select_rows(tr);
    test[f] = data.select_rows(te);
  }

  TuneResult result;
  result.rows_used = data.rows();
  result.accuracy.assign(grid.size(), 0.0);
  std::vector<std::vector<std::size_t>> correct(grid.size(), std::vector<std::size_t>(folds, 0));

  if (family == Family::svm) {
    parallel_for(grid.size() * folds, threads, [&](std::size_t job) {
      const std::size_t g = job / folds, f = job % folds;
      SvmParams p;
      p.kernel = grid[g].kernel;
      p.C = grid[g].C;
      p.gamma = grid[g].gamma;
      p.calibrate = false;
      p.seed = mix_seed(seed, 2);
      const KernelMachine m = train_svm(train[f], p);
      for (std::size_t r = 0; r < test[f].rows(); ++r) {
        const int cls = m.decision(test[f].scaled.row(r)) >= 0 ? 1 : 0;
        correct[g][f] += cls == test[f].labels[r] ? 1 : 0;
      }
    });
  } else {
    // Forests with equal m_try share their tree prefix, so only the largest
    // is grown and smaller ones are scored on its first trees.
    std::map<std::size_t, std::size_t> largest;
    for (const GridPoint& g : grid) {
      if (g.m_try < 1 || g.m_try > design.columns.size()) throw InputError("m_try out of range in tuning grid");
      largest[g.m_try] = std::max(largest[g.m_try], g.n_trees);
    }
    std::vector<std::size_t> tries;
    for (const auto& [m, _] : largest) tries.push_back(m);
    parallel_for(tries.size() * folds, threads, [&](std::size_t job) {
      const std::size_t m = tries[job / folds], f = job % folds;
      ForestParams p;
      p.m_try = m;
      p.n_trees = largest.at(m);
      p.seed = mix_seed(seed, 3);
      const Forest forest = train_forest(train[f], p);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g].m_try != m) continue;
        for (std::size_t r = 0; r < test[f].rows(); ++r) {
          const int cls = forest.score(test[f].unscaled.row(r), grid[g].n_trees) >= 0.5 ? 1 : 0;
          correct[g][f] += cls == test[f].labels[r] ? 1 : 0;
        }
      }
    });
  }

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const std::size_t total = std::accumulate(correct[g].begin(), correct[g].end(), std::size_t{0});
    result.accuracy[g] = static_cast<double>(total) / static_cast<double>(data.rows());
    if (result.accuracy[g] > result.accuracy[result.best]) result.best = g;
  }
  result.point = grid[result.best];
  return result;
}

}  // namespace retain
