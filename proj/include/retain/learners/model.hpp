#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "retain/featurize.hpp"
#include "retain/learners/forest.hpp"
#include "retain/learners/logistic.hpp"
#include "retain/learners/rule_tree.hpp"
#include "retain/learners/svm.hpp"

namespace retain {

// Always predicts the training majority; the score is the training
// retained fraction.
struct MajorityModel {
  std::vector<std::string> columns;
  double rate = 0.0;
};

struct Ensemble {
  LinearModel lr;
  KernelMachine svm;
  Forest rf;
};

using TrainedModel = std::variant<RuleTree, LinearModel, KernelMachine, Forest, Ensemble, MajorityModel>;

enum class Family { rule_tree, lr, svm, rf, ensemble, majority };

std::string to_string(Family f);
// Accepts tree, lr, svm, rf, ensemble and majority.
Family parse_family(std::string_view s);
Family family_of(const TrainedModel& m);

struct ModelSpec {
  Family family = Family::lr;
  RuleTreeParams tree;
  LogisticParams lr;
  // When set, the logistic model fits these terms (by column name) instead of
  // running the stepwise search.
  std::vector<std::pair<std::string, std::string>> lr_terms;
  bool lr_fixed_terms = false;
  SvmParams svm;
  ForestParams rf;

  // Canonical description used for caching and manifests.
  nlohmann::json to_json() const;
};

TrainedModel train_model(const Design& design, const ModelSpec& spec);

struct Predictions {
  std::vector<int> classes;
  std::vector<double> scores;
};

// Scores every row; class = score >= 0.5 except for the ensemble, whose
// class is the majority of its members' classes and whose score is the mean
// member score. Throws InputError when the design columns differ from the
// model's.
Predictions predict(const TrainedModel& model, const Design& design);

const std::vector<std::string>& model_columns(const TrainedModel& m);

// Envelope: {"family", "encoding", "parameters"}.
nlohmann::json save_model(const TrainedModel& model, const Encoder& encoder);
std::pair<TrainedModel, Encoder> load_model(const nlohmann::json& envelope);

// One hyperparameter setting. Fields not used by the family are ignored.
struct GridPoint {
  KernelKind kernel = KernelKind::rbf;
  double C = 1.0;
  double gamma = 0.01;
  std::size_t m_try = 0;
  std::size_t n_trees = 128;

  nlohmann::json to_json(Family family) const;
};

std::vector<GridPoint> default_svm_grid();
std::vector<GridPoint> default_forest_grid(std::size_t columns);

struct TuneResult {
  std::size_t best = 0;  // index into grid
  GridPoint point;
  std::vector<double> accuracy;  // per grid point
  std::size_t rows_used = 0;
};

// 10-fold CV accuracy of every grid point on a uniform subsample of at most
// `subsample` rows; the first grid point wins ties. SVM points are scored by
// the sign of the decision value.
TuneResult tune(const Design& design, Family family, const std::vector<GridPoint>& grid, std::size_t subsample = 10000,
                std::uint64_t seed = 1, std::size_t threads = 1, std::size_t folds = 10);

}  // namespace retain
