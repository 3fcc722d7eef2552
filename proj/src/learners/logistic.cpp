#include "retain/learners/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace retain {

using nlohmann::json;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kSeparationWeight = 50.0;
constexpr double kFallbackRidge = 1e-6;
constexpr double kSearchTolerance = 1e-6;

Eigen::Map<const RowMajor> view(const Matrix& m) { return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())}; }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double nll_of(const Eigen::VectorXd& eta, std::span<const int> y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += softplus(eta[i]) - (y[static_cast<std::size_t>(i)] == 1 ? eta[i] : 0.0);
  return s;
}

double penalty(const Eigen::VectorXd& w, double ridge) {
  return ridge > 0 ? 0.5 * ridge * w.tail(w.size() - 1).squaredNorm() : 0.0;
}

Eigen::MatrixXd hessian(const Eigen::Map<const RowMajor>& z, const Eigen::VectorXd& eta, double ridge) {
  Eigen::VectorXd s(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = sigmoid(eta[i]);
    s[i] = std::sqrt(p * (1.0 - p));
  }
  const RowMajor zs = z.array().colwise() * s.array();
  Eigen::MatrixXd h = zs.transpose() * zs;
  for (Eigen::Index j = 1; j < h.rows(); ++j) h(j, j) += ridge;
  return h;
}

double aic_of(std::size_t n_terms, double nll) { return 2.0 * static_cast<double>(n_terms + 1) + 2.0 * nll; }

// Design columns reused by the stepwise search.
class TermColumns {
 public:
  explicit TermColumns(const Matrix& x) : x_(x) {}

  Matrix build(std::span<const Term> terms) const {
    Matrix z(x_.rows(), terms.size() + 1);
    for (std::size_t r = 0; r < x_.rows(); ++r) {
      auto row = x_.row(r);
      z(r, 0) = 1.0;
      for (std::size_t k = 0; k < terms.size(); ++k) z(r, k + 1) = terms[k].value(row);
    }
    return z;
  }

 private:
  const Matrix& x_;
};

bool column_is_constant(const Matrix& x, std::size_t c) {
  if (x.rows() == 0) return true;
  const double first = x(0, c);
  for (std::size_t r = 1; r < x.rows(); ++r) {
    if (x(r, c) != first) return false;
  }
  return true;
}

}  // namespace

std::string term_name(const Term& t, std::span<const std::string> columns) {
  const std::string a = columns[static_cast<std::size_t>(t.a)];
  return t.is_interaction() ? a + ":" + columns[static_cast<std::size_t>(t.b)] : a;
}

double logistic_nll(const Matrix& z, std::span<const int> y, std::span<const double> w) {
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  return nll_of(view(z) * wv, y);
}

std::vector<double> logistic_gradient(const Matrix& z, std::span<const int> y, std::span<const double> w) {
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  const auto zv = view(z);
  Eigen::VectorXd eta = zv * wv;
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = sigmoid(eta[i]) - y[static_cast<std::size_t>(i)];
  const Eigen::VectorXd g = zv.transpose() * eta;
  return {g.data(), g.data() + g.size()};
}

LogisticFit newton_logistic(const Matrix& z, std::span<const int> y, std::span<const double> start,
                            const NewtonOptions& opt) {
  const auto zv = view(z);
  const Eigen::Index k = static_cast<Eigen::Index>(z.cols());
  const double n = static_cast<double>(std::max<std::size_t>(z.rows(), 1));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
  if (!start.empty()) {
    for (Eigen::Index j = 0; j < k && j < static_cast<Eigen::Index>(start.size()); ++j) w[j] = start[static_cast<std::size_t>(j)];
  }
  Eigen::VectorXd yv(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) yv[static_cast<Eigen::Index>(i)] = y[i];

  LogisticFit fit;
  Eigen::VectorXd eta = zv * w;
  double obj = nll_of(eta, y) + penalty(w, opt.ridge);
  fit.nll_trace.push_back(obj);
  for (fit.iterations = 0; fit.iterations < opt.max_iterations; ++fit.iterations) {
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = sigmoid(eta[i]) - yv[i];
    Eigen::VectorXd g = zv.transpose() * resid;
    if (opt.ridge > 0) g.tail(k - 1) += opt.ridge * w.tail(k - 1);
    if (g.norm() / n < opt.tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::MatrixXd h = hessian(zv, eta, opt.ridge);
    const double jitter = 1e-10 * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
    h.diagonal().array() += jitter;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    if (!step.allFinite()) break;

    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd w_new, eta_new;
    double obj_new = obj;
    for (int halvings = 0; halvings < 40; ++halvings, t *= 0.5) {
      w_new = w - t * step;
      eta_new = zv * w_new;
      obj_new = nll_of(eta_new, y) + penalty(w_new, opt.ridge);
      if (std::isfinite(obj_new) && obj_new <= obj) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no descent left at machine precision
    const bool stalled = obj - obj_new <= 1e-15 * std::max(1.0, obj) && t < 1.0;
    w = w_new;
    eta = eta_new;
    obj = obj_new;
    fit.nll_trace.push_back(obj);
    if (stalled) break;
  }
  fit.weights.assign(w.data(), w.data() + k);
  fit.nll = nll_of(eta, y);
  return fit;
}

double LinearModel::score(std::span<const double> row) const {
  double eta = weights[0];
  for (std::size_t k = 0; k < terms.size(); ++k) eta += weights[k + 1] * terms[k].value(row);
  return sigmoid(eta);
}

json LinearModel::to_json() const {
  json terms_j = json::array();
  for (const Term& t : terms) terms_j.push_back({{"name", term_name(t, columns)}, {"a", t.a}, {"b", t.b}});
  return {{"columns", columns},        {"terms", terms_j},
          {"weights", weights},        {"std_errors", std_errors},
          {"log_likelihood", log_likelihood}, {"aic", aic},
          {"separation_warning", separation_warning}, {"iterations", iterations}};
}

LinearModel LinearModel::from_json(const json& j) {
  LinearModel m;
  m.columns = j.at("columns").get<std::vector<std::string>>();
  for (const json& t : j.at("terms")) {
    Term term{t.at("a").get<int>(), t.at("b").get<int>()};
    const int limit = static_cast<int>(m.columns.size());
    if (term.a < 0 || term.a >= limit || term.b >= limit) throw InputError("logistic term references an unknown column");
    m.terms.push_back(term);
  }
  m.weights = j.at("weights").get<std::vector<double>>();
  m.std_errors = j.at("std_errors").get<std::vector<double>>();
  m.log_likelihood = j.at("log_likelihood").get<double>();
  m.aic = j.at("aic").get<double>();
  m.separation_warning = j.at("separation_warning").get<bool>();
  m.iterations = j.at("iterations").get<std::size_t>();
  if (m.weights.size() != m.terms.size() + 1) throw InputError("logistic weight count does not match its terms");
  return m;
}

std::vector<Term> main_effect_candidates(const Design& design) {
  std::vector<Term> out;
  std::string last_source;
  for (std::size_t c = 0; c < design.columns.size(); ++c) {
    const std::string& name = design.columns[c];
    const auto eq = name.find('=');
    if (eq != std::string::npos) {
      const std::string source = name.substr(0, eq);
      if (source != last_source) {
        last_source = source;
        continue;  // reference level
      }
    }
    if (column_is_constant(design.scaled, c)) continue;
    out.push_back({static_cast<int>(c), -1});
  }
  return out;
}

std::vector<Term> interaction_pool(const Design& design, std::span<const Term> mains, std::size_t top) {
  const TermColumns cols(design.scaled);
  std::vector<std::pair<double, Term>> ranked;
  for (const Term& t : mains) {
    const std::vector<Term> one{t};
    const LogisticFit f = newton_logistic(cols.build(one), design.labels, {}, {kSearchTolerance, 100, 0.0});
    ranked.push_back({aic_of(1, f.nll), t});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ranked.resize(std::min(top, ranked.size()));
  std::vector<Term> best;
  for (const auto& r : ranked) best.push_back(r.second);
  std::sort(best.begin(), best.end());
  std::vector<Term> pool;
  for (std::size_t i = 0; i < best.size(); ++i) {
    for (std::size_t j = i + 1; j < best.size(); ++j) pool.push_back({best[i].a, best[j].a});
  }
  return pool;
}

std::vector<Term> stepwise_terms(const Design& design, std::span<const Term> mains, std::span<const Term> pool,
                                 std::size_t max_steps, std::size_t threads) {
  const TermColumns cols(design.scaled);
  std::vector<Term> current;
  LogisticFit fit = newton_logistic(cols.build(current), design.labels, {}, {kSearchTolerance, 100, 0.0});
  double aic = aic_of(0, fit.nll);

  auto contains = [](const std::vector<Term>& ts, const Term& t) { return std::find(ts.begin(), ts.end(), t) != ts.end(); };
  auto has_main = [&](int c) { return contains(current, Term{c, -1}); };

  for (std::size_t step = 0; step < max_steps; ++step) {
    // Moves in a fixed order (adds of mains, adds of interactions, removals)
    // so that equal-AIC ties resolve deterministically.
    std::vector<std::vector<Term>> moves;
    std::vector<std::vector<double>> starts;
    for (const Term& t : mains) {
      if (contains(current, t)) continue;
      auto next = current;
      next.push_back(t);
      auto w = fit.weights;
      w.push_back(0.0);
      moves.push_back(std::move(next));
      starts.push_back(std::move(w));
    }
    for (const Term& t : pool) {
      if (contains(current, t) || !has_main(t.a) || !has_main(t.b)) continue;
      auto next = current;
      next.push_back(t);
      auto w = fit.weights;
      w.push_back(0.0);
      moves.push_back(std::move(next));
      starts.push_back(std::move(w));
    }
    for (std::size_t k = 0; k < current.size(); ++k) {
      const Term& t = current[k];
      if (!t.is_interaction()) {
        const bool needed = std::any_of(current.begin(), current.end(), [&](const Term& o) {
          return o.is_interaction() && (o.a == t.a || o.b == t.a);
        });
        if (needed) continue;
      }
      auto next = current;
      next.erase(next.begin() + static_cast<std::ptrdiff_t>(k));
      auto w = fit.weights;
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(k + 1));
      moves.push_back(std::move(next));
      starts.push_back(std::move(w));
    }
    if (moves.empty()) break;

    std::vector<LogisticFit> fits(moves.size());
    parallel_for(moves.size(), threads, [&](std::size_t i) {
      fits[i] = newton_logistic(cols.build(moves[i]), design.labels, starts[i], {kSearchTolerance, 100, 0.0});
    });
    std::size_t best = moves.size();
    double best_aic = aic;
    for (std::size_t i = 0; i < moves.size(); ++i) {
      const double a = aic_of(moves[i].size(), fits[i].nll);
      if (a < best_aic - 1e-9) {
        best_aic = a;
        best = i;
      }
    }
    if (best == moves.size()) break;
    current = std::move(moves[best]);
    fit = std::move(fits[best]);
    aic = best_aic;
  }
  return current;
}

LinearModel fit_logistic_terms(const Design& design, std::span<const Term> terms) {
  if (design.rows() == 0) throw InputError("cannot fit a logistic model on an empty dataset");
  const TermColumns cols(design.scaled);
  const Matrix z = cols.build(terms);
  const double n = static_cast<double>(design.rows());

  LinearModel m;
  m.columns = design.columns;
  m.terms.assign(terms.begin(), terms.end());
  LogisticFit fit = newton_logistic(z, design.labels, {});
  const double max_w = fit.weights.empty() ? 0.0 : std::abs(*std::max_element(fit.weights.begin(), fit.weights.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }));
  double ridge = 0.0;
  if (!fit.converged || max_w > kSeparationWeight || fit.nll / n < 1e-6) {
    ridge = kFallbackRidge;
    fit = newton_logistic(z, design.labels, {}, {1e-8, 500, ridge});
    m.separation_warning = true;
  }
  m.weights = fit.weights;
  m.iterations = fit.iterations;
  m.log_likelihood = -fit.nll;
  m.aic = aic_of(terms.size(), fit.nll);

  const auto zv = view(z);
  const Eigen::Map<const Eigen::VectorXd> wv(fit.weights.data(), static_cast<Eigen::Index>(fit.weights.size()));
  const Eigen::VectorXd eta = zv * wv;
  Eigen::MatrixXd h = hessian(zv, eta, ridge);
  const Eigen::MatrixXd inv = h.ldlt().solve(Eigen::MatrixXd::Identity(h.rows(), h.cols()));
  m.std_errors.resize(fit.weights.size());
  for (Eigen::Index j = 0; j < inv.rows(); ++j) {
    const double v = inv(j, j);
    m.std_errors[static_cast<std::size_t>(j)] = v > 0 && std::isfinite(v) ? std::sqrt(v) : std::numeric_limits<double>::infinity();
  }
  return m;
}

LinearModel train_logistic(const Design& design, const LogisticParams& params) {
  if (design.rows() == 0) throw InputError("cannot fit a logistic model on an empty dataset");
  std::vector<std::size_t> idx(design.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Design sample;
  const Design* search = &design;
  if (design.rows() > params.selection_rows) {
    Rng rng(params.seed);
    rng.shuffle(idx);
    idx.resize(params.selection_rows);
    std::sort(idx.begin(), idx.end());
    sample = design.select_rows(idx);
    search = &sample;
  }
  const std::vector<Term> mains = main_effect_candidates(*search);
  const std::vector<Term> pool = interaction_pool(*search, mains, params.pool_top);
  const std::vector<Term> terms = stepwise_terms(*search, mains, pool, params.max_steps, params.threads);
  return fit_logistic_terms(design, terms);
}

std::vector<Term> remap_terms(std::span<const Term> terms, std::span<const std::string> from,
                              std::span<const std::string> to) {
  auto find = [&](int c) -> int {
    const auto it = std::find(to.begin(), to.end(), from[static_cast<std::size_t>(c)]);
    return it == to.end() ? -1 : static_cast<int>(it - to.begin());
  };
  std::vector<Term> out;
  for (const Term& t : terms) {
    const int a = find(t.a);
    if (a < 0) continue;
    int b = -1;
    if (t.is_interaction()) {
      b = find(t.b);
      if (b < 0) continue;
    }
    out.push_back({a, b});
  }
  return out;
}

}  // namespace retain
