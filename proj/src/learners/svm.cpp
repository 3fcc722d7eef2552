#include "retain/learners/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace retain {

using nlohmann::json;

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

// LIBSVM-style solver state for the minimization form
//   f(alpha) = 1/2 alpha' Q alpha - e' alpha,  Q_ij = y_i y_j K_ij.
class Solver {
 public:
  Solver(const Matrix& k, std::span<const int> y, double c) : k_(k), y_(y), c_(c), n_(y.size()) {
    alpha_.assign(n_, 0.0);
    grad_.assign(n_, -1.0);
  }

  SmoResult run(double eps, std::size_t max_iter) {
    SmoResult res;
    std::size_t iter = 0;
    for (;; ++iter) {
      std::size_t i = 0, j = 0;
      if (!select(eps, i, j)) break;
      if (iter >= max_iter) {
        throw ConvergenceError("SMO did not reach the KKT tolerance within " + std::to_string(max_iter) + " iterations",
                               max_iter);
      }
      update(i, j);
    }
    res.alpha = alpha_;
    res.bias = -rho();
    res.iterations = iter;
    return res;
  }

 private:
  bool upper(std::size_t t) const { return alpha_[t] >= c_; }
  bool lower(std::size_t t) const { return alpha_[t] <= 0.0; }
  double q(std::size_t a, std::size_t b) const { return y_[a] * y_[b] * k_(a, b); }

  bool select(double eps, std::size_t& out_i, std::size_t& out_j) const {
    double gmax = -kInf, gmax2 = -kInf;
    std::ptrdiff_t gmax_idx = -1, gmin_idx = -1;
    double obj_diff_min = kInf;
    for (std::size_t t = 0; t < n_; ++t) {
      if (y_[t] == 1) {
        if (!upper(t) && -grad_[t] >= gmax) {
          gmax = -grad_[t];
          gmax_idx = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && grad_[t] >= gmax) {
        gmax = grad_[t];
        gmax_idx = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (gmax_idx < 0) return false;
    const std::size_t i = static_cast<std::size_t>(gmax_idx);
    const double kii = k_(i, i);
    for (std::size_t t = 0; t < n_; ++t) {
      if (y_[t] == 1) {
        if (lower(t)) continue;
        const double grad_diff = gmax + grad_[t];
        if (grad_[t] >= gmax2) gmax2 = grad_[t];
        if (grad_diff > 0) {
          double quad = kii + k_(t, t) - 2.0 * y_[i] * q(i, t);
          if (quad <= 0) quad = kTau;
          const double obj_diff = -(grad_diff * grad_diff) / quad;
          if (obj_diff <= obj_diff_min) {
            gmin_idx = static_cast<std::ptrdiff_t>(t);
            obj_diff_min = obj_diff;
          }
        }
      } else {
        if (upper(t)) continue;
        const double grad_diff = gmax - grad_[t];
        if (-grad_[t] >= gmax2) gmax2 = -grad_[t];
        if (grad_diff > 0) {
          double quad = kii + k_(t, t) + 2.0 * y_[i] * q(i, t);
          if (quad <= 0) quad = kTau;
          const double obj_diff = -(grad_diff * grad_diff) / quad;
          if (obj_diff <= obj_diff_min) {
            gmin_idx = static_cast<std::ptrdiff_t>(t);
            obj_diff_min = obj_diff;
          }
        }
      }
    }
    if (gmax + gmax2 < eps || gmin_idx < 0) return false;
    out_i = i;
    out_j = static_cast<std::size_t>(gmin_idx);
    return true;
  }

  void update(std::size_t i, std::size_t j) {
    const double old_i = alpha_[i], old_j = alpha_[j];
    const double qij = q(i, j);
    double& ai = alpha_[i];
    double& aj = alpha_[j];
    if (y_[i] != y_[j]) {
      double quad = k_(i, i) + k_(j, j) + 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-grad_[i] - grad_[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0) {
        if (aj < 0) {
          aj = 0;
          ai = diff;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = -diff;
      }
      if (diff > 0) {
        if (ai > c_) {
          ai = c_;
          aj = c_ - diff;
        }
      } else if (aj > c_) {
        aj = c_;
        ai = c_ + diff;
      }
    } else {
      double quad = k_(i, i) + k_(j, j) - 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (grad_[i] - grad_[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c_) {
        if (ai > c_) {
          ai = c_;
          aj = sum - c_;
        }
      } else if (aj < 0) {
        aj = 0;
        ai = sum;
      }
      if (sum > c_) {
        if (aj > c_) {
          aj = c_;
          ai = sum - c_;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = sum;
      }
    }
    const double di = ai - old_i, dj = aj - old_j;
    for (std::size_t t = 0; t < n_; ++t) grad_[t] += q(i, t) * di + q(j, t) * dj;
  }

  double rho() const {
    double ub = kInf, lb = -kInf, sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n_; ++t) {
      const double yg = y_[t] * grad_[t];
      if (upper(t)) {
        if (y_[t] == -1) {
          ub = std::min(ub, yg);
        } else {
          lb = std::max(lb, yg);
        }
      } else if (lower(t)) {
        if (y_[t] == 1) {
          ub = std::min(ub, yg);
        } else {
          lb = std::max(lb, yg);
        }
      } else {
        ++n_free;
        sum_free += yg;
      }
    }
    return n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  }

  const Matrix& k_;
  std::span<const int> y_;
  double c_;
  std::size_t n_;
  std::vector<double> alpha_;
  std::vector<double> grad_;
};

struct RawSvm {
  std::vector<std::size_t> support;  // row indices into the training matrix
  std::vector<double> coefficients;
  double bias = 0.0;
  bool constant = false;
  double constant_score = 0.0;
};

RawSvm solve_rows(const Matrix& x, std::span<const int> labels, const SvmParams& p) {
  RawSvm out;
  const std::size_t n = x.rows();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0 || pos == n) {
    out.constant = true;
    out.constant_score = pos == n ? 1.0 : 0.0;
    return out;
  }
  std::vector<int> signs(n);
  for (std::size_t i = 0; i < n; ++i) signs[i] = labels[i] == 1 ? 1 : -1;
  const Matrix k = kernel_matrix(x, p.kernel, p.gamma);
  const SmoResult r = smo_solve(k, signs, p.C, p.tolerance, p.max_iterations);
  for (std::size_t i = 0; i < n; ++i) {
    if (r.alpha[i] > 0) {
      out.support.push_back(i);
      out.coefficients.push_back(signs[i] * r.alpha[i]);
    }
  }
  out.bias = r.bias;
  return out;
}

double raw_decision(const RawSvm& m, const Matrix& train, const SvmParams& p, std::span<const double> row) {
  if (m.constant) return m.constant_score > 0.5 ? 1.0 : -1.0;
  double f = m.bias;
  for (std::size_t k = 0; k < m.support.size(); ++k) {
    f += m.coefficients[k] * kernel_value(p.kernel, p.gamma, train.row(m.support[k]), row);
  }
  return f;
}

}  // namespace

std::string to_string(KernelKind k) { return k == KernelKind::linear ? "linear" : "rbf"; }

KernelKind parse_kernel(std::string_view s) {
  if (s == "linear") return KernelKind::linear;
  if (s == "rbf") return KernelKind::rbf;
  throw InputError("unknown kernel '" + std::string(s) + "' (expected linear or rbf)");
}

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  if (kind == KernelKind::linear) {
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::exp(-gamma * s);
}

Matrix kernel_matrix(const Matrix& x, KernelKind kind, double gamma) {
  const std::size_t n = x.rows();
  Matrix k(n, n);
  const auto xv = view(x);
  const Eigen::MatrixXd gram = xv * xv.transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      if (kind == KernelKind::linear) {
        k(i, j) = gram(ii, jj);
      } else {
        const double d2 = std::max(0.0, gram(ii, ii) + gram(jj, jj) - 2.0 * gram(ii, jj));
        k(i, j) = std::exp(-gamma * d2);
      }
    }
  }
  return k;
}

SmoResult smo_solve(const Matrix& k, std::span<const int> signs, double C, double tolerance,
                    std::size_t max_iterations) {
  if (!(C > 0)) throw InputError("SVM cost C must be positive");
  if (k.rows() != signs.size() || k.cols() != signs.size()) throw InputError("kernel matrix does not match labels");
  for (int s : signs) {
    if (s != 1 && s != -1) throw InputError("SMO labels must be -1 or +1");
  }
  return Solver(k, signs, C).run(tolerance, max_iterations);
}

double dual_objective(const Matrix& k, std::span<const int> signs, std::span<const double> alpha) {
  double linear = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    linear += alpha[i];
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < alpha.size(); ++j) quad += alpha[i] * alpha[j] * signs[i] * signs[j] * k(i, j);
  }
  return linear - 0.5 * quad;
}

double Sigmoid::operator()(double f) const {
  const double z = a * f + b;
  return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

Sigmoid fit_sigmoid(std::span<const double> dec, std::span<const int> labels) {
  const std::size_t n = dec.size();
  const double prior1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double prior0 = static_cast<double>(n) - prior1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] == 1 ? hi : lo;

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * a + b;
      f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  Sigmoid s{0.0, std::log((prior0 + 1.0) / (prior1 + 1.0))};
  double fval = objective(s.a, s.b);
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * s.a + s.b;
      double p, q;
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= 1e-10) {
      const double na = s.a + step * da, nb = s.b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        s = {na, nb};
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < 1e-10) break;
  }
  return s;
}

double KernelMachine::decision(std::span<const double> row) const {
  if (constant) return constant_score > 0.5 ? 1.0 : -1.0;
  double f = bias;
  for (std::size_t k = 0; k < coefficients.size(); ++k) {
    f += coefficients[k] * kernel_value(kernel, gamma, support_vectors.row(k), row);
  }
  return f;
}

double KernelMachine::score(std::span<const double> row) const {
  if (constant) return constant_score;
  const double f = decision(row);
  if (calibrated) return calibration(f);
  return f >= 0 ? 1.0 : 0.0;
}

json KernelMachine::to_json() const {
  std::vector<std::vector<double>> svs;
  for (std::size_t r = 0; r < support_vectors.rows(); ++r) {
    auto row = support_vectors.row(r);
    svs.emplace_back(row.begin(), row.end());
  }
  return {{"columns", columns},
          {"kernel", to_string(kernel)},
          {"C", C},
          {"gamma", gamma},
          {"support_vectors", svs},
          {"coefficients", coefficients},
          {"bias", bias},
          {"calibrated", calibrated},
          {"sigmoid", {calibration.a, calibration.b}},
          {"constant", constant},
          {"constant_score", constant_score}};
}

KernelMachine KernelMachine::from_json(const json& j) {
  KernelMachine m;
  m.columns = j.at("columns").get<std::vector<std::string>>();
  m.kernel = parse_kernel(j.at("kernel").get<std::string>());
  m.C = j.at("C").get<double>();
  m.gamma = j.at("gamma").get<double>();
  const auto svs = j.at("support_vectors").get<std::vector<std::vector<double>>>();
  m.support_vectors = Matrix(svs.size(), m.columns.size());
  for (std::size_t r = 0; r < svs.size(); ++r) {
    if (svs[r].size() != m.columns.size()) throw InputError("support vector width does not match the columns");
    std::copy(svs[r].begin(), svs[r].end(), m.support_vectors.row(r).begin());
  }
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  if (m.coefficients.size() != svs.size()) throw InputError("support vector count does not match coefficients");
  m.bias = j.at("bias").get<double>();
  m.calibrated = j.at("calibrated").get<bool>();
  const auto sig = j.at("sigmoid").get<std::vector<double>>();
  if (sig.size() != 2) throw InputError("sigmoid needs two parameters");
  m.calibration = {sig[0], sig[1]};
  m.constant = j.at("constant").get<bool>();
  m.constant_score = j.at("constant_score").get<double>();
  return m;
}

KernelMachine train_svm(const Design& design, const SvmParams& p) {
  if (design.rows() == 0) throw InputError("cannot train an SVM on an empty dataset");
  if (!(p.C > 0)) throw InputError("SVM cost C must be positive");
  if (p.kernel == KernelKind::rbf && !(p.gamma > 0)) throw InputError("rbf gamma must be positive");

  Rng rng(p.seed);
  std::vector<std::size_t> idx(design.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() > p.max_train_rows) {
    rng.shuffle(idx);
    idx.resize(p.max_train_rows);
    std::sort(idx.begin(), idx.end());
  }
  const Matrix x = design.scaled.select_rows(idx);
  std::vector<int> y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) y[i] = design.labels[idx[i]];

  KernelMachine m;
  m.columns = design.columns;
  m.kernel = p.kernel;
  m.C = p.C;
  m.gamma = p.gamma;
  const RawSvm raw = solve_rows(x, y, p);
  if (raw.constant) {
    m.constant = true;
    m.constant_score = raw.constant_score;
    m.support_vectors = Matrix(0, design.columns.size());
    return m;
  }
  m.support_vectors = x.select_rows(raw.support);
  m.coefficients = raw.coefficients;
  m.bias = raw.bias;

  if (p.calibrate) {
    // Out-of-sample decision values from a 3-fold split of the training rows.
    std::vector<std::size_t> order(idx.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng fold_rng(mix_seed(p.seed, 1));
    fold_rng.shuffle(order);
    std::vector<int> fold(idx.size());
    for (std::size_t k = 0; k < order.size(); ++k) fold[order[k]] = static_cast<int>(k % 3);
    std::vector<double> dec(idx.size());
    for (int f = 0; f < 3; ++f) {
      std::vector<std::size_t> train_rows, test_rows;
      for (std::size_t i = 0; i < idx.size(); ++i) (fold[i] == f ? test_rows : train_rows).push_back(i);
      if (train_rows.empty() || test_rows.empty()) continue;
      const Matrix xt = x.select_rows(train_rows);
      std::vector<int> yt(train_rows.size());
      for (std::size_t i = 0; i < train_rows.size(); ++i) yt[i] = y[train_rows[i]];
      const RawSvm part = solve_rows(xt, yt, p);
      for (std::size_t i : test_rows) dec[i] = raw_decision(part, xt, p, x.row(i));
    }
    m.calibration = fit_sigmoid(dec, y);
    m.calibrated = true;
  }
  return m;
}

}  // namespace retain
