#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "retain/common.hpp"
#include "retain/featurize.hpp"

namespace retain {

enum class KernelKind { linear, rbf };

std::string to_string(KernelKind k);
KernelKind parse_kernel(std::string_view s);

struct SvmParams {
  KernelKind kernel = KernelKind::rbf;
  double C = 1.0;
  double gamma = 0.01;
  double tolerance = 1e-3;  // KKT gap
  std::size_t max_iterations = 10'000'000;
  // Rows beyond this are dropped by a seeded subsample; the solver keeps the
  // full kernel matrix in memory.
  std::size_t max_train_rows = 3000;
  bool calibrate = true;  // sigmoid fit on 3-fold out-of-sample decision values
  std::uint64_t seed = 1;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t cap) : Error(what), cap_(cap) {}
  std::size_t cap() const { return cap_; }

 private:
  std::size_t cap_;
};

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b);
Matrix kernel_matrix(const Matrix& x, KernelKind kind, double gamma);

// Dual of the soft-margin problem over y in {-1,+1}:
//   max  sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
//   s.t. 0 <= alpha_i <= C,  sum_i y_i alpha_i = 0.
struct SmoResult {
  std::vector<double> alpha;
  double bias = 0.0;  // decision = sum_i y_i alpha_i K(x_i, x) + bias
  std::size_t iterations = 0;
};

// SMO with second-order working-set selection. Throws ConvergenceError when
// the KKT gap is still above `tolerance` after max_iterations.
SmoResult smo_solve(const Matrix& k, std::span<const int> signs, double C, double tolerance,
                    std::size_t max_iterations);

double dual_objective(const Matrix& k, std::span<const int> signs, std::span<const double> alpha);

// Sigmoid P(y=1|f) = 1 / (1 + exp(A f + B)) fit by Newton's method with
// regularized targets.
struct Sigmoid {
  double a = 0.0;
  double b = 0.0;
  double operator()(double f) const;
};

Sigmoid fit_sigmoid(std::span<const double> decisions, std::span<const int> labels);

struct KernelMachine {
  std::vector<std::string> columns;
  KernelKind kernel = KernelKind::rbf;
  double C = 1.0;
  double gamma = 0.01;
  Matrix support_vectors;
  std::vector<double> coefficients;  // y_i * alpha_i, each within [-C, C]
  double bias = 0.0;
  Sigmoid calibration;
  bool calibrated = false;
  bool constant = false;  // single-class training data
  double constant_score = 0.0;

  double decision(std::span<const double> scaled_row) const;
  // Calibrated probability; without calibration, 1 or 0 by decision sign.
  double score(std::span<const double> scaled_row) const;

  nlohmann::json to_json() const;
  static KernelMachine from_json(const nlohmann::json& j);
};

KernelMachine train_svm(const Design& design, const SvmParams& params = {});

}  // namespace retain
