// Copyright 2026 The kvevict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Regularised softmax regression with an exponential-mass penalty:
//
//   u = exp(Ax), alpha = <u, 1>, f = u / alpha, c = f - b
//   L(x) = 0.5 |c|^2 + lambda * alpha + 0.5 |diag(w) A x|^2
//
// with its analytic gradient and Hessian, conditioning checks and a Newton
// solver using the exact Hessian.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kvevict/error.hpp"
#include "kvevict/random.hpp"

namespace kvevict {

struct RegressionProblem {
  Eigen::MatrixXd A;  // n x d
  Eigen::VectorXd b;  // n, non-negative, |b|_1 <= 1
  Eigen::VectorXd w;  // n, positive
  double l = 1.0;
  double R = 1.0;  // |A|_2 <= R
  double sparse_weight = 1.0;  // lambda

  std::size_t rows() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(A.cols()); }

  void validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorCode::kInvalidProblem, msg); };
    if (A.rows() == 0 || A.cols() == 0) bad("A must be non-empty");
    if (b.size() != A.rows() || w.size() != A.rows()) bad("b and w must have one entry per row of A");
    if (!A.allFinite() || !b.allFinite() || !w.allFinite()) bad("non-finite problem data");
    if ((b.array() < 0.0).any()) bad("b must be non-negative");
    if (b.sum() > 1.0 + 1e-12) bad("|b|_1 must not exceed 1");
    if ((w.array() <= 0.0).any()) bad("w must be positive");
    if (!(l > 0.0)) bad("l must be positive");
    if (!(sparse_weight >= 0.0) || !std::isfinite(sparse_weight)) bad("sparse weight must be >= 0");
    const double norm = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues()(0);
    if (norm > R * (1.0 + 1e-12)) bad("|A|_2 exceeds R");
  }
};

struct LossTerms {
  double exp = 0.0;
  double sparse = 0.0;  // lambda * alpha
  double reg = 0.0;
  double total = 0.0;
};

// Quantities shared by the loss and its derivatives.
struct SoftmaxState {
  Eigen::VectorXd ax;
  Eigen::VectorXd u;
  Eigen::VectorXd f;
  Eigen::VectorXd c;
  double log_alpha = 0.0;
  double alpha = 0.0;
};

inline SoftmaxState softmax_state(const RegressionProblem& p, const Eigen::VectorXd& x) {
  if (x.size() != p.A.cols()) fail(ErrorCode::kDimensionMismatch, "x must have length d");
  if (!x.allFinite()) fail(ErrorCode::kNonFinite, "x has non-finite entries");
  SoftmaxState s;
  s.ax = p.A * x;
  const double m = s.ax.maxCoeff();
  s.log_alpha = m + std::log((s.ax.array() - m).exp().sum());
  if (!std::isfinite(s.log_alpha) || s.log_alpha > std::log(std::numeric_limits<double>::max())) {
    fail(ErrorCode::kNonFinite, "exponential mass overflows (log alpha = " + std::to_string(s.log_alpha) + ")");
  }
  s.alpha = std::exp(s.log_alpha);
  s.u = s.ax.array().exp();
  s.f = (s.ax.array() - s.log_alpha).exp();
  s.c = s.f - p.b;
  return s;
}

inline LossTerms loss(const RegressionProblem& p, const Eigen::VectorXd& x) {
  const SoftmaxState s = softmax_state(p, x);
  LossTerms t;
  t.exp = 0.5 * s.c.squaredNorm();
  t.sparse = p.sparse_weight * s.alpha;
  t.reg = 0.5 * p.w.cwiseProduct(s.ax).squaredNorm();
  t.total = t.exp + t.sparse + t.reg;
  if (!std::isfinite(t.total)) fail(ErrorCode::kNonFinite, "loss is not finite");
  return t;
}

// A^T (f o c - f <c, f>)
inline Eigen::VectorXd gradient_exp(const RegressionProblem& p, const SoftmaxState& s) {
  return p.A.transpose() * (s.f.cwiseProduct(s.c) - s.f * s.c.dot(s.f));
}

// lambda A^T u
inline Eigen::VectorXd gradient_sparse(const RegressionProblem& p, const SoftmaxState& s) {
  return p.sparse_weight * (p.A.transpose() * s.u);
}

// A^T W^2 A x
inline Eigen::VectorXd gradient_reg(const RegressionProblem& p, const SoftmaxState& s) {
  return p.A.transpose() * p.w.array().square().matrix().cwiseProduct(s.ax);
}

inline Eigen::VectorXd gradient(const RegressionProblem& p, const Eigen::VectorXd& x) {
  const SoftmaxState s = softmax_state(p, x);
  Eigen::VectorXd g = gradient_exp(p, s) + gradient_sparse(p, s) + gradient_reg(p, s);
  if (!g.allFinite()) fail(ErrorCode::kNonFinite, "gradient is not finite");
  return g;
}

// The n x n middle factors B, with Hessian = A^T (B + W^2) A.

// (diag f - f f^T)^2: the Gauss-Newton part of the L_exp Hessian.
inline Eigen::MatrixXd b_exp_gauss_newton(const SoftmaxState& s) {
  const Eigen::MatrixXd P = Eigen::MatrixXd(s.f.asDiagonal()) - s.f * s.f.transpose();
  return P * P;
}

// sum_k c_k d^2 f_k / dz^2:
//   diag(c o f) - (c o f) f^T - f (c o f)^T + <c, f> f f^T - <c, f> (diag f - f f^T)
inline Eigen::MatrixXd b_exp_curvature(const SoftmaxState& s) {
  const Eigen::VectorXd cf = s.c.cwiseProduct(s.f);
  const double dot = s.c.dot(s.f);
  const Eigen::MatrixXd ff = s.f * s.f.transpose();
  Eigen::MatrixXd B = Eigen::MatrixXd(cf.asDiagonal()) - cf * s.f.transpose() - s.f * cf.transpose() + dot * ff;
  B -= dot * (Eigen::MatrixXd(s.f.asDiagonal()) - ff);
  return B;
}

// lambda diag(u)
inline Eigen::MatrixXd b_sparse(const RegressionProblem& p, const SoftmaxState& s) {
  return Eigen::MatrixXd((p.sparse_weight * s.u).asDiagonal());
}

inline Eigen::MatrixXd hessian(const RegressionProblem& p, const Eigen::VectorXd& x) {
  const SoftmaxState s = softmax_state(p, x);
  Eigen::MatrixXd B = b_exp_gauss_newton(s) + b_exp_curvature(s) + b_sparse(p, s);
  B.diagonal() += p.w.array().square().matrix();
  Eigen::MatrixXd H = p.A.transpose() * B * p.A;
  H = 0.5 * (H + H.transpose()).eval();
  if (!H.allFinite()) fail(ErrorCode::kNonFinite, "Hessian is not finite");
  return H;
}

inline double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(symmetric, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

inline double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

inline double sigma_min(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  return sv(sv.size() - 1);
}

// Smallest w_i^2 for which the Hessian is guaranteed to dominate l I:
// 200 exp(R^2) + l / sigma_min(A)^2.
inline double pd_weight_threshold(const RegressionProblem& p) {
  const double s = sigma_min(p.A);
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return 200.0 * std::exp(p.R * p.R) + p.l / (s * s);
}

inline bool pd_condition_holds(const RegressionProblem& p) {
  return p.w.array().square().minCoeff() >= pd_weight_threshold(p);
}

// Weaker threshold 20 + l / sigma_min(A)^2, enough for H >= l I on its own.
inline double basic_pd_weight_threshold(const RegressionProblem& p) {
  const double s = sigma_min(p.A);
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 + p.l / (s * s);
}

// Generalised eigenvalues of W^2 against B(x) + W^2. Above the strong
// threshold they lie in [0.9, 1.1], i.e. W^2 alone approximates the middle
// factor within 10%.
struct SandwichCheck {
  double lower = 0.0;
  double upper = 0.0;
  bool holds = false;
};

inline SandwichCheck check_weight_sandwich(const RegressionProblem& p, const Eigen::VectorXd& x) {
  const SoftmaxState s = softmax_state(p, x);
  const Eigen::MatrixXd W2 = Eigen::MatrixXd(p.w.array().square().matrix().asDiagonal());
  Eigen::MatrixXd M = b_exp_gauss_newton(s) + b_exp_curvature(s) + b_sparse(p, s) + W2;
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(W2, M, Eigen::EigenvaluesOnly);
  if (ges.info() != Eigen::Success) fail(ErrorCode::kSingularHessian, "B + W^2 is not positive definite");
  SandwichCheck out;
  out.lower = ges.eigenvalues().minCoeff();
  out.upper = ges.eigenvalues().maxCoeff();
  out.holds = out.lower >= 0.9 && out.upper <= 1.1;
  return out;
}

struct LipschitzCheck {
  double ratio = 0.0;  // |H(x) - H(y)|_2 / |x - y|_2
  double bound = 0.0;  // n^2 exp(40 R^2), +inf when it overflows
  bool holds = true;
};

inline LipschitzCheck check_hessian_lipschitz(const RegressionProblem& p, const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& y) {
  LipschitzCheck out;
  const double n = static_cast<double>(p.rows());
  out.bound = n * n * std::exp(40.0 * p.R * p.R);
  const double dist = (x - y).norm();
  if (dist == 0.0) fail(ErrorCode::kInvalidConfig, "Lipschitz check needs x != y");
  out.ratio = spectral_norm(hessian(p, x) - hessian(p, y)) / dist;
  out.holds = out.ratio <= out.bound;
  return out;
}

enum class SolverStatus { kConverged, kMaxIterExceeded };

constexpr std::string_view to_string(SolverStatus s) {
  return s == SolverStatus::kConverged ? "converged" : "max_iter_exceeded";
}

struct SolverIterate {
  std::size_t iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double min_eig = 0.0;
  bool ridge = false;  // step used the ridge-damped fallback
};

struct SolverResult {
  Eigen::VectorXd x;
  SolverStatus status = SolverStatus::kMaxIterExceeded;
  std::vector<SolverIterate> trajectory;  // one entry per visited iterate
  std::size_t iterations = 0;             // Newton steps taken
  bool used_ridge = false;

  bool converged() const { return status == SolverStatus::kConverged; }
  double final_grad_norm() const { return trajectory.empty() ? 0.0 : trajectory.back().grad_norm; }
};

// x_{t+1} = x_t - H(x_t)^{-1} g(x_t) until |g| <= tol or max_iter steps.
// A Hessian that is not numerically positive definite is replaced by
// H + mu I with mu = 1e-8 trace(H) / d, and the step is flagged.
inline SolverResult newton_solve(const RegressionProblem& p, Eigen::VectorXd x0, double tol = 1e-10,
                                 std::size_t max_iter = 30) {
  if (x0.size() != p.A.cols()) fail(ErrorCode::kDimensionMismatch, "x0 must have length d");
  SolverResult out;
  out.x = std::move(x0);
  for (std::size_t t = 0;; ++t) {
    const Eigen::VectorXd g = gradient(p, out.x);
    Eigen::MatrixXd H = hessian(p, out.x);
    SolverIterate it;
    it.iter = t;
    it.loss = loss(p, out.x).total;
    it.grad_norm = g.norm();
    it.min_eig = min_eigenvalue(H);
    if (it.grad_norm <= tol) {
      out.trajectory.push_back(it);
      out.status = SolverStatus::kConverged;
      break;
    }
    if (t == max_iter) {
      out.trajectory.push_back(it);
      out.status = SolverStatus::kMaxIterExceeded;
      break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) {
      const double d = static_cast<double>(H.rows());
      H.diagonal().array() += 1e-8 * H.trace() / d;
      llt.compute(H);
      if (llt.info() != Eigen::Success) fail(ErrorCode::kSingularHessian, "Hessian singular after ridge damping");
      it.ridge = true;
      out.used_ridge = true;
    }
    out.trajectory.push_back(it);
    out.x -= llt.solve(g);
    out.iterations = t + 1;
  }
  return out;
}

// Random instance with Gaussian A scaled to unit spectral norm (R = 1),
// b a random sub-distribution, and, when `pd` is set, w just above the
// positive-definiteness threshold.
inline RegressionProblem random_problem(Rng& rng, std::size_t n, std::size_t d, bool pd = true,
                                        double l = 1.0) {
  if (n == 0 || d == 0 || d > n) fail(ErrorCode::kInvalidConfig, "need 0 < d <= n");
  RegressionProblem p;
  p.A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < p.A.rows(); ++i)
    for (Eigen::Index j = 0; j < p.A.cols(); ++j) p.A(i, j) = rng.normal();
  p.A /= spectral_norm(p.A);
  p.R = 1.0;
  p.l = l;
  p.b.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b(i) = rng.uniform();
  p.b *= rng.uniform(0.5, 1.0) / p.b.sum();
  p.w.resize(static_cast<Eigen::Index>(n));
  if (pd) {
    const double base = std::sqrt(pd_weight_threshold(p));
    for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w(i) = base * rng.uniform(1.0, 1.5);
  } else {
    for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w(i) = rng.uniform(0.1, 2.0);
  }
  return p;
}

}  // namespace kvevict
