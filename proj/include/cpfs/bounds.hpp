#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "cpfs/ychain.hpp"

namespace cpfs {

// The abstract proof constants are never pinned down numerically; bound
// comparisons take them as user-supplied surrogates, defaulting to 4, and
// report both sides instead of pretending the constants are known.
struct BoundParams {
  double c = 4.0;
  double c_hat = 4.0;
  double c_hat1 = 4.0;
  double c2 = 4.0;
  double gamma = 4.0;
  double big_k = 4.0;
  double eps = 0.1;
  double eps1 = 4.0;
  double eps2 = 4.0;
  double delta = 4.0;
  double m = 4.0;

  void validate() const {
    if (!(c > 0 && c_hat > 0 && c_hat1 > 0 && c2 > 0 && gamma > 0))
      throw std::invalid_argument("bound surrogates must be positive");
    if (!(eps > 0.0 && eps < 0.5))
      throw std::invalid_argument("epsilon must lie in (0, 1/2)");
  }
};

// log of S = (1 + lambda f/2)^{L(1-2eps)} / (2k(2 + lambda f)); computing in
// log space keeps huge levels usable.
inline double compute_log_S(double lambda, double f, int64_t k, double eps) {
  if (!(eps > 0.0 && eps < 0.5))
    throw std::invalid_argument("compute_S: eps must be in (0, 1/2)");
  int64_t L = compute_L(lambda, f, k);
  double lf = lambda * f;
  return static_cast<double>(L) * (1.0 - 2.0 * eps) * std::log1p(lf / 2.0) -
         std::log(2.0 * static_cast<double>(k) * (2.0 + lf));
}

inline double compute_S(double lambda, double f, int64_t k, double eps) {
  return std::exp(compute_log_S(lambda, f, k, eps));
}

// Equivalent display: S = (1/4k) (1 + lambda f/2)^{L(1-2eps)-1}.
inline double compute_S_second_form(double lambda, double f, int64_t k, double eps) {
  int64_t L = compute_L(lambda, f, k);
  double lf = lambda * f;
  return std::exp((static_cast<double>(L) * (1.0 - 2.0 * eps) - 1.0) *
                      std::log1p(lf / 2.0) -
                  std::log(4.0 * static_cast<double>(k)));
}

// C_{lambda,f} = ((lambda+1)/lambda)^2 (lambda f / (1 + lambda f))^2.
inline double compute_C_lambda_f(double lambda, double f) {
  if (!(lambda > 0.0) || !(f >= 1.0))
    throw std::invalid_argument("compute_C_lambda_f: lambda > 0, f >= 1");
  double a = (lambda + 1.0) / lambda;
  double b = lambda * f / (1.0 + lambda * f);
  return a * a * b * b;
}

struct LhatChat {
  double lambda_hat;  // lambda / (lambda + 1)
  double c_hat;       // C_{lambda,f} / 4
};

inline LhatChat compute_lhat_Chat(double lambda, double f) {
  return {lambda / (lambda + 1.0), compute_C_lambda_f(lambda, f) / 4.0};
}

// R(f,k,lambda) = c_hat1/(lambda f) + c/(lambda f k^{1/3}) + c2/(f k).
inline double compute_R(double f, int64_t k, double lambda, const BoundParams& consts) {
  consts.validate();
  double lf = lambda * f;
  return consts.c_hat1 / lf + consts.c / (lf * std::cbrt(static_cast<double>(k))) +
         consts.c2 / (f * static_cast<double>(k));
}

// Failure bound of the persistence kernel started from (L,1):
// (3 + lambda f)(1 + lambda f/2)^{-eps L}.
inline double persistence_kernel_bound(double lambda, double f, int64_t k, double eps) {
  int64_t L = compute_L(lambda, f, k);
  double lf = lambda * f;
  return (3.0 + lf) * std::exp(-eps * static_cast<double>(L) * std::log1p(lf / 2.0));
}

// Relay failure bound: (1 - Chat lambda_hat^r)^{S/(2r+1)} + R(f,k,lambda),
// evaluated with the window actually simulated (S itself is usually
// astronomically large).
inline double relay_bound(double lambda, double f, int64_t k, int r, double window,
                          const BoundParams& consts) {
  auto [lhat, chat] = compute_lhat_Chat(lambda, f);
  double success = chat * std::pow(lhat, r);
  double rounds = window / (2.0 * r + 1.0);
  double first = success >= 1.0 ? 0.0 : std::exp(rounds * std::log1p(-success));
  return first + compute_R(f, k, lambda, consts);
}

// r(f,k) = ceil(-log(mu^{-1} c k P(xi=k) P(F>=f)) / log mu), clamped to >= 1.
// f enters through fitness_tail_at_f; the parameter is kept for the record.
inline int64_t compute_r_of_fk([[maybe_unused]] double f, int64_t k, double mu, double c,
                               double offspring_pmf_at_k, double fitness_tail_at_f) {
  if (!(mu > 1.0)) throw std::invalid_argument("compute_r_of_fk: mu must be > 1");
  if (!(offspring_pmf_at_k > 0.0) || !(fitness_tail_at_f > 0.0))
    throw std::invalid_argument("compute_r_of_fk: zero probability input, r undefined");
  double arg = (c / mu) * static_cast<double>(k) * offspring_pmf_at_k * fitness_tail_at_f;
  double r = std::ceil(-std::log(arg) / std::log(mu));
  return r < 1.0 ? 1 : static_cast<int64_t>(r);
}

struct Condition62 {
  bool holds = false;
  double lhs_log = 0.0;  // log of S/(2r+1)
  double rhs_log = 0.0;  // log of 2/(Chat lambda_hat^r)
};

// Condition S/(2r+1) > 2 / (Chat_{lambda,f} lambda_hat^r), compared in logs.
inline Condition62 check_condition_62(double lambda, double f, int64_t k, double eps,
                                      int64_t r) {
  auto [lhat, chat] = compute_lhat_Chat(lambda, f);
  Condition62 out;
  out.lhs_log = compute_log_S(lambda, f, k, eps) - std::log(2.0 * r + 1.0);
  out.rhs_log = std::log(2.0) - std::log(chat) - static_cast<double>(r) * std::log(lhat);
  out.holds = out.lhs_log > out.rhs_log;
  return out;
}

}  // namespace cpfs
