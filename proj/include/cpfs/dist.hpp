#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpfs/rng.hpp"

namespace cpfs {

namespace detail {

// Riemann zeta for s > 1 via direct sum plus Euler-Maclaurin tail correction.
inline double zeta(double s) {
  const int n = 100000;
  double sum = 0.0;
  for (int k = n; k >= 1; --k) sum += std::pow(static_cast<double>(k), -s);
  const double nd = static_cast<double>(n);
  sum += std::pow(nd, 1.0 - s) / (s - 1.0) - 0.5 * std::pow(nd, -s) +
         s / 12.0 * std::pow(nd, -s - 1.0);
  return sum;
}

inline double parse_number(std::string_view sv, const char* what) {
  try {
    size_t pos = 0;
    double v = std::stod(std::string(sv), &pos);
    if (pos != sv.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("cannot parse ") + what + " from '" +
                                std::string(sv) + "'");
  }
}

inline std::vector<std::string_view> split(std::string_view sv, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t pos = sv.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(sv.substr(start));
      break;
    }
    out.push_back(sv.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

// Offspring distribution of the branching process. All families expose exact
// sampling, the pmf, and a finite mean; construction validates the latter.
class OffspringDist {
 public:
  enum class Family {
    deterministic,
    poisson,
    geometric,
    power_law,
    stretched_exp,
    empirical,
  };

  static OffspringDist deterministic(uint64_t k) {
    OffspringDist d;
    d.family_ = Family::deterministic;
    d.a_ = static_cast<double>(k);
    d.mean_ = static_cast<double>(k);
    return d;
  }

  static OffspringDist poisson(double mu) {
    if (!(mu >= 0.0) || !std::isfinite(mu))
      throw std::invalid_argument("poisson offspring: mean must be finite and >= 0");
    OffspringDist d;
    d.family_ = Family::poisson;
    d.a_ = mu;
    d.mean_ = mu;
    return d;
  }

  // P(k) = p (1-p)^k on {0,1,2,...}.
  static OffspringDist geometric(double p) {
    if (!(p > 0.0 && p <= 1.0))
      throw std::invalid_argument("geometric offspring: p must be in (0,1]");
    OffspringDist d;
    d.family_ = Family::geometric;
    d.a_ = p;
    d.mean_ = (1.0 - p) / p;
    return d;
  }

  // P(k) proportional to k^-alpha on {1,..,cutoff}; cutoff 0 means unbounded,
  // which requires alpha > 2 so the mean stays finite.
  static OffspringDist power_law(double alpha, uint64_t cutoff = 0) {
    if (cutoff == 0 && !(alpha > 2.0))
      throw std::invalid_argument(
          "power-law offspring without cutoff needs alpha > 2 (finite mean)");
    if (cutoff == 1u << 31)
      throw std::invalid_argument("power-law cutoff too large");
    OffspringDist d;
    d.family_ = Family::power_law;
    d.a_ = alpha;
    d.b_ = static_cast<double>(cutoff);
    if (cutoff == 0) {
      d.mean_ = detail::zeta(alpha - 1.0) / detail::zeta(alpha);
    } else {
      std::vector<std::pair<uint64_t, double>> pmf;
      double z = 0.0;
      for (uint64_t k = 1; k <= cutoff; ++k) z += std::pow(static_cast<double>(k), -alpha);
      for (uint64_t k = 1; k <= cutoff; ++k)
        pmf.emplace_back(k, std::pow(static_cast<double>(k), -alpha) / z);
      d.init_table(std::move(pmf));
    }
    return d;
  }

  // P(k) proportional to exp(-k^gamma) on {0,..,cap}, renormalized. The cap
  // truncates mass below 1e-12 for the default parameters.
  static OffspringDist stretched_exp(double gamma, uint64_t cap = 1000000) {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("stretched-exp offspring: gamma must be in (0,1)");
    if (cap < 1) throw std::invalid_argument("stretched-exp offspring: cap must be >= 1");
    OffspringDist d;
    d.family_ = Family::stretched_exp;
    d.a_ = gamma;
    d.b_ = static_cast<double>(cap);
    std::vector<std::pair<uint64_t, double>> pmf;
    double z = 0.0;
    std::vector<double> w;
    for (uint64_t k = 0; k <= cap; ++k) {
      double t = std::exp(-std::pow(static_cast<double>(k), gamma));
      if (k > 8 && t < z * 1e-18) break;
      w.push_back(t);
      z += t;
    }
    for (uint64_t k = 0; k < w.size(); ++k) pmf.emplace_back(k, w[k] / z);
    d.init_table(std::move(pmf));
    return d;
  }

  static OffspringDist empirical(std::vector<std::pair<uint64_t, double>> pmf) {
    if (pmf.empty()) throw std::invalid_argument("empirical offspring: empty pmf");
    double total = 0.0;
    for (auto& [k, p] : pmf) {
      if (p < 0.0) throw std::invalid_argument("empirical offspring: negative mass");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("empirical offspring: pmf must sum to 1 within 1e-12");
    OffspringDist d;
    d.family_ = Family::empirical;
    d.init_table(std::move(pmf));
    return d;
  }

  // Mini-language: det:k, pois:mu, geom:p, plaw:alpha[,cutoff], sexp:gamma[,cap],
  // emp:k=p,k=p,...
  static OffspringDist parse(std::string_view spec) {
    size_t colon = spec.find(':');
    if (colon == std::string_view::npos)
      throw std::invalid_argument("offspring spec needs family:params, got '" +
                                  std::string(spec) + "'");
    std::string_view fam = spec.substr(0, colon);
    std::string_view args = spec.substr(colon + 1);
    if (fam == "det")
      return deterministic(static_cast<uint64_t>(detail::parse_number(args, "det k")));
    if (fam == "pois") return poisson(detail::parse_number(args, "poisson mean"));
    if (fam == "geom") return geometric(detail::parse_number(args, "geometric p"));
    if (fam == "plaw") {
      auto parts = detail::split(args, ',');
      double alpha = detail::parse_number(parts[0], "power-law alpha");
      uint64_t cutoff = parts.size() > 1
                            ? static_cast<uint64_t>(detail::parse_number(parts[1], "cutoff"))
                            : 0;
      return power_law(alpha, cutoff);
    }
    if (fam == "sexp") {
      auto parts = detail::split(args, ',');
      double gamma = detail::parse_number(parts[0], "stretched-exp gamma");
      uint64_t cap = parts.size() > 1
                         ? static_cast<uint64_t>(detail::parse_number(parts[1], "cap"))
                         : 1000000;
      return stretched_exp(gamma, cap);
    }
    if (fam == "emp") {
      std::vector<std::pair<uint64_t, double>> pmf;
      for (auto entry : detail::split(args, ',')) {
        auto kv = detail::split(entry, '=');
        if (kv.size() != 2) throw std::invalid_argument("empirical entry needs k=p");
        pmf.emplace_back(static_cast<uint64_t>(detail::parse_number(kv[0], "emp k")),
                         detail::parse_number(kv[1], "emp p"));
      }
      return empirical(std::move(pmf));
    }
    throw std::invalid_argument("unknown offspring family '" + std::string(fam) + "'");
  }

  Family family() const { return family_; }
  double mean() const { return mean_; }

  uint64_t sample(RandomStream& rng) const {
    switch (family_) {
      case Family::deterministic:
        return static_cast<uint64_t>(a_);
      case Family::poisson:
        return rng.poisson(a_);
      case Family::geometric:
        return rng.geometric(a_);
      case Family::power_law:
        if (b_ == 0.0) return sample_zeta(rng);
        [[fallthrough]];
      case Family::stretched_exp:
      case Family::empirical:
        return sample_table(rng);
    }
    throw std::logic_error("unreachable");
  }

  double pmf(uint64_t k) const {
    switch (family_) {
      case Family::deterministic:
        return k == static_cast<uint64_t>(a_) ? 1.0 : 0.0;
      case Family::poisson: {
        if (a_ == 0.0) return k == 0 ? 1.0 : 0.0;
        double lp = -a_ + static_cast<double>(k) * std::log(a_) -
                    std::lgamma(static_cast<double>(k) + 1.0);
        return std::exp(lp);
      }
      case Family::geometric:
        return a_ * std::pow(1.0 - a_, static_cast<double>(k));
      case Family::power_law:
        if (b_ == 0.0)
          return k >= 1 ? std::pow(static_cast<double>(k), -a_) / detail::zeta(a_) : 0.0;
        [[fallthrough]];
      case Family::stretched_exp:
      case Family::empirical:
        for (auto& [kk, p] : table_)
          if (kk == k) return p;
        return 0.0;
    }
    throw std::logic_error("unreachable");
  }

  std::string describe() const {
    char buf[96];
    switch (family_) {
      case Family::deterministic:
        std::snprintf(buf, sizeof buf, "det:%llu", static_cast<unsigned long long>(a_));
        break;
      case Family::poisson:
        std::snprintf(buf, sizeof buf, "pois:%g", a_);
        break;
      case Family::geometric:
        std::snprintf(buf, sizeof buf, "geom:%g", a_);
        break;
      case Family::power_law:
        std::snprintf(buf, sizeof buf, "plaw:%g,%llu", a_,
                      static_cast<unsigned long long>(b_));
        break;
      case Family::stretched_exp:
        std::snprintf(buf, sizeof buf, "sexp:%g,%llu", a_,
                      static_cast<unsigned long long>(b_));
        break;
      case Family::empirical:
        std::snprintf(buf, sizeof buf, "emp:<%zu atoms>", table_.size());
        break;
    }
    return buf;
  }

 private:
  void init_table(std::vector<std::pair<uint64_t, double>> pmf) {
    table_ = std::move(pmf);
    cdf_.resize(table_.size());
    double acc = 0.0, mean = 0.0;
    for (size_t i = 0; i < table_.size(); ++i) {
      acc += table_[i].second;
      mean += static_cast<double>(table_[i].first) * table_[i].second;
      cdf_[i] = acc;
    }
    cdf_.back() = 1.0;
    mean_ = mean;
  }

  uint64_t sample_table(RandomStream& rng) const {
    double u = rng.uniform();
    size_t idx = std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
    if (idx >= table_.size()) idx = table_.size() - 1;
    return table_[idx].first;
  }

  // Devroye's rejection sampler for P(k) proportional to k^-alpha, k >= 1.
  uint64_t sample_zeta(RandomStream& rng) const {
    const double am1 = a_ - 1.0;
    const double b = std::pow(2.0, am1);
    for (;;) {
      double u = rng.uniform_pos();
      double v = rng.uniform();
      double x = std::floor(std::pow(u, -1.0 / am1));
      if (x < 1.0 || x > 1e18) continue;
      double t = std::pow(1.0 + 1.0 / x, am1);
      if (v * x * (t - 1.0) / (b - 1.0) <= t / b) return static_cast<uint64_t>(x);
    }
  }

  Family family_ = Family::deterministic;
  double a_ = 0.0, b_ = 0.0;
  double mean_ = 0.0;
  std::vector<std::pair<uint64_t, double>> table_;
  std::vector<double> cdf_;
};

// Per-vertex fitness distribution; support must lie in [1, infinity).
class FitnessDist {
 public:
  enum class Family { constant_one, constant, pareto, bounded_uniform, empirical };

  static FitnessDist constant_one() {
    FitnessDist d;
    d.family_ = Family::constant_one;
    d.a_ = 1.0;
    return d;
  }

  static FitnessDist constant(double f) {
    if (!(f >= 1.0)) throw std::invalid_argument("constant fitness must be >= 1");
    FitnessDist d;
    d.family_ = f == 1.0 ? Family::constant_one : Family::constant;
    d.a_ = f;
    return d;
  }

  // P(F > f) = (f/min)^-c1 for f >= min.
  static FitnessDist pareto(double c1, double min = 1.0) {
    if (!(c1 > 0.0)) throw std::invalid_argument("pareto fitness: tail exponent must be > 0");
    if (!(min >= 1.0)) throw std::invalid_argument("pareto fitness: support must be >= 1");
    FitnessDist d;
    d.family_ = Family::pareto;
    d.a_ = c1;
    d.b_ = min;
    return d;
  }

  static FitnessDist bounded_uniform(double lo, double hi) {
    if (!(lo >= 1.0) || !(hi >= lo))
      throw std::invalid_argument("uniform fitness needs 1 <= lo <= hi");
    FitnessDist d;
    d.family_ = Family::bounded_uniform;
    d.a_ = lo;
    d.b_ = hi;
    return d;
  }

  static FitnessDist empirical(std::vector<std::pair<double, double>> atoms) {
    if (atoms.empty()) throw std::invalid_argument("empirical fitness: no atoms");
    double total = 0.0;
    for (auto& [v, p] : atoms) {
      if (v < 1.0) throw std::invalid_argument("empirical fitness: support below 1");
      if (p < 0.0) throw std::invalid_argument("empirical fitness: negative mass");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("empirical fitness: masses must sum to 1 within 1e-12");
    std::sort(atoms.begin(), atoms.end());
    FitnessDist d;
    d.family_ = Family::empirical;
    d.atoms_ = std::move(atoms);
    d.cdf_.resize(d.atoms_.size());
    double acc = 0.0;
    for (size_t i = 0; i < d.atoms_.size(); ++i) {
      acc += d.atoms_[i].second;
      d.cdf_[i] = acc;
    }
    d.cdf_.back() = 1.0;
    return d;
  }

  // Mini-language: const:f, pareto:c1[,min], unif:lo,hi, emp:v=p,v=p,...
  static FitnessDist parse(std::string_view spec) {
    size_t colon = spec.find(':');
    if (colon == std::string_view::npos)
      throw std::invalid_argument("fitness spec needs family:params, got '" +
                                  std::string(spec) + "'");
    std::string_view fam = spec.substr(0, colon);
    std::string_view args = spec.substr(colon + 1);
    if (fam == "const") return constant(detail::parse_number(args, "constant fitness"));
    if (fam == "pareto") {
      auto parts = detail::split(args, ',');
      double c1 = detail::parse_number(parts[0], "pareto exponent");
      double min = parts.size() > 1 ? detail::parse_number(parts[1], "pareto min") : 1.0;
      return pareto(c1, min);
    }
    if (fam == "unif") {
      auto parts = detail::split(args, ',');
      if (parts.size() != 2) throw std::invalid_argument("unif fitness needs lo,hi");
      return bounded_uniform(detail::parse_number(parts[0], "unif lo"),
                             detail::parse_number(parts[1], "unif hi"));
    }
    if (fam == "emp") {
      std::vector<std::pair<double, double>> atoms;
      for (auto entry : detail::split(args, ',')) {
        auto kv = detail::split(entry, '=');
        if (kv.size() != 2) throw std::invalid_argument("empirical entry needs value=p");
        atoms.emplace_back(detail::parse_number(kv[0], "emp value"),
                           detail::parse_number(kv[1], "emp p"));
      }
      return empirical(std::move(atoms));
    }
    throw std::invalid_argument("unknown fitness family '" + std::string(fam) + "'");
  }

  Family family() const { return family_; }

  double sample(RandomStream& rng) const {
    switch (family_) {
      case Family::constant_one:
        return 1.0;
      case Family::constant:
        return a_;
      case Family::pareto:
        return b_ * std::pow(rng.uniform_pos(), -1.0 / a_);
      case Family::bounded_uniform:
        return rng.uniform_range(a_, b_);
      case Family::empirical: {
        double u = rng.uniform();
        size_t idx = std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
        if (idx >= atoms_.size()) idx = atoms_.size() - 1;
        return atoms_[idx].first;
      }
    }
    throw std::logic_error("unreachable");
  }

  // P(F >= f).
  double tail(double f) const {
    switch (family_) {
      case Family::constant_one:
        return f <= 1.0 ? 1.0 : 0.0;
      case Family::constant:
        return f <= a_ ? 1.0 : 0.0;
      case Family::pareto:
        return f <= b_ ? 1.0 : std::pow(f / b_, -a_);
      case Family::bounded_uniform:
        if (f <= a_) return 1.0;
        if (f >= b_) return 0.0;
        return (b_ - f) / (b_ - a_);
      case Family::empirical: {
        double t = 0.0;
        for (auto& [v, p] : atoms_)
          if (v >= f) t += p;
        return t;
      }
    }
    throw std::logic_error("unreachable");
  }

  std::string describe() const {
    char buf[96];
    switch (family_) {
      case Family::constant_one:
        return "const:1";
      case Family::constant:
        std::snprintf(buf, sizeof buf, "const:%g", a_);
        break;
      case Family::pareto:
        std::snprintf(buf, sizeof buf, "pareto:%g,%g", a_, b_);
        break;
      case Family::bounded_uniform:
        std::snprintf(buf, sizeof buf, "unif:%g,%g", a_, b_);
        break;
      case Family::empirical:
        std::snprintf(buf, sizeof buf, "emp:<%zu atoms>", atoms_.size());
        break;
    }
    return buf;
  }

 private:
  Family family_ = Family::constant_one;
  double a_ = 1.0, b_ = 1.0;
  std::vector<std::pair<double, double>> atoms_;
  std::vector<double> cdf_;
};

}  // namespace cpfs
