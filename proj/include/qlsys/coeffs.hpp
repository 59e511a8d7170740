#pragma once

// Isotropic coefficient profiles A(x, s) = a(s) Id and a sampling certifier for
// the structural hypotheses the existence theory needs:
//   (a.1) |a(s)|, |a'(s)| <= C0
//   (a.2) a(s) >= nu
//   (a.3) 0 <= s a'(s) <= gamma a(s), with gamma in (0, p - 2)
//   (a.4) s -> s^(3-p) a'(s) strictly decreasing on (0, inf)

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlsys/error.hpp"

namespace qlsys {

/// |x|^e for e > 0, with 0 at x = 0 and the common exponents special-cased.
inline double pow_abs(double x, double e) noexcept {
  const double ax = std::fabs(x);
  if (ax == 0.0) return 0.0;
  if (e == 1.0) return ax;
  if (e == 2.0) return ax * ax;
  if (e == 3.0) return ax * ax * ax;
  if (e == 4.0) {
    const double a2 = ax * ax;
    return a2 * a2;
  }
  return std::pow(ax, e);
}

/// sign(x) |x|^e, zero at x = 0 (the continuous limit for e > 0).
inline double signed_pow(double x, double e) noexcept {
  const double v = pow_abs(x, e);
  return x < 0.0 ? -v : v;
}

enum class CoefficientKind { identity, example, polynomial, custom };

inline const char* to_string(CoefficientKind k) {
  switch (k) {
    case CoefficientKind::identity: return "identity";
    case CoefficientKind::example: return "example";
    case CoefficientKind::polynomial: return "polynomial";
    case CoefficientKind::custom: return "custom";
  }
  return "?";
}

class CoefficientFamily {
 public:
  /// a(s) = 1.
  static CoefficientFamily identity() {
    CoefficientFamily f;
    f.kind_ = CoefficientKind::identity;
    f.nu_ = 1.0;
    f.c0_ = 1.0;
    f.gamma_ = 1.0;
    return f;
  }

  /// a(s) = 1 + |s|^g / (1 + |s|^g), which lies in [1, 2].
  static CoefficientFamily example(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
      throw InvalidParams("example profile needs gamma > 0");
    CoefficientFamily f;
    f.kind_ = CoefficientKind::example;
    f.gamma_ = gamma;
    f.nu_ = 1.0;
    f.c0_ = std::max(2.0, example_derivative_bound(gamma));
    return f;
  }

  /// a(s) = sum_k c_k |s|^k with declared constants.
  static CoefficientFamily polynomial(std::vector<double> coeffs, double nu, double c0,
                                      double gamma) {
    if (coeffs.empty()) throw InvalidParams("polynomial profile needs coefficients");
    CoefficientFamily f;
    f.kind_ = CoefficientKind::polynomial;
    f.coeffs_ = std::move(coeffs);
    f.set_constants(nu, c0, gamma);
    return f;
  }

  static CoefficientFamily custom(std::string name, std::function<double(double)> a,
                                  std::function<double(double)> da, double nu, double c0,
                                  double gamma, bool even) {
    CoefficientFamily f;
    f.kind_ = CoefficientKind::custom;
    f.name_ = std::move(name);
    f.a_ = std::move(a);
    f.da_ = std::move(da);
    f.even_ = even;
    f.set_constants(nu, c0, gamma);
    return f;
  }

  double A(double s) const {
    switch (kind_) {
      case CoefficientKind::identity: return 1.0;
      case CoefficientKind::example: {
        const double x = pow_abs(s, gamma_);
        return 1.0 + x / (1.0 + x);
      }
      case CoefficientKind::polynomial: {
        const double as = std::fabs(s);
        double acc = 0.0;
        for (std::size_t k = coeffs_.size(); k-- > 0;) acc = acc * as + coeffs_[k];
        return acc;
      }
      case CoefficientKind::custom: return a_(s);
    }
    return 1.0;
  }

  double dA(double s) const {
    switch (kind_) {
      case CoefficientKind::identity: return 0.0;
      case CoefficientKind::example: {
        if (s == 0.0) return 0.0;
        const double x = pow_abs(s, gamma_);
        const double d = 1.0 + x;
        return gamma_ * signed_pow(s, gamma_ - 1.0) / (d * d);
      }
      case CoefficientKind::polynomial: {
        if (s == 0.0) return 0.0;
        const double as = std::fabs(s);
        double acc = 0.0;
        for (std::size_t k = coeffs_.size(); k-- > 1;)
          acc = acc * as + static_cast<double>(k) * coeffs_[k];
        return s < 0.0 ? -acc : acc;
      }
      case CoefficientKind::custom: return da_(s);
    }
    return 0.0;
  }

  CoefficientKind kind() const noexcept { return kind_; }
  double nu() const noexcept { return nu_; }
  double c0() const noexcept { return c0_; }
  double gamma() const noexcept { return gamma_; }
  bool is_even() const noexcept { return even_; }
  bool is_constant() const noexcept { return kind_ == CoefficientKind::identity; }
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  std::string name() const {
    switch (kind_) {
      case CoefficientKind::identity: return "identity";
      case CoefficientKind::example: return "example(gamma=" + std::to_string(gamma_) + ")";
      case CoefficientKind::polynomial: return "polynomial";
      case CoefficientKind::custom: return name_;
    }
    return name_;
  }

  /// Structural equality; custom profiles compare by name.
  friend bool operator==(const CoefficientFamily& a, const CoefficientFamily& b) {
    return a.kind_ == b.kind_ && a.nu_ == b.nu_ && a.c0_ == b.c0_ && a.gamma_ == b.gamma_ &&
           a.coeffs_ == b.coeffs_ && a.name_ == b.name_ && a.even_ == b.even_;
  }

  /// sup over s of |a'(s)| for the example profile; infinite when gamma < 1.
  static double example_derivative_bound(double gamma) {
    if (gamma < 1.0) return std::numeric_limits<double>::infinity();
    if (gamma == 1.0) return 1.0;
    // maximize gamma x^((g-1)/g) / (1+x)^2 over x = s^g
    const double x = (gamma - 1.0) / (gamma + 1.0);
    return gamma * std::pow(x, (gamma - 1.0) / gamma) / ((1.0 + x) * (1.0 + x));
  }

 private:
  void set_constants(double nu, double c0, double gamma) {
    if (!(nu > 0.0 && nu <= 1.0)) throw InvalidParams("nu must lie in (0, 1]");
    if (!(c0 > 0.0)) throw InvalidParams("C0 must be positive");
    if (!(gamma > 0.0)) throw InvalidParams("gamma must be positive");
    nu_ = nu;
    c0_ = c0;
    gamma_ = gamma;
  }

  CoefficientKind kind_ = CoefficientKind::identity;
  double nu_ = 1.0;
  double c0_ = 1.0;
  double gamma_ = 1.0;
  bool even_ = true;
  std::vector<double> coeffs_;
  std::string name_;
  std::function<double(double)> a_;
  std::function<double(double)> da_;
};

inline double eval_A(const CoefficientFamily& f, double s) { return f.A(s); }
inline double eval_dA(const CoefficientFamily& f, double s) { return f.dA(s); }

enum class Verdict { pass, pass_degenerate, fail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::pass_degenerate: return "pass(degenerate)";
    case Verdict::fail: return "fail";
  }
  return "?";
}

struct ConditionResult {
  std::string condition;
  Verdict verdict = Verdict::pass;
  double witness_s = std::numeric_limits<double>::quiet_NaN();
};

struct CertReport {
  std::string family;
  double p = 0.0;
  double s_min = 0.0;
  double s_max = 0.0;
  std::size_t samples = 0;
  std::vector<ConditionResult> conditions;
  /// Largest observed s a'(s) / a(s) over the samples.
  double max_growth_ratio = 0.0;

  bool all_pass() const {
    return std::none_of(conditions.begin(), conditions.end(),
                        [](const ConditionResult& c) { return c.verdict == Verdict::fail; });
  }
  const ConditionResult& operator[](const std::string& name) const {
    for (const auto& c : conditions)
      if (c.condition == name) return c;
    throw Error("no condition named " + name);
  }
};

/// Checks (a.1)-(a.4) and the window gamma < p - 2 on an explicit sample set.
/// Monotonicity (a.4) compares consecutive positive samples in ascending order.
inline CertReport certify_samples(const CoefficientFamily& fam, double p,
                                  std::vector<double> samples) {
  if (samples.empty()) throw InvalidRange("no samples");
  std::sort(samples.begin(), samples.end());
  CertReport rep;
  rep.family = fam.name();
  rep.p = p;
  rep.s_min = samples.front();
  rep.s_max = samples.back();
  rep.samples = samples.size();

  const double c0 = fam.c0();
  const double nu = fam.nu();
  const double gamma = fam.gamma();

  ConditionResult a1{"a1_bound"}, a2{"a2_ellipticity"}, a3{"a3_growth"}, a4{"a4_monotone"},
      window{"a3_window"};
  auto fail = [](ConditionResult& c, double s) {
    if (c.verdict != Verdict::fail) {
      c.verdict = Verdict::fail;
      c.witness_s = s;
    }
  };

  double worst_abs = -1.0, worst_abs_s = samples.front();
  bool any_nonzero_derivative = false;
  double prev_mono = 0.0;
  bool have_prev = false;
  for (double s : samples) {
    const double a = fam.A(s);
    const double da = fam.dA(s);
    if (!std::isfinite(a)) throw NonFiniteSample("non-finite a(s)", s);
    if (!std::isfinite(da)) throw NonFiniteSample("non-finite a'(s)", s);

    const double mag = std::max(std::fabs(a), std::fabs(da));
    if (mag > worst_abs) {
      worst_abs = mag;
      worst_abs_s = s;
    }
    if (std::fabs(a) > c0 || std::fabs(da) > c0) fail(a1, s);
    if (a < nu) fail(a2, s);
    const double growth = s * da;
    if (growth < 0.0 || growth > gamma * a) fail(a3, s);
    if (a != 0.0) rep.max_growth_ratio = std::max(rep.max_growth_ratio, growth / a);

    if (s > 0.0) {
      if (da != 0.0) any_nonzero_derivative = true;
      const double mono = std::pow(s, 3.0 - p) * da;
      if (have_prev && !(mono < prev_mono)) fail(a4, s);
      prev_mono = mono;
      have_prev = true;
    }
  }
  if (!std::isfinite(c0)) fail(a1, worst_abs_s);
  // with a' = 0 on every sample, (a.3) holds for any gamma in (0, p - 2)
  if (!(gamma > 0.0 && gamma < p - 2.0) && any_nonzero_derivative) fail(window, samples.front());
  if (a4.verdict == Verdict::fail && !any_nonzero_derivative) {
    // a' = 0 on every positive sample: the semilinear baseline
    a4.verdict = Verdict::pass_degenerate;
    a4.witness_s = std::numeric_limits<double>::quiet_NaN();
  }
  rep.conditions = {a1, a2, a3, a4, window};
  return rep;
}

/// Certifies on n equally spaced samples of [s_min, s_max].
inline CertReport certify(const CoefficientFamily& fam, double p, double s_min, double s_max,
                          std::size_t n_samples) {
  if (!(s_min < s_max) || !std::isfinite(s_min) || !std::isfinite(s_max))
    throw InvalidRange("need finite s_min < s_max");
  if (n_samples < 100) throw InvalidRange("need at least 100 samples");
  if (!(p > 2.0)) throw InvalidParams("p must exceed 2");
  std::vector<double> s(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k)
    s[k] = s_min + (s_max - s_min) * static_cast<double>(k) / static_cast<double>(n_samples - 1);
  return certify_samples(fam, p, std::move(s));
}

}  // namespace qlsys
