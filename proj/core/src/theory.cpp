#include "lmtp/theory.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace lmtp::theory {

namespace {

/// Exponent of the leap marginal: (i - 1) + (i - 1) mod k.
double leap_exponent(int i, int k) { return static_cast<double>(i - 1 + (i - 1) % k); }

double delta_at(double gamma, int n, int k) {
  const AttenuationParams p{gamma, n, k};
  return expected_length_leap(p) - expected_length_vanilla(p);
}

}  // namespace

void AttenuationParams::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite and >= 0");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
}

double attenuation(int i, double gamma) {
  if (i < 1) throw std::invalid_argument("attenuation: i must be >= 1");
  if (!(gamma >= 0.0)) throw std::invalid_argument("attenuation: gamma must be >= 0");
  return std::exp(-gamma * (i - 1));
}

double leap_marginal(int i, const AttenuationParams& params) {
  return std::exp(-params.gamma * leap_exponent(i, params.k));
}

// Products are accumulated as exponent sums, so large grids underflow to 0
// gracefully instead of multiplying many tiny factors.

double expected_length_vanilla(const AttenuationParams& params) {
  params.validate();
  double total = 0.0;
  for (int m = 1; m <= params.n; ++m) total += std::exp(-params.gamma * (static_cast<double>(m) * (m - 1) / 2.0));
  return total;
}

double expected_length_leap(const AttenuationParams& params) {
  params.validate();
  double total = 0.0;
  double exponent = 0.0;
  for (int m = 1; m <= params.horizon(); ++m) {
    exponent += leap_exponent(m, params.k);
    total += std::exp(-params.gamma * exponent);
  }
  return total;
}

LengthReport delta_decomposition(const AttenuationParams& params) {
  params.validate();
  LengthReport r;
  r.e_vanilla = expected_length_vanilla(params);
  r.e_leap = expected_length_leap(params);
  r.delta = r.e_leap - r.e_vanilla;
  double vanilla_exp = 0.0;
  double leap_exp = 0.0;
  for (int m = 1; m <= params.horizon(); ++m) {
    leap_exp += leap_exponent(m, params.k);
    r.leap_marginal.push_back(leap_marginal(m, params));
    r.leap_joint.push_back(std::exp(-params.gamma * leap_exp));
    if (m <= params.n) {
      vanilla_exp += m - 1;
      r.vanilla_marginal.push_back(attenuation(m, params.gamma));
      r.vanilla_joint.push_back(std::exp(-params.gamma * vanilla_exp));
      r.delta1 += r.leap_joint.back() - r.vanilla_joint.back();
    } else {
      r.delta2 += r.leap_joint.back();
    }
  }
  return r;
}

double crossover_gamma(int n, int k, double tol) {
  if (n < 2 || k < 2) throw std::invalid_argument("crossover_gamma: needs n >= 2 and k >= 2");
  if (!(tol > 0.0)) throw std::invalid_argument("crossover_gamma: tol must be > 0");
  // Geometric scan for the first sign change, then bisection.
  constexpr int kScanPoints = 4000;
  const double lo_gamma = 1e-6;
  const double ratio = std::pow(kCrossoverMaxGamma / lo_gamma, 1.0 / (kScanPoints - 1));
  double prev_gamma = lo_gamma;
  double prev_delta = delta_at(prev_gamma, n, k);
  if (!(prev_delta > 0.0)) throw NoCrossoverError("crossover_gamma: leap advantage not positive near gamma = 0");
  for (int s = 1; s < kScanPoints; ++s) {
    const double g = s == kScanPoints - 1 ? kCrossoverMaxGamma : lo_gamma * std::pow(ratio, s);
    const double d = delta_at(g, n, k);
    if (d <= 0.0) {
      double a = prev_gamma, b = g;
      double mid = b;
      for (int it = 0; it < 500; ++it) {
        mid = 0.5 * (a + b);
        const double dm = delta_at(mid, n, k);
        if (std::abs(dm) <= tol && b - a <= tol) break;
        if (dm > 0.0) {
          a = mid;
        } else {
          b = mid;
        }
        if (b - a <= 1e-15 * b) break;
      }
      if (!(mid > 0.0)) throw NoCrossoverError("crossover_gamma: non-positive root");
      return mid;
    }
    prev_gamma = g;
    prev_delta = d;
  }
  std::ostringstream msg;
  msg << "crossover_gamma: no sign change on (0, " << kCrossoverMaxGamma << "] for n=" << n << ", k=" << k
      << "; delta stays positive (delta(50) = " << prev_delta << ")";
  throw NoCrossoverError(msg.str());
}

BoundCheck bound_diagnostics(const AttenuationParams& params) {
  params.validate();
  if (params.k != 2) throw std::invalid_argument("bound_diagnostics: bounds are derived for k = 2 only");
  const LengthReport r = delta_decomposition(params);
  BoundCheck out;
  out.gamma = params.gamma;
  out.n = params.n;
  out.abs_delta1 = std::abs(r.delta1);
  const double np1 = params.n + 1.0;
  out.upper_bound = 0.5 * (1.0 - std::exp(-params.gamma * np1 * np1 / 2.0));
  out.upper_holds = out.abs_delta1 <= out.upper_bound;
  out.delta2 = r.delta2;
  const double nn = static_cast<double>(params.n);
  out.lower_estimate = params.gamma > 0.0
                           ? std::exp(-2.0 * params.gamma * nn * nn) / (2.0 * nn * std::sqrt(params.gamma))
                           : std::numeric_limits<double>::infinity();
  out.lower_holds = out.delta2 >= out.lower_estimate;
  return out;
}

MonteCarloResult monte_carlo_length(const AttenuationParams& params, long trials, std::uint64_t seed,
                                    Strategy strategy) {
  params.validate();
  if (trials < 10000) throw std::invalid_argument("monte_carlo_length: needs at least 10^4 trials");
  std::vector<double> p;
  if (strategy == Strategy::kVanilla) {
    for (int i = 1; i <= params.n; ++i) p.push_back(attenuation(i, params.gamma));
  } else {
    for (int i = 1; i <= params.horizon(); ++i) p.push_back(leap_marginal(i, params));
  }
  std::mt19937_64 rng(seed);
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  double sum = 0.0;
  double sum_sq = 0.0;
  for (long t = 0; t < trials; ++t) {
    int length = 0;
    for (double pi : p) {
      const double u = static_cast<double>(rng() >> 11) * kScale;
      if (!(u < pi)) break;
      ++length;
    }
    sum += length;
    sum_sq += static_cast<double>(length) * length;
  }
  const double count = static_cast<double>(trials);
  MonteCarloResult out;
  out.mean = sum / count;
  const double var = std::max(0.0, (sum_sq - count * out.mean * out.mean) / (count - 1.0));
  out.standard_error = std::sqrt(var / count);
  return out;
}

void emit_curves(std::span<const double> gammas, std::span<const int> ks, int n, const std::string& path) {
  if (gammas.empty() || ks.empty()) throw std::invalid_argument("emit_curves: empty gamma or k grid");
  if (n < 1) throw std::invalid_argument("emit_curves: n must be >= 1");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write curves: " + path);
  out.precision(17);
  out << "panel,k,gamma,i_or_m,value\n";
  for (int k : ks) {
    for (double g : gammas) {
      const AttenuationParams p{g, n, k};
      const LengthReport r = delta_decomposition(p);
      for (std::size_t i = 0; i < r.leap_marginal.size(); ++i)
        out << "a," << k << ',' << g << ',' << i + 1 << ',' << r.leap_marginal[i] << '\n';
      for (std::size_t m = 0; m < r.leap_joint.size(); ++m)
        out << "b," << k << ',' << g << ',' << m + 1 << ',' << r.leap_joint[m] << '\n';
      for (int nn = 1; nn <= n; ++nn)
        out << "c," << k << ',' << g << ',' << nn << ',' << expected_length_leap({g, nn, k}) << '\n';
    }
  }
  if (!out) throw std::runtime_error("error writing curves: " + path);
}

}  // namespace lmtp::theory
