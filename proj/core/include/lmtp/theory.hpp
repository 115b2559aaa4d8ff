#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmtp::theory {

/// Exponential attenuation of per-position acceptance with n heads of leap
/// stride k.
struct AttenuationParams {
  double gamma = 0.0;
  int n = 4;
  int k = 2;

  void validate() const;
  int horizon() const { return k * (n - 1) + 1; }
};

/// f(i) = exp(-gamma (i - 1)), i >= 1.
double attenuation(int i, double gamma);

/// Σ_{m=1..n} Π_{i<=m} f(i).
double expected_length_vanilla(const AttenuationParams& params);

/// Σ_{m=1..k(n-1)+1} Π_{i<=m} f(i + (i-1) mod k).
double expected_length_leap(const AttenuationParams& params);

/// Acceptance probability of leap draft position i: f(i + (i-1) mod k).
double leap_marginal(int i, const AttenuationParams& params);

struct LengthReport {
  double e_vanilla = 0.0;
  double e_leap = 0.0;
  double delta = 0.0;   // e_leap - e_vanilla
  double delta1 = 0.0;  // over the first n positions; never positive
  double delta2 = 0.0;  // the extra positions n+1..k(n-1)+1
  std::vector<double> vanilla_marginal, vanilla_joint;
  std::vector<double> leap_marginal, leap_joint;
};

LengthReport delta_decomposition(const AttenuationParams& params);

class NoCrossoverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kCrossoverMaxGamma = 50.0;

/// Smallest gamma in (0, 50] where the leap advantage changes sign, refined
/// by bisection until |Δ(γ*)| <= tol or the bracket collapses.
double crossover_gamma(int n, int k, double tol = 1e-9);

struct BoundCheck {
  double gamma = 0.0;
  int n = 0;
  double abs_delta1 = 0.0;
  double upper_bound = 0.0;  // ½(1 - exp(-γ(n+1)²/2)), proven for k = 2
  bool upper_holds = false;
  double delta2 = 0.0;
  double lower_estimate = 0.0;  // (1/√γ) exp(-2γn²) / (2n), asymptotic only
  bool lower_holds = false;     // reported, not a guarantee
};

/// Only defined for k = 2.
BoundCheck bound_diagnostics(const AttenuationParams& params);

enum class Strategy { kVanilla, kLeap };

struct MonteCarloResult {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Simulates independent per-position accept events and averages the count
/// of leading successes. Requires at least 10^4 trials.
MonteCarloResult monte_carlo_length(const AttenuationParams& params, long trials, std::uint64_t seed,
                                    Strategy strategy = Strategy::kLeap);

/// CSV panel,k,gamma,i_or_m,value. Panel a: per-position marginals; b:
/// cumulative products; c: expected length for n' = 1..n.
void emit_curves(std::span<const double> gammas, std::span<const int> ks, int n, const std::string& path);

}  // namespace lmtp::theory
