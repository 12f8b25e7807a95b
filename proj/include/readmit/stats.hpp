#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

// Scalar statistical kernels and deterministic summation helpers shared by
// the likelihood, inference, and simulation code paths.
namespace readmit::stats {

/// log of the Normal(mean, sd^2) density at x.
double log_normal_pdf(double x, double mean, double sd);

/// Standard normal CDF.
double norm_cdf(double x);

/// Two-sided normal p-value for a Wald z statistic.
double two_sided_p(double z);

/// Standard normal quantile, Wichura's algorithm AS 241 (PPND16).
/// Polynomial rational approximations only, so results are reproducible
/// across platforms with faithfully rounded log/sqrt.
double norm_quantile(double p);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// CDF of the F distribution with (d1, d2) degrees of freedom.
double f_cdf(double f, double d1, double d2);

/// CDF of the chi-square distribution with df degrees of freedom.
double chi2_cdf(double x, double df);

/// Kolmogorov-Smirnov critical value at significance alpha for sample size n.
double ks_critical(double alpha, std::size_t n);

/// Neumaier-compensated sum in the given (fixed) order.
double compensated_sum(std::span<const double> values);

/// log(sum_i exp(x_i)) guarded against overflow; -inf when all inputs are -inf.
double log_sum_exp(std::span<const double> values);

/// Quantile by linear interpolation between order statistics (type 7).
/// `sorted` must be ascending and nonempty; q in [0, 1].
double quantile_interpolated(std::span<const double> sorted, double q);

/// FNV-1a 64-bit digest, hex-encoded; used for config fingerprints.
std::string fnv1a_hex(std::string_view bytes);

/// Runs fn(i) for i in [0, n). Uses `threads` workers when threads > 1 with a
/// static block partition, so the set of calls (and anything indexed by i) is
/// identical regardless of thread count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Worker count from the READMIT_THREADS environment variable (default 1).
unsigned env_thread_count();

}  // namespace readmit::stats
