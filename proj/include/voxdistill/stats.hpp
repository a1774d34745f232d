#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace voxdistill {

enum class StatTest : std::uint8_t { OneSampleT, WilcoxonRankSum };
enum class Alternative : std::uint8_t { TwoSided, Greater, Less };

std::string_view alternative_name(Alternative alt);

struct StatResult {
  double statistic = 0.0;
  double p_value = 1.0;
  StatTest test = StatTest::OneSampleT;
  Alternative alternative = Alternative::TwoSided;
};

/// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
double normal_cdf(double z);

/// t = (mean - mu0) / (s / sqrt(n)) with n - 1 degrees of freedom. Greater
/// tests mean > mu0. Throws DegenerateSample for n < 2 or zero variance.
StatResult one_sample_t_test(std::span<const double> samples, double mu0 = 1.0,
                             Alternative alt = Alternative::TwoSided);

enum class RankSumMethod : std::uint8_t { Auto, Exact, Normal };

// Auto switches from the exact null distribution to the normal
// approximation above this many pooled observations.
inline constexpr int kExactRankSumLimit = 40;

/// Statistic is the midrank sum of `a`. Greater tests whether `a` tends to
/// be larger. Exact uses the permutation distribution of the midranks;
/// Normal uses tie and continuity corrections. Throws DegenerateSample on
/// an empty sample.
StatResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                             Alternative alt = Alternative::TwoSided, RankSumMethod method = RankSumMethod::Auto);

double mean(std::span<const double> x);
/// Sample standard deviation / sqrt(n); 0 for n < 2.
double standard_error(std::span<const double> x);
double median(std::span<const double> x);

}  // namespace voxdistill
