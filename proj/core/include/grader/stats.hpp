#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace grader::stats {

// Upper tail of the chi-squared distribution; 1 when df <= 0.
double chi_square_sf(double statistic, double df);

// Upper tail of Student's t with `df` degrees of freedom.
double student_t_sf(double t, double df);

struct ChiSquareResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  int informative_strata = 0;
  // Rows inside strata where x takes at least two values. Such strata carry
  // evidence about independence even when y is constant there.
  long informative_samples = 0;
};

// Pearson test of independence between two categorical columns.
//
// Without strata this is the plain (Yates-free) Pearson statistic on the
// contingency table; rows or columns are merged smallest-margin-first while
// any expected count is below 5 and the table is larger than 2x2.
//
// With strata the statistic is summed over strata and so are the degrees of
// freedom (r_s - 1)(c_s - 1) of each stratum's reduced table. Each stratum's
// statistic is scaled by (n_s - 1) / n_s so its permutation mean equals its
// df exactly; strata where either column is constant add nothing to the
// statistic or df.
ChiSquareResult chi_square_independence(std::span<const std::int64_t> x, std::span<const std::int64_t> y,
                                        std::span<const std::int64_t> strata = {});

struct PairedTResult {
  double t = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;
  int n = 0;
};

// One-sided paired t-test of H1: mean(a - b) > 0.
PairedTResult paired_t_test_greater(std::span<const double> a, std::span<const double> b);

// Pearson correlation; 0 when either column is constant.
double correlation(std::span<const double> a, std::span<const double> b);

}  // namespace grader::stats
