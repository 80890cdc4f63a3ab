#include "grader/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "grader/error.hpp"

namespace grader::stats {

double chi_square_sf(double statistic, double df) {
  if (df <= 0.0 || !(statistic > 0.0)) return 1.0;
  if (!std::isfinite(statistic)) return 0.0;
  boost::math::chi_squared dist(df);
  return std::clamp(boost::math::cdf(boost::math::complement(dist, statistic)), 0.0, 1.0);
}

double student_t_sf(double t, double df) {
  if (df <= 0.0) return 1.0;
  if (std::isnan(t)) return 1.0;
  if (t == std::numeric_limits<double>::infinity()) return 0.0;
  if (t == -std::numeric_limits<double>::infinity()) return 1.0;
  boost::math::students_t dist(df);
  return std::clamp(boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

namespace {

// Dense contingency table built from one stratum's rows.
struct Table {
  int rows = 0;
  int cols = 0;
  std::vector<double> n;  // rows x cols

  double& at(int r, int c) { return n[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return n[static_cast<std::size_t>(r) * cols + c]; }

  std::vector<double> row_sums() const {
    std::vector<double> s(rows, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) s[r] += at(r, c);
    return s;
  }
  std::vector<double> col_sums() const {
    std::vector<double> s(cols, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) s[c] += at(r, c);
    return s;
  }
};

Table tabulate(std::span<const std::int64_t> x, std::span<const std::int64_t> y, std::span<const std::size_t> rows) {
  std::unordered_map<std::int64_t, int> xi, yi;
  for (auto k : rows) {
    xi.try_emplace(x[k], static_cast<int>(xi.size()));
    yi.try_emplace(y[k], static_cast<int>(yi.size()));
  }
  Table t;
  t.rows = static_cast<int>(xi.size());
  t.cols = static_cast<int>(yi.size());
  t.n.assign(static_cast<std::size_t>(t.rows) * t.cols, 0.0);
  for (auto k : rows) t.at(xi[x[k]], yi[y[k]]) += 1.0;
  return t;
}

Table merge_rows(const Table& t, int a, int b) {
  Table m;
  m.rows = t.rows - 1;
  m.cols = t.cols;
  m.n.assign(static_cast<std::size_t>(m.rows) * m.cols, 0.0);
  int out = 0;
  for (int r = 0; r < t.rows; ++r) {
    if (r == b) continue;
    for (int c = 0; c < t.cols; ++c) m.at(out, c) = t.at(r, c) + (r == a ? t.at(b, c) : 0.0);
    ++out;
  }
  return m;
}

Table transpose(const Table& t) {
  Table m;
  m.rows = t.cols;
  m.cols = t.rows;
  m.n.assign(t.n.size(), 0.0);
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) m.at(c, r) = t.at(r, c);
  return m;
}

double min_expected(const Table& t) {
  const auto rs = t.row_sums();
  const auto cs = t.col_sums();
  const double total = std::accumulate(rs.begin(), rs.end(), 0.0);
  const double rmin = *std::min_element(rs.begin(), rs.end());
  const double cmin = *std::min_element(cs.begin(), cs.end());
  return rmin * cmin / total;
}

// The two smallest-margin lines of a table, merged into one.
Table merge_smallest_rows(const Table& t) {
  const auto rs = t.row_sums();
  std::vector<int> order(t.rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rs[a] < rs[b]; });
  return merge_rows(t, std::min(order[0], order[1]), std::max(order[0], order[1]));
}

Table merge_sparse(Table t) {
  while (t.rows >= 2 && t.cols >= 2 && (t.rows > 2 || t.cols > 2) && min_expected(t) < 5.0) {
    const auto rs = t.row_sums();
    const auto cs = t.col_sums();
    const double rmin = *std::min_element(rs.begin(), rs.end());
    const double cmin = *std::min_element(cs.begin(), cs.end());
    const bool merge_row = t.rows > 2 && (rmin <= cmin || t.cols == 2);
    if (merge_row) {
      t = merge_smallest_rows(t);
    } else {
      t = transpose(merge_smallest_rows(transpose(t)));
    }
  }
  return t;
}

double pearson_statistic(const Table& t) {
  const auto rs = t.row_sums();
  const auto cs = t.col_sums();
  const double total = std::accumulate(rs.begin(), rs.end(), 0.0);
  double x2 = 0.0;
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      const double e = rs[r] * cs[c] / total;
      if (e > 0.0) x2 += (t.at(r, c) - e) * (t.at(r, c) - e) / e;
    }
  }
  return x2;
}

}  // namespace

ChiSquareResult chi_square_independence(std::span<const std::int64_t> x, std::span<const std::int64_t> y,
                                        std::span<const std::int64_t> strata) {
  if (x.size() != y.size() || (!strata.empty() && strata.size() != x.size())) {
    throw DimensionError("chi_square_independence: column lengths differ");
  }
  ChiSquareResult res;
  if (x.empty()) return res;

  if (strata.empty()) {
    std::vector<std::size_t> all(x.size());
    std::iota(all.begin(), all.end(), 0);
    Table t = tabulate(x, y, all);
    if (t.rows >= 2) res.informative_samples = static_cast<long>(x.size());
    if (t.rows < 2 || t.cols < 2) return res;
    t = merge_sparse(std::move(t));
    res.statistic = pearson_statistic(t);
    res.df = static_cast<double>((t.rows - 1) * (t.cols - 1));
    res.informative_strata = 1;
    res.p_value = chi_square_sf(res.statistic, res.df);
    return res;
  }

  std::unordered_map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < x.size(); ++k) groups[strata[k]].push_back(k);
  // Accumulate in stratum-key order so the sum is independent of hash layout.
  std::vector<std::int64_t> keys;
  keys.reserve(groups.size());
  for (const auto& [key, rows] : groups) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  for (auto key : keys) {
    const auto& rows = groups[key];
    if (rows.size() < 2) continue;
    const Table t = tabulate(x, y, rows);
    if (t.rows < 2) continue;
    res.informative_samples += static_cast<long>(rows.size());
    if (t.cols < 2) continue;
    const double n = static_cast<double>(rows.size());
    res.statistic += pearson_statistic(t) * (n - 1.0) / n;
    res.df += static_cast<double>((t.rows - 1) * (t.cols - 1));
    ++res.informative_strata;
  }
  res.p_value = chi_square_sf(res.statistic, res.df);
  return res;
}

PairedTResult paired_t_test_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test_greater: lengths differ");
  PairedTResult r;
  r.n = static_cast<int>(a.size());
  if (r.n < 2) return r;
  double mean = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) mean += a[k] - b[k];
  mean /= r.n;
  double ss = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k] - mean;
    ss += d * d;
  }
  r.mean_difference = mean;
  const double var = ss / (r.n - 1);
  if (var <= 1e-300) {
    r.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p_value = mean > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.t = mean / std::sqrt(var / r.n);
  r.p_value = student_t_sf(r.t, r.n - 1);
  return r;
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("correlation: bad lengths");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace grader::stats
