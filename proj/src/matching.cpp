#include "bcg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bcg::matching {

namespace {

constexpr double kInfeasible = 1e12;

// Shortest-augmenting-path assignment for n rows over m columns, n <= m.
// Returns col_of_row. Deterministic: strict comparisons resolve ties by
// the first index scanned.
std::vector<std::size_t> solve_rows(const std::vector<double>& a,
                                    std::size_t n, std::size_t m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> col_of_row(n, m);  // m = unassigned sentinel
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

}  // namespace

Assignment hungarian(const CostMatrix& costs) {
  if (costs.c.size() != costs.rows * costs.cols)
    throw InvalidInput("hungarian: matrix storage size mismatch");
  for (double x : costs.c)
    if (!std::isfinite(x))
      throw InvalidInput("hungarian: cost matrix has a non-finite entry");

  Assignment out;
  if (costs.rows == 0 || costs.cols == 0) return out;

  if (costs.rows <= costs.cols) {
    const auto col_of_row = solve_rows(costs.c, costs.rows, costs.cols);
    for (std::size_t r = 0; r < costs.rows; ++r)
      out.pairs.emplace_back(r, col_of_row[r]);
  } else {
    // Transpose so the augmenting side is the smaller one.
    std::vector<double> tr(costs.rows * costs.cols);
    for (std::size_t r = 0; r < costs.rows; ++r)
      for (std::size_t c = 0; c < costs.cols; ++c)
        tr[c * costs.rows + r] = costs.at(r, c);
    const auto row_of_col = solve_rows(tr, costs.cols, costs.rows);
    for (std::size_t c = 0; c < costs.cols; ++c)
      out.pairs.emplace_back(row_of_col[c], c);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  for (const auto& [r, c] : out.pairs) out.total_cost += costs.at(r, c);
  return out;
}

double match_cost(double p_peak, double t_hat, double t_gt, double lambda_cls,
                  double lambda_pt, bool log_class_cost) {
  const double cls = log_class_cost ? -std::log(std::max(p_peak, 1e-12))
                                    : -p_peak;
  return lambda_cls * cls + lambda_pt * std::fabs(t_hat - t_gt);
}

Assignment match_sets(const std::vector<double>& peak_probs,
                      const std::vector<double>& locations,
                      const core::PeakAnnotation& gt, std::size_t T,
                      const MatchWeights& w) {
  const std::size_t K = peak_probs.size();
  if (locations.size() != K)
    throw InvalidInput("match_sets: probs/locations size mismatch");
  const std::size_t N = gt.peaks.size();
  if (K < N)
    throw InvalidInput(
        "match_sets: more ground-truth peaks than queries; raise num_queries "
        "(K=" + std::to_string(K) + ", N=" + std::to_string(N) + ")");
  if (N == 0) return {};

  CostMatrix costs;
  costs.rows = K;
  costs.cols = N;
  costs.c.resize(K * N);
  for (std::size_t j = 0; j < N; ++j) {
    const double u = core::to_normalized_time(gt.peaks[j], T);
    for (std::size_t k = 0; k < K; ++k)
      costs.at(k, j) = match_cost(peak_probs[k], locations[k], u, w.lambda_cls,
                                  w.lambda_pt, w.log_class_cost);
  }
  return hungarian(costs);
}

ToleranceMatch tolerance_match(const core::DetectionSet& pred,
                               const core::PeakAnnotation& gt,
                               int delta_eval) {
  if (delta_eval < 0) throw InvalidInput("tolerance_match: delta_eval < 0");

  // Canonical prediction order (a DetectionSet is unordered) so tie
  // resolution never depends on producer ordering.
  std::vector<int> ptimes;
  ptimes.reserve(pred.events.size());
  for (const auto& e : pred.events) ptimes.push_back(e.time);
  std::sort(ptimes.begin(), ptimes.end());

  const std::size_t P = ptimes.size();
  const std::size_t N = gt.peaks.size();

  ToleranceMatch out;
  std::vector<char> pred_used(P, 0), gt_used(N, 0);

  if (P > 0 && N > 0) {
    CostMatrix costs;
    costs.rows = P;
    costs.cols = N;
    costs.c.resize(P * N);
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        const double d = std::fabs(static_cast<double>(ptimes[i]) -
                                   static_cast<double>(gt.peaks[j]));
        costs.at(i, j) = d <= static_cast<double>(delta_eval) ? d : kInfeasible;
      }
    const Assignment assign = hungarian(costs);
    for (const auto& [i, j] : assign.pairs) {
      if (costs.at(i, j) >= kInfeasible) continue;  // gated out
      out.tp_pairs.emplace_back(ptimes[i], gt.peaks[j]);
      pred_used[i] = 1;
      gt_used[j] = 1;
    }
  }

  std::sort(out.tp_pairs.begin(), out.tp_pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (std::size_t i = 0; i < P; ++i)
    if (!pred_used[i]) out.fp_times.push_back(ptimes[i]);
  for (std::size_t j = 0; j < N; ++j)
    if (!gt_used[j]) out.fn_times.push_back(gt.peaks[j]);
  return out;
}

}  // namespace bcg::matching
