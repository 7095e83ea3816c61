#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "bcg/core.hpp"
#include "bcg/matching.hpp"
#include "bcg/rng.hpp"

// Shared helpers and the independent oracles used by the unit and
// acceptance suites. Oracles are direct transcriptions of the definitions
// and never call the implementation paths they check.

namespace testutil {

inline std::vector<double> random_vec(bcg::rng::Engine& g, std::size_t n,
                                      double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * bcg::rng::uniform01(g);
  return v;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  const auto dir =
      std::filesystem::temp_directory_path() / ("bcg_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---- TPS oracle: O(T^2)-style transcription of threshold / cluster /
// argmax with chaining and smallest-index tie-breaking. ----
inline bcg::core::DetectionSet tps_oracle(const std::vector<double>& y,
                                          double tau, int delta) {
  const int T = static_cast<int>(y.size());
  std::vector<int> cand;
  for (int t = 0; t < T; ++t)
    if (y[static_cast<std::size_t>(t)] >= tau) cand.push_back(t);

  bcg::core::DetectionSet out;
  std::size_t i = 0;
  while (i < cand.size()) {
    // Extend the cluster while the next candidate chains within delta.
    std::size_t j = i;
    while (j + 1 < cand.size() && cand[j + 1] - cand[j] < delta) ++j;
    // Full scan for the argmax; first maximum wins.
    int best = cand[i];
    for (std::size_t k = i; k <= j; ++k) {
      if (y[static_cast<std::size_t>(cand[k])] >
          y[static_cast<std::size_t>(best)])
        best = cand[k];
    }
    out.events.push_back({best, y[static_cast<std::size_t>(best)]});
    i = j + 1;
  }
  return out;
}

// ---- Assignment oracle: exhaustive minimum over all permutations. ----
// Returns the minimal total cost of assigning every column (cols <= rows).
inline double assignment_oracle(const bcg::matching::CostMatrix& m) {
  const std::size_t rows = m.rows, cols = m.cols;
  std::vector<std::size_t> row_ids(rows);
  std::iota(row_ids.begin(), row_ids.end(), 0);

  double best = 0.0;
  bool first = true;
  // Choose which rows serve the columns, in every order: permutations of
  // rows taken cols at a time.
  std::vector<std::size_t> pick(cols);
  std::vector<char> used(rows, 0);
  const std::function<void(std::size_t, double)> rec = [&](std::size_t j,
                                                           double acc) {
    if (j == cols) {
      if (first || acc < best) {
        best = acc;
        first = false;
      }
      return;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      if (used[r]) continue;
      used[r] = 1;
      rec(j + 1, acc + m.at(r, j));
      used[r] = 0;
    }
  };
  rec(0, 0.0);
  return best;
}

}  // namespace testutil
