#pragma once

#include <cstdint>
#include <vector>

#include "sope/rng.hpp"

namespace sope {

// Two trajectory folds crossed with timestep parity: four cross-fitting cells.
// Cell key(i, t) identifies the model used to *predict* row (i, t); that model
// is trained on the complementary trajectory fold at the same parity.
struct FoldAssignment {
  int K = 2;
  int T = 0;
  std::vector<int> traj_fold;  // trajectory index -> {0, 1}

  int key(int i, int t) const { return traj_fold[i] * 2 + (t & 1); }
  static constexpr int kCells = 4;
};

// Shuffled near-equal split of [n] into K=2 folds, deterministic given seed.
FoldAssignment assign_folds(int n, int T, int K, std::uint64_t seed);

}  // namespace sope
