#pragma once

#include <span>
#include <string>
#include <vector>

namespace sope {

// Logged trajectories in columnar layout. Row (i, t) lives at index i*T + t;
// contexts are row-major with `dim` entries per row.
struct Dataset {
  int n = 0;    // trajectories
  int T = 0;    // decision epochs per trajectory
  int dim = 0;  // context dimension

  std::vector<double> x;  // n*T*dim
  std::vector<int> s;     // inventory at decision time
  std::vector<int> a;     // action taken
  std::vector<int> y;     // observed outcome
  std::vector<double> r;  // realized reward

  int rows() const { return n * T; }
  int idx(int i, int t) const { return i * T + t; }
  std::span<const double> xrow(int i, int t) const {
    return {x.data() + static_cast<std::size_t>(idx(i, t)) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const double> xrow(int row) const {
    return {x.data() + static_cast<std::size_t>(row) * dim, static_cast<std::size_t>(dim)};
  }
};

// CSV schema: traj_id,t,s,x_0..x_{dim-1},a,y,r with one row per (i, t).
// Doubles are written with 17 significant digits so round-trips are exact.
void write_csv(const Dataset& data, const std::string& path);
Dataset read_csv(const std::string& path);

}  // namespace sope
