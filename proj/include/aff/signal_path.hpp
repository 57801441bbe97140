#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace aff {

/// A sampled signal on a time grid. States are stored as coordinate vectors:
/// a length-1 vector for CIR, vech coordinates for matrix-valued signals
/// (matrix_dim > 0 gives the matrix side length).
struct SignalPath {
  std::vector<double> grid;
  std::vector<Eigen::VectorXd> states;
  std::uint64_t seed = 0;
  int matrix_dim = 0;

  std::size_t size() const noexcept { return grid.size(); }
};

}  // namespace aff
