#pragma once

// Minimal SVG emitters for 2D scatter and trajectory plots.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "agm/samplers.hpp"

namespace agm {

// One dot per column of `points` (2 x n), auto-scaled square viewport.
void svg_scatter(const std::string& path, const Eigen::MatrixXd& points);

// Position paths of the given records as polylines.
void svg_trajectories(const std::string& path, const std::vector<TrajectoryRecord>& records);

}  // namespace agm
