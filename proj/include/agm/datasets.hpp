#pragma once

// 2D toy data generators for desk-scale experiments.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "agm/errors.hpp"

namespace agm {

enum class ToyKind { Mog8, SwissRoll };

struct ToyDataset {
    ToyKind kind = ToyKind::Mog8;
    int dim = 2;
    // mixture-of-Gaussians geometry
    int modes = 8;
    double radius = 4.0;
    double noise_std = 0.2;
    // swiss roll geometry
    int rolls = 2;
    std::uint64_t seed = 0;
};

ToyDataset make_dataset(const std::string& name, std::uint64_t seed);

// n points, one per column (dim x n).
Eigen::MatrixXd sample_data(const ToyDataset& ds, int n, std::mt19937_64& rng);

// Population std over all coordinates of a 1e5-draw reference sample drawn at
// the dataset seed. Deterministic for a fixed dataset.
double sigma_data(const ToyDataset& ds);

// Mode centers of the MoG layout (dim x modes).
Eigen::MatrixXd mog_centers(const ToyDataset& ds);

// Index of the nearest mode center; the mode "basin" in the steering tests.
int nearest_mode(const ToyDataset& ds, const Eigen::Vector2d& x);

}  // namespace agm
