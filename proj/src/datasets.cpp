#include "agm/datasets.hpp"

#include <cmath>

namespace agm {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;
constexpr int kSigmaRefDraws = 100000;

Eigen::Vector2d draw_mog(const ToyDataset& ds, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, ds.modes - 1);
    std::normal_distribution<double> normal(0.0, ds.noise_std);
    const double angle = 2.0 * kPi * pick(rng) / ds.modes;
    return {ds.radius * std::cos(angle) + normal(rng), ds.radius * std::sin(angle) + normal(rng)};
}

// Interleaved spirals r(u) = u scaled so the outermost point touches |coord|=4,
// with small isotropic jitter.
Eigen::Vector2d draw_swissroll(const ToyDataset& ds, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, ds.rolls - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, ds.noise_std);
    const double turns = 1.75;
    const double u = std::sqrt(unif(rng));  // uniform in arc density toward the rim
    const double theta = 2.0 * kPi * (turns * u + static_cast<double>(pick(rng)) / ds.rolls);
    const double r = 4.0 * u;
    return {r * std::cos(theta) + normal(rng), r * std::sin(theta) + normal(rng)};
}

}  // namespace

ToyDataset make_dataset(const std::string& name, std::uint64_t seed) {
    ToyDataset ds;
    ds.seed = seed;
    if (name == "mog8") {
        ds.kind = ToyKind::Mog8;
    } else if (name == "swissroll") {
        ds.kind = ToyKind::SwissRoll;
        ds.noise_std = 0.05;
    } else {
        throw ConfigError("unknown dataset: " + name + " (expected mog8|swissroll)");
    }
    return ds;
}

Eigen::MatrixXd sample_data(const ToyDataset& ds, int n, std::mt19937_64& rng) {
    if (n < 1) throw ConfigError("sample_data: n must be >= 1");
    Eigen::MatrixXd out(ds.dim, n);
    for (int i = 0; i < n; ++i) {
        out.col(i) = ds.kind == ToyKind::Mog8 ? draw_mog(ds, rng) : draw_swissroll(ds, rng);
    }
    return out;
}

double sigma_data(const ToyDataset& ds) {
    std::mt19937_64 rng(ds.seed ^ 0x5f375a86ULL);
    const Eigen::MatrixXd ref = sample_data(ds, kSigmaRefDraws, rng);
    const double mean = ref.mean();
    const double var = (ref.array() - mean).square().mean();
    return std::sqrt(var);
}

Eigen::MatrixXd mog_centers(const ToyDataset& ds) {
    Eigen::MatrixXd centers(2, ds.modes);
    for (int k = 0; k < ds.modes; ++k) {
        const double angle = 2.0 * kPi * k / ds.modes;
        centers.col(k) << ds.radius * std::cos(angle), ds.radius * std::sin(angle);
    }
    return centers;
}

int nearest_mode(const ToyDataset& ds, const Eigen::Vector2d& x) {
    const Eigen::MatrixXd centers = mog_centers(ds);
    int best = 0;
    double best_d = (centers.col(0) - x).squaredNorm();
    for (int k = 1; k < ds.modes; ++k) {
        const double d = (centers.col(k) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

}  // namespace agm
