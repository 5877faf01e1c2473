#pragma once

// Desk-scale sample quality metrics: energy distance, trajectory straightness
// and moment audits against the analytic kernel.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "agm/phase_kernel.hpp"
#include "agm/samplers.hpp"

namespace agm {

// U-statistic energy distance between two point sets (points are columns).
double energy_distance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Max perpendicular deviation of the position path from the chord between its
// endpoints, normalized by the chord length. Empty when the chord degenerates.
std::optional<double> straightness(const TrajectoryRecord& record);

struct MomentAudit {
    double z_mean_x, z_mean_v;      // worst coordinate z-scores of the means
    double z_sxx, z_sxv, z_svv;     // z-scores of the covariance entries
    double max_abs_z() const;
};

// Compare empirical phase-space moments at time t (states from bridge draws
// conditioned on x1) against the analytic mean/covariance.
MomentAudit moment_audit(const std::vector<PhaseState>& states, const Eigen::VectorXd& x1,
                         const KernelTable& kernel, double t);

struct EvalReport {
    double energy_distance = 0.0;
    double occupancy_divergence = 0.0;  // total variation vs uniform mode weights
    std::optional<double> straightness;
    double max_moment_z = 0.0;
    int nfe = 0;
    double wall_seconds = 0.0;
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Total variation between empirical MoG mode occupancy and the uniform law.
double occupancy_divergence(const Eigen::MatrixXd& samples, const struct ToyDataset& ds);

std::string format_report(const EvalReport& r);
// One machine-readable row per run, appended under a header created on demand.
void append_ledger(const std::string& path, const EvalReport& r);

}  // namespace agm
