#pragma once

// Analytic layer of the phase-space bridge: diffusion schedule, optimal-control
// gain, transition matrices, bridge mean/covariance, Cholesky factors, score
// scale, normalizers and time grids. Everything here is deterministic and,
// once a KernelTable is built, immutable.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "agm/errors.hpp"

namespace agm {

// Kernel evaluations are rejected this close to the t=1 singularity.
inline constexpr double kTimeSingularityGuard = 1e-9;
// Determinant floor used when the bridge covariance degenerates near t=1.
inline constexpr double kPsdDetFloor = 1e-12;

// g(t) = p * (tt - t). Defaults give the g(t) = 3(1-t) schedule.
struct DiffusionSchedule {
    double p = 3.0;
    double tt = 1.0;

    double g(double t) const { return p * (tt - t); }
};

double g_schedule(const DiffusionSchedule& sched, double t);

// Control gain P11 = -4 / (g(t)^2 (t-1)). Throws NumericError at t >= 1 or g=0.
double p11(const DiffusionSchedule& sched, double t);

// g(t)^2 * P11 = 4 / (1 - t), independent of the schedule. Throws at t >= 1.
double combined_gain(double t);

// Closed-form solution of dP/dt = A P + P A^T - g g^T with A = [[0,1],[0,0]],
// g = [0, g_const], terminal condition P(1) = [[0,0],[0,omega]].
struct LyapunovSolution {
    double t = 0.0;
    double omega = 0.0;
    double g = 1.0;
    std::array<std::array<double, 2>, 2> P{};
    std::array<std::array<double, 2>, 2> Pinv{};
};

LyapunovSolution lyapunov_solution(double t, double omega, double g_const);

// Free-flow transition matrix Phi(t, s) = [[1, t-s],[0,1]].
std::array<std::array<double, 2>, 2> transition(double t, double s);

// Bridge mean coefficients: mu_t = x1 * (mx(t), mv(t)).
struct MeanCoeffs {
    double mx;
    double mv;
};

MeanCoeffs mean_coeffs(double t);

struct Covariance2 {
    double Sxx;
    double Sxv;
    double Svv;
};

struct Cholesky2 {
    double Lxx;
    double Lxv;
    double Lvv;
    bool degenerate = false;  // determinant was clamped to kPsdDetFloor
};

// Lower Cholesky factor of [[Sxx,Sxv],[Sxv,Svv]]. Near-singular input is
// clamped (det -> kPsdDetFloor) and flagged; genuinely non-PSD input throws.
Cholesky2 cholesky2(double Sxx, double Sxv, double Svv);

// Score scale ell = sqrt(Sxx / (Sxx*Svv - Sxv^2)) = 1 / Lvv.
double score_scale(double Sxx, double Sxv, double Svv);

// Warped time grid t_i = ((N-i)/N t0^(1/kappa) + i/N tN^(1/kappa))^kappa.
struct TimeGrid {
    int N = 20;
    double kappa = 2.0;
    double t0 = 1e-5;
    double tN = 0.999;
    std::vector<double> ts;  // N+1 strictly increasing times
};

TimeGrid time_grid(int N, double kappa, double t0, double tN);

enum class DynamicsMode { Sde, Ode };

// Per-time analytic bundle served by KernelTable.
struct KernelPoint {
    double t;
    double g;
    double P11;
    double mx, mv;
    double Sxx, Sxv, Svv;
    double Lxx, Lxv, Lvv;
    double ell;
    double z_sde, z_ode;
    bool degenerate = false;

    double z(DynamicsMode mode) const { return mode == DynamicsMode::Sde ? z_sde : z_ode; }
};

// Bridge covariance integrated by RK4 at a fixed fine step, with cubic Hermite
// interpolation (exact ODE derivatives) between fine nodes. The Appendix-style
// closed forms live in the test oracle, not here.
class CovarianceModel {
  public:
    CovarianceModel(DiffusionSchedule sched, Covariance2 sigma0, double t_max,
                    double fine_step = 1e-4);

    Covariance2 eval(double t) const;
    double t_max() const { return t_max_; }
    const DiffusionSchedule& schedule() const { return sched_; }

  private:
    Covariance2 rhs(double t, const Covariance2& s) const;

    DiffusionSchedule sched_;
    double t_max_;
    double step_;
    std::vector<Covariance2> fine_;  // values at i*step_, i = 0..n
};

// Immutable per-(grid, schedule, Sigma0, sigma_data) cache of all analytic
// quantities. Safe for unrestricted concurrent reads after construction.
class KernelTable {
  public:
    KernelTable(TimeGrid grid, DiffusionSchedule sched, double sigma0_k, double sigma_data);

    const TimeGrid& grid() const { return grid_; }
    const DiffusionSchedule& schedule() const { return sched_; }
    double sigma0_k() const { return k_; }
    double sigma_data() const { return sigma_data_; }
    Covariance2 sigma0() const { return {1.0, k_, 1.0}; }

    const KernelPoint& at(std::size_t i) const { return points_.at(i); }
    std::size_t size() const { return points_.size(); }

    // Full bundle at an arbitrary t in [0, tN].
    KernelPoint eval(double t) const;
    double z(double t, DynamicsMode mode) const { return eval(t).z(mode); }

    void export_table(std::ostream& os) const;
    void export_table_file(const std::string& path) const;

  private:
    TimeGrid grid_;
    DiffusionSchedule sched_;
    double k_;
    double sigma_data_;
    CovarianceModel cov_;
    std::vector<KernelPoint> points_;
};

// Normalizer z_t for the regression labels; kind selects SDE or ODE force.
double normalizer(const KernelPoint& kp, double sigma_data, DynamicsMode kind);

// Parse a table previously written by export_table.
std::vector<KernelPoint> import_table(std::istream& is);

}  // namespace agm
