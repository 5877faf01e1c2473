#pragma once

// Generation-time integrators: multistep Exponential Integrator (ODE),
// Symmetric Splitting Sampler (SDE), sampling-hop reconstruction and the
// conditional-generation helpers.

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "agm/bridge.hpp"
#include "agm/phase_kernel.hpp"

namespace agm {

class ForceNet;

struct ConditionalInit {
    Vec x_cond;
    double xi = 0.0;  // velocity mixing coefficient in [0, 1]
};

struct VelocityGuidance {
    Vec x_target;
    double c = 0.25;  // guidance length: applied while t <= c
};

struct InpaintSettings {
    Vec x_known;
    Vec mask;  // entries in {0, 1}; 1 takes the known coordinate
};

struct SamplerPlan {
    TimeGrid grid;
    DynamicsMode mode = DynamicsMode::Ode;
    int multistep = 2;  // w
    std::optional<int> hop_index;  // early-stop evaluation index; default last
    std::optional<ConditionalInit> conditional;
    std::optional<VelocityGuidance> guidance;
    std::optional<InpaintSettings> inpaint;
};

// Normalized force estimate plus the normalizer profile it was trained under.
// The integrators consume s and weight it by z inside the step integrals.
struct ForceSource {
    std::function<Vec(const PhaseState&, double)> s;
    std::function<double(double)> z;
};

ForceSource net_force(const ForceNet& net, const KernelTable& kernel, DynamicsMode mode);
// Raw force F with unit normalizer; used by the exact-force oracles.
ForceSource raw_force(std::function<Vec(const PhaseState&, double)> F);

struct EICoeffs {
    double c_pos;  // integral of (t_{i+1} - tau) z_tau M_{i,j}(tau)
    double c_vel;  // integral of z_tau M_{i,j}(tau)
};

// Multistep coefficients for step i, history index j (0 = current), order w;
// 16-node Gauss-Legendre per step interval.
EICoeffs ei_coeffs(const TimeGrid& grid, int i, int j, int w,
                   const std::function<double(double)>& z);

// One EI update from t_i to t_{i+1}. history[j] is the normalized force
// evaluation at t_{i-j}; history.size() determines the effective order.
PhaseState ei_step(const PhaseState& m, const std::vector<Vec>& history, int i,
                   const TimeGrid& grid, const std::function<double(double)>& z);

// One Strang-splitting SDE step: half transport + noise, full force kick,
// half transport + noise.
PhaseState sss_step(const PhaseState& m, const Vec& force, double t, double delta,
                    const DiffusionSchedule& sched, std::mt19937_64& rng);

// Algebraic early reconstruction of x1 from the force evaluation at (m, t).
Vec sampling_hop(const PhaseState& m, const Vec& force, const KernelPoint& kp,
                 DynamicsMode mode);

// Prior draw m0 ~ N(0, Sigma0 (x) I_d).
PhaseState prior_draw(const KernelTable& kernel, int dim, std::mt19937_64& rng);

// Position from the prior; velocity mixed toward (x_cond - x0)/(1 - t0).
PhaseState conditional_init(const Vec& x_cond, double xi, const KernelTable& kernel,
                            std::mt19937_64& rng);

// Resample the velocity from the x-conditional Gaussian with mean evaluated at
// x1 = x_target.
PhaseState dyn_v_guidance(const PhaseState& m, double t, const Vec& x_target,
                          const KernelTable& kernel, std::mt19937_64& rng);

// Coordinate-wise merge: mask selects x_known, the rest keeps x_tilde.
Vec inpaint_hop(const Vec& x_tilde, const Vec& x_known, const Vec& mask);

struct TrajectoryRecord {
    std::vector<double> ts;
    std::vector<PhaseState> states;
    std::vector<Vec> forces;
    std::vector<Vec> xhat;
    Vec final_sample;
};

struct SampleResult {
    std::vector<Vec> samples;
    std::vector<TrajectoryRecord> records;  // filled only when requested
    int nfe = 0;
};

SampleResult sample(const ForceSource& source, const SamplerPlan& plan,
                    const KernelTable& kernel, int dim, std::mt19937_64& rng, int n,
                    bool keep_records = false);

}  // namespace agm
