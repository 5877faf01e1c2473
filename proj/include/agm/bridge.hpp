#pragma once

// Training-side mathematics: the optimal control, forward pair sampling, the
// SDE/ODE force targets the network regresses, and the reweighted loss.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "agm/phase_kernel.hpp"

namespace agm {

using Vec = Eigen::VectorXd;

struct PhaseState {
    Vec x;
    Vec v;

    Eigen::Index dim() const { return x.size(); }
};

struct TrainingDraw {
    Vec x1;
    double t;
    PhaseState m;
    Vec eps0;
    Vec eps1;
    Vec target_sde;
    Vec target_ode;
};

struct LossWeights {
    double sigma_data = 1.0;

    double lambda(double t) const { return 1.0 / (1.0 - t); }
};

// a*(m, t) = g^2 P11 ((x1 - x)/(1-t) - v) = (4/(1-t)) ((x1 - x)/(1-t) - v).
Vec optimal_control(const PhaseState& m, const Vec& x1, double t);

// Composite form of a* in (x1, eps0, eps1); identical to optimal_control
// through the reparameterization m = mu_t + L_t eps.
Vec force_target_sde(const Vec& x1, const Vec& eps0, const Vec& eps1, const KernelPoint& kp);

// SDE target plus the velocity-score correction +1/2 g^2 ell eps1.
Vec force_target_ode(const Vec& x1, const Vec& eps0, const Vec& eps1, const KernelPoint& kp);

// Draw m_t ~ N(mu_t, Sigma_t) conditioned on x1 and fill both targets.
TrainingDraw sample_pair(const Vec& x1, double t, const KernelTable& kernel, std::mt19937_64& rng);

class ForceNet;  // model.hpp

struct LossValue {
    double loss = 0.0;
    // flattened parameter gradients, same layout as ForceNet::parameters()
    Eigen::VectorXd grad;
};

// Mean over the batch of lambda(t) ||s_theta(m,t) - F_target/z_t||^2 for the
// given mode, with reverse-mode gradients.
LossValue training_loss(ForceNet& net, const std::vector<TrainingDraw>& batch,
                        const LossWeights& weights, const KernelTable& kernel,
                        DynamicsMode mode);

}  // namespace agm
