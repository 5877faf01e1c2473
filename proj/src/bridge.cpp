#include "agm/bridge.hpp"

#include <cmath>

#include "agm/model.hpp"

namespace agm {

Vec optimal_control(const PhaseState& m, const Vec& x1, double t) {
    const double G = combined_gain(t);
    const double omt = 1.0 - t;
    return G * ((x1 - m.x) / omt - m.v);
}

Vec force_target_sde(const Vec& x1, const Vec& eps0, const Vec& eps1, const KernelPoint& kp) {
    const double omt = 1.0 - kp.t;
    const double G = 4.0 / omt;
    const double zhat = kp.Lxx / omt + kp.Lxv;
    return 4.0 * omt * omt * x1 - G * (zhat * eps0 + kp.Lvv * eps1);
}

Vec force_target_ode(const Vec& x1, const Vec& eps0, const Vec& eps1, const KernelPoint& kp) {
    return force_target_sde(x1, eps0, eps1, kp) + 0.5 * kp.g * kp.g * kp.ell * eps1;
}

TrainingDraw sample_pair(const Vec& x1, double t, const KernelTable& kernel,
                         std::mt19937_64& rng) {
    const KernelPoint kp = kernel.eval(t);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto d = x1.size();

    TrainingDraw draw;
    draw.x1 = x1;
    draw.t = t;
    draw.eps0.resize(d);
    draw.eps1.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) draw.eps0[i] = normal(rng);
    for (Eigen::Index i = 0; i < d; ++i) draw.eps1[i] = normal(rng);
    draw.m.x = kp.mx * x1 + kp.Lxx * draw.eps0;
    draw.m.v = kp.mv * x1 + kp.Lxv * draw.eps0 + kp.Lvv * draw.eps1;
    draw.target_sde = force_target_sde(x1, draw.eps0, draw.eps1, kp);
    draw.target_ode = force_target_ode(x1, draw.eps0, draw.eps1, kp);
    return draw;
}

LossValue training_loss(ForceNet& net, const std::vector<TrainingDraw>& batch,
                        const LossWeights& weights, const KernelTable& kernel,
                        DynamicsMode mode) {
    if (batch.empty()) throw ConfigError("training_loss: empty batch");
    const auto B = static_cast<Eigen::Index>(batch.size());
    const auto d = batch.front().x1.size();

    std::vector<const PhaseState*> ms(batch.size());
    std::vector<double> ts(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ms[i] = &batch[i].m;
        ts[i] = batch[i].t;
    }
    const Mat input = net.features(ms, ts);

    ForceNet::ForwardCache cache;
    const Mat out = net.forward_batch(input, &cache);

    Mat residual(d, B);
    Eigen::VectorXd lam(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const TrainingDraw& dr = batch[static_cast<std::size_t>(b)];
        const double z = kernel.z(dr.t, mode);
        const Vec& target = mode == DynamicsMode::Sde ? dr.target_sde : dr.target_ode;
        residual.col(b) = out.col(b) - target / z;
        lam[b] = weights.lambda(dr.t);
    }

    LossValue lv;
    lv.loss = (residual.colwise().squaredNorm().transpose().cwiseProduct(lam)).sum() /
              static_cast<double>(B);
    if (!std::isfinite(lv.loss)) {
        throw NumericError("training_loss: non-finite loss");
    }
    const Mat dY = 2.0 / static_cast<double>(B) * residual * lam.asDiagonal();
    lv.grad = net.backward(cache, dY);
    return lv;
}

}  // namespace agm
