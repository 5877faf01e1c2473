#pragma once

// Small dense force network s_theta(m, t) with hand-rolled reverse-mode
// gradients, AdamW, and an EMA shadow of the parameters.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "agm/bridge.hpp"
#include "agm/phase_kernel.hpp"

namespace agm {

using Mat = Eigen::MatrixXd;

// MLP over [x, v, fourier(t)] with SiLU hidden activations and a linear head.
class ForceNet {
  public:
    // hidden: widths of the hidden layers; n_fourier: even count of sin/cos
    // time features with frequencies 2^0 .. 2^(n_fourier/2 - 1); input_scale
    // divides the (x, v) features so data of any magnitude enters near unit
    // range.
    ForceNet(int dim, std::vector<int> hidden, int n_fourier = 16, double input_scale = 1.0);

    void init(std::mt19937_64& rng);

    int dim() const { return dim_; }
    int n_fourier() const { return n_fourier_; }
    double input_scale() const { return input_scale_; }
    const std::vector<int>& widths() const { return widths_; }
    Eigen::Index param_count() const { return n_params_; }

    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);

    // Input feature assembly: column per sample, [x; v; fourier(t)].
    Mat features(const std::vector<const PhaseState*>& ms, const std::vector<double>& ts) const;
    Vec feature(const PhaseState& m, double t) const;

    struct ForwardCache {
        Mat input;                // in_dim x B
        std::vector<Mat> pre;     // pre-activations per layer
        std::vector<Mat> act;     // post-activations per hidden layer
        Mat output;               // dim x B
    };

    Mat forward_batch(const Mat& input, ForwardCache* cache = nullptr) const;
    Vec forward(const PhaseState& m, double t) const;

    // Gradients of sum_b <dY.col(b), output.col(b)> w.r.t. the parameters.
    Eigen::VectorXd backward(const ForwardCache& cache, const Mat& dY) const;

    void save(const std::string& path, const Eigen::VectorXd& ema, std::int64_t step,
              std::uint64_t seed, const std::string& config_hash) const;

  private:
    int dim_;
    int n_fourier_;
    double input_scale_ = 1.0;
    std::vector<int> widths_;  // in, hidden..., out
    std::vector<Mat> W_;
    std::vector<Vec> b_;
    Eigen::Index n_params_;
};

struct Checkpoint {
    ForceNet net;
    Eigen::VectorXd ema;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

Checkpoint load_checkpoint(const std::string& path);

struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    std::int64_t warmup = 5000;
    std::int64_t step_count = 0;
    Eigen::VectorXd m;
    Eigen::VectorXd v;

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

struct Ema {
    double decay = 0.9999;
    Eigen::VectorXd shadow;

    void update(const Eigen::VectorXd& params);
};

struct TrainConfig {
    std::int64_t iterations = 50000;
    int batch_size = 1024;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::int64_t warmup = 5000;
    double ema_decay = 0.9999;
    std::uint64_t seed = 0;
    std::vector<int> hidden = {64, 64, 64};
    int n_fourier = 16;
    DynamicsMode mode = DynamicsMode::Ode;
    double input_scale = 1.0;
    double divergence_threshold = 1e6;
    std::int64_t log_every = 100;
};

struct TrainResult {
    ForceNet net;
    ForceNet ema_net;
    std::vector<double> loss_curve;  // one entry per iteration
};

// Parameters carried over when resuming from a checkpoint.
struct WarmStart {
    Eigen::VectorXd params;
    Eigen::VectorXd ema;
    std::int64_t step = 0;
};

// Regression training loop per the bridge loss; draw_x1 supplies data points.
TrainResult train(const std::function<Vec(std::mt19937_64&)>& draw_x1, const KernelTable& kernel,
                  const TrainConfig& config, const WarmStart* warm = nullptr);

}  // namespace agm
