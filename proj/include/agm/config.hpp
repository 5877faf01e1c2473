#pragma once

// Flat key=value run configuration shared by all CLI subcommands, with
// canonical serialization and an FNV-1a hash for provenance stamping.

#include <cstdint>
#include <string>
#include <vector>

#include "agm/errors.hpp"

namespace agm {

struct RunConfig {
    // data
    std::string dataset = "mog8";
    // schedule g(t) = p (tt - t)
    double schedule_p = 3.0;
    double schedule_tt = 1.0;
    // prior correlation Sigma0 = [[1, k], [k, 1]]
    double sigma0_k = -0.2;
    // sampling grid
    int grid_N = 20;
    double grid_kappa = 2.0;
    double grid_t0 = 1e-5;
    double grid_tN = 0.999;
    bool grid_tN_set = false;  // explicit tN beats the per-NFE default
    // sampler
    std::string mode = "ode";
    int multistep = 2;
    int hop = -1;  // evaluation index; -1 means the final step
    int n_samples = 10000;
    bool trajectories = false;
    bool svg = false;
    // conditional generation
    double cond_xi = 0.0;
    bool use_guidance = false;  // dyn-V velocity resampling while t <= c
    double guidance_c = 0.25;
    std::vector<double> cond_x;   // empty = unconditional
    std::vector<double> mask;     // empty = no inpainting
    std::vector<double> x_known;
    // training
    std::int64_t iterations = 50000;
    int batch = 1024;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::int64_t warmup = 5000;
    double ema_decay = 0.9999;
    std::vector<int> hidden = {64, 64, 64};
    int n_fourier = 16;
    // run plumbing
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir;      // default: $AGM_OUT or "."
    std::string checkpoint;   // input checkpoint for sample/resume
};

// Parse a config file: key=value lines, '#' comments, optional [section]
// headers that prefix the following keys with "section.".
RunConfig load_config(const std::string& path);
// Apply one "key=value" override in place.
void apply_override(RunConfig& cfg, const std::string& assignment);
void validate(const RunConfig& cfg);

// Canonical serialization: every key, sorted layout, full precision.
std::string serialize(const RunConfig& cfg);
// FNV-1a (64-bit, hex) of the canonical serialization.
std::string config_hash(const RunConfig& cfg);

// tN used when the config leaves it to the per-NFE convention.
double default_tN(int nfe);
// Output directory after applying the AGM_OUT fallback.
std::string resolve_out_dir(const RunConfig& cfg);

}  // namespace agm
