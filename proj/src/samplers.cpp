#include "agm/samplers.hpp"

#include <cmath>
#include <deque>

#include "agm/model.hpp"

namespace agm {

namespace {

constexpr double kHopDenominatorFloor = 1e-8;

// 16-node Gauss-Legendre rule on [-1, 1].
constexpr std::array<std::array<double, 2>, 16> kGL16 = {{
    {-9.89400934991649939e-01, 2.71524594117540374e-02},
    {-9.44575023073232600e-01, 6.22535239386477063e-02},
    {-8.65631202387831755e-01, 9.51585116824925914e-02},
    {-7.55404408355002999e-01, 1.24628971255534030e-01},
    {-6.17876244402643771e-01, 1.49595988816576764e-01},
    {-4.58016777657227370e-01, 1.69156519395002619e-01},
    {-2.81603550779258915e-01, 1.82603415044923612e-01},
    {-9.50125098376374544e-02, 1.89450610455068585e-01},
    {9.50125098376374544e-02, 1.89450610455068585e-01},
    {2.81603550779258915e-01, 1.82603415044923612e-01},
    {4.58016777657227370e-01, 1.69156519395002619e-01},
    {6.17876244402643771e-01, 1.49595988816576764e-01},
    {7.55404408355002999e-01, 1.24628971255534030e-01},
    {8.65631202387831755e-01, 9.51585116824925914e-02},
    {9.44575023073232600e-01, 6.22535239386477063e-02},
    {9.89400934991649939e-01, 2.71524594117540374e-02},
}};

// Lagrange basis over the nodes t_{i-k}, k = 0..w-1, evaluated at tau.
double lagrange_basis(const std::vector<double>& ts, int i, int j, int w, double tau) {
    double m = 1.0;
    const double tj = ts[static_cast<std::size_t>(i - j)];
    for (int k = 0; k < w; ++k) {
        if (k == j) continue;
        const double tk = ts[static_cast<std::size_t>(i - k)];
        const double denom = tj - tk;
        if (denom == 0.0) throw NumericError("ei_coeffs: repeated grid times");
        m *= (tau - tk) / denom;
    }
    return m;
}

void check_finite(const PhaseState& m, const char* where) {
    if (!m.x.allFinite() || !m.v.allFinite()) {
        throw NumericError(std::string(where) + ": non-finite state");
    }
}

}  // namespace

ForceSource net_force(const ForceNet& net, const KernelTable& kernel, DynamicsMode mode) {
    ForceSource src;
    src.s = [&net](const PhaseState& m, double t) { return net.forward(m, t); };
    src.z = [&kernel, mode](double t) { return kernel.z(t, mode); };
    return src;
}

ForceSource raw_force(std::function<Vec(const PhaseState&, double)> F) {
    ForceSource src;
    src.s = std::move(F);
    src.z = [](double) { return 1.0; };
    return src;
}

EICoeffs ei_coeffs(const TimeGrid& grid, int i, int j, int w,
                   const std::function<double(double)>& z) {
    if (w < 1 || w > 3) throw ConfigError("ei_coeffs: w must be in {1,2,3}");
    if (j < 0 || j >= w || i < j) throw ConfigError("ei_coeffs: need 0 <= j < w <= i+1");
    if (i + 1 >= static_cast<int>(grid.ts.size())) {
        throw ConfigError("ei_coeffs: step index outside grid");
    }
    const double ta = grid.ts[static_cast<std::size_t>(i)];
    const double tb = grid.ts[static_cast<std::size_t>(i) + 1];
    const double half = 0.5 * (tb - ta);
    const double mid = 0.5 * (tb + ta);

    EICoeffs c{0.0, 0.0};
    for (const auto& [node, weight] : kGL16) {
        const double tau = mid + half * node;
        const double f = z(tau) * lagrange_basis(grid.ts, i, j, w, tau);
        c.c_vel += weight * f;
        c.c_pos += weight * (tb - tau) * f;
    }
    c.c_vel *= half;
    c.c_pos *= half;
    return c;
}

PhaseState ei_step(const PhaseState& m, const std::vector<Vec>& history, int i,
                   const TimeGrid& grid, const std::function<double(double)>& z) {
    const int w = static_cast<int>(history.size());
    const double delta = grid.ts[static_cast<std::size_t>(i) + 1] -
                         grid.ts[static_cast<std::size_t>(i)];
    PhaseState out;
    out.x = m.x + delta * m.v;
    out.v = m.v;
    for (int j = 0; j < w; ++j) {
        const EICoeffs c = ei_coeffs(grid, i, j, w, z);
        out.x += c.c_pos * history[static_cast<std::size_t>(j)];
        out.v += c.c_vel * history[static_cast<std::size_t>(j)];
    }
    check_finite(out, "ei_step");
    return out;
}

PhaseState sss_step(const PhaseState& m, const Vec& force, double t, double delta,
                    const DiffusionSchedule& sched, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double half = 0.5 * delta;
    const auto d = m.dim();

    PhaseState out = m;
    out.x += half * out.v;
    const double s1 = sched.g(t) * std::sqrt(half);
    for (Eigen::Index k = 0; k < d; ++k) out.v[k] += s1 * normal(rng);
    out.v += delta * force;
    out.x += half * out.v;
    const double s2 = sched.g(t + half) * std::sqrt(half);
    for (Eigen::Index k = 0; k < d; ++k) out.v[k] += s2 * normal(rng);
    check_finite(out, "sss_step");
    return out;
}

Vec sampling_hop(const PhaseState& m, const Vec& force, const KernelPoint& kp,
                 DynamicsMode mode) {
    const double omt = 1.0 - kp.t;
    const double G = 4.0 / omt;  // g^2 P11
    if (mode == DynamicsMode::Sde) {
        return m.x + omt * (force / G + m.v);
    }
    const double zeta_hat = kp.Lxx / omt + kp.Lxv;
    const double zeta = kp.Lvv - kp.ell / (2.0 * kp.P11);
    const double beta = zeta / kp.Lvv;
    const double alpha = (zeta_hat - beta * kp.Lxv) / kp.Lxx;
    const double denom = 4.0 * omt * omt + G * (alpha * kp.mx + beta * kp.mv);
    if (std::abs(denom) < kHopDenominatorFloor) {
        throw NumericError("sampling_hop: denominator below floor at t=" + std::to_string(kp.t));
    }
    return (force + G * (alpha * m.x + beta * m.v)) / denom;
}

PhaseState prior_draw(const KernelTable& kernel, int dim, std::mt19937_64& rng) {
    const Cholesky2 L = cholesky2(1.0, kernel.sigma0_k(), 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    PhaseState m;
    m.x.resize(dim);
    m.v.resize(dim);
    for (int k = 0; k < dim; ++k) {
        const double e0 = normal(rng);
        const double e1 = normal(rng);
        m.x[k] = L.Lxx * e0;
        m.v[k] = L.Lxv * e0 + L.Lvv * e1;
    }
    return m;
}

PhaseState conditional_init(const Vec& x_cond, double xi, const KernelTable& kernel,
                            std::mt19937_64& rng) {
    if (xi < 0.0 || xi > 1.0) throw ConfigError("conditional_init: xi must be in [0,1]");
    const double t0 = kernel.grid().t0;
    PhaseState m = prior_draw(kernel, static_cast<int>(x_cond.size()), rng);
    m.v = (1.0 - xi) * m.v + xi * (x_cond - m.x) / (1.0 - t0);
    return m;
}

PhaseState dyn_v_guidance(const PhaseState& m, double t, const Vec& x_target,
                          const KernelTable& kernel, std::mt19937_64& rng) {
    const KernelPoint kp = kernel.eval(t);
    if (kp.Sxx <= 0.0) throw NumericError("dyn_v_guidance: degenerate Sxx");
    const double slope = kp.Sxv / kp.Sxx;
    const double var = kp.Svv - kp.Sxv * kp.Sxv / kp.Sxx;
    const double sd = std::sqrt(std::max(var, 0.0));
    std::normal_distribution<double> normal(0.0, 1.0);

    PhaseState out = m;
    for (Eigen::Index k = 0; k < m.dim(); ++k) {
        const double mu = kp.mv * x_target[k] + slope * (m.x[k] - kp.mx * x_target[k]);
        out.v[k] = mu + sd * normal(rng);
    }
    return out;
}

Vec inpaint_hop(const Vec& x_tilde, const Vec& x_known, const Vec& mask) {
    if (x_tilde.size() != x_known.size() || x_tilde.size() != mask.size()) {
        throw ConfigError("inpaint_hop: shape mismatch");
    }
    for (Eigen::Index k = 0; k < mask.size(); ++k) {
        if (mask[k] != 0.0 && mask[k] != 1.0) {
            throw ConfigError("inpaint_hop: mask entries must be 0 or 1");
        }
    }
    return mask.cwiseProduct(x_known) + (Vec::Ones(mask.size()) - mask).cwiseProduct(x_tilde);
}

SampleResult sample(const ForceSource& source, const SamplerPlan& plan,
                    const KernelTable& kernel, int dim, std::mt19937_64& rng, int n,
                    bool keep_records) {
    if (n < 1) throw ConfigError("sample: n must be >= 1");
    if (plan.multistep < 1 || plan.multistep > 3) {
        throw ConfigError("sample: multistep order must be in {1,2,3}");
    }
    const auto& ts = plan.grid.ts;
    if (ts.empty()) throw ConfigError("sample: empty time grid");
    // one evaluation per grid point t_0 .. t_N: N transport steps plus the
    // terminal evaluation that feeds the reconstruction
    const int n_evals = plan.grid.N + 1;
    const int hop = plan.hop_index.value_or(n_evals - 1);
    if (hop < 0 || hop >= n_evals) throw ConfigError("sample: hop index outside grid");

    // The coefficients depend only on the plan, not on the chain.
    std::vector<std::vector<EICoeffs>> coeffs;
    if (plan.mode == DynamicsMode::Ode) {
        coeffs.resize(static_cast<std::size_t>(std::max(hop, 0)));
        for (int i = 0; i < hop; ++i) {
            const int w = std::min(i + 1, plan.multistep);
            for (int j = 0; j < w; ++j) {
                coeffs[static_cast<std::size_t>(i)].push_back(
                    ei_coeffs(plan.grid, i, j, w, source.z));
            }
        }
    }

    SampleResult result;
    result.samples.reserve(static_cast<std::size_t>(n));
    if (keep_records) result.records.reserve(static_cast<std::size_t>(n));

    for (int chain = 0; chain < n; ++chain) {
        PhaseState m = plan.conditional
                           ? conditional_init(plan.conditional->x_cond, plan.conditional->xi,
                                              kernel, rng)
                           : prior_draw(kernel, dim, rng);

        TrajectoryRecord rec;
        std::deque<Vec> history;  // newest first, normalized evaluations
        Vec x_tilde;

        for (int i = 0; i <= hop; ++i) {
            const double t = ts[static_cast<std::size_t>(i)];
            if (plan.guidance && t <= plan.guidance->c) {
                m = dyn_v_guidance(m, t, plan.guidance->x_target, kernel, rng);
            }
            const Vec s_eval = source.s(m, t);
            ++result.nfe;
            const Vec force = source.z(t) * s_eval;

            x_tilde = sampling_hop(m, force, kernel.eval(t), plan.mode);
            if (plan.inpaint) {
                x_tilde = inpaint_hop(x_tilde, plan.inpaint->x_known, plan.inpaint->mask);
            }
            if (keep_records) {
                rec.ts.push_back(t);
                rec.states.push_back(m);
                rec.forces.push_back(force);
                rec.xhat.push_back(x_tilde);
            }
            if (i == hop) break;

            if (plan.mode == DynamicsMode::Ode) {
                history.push_front(s_eval);
                while (static_cast<int>(history.size()) > plan.multistep) history.pop_back();
                const double delta = ts[static_cast<std::size_t>(i) + 1] - t;
                PhaseState next;
                next.x = m.x + delta * m.v;
                next.v = m.v;
                const auto& ci = coeffs[static_cast<std::size_t>(i)];
                for (std::size_t j = 0; j < ci.size(); ++j) {
                    next.x += ci[j].c_pos * history[j];
                    next.v += ci[j].c_vel * history[j];
                }
                check_finite(next, "sample/ei");
                m = std::move(next);
            } else {
                const double delta = ts[static_cast<std::size_t>(i) + 1] - t;
                m = sss_step(m, force, t, delta, kernel.schedule(), rng);
            }
        }

        if (keep_records) {
            rec.final_sample = x_tilde;
            result.records.push_back(std::move(rec));
        }
        result.samples.push_back(std::move(x_tilde));
    }
    return result;
}

}  // namespace agm
