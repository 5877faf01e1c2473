#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "agm/phase_kernel.hpp"

using namespace agm;

namespace {

// Closed-form bridge covariance for Sigma0 = [[m, -k*sqrt(mn)], [-k*sqrt(mn), n]]
// and g(t) = p(tt - t); used purely as an oracle against the RK4 runtime path.
double cf_sxx(double t, double p, double tt, double m, double n, double k) {
    const double lg = std::log(1.0 - t);
    return (t - 1) * (t - 1) *
           (30 * m * std::pow(t * t * t - 3 * t * t + 3 * t + 3, 2) -
            60 * p * p * std::pow(t - 1, 3) * lg -
            t * (60 * k * std::sqrt(m * n) *
                     (std::pow(t, 5) - 6 * std::pow(t, 4) + 15 * t * t * t - 15 * t * t + 9) -
                 30 * n * t * std::pow(t * t - 3 * t + 3, 2) +
                 p * p *
                     (std::pow(t, 5) * (6 * tt * tt + 3 * tt + 1) -
                      6 * std::pow(t, 4) * (6 * tt * tt + 3 * tt + 1) +
                      15 * t * t * t * (6 * tt * tt + 3 * tt + 1) -
                      10 * t * t * (9 * tt * tt + 11) + 150 * t - 60))) /
           270;
}

double cf_sxv(double t, double p, double tt, double m, double n, double k) {
    const double lg = std::log(1.0 - t);
    return (1.0 / 270 - t / 270) *
           (30 * k * std::sqrt(m * n) *
                (8 * std::pow(t, 6) - 48 * std::pow(t, 5) + 120 * std::pow(t, 4) -
                 135 * t * t * t + 45 * t * t + 27 * t - 9) +
            150 * p * p * std::pow(t - 1, 3) * lg +
            t * (-120 * m *
                     (std::pow(t, 5) - 6 * std::pow(t, 4) + 15 * t * t * t - 15 * t * t + 9) -
                 30 * n *
                     (4 * std::pow(t, 5) - 24 * std::pow(t, 4) + 60 * t * t * t - 75 * t * t +
                      45 * t - 9) +
                 p * p *
                     (4 * std::pow(t, 5) * (6 * tt * tt + 3 * tt + 1) -
                      24 * std::pow(t, 4) * (6 * tt * tt + 3 * tt + 1) +
                      60 * t * t * t * (6 * tt * tt + 3 * tt + 1) -
                      5 * t * t * (81 * tt * tt + 18 * tt + 55) + 15 * t * (9 * tt * tt + 25) -
                      150)));
}

double cf_svv(double t, double p, double tt, double m, double n, double k) {
    const double lg = std::log(1.0 - t);
    return n * std::pow(-4 * t * t * t + 12 * t * t - 12 * t + 3, 2) / 9 -
           8 * p * p * std::pow(t - 1, 3) * lg / 9 +
           t *
               (-120 * k * std::sqrt(m * n) *
                    (4 * std::pow(t, 5) - 24 * std::pow(t, 4) + 60 * t * t * t - 75 * t * t +
                     45 * t - 9) +
                240 * m * t * std::pow(t * t - 3 * t + 3, 2) +
                p * p *
                    (-8 * std::pow(t, 5) * (6 * tt * tt + 3 * tt + 1) +
                     48 * std::pow(t, 4) * (6 * tt * tt + 3 * tt + 1) -
                     120 * t * t * t * (6 * tt * tt + 3 * tt + 1) +
                     5 * t * t * (180 * tt * tt + 72 * tt + 53) -
                     15 * t * (36 * tt * tt + 9 * tt + 20) + 135 * tt * tt + 120)) /
               135;
}

std::array<std::array<double, 2>, 2> lyapunov_rhs(const LyapunovSolution& s) {
    // A P + P A^T - g g^T with A = [[0,1],[0,0]], g = [0, g]
    return {{{s.P[0][1] + s.P[1][0], s.P[1][1]}, {s.P[1][1], -s.g * s.g}}};
}

}  // namespace

TEST_CASE("diffusion schedule endpoints and slope") {
    const DiffusionSchedule sched;
    CHECK(g_schedule(sched, 0.0) == doctest::Approx(3.0));
    CHECK(g_schedule(sched, 1.0) == doctest::Approx(0.0));
    CHECK(g_schedule(sched, 0.5) == doctest::Approx(1.5));
    const DiffusionSchedule other{2.0, 1.25};
    CHECK(g_schedule(other, 0.25) == doctest::Approx(2.0));
}

TEST_CASE("control gain values and pole") {
    const DiffusionSchedule sched;
    CHECK(p11(sched, 0.0) == doctest::Approx(4.0 / 9.0));
    // constant g = 3 at the probe time
    const DiffusionSchedule g3_at_half{6.0, 1.0};
    CHECK(g3_at_half.g(0.5) == doctest::Approx(3.0));
    CHECK(p11(g3_at_half, 0.5) == doctest::Approx(8.0 / 9.0));
    CHECK_THROWS_AS(p11(sched, 1.0), NumericError);
    CHECK_THROWS_AS(combined_gain(1.0), NumericError);
}

TEST_CASE("combined gain identity holds for any schedule") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ut(0.0, 0.95);
    std::uniform_real_distribution<double> up(0.5, 5.0);
    for (int i = 0; i < 50; ++i) {
        const double t = ut(rng);
        const DiffusionSchedule sched{up(rng), 1.0 + up(rng)};
        CHECK(sched.g(t) * sched.g(t) * p11(sched, t) * (1.0 - t) ==
              doctest::Approx(4.0).epsilon(1e-12));
        CHECK(combined_gain(t) == doctest::Approx(4.0 / (1.0 - t)).epsilon(1e-12));
    }
}

TEST_CASE("lyapunov closed form: terminal value, inverse, specializations") {
    const LyapunovSolution terminal = lyapunov_solution(1.0, 0.5, 1.0);
    CHECK(terminal.P[0][0] == doctest::Approx(0.0));
    CHECK(terminal.P[0][1] == doctest::Approx(0.0));
    CHECK(terminal.P[1][1] == doctest::Approx(0.5));

    const LyapunovSolution s = lyapunov_solution(0.0, 0.0, 2.0);
    CHECK(s.Pinv[1][1] == doctest::Approx(1.0));
    // recovers the control gain: Pinv[1][1] g^2 (t-1) = -4 at omega = 0
    CHECK(s.Pinv[1][1] * 4.0 * (-1.0) == doctest::Approx(-4.0));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(0.0, 0.9);
    std::uniform_real_distribution<double> uw(0.0, 1.0);
    std::uniform_real_distribution<double> ug(0.5, 3.0);
    for (int i = 0; i < 20; ++i) {
        const LyapunovSolution r = lyapunov_solution(ut(rng), uw(rng), ug(rng));
        // P * Pinv = I
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                double acc = 0.0;
                for (int c = 0; c < 2; ++c) acc += r.P[a][c] * r.Pinv[c][b];
                CHECK(acc == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-9));
            }
        }
        CHECK(r.P[0][1] == r.P[1][0]);
    }
}

TEST_CASE("lyapunov finite-difference residual") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ut(0.05, 0.9);
    std::uniform_real_distribution<double> uw(0.0, 1.0);
    std::uniform_real_distribution<double> ug(0.5, 3.0);
    const double h = 1e-5;
    for (int i = 0; i < 50; ++i) {
        const double t = ut(rng), w = uw(rng), g = ug(rng);
        const LyapunovSolution mid = lyapunov_solution(t, w, g);
        const LyapunovSolution hi = lyapunov_solution(t + h, w, g);
        const LyapunovSolution lo = lyapunov_solution(t - h, w, g);
        const auto rhs = lyapunov_rhs(mid);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                const double fd = (hi.P[a][b] - lo.P[a][b]) / (2 * h);
                CHECK(std::abs(fd - rhs[a][b]) < 1e-5);
            }
        }
    }
    // the spot value from the tighter pointwise contract
    const LyapunovSolution spot = lyapunov_solution(0.3, 0.1, 1.5);
    const LyapunovSolution sp = lyapunov_solution(0.3 + h, 0.1, 1.5);
    const LyapunovSolution sm = lyapunov_solution(0.3 - h, 0.1, 1.5);
    const auto rhs = lyapunov_rhs(spot);
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            CHECK(std::abs((sp.P[a][b] - sm.P[a][b]) / (2 * h) - rhs[a][b]) < 1e-6);
        }
    }
}

TEST_CASE("transition matrix laws") {
    const auto phi10 = transition(1.0, 0.0);
    CHECK(phi10[0][0] == 1.0);
    CHECK(phi10[0][1] == 1.0);
    CHECK(phi10[1][0] == 0.0);
    CHECK(phi10[1][1] == 1.0);

    const auto id = transition(0.37, 0.37);
    CHECK(id[0][1] == 0.0);
    CHECK(id[0][0] == 1.0);

    // semigroup: Phi(0.7,0.2) * Phi(0.2,0) = Phi(0.7,0)
    const auto a = transition(0.7, 0.2);
    const auto b = transition(0.2, 0.0);
    const auto c = transition(0.7, 0.0);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 2; ++k) acc += a[i][k] * b[k][j];
            CHECK(acc == doctest::Approx(c[i][j]).epsilon(1e-15));
        }
    }
}

TEST_CASE("mean coefficients: endpoints, spot value, derivative relation") {
    CHECK(mean_coeffs(0.0).mx == doctest::Approx(0.0));
    CHECK(mean_coeffs(0.0).mv == doctest::Approx(0.0));
    CHECK(mean_coeffs(1.0).mx == doctest::Approx(1.0));
    CHECK(mean_coeffs(1.0).mv == doctest::Approx(4.0 / 3.0));
    CHECK(mean_coeffs(0.5).mx == doctest::Approx(0.3541667).epsilon(1e-6));
    CHECK(mean_coeffs(0.5).mv == doctest::Approx(1.1666667).epsilon(1e-6));

    const double h = 1e-6;
    for (double t : {0.1, 0.3, 0.6, 0.9}) {
        const double fd = (mean_coeffs(t + h).mx - mean_coeffs(t - h).mx) / (2 * h);
        CHECK(fd == doctest::Approx(mean_coeffs(t).mv).epsilon(1e-7));
    }
}

TEST_CASE("mean coefficients match RK4 integration of the mean ODE") {
    // d(mu) = Ft mu + [0, 4/(1-t)^2 x1], x1 = 1
    double x = 0.0, v = 0.0, t = 0.0;
    const double h = 1e-4;
    auto f = [](double tt, double xx, double vv, double& dx, double& dv) {
        const double omt = 1.0 - tt;
        dx = vv;
        dv = -4.0 / (omt * omt) * xx - 4.0 / omt * vv + 4.0 / (omt * omt);
    };
    double max_err = 0.0;
    while (t < 0.99 - 1e-12) {
        const double step = std::min(h, 0.99 - t);
        double k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v;
        f(t, x, v, k1x, k1v);
        f(t + step / 2, x + step / 2 * k1x, v + step / 2 * k1v, k2x, k2v);
        f(t + step / 2, x + step / 2 * k2x, v + step / 2 * k2v, k3x, k3v);
        f(t + step, x + step * k3x, v + step * k3v, k4x, k4v);
        x += step / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
        v += step / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
        t += step;
        const MeanCoeffs mc = mean_coeffs(t);
        max_err = std::max({max_err, std::abs(x - mc.mx), std::abs(v - mc.mv)});
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("covariance model matches the closed-form oracle on [0, 0.99]") {
    // Runtime Sigma0 = [[1, -0.2], [-0.2, 1]] corresponds to the oracle's
    // sign convention with k = +0.2.
    const double k_oracle = 0.2;
    const CovarianceModel cov(DiffusionSchedule{}, {1.0, -k_oracle, 1.0}, 0.99);
    double max_err = 0.0;
    for (int i = 0; i <= 990; ++i) {
        const double t = i * 1e-3;
        const Covariance2 s = cov.eval(t);
        max_err = std::max({max_err, std::abs(s.Sxx - cf_sxx(t, 3, 1, 1, 1, k_oracle)),
                            std::abs(s.Sxv - cf_sxv(t, 3, 1, 1, 1, k_oracle)),
                            std::abs(s.Svv - cf_svv(t, 3, 1, 1, 1, k_oracle))});
    }
    CHECK(max_err < 1e-6);

    // frozen spot values at t = 0.5 for the default configuration
    const Covariance2 s = cov.eval(0.5);
    CHECK(s.Sxx == doctest::Approx(0.4394039956594479).epsilon(1e-9));
    CHECK(s.Sxv == doctest::Approx(-0.7243637282972394).epsilon(1e-9));
    CHECK(s.Svv == doctest::Approx(1.4929639305511657).epsilon(1e-9));

    // initial condition and terminal pinning
    const Covariance2 s0 = cov.eval(0.0);
    CHECK(s0.Sxx == doctest::Approx(1.0));
    CHECK(s0.Sxv == doctest::Approx(-0.2));
    CHECK(s0.Svv == doctest::Approx(1.0));
    CHECK(cf_sxx(0.999, 3, 1, 1, 1, k_oracle) < 1e-4);
}

TEST_CASE("covariance model with a non-default schedule still matches the oracle") {
    const double p = 2.0, tt = 1.2, k_oracle = -0.3;
    const CovarianceModel cov(DiffusionSchedule{p, tt}, {1.0, k_oracle, 1.0}, 0.95);
    double max_err = 0.0;
    for (double t = 0.0; t < 0.95; t += 0.01) {
        const Covariance2 s = cov.eval(t);
        max_err = std::max({max_err, std::abs(s.Sxx - cf_sxx(t, p, tt, 1, 1, -k_oracle)),
                            std::abs(s.Sxv - cf_sxv(t, p, tt, 1, 1, -k_oracle)),
                            std::abs(s.Svv - cf_svv(t, p, tt, 1, 1, -k_oracle))});
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("cholesky factorization") {
    const Cholesky2 id = cholesky2(1.0, 0.0, 1.0);
    CHECK(id.Lxx == doctest::Approx(1.0));
    CHECK(id.Lxv == doctest::Approx(0.0));
    CHECK(id.Lvv == doctest::Approx(1.0));
    CHECK_FALSE(id.degenerate);

    const Cholesky2 hand = cholesky2(4.0, 2.0, 5.0);
    CHECK(hand.Lxx == doctest::Approx(2.0));
    CHECK(hand.Lxv == doctest::Approx(1.0));
    CHECK(hand.Lvv == doctest::Approx(2.0));

    const Cholesky2 rank1 = cholesky2(1.0, 1.0, 1.0);
    CHECK(rank1.Lxx == doctest::Approx(1.0));
    CHECK(rank1.Lxv == doctest::Approx(1.0));
    CHECK(rank1.Lvv == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(rank1.degenerate);

    CHECK_THROWS_AS(cholesky2(-1.0, 0.0, 1.0), NumericError);
    CHECK_THROWS_AS(cholesky2(1.0, 2.0, 1.0), NumericError);

    // round trip on random PSD matrices
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        // S = M M^T is PSD by construction
        const double sxx = a * a + b * b + 1e-3;
        const double sxv = a * c + b * d;
        const double svv = c * c + d * d + 1e-3;
        const Cholesky2 L = cholesky2(sxx, sxv, svv);
        CHECK(L.Lxx * L.Lxx == doctest::Approx(sxx).epsilon(1e-12));
        CHECK(L.Lxx * L.Lxv == doctest::Approx(sxv).epsilon(1e-12));
        CHECK(L.Lxv * L.Lxv + L.Lvv * L.Lvv == doctest::Approx(svv).epsilon(1e-10));
    }
}

TEST_CASE("score scale") {
    CHECK(score_scale(1.0, 0.0, 1.0) == doctest::Approx(1.0));
    CHECK(score_scale(4.0, 2.0, 5.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(score_scale(1.0, 1.0, 1.0), NumericError);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.3, 2.0);
    for (int i = 0; i < 50; ++i) {
        const double sxx = u(rng), svv = u(rng);
        const double sxv = 0.5 * std::min(sxx, svv) * (u(rng) - 1.0);
        const Cholesky2 L = cholesky2(sxx, sxv, svv);
        CHECK(score_scale(sxx, sxv, svv) * L.Lvv == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("time grid") {
    const TimeGrid grid = time_grid(5, 2.0, 1e-5, 0.999);
    CHECK(grid.ts.size() == 6);
    CHECK(grid.ts.front() == doctest::Approx(1e-5));
    CHECK(grid.ts.back() == doctest::Approx(0.999));
    CHECK(grid.ts[1] == doctest::Approx(0.040978).epsilon(1e-4));
    for (std::size_t i = 1; i < grid.ts.size(); ++i) CHECK(grid.ts[i] > grid.ts[i - 1]);
    // quadratic warp: step sizes grow toward the data end
    for (std::size_t i = 2; i < grid.ts.size(); ++i) {
        CHECK(grid.ts[i] - grid.ts[i - 1] > grid.ts[i - 1] - grid.ts[i - 2]);
    }

    const TimeGrid uniform = time_grid(4, 1.0, 0.1, 0.9);
    for (std::size_t i = 1; i < uniform.ts.size(); ++i) {
        CHECK(uniform.ts[i] - uniform.ts[i - 1] == doctest::Approx(0.2).epsilon(1e-12));
    }

    CHECK_THROWS_AS(time_grid(0, 2.0, 1e-5, 0.999), ConfigError);
    CHECK_THROWS_AS(time_grid(5, 2.0, 0.5, 0.4), ConfigError);
    CHECK_THROWS_AS(time_grid(5, 2.0, 1e-5, 1.0), ConfigError);
}

TEST_CASE("kernel table bundles consistent quantities") {
    const KernelTable kernel(time_grid(20, 2.0, 1e-5, 0.999), DiffusionSchedule{}, -0.2, 2.835);
    CHECK(kernel.size() == 21);
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        const KernelPoint& kp = kernel.at(i);
        CHECK(kp.t == kernel.grid().ts[i]);
        CHECK(kp.Lxx * kp.Lxx == doctest::Approx(kp.Sxx).epsilon(1e-10));
        CHECK(kp.Lxx * kp.Lxv == doctest::Approx(kp.Sxv).epsilon(1e-10));
        CHECK(kp.ell * kp.Lvv == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(kp.z_sde > 0.0);
        CHECK(kp.z_ode > 0.0);
        CHECK(kp.g * kp.g * kp.P11 == doctest::Approx(combined_gain(kp.t)).epsilon(1e-10));
    }
    // pinning at the far end of the horizon
    const KernelPoint tail = kernel.eval(0.999);
    CHECK(tail.Sxx < 1e-4);
    // mx approaches 1 at rate mv(1)(1-t) = (4/3)(1-t)
    CHECK(1.0 - mean_coeffs(0.999).mx == doctest::Approx(4.0 / 3.0 * 1e-3).epsilon(1e-2));

    // interpolated evaluation agrees with the tabulated nodes
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        const KernelPoint kp = kernel.eval(kernel.at(i).t);
        CHECK(kp.Sxx == doctest::Approx(kernel.at(i).Sxx).epsilon(1e-12));
    }
    CHECK_THROWS_AS(kernel.eval(1.0), NumericError);
    CHECK_THROWS_AS(KernelTable(time_grid(5, 2.0, 1e-5, 0.9), DiffusionSchedule{}, 1.5, 1.0),
                    ConfigError);
}

TEST_CASE("kernel table export/import round trip") {
    const KernelTable kernel(time_grid(8, 2.0, 1e-5, 0.9), DiffusionSchedule{}, -0.2, 1.7);
    std::stringstream ss;
    kernel.export_table(ss);

    std::string header;
    std::getline(ss, header);
    CHECK(header == "t,g,P11,mx,mv,Sxx,Sxv,Svv,Lxx,Lxv,Lvv,ell,z_sde,z_ode");

    ss.seekg(0);
    const std::vector<KernelPoint> points = import_table(ss);
    REQUIRE(points.size() == kernel.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].t == doctest::Approx(kernel.at(i).t).epsilon(1e-15));
        CHECK(points[i].Svv == doctest::Approx(kernel.at(i).Svv).epsilon(1e-15));
        CHECK(points[i].z_ode == doctest::Approx(kernel.at(i).z_ode).epsilon(1e-15));
    }

    std::stringstream bad("not,a,table\n");
    CHECK_THROWS_AS(import_table(bad), IoError);
}

TEST_CASE("normalizer behavior") {
    const KernelTable kernel(time_grid(10, 2.0, 1e-5, 0.999), DiffusionSchedule{}, -0.2, 2.835);
    const KernelPoint kp = kernel.eval(0.5);
    CHECK(normalizer(kp, 2.835, DynamicsMode::Sde) == doctest::Approx(kp.z_sde));
    // monotone in sigma_data
    CHECK(normalizer(kp, 5.67, DynamicsMode::Sde) > kp.z_sde);
    // stays positive approaching the data end where noise terms dominate
    CHECK(kernel.eval(0.995).z_sde > 0.0);
}
