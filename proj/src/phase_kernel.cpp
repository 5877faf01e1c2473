#include "agm/phase_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace agm {

namespace {

void check_runtime_time(double t) {
    if (t >= 1.0 - kTimeSingularityGuard) {
        throw NumericError("singular time: t=" + std::to_string(t) + " too close to 1");
    }
}

}  // namespace

double g_schedule(const DiffusionSchedule& sched, double t) { return sched.g(t); }

double p11(const DiffusionSchedule& sched, double t) {
    check_runtime_time(t);
    const double g = sched.g(t);
    if (g == 0.0) throw NumericError("p11: g(t) = 0 at t=" + std::to_string(t));
    return -4.0 / (g * g * (t - 1.0));
}

double combined_gain(double t) {
    check_runtime_time(t);
    return 4.0 / (1.0 - t);
}

LyapunovSolution lyapunov_solution(double t, double omega, double g_const) {
    if (omega < 0.0) throw ConfigError("lyapunov_solution: omega must be >= 0");
    if (g_const <= 0.0) throw ConfigError("lyapunov_solution: g must be > 0");
    const double g2 = g_const * g_const;
    const double u = t - 1.0;

    LyapunovSolution sol;
    sol.t = t;
    sol.omega = omega;
    sol.g = g_const;
    sol.P[0][0] = omega * u * u - g2 * u * u * u / 3.0;
    sol.P[0][1] = omega * u - g2 * u * u / 2.0;
    sol.P[1][0] = sol.P[0][1];
    sol.P[1][1] = g2 * (1.0 - t) + omega;

    if (-4.0 * omega + g2 * u == 0.0) {
        throw NumericError("lyapunov_solution: singular lemma condition at t=" +
                           std::to_string(t));
    }
    if (u == 0.0) {
        // P itself is singular at the terminal time; no inverse exists there.
        const double nan = std::numeric_limits<double>::quiet_NaN();
        sol.Pinv = {{{nan, nan}, {nan, nan}}};
        return sol;
    }
    const double denom = g2 * (-4.0 * omega + g2 * u) * u;
    sol.Pinv[0][0] = 12.0 * (omega - g2 * u) / (u * u) / denom;
    sol.Pinv[0][1] = 6.0 * (-2.0 * omega + g2 * u) / u / denom;
    sol.Pinv[1][0] = sol.Pinv[0][1];
    sol.Pinv[1][1] = (12.0 * omega - 4.0 * g2 * u) / denom;
    return sol;
}

std::array<std::array<double, 2>, 2> transition(double t, double s) {
    return {{{1.0, t - s}, {0.0, 1.0}}};
}

MeanCoeffs mean_coeffs(double t) {
    const double mx = t * t * (t * t - 4.0 * t + 6.0) / 3.0;
    const double mv = 4.0 * t * (t * t - 3.0 * t + 3.0) / 3.0;
    return {mx, mv};
}

Cholesky2 cholesky2(double Sxx, double Sxv, double Svv) {
    if (Sxx <= 0.0 || Svv < 0.0) {
        throw NumericError("cholesky2: non-PSD input, Sxx=" + std::to_string(Sxx) +
                           " Svv=" + std::to_string(Svv));
    }
    double det = Sxx * Svv - Sxv * Sxv;
    Cholesky2 L;
    if (det < kPsdDetFloor) {
        if (det < -1e-8 * std::max(1.0, Sxx * Svv)) {
            throw NumericError("cholesky2: negative determinant " + std::to_string(det));
        }
        det = kPsdDetFloor;
        L.degenerate = true;
    }
    L.Lxx = std::sqrt(Sxx);
    L.Lxv = Sxv / L.Lxx;
    L.Lvv = std::sqrt(det / Sxx);
    return L;
}

double score_scale(double Sxx, double Sxv, double Svv) {
    const double det = Sxx * Svv - Sxv * Sxv;
    if (Sxx <= 0.0 || det <= 0.0) {
        throw NumericError("score_scale: singular covariance, det=" + std::to_string(det));
    }
    return std::sqrt(Sxx / det);
}

TimeGrid time_grid(int N, double kappa, double t0, double tN) {
    if (N < 1) throw ConfigError("time_grid: N must be >= 1");
    if (kappa < 1.0) throw ConfigError("time_grid: kappa must be >= 1");
    if (!(t0 < tN && tN < 1.0) || t0 <= 0.0) {
        throw ConfigError("time_grid: need 0 < t0 < tN < 1");
    }
    TimeGrid grid;
    grid.N = N;
    grid.kappa = kappa;
    grid.t0 = t0;
    grid.tN = tN;
    grid.ts.resize(static_cast<std::size_t>(N) + 1);
    const double a = std::pow(t0, 1.0 / kappa);
    const double b = std::pow(tN, 1.0 / kappa);
    for (int i = 0; i <= N; ++i) {
        const double w = static_cast<double>(i) / N;
        grid.ts[static_cast<std::size_t>(i)] = std::pow((1.0 - w) * a + w * b, kappa);
    }
    grid.ts.front() = t0;
    grid.ts.back() = tN;
    return grid;
}

CovarianceModel::CovarianceModel(DiffusionSchedule sched, Covariance2 sigma0, double t_max,
                                 double fine_step)
    : sched_(sched), t_max_(t_max), step_(fine_step) {
    if (t_max <= 0.0 || t_max >= 1.0 - kTimeSingularityGuard) {
        throw ConfigError("CovarianceModel: t_max must lie in (0, 1)");
    }
    const auto n = static_cast<std::size_t>(std::ceil(t_max / step_));
    fine_.reserve(n + 1);
    fine_.push_back(sigma0);
    Covariance2 s = sigma0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * step_;
        const double h = std::min(step_, t_max_ - t);
        const Covariance2 k1 = rhs(t, s);
        const Covariance2 k2 = rhs(t + h / 2, {s.Sxx + h / 2 * k1.Sxx, s.Sxv + h / 2 * k1.Sxv,
                                               s.Svv + h / 2 * k1.Svv});
        const Covariance2 k3 = rhs(t + h / 2, {s.Sxx + h / 2 * k2.Sxx, s.Sxv + h / 2 * k2.Sxv,
                                               s.Svv + h / 2 * k2.Svv});
        const Covariance2 k4 =
            rhs(t + h, {s.Sxx + h * k3.Sxx, s.Sxv + h * k3.Sxv, s.Svv + h * k3.Svv});
        s.Sxx += h / 6 * (k1.Sxx + 2 * k2.Sxx + 2 * k3.Sxx + k4.Sxx);
        s.Sxv += h / 6 * (k1.Sxv + 2 * k2.Sxv + 2 * k3.Sxv + k4.Sxv);
        s.Svv += h / 6 * (k1.Svv + 2 * k2.Svv + 2 * k3.Svv + k4.Svv);
        fine_.push_back(s);
    }
}

Covariance2 CovarianceModel::rhs(double t, const Covariance2& s) const {
    // dSigma = Ft Sigma + (Ft Sigma)^T + g g^T, Ft = [[0,1],[-4/(1-t)^2, -4/(1-t)]]
    const double omt = 1.0 - t;
    const double a = -4.0 / (omt * omt);
    const double b = -4.0 / omt;
    const double g = sched_.g(t);
    return {2.0 * s.Sxv, s.Svv + a * s.Sxx + b * s.Sxv, 2.0 * (a * s.Sxv + b * s.Svv) + g * g};
}

Covariance2 CovarianceModel::eval(double t) const {
    if (t < 0.0 || t > t_max_ + 1e-12) {
        throw NumericError("CovarianceModel: t=" + std::to_string(t) + " outside [0, t_max]");
    }
    t = std::clamp(t, 0.0, t_max_);
    const auto n = fine_.size() - 1;
    auto i = static_cast<std::size_t>(t / step_);
    i = std::min(i, n - 1);
    const double t_lo = static_cast<double>(i) * step_;
    const double h = std::min(step_, t_max_ - t_lo);
    const double u = std::clamp((t - t_lo) / h, 0.0, 1.0);

    const Covariance2& s0 = fine_[i];
    const Covariance2& s1 = fine_[i + 1];
    const Covariance2 d0 = rhs(t_lo, s0);
    const Covariance2 d1 = rhs(t_lo + h, s1);

    // cubic Hermite basis
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
    const double h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u);
    const double h11 = u * u * (u - 1);
    auto hermite = [&](double y0, double m0, double y1, double m1) {
        return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    };
    return {hermite(s0.Sxx, d0.Sxx, s1.Sxx, d1.Sxx), hermite(s0.Sxv, d0.Sxv, s1.Sxv, d1.Sxv),
            hermite(s0.Svv, d0.Svv, s1.Svv, d1.Svv)};
}

double normalizer(const KernelPoint& kp, double sigma_data, DynamicsMode kind) {
    const double omt = 1.0 - kp.t;
    const double G = 4.0 / omt;  // g^2 P11
    const double det_term = 4.0 * omt * omt * sigma_data;
    const double zhat = kp.Lxx / omt + kp.Lxv;
    double z2;
    if (kind == DynamicsMode::Sde) {
        z2 = det_term * det_term + G * G * (zhat * zhat + kp.Lvv * kp.Lvv);
    } else {
        const double e1_coeff = G * kp.Lvv - 0.5 * kp.g * kp.g * kp.ell;
        z2 = det_term * det_term + G * G * zhat * zhat + e1_coeff * e1_coeff;
    }
    if (!(z2 > 0.0)) throw NumericError("normalizer: non-positive radicand");
    return std::sqrt(z2);
}

namespace {

KernelPoint make_point(double t, const DiffusionSchedule& sched, const Covariance2& s,
                       double sigma_data) {
    KernelPoint kp;
    kp.t = t;
    kp.g = sched.g(t);
    kp.P11 = p11(sched, t);
    const MeanCoeffs mc = mean_coeffs(t);
    kp.mx = mc.mx;
    kp.mv = mc.mv;
    kp.Sxx = s.Sxx;
    kp.Sxv = s.Sxv;
    kp.Svv = s.Svv;
    const Cholesky2 L = cholesky2(s.Sxx, s.Sxv, s.Svv);
    kp.Lxx = L.Lxx;
    kp.Lxv = L.Lxv;
    kp.Lvv = L.Lvv;
    kp.degenerate = L.degenerate;
    kp.ell = 1.0 / kp.Lvv;
    kp.z_sde = normalizer(kp, sigma_data, DynamicsMode::Sde);
    kp.z_ode = normalizer(kp, sigma_data, DynamicsMode::Ode);
    return kp;
}

}  // namespace

KernelTable::KernelTable(TimeGrid grid, DiffusionSchedule sched, double sigma0_k,
                         double sigma_data)
    : grid_(std::move(grid)),
      sched_(sched),
      k_(sigma0_k),
      sigma_data_(sigma_data),
      cov_(sched, {1.0, sigma0_k, 1.0}, grid_.tN) {
    if (std::abs(k_) >= 1.0) throw ConfigError("KernelTable: |k| must be < 1");
    if (sigma_data_ <= 0.0) throw ConfigError("KernelTable: sigma_data must be > 0");
    if (sched_.g(grid_.tN) <= 0.0) {
        throw ConfigError("KernelTable: schedule must keep g(t) > 0 on the grid");
    }
    points_.reserve(grid_.ts.size());
    for (double t : grid_.ts) {
        points_.push_back(make_point(t, sched_, cov_.eval(t), sigma_data_));
    }
}

KernelPoint KernelTable::eval(double t) const {
    check_runtime_time(t);
    return make_point(t, sched_, cov_.eval(t), sigma_data_);
}

void KernelTable::export_table(std::ostream& os) const {
    os << "t,g,P11,mx,mv,Sxx,Sxv,Svv,Lxx,Lxv,Lvv,ell,z_sde,z_ode\n";
    os.precision(17);
    for (const KernelPoint& kp : points_) {
        os << kp.t << ',' << kp.g << ',' << kp.P11 << ',' << kp.mx << ',' << kp.mv << ','
           << kp.Sxx << ',' << kp.Sxv << ',' << kp.Svv << ',' << kp.Lxx << ',' << kp.Lxv << ','
           << kp.Lvv << ',' << kp.ell << ',' << kp.z_sde << ',' << kp.z_ode << '\n';
    }
}

std::vector<KernelPoint> import_table(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) ||
        header != "t,g,P11,mx,mv,Sxx,Sxv,Svv,Lxx,Lxv,Lvv,ell,z_sde,z_ode") {
        throw IoError("import_table: missing or unrecognized header row");
    }
    std::vector<KernelPoint> points;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        KernelPoint kp{};
        char c = ',';
        ls >> kp.t >> c >> kp.g >> c >> kp.P11 >> c >> kp.mx >> c >> kp.mv >> c >> kp.Sxx >> c >>
            kp.Sxv >> c >> kp.Svv >> c >> kp.Lxx >> c >> kp.Lxv >> c >> kp.Lvv >> c >> kp.ell >>
            c >> kp.z_sde >> c >> kp.z_ode;
        if (!ls) throw IoError("import_table: malformed row: " + line);
        points.push_back(kp);
    }
    return points;
}

void KernelTable::export_table_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    export_table(os);
    if (!os.good()) throw IoError("write failed: " + path);
}

}  // namespace agm
