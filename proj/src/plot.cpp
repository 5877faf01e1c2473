#include "agm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "agm/errors.hpp"

namespace agm {

namespace {

constexpr int kSize = 640;
constexpr double kMargin = 24.0;

struct Box {
    double lo = -1.0, hi = 1.0;

    double to_px(double v) const {
        return kMargin + (v - lo) / (hi - lo) * (kSize - 2.0 * kMargin);
    }
    double to_py(double v) const {  // SVG y grows downward
        return kSize - kMargin - (v - lo) / (hi - lo) * (kSize - 2.0 * kMargin);
    }
};

Box fit_box(double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

std::ofstream open_svg(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
       << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os;
}

}  // namespace

void svg_scatter(const std::string& path, const Eigen::MatrixXd& points) {
    if (points.rows() != 2) throw ConfigError("svg_scatter: need 2D points");
    double lo = points.minCoeff();
    double hi = points.maxCoeff();
    const Box box = fit_box(lo, hi);

    auto os = open_svg(path);
    os.precision(5);
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        os << "<circle cx=\"" << box.to_px(points(0, i)) << "\" cy=\"" << box.to_py(points(1, i))
           << "\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>\n";
    }
    os << "</svg>\n";
    if (!os.good()) throw IoError("write failed: " + path);
}

void svg_trajectories(const std::string& path, const std::vector<TrajectoryRecord>& records) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& rec : records) {
        for (const auto& st : rec.states) {
            if (st.x.size() != 2) throw ConfigError("svg_trajectories: need 2D states");
            lo = any ? std::min(lo, st.x.minCoeff()) : st.x.minCoeff();
            hi = any ? std::max(hi, st.x.maxCoeff()) : st.x.maxCoeff();
            any = true;
        }
    }
    if (!any) throw ConfigError("svg_trajectories: no states");
    const Box box = fit_box(lo, hi);

    auto os = open_svg(path);
    os.precision(5);
    for (const auto& rec : records) {
        os << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-opacity=\"0.6\" "
              "stroke-width=\"1\" points=\"";
        for (const auto& st : rec.states) {
            os << box.to_px(st.x[0]) << ',' << box.to_py(st.x[1]) << ' ';
        }
        os << "\"/>\n";
    }
    os << "</svg>\n";
    if (!os.good()) throw IoError("write failed: " + path);
}

}  // namespace agm
