#include "agm/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace agm {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_deriv(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

ForceNet::ForceNet(int dim, std::vector<int> hidden, int n_fourier, double input_scale)
    : dim_(dim), n_fourier_(n_fourier), input_scale_(input_scale) {
    if (dim < 1) throw ConfigError("ForceNet: dim must be >= 1");
    if (!(input_scale > 0.0)) throw ConfigError("ForceNet: input_scale must be positive");
    if (n_fourier < 0 || n_fourier % 2 != 0) {
        throw ConfigError("ForceNet: n_fourier must be even and >= 0");
    }
    widths_.push_back(2 * dim + n_fourier);
    for (int h : hidden) {
        if (h < 1) throw ConfigError("ForceNet: hidden width must be >= 1");
        widths_.push_back(h);
    }
    widths_.push_back(dim);

    n_params_ = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        W_.emplace_back(Mat::Zero(widths_[l + 1], widths_[l]));
        b_.emplace_back(Vec::Zero(widths_[l + 1]));
        n_params_ += W_.back().size() + b_.back().size();
    }
}

void ForceNet::init(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < W_.size(); ++l) {
        const double scale = std::sqrt(2.0 / static_cast<double>(widths_[l]));
        for (Eigen::Index i = 0; i < W_[l].size(); ++i) W_[l].data()[i] = scale * normal(rng);
        b_[l].setZero();
    }
}

Eigen::VectorXd ForceNet::parameters() const {
    Eigen::VectorXd flat(n_params_);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        flat.segment(off, W_[l].size()) = Eigen::Map<const Eigen::VectorXd>(W_[l].data(), W_[l].size());
        off += W_[l].size();
        flat.segment(off, b_[l].size()) = b_[l];
        off += b_[l].size();
    }
    return flat;
}

void ForceNet::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != n_params_) throw NumericError("ForceNet: parameter size mismatch");
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        Eigen::Map<Eigen::VectorXd>(W_[l].data(), W_[l].size()) = flat.segment(off, W_[l].size());
        off += W_[l].size();
        b_[l] = flat.segment(off, b_[l].size());
        off += b_[l].size();
    }
}

Vec ForceNet::feature(const PhaseState& m, double t) const {
    if (m.x.size() != dim_ || m.v.size() != dim_) {
        throw NumericError("ForceNet: input dimension mismatch");
    }
    Vec f(widths_.front());
    f.head(dim_) = m.x / input_scale_;
    f.segment(dim_, dim_) = m.v / input_scale_;
    for (int j = 0; j < n_fourier_ / 2; ++j) {
        const double w = kTwoPi * std::ldexp(1.0, j) * t;
        f[2 * dim_ + 2 * j] = std::sin(w);
        f[2 * dim_ + 2 * j + 1] = std::cos(w);
    }
    return f;
}

Mat ForceNet::features(const std::vector<const PhaseState*>& ms,
                       const std::vector<double>& ts) const {
    Mat input(widths_.front(), static_cast<Eigen::Index>(ms.size()));
    for (std::size_t i = 0; i < ms.size(); ++i) {
        input.col(static_cast<Eigen::Index>(i)) = feature(*ms[i], ts[i]);
    }
    return input;
}

Mat ForceNet::forward_batch(const Mat& input, ForwardCache* cache) const {
    if (input.rows() != widths_.front()) throw NumericError("ForceNet: feature size mismatch");
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->act.clear();
    }
    Mat h = input;
    const std::size_t n_layers = W_.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        Mat z = (W_[l] * h).colwise() + b_[l];
        if (!z.allFinite()) {
            throw NumericError("ForceNet: non-finite activations at layer " + std::to_string(l));
        }
        if (cache) cache->pre.push_back(z);
        if (l + 1 < n_layers) {
            h = z.unaryExpr([](double x) { return silu(x); });
            if (cache) cache->act.push_back(h);
        } else {
            h = std::move(z);
        }
    }
    if (cache) cache->output = h;
    return h;
}

Vec ForceNet::forward(const PhaseState& m, double t) const {
    return forward_batch(feature(m, t));
}

Eigen::VectorXd ForceNet::backward(const ForwardCache& cache, const Mat& dY) const {
    const std::size_t n_layers = W_.size();
    std::vector<Mat> dW(n_layers);
    std::vector<Vec> db(n_layers);

    Mat delta = dY;
    for (std::size_t li = n_layers; li-- > 0;) {
        const Mat& below = li == 0 ? cache.input : cache.act[li - 1];
        dW[li] = delta * below.transpose();
        db[li] = delta.rowwise().sum();
        if (li > 0) {
            Mat dact = W_[li].transpose() * delta;
            delta = dact.cwiseProduct(
                cache.pre[li - 1].unaryExpr([](double x) { return silu_deriv(x); }));
        }
    }

    Eigen::VectorXd flat(n_params_);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        flat.segment(off, dW[l].size()) = Eigen::Map<const Eigen::VectorXd>(dW[l].data(), dW[l].size());
        off += dW[l].size();
        flat.segment(off, db[l].size()) = db[l];
        off += db[l].size();
    }
    return flat;
}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (m.size() != params.size()) {
        m = Eigen::VectorXd::Zero(params.size());
        v = Eigen::VectorXd::Zero(params.size());
    }
    ++step_count;
    double lr_t = lr;
    if (warmup > 0 && step_count <= warmup) {
        lr_t = lr * static_cast<double>(step_count) / static_cast<double>(warmup);
    }
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    params -= lr_t * weight_decay * params;
    params.array() -=
        lr_t * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

void Ema::update(const Eigen::VectorXd& params) {
    if (shadow.size() != params.size()) {
        shadow = params;
        return;
    }
    shadow = decay * shadow + (1.0 - decay) * params;
}

TrainResult train(const std::function<Vec(std::mt19937_64&)>& draw_x1, const KernelTable& kernel,
                  const TrainConfig& config, const WarmStart* warm) {
    std::mt19937_64 rng(config.seed);
    const Vec probe = draw_x1(rng);
    const int dim = static_cast<int>(probe.size());

    ForceNet net(dim, config.hidden, config.n_fourier, config.input_scale);
    net.init(rng);
    Eigen::VectorXd params = net.parameters();

    AdamW opt;
    opt.lr = config.lr;
    opt.weight_decay = config.weight_decay;
    opt.warmup = config.warmup;
    Ema ema;
    ema.decay = config.ema_decay;
    ema.shadow = params;
    if (warm) {
        if (warm->params.size() != params.size()) {
            throw ConfigError("train: warm-start parameter size mismatch");
        }
        params = warm->params;
        ema.shadow = warm->ema.size() == params.size() ? warm->ema : warm->params;
        opt.step_count = warm->step;
    }

    const LossWeights weights{kernel.sigma_data()};
    const double t_lo = kernel.grid().t0;
    const double t_hi = kernel.grid().tN;
    std::uniform_real_distribution<double> unif_t(t_lo, t_hi);

    TrainResult result{net, net, {}};
    result.loss_curve.reserve(static_cast<std::size_t>(config.iterations));

    std::vector<TrainingDraw> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (std::int64_t it = 0; it < config.iterations; ++it) {
        batch.clear();
        for (int b = 0; b < config.batch_size; ++b) {
            const double t = unif_t(rng);
            batch.push_back(sample_pair(draw_x1(rng), t, kernel, rng));
        }
        net.set_parameters(params);
        const LossValue lv = training_loss(net, batch, weights, kernel, config.mode);
        if (lv.loss > config.divergence_threshold) {
            throw NumericError("train: loss diverged to " + std::to_string(lv.loss) +
                               " at iteration " + std::to_string(it));
        }
        opt.step(params, lv.grad);
        ema.update(params);
        result.loss_curve.push_back(lv.loss);
    }

    result.net = net;
    result.net.set_parameters(params);
    result.ema_net = net;
    result.ema_net.set_parameters(ema.shadow);
    return result;
}

namespace {

void write_vec(std::ostream& os, const Eigen::VectorXd& v) {
    os << v.size();
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v[i];
    os << '\n';
}

Eigen::VectorXd read_vec(std::istream& is) {
    Eigen::Index n = 0;
    if (!(is >> n) || n < 0) throw IoError("checkpoint: bad vector length");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(is >> v[i])) throw IoError("checkpoint: truncated vector");
    }
    return v;
}

}  // namespace

void ForceNet::save(const std::string& path, const Eigen::VectorXd& ema, std::int64_t step,
                    std::uint64_t seed, const std::string& config_hash) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "agm-checkpoint v1\n";
    os << "dim " << dim_ << "\nn_fourier " << n_fourier_ << "\nscale "
       << std::setprecision(17) << input_scale_ << "\nhidden";
    for (std::size_t l = 1; l + 1 < widths_.size(); ++l) os << ' ' << widths_[l];
    os << "\nstep " << step << "\nseed " << seed << "\nconfig_hash "
       << (config_hash.empty() ? "-" : config_hash) << "\n";
    os << "params ";
    write_vec(os, parameters());
    os << "ema ";
    write_vec(os, ema);
    if (!os.good()) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::string magic, version;
    is >> magic >> version;
    if (magic != "agm-checkpoint" || version != "v1") {
        throw IoError("not an agm checkpoint: " + path);
    }
    std::string key;
    int dim = 0, n_fourier = 0;
    is >> key >> dim;
    if (key != "dim") throw IoError("checkpoint: expected dim");
    is >> key >> n_fourier;
    if (key != "n_fourier") throw IoError("checkpoint: expected n_fourier");
    double scale = 1.0;
    is >> key;
    if (key == "scale") {  // older files omit the input scale and imply 1
        is >> scale;
        is >> key;
    }
    if (key != "hidden") throw IoError("checkpoint: expected hidden");
    std::string line;
    std::getline(is, line);
    std::istringstream hs(line);
    std::vector<int> hidden;
    for (int h; hs >> h;) hidden.push_back(h);

    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::string hash;
    is >> key >> step;
    if (key != "step") throw IoError("checkpoint: expected step");
    is >> key >> seed;
    if (key != "seed") throw IoError("checkpoint: expected seed");
    is >> key >> hash;
    if (key != "config_hash") throw IoError("checkpoint: expected config_hash");
    if (hash == "-") hash.clear();

    Checkpoint ck{ForceNet(dim, hidden, n_fourier, scale), {}, step, seed, hash};
    is >> key;
    if (key != "params") throw IoError("checkpoint: expected params");
    ck.net.set_parameters(read_vec(is));
    is >> key;
    if (key != "ema") throw IoError("checkpoint: expected ema");
    ck.ema = read_vec(is);
    return ck;
}

}  // namespace agm
