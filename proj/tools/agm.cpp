// agm: train / sample / eval / inspect for the phase-space bridge model.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "agm/config.hpp"
#include "agm/datasets.hpp"
#include "agm/eval.hpp"
#include "agm/model.hpp"
#include "agm/plot.hpp"
#include "agm/samplers.hpp"

namespace {

using namespace agm;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

DynamicsMode parse_mode(const std::string& mode) {
    return mode == "sde" ? DynamicsMode::Sde : DynamicsMode::Ode;
}

TimeGrid sampling_grid(const RunConfig& cfg) {
    if (cfg.grid_N == 0) {
        // degenerate single-evaluation plan: hop directly at t0
        TimeGrid g;
        g.N = 0;
        g.kappa = cfg.grid_kappa;
        g.t0 = cfg.grid_t0;
        g.tN = cfg.grid_t0;
        g.ts = {cfg.grid_t0};
        return g;
    }
    const double tN = cfg.grid_tN_set ? cfg.grid_tN : default_tN(cfg.grid_N + 1);
    return time_grid(cfg.grid_N, cfg.grid_kappa, cfg.grid_t0, tN);
}

KernelTable make_kernel(const RunConfig& cfg, const TimeGrid& grid, double sd) {
    return KernelTable(grid, DiffusionSchedule{cfg.schedule_p, cfg.schedule_tt}, cfg.sigma0_k, sd);
}

void write_header(std::ostream& os, const RunConfig& cfg) {
    os << "# config_hash " << config_hash(cfg) << "\n# seed " << cfg.seed << '\n';
}

void write_config_snapshot(const RunConfig& cfg, const std::string& dir) {
    std::ofstream os(dir + "/config_snapshot.txt");
    if (!os) throw IoError("cannot write config snapshot in " + dir);
    write_header(os, cfg);
    os << serialize(cfg);
}

int cmd_train(const RunConfig& cfg) {
    validate(cfg);
    const std::string dir = resolve_out_dir(cfg);
    std::filesystem::create_directories(dir);

    const ToyDataset ds = make_dataset(cfg.dataset, cfg.seed);
    const double sd = sigma_data(ds);
    // training draws t over the full horizon regardless of the sampling grid
    const TimeGrid grid = time_grid(std::max(cfg.grid_N, 1), cfg.grid_kappa, cfg.grid_t0,
                                    cfg.grid_tN_set ? cfg.grid_tN : 0.999);
    const KernelTable kernel = make_kernel(cfg, grid, sd);

    TrainConfig tc;
    tc.iterations = cfg.iterations;
    tc.batch_size = cfg.batch;
    tc.lr = cfg.lr;
    tc.weight_decay = cfg.weight_decay;
    tc.warmup = cfg.warmup;
    tc.ema_decay = cfg.ema_decay;
    tc.seed = cfg.seed;
    tc.hidden = cfg.hidden;
    tc.n_fourier = cfg.n_fourier;
    tc.mode = parse_mode(cfg.mode);
    tc.input_scale = sd;

    WarmStart warm;
    const WarmStart* warm_ptr = nullptr;
    std::int64_t step0 = 0;
    if (!cfg.checkpoint.empty()) {
        auto ck = load_checkpoint(cfg.checkpoint);
        warm.params = ck.net.parameters();
        warm.ema = ck.ema;
        warm.step = ck.step;
        step0 = ck.step;
        warm_ptr = &warm;
    }

    auto draw = [&ds](std::mt19937_64& rng) -> Vec { return sample_data(ds, 1, rng).col(0); };
    const TrainResult result = train(draw, kernel, tc, warm_ptr);

    result.net.save(dir + "/checkpoint.txt", result.ema_net.parameters(),
                    step0 + cfg.iterations, cfg.seed, config_hash(cfg));
    {
        std::ofstream os(dir + "/loss_curve.txt");
        if (!os) throw IoError("cannot write loss curve in " + dir);
        write_header(os, cfg);
        os.precision(10);
        for (double v : result.loss_curve) os << v << '\n';
    }
    write_config_snapshot(cfg, dir);
    std::cout << "trained " << cfg.iterations << " iterations (total step "
              << step0 + cfg.iterations << "), checkpoint: " << dir << "/checkpoint.txt\n";
    return 0;
}

SamplerPlan make_plan(const RunConfig& cfg) {
    SamplerPlan plan;
    plan.grid = sampling_grid(cfg);
    plan.mode = parse_mode(cfg.mode);
    plan.multistep = cfg.multistep;
    if (cfg.hop >= 0) plan.hop_index = cfg.hop;
    if (!cfg.cond_x.empty()) {
        const Vec xc = Eigen::Map<const Vec>(cfg.cond_x.data(),
                                             static_cast<Eigen::Index>(cfg.cond_x.size()));
        plan.conditional = ConditionalInit{xc, cfg.cond_xi};
        if (cfg.use_guidance) plan.guidance = VelocityGuidance{xc, cfg.guidance_c};
    }
    if (!cfg.mask.empty()) {
        if (cfg.x_known.size() != cfg.mask.size()) {
            throw ConfigError("cond.x_known and cond.mask must have equal length");
        }
        plan.inpaint = InpaintSettings{
            Eigen::Map<const Vec>(cfg.x_known.data(),
                                  static_cast<Eigen::Index>(cfg.x_known.size())),
            Eigen::Map<const Vec>(cfg.mask.data(), static_cast<Eigen::Index>(cfg.mask.size()))};
    }
    return plan;
}

// Chunked over a fixed partition so results are identical for any --threads.
SampleResult sample_chunked(const ForceSource& source, const SamplerPlan& plan,
                            const KernelTable& kernel, int dim, const RunConfig& cfg,
                            bool keep_records) {
    const int n = cfg.n_samples;
    const int chunks = std::min(n, 64);
    std::vector<SampleResult> partial(static_cast<std::size_t>(chunks));
    std::atomic<int> next{0};

    auto worker = [&] {
        for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
            const int lo = static_cast<int>(static_cast<std::int64_t>(n) * c / chunks);
            const int hi = static_cast<int>(static_cast<std::int64_t>(n) * (c + 1) / chunks);
            if (hi == lo) continue;
            std::mt19937_64 rng(splitmix64(cfg.seed ^ static_cast<std::uint64_t>(c)));
            partial[static_cast<std::size_t>(c)] =
                sample(source, plan, kernel, dim, rng, hi - lo, keep_records);
        }
    };

    const int n_threads = std::max(1, cfg.threads);
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    SampleResult merged;
    for (auto& p : partial) {
        merged.nfe += p.nfe;
        for (auto& s : p.samples) merged.samples.push_back(std::move(s));
        for (auto& r : p.records) merged.records.push_back(std::move(r));
    }
    return merged;
}

int cmd_sample(const RunConfig& cfg) {
    validate(cfg);
    if (cfg.checkpoint.empty()) throw ConfigError("sample: checkpoint is required");
    const std::string dir = resolve_out_dir(cfg);
    std::filesystem::create_directories(dir);

    auto ck = load_checkpoint(cfg.checkpoint);
    ForceNet net = ck.net;
    if (ck.ema.size() == net.param_count()) net.set_parameters(ck.ema);

    const ToyDataset ds = make_dataset(cfg.dataset, ck.seed);
    const double sd = sigma_data(ds);
    const SamplerPlan plan = make_plan(cfg);
    const KernelTable kernel = make_kernel(cfg, plan.grid, sd);
    const ForceSource source = net_force(net, kernel, plan.mode);

    const auto tic = std::chrono::steady_clock::now();
    const SampleResult result = sample_chunked(source, plan, kernel, net.dim(), cfg,
                                               cfg.trajectories || cfg.svg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
                            .count();

    {
        std::ofstream os(dir + "/samples.txt");
        if (!os) throw IoError("cannot write samples in " + dir);
        write_header(os, cfg);
        os << "# nfe " << result.nfe << '\n';
        os.precision(10);
        for (const Vec& s : result.samples) {
            for (Eigen::Index k = 0; k < s.size(); ++k) os << (k ? " " : "") << s[k];
            os << '\n';
        }
    }
    if (cfg.trajectories) {
        std::ofstream os(dir + "/trajectories.txt");
        if (!os) throw IoError("cannot write trajectories in " + dir);
        write_header(os, cfg);
        os << "# chain step t x... v... xhat...\n";
        os.precision(10);
        for (std::size_t c = 0; c < result.records.size(); ++c) {
            const TrajectoryRecord& rec = result.records[c];
            for (std::size_t i = 0; i < rec.ts.size(); ++i) {
                os << c << ' ' << i << ' ' << rec.ts[i];
                for (Eigen::Index k = 0; k < rec.states[i].x.size(); ++k)
                    os << ' ' << rec.states[i].x[k];
                for (Eigen::Index k = 0; k < rec.states[i].v.size(); ++k)
                    os << ' ' << rec.states[i].v[k];
                for (Eigen::Index k = 0; k < rec.xhat[i].size(); ++k) os << ' ' << rec.xhat[i][k];
                os << '\n';
            }
        }
    }
    if (cfg.svg) {
        Eigen::MatrixXd pts(net.dim(), static_cast<Eigen::Index>(result.samples.size()));
        for (std::size_t i = 0; i < result.samples.size(); ++i) {
            pts.col(static_cast<Eigen::Index>(i)) = result.samples[i];
        }
        svg_scatter(dir + "/samples.svg", pts);
        if (!result.records.empty()) {
            std::vector<TrajectoryRecord> few(
                result.records.begin(),
                result.records.begin() + std::min<std::size_t>(result.records.size(), 32));
            svg_trajectories(dir + "/trajectories.svg", few);
        }
    }
    write_config_snapshot(cfg, dir);
    std::cout << "wrote " << result.samples.size() << " samples, nfe " << result.nfe << ", wall "
              << wall << " s: " << dir << "/samples.txt\n";
    return 0;
}

Eigen::MatrixXd read_samples(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open samples " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::vector<double> row;
        for (double v; ls >> v;) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("no samples in " + path);
    const auto d = rows.front().size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) throw IoError("ragged samples file " + path);
        for (std::size_t k = 0; k < d; ++k) {
            out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = rows[i][k];
        }
    }
    return out;
}

std::vector<TrajectoryRecord> read_trajectories(const std::string& path, int dim) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open trajectories " + path);
    std::vector<TrajectoryRecord> records;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::size_t chain = 0, step = 0;
        double t = 0.0;
        if (!(ls >> chain >> step >> t)) throw IoError("bad trajectory row in " + path);
        PhaseState st;
        st.x.resize(dim);
        st.v.resize(dim);
        Vec xh(dim);
        for (int k = 0; k < dim; ++k) ls >> st.x[k];
        for (int k = 0; k < dim; ++k) ls >> st.v[k];
        for (int k = 0; k < dim; ++k) ls >> xh[k];
        if (!ls) throw IoError("bad trajectory row in " + path);
        if (chain >= records.size()) records.resize(chain + 1);
        records[chain].ts.push_back(t);
        records[chain].states.push_back(std::move(st));
        records[chain].xhat.push_back(std::move(xh));
    }
    return records;
}

int cmd_eval(const RunConfig& cfg, const std::string& samples_path,
             const std::string& traj_path) {
    validate(cfg);
    const std::string dir = resolve_out_dir(cfg);
    std::filesystem::create_directories(dir);

    const Eigen::MatrixXd samples = read_samples(samples_path);
    const ToyDataset ds = make_dataset(cfg.dataset, cfg.seed);
    if (samples.rows() != ds.dim) {
        throw ConfigError("samples dimension " + std::to_string(samples.rows()) +
                          " does not match dataset dimension " + std::to_string(ds.dim));
    }

    const auto tic = std::chrono::steady_clock::now();
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0xe7a1d4f3ULL));
    const Eigen::MatrixXd truth = sample_data(ds, static_cast<int>(samples.cols()), rng);

    EvalReport report;
    report.energy_distance = energy_distance(samples, truth);
    if (ds.kind == ToyKind::Mog8) {
        report.occupancy_divergence = occupancy_divergence(samples, ds);
    }
    if (!traj_path.empty()) {
        const auto records = read_trajectories(traj_path, static_cast<int>(samples.rows()));
        if (!records.empty() && records.front().states.size() >= 3) {
            report.straightness = straightness(records.front());
        }
    }
    report.nfe = (cfg.hop >= 0 ? cfg.hop : cfg.grid_N) + 1;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    report.config_hash = config_hash(cfg);
    report.seed = cfg.seed;

    std::cout << format_report(report);
    append_ledger(dir + "/results_ledger.txt", report);
    return 0;
}

int cmd_inspect(const RunConfig& cfg, bool k_sweep, const std::string& out_path) {
    validate(cfg);
    const ToyDataset ds = make_dataset(cfg.dataset, cfg.seed);
    const double sd = sigma_data(ds);

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw IoError("cannot open " + out_path + " for writing");
        os = &file;
    }

    if (k_sweep) {
        // terminal std of the uncontrolled marginal x0 + v0 under Sigma0(k)
        *os << "k,uncontrolled_terminal_std\n";
        os->precision(10);
        for (int i = -18; i <= 18; ++i) {
            const double k = 0.05 * i;
            *os << k << ',' << std::sqrt(2.0 * (1.0 + k)) << '\n';
        }
        return 0;
    }

    const TimeGrid grid = sampling_grid(cfg);
    if (grid.N == 0) throw ConfigError("inspect: need grid.N >= 1");
    const KernelTable kernel = make_kernel(cfg, grid, sd);
    *os << "# config_hash " << config_hash(cfg) << "\n# seed " << cfg.seed << '\n';
    kernel.export_table(*os);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceleration generative model: phase-space bridge training and sampling"};
    app.require_subcommand(1);

    std::string config_path, samples_path, traj_path, out_path;
    std::vector<std::string> overrides;
    bool k_sweep = false;

    RunConfig direct;  // flags applied after file + --set overrides
    bool seed_set = false, out_set = false, threads_set = false, ckpt_set = false;
    std::uint64_t seed_flag = 0;
    std::string out_flag, ckpt_flag;
    int threads_flag = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (key=value lines)");
        sub->add_option("--set", overrides, "override, key=value (repeatable)")
            ->take_all();
        sub->add_option("--seed", seed_flag, "RNG seed")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--out", out_flag, "output directory")->each([&](const std::string&) {
            out_set = true;
        });
        sub->add_option("--threads", threads_flag, "worker thread cap")
            ->each([&](const std::string&) { threads_set = true; });
        sub->add_option("--checkpoint", ckpt_flag, "checkpoint path")
            ->each([&](const std::string&) { ckpt_set = true; });
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a force network");
    CLI::App* sample_cmd = app.add_subcommand("sample", "draw samples from a checkpoint");
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a samples file against the dataset");
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "dump the kernel table");
    for (CLI::App* sub : {train_cmd, sample_cmd, eval_cmd, inspect_cmd}) add_common(sub);
    eval_cmd->add_option("--samples", samples_path, "samples file to score")->required();
    eval_cmd->add_option("--trajectories", traj_path, "trajectory file for straightness");
    inspect_cmd->add_flag("--k-sweep", k_sweep, "emit terminal-std curve over k");
    inspect_cmd->add_option("--table-out", out_path, "write table here instead of stdout");

    try {
        app.parse(argc, argv);

        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        for (const std::string& o : overrides) apply_override(cfg, o);
        if (seed_set) cfg.seed = seed_flag;
        if (out_set) cfg.out_dir = out_flag;
        if (threads_set) cfg.threads = threads_flag;
        if (ckpt_set) cfg.checkpoint = ckpt_flag;

        if (train_cmd->parsed()) return cmd_train(cfg);
        if (sample_cmd->parsed()) return cmd_sample(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg, samples_path, traj_path);
        return cmd_inspect(cfg, k_sweep, out_path);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
