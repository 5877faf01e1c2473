#include "agm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace agm {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T out;
    if (!(is >> out) || !(is >> std::ws).eof()) {
        throw ConfigError("bad value for " + key + ": '" + value + "'");
    }
    return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    if (trim(value).empty()) return out;
    std::istringstream is(value);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(parse_num<T>(key, trim(item)));
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v[i];
    }
    return os.str();
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) {
    if (key == "dataset") c.dataset = value;
    else if (key == "schedule.p") c.schedule_p = parse_num<double>(key, value);
    else if (key == "schedule.tt") c.schedule_tt = parse_num<double>(key, value);
    else if (key == "sigma0.k") c.sigma0_k = parse_num<double>(key, value);
    else if (key == "grid.N") c.grid_N = parse_num<int>(key, value);
    else if (key == "grid.kappa") c.grid_kappa = parse_num<double>(key, value);
    else if (key == "grid.t0") c.grid_t0 = parse_num<double>(key, value);
    else if (key == "grid.tN") {
        c.grid_tN = parse_num<double>(key, value);
        c.grid_tN_set = true;
    }
    else if (key == "sampler.mode") c.mode = value;
    else if (key == "sampler.w") c.multistep = parse_num<int>(key, value);
    else if (key == "sampler.hop") c.hop = parse_num<int>(key, value);
    else if (key == "sampler.n") c.n_samples = parse_num<int>(key, value);
    else if (key == "sampler.trajectories") c.trajectories = parse_num<int>(key, value) != 0;
    else if (key == "sampler.svg") c.svg = parse_num<int>(key, value) != 0;
    else if (key == "cond.xi") c.cond_xi = parse_num<double>(key, value);
    else if (key == "cond.guidance") c.use_guidance = parse_num<int>(key, value) != 0;
    else if (key == "cond.c") c.guidance_c = parse_num<double>(key, value);
    else if (key == "cond.x") c.cond_x = parse_list<double>(key, value);
    else if (key == "cond.mask") c.mask = parse_list<double>(key, value);
    else if (key == "cond.x_known") c.x_known = parse_list<double>(key, value);
    else if (key == "train.iterations") c.iterations = parse_num<std::int64_t>(key, value);
    else if (key == "train.batch") c.batch = parse_num<int>(key, value);
    else if (key == "train.lr") c.lr = parse_num<double>(key, value);
    else if (key == "train.weight_decay") c.weight_decay = parse_num<double>(key, value);
    else if (key == "train.warmup") c.warmup = parse_num<std::int64_t>(key, value);
    else if (key == "train.ema") c.ema_decay = parse_num<double>(key, value);
    else if (key == "train.hidden") c.hidden = parse_list<int>(key, value);
    else if (key == "train.n_fourier") c.n_fourier = parse_num<int>(key, value);
    else if (key == "seed") c.seed = parse_num<std::uint64_t>(key, value);
    else if (key == "threads") c.threads = parse_num<int>(key, value);
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "checkpoint") c.checkpoint = value;
    else throw ConfigError("unknown config key: " + key);
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        set_key(cfg, key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must be key=value, got '" + assignment + "'");
    }
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void validate(const RunConfig& cfg) {
    if (cfg.dataset != "mog8" && cfg.dataset != "swissroll") {
        throw ConfigError("dataset must be mog8|swissroll");
    }
    if (cfg.mode != "ode" && cfg.mode != "sde") throw ConfigError("sampler.mode must be ode|sde");
    if (std::abs(cfg.sigma0_k) >= 1.0) throw ConfigError("sigma0.k must satisfy |k| < 1");
    if (cfg.grid_N < 0) throw ConfigError("grid.N must be >= 0");
    if (cfg.grid_N > 0 && !(cfg.grid_t0 > 0.0 && cfg.grid_t0 < cfg.grid_tN && cfg.grid_tN < 1.0)) {
        throw ConfigError("grid times must satisfy 0 < t0 < tN < 1");
    }
    if (cfg.multistep < 1 || cfg.multistep > 3) throw ConfigError("sampler.w must be in {1,2,3}");
    if (cfg.hop > cfg.grid_N) {
        throw ConfigError("sampler.hop outside grid");
    }
    if (cfg.cond_xi < 0.0 || cfg.cond_xi > 1.0) throw ConfigError("cond.xi must be in [0,1]");
    if (cfg.guidance_c < 0.0 || cfg.guidance_c > cfg.grid_tN) {
        throw ConfigError("cond.c must be in [0, tN]");
    }
    for (double m : cfg.mask) {
        if (m != 0.0 && m != 1.0) throw ConfigError("cond.mask entries must be 0 or 1");
    }
    if (cfg.n_samples < 1) throw ConfigError("sampler.n must be >= 1");
    if (cfg.iterations < 0) throw ConfigError("train.iterations must be >= 0");
    if (cfg.batch < 1) throw ConfigError("train.batch must be >= 1");
    if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
    if (cfg.schedule_p * (cfg.schedule_tt - cfg.grid_tN) <= 0.0) {
        throw ConfigError("schedule must keep g(t) > 0 on the grid");
    }
}

std::string serialize(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "dataset=" << c.dataset << '\n'
       << "schedule.p=" << c.schedule_p << '\n'
       << "schedule.tt=" << c.schedule_tt << '\n'
       << "sigma0.k=" << c.sigma0_k << '\n'
       << "grid.N=" << c.grid_N << '\n'
       << "grid.kappa=" << c.grid_kappa << '\n'
       << "grid.t0=" << c.grid_t0 << '\n'
       << "grid.tN=" << c.grid_tN << '\n'
       << "sampler.mode=" << c.mode << '\n'
       << "sampler.w=" << c.multistep << '\n'
       << "sampler.hop=" << c.hop << '\n'
       << "sampler.n=" << c.n_samples << '\n'
       << "sampler.trajectories=" << (c.trajectories ? 1 : 0) << '\n'
       << "sampler.svg=" << (c.svg ? 1 : 0) << '\n'
       << "cond.xi=" << c.cond_xi << '\n'
       << "cond.guidance=" << (c.use_guidance ? 1 : 0) << '\n'
       << "cond.c=" << c.guidance_c << '\n'
       << "cond.x=" << join(c.cond_x) << '\n'
       << "cond.mask=" << join(c.mask) << '\n'
       << "cond.x_known=" << join(c.x_known) << '\n'
       << "train.iterations=" << c.iterations << '\n'
       << "train.batch=" << c.batch << '\n'
       << "train.lr=" << c.lr << '\n'
       << "train.weight_decay=" << c.weight_decay << '\n'
       << "train.warmup=" << c.warmup << '\n'
       << "train.ema=" << c.ema_decay << '\n'
       << "train.hidden=" << join(c.hidden) << '\n'
       << "train.n_fourier=" << c.n_fourier << '\n'
       << "seed=" << c.seed << '\n';
    return os.str();
}

std::string config_hash(const RunConfig& cfg) {
    const std::string s = serialize(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

double default_tN(int nfe) {
    if (nfe <= 5) return 0.5;
    if (nfe <= 10) return 0.7;
    return 0.999;
}

std::string resolve_out_dir(const RunConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("AGM_OUT"); env && *env) return env;
    return ".";
}

}  // namespace agm
