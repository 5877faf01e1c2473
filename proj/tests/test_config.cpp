#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "agm/config.hpp"

using namespace agm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& body) : path(name) {
        std::ofstream os(path);
        os << body;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("config file parsing with sections and comments") {
    const TempFile f("config_parse_test.cfg",
                     "# toy run\n"
                     "dataset = swissroll\n"
                     "seed = 42   # trailing comment\n"
                     "\n"
                     "[grid]\n"
                     "N = 10\n"
                     "tN = 0.9\n"
                     "[sampler]\n"
                     "mode = sde\n"
                     "n = 256\n"
                     "[train]\n"
                     "hidden = 32, 32\n"
                     "[cond]\n"
                     "x = 4.0, 0.0\n");

    const RunConfig cfg = load_config(f.path);
    CHECK(cfg.dataset == "swissroll");
    CHECK(cfg.seed == 42);
    CHECK(cfg.grid_N == 10);
    CHECK(cfg.grid_tN == 0.9);
    CHECK(cfg.grid_tN_set);
    CHECK(cfg.mode == "sde");
    CHECK(cfg.n_samples == 256);
    CHECK(cfg.hidden == std::vector<int>{32, 32});
    REQUIRE(cfg.cond_x.size() == 2);
    CHECK(cfg.cond_x[0] == 4.0);
    // untouched keys keep their defaults
    CHECK(cfg.schedule_p == 3.0);
    CHECK(cfg.multistep == 2);

    CHECK_THROWS_AS(load_config("no_such_config_file.cfg"), IoError);

    const TempFile bad("config_bad_line_test.cfg", "dataset mog8\n");
    CHECK_THROWS_AS(load_config(bad.path), ConfigError);

    const TempFile unknown("config_unknown_key_test.cfg", "grid.M = 3\n");
    CHECK_THROWS_AS(load_config(unknown.path), ConfigError);

    const TempFile bad_num("config_bad_number_test.cfg", "grid.N = twenty\n");
    CHECK_THROWS_AS(load_config(bad_num.path), ConfigError);
}

TEST_CASE("overrides") {
    RunConfig cfg;
    apply_override(cfg, "grid.N=5");
    apply_override(cfg, "sampler.mode = sde");
    apply_override(cfg, "train.hidden=16,16,16");
    CHECK(cfg.grid_N == 5);
    CHECK(cfg.mode == "sde");
    CHECK(cfg.hidden == std::vector<int>{16, 16, 16});
    CHECK(!cfg.grid_tN_set);
    apply_override(cfg, "grid.tN=0.6");
    CHECK(cfg.grid_tN_set);

    CHECK_THROWS_AS(apply_override(cfg, "grid.N"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "nonsense.key=1"), ConfigError);
}

TEST_CASE("validation") {
    RunConfig ok;
    CHECK_NOTHROW(validate(ok));

    RunConfig c = ok;
    c.dataset = "imagenet";
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.mode = "heun";
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.sigma0_k = 1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.grid_tN = 1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.grid_t0 = 0.0;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.multistep = 4;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.hop = 21;  // evaluation indices end at N
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.hop = 20;
    CHECK_NOTHROW(validate(c));

    c = ok;
    c.cond_xi = 1.2;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = ok;
    c.mask = {0.0, 0.5};
    CHECK_THROWS_AS(validate(c), ConfigError);

    // the schedule must stay positive over the whole grid
    c = ok;
    c.schedule_tt = 0.9;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.grid_tN = 0.8;
    CHECK_NOTHROW(validate(c));

    c = ok;
    c.threads = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("serialization and hashing") {
    RunConfig a, b;
    CHECK(serialize(a) == serialize(b));
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    for (char ch : config_hash(a)) CHECK(std::isxdigit(static_cast<unsigned char>(ch)));

    b.seed = 1;
    CHECK(config_hash(a) != config_hash(b));

    b = a;
    b.lr = 1e-4;
    CHECK(config_hash(a) != config_hash(b));

    // plumbing-only fields do not affect provenance
    b = a;
    b.out_dir = "/tmp/elsewhere";
    b.checkpoint = "other.txt";
    b.threads = 8;
    CHECK(config_hash(a) == config_hash(b));

    // serialize -> parse -> serialize round trip
    const TempFile f("config_roundtrip_test.cfg", serialize(a));
    const RunConfig back = load_config(f.path);
    CHECK(serialize(back) == serialize(a));
}

TEST_CASE("per-NFE terminal time convention") {
    CHECK(default_tN(5) == 0.5);
    CHECK(default_tN(3) == 0.5);
    CHECK(default_tN(10) == 0.7);
    CHECK(default_tN(6) == 0.7);
    CHECK(default_tN(20) == 0.999);
    CHECK(default_tN(500) == 0.999);
}

TEST_CASE("output directory resolution") {
    RunConfig cfg;
    cfg.out_dir = "/tmp/explicit";
    CHECK(resolve_out_dir(cfg) == "/tmp/explicit");

    cfg.out_dir.clear();
    setenv("AGM_OUT", "/tmp/from_env", 1);
    CHECK(resolve_out_dir(cfg) == "/tmp/from_env");
    unsetenv("AGM_OUT");
    CHECK(resolve_out_dir(cfg) == ".");
}
