#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "akmpc/app.hpp"
#include "akmpc/config.hpp"
#include "akmpc/errors.hpp"
#include "akmpc/history.hpp"
#include "akmpc/model_io.hpp"
#include "akmpc/plant.hpp"
#include "synthetic.hpp"

using namespace akmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("akmpc_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(AKMPC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig bilinear_config() {
    RunConfig c;
    const Schema s = testing::bilinear_schema();
    c.ingest.state_names = s.state_names;
    c.ingest.input_names = s.input_names;
    c.mpc.r_diag = {1e-2};
    c.mpc.s_diag = {0.0};
    c.mpc.manipulated = {true, true, false};
    c.advisor.setpoints = {1.0, 1.0, 1.0};
    c.advisor.lsl = {0.9, 0.9, 0.9};
    c.advisor.usl = {1.1, 1.1, 1.1};
    c.validate();
    return c;
}

RunConfig linear_config() {
    RunConfig c = bilinear_config();
    c.ingest.input_names = SyntheticPlant::linear().input_names();
    c.mpc.manipulated = {true, true};
    c.ident.lambda_reg = 0.0;
    c.validate();
    return c;
}

// Noise-free linear-plant batch under uniform random inputs, one row per second.
BatchLog linear_batch(int id, int rows, std::mt19937_64& rng) {
    const SyntheticPlant p = SyntheticPlant::linear();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    BatchLog b;
    b.batch_id = id;
    b.source = "linear-" + std::to_string(id);
    b.state_names = p.state_names();
    b.input_names = p.input_names();
    b.t_min.resize(rows);
    b.states.resize(3, rows);
    b.inputs.resize(2, rows);
    b.valid.assign(static_cast<std::size_t>(rows), true);
    VectorXd x = p.nominal_state();
    for (int k = 0; k < rows; ++k) {
        const VectorXd u = Eigen::Vector2d(uni(rng), uni(rng));
        b.t_min[k] = k / 60.0;
        b.states.col(k) = x;
        b.inputs.col(k) = u;
        x = p.map(x, u);
    }
    return b;
}

void write_bilinear_cleaned(const fs::path& dir, int n, int rows, std::uint64_t seed) {
    const SyntheticPlant plant = SyntheticPlant::bilinear(0.005);
    std::mt19937_64 rng(seed);
    for (int b = 1; b <= n; ++b)
        testing::sloppy_bilinear_batch(plant, b, rows, {}, rng).save(dir / ("batch_00" + std::to_string(b) + ".csv"));
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("documented defaults") {
        const RunConfig c;
        CHECK(c.ident.lambda_f == 0.995);
        CHECK(c.ident.lambda_reg == 1e-3);
        CHECK(c.ident.lambda_min == 0.9);
        CHECK(c.hpc.k == 10);
        CHECK(c.hpc.alpha_base == 0.05);
        CHECK(c.hpc.beta_adapt == 0.10);
        CHECK(c.mpc.prediction_horizon == 15);
        CHECK(c.mpc.control_horizon == 7);
        CHECK(c.mpc.q_diag == std::vector<double>{10.0, 100.0, 1.0});
        CHECK(c.mpc.r_diag == std::vector<double>(7, 1e-2));
        CHECK(c.mpc.s_diag == std::vector<double>(7, 0.0));
        CHECK_NOTHROW(c.validate());
        const MpcConfig m = c.mpc_config(7, InputEnvelope{VectorXd::Zero(7), VectorXd::Ones(7), VectorXd::Ones(7)});
        CHECK(m.manipulated[5] == false);
        CHECK(m.manipulated[6] == false);
    }

    TEST_CASE("config survives a JSON round trip") {
        RunConfig c = bilinear_config();
        c.seed = 77;
        c.hpc.sigma_d2 = 0.25;
        c.ident.p0 = "delta";
        c.closedloop.setpoint = {1.0, 2.0, 3.0};
        const nlohmann::json j = config_to_json(c);
        const RunConfig back = config_from_json(j);
        CHECK(back == c);
        CHECK(config_to_json(back).dump() == j.dump());

        const RunConfig partial = config_from_json(nlohmann::json::parse(R"({"mpc": {"prediction_horizon": 9}})"));
        CHECK(partial.mpc.prediction_horizon == 9);
        CHECK(partial.mpc.control_horizon == 7);
    }

    TEST_CASE("unknown keys and bad values are rejected") {
        CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"mpc": {"horizon": 3}})")), DataError);
        CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"extra": 1})")), DataError);
        CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"ident": {"lambda_f": "high"}})")), DataError);
        RunConfig c;
        c.mpc.control_horizon = 20;
        CHECK_THROWS_AS(c.validate(), DataError);
        c = RunConfig{};
        c.ident.p0 = "identity";
        CHECK_THROWS_AS(c.validate(), DataError);
    }

    TEST_CASE("exceptions map to exit codes") {
        std::ostringstream err;
        CHECK(guarded([] { return 0; }, err) == kExitOk);
        CHECK(guarded([]() -> int { throw DataError("x"); }, err) == kExitData);
        CHECK(guarded([]() -> int { throw NumericError("x"); }, err) == kExitNumeric);
        CHECK(guarded([]() -> int { throw RankDeficientError("x", 1); }, err) == kExitNumeric);
        CHECK(guarded([]() -> int { throw std::runtime_error("x"); }, err) == kExitData);
        CHECK(err.str().find("numeric error: x") != std::string::npos);
    }

    TEST_CASE("binary exit codes") {
        const fs::path dir = scratch("exit");
        CHECK(run_cli("") == kExitUsage);
        CHECK(run_cli("frobnicate") == kExitUsage);
        CHECK(run_cli("dump-config") == kExitOk);
        CHECK(run_cli("dump-config -o " + (dir / "c.json").string()) == kExitOk);
        CHECK(config_from_json(read_json_file(dir / "c.json")) == RunConfig{});

        {
            std::ofstream(dir / "bad.json") << R"({"mpc": {"nonsense": true}})";
        }
        CHECK(run_cli("dump-config --config " + (dir / "bad.json").string()) == kExitData);
        CHECK(run_cli("ingest " + (dir / "nope").string() + " " + (dir / "out").string()) == kExitData);

        // Constant inputs make the unregularized Gram matrix singular.
        const fs::path batches = dir / "flat";
        fs::create_directories(batches);
        std::mt19937_64 rng(3);
        BatchLog b = linear_batch(1, 50, rng);
        b.inputs.setConstant(0.5);
        b.save(batches / "batch_001.csv");
        write_json_file(dir / "linear.json", config_to_json(linear_config()));
        CHECK(run_cli("fit --config " + (dir / "linear.json").string() + " -o " + (dir / "m.json").string() + " " +
                      batches.string()) == kExitNumeric);
    }

    TEST_CASE("ingest of an empty directory fails with no batches") {
        const fs::path raw = scratch("empty_raw");
        std::ostringstream log;
        try {
            cmd_ingest(raw, raw / "out", bilinear_config(), log);
            FAIL("expected an error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("no batches") != std::string::npos);
        }
        CHECK(fs::exists(raw / "out" / "ingest_report.json"));
    }

    TEST_CASE("ingest keeps good files and names the rejected ones") {
        const fs::path raw = scratch("mixed_raw");
        const RunConfig cfg = bilinear_config();
        const SyntheticPlant plant = SyntheticPlant::bilinear(0.005);
        std::mt19937_64 rng(5);
        testing::write_raw_batch(raw / "a.csv", testing::sloppy_bilinear_batch(plant, 1, 320, {}, rng), cfg.schema(), 0,
                                 0.3);
        testing::write_raw_batch(raw / "b.csv", testing::sloppy_bilinear_batch(plant, 2, 40, {}, rng), cfg.schema());
        testing::write_raw_batch(raw / "c.csv", testing::sloppy_bilinear_batch(plant, 3, 330, {}, rng), cfg.schema());
        std::ostringstream log;
        CHECK(cmd_ingest(raw, raw / "out", cfg, log) == kExitOk);
        CHECK(fs::exists(raw / "out" / "batch_001.csv"));
        CHECK(fs::exists(raw / "out" / "batch_002.csv"));
        CHECK_FALSE(fs::exists(raw / "out" / "batch_003.csv"));
        const auto report = read_json_file(raw / "out" / "ingest_report.json");
        CHECK(report.dump().find("too short") != std::string::npos);
        CHECK(BatchLog::load(raw / "out" / "batch_002.csv", cfg.schema()).rows() == 330);
    }

    TEST_CASE("fit recovers the linear generator and refits identically") {
        const fs::path dir = scratch("fit");
        const fs::path batches = dir / "batches";
        fs::create_directories(batches);
        std::mt19937_64 rng(11);
        for (int b = 1; b <= 3; ++b) linear_batch(b, 700, rng).save(batches / ("batch_00" + std::to_string(b) + ".csv"));
        const RunConfig cfg = linear_config();
        std::ostringstream log;
        REQUIRE(cmd_fit({batches}, dir / "m1.json", cfg, log) == kExitOk);
        REQUIRE(cmd_fit({batches}, dir / "m2.json", cfg, log) == kExitOk);
        CHECK(slurp(dir / "m1.json") == slurp(dir / "m2.json"));

        const ModelFile f = load_model(dir / "m1.json");
        CHECK((f.model.A().topLeftCorner(3, 3) - SyntheticPlant::linear_A()).norm() < 1e-8);
        CHECK(f.model.A().block(0, 3, 3, 7).norm() < 1e-8);
        CHECK((f.model.B().topRows(3) - SyntheticPlant::linear_B()).norm() < 1e-8);
        REQUIRE(f.envelope.has_value());
        CHECK(f.input_names == SyntheticPlant::linear().input_names());

        save_model(dir / "m3.json", f);
        CHECK(slurp(dir / "m3.json") == slurp(dir / "m1.json"));
        const ModelFile g = load_model(dir / "m3.json");
        CHECK(g.model.theta == f.model.theta);
        CHECK(g.model.P == f.model.P);
    }

    TEST_CASE("advise, builddb and report end to end") {
        const fs::path dir = scratch("pipeline");
        const fs::path train = dir / "train", test = dir / "test";
        fs::create_directories(train);
        fs::create_directories(test);
        write_bilinear_cleaned(train, 3, 300, 21);
        write_bilinear_cleaned(test, 2, 150, 22);
        RunConfig cfg = bilinear_config();
        cfg.advisor.what_if_horizon = 3;
        std::ostringstream log;
        REQUIRE(cmd_fit({train}, dir / "model.json", cfg, log) == kExitOk);
        REQUIRE(cmd_builddb({train}, dir / "model.json", dir / "db.json", cfg, log) == kExitOk);
        CHECK(HistoryDatabase::load(dir / "db.json", 10).n_entries() == 3 * 300);
        RunConfig picky = cfg;
        picky.hpc.min_batch_cpk = 1e9;
        CHECK_THROWS_AS(cmd_builddb({train}, dir / "model.json", dir / "db2.json", picky, log), DataError);
        picky.hpc.min_batch_cpk = -1e9;
        REQUIRE(cmd_builddb({train}, dir / "model.json", dir / "db2.json", picky, log) == kExitOk);
        CHECK(slurp(dir / "db2.json") == slurp(dir / "db.json"));
        REQUIRE(cmd_advise({test}, dir / "model.json", dir / "adv", cfg, log) == kExitOk);
        CHECK(fs::exists(dir / "adv" / "batch_001_steps.jsonl"));
        const auto summary = read_json_file(dir / "adv" / "batch_002_summary.json");
        CHECK(summary["steps"] == 149);
        CHECK(summary.contains("series"));
        const std::string first = slurp(dir / "adv" / "batch_001_steps.jsonl");
        REQUIRE(cmd_advise({test}, dir / "model.json", dir / "adv", cfg, log) == kExitOk);
        CHECK(slurp(dir / "adv" / "batch_001_steps.jsonl") == first);

        REQUIRE(cmd_report(dir / "adv", dir / "rep", cfg, log) == kExitOk);
        const auto report = read_json_file(dir / "rep" / "report.json");
        CHECK(report["rows"].size() == 2 * 3);
        CHECK(fs::exists(dir / "rep" / "report.csv"));
        CHECK_THROWS_AS(cmd_advise({dir / "nothing"}, dir / "model.json", dir / "adv2", cfg, log), DataError);
    }

    TEST_CASE("closed loop on the exact linear plant settles at the setpoint") {
        const fs::path dir = scratch("closedloop");
        RunConfig cfg = linear_config();
        cfg.closedloop.noise_std = 0.0;
        // Equilibrium of a non-nominal input, so the loop has to move.
        const MatrixXd A = SyntheticPlant::linear_A();
        const VectorXd xs = (MatrixXd::Identity(3, 3) - A).lu().solve(SyntheticPlant::linear_B() * Eigen::Vector2d(0.6, 0.45));
        cfg.closedloop.setpoint = {xs[0], xs[1], xs[2]};
        // The historical corridor would otherwise hold the steam input below 0.6.
        cfg.closedloop.alpha_base = 1.0;
        std::ostringstream log;
        REQUIRE(cmd_closedloop(std::string("linear"), dir / "cl.json", cfg, log) == kExitOk);
        const auto j = read_json_file(dir / "cl.json");
        const MatrixXd states = matrix_from_json(j["states"]);
        const VectorXd sp = vector_from_json(j["setpoint"]);
        const VectorXd last = states.row(states.rows() - 1).transpose();
        CHECK((sp - xs).norm() == 0.0);
        CHECK((last - sp).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(j["fallbacks"] == 0);
        CHECK_THROWS_AS(cmd_closedloop(std::string("quadratic"), dir / "x.json", cfg, log), DataError);
    }
}
