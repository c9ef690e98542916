#include <doctest.h>

#include <random>
#include <sstream>

#include "akmpc/advisor.hpp"
#include "akmpc/errors.hpp"
#include "akmpc/plant.hpp"
#include "synthetic.hpp"

using namespace akmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Fixture {
    Dictionary dict = Dictionary::polynomial(3, 2);
    LiftedModel model;
    AdvisorSettings settings;
    BatchLog batch;
};

Fixture make_fixture(std::uint64_t seed = 1, int steps = 120) {
    Fixture fx;
    const SyntheticPlant plant = SyntheticPlant::bilinear(0.005);
    std::mt19937_64 rng(seed);
    std::vector<BatchLog> train;
    for (int b = 0; b < 4; ++b) train.push_back(testing::sloppy_bilinear_batch(plant, b + 1, 300, {}, rng));
    std::vector<Snapshot> snaps;
    for (const auto& b : train)
        for (const auto& s : b.snapshots()) snaps.push_back(s);
    fx.model = batch_fit(snaps, fx.dict);
    const InputEnvelope env = compute_envelope(train);

    MpcConfig& m = fx.settings.mpc;
    m.Q = Eigen::Vector3d(10, 100, 1).asDiagonal();
    m.R = MatrixXd::Identity(3, 3) * 1e-2;
    m.S = MatrixXd::Zero(3, 3);
    m.u_min = env.u_min;
    m.u_max = env.u_max;
    m.manipulated = {true, true, false};
    fx.settings.setpoint = plant.nominal_state();
    fx.settings.u_range = env.range;
    fx.settings.limits = {{0.9, 1.1}, {0.9, 1.1}, {0.9, 1.1}};
    fx.batch = testing::sloppy_bilinear_batch(plant, 9, steps, {}, rng);
    return fx;
}

std::string stream_of(const AdvisorRun& run) {
    std::ostringstream out;
    write_step_stream(out, run.steps);
    return out.str();
}

}  // namespace

TEST_SUITE("advisor") {
    TEST_CASE("advice stays inside the logged-input corridor and the box") {
        const Fixture fx = make_fixture();
        const AdvisorRun run = run_advisor(fx.batch, fx.model, fx.dict, fx.settings);
        CHECK(run.summary.steps == 119);
        CHECK(run.summary.errors == 0);
        for (const auto& s : run.steps) {
            REQUIRE(s.has_prediction());
            CHECK(s.x_pred_next.allFinite());
            for (int j = 0; j < 3; ++j) {
                const double allow = std::max(0.1 * std::abs(s.u_actual[j]), 0.01 * fx.settings.u_range[j]);
                CHECK(std::abs(s.u_mpc[j] - s.u_actual[j]) <= allow + 1e-9);
                CHECK(s.u_mpc[j] >= std::min(fx.settings.mpc.u_min[j], s.u_actual[j]) - 1e-9);
            }
            CHECK(s.u_mpc[2] == s.u_actual[2]);
        }
    }

    TEST_CASE("advice never feeds back into the model") {
        const Fixture fx = make_fixture(2);
        AdvisorSettings quiet = fx.settings;
        quiet.generate_advice = false;
        const AdvisorRun with = run_advisor(fx.batch, fx.model, fx.dict, fx.settings);
        const AdvisorRun without = run_advisor(fx.batch, fx.model, fx.dict, quiet);
        CHECK(with.final_model.theta == without.final_model.theta);
        CHECK(with.final_model.P == without.final_model.P);
        CHECK(with.final_model.lambda_f == without.final_model.lambda_f);
        REQUIRE(with.steps.size() == without.steps.size());
        for (std::size_t k = 0; k < with.steps.size(); ++k) {
            CHECK(with.steps[k].lambda_used == without.steps[k].lambda_used);
            CHECK(with.steps[k].reset == without.steps[k].reset);
        }
        CHECK(without.summary.predictions == 0);
    }

    TEST_CASE("replay is deterministic") {
        const Fixture fx = make_fixture(3);
        AdvisorSettings s = fx.settings;
        s.what_if_horizon = 5;
        const AdvisorRun a = run_advisor(fx.batch, fx.model, fx.dict, s);
        const AdvisorRun b = run_advisor(fx.batch, fx.model, fx.dict, s);
        CHECK(stream_of(a) == stream_of(b));
        CHECK(a.summary.to_json() == b.summary.to_json());
        CHECK(a.steps[0].what_if.rows() == 3);
        CHECK(a.steps[0].what_if.cols() == 5);
    }

    TEST_CASE("pinned advice reproduces one-step predictions of the logged actions") {
        Fixture fx = make_fixture(4);
        fx.settings.mpc.manipulated = {false, false, false};
        const AdvisorRun run = run_advisor(fx.batch, fx.model, fx.dict, fx.settings);
        OnlineIdentifier shadow(fx.model, fx.dict, fx.settings.ident);
        std::size_t k = 0;
        for (std::size_t t = 0; t + 1 < fx.batch.rows(); ++t, ++k) {
            const auto c = static_cast<Eigen::Index>(t);
            const VectorXd x = fx.batch.states.col(c), u = fx.batch.inputs.col(c);
            const AdvisorStep& s = run.steps[k];
            REQUIRE(s.has_prediction());
            CHECK(s.u_mpc == u);
            CHECK((s.x_pred_next - predict_one(shadow.model(), fx.dict, x, u)).norm() < 1e-12);
            shadow.update({x, u, fx.batch.states.col(c + 1)});
        }
        AdvisorSettings frozen = fx.settings;
        frozen.update_model = false;
        const AdvisorRun f = run_advisor(fx.batch, fx.model, fx.dict, frozen);
        const auto c5 = static_cast<Eigen::Index>(5);
        CHECK((f.steps[5].x_pred_next -
               predict_one(fx.model, fx.dict, fx.batch.states.col(c5), fx.batch.inputs.col(c5))).norm() < 1e-12);
        CHECK(f.final_model.theta == fx.model.theta);
    }

    TEST_CASE("previous input is the logged one, or the current one after a gap") {
        Fixture fx = make_fixture(5, 20);
        // Rate weight dominates: the first move goes to u_prev clipped into the corridor.
        fx.settings.mpc.Q = MatrixXd::Zero(3, 3);
        fx.settings.mpc.R = MatrixXd::Identity(3, 3) * 1e-12;
        fx.settings.mpc.S = MatrixXd::Identity(3, 3);
        fx.settings.update_model = false;
        fx.batch.valid[8] = false;
        const AdvisorRun run = run_advisor(fx.batch, fx.model, fx.dict, fx.settings);
        for (const auto& s : run.steps) {
            const auto t = static_cast<Eigen::Index>(s.t_index);
            const bool restart = s.t_index == 0 || !fx.batch.valid[static_cast<std::size_t>(s.t_index - 1)];
            const VectorXd prev = restart ? VectorXd(fx.batch.inputs.col(t)) : VectorXd(fx.batch.inputs.col(t - 1));
            for (int j = 0; j < 2; ++j) {
                const double target = std::clamp(prev[j], s.corridor.lower[j], s.corridor.upper[j]);
                CHECK(s.u_mpc[j] == doctest::Approx(target).epsilon(1e-6));
            }
        }
        // Transitions touching the invalid row are skipped.
        CHECK(run.summary.steps == 19 - 2);
    }

    TEST_CASE("a failing step is recorded and the replay continues") {
        Fixture fx = make_fixture(6, 60);
        fx.batch.states(1, 30) = 1e200;
        const AdvisorRun run = run_advisor(fx.batch, fx.model, fx.dict, fx.settings);
        CHECK(run.summary.steps == 59);
        CHECK(run.summary.errors >= 1);
        CHECK(run.summary.predictions < 59);
        CHECK(run.summary.predictions >= 50);
        const BatchSeries series = run.comparison_series();
        CHECK(series.historical.cols() == run.summary.predictions);
        CHECK(series.predicted.allFinite());
        CHECK_FALSE(run.summary.channels[1].cpk_actual.has_value());
        CHECK(run.summary.channels[0].cpk_actual.has_value());
    }

    TEST_CASE("summary carries capability and deviation per channel") {
        const Fixture fx = make_fixture(7);
        const AdvisorRun run = run_advisor(fx.batch, fx.model, fx.dict, fx.settings);
        REQUIRE(run.summary.channels.size() == 3);
        CHECK(run.summary.channels[1].channel == "Outlet Moisture");
        CHECK(run.summary.channels[1].cpk_actual.has_value());
        CHECK(run.summary.channels[1].cpk_pred.has_value());
        const auto j = run.summary.to_json();
        CHECK(j["steps"] == 119);
        CHECK(j["channels"].size() == 3);
        CHECK(step_to_json(run.steps[0]).contains("u_mpc"));
    }

    TEST_CASE("shape mismatches are rejected up front") {
        Fixture fx = make_fixture(8, 10);
        fx.settings.setpoint = VectorXd::Zero(2);
        CHECK_THROWS_AS(run_advisor(fx.batch, fx.model, fx.dict, fx.settings), DataError);
    }
}
