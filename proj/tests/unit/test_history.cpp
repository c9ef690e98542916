#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "akmpc/errors.hpp"
#include "akmpc/history.hpp"
#include "oracles.hpp"

using namespace akmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

HistoryDatabase two_entry_db() {
    MatrixXd psi(1, 2), u(1, 2);
    psi << 0, 10;
    u << 1, 3;
    return HistoryDatabase(psi, u);
}

CorridorConfig cfg_with(int k, double sigma) {
    CorridorConfig c;
    c.k = k;
    c.sigma_d2 = sigma;
    return c;
}

}  // namespace

TEST_SUITE("history") {
    TEST_CASE("nearest neighbour and the two-point kernel average") {
        const HistoryDatabase db = two_entry_db();
        const VectorXd q = VectorXd::Zero(1);
        CHECK(reference_control(db, q, cfg_with(1, 1.0)).u_ref[0] == doctest::Approx(1.0));
        const ReferenceControl r = reference_control(db, q, cfg_with(2, 100.0));
        const double w = std::exp(-1.0);
        CHECK(r.u_ref[0] == doctest::Approx((1.0 + 3.0 * w) / (1.0 + w)).epsilon(1e-14));
        CHECK(r.u_ref[0] == doctest::Approx(1.5379).epsilon(1e-4));
        CHECK(r.neighbors == std::vector<int>{0, 1});
        CHECK_FALSE(r.nearest_fallback);
    }

    TEST_CASE("kernel concentrates on a coincident entry as the width shrinks") {
        const HistoryDatabase db = two_entry_db();
        const VectorXd q = VectorXd::Zero(1);
        const ReferenceControl r = reference_control(db, q, cfg_with(2, 1e-3));
        CHECK(r.u_ref[0] == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("underflowing weights fall back to the nearest neighbour") {
        MatrixXd psi(1, 2), u(1, 2);
        psi << 100, 200;
        u << 4, 5;
        const HistoryDatabase db(psi, u);
        const ReferenceControl r = reference_control(db, VectorXd::Zero(1), cfg_with(2, 1e-3));
        CHECK(r.nearest_fallback);
        CHECK(r.u_ref[0] == 4.0);
    }

    TEST_CASE("query errors") {
        const HistoryDatabase db = two_entry_db();
        CHECK_THROWS_AS(reference_control(db, VectorXd::Zero(1), cfg_with(3, 1.0)), DataError);
        CHECK_THROWS_AS(reference_control(HistoryDatabase(), VectorXd::Zero(0), cfg_with(1, 1.0)), DataError);
        CHECK_THROWS_AS(reference_control(db, VectorXd::Zero(2), cfg_with(1, 1.0)), DataError);
        CHECK_THROWS_AS(reference_control(db, VectorXd::Zero(1), cfg_with(1, 0.0)), DataError);
    }

    TEST_CASE("distance ties resolve to the lower index") {
        MatrixXd psi(1, 3), u(1, 3);
        psi << -1, 1, 1;
        u << 7, 8, 9;
        const HistoryDatabase db(psi, u);
        const ReferenceControl r = reference_control(db, VectorXd::Zero(1), cfg_with(1, 1.0));
        CHECK(r.neighbors == std::vector<int>{0});
        CHECK(r.u_ref[0] == 7.0);
    }

    TEST_CASE("reference control ignores entry order and stays in the neighbours' hull") {
        std::mt19937_64 rng(13);
        const MatrixXd psi = testing::random_matrix(4, 60, rng);
        const MatrixXd u = testing::random_matrix(3, 60, rng, 5.0);
        const HistoryDatabase db(psi, u);
        std::vector<int> perm(60);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        MatrixXd psi_p(4, 60), u_p(3, 60);
        for (int i = 0; i < 60; ++i) {
            psi_p.col(i) = psi.col(perm[static_cast<std::size_t>(i)]);
            u_p.col(i) = u.col(perm[static_cast<std::size_t>(i)]);
        }
        const HistoryDatabase shuffled(psi_p, u_p);
        const CorridorConfig cfg = cfg_with(7, 2.0);
        for (int q = 0; q < 50; ++q) {
            const VectorXd query = testing::random_matrix(4, 1, rng);
            const ReferenceControl a = reference_control(db, query, cfg);
            const ReferenceControl b = reference_control(shuffled, query, cfg);
            CHECK((a.u_ref - b.u_ref).lpNorm<Eigen::Infinity>() < 1e-12);
            for (int j = 0; j < 3; ++j) {
                double lo = 1e300, hi = -1e300;
                for (int n : a.neighbors) {
                    lo = std::min(lo, u(j, n));
                    hi = std::max(hi, u(j, n));
                }
                CHECK(a.u_ref[j] >= lo - 1e-12);
                CHECK(a.u_ref[j] <= hi + 1e-12);
            }
        }
    }

    TEST_CASE("corridor arithmetic") {
        CorridorConfig cfg;
        cfg.alpha_base = 0.05;
        cfg.beta_adapt = 0.10;
        cfg.delta_abs = VectorXd::Constant(1, 0.5);
        const Corridor c = corridor(VectorXd::Constant(1, 100.0), 1.0, cfg);
        CHECK(c.lower[0] == 85.0);
        CHECK(c.upper[0] == 115.0);
        const Corridor z = corridor(VectorXd::Zero(1), 0.7, cfg);
        CHECK(z.upper[0] - z.lower[0] == doctest::Approx(1.0));
        const Corridor tight = corridor(VectorXd::Constant(1, 20.0), 0.0, cfg);
        CHECK(tight.upper[0] - 20.0 == doctest::Approx(1.0));
    }

    TEST_CASE("corridor width is monotone in confidence and strictly contains u_ref") {
        std::mt19937_64 rng(17);
        CorridorConfig cfg;
        cfg.delta_abs = VectorXd::Constant(1, 1e-3);
        for (int trial = 0; trial < 20; ++trial) {
            const VectorXd u = testing::random_matrix(5, 1, rng, 10.0);
            VectorXd last = VectorXd::Zero(5);
            for (int s = 0; s <= 100; ++s) {
                const Corridor c = corridor(u, s / 100.0, cfg);
                const VectorXd width = c.upper - c.lower;
                CHECK((width.array() >= last.array()).all());
                CHECK((c.lower.array() < u.array()).all());
                CHECK((c.upper.array() > u.array()).all());
                CHECK(((c.upper - u) - (u - c.lower)).lpNorm<Eigen::Infinity>() < 1e-12);
                last = width;
            }
        }
    }

    TEST_CASE("advisor corridor examples") {
        const Corridor a = advisor_corridor(VectorXd::Constant(1, 50.0), VectorXd::Constant(1, 200.0));
        CHECK(a.lower[0] == 45.0);
        CHECK(a.upper[0] == 55.0);
        const Corridor b = advisor_corridor(VectorXd::Zero(1), VectorXd::Constant(1, 200.0));
        CHECK(b.upper[0] == 2.0);
        const Corridor c = advisor_corridor(VectorXd::Constant(1, 5.0), VectorXd::Constant(1, 1000.0));
        CHECK(c.upper[0] - 5.0 == 10.0);
        CHECK_THROWS_AS(advisor_corridor(VectorXd::Zero(1), VectorXd::Zero(1)), DataError);
    }

    TEST_CASE("per-channel absolute floor and validation") {
        CorridorConfig cfg;
        cfg.delta_abs = Eigen::Vector2d(0.5, 2.0);
        const Corridor c = corridor(VectorXd::Zero(2), 0.0, cfg);
        CHECK(c.upper[0] == 0.5);
        CHECK(c.upper[1] == 2.0);
        CHECK_THROWS_AS(corridor(VectorXd::Zero(3), 0.0, cfg), DataError);
        cfg.alpha_base = -1.0;
        CHECK_THROWS_AS(cfg.validate(), DataError);
    }

    TEST_CASE("median k-th neighbour distance") {
        MatrixXd psi(1, 4), u = MatrixXd::Zero(1, 4);
        psi << 0, 1, 3, 7;
        const HistoryDatabase db(psi, u);
        // Squared nearest distances: 1, 1, 4, 16; median 2.5.
        CHECK(db.median_kth_distance(1) == doctest::Approx(2.5));
        CHECK_THROWS_AS(db.median_kth_distance(4), DataError);
    }

    TEST_CASE("database save and load round-trip") {
        std::mt19937_64 rng(19);
        const HistoryDatabase db(testing::random_matrix(3, 12, rng), testing::random_matrix(2, 12, rng), {"a", "b"});
        const auto path = std::filesystem::temp_directory_path() / "akmpc_history_roundtrip.csv";
        db.save(path);
        const HistoryDatabase back = HistoryDatabase::load(path, 3);
        CHECK(back.psi() == db.psi());
        CHECK(back.inputs() == db.inputs());
        CHECK(back.input_names() == db.input_names());
        std::filesystem::remove(path);
        CHECK_THROWS_AS(HistoryDatabase(MatrixXd::Zero(2, 3), MatrixXd::Zero(1, 2)), DataError);
    }
}
