#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "akmpc/csv.hpp"
#include "akmpc/errors.hpp"
#include "akmpc/ingest.hpp"
#include "akmpc/plant.hpp"
#include "synthetic.hpp"

using namespace akmpc;
namespace fs = std::filesystem;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("akmpc_ingest_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Schema small_schema(std::size_t min_rows = 3) {
    Schema s;
    s.state_names = {"Outlet Moisture"};
    s.input_names = {"Water Flow"};
    s.min_rows = min_rows;
    return s;
}

// Two-channel raw file; each channel gets its own timestamps.
void write_two_channel(const fs::path& path, const std::vector<double>& t_ref, const std::vector<double>& ref,
                       const std::vector<double>& t_in, const std::vector<double>& in) {
    csv::Table t;
    t.header = {"Outlet Moisture Time", "Outlet Moisture", "Water Flow Time", "Water Flow"};
    const std::size_t n = std::max(t_ref.size(), t_in.size());
    for (std::size_t k = 0; k < n; ++k) {
        auto cell = [](const std::vector<double>& v, std::size_t i) {
            return i < v.size() ? (std::isfinite(v[i]) ? csv::format_number(v[i]) : std::string("NaN")) : std::string();
        };
        t.rows.push_back({cell(t_ref, k), cell(ref, k), cell(t_in, k), cell(in, k)});
    }
    csv::write(path, t);
}

std::vector<double> seq(int n, double start = 0.0, double step = 1.0) {
    std::vector<double> v;
    for (int k = 0; k < n; ++k) v.push_back(start + step * k);
    return v;
}

}  // namespace

TEST_SUITE("ingest") {
    TEST_CASE("single missing point is the midpoint") {
        const std::vector<double> s{1, kNaN, 3};
        const GapFill g = fill_gaps(s);
        CHECK(g.values == std::vector<double>{1, 2, 3});
        CHECK(g.dropped.empty());
    }

    TEST_CASE("three missing points are filled, four are dropped") {
        const std::vector<double> three{1, kNaN, kNaN, kNaN, 5};
        const GapFill g3 = fill_gaps(three, 3);
        CHECK(g3.values == std::vector<double>{1, 2, 3, 4, 5});
        CHECK(std::all_of(g3.valid.begin(), g3.valid.end(), [](bool v) { return v; }));

        const std::vector<double> four{1, kNaN, kNaN, kNaN, kNaN, 6};
        const GapFill g4 = fill_gaps(four, 3);
        CHECK(g4.dropped == std::vector<Segment>{{1, 5}});
        CHECK(g4.valid == std::vector<bool>{true, false, false, false, false, true});
        CHECK(g4.values[0] == 1.0);
        CHECK(g4.values[5] == 6.0);
    }

    TEST_CASE("edge runs are never extrapolated") {
        const std::vector<double> s{kNaN, 2, 3, kNaN};
        const GapFill g = fill_gaps(s);
        CHECK(g.valid == std::vector<bool>{false, true, true, false});
        CHECK(g.dropped.size() == 2);
    }

    TEST_CASE("interpolation in time follows the sample spacing") {
        const std::vector<double> s{0, kNaN, 10};
        const std::vector<double> t{0, 1, 4};
        const GapFill g = fill_gaps(s, 3, t);
        CHECK(g.values[1] == doctest::Approx(2.5));
    }

    TEST_CASE("valid samples are untouched and fills stay within their bounds") {
        std::mt19937_64 rng(71);
        std::normal_distribution<double> g(0.0, 1.0);
        std::bernoulli_distribution miss(0.3);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> s(40);
            for (auto& v : s) v = miss(rng) ? kNaN : g(rng);
            const GapFill f = fill_gaps(s, 3);
            for (std::size_t k = 0; k < s.size(); ++k) {
                if (std::isfinite(s[k])) CHECK(f.values[k] == s[k]);
                if (std::isfinite(s[k]) || !f.valid[k]) continue;
                std::size_t a = k, b = k;
                while (!std::isfinite(s[a])) --a;
                while (!std::isfinite(s[b])) ++b;
                CHECK(f.values[k] >= std::min(s[a], s[b]) - 1e-12);
                CHECK(f.values[k] <= std::max(s[a], s[b]) + 1e-12);
            }
        }
    }

    TEST_CASE("nearest-time alignment breaks ties toward the earlier sample") {
        const fs::path dir = scratch_dir("align");
        const fs::path f = dir / "a.csv";
        write_two_channel(f, {0, 1, 2}, {10, 11, 12}, {0, 2, 4}, {100, 102, 104});
        const Schema s = small_schema();
        const BatchLog log = align(read_raw_batch(f, s), s);
        CHECK(log.rows() == 3);
        CHECK(log.inputs(0, 0) == 100.0);
        CHECK(log.inputs(0, 1) == 100.0);
        CHECK(log.inputs(0, 2) == 102.0);
        CHECK(log.states(0, 1) == 11.0);
    }

    TEST_CASE("aligned channels pass through and time starts at zero minutes") {
        const fs::path dir = scratch_dir("offset");
        const fs::path f = dir / "a.csv";
        write_two_channel(f, {120, 180, 240}, {1, 2, 3}, {120, 180, 240}, {4, 5, 6});
        const Schema s = small_schema();
        const BatchLog log = align(read_raw_batch(f, s), s);
        CHECK(log.t_min[0] == 0.0);
        CHECK(log.t_min[1] == doctest::Approx(1.0));
        CHECK(log.states(0, 2) == 3.0);
        CHECK(log.inputs(0, 2) == 6.0);
    }

    TEST_CASE("alignment length equals the reference sample count") {
        const fs::path dir = scratch_dir("length");
        std::mt19937_64 rng(73);
        std::uniform_int_distribution<int> len(5, 60);
        const Schema s = small_schema();
        for (int trial = 0; trial < 10; ++trial) {
            const int nr = len(rng), ni = len(rng);
            const fs::path f = dir / ("t" + std::to_string(trial) + ".csv");
            write_two_channel(f, seq(nr, 3.0, 1.0), seq(nr), seq(ni, 0.0, 1.7), seq(ni));
            CHECK(align(read_raw_batch(f, s), s).rows() == static_cast<std::size_t>(nr));
        }
    }

    TEST_CASE("batch rejection reasons and sequential ids") {
        const fs::path dir = scratch_dir("load");
        const Schema full = Schema::conditioning_cylinder();
        // Full conditioning-cylinder layout with smooth ramps in every channel.
        auto write_full = [&](const fs::path& p, int rows, bool drop_water) {
            csv::Table t;
            for (const auto& name : full.channels()) {
                if (drop_water && name == "Water Flow") continue;
                t.header.push_back(name + full.time_suffix);
                t.header.push_back(name);
            }
            for (int k = 0; k < rows; ++k) {
                std::vector<std::string> row;
                for (std::size_t c = 0; c < t.header.size() / 2; ++c) {
                    row.push_back(csv::format_number(k));
                    row.push_back(csv::format_number(1.0 + 0.01 * k + static_cast<double>(c)));
                }
                t.rows.push_back(row);
            }
            csv::write(p, t);
        };
        write_full(dir / "a_good.csv", 350, false);
        write_full(dir / "b_short.csv", 10, false);
        write_full(dir / "c_nowater.csv", 350, true);
        write_full(dir / "d_good.csv", 320, false);
        const std::vector<fs::path> files{dir / "a_good.csv", dir / "b_short.csv", dir / "c_nowater.csv",
                                          dir / "missing.csv", dir / "d_good.csv"};
        const LoadResult r = load_batches(files, full);
        REQUIRE(r.batches.size() == 2);
        CHECK(r.batches[0].batch_id == 1);
        CHECK(r.batches[1].batch_id == 2);
        CHECK(r.batches[1].source.find("d_good") != std::string::npos);
        REQUIRE(r.rejected.size() == 3);
        CHECK(r.rejected[0].reason.find("too short") != std::string::npos);
        CHECK(r.rejected[1].reason.find("Water Flow") != std::string::npos);
        CHECK(r.rejected[2].source.find("missing.csv") != std::string::npos);
        const auto report = r.report();
        CHECK(report["accepted"].size() == 2);
        CHECK(report["rejected"].size() == 3);
    }

    TEST_CASE("entirely missing channel rejects the batch") {
        const fs::path dir = scratch_dir("allmissing");
        const fs::path f = dir / "a.csv";
        write_two_channel(f, seq(5), seq(5), seq(5), std::vector<double>(5, kNaN));
        const std::vector<fs::path> files{f};
        const LoadResult r = load_batches(files, small_schema());
        CHECK(r.batches.empty());
        REQUIRE(r.rejected.size() == 1);
        CHECK(r.rejected[0].reason.find("entirely missing") != std::string::npos);
    }

    TEST_CASE("long gaps become invalid rows and split the transitions") {
        const fs::path dir = scratch_dir("gaps");
        const fs::path f = dir / "a.csv";
        std::vector<double> in = seq(12, 0.0, 0.5);
        for (int k = 4; k < 8; ++k) in[static_cast<std::size_t>(k)] = kNaN;
        in[1] = kNaN;
        write_two_channel(f, seq(12), seq(12), seq(12), in);
        const std::vector<fs::path> files{f};
        const LoadResult r = load_batches(files, small_schema());
        REQUIRE(r.batches.size() == 1);
        const BatchLog& b = r.batches[0];
        CHECK(b.inputs(0, 1) == doctest::Approx(0.5));
        CHECK(b.dropped == std::vector<Segment>{{4, 8}});
        CHECK(b.snapshots().size() == 3 + 3);
    }

    TEST_CASE("cleaned batch save and load round-trip") {
        const fs::path dir = scratch_dir("roundtrip");
        std::mt19937_64 rng(83);
        const SyntheticPlant plant = SyntheticPlant::bilinear(0.002);
        BatchLog b = testing::sloppy_bilinear_batch(plant, 4, 50, {}, rng);
        b.valid[10] = false;
        b.states(0, 10) = kNaN;
        const Schema s = testing::bilinear_schema();
        b.save(dir / "b.csv");
        const BatchLog back = BatchLog::load(dir / "b.csv", s);
        CHECK(back.batch_id == 4);
        CHECK(back.t_min == b.t_min);
        CHECK(back.valid == b.valid);
        CHECK(back.inputs == b.inputs);
        CHECK(back.states.col(11) == b.states.col(11));
        CHECK(back.snapshots().size() == 47);
    }

    TEST_CASE("raw export survives skewed time stamps") {
        const fs::path dir = scratch_dir("raw");
        std::mt19937_64 rng(89);
        const SyntheticPlant plant = SyntheticPlant::bilinear(0.002);
        const BatchLog b = testing::sloppy_bilinear_batch(plant, 1, 40, {}, rng);
        Schema s = testing::bilinear_schema();
        s.min_rows = 10;
        testing::write_raw_batch(dir / "r.csv", b, s, 500.0, 0.3);
        const std::vector<fs::path> files{dir / "r.csv"};
        const LoadResult r = load_batches(files, s);
        REQUIRE(r.batches.size() == 1);
        CHECK(r.batches[0].rows() == 40);
        CHECK((r.batches[0].states - b.states).norm() < 1e-12);
        CHECK((r.batches[0].inputs - b.inputs).norm() < 1e-12);
        CHECK(r.batches[0].t_min[0] == 0.0);
    }

    TEST_CASE("decimation keeps every k-th row") {
        BatchLog b;
        b.t_min = Eigen::VectorXd::LinSpaced(10, 0.0, 9.0 / 120.0);  // 0.5 s spacing
        b.states = Eigen::MatrixXd::Zero(1, 10);
        b.states.row(0) = Eigen::RowVectorXd::LinSpaced(10, 0, 9);
        b.inputs = b.states;
        b.valid.assign(10, true);
        b.valid[4] = false;
        const BatchLog d = decimate(b, 1.0);
        CHECK(d.rows() == 5);
        CHECK(d.states(0, 1) == 2.0);
        CHECK_FALSE(d.valid[2]);
        CHECK(d.dropped == std::vector<Segment>{{2, 3}});
        CHECK(decimate(b, 0.5).rows() == 10);
    }

    TEST_CASE("envelope quantiles and scaler") {
        BatchLog b;
        b.t_min = Eigen::VectorXd::LinSpaced(101, 0, 100);
        b.states = Eigen::MatrixXd::Zero(1, 101);
        b.inputs.resize(2, 101);
        b.inputs.row(0) = Eigen::RowVectorXd::LinSpaced(101, 0, 100);
        b.inputs.row(1).setConstant(5.0);
        b.valid.assign(101, true);
        const std::vector<BatchLog> logs{b};
        const InputEnvelope e = compute_envelope(logs, 0.9, 0.1);
        CHECK(e.range[0] == doctest::Approx(90.0));
        CHECK(e.u_min[0] == doctest::Approx(5.0 - 9.0));
        CHECK(e.u_max[0] == doctest::Approx(95.0 + 9.0));
        CHECK(e.u_max[1] > e.u_min[1]);

        const Scaler sc = Scaler::fit(logs);
        CHECK(sc.input_scale[1] == 1.0);
        CHECK(sc.state_scale[0] == 1.0);
        const Eigen::Vector2d u(30, 5);
        CHECK((sc.unscale_input(sc.scale_input(u)) - u).norm() < 1e-12);
        const Scaler back = Scaler::from_json(sc.to_json());
        CHECK(back.input_mean == sc.input_mean);
        CHECK(Scaler::identity(1, 2).is_identity());
    }
}
