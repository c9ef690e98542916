#include "akmpc/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "akmpc/csv.hpp"
#include "akmpc/errors.hpp"
#include "akmpc/metrics.hpp"

namespace akmpc {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct Sample {
    double t;
    double v;
};

std::vector<Sample> sorted_samples(const RawChannel& ch) {
    std::vector<Sample> s(ch.time_s.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = {ch.time_s[i], ch.values[i]};
    std::stable_sort(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.t < b.t; });
    // Keep the first sample of any repeated timestamp.
    s.erase(std::unique(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.t == b.t; }), s.end());
    return s;
}

double nearest_value(const std::vector<Sample>& samples, double t) {
    const auto it = std::lower_bound(samples.begin(), samples.end(), t,
                                     [](const Sample& s, double value) { return s.t < value; });
    if (it == samples.begin()) return it->v;
    if (it == samples.end()) return std::prev(it)->v;
    const auto before = std::prev(it);
    return (t - before->t) <= (it->t - t) ? before->v : it->v;
}

std::vector<Segment> merge_segments(std::vector<Segment> segs) {
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.begin < b.begin; });
    std::vector<Segment> out;
    for (const auto& s : segs) {
        if (!out.empty() && s.begin <= out.back().end) out.back().end = std::max(out.back().end, s.end);
        else out.push_back(s);
    }
    return out;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json_vector(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Schema Schema::conditioning_cylinder() {
    Schema s;
    s.state_names = {"Furnace Temperature", "Outlet Moisture", "Outlet Temperature"};
    s.input_names = {"Process Throughput",      "Hood Pressure",       "Water Flow",
                     "Steam-Water Mix Valve Opening", "Steam Valve Opening", "Inlet Moisture",
                     "Cumulative Water Added"};
    return s;
}

std::vector<std::string> Schema::channels() const {
    std::vector<std::string> all = state_names;
    all.insert(all.end(), input_names.begin(), input_names.end());
    return all;
}

const RawChannel& RawBatch::channel(const std::string& name) const {
    for (const auto& c : channels)
        if (c.name == name) return c;
    throw DataError("raw batch " + source + ": no channel '" + name + "'");
}

std::vector<Snapshot> BatchLog::snapshots() const {
    std::vector<Snapshot> out;
    for (std::size_t k = 0; k + 1 < rows(); ++k) {
        if (!valid[k] || !valid[k + 1]) continue;
        const auto c = static_cast<Eigen::Index>(k);
        out.push_back({states.col(c), inputs.col(c), states.col(c + 1)});
    }
    return out;
}

void BatchLog::save(const std::filesystem::path& path) const {
    csv::Table table;
    table.header = {"Batch", "Time [min]", "Valid"};
    table.header.insert(table.header.end(), state_names.begin(), state_names.end());
    table.header.insert(table.header.end(), input_names.begin(), input_names.end());
    for (std::size_t k = 0; k < rows(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        std::vector<std::string> row = {std::to_string(batch_id), csv::format_number(t_min[c]), valid[k] ? "1" : "0"};
        for (Eigen::Index i = 0; i < states.rows(); ++i) row.push_back(csv::format_number(states(i, c)));
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) row.push_back(csv::format_number(inputs(i, c)));
        table.rows.push_back(std::move(row));
    }
    csv::write(path, table);
}

BatchLog BatchLog::load(const std::filesystem::path& path, const Schema& schema) {
    const auto table = csv::read(path);
    auto col = [&](const std::string& name) {
        const auto idx = table.column(name);
        if (!idx) throw DataError(path.string() + ": missing column '" + name + "'");
        return *idx;
    };
    const auto c_batch = col("Batch");
    const auto c_time = col("Time [min]");
    const auto c_valid = col("Valid");
    std::vector<std::size_t> c_states, c_inputs;
    for (const auto& n : schema.state_names) c_states.push_back(col(n));
    for (const auto& n : schema.input_names) c_inputs.push_back(col(n));

    BatchLog log;
    log.source = path.string();
    log.state_names = schema.state_names;
    log.input_names = schema.input_names;
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    log.t_min.resize(n);
    log.states.resize(schema.state_dim(), n);
    log.inputs.resize(schema.input_dim(), n);
    log.valid.resize(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& row = table.rows[static_cast<std::size_t>(k)];
        if (k == 0) log.batch_id = static_cast<int>(csv::parse_number(row[c_batch]).value_or(0));
        const auto t = csv::parse_number(row[c_time]);
        if (!t) throw DataError(path.string() + ": missing time in row " + std::to_string(k + 1));
        log.t_min[k] = *t;
        bool ok = row[c_valid] == "1";
        for (std::size_t i = 0; i < c_states.size(); ++i) {
            const auto v = csv::parse_number(row[c_states[i]]);
            log.states(static_cast<Eigen::Index>(i), k) = v.value_or(kMissing);
            ok = ok && v.has_value();
        }
        for (std::size_t i = 0; i < c_inputs.size(); ++i) {
            const auto v = csv::parse_number(row[c_inputs[i]]);
            log.inputs(static_cast<Eigen::Index>(i), k) = v.value_or(kMissing);
            ok = ok && v.has_value();
        }
        log.valid[static_cast<std::size_t>(k)] = ok;
        if (k > 0 && !(log.t_min[k] > log.t_min[k - 1]))
            throw DataError(path.string() + ": time is not strictly increasing at row " + std::to_string(k + 1));
    }
    return log;
}

RawBatch read_raw_batch(const std::filesystem::path& path, const Schema& schema) {
    const auto table = csv::read(path);
    RawBatch batch;
    batch.source = path.string();
    for (const auto& name : schema.channels()) {
        const auto value_col = table.column(name);
        if (!value_col) throw DataError("missing column '" + name + "'");
        const auto time_col = table.column(name + schema.time_suffix);
        if (!time_col) throw DataError("missing column '" + name + schema.time_suffix + "'");
        RawChannel ch;
        ch.name = name;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto t = csv::parse_number(table.rows[r][*time_col]);
            if (!t) continue;
            ch.time_s.push_back(*t);
            ch.values.push_back(csv::parse_number(table.rows[r][*value_col]).value_or(kMissing));
        }
        batch.channels.push_back(std::move(ch));
    }
    return batch;
}

BatchLog align(const RawBatch& batch, const Schema& schema) {
    const auto reference = sorted_samples(batch.channel(schema.reference_channel));
    if (reference.empty())
        throw DataError("channel '" + schema.reference_channel + "' has no samples");

    BatchLog log;
    log.source = batch.source;
    log.state_names = schema.state_names;
    log.input_names = schema.input_names;
    const auto n = static_cast<Eigen::Index>(reference.size());
    log.t_min.resize(n);
    const double t0 = reference.front().t;
    for (Eigen::Index k = 0; k < n; ++k) log.t_min[k] = (reference[static_cast<std::size_t>(k)].t - t0) / 60.0;

    auto aligned = [&](const std::string& name) {
        const auto samples = sorted_samples(batch.channel(name));
        if (samples.empty()) throw DataError("channel '" + name + "' has no samples");
        Eigen::VectorXd out(n);
        for (Eigen::Index k = 0; k < n; ++k) out[k] = nearest_value(samples, reference[static_cast<std::size_t>(k)].t);
        return out;
    };
    log.states.resize(schema.state_dim(), n);
    log.inputs.resize(schema.input_dim(), n);
    for (int i = 0; i < schema.state_dim(); ++i) log.states.row(i) = aligned(schema.state_names[i]).transpose();
    for (int i = 0; i < schema.input_dim(); ++i) log.inputs.row(i) = aligned(schema.input_names[i]).transpose();

    log.valid.resize(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k)
        log.valid[static_cast<std::size_t>(k)] = log.states.col(k).allFinite() && log.inputs.col(k).allFinite();
    return log;
}

GapFill fill_gaps(std::span<const double> series, int max_gap, std::span<const double> time) {
    if (!time.empty() && time.size() != series.size()) throw DataError("fill_gaps: time and series lengths differ");
    GapFill out;
    out.values.assign(series.begin(), series.end());
    out.valid.assign(series.size(), true);
    const std::size_t n = series.size();
    auto position = [&](std::size_t i) { return time.empty() ? static_cast<double>(i) : time[i]; };

    std::size_t i = 0;
    while (i < n) {
        if (std::isfinite(series[i])) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < n && !std::isfinite(series[end])) ++end;
        const std::size_t run = end - i;
        const bool interior = i > 0 && end < n;
        if (interior && run <= static_cast<std::size_t>(std::max(max_gap, 0))) {
            const double v0 = series[i - 1];
            const double v1 = series[end];
            const double p0 = position(i - 1);
            const double span = position(end) - p0;
            for (std::size_t k = i; k < end; ++k) out.values[k] = v0 + (v1 - v0) * ((position(k) - p0) / span);
        } else {
            for (std::size_t k = i; k < end; ++k) out.valid[k] = false;
            out.dropped.push_back({i, end});
        }
        i = end;
    }
    return out;
}

BatchLog decimate(const BatchLog& log, double period_s) {
    if (!(period_s > 0.0)) throw DataError("decimate: period must be positive");
    if (log.rows() < 2) return log;
    std::vector<double> dt(log.rows() - 1);
    for (std::size_t k = 0; k + 1 < log.rows(); ++k)
        dt[k] = 60.0 * (log.t_min[static_cast<Eigen::Index>(k + 1)] - log.t_min[static_cast<Eigen::Index>(k)]);
    std::sort(dt.begin(), dt.end());
    const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(period_s / quantile_sorted(dt, 0.5))));
    if (stride == 1) return log;

    BatchLog out = log;
    const std::size_t n = (log.rows() + stride - 1) / stride;
    const auto cols = static_cast<Eigen::Index>(n);
    out.t_min.resize(cols);
    out.states.resize(log.states.rows(), cols);
    out.inputs.resize(log.inputs.rows(), cols);
    out.valid.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = static_cast<Eigen::Index>(i * stride);
        const auto c = static_cast<Eigen::Index>(i);
        out.t_min[c] = log.t_min[src];
        out.states.col(c) = log.states.col(src);
        out.inputs.col(c) = log.inputs.col(src);
        out.valid[i] = log.valid[i * stride];
    }
    out.dropped.clear();
    for (std::size_t i = 0; i < n;) {
        if (out.valid[i]) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < n && !out.valid[end]) ++end;
        out.dropped.push_back({i, end});
        i = end;
    }
    return out;
}

nlohmann::json LoadResult::report() const {
    nlohmann::json j;
    j["accepted"] = nlohmann::json::array();
    for (const auto& b : batches) {
        nlohmann::json dropped = nlohmann::json::array();
        for (const auto& s : b.dropped) dropped.push_back({s.begin, s.end});
        std::size_t valid_rows = static_cast<std::size_t>(std::count(b.valid.begin(), b.valid.end(), true));
        j["accepted"].push_back({{"id", b.batch_id},
                                 {"source", b.source},
                                 {"rows", b.rows()},
                                 {"valid_rows", valid_rows},
                                 {"dropped_segments", dropped}});
    }
    j["rejected"] = nlohmann::json::array();
    for (const auto& r : rejected) j["rejected"].push_back({{"source", r.source}, {"reason", r.reason}});
    return j;
}

LoadResult load_batches(std::span<const std::filesystem::path> paths, const Schema& schema) {
    LoadResult result;
    int next_id = 1;
    for (const auto& path : paths) {
        const std::string source = path.string();
        try {
            const RawBatch raw = read_raw_batch(path, schema);
            for (const auto& ch : raw.channels)
                if (ch.time_s.empty()) throw DataError("channel '" + ch.name + "' has no samples");
            const std::size_t ref_rows = sorted_samples(raw.channel(schema.reference_channel)).size();
            if (ref_rows < schema.min_rows)
                throw DataError("too short: " + std::to_string(ref_rows) + " rows, minimum " +
                                std::to_string(schema.min_rows));

            BatchLog log = align(raw, schema);
            const std::span<const double> t(log.t_min.data(), static_cast<std::size_t>(log.t_min.size()));
            std::vector<Segment> dropped;
            std::vector<bool> valid(log.rows(), true);
            auto repair = [&](Eigen::MatrixXd& m, const std::vector<std::string>& names) {
                for (Eigen::Index r = 0; r < m.rows(); ++r) {
                    const Eigen::VectorXd row = m.row(r).transpose();
                    if (!row.array().isFinite().any())
                        throw DataError("channel '" + names[static_cast<std::size_t>(r)] + "' is entirely missing");
                    const GapFill fill = fill_gaps({row.data(), static_cast<std::size_t>(row.size())}, schema.max_gap, t);
                    for (std::size_t k = 0; k < log.rows(); ++k) {
                        m(r, static_cast<Eigen::Index>(k)) = fill.values[k];
                        valid[k] = valid[k] && fill.valid[k];
                    }
                    dropped.insert(dropped.end(), fill.dropped.begin(), fill.dropped.end());
                }
            };
            repair(log.states, schema.state_names);
            repair(log.inputs, schema.input_names);
            log.valid = std::move(valid);
            log.dropped = merge_segments(std::move(dropped));
            if (std::none_of(log.valid.begin(), log.valid.end(), [](bool v) { return v; }))
                throw DataError("no valid rows after gap handling");
            log.batch_id = next_id++;
            result.batches.push_back(std::move(log));
        } catch (const DataError& e) {
            result.rejected.push_back({source, e.what()});
        }
    }
    return result;
}

InputEnvelope compute_envelope(std::span<const BatchLog> batches, double coverage, double margin) {
    if (batches.empty()) throw DataError("compute_envelope: no batches");
    if (!(coverage > 0.0 && coverage <= 1.0) || !(margin >= 0.0))
        throw DataError("compute_envelope: coverage must be in (0, 1] and margin nonnegative");
    const auto n_c = batches.front().inputs.rows();
    InputEnvelope env{Eigen::VectorXd(n_c), Eigen::VectorXd(n_c), Eigen::VectorXd(n_c)};
    const double tail = 0.5 * (1.0 - coverage);
    for (Eigen::Index j = 0; j < n_c; ++j) {
        std::vector<double> v;
        for (const auto& b : batches) {
            if (b.inputs.rows() != n_c) throw DataError("compute_envelope: batches disagree in input dimension");
            for (std::size_t k = 0; k < b.rows(); ++k)
                if (b.valid[k]) v.push_back(b.inputs(j, static_cast<Eigen::Index>(k)));
        }
        if (v.empty()) throw DataError("compute_envelope: no valid rows");
        std::sort(v.begin(), v.end());
        const double lo = quantile_sorted(v, tail);
        const double hi = quantile_sorted(v, 1.0 - tail);
        const double mid = 0.5 * (lo + hi);
        double width = hi - lo;
        // A constant channel still needs a nonempty box.
        if (!(width > 0.0)) width = std::max(0.01 * std::abs(mid), 1e-6);
        env.range[j] = width;
        env.u_min[j] = mid - (0.5 + margin) * width;
        env.u_max[j] = mid + (0.5 + margin) * width;
    }
    return env;
}

Scaler Scaler::identity(int n_s, int n_c) {
    return Scaler{Eigen::VectorXd::Zero(n_s), Eigen::VectorXd::Ones(n_s), Eigen::VectorXd::Zero(n_c),
                  Eigen::VectorXd::Ones(n_c)};
}

Scaler Scaler::fit(std::span<const BatchLog> batches) {
    if (batches.empty()) throw DataError("scaler: no batches");
    auto stats = [&](auto get, Eigen::Index dim) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
        double count = 0.0;
        for (const auto& b : batches)
            for (std::size_t k = 0; k < b.rows(); ++k)
                if (b.valid[k]) {
                    mean += get(b).col(static_cast<Eigen::Index>(k));
                    count += 1.0;
                }
        if (count < 2.0) throw DataError("scaler: need at least two valid rows");
        mean /= count;
        for (const auto& b : batches)
            for (std::size_t k = 0; k < b.rows(); ++k)
                if (b.valid[k]) sq += (get(b).col(static_cast<Eigen::Index>(k)) - mean).array().square().matrix();
        Eigen::VectorXd sd = (sq / (count - 1.0)).cwiseSqrt();
        for (Eigen::Index i = 0; i < dim; ++i)
            if (!(sd[i] > 0.0)) sd[i] = 1.0;
        return std::pair{mean, sd};
    };
    const auto [xm, xs] = stats([](const BatchLog& b) -> const Eigen::MatrixXd& { return b.states; },
                                batches.front().states.rows());
    const auto [um, us] = stats([](const BatchLog& b) -> const Eigen::MatrixXd& { return b.inputs; },
                                batches.front().inputs.rows());
    return Scaler{xm, xs, um, us};
}

bool Scaler::is_identity() const {
    return (state_mean.array() == 0.0).all() && (state_scale.array() == 1.0).all() &&
           (input_mean.array() == 0.0).all() && (input_scale.array() == 1.0).all();
}

Eigen::VectorXd Scaler::scale_state(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return (x - state_mean).cwiseQuotient(state_scale);
}
Eigen::VectorXd Scaler::unscale_state(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return z.cwiseProduct(state_scale) + state_mean;
}
Eigen::VectorXd Scaler::scale_input(const Eigen::Ref<const Eigen::VectorXd>& u) const {
    return (u - input_mean).cwiseQuotient(input_scale);
}
Eigen::VectorXd Scaler::unscale_input(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return v.cwiseProduct(input_scale) + input_mean;
}

Snapshot Scaler::scale(const Snapshot& s) const {
    return {scale_state(s.x_now), scale_input(s.u_now), scale_state(s.x_next)};
}

nlohmann::json Scaler::to_json() const {
    return {{"state_mean", to_vector(state_mean)},
            {"state_scale", to_vector(state_scale)},
            {"input_mean", to_vector(input_mean)},
            {"input_scale", to_vector(input_scale)}};
}

Scaler Scaler::from_json(const nlohmann::json& j) {
    Scaler s{from_json_vector(j.at("state_mean")), from_json_vector(j.at("state_scale")),
             from_json_vector(j.at("input_mean")), from_json_vector(j.at("input_scale"))};
    if (s.state_mean.size() != s.state_scale.size() || s.input_mean.size() != s.input_scale.size() ||
        !(s.state_scale.array() > 0.0).all() || !(s.input_scale.array() > 0.0).all())
        throw DataError("scaler: inconsistent statistics");
    return s;
}

}  // namespace akmpc
