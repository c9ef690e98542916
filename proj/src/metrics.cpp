#include "akmpc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "akmpc/errors.hpp"

namespace akmpc {

void SpecLimits::validate() const {
    if (!std::isfinite(lsl) || !std::isfinite(usl) || !(usl > lsl))
        throw DataError("spec limits: need finite LSL < USL");
}

CpkResult cpk(std::span<const double> series, const SpecLimits& limits) {
    limits.validate();
    if (series.size() < 2) throw DataError("cpk: need at least two samples");
    CpkResult r;
    const double n = static_cast<double>(series.size());
    r.mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : series) ss += (v - r.mean) * (v - r.mean);
    if (!std::isfinite(ss)) throw NumericError("cpk: non-finite samples");
    r.stddev = std::sqrt(ss / (n - 1.0));
    const double margin = std::min(limits.usl - r.mean, r.mean - limits.lsl);
    if (r.stddev == 0.0) {
        r.zero_variance = true;
        constexpr double inf = std::numeric_limits<double>::infinity();
        r.value = margin > 0.0 ? inf : (margin < 0.0 ? -inf : 0.0);
        return r;
    }
    r.value = margin / (3.0 * r.stddev);
    return r;
}

double mean_abs_deviation(std::span<const double> series, double setpoint) {
    if (series.empty()) throw DataError("mean_abs_deviation: empty series");
    double s = 0.0;
    for (double v : series) s += std::abs(v - setpoint);
    return s / static_cast<double>(series.size());
}

double quantile_sorted(std::span<const double> x, double p) {
    if (x.empty()) throw DataError("quantile: empty data");
    const double h = static_cast<double>(x.size() - 1) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

Distribution summarize(std::vector<double> values) {
    std::erase_if(values, [](double v) { return !std::isfinite(v); });
    Distribution d;
    d.count = static_cast<int>(values.size());
    if (values.empty()) {
        d.min = d.q1 = d.median = d.q3 = d.max = std::numeric_limits<double>::quiet_NaN();
        return d;
    }
    std::sort(values.begin(), values.end());
    d.min = values.front();
    d.max = values.back();
    d.q1 = quantile_sorted(values, 0.25);
    d.median = quantile_sorted(values, 0.5);
    d.q3 = quantile_sorted(values, 0.75);
    return d;
}

ComparisonTable compare_batches(std::span<const BatchSeries> batches, const std::vector<std::string>& channels,
                                const std::vector<SpecLimits>& limits) {
    if (channels.size() != limits.size()) throw DataError("compare_batches: one spec limit per channel required");
    for (const auto& l : limits) l.validate();
    const auto n_ch = static_cast<Eigen::Index>(channels.size());

    ComparisonTable table;
    for (const auto& b : batches) {
        if (b.historical.rows() != n_ch || b.predicted.rows() != n_ch) {
            table.excluded.push_back({b.batch_id, "channel count differs from the limits"});
            continue;
        }
        if (b.historical.cols() != b.predicted.cols()) {
            table.excluded.push_back({b.batch_id, "historical and predicted lengths differ"});
            continue;
        }
        if (b.historical.cols() < 2) {
            table.excluded.push_back({b.batch_id, "fewer than two samples"});
            continue;
        }
        for (Eigen::Index c = 0; c < n_ch; ++c) {
            const Eigen::VectorXd h = b.historical.row(c).transpose();
            const Eigen::VectorXd p = b.predicted.row(c).transpose();
            const auto lim = limits[static_cast<std::size_t>(c)];
            const CpkResult ch = cpk({h.data(), static_cast<std::size_t>(h.size())}, lim);
            const CpkResult cp = cpk({p.data(), static_cast<std::size_t>(p.size())}, lim);
            table.rows.push_back({b.batch_id, channels[static_cast<std::size_t>(c)], ch.value, cp.value,
                                  cp.value - ch.value, ch.zero_variance || cp.zero_variance});
        }
    }

    for (const auto& name : channels) {
        ChannelSummary s;
        s.channel = name;
        std::vector<double> h, m, d;
        for (const auto& r : table.rows) {
            if (r.channel != name) continue;
            h.push_back(r.cpk_hist);
            m.push_back(r.cpk_mpc);
            d.push_back(r.delta);
            if (r.cpk_mpc > r.cpk_hist) ++s.improved;
        }
        if (h.empty()) continue;
        s.hist = summarize(std::move(h));
        s.mpc = summarize(std::move(m));
        s.delta = summarize(std::move(d));
        table.summaries.push_back(std::move(s));
    }
    return table;
}

nlohmann::json json_number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

namespace {

nlohmann::json distribution_json(const Distribution& d) {
    return {{"count", d.count},   {"min", json_number(d.min)}, {"q1", json_number(d.q1)},
            {"median", json_number(d.median)}, {"q3", json_number(d.q3)}, {"max", json_number(d.max)}};
}

std::string cell(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return csv::format_number(v);
}

}  // namespace

csv::Table ComparisonTable::to_csv() const {
    csv::Table t;
    t.header = {"batch", "channel", "cpk_hist", "cpk_mpc", "delta", "zero_variance"};
    for (const auto& r : rows)
        t.rows.push_back({std::to_string(r.batch_id), r.channel, cell(r.cpk_hist), cell(r.cpk_mpc), cell(r.delta),
                          r.zero_variance ? "1" : "0"});
    return t;
}

nlohmann::json ComparisonTable::to_json() const {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"batch", r.batch_id},
                             {"channel", r.channel},
                             {"cpk_hist", json_number(r.cpk_hist)},
                             {"cpk_mpc", json_number(r.cpk_mpc)},
                             {"delta", json_number(r.delta)},
                             {"zero_variance", r.zero_variance}});
    j["summary"] = nlohmann::json::array();
    for (const auto& s : summaries)
        j["summary"].push_back({{"channel", s.channel},
                                {"improved", s.improved},
                                {"cpk_hist", distribution_json(s.hist)},
                                {"cpk_mpc", distribution_json(s.mpc)},
                                {"delta", distribution_json(s.delta)}});
    j["excluded"] = nlohmann::json::array();
    for (const auto& e : excluded) j["excluded"].push_back({{"batch", e.batch_id}, {"reason", e.reason}});
    return j;
}

}  // namespace akmpc
