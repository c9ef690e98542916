#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "akmpc/csv.hpp"

namespace akmpc {

struct SpecLimits {
    double lsl = 0.0;
    double usl = 0.0;

    void validate() const;
};

struct CpkResult {
    double value = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    /// Sample variance was zero; value is then +inf when the mean is inside the limits.
    bool zero_variance = false;
};

/// min((USL - mean), (mean - LSL)) / (3 sigma) with the n-1 standard deviation.
CpkResult cpk(std::span<const double> series, const SpecLimits& limits);

double mean_abs_deviation(std::span<const double> series, double setpoint);

/// Linear-interpolation quantile of sorted data (h = (n-1) p).
double quantile_sorted(std::span<const double> sorted, double p);

/// Historical and predicted trajectories of one batch, channels x time.
struct BatchSeries {
    int batch_id = 0;
    Eigen::MatrixXd historical;
    Eigen::MatrixXd predicted;
};

struct ComparisonRow {
    int batch_id = 0;
    std::string channel;
    double cpk_hist = 0.0;
    double cpk_mpc = 0.0;
    double delta = 0.0;
    bool zero_variance = false;
};

struct Distribution {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    int count = 0;  ///< finite values summarized
};

struct ChannelSummary {
    std::string channel;
    Distribution hist, mpc, delta;
    int improved = 0;  ///< batches with cpk_mpc > cpk_hist
};

struct Exclusion {
    int batch_id = 0;
    std::string reason;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::vector<ChannelSummary> summaries;
    std::vector<Exclusion> excluded;

    csv::Table to_csv() const;
    nlohmann::json to_json() const;
};

/// JSON has no infinity: NaN becomes null and an infinite sentinel the string "inf" or "-inf".
nlohmann::json json_number(double v);

Distribution summarize(std::vector<double> values);

/**
 * Per-batch, per-channel Cpk of historical and predicted series. Batches
 * whose pair differs in shape (or is too short) are excluded and reported.
 */
ComparisonTable compare_batches(std::span<const BatchSeries> batches, const std::vector<std::string>& channels,
                                const std::vector<SpecLimits>& limits);

}  // namespace akmpc
