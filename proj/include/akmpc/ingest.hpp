#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "akmpc/ident.hpp"

namespace akmpc {

/**
 * Channel layout of batch files. Raw files carry, per channel, a value
 * column named exactly after the channel and a timestamp column
 * "<name><time_suffix>" in seconds.
 */
struct Schema {
    std::vector<std::string> state_names;
    std::vector<std::string> input_names;
    /// Channel whose timestamps every other channel is aligned to.
    std::string reference_channel = "Outlet Moisture";
    std::string time_suffix = " Time";
    /// Batches with fewer reference samples are discarded.
    std::size_t min_rows = 300;
    /// Longest run of missing points that is interpolated.
    int max_gap = 3;

    /// The 3-state / 7-input conditioning-cylinder layout.
    static Schema conditioning_cylinder();

    std::vector<std::string> channels() const;
    int state_dim() const noexcept { return static_cast<int>(state_names.size()); }
    int input_dim() const noexcept { return static_cast<int>(input_names.size()); }
};

/// Samples of one channel; NaN marks a missing value.
struct RawChannel {
    std::string name;
    std::vector<double> time_s;
    std::vector<double> values;
};

struct RawBatch {
    std::string source;
    std::vector<RawChannel> channels;  ///< schema order

    const RawChannel& channel(const std::string& name) const;
};

/// Half-open row range [begin, end).
struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const Segment&) const = default;
};

/**
 * One cleaned production batch. Columns are time steps; rows flagged
 * invalid belong to discarded missing-data segments.
 */
struct BatchLog {
    int batch_id = 0;
    std::string source;
    Eigen::VectorXd t_min;   ///< minutes from batch start, strictly increasing
    Eigen::MatrixXd states;  ///< n_s x N
    Eigen::MatrixXd inputs;  ///< n_c x N
    std::vector<bool> valid;
    std::vector<std::string> state_names;
    std::vector<std::string> input_names;
    std::vector<Segment> dropped;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(t_min.size()); }

    /// Transitions between consecutive valid rows.
    std::vector<Snapshot> snapshots() const;

    /// Cleaned format: Batch, Time [min], Valid, then state and input channels.
    void save(const std::filesystem::path& path) const;
    static BatchLog load(const std::filesystem::path& path, const Schema& schema);
};

/// Read a raw batch file; missing schema columns raise DataError naming the column.
RawBatch read_raw_batch(const std::filesystem::path& path, const Schema& schema);

/**
 * Nearest-in-time alignment of every channel onto the reference channel's
 * timestamps (ties go to the earlier sample); time becomes minutes from the
 * first reference timestamp. Missing values are carried as NaN.
 */
BatchLog align(const RawBatch& batch, const Schema& schema);

struct GapFill {
    std::vector<double> values;
    std::vector<bool> valid;
    std::vector<Segment> dropped;
};

/**
 * Linear interpolation of interior runs of at most max_gap missing points;
 * longer runs and leading/trailing runs stay missing and are reported. When a
 * time vector is given interpolation is in time, otherwise in sample index.
 */
GapFill fill_gaps(std::span<const double> series, int max_gap = 3, std::span<const double> time = {});

/**
 * Keep every k-th row so that the step is close to period_s, with k from the
 * median row spacing (k = 1 when the data is already at or above the period).
 */
BatchLog decimate(const BatchLog& log, double period_s);

struct Rejection {
    std::string source;
    std::string reason;
};

struct LoadResult {
    std::vector<BatchLog> batches;
    std::vector<Rejection> rejected;

    nlohmann::json report() const;
};

/// Read, validate, align and gap-fill each file; survivors get IDs 1, 2, ... in input order.
LoadResult load_batches(std::span<const std::filesystem::path> paths, const Schema& schema);

/// Physical input limits and ranges derived from historical data.
struct InputEnvelope {
    Eigen::VectorXd u_min;
    Eigen::VectorXd u_max;
    /// Width of the central quantile interval (before the margin).
    Eigen::VectorXd range;
};

/**
 * Central `coverage` quantile interval of each input over all valid rows,
 * widened by `margin` times its width on both sides.
 */
InputEnvelope compute_envelope(std::span<const BatchLog> batches, double coverage = 0.99, double margin = 0.1);

/// Per-channel affine normalization frozen on a training split.
struct Scaler {
    Eigen::VectorXd state_mean, state_scale;
    Eigen::VectorXd input_mean, input_scale;

    static Scaler identity(int n_s, int n_c);
    /// z-score statistics over all valid rows; constant channels keep scale 1.
    static Scaler fit(std::span<const BatchLog> batches);

    bool is_identity() const;
    Eigen::VectorXd scale_state(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd unscale_state(const Eigen::Ref<const Eigen::VectorXd>& z) const;
    Eigen::VectorXd scale_input(const Eigen::Ref<const Eigen::VectorXd>& u) const;
    Eigen::VectorXd unscale_input(const Eigen::Ref<const Eigen::VectorXd>& v) const;
    Snapshot scale(const Snapshot& s) const;

    nlohmann::json to_json() const;
    static Scaler from_json(const nlohmann::json& j);
};

}  // namespace akmpc
