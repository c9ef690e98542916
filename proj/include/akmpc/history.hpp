#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace akmpc {

/**
 * @brief Historical lifted-state / input pairs mined for reference controls.
 *
 * Stored column-wise: psi is lifted_dim x N, inputs is input_dim x N.
 * Immutable after construction, so concurrent queries are safe.
 */
class HistoryDatabase {
public:
    HistoryDatabase() = default;
    HistoryDatabase(Eigen::MatrixXd psi, Eigen::MatrixXd inputs, std::vector<std::string> input_names = {});

    int n_entries() const noexcept { return static_cast<int>(psi_.cols()); }
    int lifted_dim() const noexcept { return static_cast<int>(psi_.rows()); }
    int input_dim() const noexcept { return static_cast<int>(inputs_.rows()); }
    const Eigen::MatrixXd& psi() const noexcept { return psi_; }
    const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
    const std::vector<std::string>& input_names() const noexcept { return input_names_; }

    /// Median over entries of the squared distance to their k-th nearest other entry.
    double median_kth_distance(int k) const;

    /// Columnar text table: header, then lifted coordinates followed by inputs per row.
    void save(const std::filesystem::path& path) const;
    static HistoryDatabase load(const std::filesystem::path& path, int lifted_dim);

private:
    Eigen::MatrixXd psi_;
    Eigen::MatrixXd inputs_;
    std::vector<std::string> input_names_;
};

/// Parameters of the reference search and the confidence-scaled corridor.
struct CorridorConfig {
    int k = 10;
    /// Kernel width in squared-distance units; must be positive.
    double sigma_d2 = 1.0;
    double alpha_base = 0.05;
    double beta_adapt = 0.10;
    /// Per-channel minimum half-width. A single entry is broadcast to every channel.
    Eigen::VectorXd delta_abs = Eigen::VectorXd::Constant(1, 0.0);

    void validate() const;
    Eigen::VectorXd delta_for(int input_dim) const;
};

/// Admissible first-move box [lower, upper] around a reference control.
struct Corridor {
    Eigen::VectorXd u_ref;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double conf_used = 0.0;
};

struct ReferenceControl {
    Eigen::VectorXd u_ref;
    /// Database indices of the selected neighbours, nearest first.
    std::vector<int> neighbors;
    /// All kernel weights underflowed; u_ref is the nearest neighbour's input.
    bool nearest_fallback = false;
};

/**
 * Kernel-weighted K-nearest-neighbour reference control: squared Euclidean
 * distances in the lifted space, the K closest entries (ties by index),
 * weights exp(-d / sigma_d2), normalized weighted mean of their inputs.
 */
ReferenceControl reference_control(const HistoryDatabase& db, const Eigen::Ref<const Eigen::VectorXd>& psi_query,
                                   const CorridorConfig& cfg);

/// Half-width max((alpha_base + beta_adapt * conf) |u_ref|, delta_abs) per channel.
Corridor corridor(const Eigen::Ref<const Eigen::VectorXd>& u_ref, double conf, const CorridorConfig& cfg);

/// Advisor-mode corridor: u_ref = u_actual, half-width max(0.1 |u_actual|, 0.01 range).
Corridor advisor_corridor(const Eigen::Ref<const Eigen::VectorXd>& u_actual,
                          const Eigen::Ref<const Eigen::VectorXd>& u_range);

}  // namespace akmpc
