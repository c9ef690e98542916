#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "akmpc/history.hpp"
#include "akmpc/ident.hpp"
#include "akmpc/lifting.hpp"
#include "akmpc/mpc.hpp"
#include "akmpc/plant.hpp"

namespace akmpc {

struct RunConfig;

struct ClosedLoopOptions {
    PlantKind plant = PlantKind::Drifting;
    int steps = 400;
    /// Open-loop excitation run used for the initial fit and the history database.
    int train_steps = 600;
    double train_amplitude = 0.3;
    double noise_std = 0.002;
    long drift_start = 200;
    long drift_ramp = 20;
    /// Online updates after every step; off keeps the fitted model frozen.
    bool adapt = true;
    /// Empty: the plant's nominal state.
    Eigen::VectorXd setpoint;
    int dictionary_degree = 2;
    BatchFitOptions fit;
    OnlineIdentConfig ident;
    MpcConfig mpc;
    CorridorConfig corridor;
    /// Kernel width from the database when unset.
    std::optional<double> sigma_d2;
    /// Multiplies the fitted theta before the run (fault injection).
    double theta_scale = 1.0;
    std::uint64_t seed = 0;
};

struct ClosedLoopResult {
    Eigen::MatrixXd states;  ///< n_s x (steps + 1)
    Eigen::MatrixXd inputs;  ///< n_c x steps
    Eigen::MatrixXd lower;   ///< effective first-move bounds, n_c x steps
    Eigen::MatrixXd upper;
    Eigen::VectorXd confidence;
    std::vector<bool> fallback;
    Eigen::VectorXd setpoint;
    Eigen::VectorXd box_min, box_max;
    long resets = 0;
    double mse_post = 0.0;  ///< mean squared tracking error over the second half
    double mse_all = 0.0;

    nlohmann::json to_json() const;
};

/// Mean of |x_k - setpoint|^2 over columns [begin, end).
double tracking_mse(const Eigen::MatrixXd& states, const Eigen::VectorXd& setpoint, Eigen::Index begin,
                    Eigen::Index end);

/**
 * Excite the plant open loop, fit the lifted model and history database on
 * that data, then regulate to the setpoint with the HPC-constrained MPC.
 * The plant noise and the excitation come from the seed only.
 */
ClosedLoopResult run_closed_loop(const ClosedLoopOptions& options);

ClosedLoopOptions closed_loop_options(const RunConfig& cfg);

}  // namespace akmpc
