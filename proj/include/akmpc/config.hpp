#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "akmpc/history.hpp"
#include "akmpc/ident.hpp"
#include "akmpc/ingest.hpp"
#include "akmpc/metrics.hpp"
#include "akmpc/mpc.hpp"

namespace akmpc {

/**
 * Every tunable of the tool chain. Loaded from JSON with nested sections;
 * unknown keys are rejected and absent keys keep their defaults.
 */
struct RunConfig {
    std::uint64_t seed = 0;

    struct Dictionary {
        int degree = 2;
        bool operator==(const Dictionary&) const = default;
    } dictionary;

    struct Ident {
        double lambda_f = 0.995;
        double lambda_min = 0.9;
        double lambda_max = 0.995;
        double lambda_reg = 1e-3;
        /// "ridge_prior", "posterior" or "delta".
        std::string p0 = "ridge_prior";
        double p0_delta = 1e4;
        bool adapt_forgetting = true;
        double smoothing = 0.95;
        double high_factor = 2.0;
        double low_factor = 1.0;
        int median_window = 200;
        bool reset_covariance = true;
        double reset_trace_factor = 10.0;
        double reset_eps_floor = 1e-12;
        /// z-score states and inputs with training-split statistics.
        bool normalize = false;
        bool operator==(const Ident&) const = default;
    } ident;

    struct Hpc {
        int k = 10;
        /// Kernel width; absent means the median K-th neighbour distance of the database.
        std::optional<double> sigma_d2;
        double alpha_base = 0.05;
        double beta_adapt = 0.10;
        std::vector<double> delta_abs = {0.01};
        /// Only batches whose primary-channel Cpk reaches this enter the history database.
        std::optional<double> min_batch_cpk;
        bool operator==(const Hpc&) const = default;
    } hpc;

    struct Mpc {
        int prediction_horizon = 15;
        int control_horizon = 7;
        std::vector<double> q_diag = {10.0, 100.0, 1.0};
        std::vector<double> r_diag = std::vector<double>(7, 1e-2);
        std::vector<double> s_diag = std::vector<double>(7, 0.0);
        /// "hold_last" or "zero".
        std::string input_extension = "hold_last";
        /// Empty: every channel manipulated except the measured disturbances of the schema.
        std::vector<bool> manipulated = {true, true, true, true, true, false, false};
        /// Empty: taken from the envelope stored with the model.
        std::vector<double> u_min;
        std::vector<double> u_max;
        bool operator==(const Mpc&) const = default;
    } mpc;

    struct Envelope {
        double coverage = 0.99;
        double margin = 0.1;
        bool operator==(const Envelope&) const = default;
    } envelope;

    struct Ingest {
        std::vector<std::string> state_names = Schema::conditioning_cylinder().state_names;
        std::vector<std::string> input_names = Schema::conditioning_cylinder().input_names;
        std::string reference_channel = "Outlet Moisture";
        std::string time_suffix = " Time";
        int min_rows = 300;
        int max_gap = 3;
        /// Controller step in seconds; cleaned logs are decimated to it.
        double sampling_period_s = 1.0;
        bool operator==(const Ingest&) const = default;
    } ingest;

    struct Advisor {
        std::vector<double> setpoints = {66.5, 18.2, 58.5};
        std::vector<double> lsl = {64.5, 17.6, 57.0};
        std::vector<double> usl = {68.5, 18.8, 60.0};
        std::string primary_channel = "Outlet Moisture";
        /// Continue the adapted model into the next batch instead of restarting from the fitted one.
        bool carry_over = false;
        /// Multi-step rollout length under the advised plan (0 disables).
        int what_if_horizon = 0;
        bool operator==(const Advisor&) const = default;
    } advisor;

    struct ClosedLoop {
        /// "linear", "bilinear" or "drifting".
        std::string plant = "drifting";
        int steps = 400;
        int train_steps = 600;
        double train_amplitude = 0.3;
        double noise_std = 0.002;
        long drift_start = 200;
        long drift_ramp = 20;
        bool adapt = true;
        /// Empty: the plant's nominal state.
        std::vector<double> setpoint;
        std::vector<double> q_diag = {1.0, 10.0, 1.0};
        std::vector<double> r_diag = {0.0};
        std::vector<double> s_diag = {0.1};
        std::vector<double> u_min = {0.0};
        std::vector<double> u_max = {1.4};
        double alpha_base = 0.5;
        double beta_adapt = 0.5;
        bool operator==(const ClosedLoop&) const = default;
    } closedloop;

    bool operator==(const RunConfig&) const = default;

    Schema schema() const;
    BatchFitOptions fit_options() const;
    OnlineIdentConfig online_ident() const;
    CorridorConfig corridor() const;
    /// MPC settings for n_c inputs; a length-1 weight or bound broadcasts.
    MpcConfig mpc_config(int n_c, const std::optional<InputEnvelope>& envelope = std::nullopt) const;
    std::vector<SpecLimits> spec_limits() const;
    /// Throws DataError on inconsistent settings.
    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

CovarianceInit covariance_init_from_string(const std::string& name);

}  // namespace akmpc
