#pragma once

#include <iosfwd>
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

struct AdvisorSettings {
    /// Weights in model coordinates, box bounds in raw units.
    MpcConfig mpc;
    Eigen::VectorXd setpoint;  ///< raw units
    Eigen::VectorXd u_range;   ///< per-input historical range, raw units
    OnlineIdentConfig ident;
    /// Spec limits per state channel for the summary (may be empty).
    std::vector<SpecLimits> limits;
    /// Off: keep model0 frozen for the whole batch.
    bool update_model = true;
    /// Off: only replay the model updates (no QP is solved).
    bool generate_advice = true;
    /// Length of the optional multi-step prediction under the advised plan.
    int what_if_horizon = 0;
    /// Model coordinates are the scaled ones when present.
    std::optional<Scaler> scaler;
};

struct AdvisorStep {
    long t_index = 0;
    Eigen::VectorXd x_actual;
    Eigen::VectorXd u_actual;
    Eigen::VectorXd x_actual_next;
    Eigen::VectorXd u_mpc;
    Eigen::VectorXd x_pred_next;
    double conf = 0.0;
    Corridor corridor;  ///< raw units, after box clipping and disturbance pinning
    QpStatus qp_status = QpStatus::Infeasible;
    bool fallback = false;
    double lambda_used = 1.0;
    bool reset = false;
    /// Empty when the step succeeded.
    std::string error;
    /// n_s x what_if_horizon rollout, raw units (empty when disabled).
    Eigen::MatrixXd what_if;

    bool has_prediction() const { return error.empty() && x_pred_next.size() > 0; }
};

struct ChannelOutcome {
    std::string channel;
    std::optional<CpkResult> cpk_actual;
    std::optional<CpkResult> cpk_pred;
    double mad_actual = 0.0;
    double mad_pred = 0.0;
};

struct AdvisorSummary {
    int batch_id = 0;
    std::string source;
    long steps = 0;
    long predictions = 0;
    long errors = 0;
    long fallbacks = 0;
    long resets = 0;
    double final_confidence = 0.0;
    std::vector<ChannelOutcome> channels;

    nlohmann::json to_json() const;
};

struct AdvisorRun {
    std::vector<AdvisorStep> steps;
    AdvisorSummary summary;
    LiftedModel final_model;

    /// Realized next states and advised predictions over the predicted steps, channels x time.
    BatchSeries comparison_series() const;
};

/**
 * Replay one cleaned batch. At every transition between valid rows the
 * advisor corridor around the logged input bounds the first move, the
 * advice is predicted one step ahead, and the model then learns from the
 * logged transition only.
 */
AdvisorRun run_advisor(const BatchLog& batch, const LiftedModel& model0, const Dictionary& dict,
                       const AdvisorSettings& settings);

nlohmann::json step_to_json(const AdvisorStep& step);
/// One JSON document per line.
void write_step_stream(std::ostream& out, const std::vector<AdvisorStep>& steps);

}  // namespace akmpc
