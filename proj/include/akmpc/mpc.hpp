#pragma once

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "akmpc/history.hpp"
#include "akmpc/ident.hpp"
#include "akmpc/lifting.hpp"
#include "akmpc/qp.hpp"

namespace akmpc {

/// How inputs after the last free move are treated in the prediction.
enum class InputExtension {
    /// Inputs beyond the control horizon repeat the last move.
    HoldLast,
    /// Inputs beyond the control horizon are zero (the literal block matrix).
    Zero,
};

std::string_view to_string(InputExtension ext);
InputExtension input_extension_from_string(std::string_view name);

struct MpcConfig {
    int prediction_horizon = 15;
    int control_horizon = 7;
    Eigen::MatrixXd Q;  ///< state weight, n_s x n_s
    Eigen::MatrixXd R;  ///< input weight, n_c x n_c
    Eigen::MatrixXd S;  ///< input-rate weight, n_c x n_c
    Eigen::VectorXd u_min;
    Eigen::VectorXd u_max;
    InputExtension input_extension = InputExtension::HoldLast;
    /// false marks a measured disturbance channel: pinned to its measurement, never optimized.
    std::vector<bool> manipulated;

    int state_dim() const noexcept { return static_cast<int>(Q.rows()); }
    int input_dim() const noexcept { return static_cast<int>(R.rows()); }
    bool is_manipulated(int channel) const;

    /// Throws DataError on any violated invariant.
    void validate() const;
};

struct PredictionMatrices {
    Eigen::MatrixXd Sx;  ///< (n_s Hp) x N_obs
    Eigen::MatrixXd Su;  ///< (n_s Hp) x (n_c Hc)
};

/**
 * Condensed prediction X = Sx Psi(x_k) + Su U over the prediction horizon.
 * Row block j (1-based) of Sx is C A^j; block (j, i) of Su is C A^(j-1-i) B,
 * with the last column absorbing the held tail in HoldLast mode.
 * Throws NumericError when powers of A overflow.
 */
PredictionMatrices build_prediction(const LiftedModel& model, const MpcConfig& cfg, const Dictionary& dict);

/// min 1/2 U'HU + f'U + offset  s.t.  G U <= h, where the objective equals the tracking cost exactly.
struct QpProblem {
    Eigen::MatrixXd H;
    Eigen::VectorXd f;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    double offset = 0.0;

    double cost(const Eigen::Ref<const Eigen::VectorXd>& U) const { return 0.5 * U.dot(H * U) + f.dot(U) + offset; }
};

struct QpBuild {
    QpProblem qp;
    /// Corridor after intersection with the box and disturbance pinning.
    Corridor corridor;
    /// The requested corridor missed the box on some channel and was moved onto the box face.
    bool repaired = false;
};

/// Intersect a corridor with the box; an empty intersection collapses to the nearest box face.
Corridor clip_corridor(const Corridor& requested, const Eigen::Ref<const Eigen::VectorXd>& u_min,
                       const Eigen::Ref<const Eigen::VectorXd>& u_max, bool& repaired);

/**
 * Assemble the QP for one control step. Constraint rows are the box on every
 * move (upper rows then lower rows per move), followed by the corridor on the
 * first move as [I; -I]. Disturbance channels are pinned to
 * measured_inputs on every move when given.
 */
QpBuild build_qp(const PredictionMatrices& pm, const Eigen::Ref<const Eigen::VectorXd>& psi_now,
                 const Eigen::Ref<const Eigen::VectorXd>& x_ref_traj, const Eigen::Ref<const Eigen::VectorXd>& u_prev,
                 const MpcConfig& cfg, const Corridor& corridor,
                 const std::optional<Eigen::VectorXd>& measured_inputs = std::nullopt);

/// HPC corridor: KNN reference control scaled by model confidence.
struct HpcCorridorSource {
    const HistoryDatabase* db = nullptr;
    CorridorConfig config;
};

/// Advisor corridor around the logged input.
struct AdvisorCorridorSource {
    Eigen::VectorXd u_actual;
    Eigen::VectorXd u_range;
};

/// Corridor computed by the caller, e.g. in raw units before scaling.
struct FixedCorridorSource {
    Corridor corridor;
};

using CorridorSource = std::variant<HpcCorridorSource, AdvisorCorridorSource, FixedCorridorSource>;

struct ControlDiagnostics {
    double cost = 0.0;
    std::vector<int> active_set;
    Corridor corridor;
    double confidence = 0.0;
    QpStatus qp_status = QpStatus::Infeasible;
    int qp_iterations = 0;
    /// Applied the corridor centre because the QP failed or its answer broke a constraint.
    bool fallback = false;
    bool corridor_repaired = false;
    bool reference_fallback = false;
    /// Optimal move sequence (empty on fallback).
    Eigen::VectorXd U;
};

struct ControlResult {
    Eigen::VectorXd u_apply;
    ControlDiagnostics diagnostics;
};

/**
 * One receding-horizon step: lift, fetch the corridor, build and solve the
 * QP, return the first move. A failed solve returns the corridor centre.
 * measured_inputs supplies the disturbance channels (ignored for manipulated channels).
 */
ControlResult control_step(const LiftedModel& model, const Dictionary& dict, const CorridorSource& source,
                           const Eigen::Ref<const Eigen::VectorXd>& x_now, const Eigen::Ref<const Eigen::VectorXd>& x_ref_traj,
                           const Eigen::Ref<const Eigen::VectorXd>& u_prev, const MpcConfig& cfg,
                           const std::optional<Eigen::VectorXd>& measured_inputs = std::nullopt);

/// Stateful wrapper that remembers the applied input between steps.
class Controller {
public:
    Controller(MpcConfig cfg, Dictionary dict, Eigen::VectorXd u_initial);

    ControlResult step(const LiftedModel& model, const CorridorSource& source,
                       const Eigen::Ref<const Eigen::VectorXd>& x_now, const Eigen::Ref<const Eigen::VectorXd>& x_ref_traj,
                       const std::optional<Eigen::VectorXd>& measured_inputs = std::nullopt);

    /// Override the remembered input (e.g. when the plant applied something else).
    void set_previous_input(Eigen::VectorXd u) { u_prev_ = std::move(u); }
    const Eigen::VectorXd& previous_input() const noexcept { return u_prev_; }
    const MpcConfig& config() const noexcept { return cfg_; }

private:
    MpcConfig cfg_;
    Dictionary dict_;
    Eigen::VectorXd u_prev_;
};

/// Constant setpoint stacked over the prediction horizon.
Eigen::VectorXd constant_reference(const Eigen::Ref<const Eigen::VectorXd>& setpoint, int prediction_horizon);

}  // namespace akmpc
