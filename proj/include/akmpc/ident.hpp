#pragma once

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "akmpc/lifting.hpp"

namespace akmpc {

/**
 * @brief Lifted linear surrogate Psi(x+) = A Psi(x) + B u with its RLS state.
 *
 * theta holds [A | B] (lifted_dim x (lifted_dim + input_dim)); P is the RLS
 * covariance over the regressor [Psi(x); u]. A model is single-writer: one
 * controller instance updates it sequentially, copies may be read anywhere.
 */
struct LiftedModel {
    Eigen::MatrixXd theta;
    Eigen::MatrixXd P;
    double lambda_f = 0.995;
    double lambda_reg = 1e-3;
    /// Trace of the initial covariance; normalizer of the confidence metric.
    double p0_trace = 1.0;
    long step_count = 0;

    int lifted_dim() const noexcept { return static_cast<int>(theta.rows()); }
    int input_dim() const noexcept { return static_cast<int>(theta.cols() - theta.rows()); }
    int regressor_dim() const noexcept { return static_cast<int>(theta.cols()); }

    auto A() const { return theta.leftCols(theta.rows()); }
    auto B() const { return theta.rightCols(theta.cols() - theta.rows()); }

    /// Dimension and finiteness check; throws DataError.
    void validate() const;
};

/// One transition (x_k, u_k, x_{k+1}); u stacks manipulated and disturbance channels.
struct Snapshot {
    Eigen::VectorXd x_now;
    Eigen::VectorXd u_now;
    Eigen::VectorXd x_next;
};

/// How the RLS covariance is seeded after a batch fit.
enum class CovarianceInit {
    /// (lambda_reg I)^-1, or delta I when lambda_reg = 0.
    RidgePrior,
    /// (Omega Omega^T + lambda_reg I)^-1: continue RLS as if the batch had been streamed.
    Posterior,
    /// delta I regardless of lambda_reg.
    Delta,
};

struct BatchFitOptions {
    double lambda_reg = 1e-3;
    CovarianceInit covariance = CovarianceInit::RidgePrior;
    double delta = 1e4;
    double lambda_f = 0.995;
};

/**
 * Ridge EDMDc: theta = Psi_X' Omega^T (Omega Omega^T + lambda_reg I)^-1 with
 * Omega = [Psi_X; U]. Columns are samples. With lambda_reg = 0 a singular Gram
 * matrix raises RankDeficientError.
 */
LiftedModel batch_fit_lifted(const Eigen::Ref<const Eigen::MatrixXd>& psi_x,
                             const Eigen::Ref<const Eigen::MatrixXd>& psi_next,
                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             const BatchFitOptions& options = {});

/// Lift every snapshot through the dictionary and fit.
LiftedModel batch_fit(std::span<const Snapshot> snapshots, const Dictionary& dict,
                      const BatchFitOptions& options = {});

/// Per-step RLS diagnostics.
struct StepReport {
    Eigen::VectorXd error;  ///< a-priori error Psi(x+) - theta Phi
    double error_norm = 0.0;
    Eigen::VectorXd gain;
    double trace_p = 0.0;
    double lambda_used = 1.0;
    /// Update produced non-finite values and was discarded.
    bool rejected = false;
    /// Covariance was reset during this step (rejection or wind-up guard).
    bool reset = false;
};

/// Covariance wind-up guard.
struct ResetConfig {
    /// Reset when tr(P) exceeds this multiple of p0_trace.
    double trace_factor = 10.0;
    /// Reset when any diagonal entry of P falls below this.
    double eps_floor = 1e-12;
};

/**
 * One RLS step on an explicit regressor/target pair:
 * e = target - theta phi, K = P phi / (lambda + phi^T P phi),
 * theta += e K^T, P = (I - K phi^T) P / lambda, then P is symmetrized.
 * Uses model.lambda_f. A non-finite result leaves theta untouched, resets P
 * and flags the report.
 */
StepReport rls_update_regressor(LiftedModel& model, const Eigen::Ref<const Eigen::VectorXd>& phi,
                                const Eigen::Ref<const Eigen::VectorXd>& target);

/// rls_update_regressor on Phi = [Psi(x_now); u_now], target Psi(x_next).
StepReport rls_update(LiftedModel& model, const Snapshot& s, const Dictionary& dict);

/// Reset P to (p0_trace / dim) I when tr(P) or its diagonal leave the guard band.
bool maybe_reset_covariance(LiftedModel& model, const ResetConfig& cfg = {});

/// max(0, 1 - tr(P) / p0_trace), clamped to [0, 1].
double confidence(const LiftedModel& model);

/// A Psi + B u.
Eigen::VectorXd predict_lifted(const LiftedModel& model, const Eigen::Ref<const Eigen::VectorXd>& psi,
                               const Eigen::Ref<const Eigen::VectorXd>& u);

/// recover(A lift(x) + B u).
Eigen::VectorXd predict_one(const LiftedModel& model, const Dictionary& dict,
                            const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& u);

/**
 * Forgetting-factor schedule driven by the a-priori error.
 *
 * The error norm is exponentially smoothed; the watermarks are multiples of
 * the running median of raw error norms. Above the high mark the factor drops
 * to lambda_min, below the low mark it returns to lambda_max, and inside the
 * band the previous factor is kept.
 */
struct ForgettingConfig {
    double lambda_min = 0.9;
    double lambda_max = 0.995;
    double smoothing = 0.95;
    double high_factor = 2.0;
    double low_factor = 1.0;
    /// Number of recent error norms entering the running median.
    int median_window = 200;
};

/// Pure form over a report history (oldest first); previous is the factor in force.
double adapt_forgetting(std::span<const StepReport> history, const ForgettingConfig& cfg,
                        double previous);

/// Incremental form of adapt_forgetting used inside the online loop.
class ForgettingAdapter {
public:
    explicit ForgettingAdapter(ForgettingConfig cfg = {});

    /// Feed the latest error norm; returns the factor for the next step.
    double observe(double error_norm);

    double smoothed_error() const noexcept { return smoothed_; }
    double median_error() const;
    double current() const noexcept { return current_; }
    const ForgettingConfig& config() const noexcept { return cfg_; }

private:
    ForgettingConfig cfg_;
    std::deque<double> window_;
    double smoothed_ = 0.0;
    bool primed_ = false;
    double current_;
};

struct OnlineIdentConfig {
    bool adapt_forgetting = true;
    bool reset_covariance = true;
    ForgettingConfig forgetting;
    ResetConfig reset;
};

/**
 * The sample-by-sample identification loop: RLS update, forgetting-factor
 * adaptation for the next step, then the covariance guard.
 */
class OnlineIdentifier {
public:
    OnlineIdentifier(LiftedModel model, Dictionary dict, OnlineIdentConfig cfg = {});

    StepReport update(const Snapshot& s);

    const LiftedModel& model() const noexcept { return model_; }
    LiftedModel& model() noexcept { return model_; }
    const Dictionary& dictionary() const noexcept { return dict_; }
    long resets() const noexcept { return resets_; }

private:
    LiftedModel model_;
    Dictionary dict_;
    OnlineIdentConfig cfg_;
    std::optional<ForgettingAdapter> adapter_;
    long resets_ = 0;
};

}  // namespace akmpc
