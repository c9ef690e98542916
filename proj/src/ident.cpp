#include "akmpc/ident.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "akmpc/errors.hpp"

namespace akmpc {

namespace {

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

double schedule(double smoothed, double median, const ForgettingConfig& cfg, double previous) {
    const double high = cfg.high_factor * median;
    const double low = cfg.low_factor * median;
    double next = previous;
    if (smoothed > high) {
        next = cfg.lambda_min;
    } else if (smoothed <= low) {
        next = cfg.lambda_max;
    }
    return std::clamp(next, cfg.lambda_min, cfg.lambda_max);
}

void reset_to_isotropic(LiftedModel& model) {
    const auto dim = model.P.rows();
    model.P = Eigen::MatrixXd::Identity(dim, dim) * (model.p0_trace / static_cast<double>(dim));
}

}  // namespace

void LiftedModel::validate() const {
    if (theta.rows() < 1 || theta.cols() < theta.rows())
        throw DataError("model: theta must be N x (N + n_c)");
    if (P.rows() != theta.cols() || P.cols() != theta.cols())
        throw DataError("model: covariance must be square with the regressor dimension");
    if (!theta.allFinite() || !P.allFinite()) throw DataError("model: non-finite parameters");
    if (!(lambda_f > 0.0 && lambda_f <= 1.0)) throw DataError("model: lambda_f must lie in (0, 1]");
    if (!(lambda_reg >= 0.0)) throw DataError("model: lambda_reg must be nonnegative");
    if (!(p0_trace > 0.0)) throw DataError("model: p0_trace must be positive");
}

LiftedModel batch_fit_lifted(const Eigen::Ref<const Eigen::MatrixXd>& psi_x,
                             const Eigen::Ref<const Eigen::MatrixXd>& psi_next,
                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             const BatchFitOptions& options) {
    const auto n_obs = psi_x.rows();
    const auto n_samples = psi_x.cols();
    const auto n_c = inputs.rows();
    if (n_samples < 1) throw DataError("batch_fit: at least one snapshot is required");
    if (psi_next.rows() != n_obs || psi_next.cols() != n_samples || inputs.cols() != n_samples)
        throw DataError("batch_fit: data matrices disagree in shape");
    if (!(options.lambda_reg >= 0.0)) throw DataError("batch_fit: lambda_reg must be nonnegative");

    const auto n_reg = n_obs + n_c;
    Eigen::MatrixXd omega(n_reg, n_samples);
    omega.topRows(n_obs) = psi_x;
    omega.bottomRows(n_c) = inputs;
    if (!all_finite(omega) || !all_finite(psi_next)) throw DataError("batch_fit: non-finite data");

    Eigen::MatrixXd gram = omega * omega.transpose();
    gram.diagonal().array() += options.lambda_reg;

    Eigen::MatrixXd theta;
    if (options.lambda_reg > 0.0) {
        const Eigen::MatrixXd cross = psi_next * omega.transpose();
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) throw NumericError("batch_fit: regularized Gram matrix not positive definite");
        theta = llt.solve(cross.transpose()).transpose();
    } else {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
        qr.setThreshold(1e-13);
        const auto rank = qr.rank();
        if (rank < n_reg) {
            std::ostringstream msg;
            msg << "batch_fit: Gram matrix is rank deficient by " << (n_reg - rank) << " of " << n_reg
                << " dimensions; add excitation or use lambda_reg > 0";
            throw RankDeficientError(msg.str(), static_cast<int>(n_reg - rank));
        }
        // Least squares on the samples directly; the Gram route squares the condition number.
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> ls(omega.transpose());
        theta = ls.solve(psi_next.transpose()).transpose();
    }

    LiftedModel model;
    model.theta = std::move(theta);
    model.lambda_f = options.lambda_f;
    model.lambda_reg = options.lambda_reg;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n_reg, n_reg);
    switch (options.covariance) {
        case CovarianceInit::RidgePrior:
            model.P = options.lambda_reg > 0.0 ? Eigen::MatrixXd(eye / options.lambda_reg)
                                               : Eigen::MatrixXd(eye * options.delta);
            break;
        case CovarianceInit::Posterior: {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
            model.P = ldlt.solve(eye);
            symmetrize(model.P);
            break;
        }
        case CovarianceInit::Delta:
            model.P = eye * options.delta;
            break;
    }
    if (!model.P.allFinite()) throw NumericError("batch_fit: initial covariance is not finite");
    model.p0_trace = model.P.trace();
    return model;
}

LiftedModel batch_fit(std::span<const Snapshot> snapshots, const Dictionary& dict,
                      const BatchFitOptions& options) {
    if (snapshots.empty()) throw DataError("batch_fit: at least one snapshot is required");
    const auto n_c = snapshots.front().u_now.size();
    const auto n = static_cast<Eigen::Index>(snapshots.size());
    Eigen::MatrixXd psi_x(dict.lifted_dim(), n);
    Eigen::MatrixXd psi_next(dict.lifted_dim(), n);
    Eigen::MatrixXd inputs(n_c, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& s = snapshots[static_cast<std::size_t>(k)];
        if (s.u_now.size() != n_c) throw DataError("batch_fit: snapshots disagree in input dimension");
        psi_x.col(k) = dict.lift(s.x_now);
        psi_next.col(k) = dict.lift(s.x_next);
        inputs.col(k) = s.u_now;
    }
    return batch_fit_lifted(psi_x, psi_next, inputs, options);
}

StepReport rls_update_regressor(LiftedModel& model, const Eigen::Ref<const Eigen::VectorXd>& phi,
                                const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (phi.size() != model.regressor_dim() || target.size() != model.lifted_dim())
        throw DataError("rls_update: regressor or target dimension mismatch");

    StepReport report;
    report.lambda_used = model.lambda_f;

    report.error = target - model.theta * phi;
    report.error_norm = report.error.norm();

    const Eigen::VectorXd p_phi = model.P * phi;
    const double denom = model.lambda_f + phi.dot(p_phi);
    report.gain = p_phi / denom;

    Eigen::MatrixXd theta_next = model.theta + report.error * report.gain.transpose();
    Eigen::MatrixXd p_next = (model.P - report.gain * p_phi.transpose()) / model.lambda_f;
    symmetrize(p_next);

    if (!std::isfinite(denom) || denom <= 0.0 || !theta_next.allFinite() || !p_next.allFinite()) {
        report.rejected = true;
        report.reset = true;
        reset_to_isotropic(model);
        report.trace_p = model.P.trace();
        ++model.step_count;
        return report;
    }

    model.theta = std::move(theta_next);
    model.P = std::move(p_next);
    report.trace_p = model.P.trace();
    ++model.step_count;
    return report;
}

StepReport rls_update(LiftedModel& model, const Snapshot& s, const Dictionary& dict) {
    if (s.u_now.size() != model.input_dim()) throw DataError("rls_update: input dimension mismatch");
    Eigen::VectorXd phi(model.regressor_dim());
    phi.head(model.lifted_dim()) = dict.lift(s.x_now);
    phi.tail(model.input_dim()) = s.u_now;
    return rls_update_regressor(model, phi, dict.lift(s.x_next));
}

bool maybe_reset_covariance(LiftedModel& model, const ResetConfig& cfg) {
    const double trace = model.P.trace();
    const bool wound_up = !(trace <= cfg.trace_factor * model.p0_trace);
    const bool collapsed = !(model.P.diagonal().minCoeff() >= cfg.eps_floor);
    if (!wound_up && !collapsed) return false;
    reset_to_isotropic(model);
    return true;
}

double confidence(const LiftedModel& model) {
    const double ratio = model.P.trace() / model.p0_trace;
    if (!std::isfinite(ratio)) return 0.0;
    return std::clamp(1.0 - ratio, 0.0, 1.0);
}

Eigen::VectorXd predict_lifted(const LiftedModel& model, const Eigen::Ref<const Eigen::VectorXd>& psi,
                               const Eigen::Ref<const Eigen::VectorXd>& u) {
    if (psi.size() != model.lifted_dim() || u.size() != model.input_dim())
        throw DataError("predict: dimension mismatch");
    return model.A() * psi + model.B() * u;
}

Eigen::VectorXd predict_one(const LiftedModel& model, const Dictionary& dict,
                            const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& u) {
    if (dict.lifted_dim() != model.lifted_dim()) throw DataError("predict: dictionary does not match model");
    return dict.recover(predict_lifted(model, dict.lift(x), u));
}

double adapt_forgetting(std::span<const StepReport> history, const ForgettingConfig& cfg, double previous) {
    if (history.empty()) return std::clamp(previous, cfg.lambda_min, cfg.lambda_max);
    double smoothed = history.front().error_norm;
    for (std::size_t k = 1; k < history.size(); ++k)
        smoothed = cfg.smoothing * smoothed + (1.0 - cfg.smoothing) * history[k].error_norm;

    const std::size_t window = static_cast<std::size_t>(std::max(cfg.median_window, 1));
    const std::size_t first = history.size() > window ? history.size() - window : 0;
    std::vector<double> recent;
    recent.reserve(history.size() - first);
    for (std::size_t k = first; k < history.size(); ++k) recent.push_back(history[k].error_norm);
    return schedule(smoothed, median_of(std::move(recent)), cfg, previous);
}

ForgettingAdapter::ForgettingAdapter(ForgettingConfig cfg) : cfg_(cfg), current_(cfg.lambda_max) {}

double ForgettingAdapter::observe(double error_norm) {
    if (!primed_) {
        smoothed_ = error_norm;
        primed_ = true;
    } else {
        smoothed_ = cfg_.smoothing * smoothed_ + (1.0 - cfg_.smoothing) * error_norm;
    }
    window_.push_back(error_norm);
    while (static_cast<int>(window_.size()) > std::max(cfg_.median_window, 1)) window_.pop_front();
    current_ = schedule(smoothed_, median_error(), cfg_, current_);
    return current_;
}

double ForgettingAdapter::median_error() const {
    return median_of(std::vector<double>(window_.begin(), window_.end()));
}

OnlineIdentifier::OnlineIdentifier(LiftedModel model, Dictionary dict, OnlineIdentConfig cfg)
    : model_(std::move(model)), dict_(std::move(dict)), cfg_(cfg) {
    if (dict_.lifted_dim() != model_.lifted_dim())
        throw DataError("online identifier: dictionary does not match model");
    if (cfg_.adapt_forgetting) {
        adapter_.emplace(cfg_.forgetting);
        model_.lambda_f = std::clamp(model_.lambda_f, cfg_.forgetting.lambda_min, cfg_.forgetting.lambda_max);
    }
}

StepReport OnlineIdentifier::update(const Snapshot& s) {
    StepReport report = rls_update(model_, s, dict_);
    if (adapter_ && !report.rejected) model_.lambda_f = adapter_->observe(report.error_norm);
    if (cfg_.reset_covariance && !report.reset && maybe_reset_covariance(model_, cfg_.reset)) {
        report.reset = true;
        report.trace_p = model_.P.trace();
    }
    if (report.reset) ++resets_;
    return report;
}

}  // namespace akmpc
