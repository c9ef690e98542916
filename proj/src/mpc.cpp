#include "akmpc/mpc.hpp"

#include <algorithm>
#include <cmath>

#include "akmpc/errors.hpp"

namespace akmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(InputExtension ext) {
    return ext == InputExtension::HoldLast ? "hold_last" : "zero";
}

InputExtension input_extension_from_string(std::string_view name) {
    if (name == "hold_last") return InputExtension::HoldLast;
    if (name == "zero") return InputExtension::Zero;
    throw DataError("unknown input_extension '" + std::string(name) + "' (expected hold_last or zero)");
}

bool MpcConfig::is_manipulated(int channel) const {
    if (manipulated.empty()) return true;
    return manipulated.at(static_cast<std::size_t>(channel));
}

namespace {

bool symmetric_psd(const MatrixXd& m) {
    if (m.rows() != m.cols()) return false;
    if ((m - m.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, m.lpNorm<Eigen::Infinity>()))
        return false;
    if (m.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, m.lpNorm<Eigen::Infinity>());
}

bool positive_definite(const MatrixXd& m) {
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return false;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() > 0.0;
}

}  // namespace

void MpcConfig::validate() const {
    if (control_horizon < 1 || control_horizon > prediction_horizon)
        throw DataError("mpc config: need 1 <= Hc <= Hp");
    const auto nc = R.rows();
    if (Q.rows() < 1 || !symmetric_psd(Q)) throw DataError("mpc config: Q must be symmetric positive semi-definite");
    if (nc < 1 || !symmetric_psd(R)) throw DataError("mpc config: R must be symmetric positive semi-definite");
    if (S.rows() != nc || !symmetric_psd(S)) throw DataError("mpc config: S must be n_c x n_c symmetric PSD");
    if (!positive_definite(R) && !positive_definite(S))
        throw DataError("mpc config: at least one of R and S must be positive definite");
    if (u_min.size() != nc || u_max.size() != nc) throw DataError("mpc config: input bounds must have length n_c");
    if (!(u_min.array() < u_max.array()).all()) throw DataError("mpc config: need u_min < u_max componentwise");
    if (!manipulated.empty() && static_cast<Eigen::Index>(manipulated.size()) != nc)
        throw DataError("mpc config: manipulated mask must have length n_c");
}

PredictionMatrices build_prediction(const LiftedModel& model, const MpcConfig& cfg, const Dictionary& dict) {
    if (dict.lifted_dim() != model.lifted_dim()) throw DataError("build_prediction: dictionary does not match model");
    if (cfg.state_dim() != dict.state_dim() || cfg.input_dim() != model.input_dim())
        throw DataError("build_prediction: config dimensions do not match the model");
    if (cfg.control_horizon < 1 || cfg.control_horizon > cfg.prediction_horizon)
        throw DataError("build_prediction: need 1 <= Hc <= Hp");

    const int hp = cfg.prediction_horizon;
    const int hc = cfg.control_horizon;
    const int ns = dict.state_dim();
    const int nc = model.input_dim();
    const MatrixXd a = model.A();
    const MatrixXd b = model.B();

    // ca[j] = C A^j, cab[j] = C A^j B
    std::vector<MatrixXd> ca(static_cast<std::size_t>(hp + 1));
    std::vector<MatrixXd> cab(static_cast<std::size_t>(hp));
    ca[0] = dict.selection();
    for (int j = 1; j <= hp; ++j) {
        ca[j] = ca[j - 1] * a;
        if (!ca[j].allFinite())
            throw NumericError("build_prediction: powers of the identified A overflow at step " + std::to_string(j) +
                               "; the model is unstable for this horizon, reduce the prediction horizon");
    }
    for (int j = 0; j < hp; ++j) cab[j] = ca[j] * b;

    PredictionMatrices pm;
    pm.Sx.resize(ns * hp, model.lifted_dim());
    pm.Su = MatrixXd::Zero(ns * hp, nc * hc);
    for (int j = 1; j <= hp; ++j) {
        pm.Sx.middleRows((j - 1) * ns, ns) = ca[j];
        for (int i = 0; i < std::min(j, hc); ++i) {
            MatrixXd blk = cab[j - 1 - i];
            if (cfg.input_extension == InputExtension::HoldLast && i == hc - 1) {
                for (int m = 0; m < j - hc; ++m) blk += cab[m];
            }
            pm.Su.block((j - 1) * ns, i * nc, ns, nc) = blk;
        }
    }
    if (!pm.Sx.allFinite() || !pm.Su.allFinite())
        throw NumericError("build_prediction: non-finite prediction matrices; reduce the prediction horizon");
    return pm;
}

Corridor clip_corridor(const Corridor& requested, const Eigen::Ref<const VectorXd>& u_min,
                       const Eigen::Ref<const VectorXd>& u_max, bool& repaired) {
    Corridor out = requested;
    for (Eigen::Index j = 0; j < out.lower.size(); ++j) {
        double lo = std::max(requested.lower[j], u_min[j]);
        double hi = std::min(requested.upper[j], u_max[j]);
        if (lo > hi) {
            repaired = true;
            const double face = requested.lower[j] > u_max[j] ? u_max[j] : u_min[j];
            lo = hi = face;
        }
        out.lower[j] = lo;
        out.upper[j] = hi;
    }
    return out;
}

namespace {

MatrixXd block_diagonal(const MatrixXd& block, int copies) {
    const auto n = block.rows();
    MatrixXd out = MatrixXd::Zero(n * copies, n * copies);
    for (int i = 0; i < copies; ++i) out.block(i * n, i * n, n, n) = block;
    return out;
}

struct EffectiveBounds {
    VectorXd box_lo;
    VectorXd box_hi;
    Corridor corridor;
    bool repaired = false;
};

// Pin disturbance channels to their measurement, then intersect the corridor with the box.
EffectiveBounds effective_bounds(const Corridor& requested, const MpcConfig& cfg,
                                 const std::optional<VectorXd>& measured_inputs) {
    const int nc = cfg.input_dim();
    EffectiveBounds out{cfg.u_min, cfg.u_max, requested, false};
    Corridor pinned = requested;
    for (int j = 0; j < nc; ++j) {
        if (cfg.is_manipulated(j)) continue;
        const double value = measured_inputs ? (*measured_inputs)[j] : requested.u_ref[j];
        out.box_lo[j] = out.box_hi[j] = value;
        pinned.u_ref[j] = pinned.lower[j] = pinned.upper[j] = value;
    }
    out.corridor = clip_corridor(pinned, out.box_lo, out.box_hi, out.repaired);
    for (int j = 0; j < nc; ++j)
        out.corridor.u_ref[j] = std::clamp(out.corridor.u_ref[j], out.corridor.lower[j], out.corridor.upper[j]);
    return out;
}

}  // namespace

QpBuild build_qp(const PredictionMatrices& pm, const Eigen::Ref<const VectorXd>& psi_now,
                 const Eigen::Ref<const VectorXd>& x_ref_traj, const Eigen::Ref<const VectorXd>& u_prev,
                 const MpcConfig& cfg, const Corridor& requested, const std::optional<VectorXd>& measured_inputs) {
    const int hp = cfg.prediction_horizon;
    const int hc = cfg.control_horizon;
    const int ns = cfg.state_dim();
    const int nc = cfg.input_dim();
    const int nu = nc * hc;
    if (pm.Sx.rows() != ns * hp || pm.Su.rows() != ns * hp || pm.Su.cols() != nu)
        throw DataError("build_qp: prediction matrices do not match the config horizons");
    if (psi_now.size() != pm.Sx.cols()) throw DataError("build_qp: lifted state has wrong length");
    if (x_ref_traj.size() != ns * hp) throw DataError("build_qp: reference trajectory must have length n_s * Hp");
    if (u_prev.size() != nc) throw DataError("build_qp: previous input has wrong length");
    if (requested.lower.size() != nc || requested.upper.size() != nc || requested.u_ref.size() != nc)
        throw DataError("build_qp: corridor has wrong length");
    if (!requested.lower.allFinite() || !requested.upper.allFinite())
        throw DataError("build_qp: corridor bounds must be finite");
    if (measured_inputs && measured_inputs->size() != nc) throw DataError("build_qp: measured inputs have wrong length");

    const EffectiveBounds bounds = effective_bounds(requested, cfg, measured_inputs);
    const VectorXd& box_lo = bounds.box_lo;
    const VectorXd& box_hi = bounds.box_hi;
    QpBuild out;
    out.corridor = bounds.corridor;
    out.repaired = bounds.repaired;

    const MatrixXd qbar = block_diagonal(cfg.Q, hp);
    const MatrixXd rbar = block_diagonal(cfg.R, hc);
    const MatrixXd sbar = block_diagonal(cfg.S, hc);
    MatrixXd diff = MatrixXd::Identity(nu, nu);
    for (int i = 1; i < hc; ++i) diff.block(i * nc, (i - 1) * nc, nc, nc) = -MatrixXd::Identity(nc, nc);
    VectorXd prev_term = VectorXd::Zero(nu);
    prev_term.head(nc) = u_prev;

    const VectorXd free_error = pm.Sx * psi_now - x_ref_traj;
    const MatrixXd q_su = qbar * pm.Su;
    const MatrixXd s_diff = sbar * diff;

    QpProblem& qp = out.qp;
    qp.H = 2.0 * (pm.Su.transpose() * q_su + rbar + diff.transpose() * s_diff);
    qp.H = (0.5 * (qp.H + qp.H.transpose())).eval();
    qp.f = 2.0 * (q_su.transpose() * free_error - s_diff.transpose() * prev_term);
    qp.offset = free_error.dot(qbar * free_error) + prev_term.dot(sbar * prev_term);

    const int rows = 2 * nu + 2 * nc;
    qp.G = MatrixXd::Zero(rows, nu);
    qp.h.resize(rows);
    int r = 0;
    for (int i = 0; i < hc; ++i) {
        for (int j = 0; j < nc; ++j, ++r) {
            qp.G(r, i * nc + j) = 1.0;
            qp.h[r] = box_hi[j];
        }
        for (int j = 0; j < nc; ++j, ++r) {
            qp.G(r, i * nc + j) = -1.0;
            qp.h[r] = -box_lo[j];
        }
    }
    for (int j = 0; j < nc; ++j, ++r) {
        qp.G(r, j) = 1.0;
        qp.h[r] = out.corridor.upper[j];
    }
    for (int j = 0; j < nc; ++j, ++r) {
        qp.G(r, j) = -1.0;
        qp.h[r] = -out.corridor.lower[j];
    }
    return out;
}

ControlResult control_step(const LiftedModel& model, const Dictionary& dict, const CorridorSource& source,
                           const Eigen::Ref<const VectorXd>& x_now, const Eigen::Ref<const VectorXd>& x_ref_traj,
                           const Eigen::Ref<const VectorXd>& u_prev, const MpcConfig& cfg,
                           const std::optional<VectorXd>& measured_inputs) {
    cfg.validate();
    const int nc = cfg.input_dim();
    if (model.input_dim() != nc) throw DataError("control_step: model and config disagree on n_c");
    if (measured_inputs && measured_inputs->size() != nc)
        throw DataError("control_step: measured inputs have wrong length");
    const VectorXd psi = dict.lift(x_now);

    ControlResult result;
    ControlDiagnostics& diag = result.diagnostics;
    diag.confidence = confidence(model);

    Corridor requested;
    if (const auto* hpc = std::get_if<HpcCorridorSource>(&source)) {
        if (!hpc->db) throw DataError("control_step: HPC source without a history database");
        const ReferenceControl ref = reference_control(*hpc->db, psi, hpc->config);
        diag.reference_fallback = ref.nearest_fallback;
        requested = corridor(ref.u_ref, diag.confidence, hpc->config);
    } else if (const auto* adv = std::get_if<AdvisorCorridorSource>(&source)) {
        requested = advisor_corridor(adv->u_actual, adv->u_range);
        requested.conf_used = diag.confidence;
    } else {
        requested = std::get<FixedCorridorSource>(source).corridor;
        requested.conf_used = diag.confidence;
    }

    // The clipped, pinned corridor is known before any solve; it backs every fallback.
    QpBuild build;
    {
        const EffectiveBounds bounds = effective_bounds(requested, cfg, measured_inputs);
        build.corridor = bounds.corridor;
        build.repaired = bounds.repaired;
    }

    auto fall_back = [&](QpStatus status) {
        diag.fallback = true;
        diag.qp_status = status;
        diag.corridor = build.corridor;
        diag.corridor_repaired = build.repaired;
        result.u_apply = build.corridor.u_ref;
        return result;
    };

    try {
        const PredictionMatrices pm = build_prediction(model, cfg, dict);
        build = build_qp(pm, psi, x_ref_traj, u_prev, cfg, requested, measured_inputs);
    } catch (const NumericError&) {
        return fall_back(QpStatus::Infeasible);
    }
    diag.corridor = build.corridor;
    diag.corridor_repaired = build.repaired;

    const VectorXd start = build.corridor.u_ref.replicate(cfg.control_horizon, 1);
    QpSolution sol;
    try {
        sol = solve_qp(build.qp.H, build.qp.f, build.qp.G, build.qp.h, start);
    } catch (const std::exception&) {
        return fall_back(QpStatus::Infeasible);
    }
    diag.qp_iterations = sol.iterations;
    if (sol.status != QpStatus::Optimal || !sol.u_star.allFinite()) return fall_back(sol.status);

    // First move must sit in corridor and box; absorb rounding, reject anything larger.
    VectorXd first = sol.u_star.head(nc);
    VectorXd lo = build.corridor.lower, hi = build.corridor.upper;
    for (int j = 0; j < nc; ++j) {
        const double slack = 1e-7 * (1.0 + std::max(std::abs(lo[j]), std::abs(hi[j])));
        if (first[j] < lo[j] - slack || first[j] > hi[j] + slack) return fall_back(sol.status);
        first[j] = std::clamp(first[j], lo[j], hi[j]);
    }

    diag.qp_status = sol.status;
    diag.cost = build.qp.cost(sol.u_star);
    diag.active_set = sol.active_set;
    diag.U = sol.u_star;
    result.u_apply = first;
    return result;
}

Controller::Controller(MpcConfig cfg, Dictionary dict, VectorXd u_initial)
    : cfg_(std::move(cfg)), dict_(std::move(dict)), u_prev_(std::move(u_initial)) {
    cfg_.validate();
    if (u_prev_.size() != cfg_.input_dim()) throw DataError("controller: initial input has wrong length");
}

ControlResult Controller::step(const LiftedModel& model, const CorridorSource& source,
                               const Eigen::Ref<const VectorXd>& x_now, const Eigen::Ref<const VectorXd>& x_ref_traj,
                               const std::optional<VectorXd>& measured_inputs) {
    ControlResult res = control_step(model, dict_, source, x_now, x_ref_traj, u_prev_, cfg_, measured_inputs);
    u_prev_ = res.u_apply;
    return res;
}

VectorXd constant_reference(const Eigen::Ref<const VectorXd>& setpoint, int prediction_horizon) {
    return setpoint.replicate(prediction_horizon, 1);
}

}  // namespace akmpc
