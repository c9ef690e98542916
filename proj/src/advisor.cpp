#include "akmpc/advisor.hpp"

#include <ostream>

#include "akmpc/errors.hpp"
#include "akmpc/model_io.hpp"

namespace akmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

/// Maps between raw units and model coordinates.
struct Coordinates {
    const std::optional<Scaler>& scaler;

    VectorXd state_in(const VectorXd& x) const { return scaler ? scaler->scale_state(x) : x; }
    VectorXd state_out(const VectorXd& z) const { return scaler ? scaler->unscale_state(z) : z; }
    VectorXd input_in(const VectorXd& u) const { return scaler ? scaler->scale_input(u) : u; }
    VectorXd input_out(const VectorXd& v) const { return scaler ? scaler->unscale_input(v) : v; }

    Corridor corridor_in(const Corridor& c) const { return {input_in(c.u_ref), input_in(c.lower), input_in(c.upper), c.conf_used}; }
    Corridor corridor_out(const Corridor& c) const {
        return {input_out(c.u_ref), input_out(c.lower), input_out(c.upper), c.conf_used};
    }
};

MatrixXd what_if_rollout(const LiftedModel& model, const Dictionary& dict, const MpcConfig& cfg, const VectorXd& x0,
                         const VectorXd& plan, const VectorXd& first, int horizon) {
    const int nc = cfg.input_dim();
    const int hc = cfg.control_horizon;
    MatrixXd out(x0.size(), horizon);
    VectorXd x = x0;
    for (int j = 0; j < horizon; ++j) {
        VectorXd u;
        if (plan.size() == nc * hc) {
            if (j < hc) u = plan.segment(j * nc, nc);
            else if (cfg.input_extension == InputExtension::HoldLast) u = plan.tail(nc);
            else u = VectorXd::Zero(nc);
        } else {
            u = first;
        }
        x = predict_one(model, dict, x, u);
        out.col(j) = x;
    }
    return out;
}

}  // namespace

AdvisorRun run_advisor(const BatchLog& batch, const LiftedModel& model0, const Dictionary& dict,
                       const AdvisorSettings& settings) {
    const int ns = dict.state_dim();
    const int nc = model0.input_dim();
    if (batch.states.rows() != ns || batch.inputs.rows() != nc)
        throw DataError("advisor: batch channels do not match the model");
    if (settings.setpoint.size() != ns) throw DataError("advisor: setpoint needs one entry per state");
    if (settings.u_range.size() != nc) throw DataError("advisor: input range needs one entry per input");
    if (!settings.limits.empty() && static_cast<int>(settings.limits.size()) != ns)
        throw DataError("advisor: spec limits need one entry per state");
    if (settings.what_if_horizon < 0) throw DataError("advisor: what-if horizon must be nonnegative");
    settings.mpc.validate();
    if (settings.mpc.input_dim() != nc || settings.mpc.state_dim() != ns)
        throw DataError("advisor: MPC config does not match the model");

    const Coordinates coords{settings.scaler};
    MpcConfig mpc = settings.mpc;
    mpc.u_min = coords.input_in(settings.mpc.u_min);
    mpc.u_max = coords.input_in(settings.mpc.u_max);
    const VectorXd x_ref = constant_reference(coords.state_in(settings.setpoint), mpc.prediction_horizon);

    OnlineIdentifier ident(model0, dict, settings.ident);
    AdvisorRun run;
    run.summary.batch_id = batch.batch_id;
    run.summary.source = batch.source;

    for (std::size_t t = 0; t + 1 < batch.rows(); ++t) {
        if (!batch.valid[t] || !batch.valid[t + 1]) continue;
        const auto c = static_cast<Eigen::Index>(t);
        AdvisorStep step;
        step.t_index = static_cast<long>(t);
        step.x_actual = batch.states.col(c);
        step.u_actual = batch.inputs.col(c);
        step.x_actual_next = batch.states.col(c + 1);

        const VectorXd x_m = coords.state_in(step.x_actual);
        const VectorXd u_m = coords.input_in(step.u_actual);
        const bool has_prev = t > 0 && batch.valid[t - 1];
        const VectorXd u_prev = coords.input_in(has_prev ? VectorXd(batch.inputs.col(c - 1)) : step.u_actual);
        const LiftedModel& model = ident.model();
        step.conf = confidence(model);

        if (settings.generate_advice) {
            try {
                const Corridor raw = advisor_corridor(step.u_actual, settings.u_range);
                const ControlResult res =
                    control_step(model, dict, FixedCorridorSource{coords.corridor_in(raw)}, x_m, x_ref, u_prev, mpc, u_m);
                const auto& diag = res.diagnostics;
                step.corridor = coords.corridor_out(diag.corridor);
                step.qp_status = diag.qp_status;
                step.fallback = diag.fallback;
                step.u_mpc = coords.input_out(res.u_apply);
                const VectorXd pred = predict_one(model, dict, x_m, res.u_apply);
                if (!pred.allFinite()) throw NumericError("non-finite one-step prediction");
                step.x_pred_next = coords.state_out(pred);
                if (settings.what_if_horizon > 0) {
                    const MatrixXd roll =
                        what_if_rollout(model, dict, mpc, x_m, diag.U, res.u_apply, settings.what_if_horizon);
                    step.what_if.resize(ns, roll.cols());
                    for (Eigen::Index j = 0; j < roll.cols(); ++j) step.what_if.col(j) = coords.state_out(roll.col(j));
                }
            } catch (const std::exception& e) {
                step.error = e.what();
                step.x_pred_next.resize(0);
            }
        }

        if (settings.update_model) {
            try {
                const StepReport rep = ident.update({x_m, u_m, coords.state_in(step.x_actual_next)});
                step.lambda_used = rep.lambda_used;
                step.reset = rep.reset;
            } catch (const std::exception& e) {
                if (step.error.empty()) step.error = std::string("model update: ") + e.what();
            }
        } else {
            step.lambda_used = model.lambda_f;
        }

        ++run.summary.steps;
        if (step.has_prediction()) ++run.summary.predictions;
        if (!step.error.empty()) ++run.summary.errors;
        if (step.fallback) ++run.summary.fallbacks;
        if (step.reset) ++run.summary.resets;
        run.steps.push_back(std::move(step));
    }
    run.final_model = ident.model();
    run.summary.final_confidence = confidence(run.final_model);

    const BatchSeries series = run.comparison_series();
    for (int i = 0; i < ns; ++i) {
        ChannelOutcome out;
        out.channel = i < static_cast<int>(batch.state_names.size()) ? batch.state_names[static_cast<std::size_t>(i)]
                                                                     : "x" + std::to_string(i + 1);
        const VectorXd h = series.historical.row(i).transpose();
        const VectorXd p = series.predicted.row(i).transpose();
        if (h.size() > 0) {
            out.mad_actual = mean_abs_deviation({h.data(), static_cast<std::size_t>(h.size())}, settings.setpoint[i]);
            out.mad_pred = mean_abs_deviation({p.data(), static_cast<std::size_t>(p.size())}, settings.setpoint[i]);
        }
        if (!settings.limits.empty() && h.size() >= 2) {
            // A channel whose spread overflows gets no capability figure rather than aborting the batch.
            const SpecLimits& lim = settings.limits[static_cast<std::size_t>(i)];
            auto capability = [&](const VectorXd& v) -> std::optional<CpkResult> {
                try {
                    return cpk({v.data(), static_cast<std::size_t>(v.size())}, lim);
                } catch (const NumericError&) {
                    return std::nullopt;
                }
            };
            out.cpk_actual = capability(h);
            out.cpk_pred = capability(p);
        }
        run.summary.channels.push_back(std::move(out));
    }
    return run;
}

BatchSeries AdvisorRun::comparison_series() const {
    BatchSeries s;
    s.batch_id = summary.batch_id;
    const Eigen::Index ns = steps.empty() ? 0 : steps.front().x_actual.size();
    Eigen::Index n = 0;
    for (const auto& st : steps)
        if (st.has_prediction()) ++n;
    s.historical.resize(ns, n);
    s.predicted.resize(ns, n);
    Eigen::Index k = 0;
    for (const auto& st : steps) {
        if (!st.has_prediction()) continue;
        s.historical.col(k) = st.x_actual_next;
        s.predicted.col(k) = st.x_pred_next;
        ++k;
    }
    return s;
}

nlohmann::json AdvisorSummary::to_json() const {
    nlohmann::json j;
    j["batch"] = batch_id;
    j["source"] = source;
    j["steps"] = steps;
    j["predictions"] = predictions;
    j["errors"] = errors;
    j["fallbacks"] = fallbacks;
    j["resets"] = resets;
    j["final_confidence"] = final_confidence;
    j["channels"] = nlohmann::json::array();
    for (const auto& c : channels) {
        nlohmann::json o{{"channel", c.channel}, {"mad_actual", c.mad_actual}, {"mad_pred", c.mad_pred}};
        auto cpk_json = [](const std::optional<CpkResult>& r) -> nlohmann::json {
            if (!r) return nullptr;
            return {{"value", json_number(r->value)},
                    {"mean", r->mean},
                    {"stddev", r->stddev},
                    {"zero_variance", r->zero_variance}};
        };
        o["cpk_actual"] = cpk_json(c.cpk_actual);
        o["cpk_pred"] = cpk_json(c.cpk_pred);
        j["channels"].push_back(std::move(o));
    }
    return j;
}

nlohmann::json step_to_json(const AdvisorStep& s) {
    nlohmann::json j;
    j["t"] = s.t_index;
    j["x_actual"] = to_json_vector(s.x_actual);
    j["u_actual"] = to_json_vector(s.u_actual);
    j["x_actual_next"] = to_json_vector(s.x_actual_next);
    j["u_mpc"] = to_json_vector(s.u_mpc);
    j["x_pred_next"] = to_json_vector(s.x_pred_next);
    j["conf"] = s.conf;
    if (s.corridor.lower.size() > 0)
        j["corridor"] = {{"u_ref", to_json_vector(s.corridor.u_ref)},
                         {"lower", to_json_vector(s.corridor.lower)},
                         {"upper", to_json_vector(s.corridor.upper)}};
    j["qp_status"] = to_string(s.qp_status);
    j["fallback"] = s.fallback;
    j["lambda_f"] = s.lambda_used;
    j["reset"] = s.reset;
    if (!s.error.empty()) j["error"] = s.error;
    if (s.what_if.size() > 0) j["what_if"] = to_json_matrix(s.what_if.transpose());
    return j;
}

void write_step_stream(std::ostream& out, const std::vector<AdvisorStep>& steps) {
    for (const auto& s : steps) out << step_to_json(s).dump() << '\n';
}

}  // namespace akmpc
