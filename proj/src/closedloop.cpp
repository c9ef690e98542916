#include "akmpc/closedloop.hpp"

#include <random>

#include "akmpc/config.hpp"
#include "akmpc/errors.hpp"
#include "akmpc/model_io.hpp"

namespace akmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SyntheticPlant make_plant(const ClosedLoopOptions& o) {
    switch (o.plant) {
        case PlantKind::Linear: return SyntheticPlant::linear(o.noise_std);
        case PlantKind::Bilinear: return SyntheticPlant::bilinear(o.noise_std);
        case PlantKind::Drifting: return SyntheticPlant::drifting(o.drift_start, o.drift_ramp, o.noise_std);
    }
    throw DataError("closed loop: unknown plant");
}

VectorXd broadcast(const std::vector<double>& v, int n, const char* what) {
    if (v.size() == 1) return VectorXd::Constant(n, v.front());
    if (static_cast<int>(v.size()) != n)
        throw DataError(std::string("config: ") + what + " needs 1 or " + std::to_string(n) + " entries");
    return Eigen::Map<const VectorXd>(v.data(), n);
}

}  // namespace

double tracking_mse(const MatrixXd& states, const VectorXd& setpoint, Eigen::Index begin, Eigen::Index end) {
    if (begin < 0 || end > states.cols() || begin >= end) throw DataError("tracking_mse: empty window");
    double s = 0.0;
    for (Eigen::Index k = begin; k < end; ++k) s += (states.col(k) - setpoint).squaredNorm();
    return s / static_cast<double>(end - begin);
}

ClosedLoopResult run_closed_loop(const ClosedLoopOptions& o) {
    if (o.steps < 2 || o.train_steps < 2) throw DataError("closed loop: need at least two steps");
    const SyntheticPlant plant = make_plant(o);
    const int ns = plant.state_dim();
    const int nc = plant.input_dim();
    const Dictionary dict = Dictionary::polynomial(ns, o.dictionary_degree);
    MpcConfig mpc = o.mpc;
    mpc.manipulated = plant.manipulated();
    mpc.validate();
    if (mpc.input_dim() != nc || mpc.state_dim() != ns) throw DataError("closed loop: MPC weights do not fit the plant");

    std::seed_seq train_seed{o.seed, std::uint64_t{1}};
    std::seed_seq run_seed{o.seed, std::uint64_t{2}};
    std::mt19937_64 train_rng(train_seed);
    std::mt19937_64 run_rng(run_seed);

    // Open-loop excitation before time zero, so the drift has not started yet.
    const VectorXd u_nom = plant.nominal_input();
    std::vector<Snapshot> train;
    train.reserve(static_cast<std::size_t>(o.train_steps));
    MatrixXd hist_psi(dict.lifted_dim(), o.train_steps);
    MatrixXd hist_u(nc, o.train_steps);
    std::uniform_real_distribution<double> excite(-1.0, 1.0);
    VectorXd x = plant.nominal_state();
    for (int i = 0; i < o.train_steps; ++i) {
        VectorXd u = u_nom;
        for (int j = 0; j < nc; ++j) u[j] += o.train_amplitude * excite(train_rng);
        u = u.cwiseMax(mpc.u_min).cwiseMin(mpc.u_max);
        const VectorXd next = plant.step(x, u, -1L - (o.train_steps - i), train_rng);
        train.push_back({x, u, next});
        hist_psi.col(i) = dict.lift(x);
        hist_u.col(i) = u;
        x = next;
    }
    LiftedModel model0 = batch_fit(train, dict, o.fit);
    model0.theta *= o.theta_scale;
    const HistoryDatabase db(hist_psi, hist_u, plant.input_names());
    CorridorConfig corridor = o.corridor;
    corridor.sigma_d2 = o.sigma_d2 ? *o.sigma_d2 : db.median_kth_distance(corridor.k);
    if (!(corridor.sigma_d2 > 0.0)) corridor.sigma_d2 = 1.0;
    corridor.validate();

    ClosedLoopResult r;
    r.setpoint = o.setpoint.size() > 0 ? o.setpoint : plant.nominal_state();
    if (r.setpoint.size() != ns) throw DataError("closed loop: setpoint has wrong length");
    r.box_min = mpc.u_min;
    r.box_max = mpc.u_max;
    r.states.resize(ns, o.steps + 1);
    r.inputs.resize(nc, o.steps);
    r.lower.resize(nc, o.steps);
    r.upper.resize(nc, o.steps);
    r.confidence.resize(o.steps);
    r.fallback.assign(static_cast<std::size_t>(o.steps), false);

    OnlineIdentifier ident(model0, dict, o.ident);
    const VectorXd x_ref = constant_reference(r.setpoint, mpc.prediction_horizon);
    const HpcCorridorSource source{&db, corridor};
    x = plant.nominal_state();
    VectorXd u_prev = u_nom;
    r.states.col(0) = x;
    for (int k = 0; k < o.steps; ++k) {
        const ControlResult res = control_step(ident.model(), dict, source, x, x_ref, u_prev, mpc, u_nom);
        const VectorXd& u = res.u_apply;
        const VectorXd next = plant.step(x, u, k, run_rng);
        if (o.adapt) {
            const StepReport rep = ident.update({x, u, next});
            if (rep.reset) ++r.resets;
        }
        r.inputs.col(k) = u;
        r.lower.col(k) = res.diagnostics.corridor.lower;
        r.upper.col(k) = res.diagnostics.corridor.upper;
        r.confidence[k] = res.diagnostics.confidence;
        r.fallback[static_cast<std::size_t>(k)] = res.diagnostics.fallback;
        r.states.col(k + 1) = next;
        u_prev = u;
        x = next;
    }
    r.mse_all = tracking_mse(r.states, r.setpoint, 1, o.steps + 1);
    r.mse_post = tracking_mse(r.states, r.setpoint, o.steps / 2 + 1, o.steps + 1);
    return r;
}

nlohmann::json ClosedLoopResult::to_json() const {
    nlohmann::json j;
    j["setpoint"] = to_json_vector(setpoint);
    j["box_min"] = to_json_vector(box_min);
    j["box_max"] = to_json_vector(box_max);
    j["mse_post"] = mse_post;
    j["mse_all"] = mse_all;
    j["resets"] = resets;
    j["fallbacks"] = std::count(fallback.begin(), fallback.end(), true);
    j["states"] = to_json_matrix(states.transpose());
    j["inputs"] = to_json_matrix(inputs.transpose());
    j["lower"] = to_json_matrix(lower.transpose());
    j["upper"] = to_json_matrix(upper.transpose());
    j["confidence"] = to_json_vector(confidence);
    return j;
}

ClosedLoopOptions closed_loop_options(const RunConfig& cfg) {
    const auto& c = cfg.closedloop;
    ClosedLoopOptions o;
    o.plant = plant_kind_from_string(c.plant);
    o.steps = c.steps;
    o.train_steps = c.train_steps;
    o.train_amplitude = c.train_amplitude;
    o.noise_std = c.noise_std;
    o.drift_start = c.drift_start;
    o.drift_ramp = c.drift_ramp;
    o.adapt = c.adapt;
    o.dictionary_degree = cfg.dictionary.degree;
    o.fit = cfg.fit_options();
    o.ident = cfg.online_ident();
    o.seed = cfg.seed;
    o.sigma_d2 = cfg.hpc.sigma_d2;

    const SyntheticPlant plant = make_plant(o);
    const int ns = plant.state_dim();
    const int nc = plant.input_dim();
    if (!c.setpoint.empty()) o.setpoint = broadcast(c.setpoint, ns, "closedloop.setpoint");
    o.mpc.prediction_horizon = cfg.mpc.prediction_horizon;
    o.mpc.control_horizon = cfg.mpc.control_horizon;
    o.mpc.input_extension = input_extension_from_string(cfg.mpc.input_extension);
    o.mpc.Q = broadcast(c.q_diag, ns, "closedloop.q_diag").asDiagonal();
    o.mpc.R = broadcast(c.r_diag, nc, "closedloop.r_diag").asDiagonal();
    o.mpc.S = broadcast(c.s_diag, nc, "closedloop.s_diag").asDiagonal();
    o.mpc.u_min = broadcast(c.u_min, nc, "closedloop.u_min");
    o.mpc.u_max = broadcast(c.u_max, nc, "closedloop.u_max");
    o.mpc.manipulated = plant.manipulated();
    o.corridor = cfg.corridor();
    o.corridor.alpha_base = c.alpha_base;
    o.corridor.beta_adapt = c.beta_adapt;
    return o;
}

}  // namespace akmpc
