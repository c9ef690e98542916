#include "akmpc/config.hpp"

#include <set>

#include "akmpc/errors.hpp"
#include "akmpc/model_io.hpp"

namespace akmpc {

using nlohmann::json;

namespace {

/// Reads keys of one JSON object and rejects the ones nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw DataError("config: '" + path_ + "' must be an object");
    }

    template <class T>
    void operator()(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            if constexpr (std::is_same_v<T, std::optional<double>>) {
                out = j_.at(key).is_null() ? std::nullopt : std::optional<double>(j_.at(key).get<double>());
            } else {
                out = j_.at(key).get<T>();
            }
        } catch (const json::exception&) {
            throw DataError("config: bad value for '" + path_ + key + "'");
        }
    }

    template <class S, class F>
    void section(const char* key, S& s, F&& visit) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        Reader sub(j_.at(key), path_ + key + ".");
        visit(s, sub);
        sub.finish();
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) throw DataError("config: unknown key '" + path_ + item.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

class Writer {
public:
    explicit Writer(json& j) : j_(j) { j_ = json::object(); }

    template <class T>
    void operator()(const char* key, const T& value) {
        if constexpr (std::is_same_v<T, std::optional<double>>) {
            j_[key] = value ? json(*value) : json(nullptr);
        } else {
            j_[key] = value;
        }
    }

    template <class S, class F>
    void section(const char* key, S& s, F&& visit) {
        json sub;
        Writer w(sub);
        visit(s, w);
        j_[key] = std::move(sub);
    }

private:
    json& j_;
};

template <class S, class V>
void visit_ident(S& s, V& v) {
    v("lambda_f", s.lambda_f);
    v("lambda_min", s.lambda_min);
    v("lambda_max", s.lambda_max);
    v("lambda_reg", s.lambda_reg);
    v("p0", s.p0);
    v("p0_delta", s.p0_delta);
    v("adapt_forgetting", s.adapt_forgetting);
    v("smoothing", s.smoothing);
    v("high_factor", s.high_factor);
    v("low_factor", s.low_factor);
    v("median_window", s.median_window);
    v("reset_covariance", s.reset_covariance);
    v("reset_trace_factor", s.reset_trace_factor);
    v("reset_eps_floor", s.reset_eps_floor);
    v("normalize", s.normalize);
}

template <class S, class V>
void visit_hpc(S& s, V& v) {
    v("k", s.k);
    v("sigma_d2", s.sigma_d2);
    v("alpha_base", s.alpha_base);
    v("beta_adapt", s.beta_adapt);
    v("delta_abs", s.delta_abs);
    v("min_batch_cpk", s.min_batch_cpk);
}

template <class S, class V>
void visit_mpc(S& s, V& v) {
    v("prediction_horizon", s.prediction_horizon);
    v("control_horizon", s.control_horizon);
    v("q_diag", s.q_diag);
    v("r_diag", s.r_diag);
    v("s_diag", s.s_diag);
    v("input_extension", s.input_extension);
    v("manipulated", s.manipulated);
    v("u_min", s.u_min);
    v("u_max", s.u_max);
}

template <class S, class V>
void visit_ingest(S& s, V& v) {
    v("state_names", s.state_names);
    v("input_names", s.input_names);
    v("reference_channel", s.reference_channel);
    v("time_suffix", s.time_suffix);
    v("min_rows", s.min_rows);
    v("max_gap", s.max_gap);
    v("sampling_period_s", s.sampling_period_s);
}

template <class S, class V>
void visit_advisor(S& s, V& v) {
    v("setpoints", s.setpoints);
    v("lsl", s.lsl);
    v("usl", s.usl);
    v("primary_channel", s.primary_channel);
    v("carry_over", s.carry_over);
    v("what_if_horizon", s.what_if_horizon);
}

template <class S, class V>
void visit_closedloop(S& s, V& v) {
    v("plant", s.plant);
    v("steps", s.steps);
    v("train_steps", s.train_steps);
    v("train_amplitude", s.train_amplitude);
    v("noise_std", s.noise_std);
    v("drift_start", s.drift_start);
    v("drift_ramp", s.drift_ramp);
    v("adapt", s.adapt);
    v("setpoint", s.setpoint);
    v("q_diag", s.q_diag);
    v("r_diag", s.r_diag);
    v("s_diag", s.s_diag);
    v("u_min", s.u_min);
    v("u_max", s.u_max);
    v("alpha_base", s.alpha_base);
    v("beta_adapt", s.beta_adapt);
}

template <class C, class V>
void visit_config(C& c, V& v) {
    v("seed", c.seed);
    v.section("dictionary", c.dictionary, [](auto& s, auto& w) { w("degree", s.degree); });
    v.section("ident", c.ident, [](auto& s, auto& w) { visit_ident(s, w); });
    v.section("hpc", c.hpc, [](auto& s, auto& w) { visit_hpc(s, w); });
    v.section("mpc", c.mpc, [](auto& s, auto& w) { visit_mpc(s, w); });
    v.section("envelope", c.envelope, [](auto& s, auto& w) {
        w("coverage", s.coverage);
        w("margin", s.margin);
    });
    v.section("ingest", c.ingest, [](auto& s, auto& w) { visit_ingest(s, w); });
    v.section("advisor", c.advisor, [](auto& s, auto& w) { visit_advisor(s, w); });
    v.section("closedloop", c.closedloop, [](auto& s, auto& w) { visit_closedloop(s, w); });
}

Eigen::VectorXd broadcast(const std::vector<double>& v, int n, const std::string& what) {
    if (v.size() == 1) return Eigen::VectorXd::Constant(n, v.front());
    if (static_cast<int>(v.size()) != n)
        throw DataError("config: " + what + " needs 1 or " + std::to_string(n) + " entries, got " +
                        std::to_string(v.size()));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

}  // namespace

CovarianceInit covariance_init_from_string(const std::string& name) {
    if (name == "ridge_prior") return CovarianceInit::RidgePrior;
    if (name == "posterior") return CovarianceInit::Posterior;
    if (name == "delta") return CovarianceInit::Delta;
    throw DataError("config: unknown ident.p0 '" + name + "' (ridge_prior, posterior, delta)");
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    Reader r(j, "");
    visit_config(c, r);
    r.finish();
    c.validate();
    return c;
}

json config_to_json(const RunConfig& cfg) {
    json j;
    Writer w(j);
    RunConfig copy = cfg;
    visit_config(copy, w);
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(read_json_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Schema RunConfig::schema() const {
    Schema s;
    s.state_names = ingest.state_names;
    s.input_names = ingest.input_names;
    s.reference_channel = ingest.reference_channel;
    s.time_suffix = ingest.time_suffix;
    s.min_rows = static_cast<std::size_t>(ingest.min_rows);
    s.max_gap = ingest.max_gap;
    return s;
}

BatchFitOptions RunConfig::fit_options() const {
    BatchFitOptions o;
    o.lambda_reg = ident.lambda_reg;
    o.covariance = covariance_init_from_string(ident.p0);
    o.delta = ident.p0_delta;
    o.lambda_f = ident.lambda_f;
    return o;
}

OnlineIdentConfig RunConfig::online_ident() const {
    OnlineIdentConfig o;
    o.adapt_forgetting = ident.adapt_forgetting;
    o.reset_covariance = ident.reset_covariance;
    o.forgetting.lambda_min = ident.lambda_min;
    o.forgetting.lambda_max = ident.lambda_max;
    o.forgetting.smoothing = ident.smoothing;
    o.forgetting.high_factor = ident.high_factor;
    o.forgetting.low_factor = ident.low_factor;
    o.forgetting.median_window = ident.median_window;
    o.reset.trace_factor = ident.reset_trace_factor;
    o.reset.eps_floor = ident.reset_eps_floor;
    return o;
}

CorridorConfig RunConfig::corridor() const {
    CorridorConfig c;
    c.k = hpc.k;
    c.sigma_d2 = hpc.sigma_d2.value_or(1.0);
    c.alpha_base = hpc.alpha_base;
    c.beta_adapt = hpc.beta_adapt;
    c.delta_abs = Eigen::Map<const Eigen::VectorXd>(hpc.delta_abs.data(), static_cast<Eigen::Index>(hpc.delta_abs.size()));
    return c;
}

MpcConfig RunConfig::mpc_config(int n_c, const std::optional<InputEnvelope>& env) const {
    const int n_s = static_cast<int>(mpc.q_diag.size());
    MpcConfig m;
    m.prediction_horizon = mpc.prediction_horizon;
    m.control_horizon = mpc.control_horizon;
    m.Q = broadcast(mpc.q_diag, n_s, "mpc.q_diag").asDiagonal();
    m.R = broadcast(mpc.r_diag, n_c, "mpc.r_diag").asDiagonal();
    m.S = broadcast(mpc.s_diag, n_c, "mpc.s_diag").asDiagonal();
    m.input_extension = input_extension_from_string(mpc.input_extension);
    if (mpc.manipulated.empty()) {
        m.manipulated.assign(static_cast<std::size_t>(n_c), true);
    } else if (static_cast<int>(mpc.manipulated.size()) == n_c) {
        m.manipulated = mpc.manipulated;
    } else {
        throw DataError("config: mpc.manipulated needs " + std::to_string(n_c) + " entries");
    }
    if (!mpc.u_min.empty() || !mpc.u_max.empty()) {
        m.u_min = broadcast(mpc.u_min, n_c, "mpc.u_min");
        m.u_max = broadcast(mpc.u_max, n_c, "mpc.u_max");
    } else if (env) {
        m.u_min = env->u_min;
        m.u_max = env->u_max;
    } else {
        throw DataError("config: no input bounds (set mpc.u_min/u_max or fit a model with an envelope)");
    }
    m.validate();
    return m;
}

std::vector<SpecLimits> RunConfig::spec_limits() const {
    if (advisor.lsl.size() != advisor.usl.size()) throw DataError("config: advisor.lsl and advisor.usl differ in length");
    std::vector<SpecLimits> out;
    for (std::size_t i = 0; i < advisor.lsl.size(); ++i) {
        out.push_back({advisor.lsl[i], advisor.usl[i]});
        out.back().validate();
    }
    return out;
}

void RunConfig::validate() const {
    if (dictionary.degree != 1 && dictionary.degree != 2) throw DataError("config: dictionary.degree must be 1 or 2");
    if (!(ident.lambda_f > 0.0 && ident.lambda_f <= 1.0)) throw DataError("config: ident.lambda_f must be in (0, 1]");
    if (!(ident.lambda_min > 0.0 && ident.lambda_min <= ident.lambda_max && ident.lambda_max <= 1.0))
        throw DataError("config: need 0 < ident.lambda_min <= ident.lambda_max <= 1");
    if (!(ident.lambda_reg >= 0.0)) throw DataError("config: ident.lambda_reg must be nonnegative");
    covariance_init_from_string(ident.p0);
    if (!(ident.p0_delta > 0.0)) throw DataError("config: ident.p0_delta must be positive");
    if (ident.median_window < 1) throw DataError("config: ident.median_window must be at least 1");
    if (hpc.sigma_d2 && !(*hpc.sigma_d2 > 0.0)) throw DataError("config: hpc.sigma_d2 must be positive");
    corridor().validate();
    if (mpc.prediction_horizon < 1 || mpc.control_horizon < 1 || mpc.control_horizon > mpc.prediction_horizon)
        throw DataError("config: need 1 <= mpc.control_horizon <= mpc.prediction_horizon");
    input_extension_from_string(mpc.input_extension);
    if (mpc.q_diag.size() != ingest.state_names.size())
        throw DataError("config: mpc.q_diag needs one entry per state channel");
    if (!(envelope.coverage > 0.0 && envelope.coverage <= 1.0) || !(envelope.margin >= 0.0))
        throw DataError("config: envelope.coverage must be in (0, 1] and envelope.margin nonnegative");
    if (ingest.min_rows < 2 || ingest.max_gap < 0) throw DataError("config: bad ingest.min_rows or ingest.max_gap");
    if (!(ingest.sampling_period_s > 0.0)) throw DataError("config: ingest.sampling_period_s must be positive");
    if (advisor.setpoints.size() != ingest.state_names.size())
        throw DataError("config: advisor.setpoints needs one entry per state channel");
    spec_limits();
    if (advisor.lsl.size() != ingest.state_names.size())
        throw DataError("config: advisor spec limits need one entry per state channel");
    if (advisor.what_if_horizon < 0) throw DataError("config: advisor.what_if_horizon must be nonnegative");
    if (closedloop.plant != "linear" && closedloop.plant != "bilinear" && closedloop.plant != "drifting")
        throw DataError("config: closedloop.plant must be linear, bilinear or drifting");
    if (closedloop.steps < 2 || closedloop.train_steps < 2) throw DataError("config: closedloop steps too small");
    if (!(closedloop.noise_std >= 0.0) || !(closedloop.train_amplitude >= 0.0))
        throw DataError("config: closedloop.noise_std and train_amplitude must be nonnegative");
}

}  // namespace akmpc
