#include "akmpc/plant.hpp"

#include <algorithm>

#include "akmpc/errors.hpp"

namespace akmpc {

namespace {

constexpr double kWaterGain = 0.12;
constexpr double kEvaporation = 0.05;
constexpr double kDriftScale = 1.2;

}  // namespace

std::string_view to_string(PlantKind kind) {
    switch (kind) {
        case PlantKind::Linear: return "linear";
        case PlantKind::Bilinear: return "bilinear";
        case PlantKind::Drifting: return "drifting";
    }
    return "unknown";
}

PlantKind plant_kind_from_string(std::string_view name) {
    if (name == "linear") return PlantKind::Linear;
    if (name == "bilinear") return PlantKind::Bilinear;
    if (name == "drifting") return PlantKind::Drifting;
    throw DataError("unknown plant '" + std::string(name) + "' (expected linear, bilinear or drifting)");
}

double DriftSchedule::factor(long step) const {
    if (step < start_step) return 1.0;
    if (ramp_steps <= 0 || step >= start_step + ramp_steps) return scale;
    const double t = static_cast<double>(step - start_step) / static_cast<double>(ramp_steps);
    return 1.0 + t * (scale - 1.0);
}

SyntheticPlant::SyntheticPlant(PlantKind kind, double noise_std)
    : kind_(kind), noise_std_(Eigen::VectorXd::Constant(3, noise_std)) {
    if (noise_std < 0.0) throw DataError("plant: noise_std must be nonnegative");
}

SyntheticPlant SyntheticPlant::linear(double noise_std) { return SyntheticPlant(PlantKind::Linear, noise_std); }

SyntheticPlant SyntheticPlant::bilinear(double noise_std) { return SyntheticPlant(PlantKind::Bilinear, noise_std); }

SyntheticPlant SyntheticPlant::drifting(long drift_start, long ramp_steps, double noise_std) {
    SyntheticPlant p(PlantKind::Drifting, noise_std);
    p.drift_ = DriftSchedule{drift_start, ramp_steps, kDriftScale};
    return p;
}

SyntheticPlant SyntheticPlant::by_name(std::string_view name, double noise_std, long drift_start) {
    switch (plant_kind_from_string(name)) {
        case PlantKind::Linear: return linear(noise_std);
        case PlantKind::Bilinear: return bilinear(noise_std);
        case PlantKind::Drifting: return drifting(drift_start, 0, noise_std);
    }
    throw DataError("unknown plant");
}

void SyntheticPlant::set_noise_std(Eigen::VectorXd s) {
    if (s.size() != state_dim() || !(s.array() >= 0.0).all())
        throw DataError("plant: noise_std must be a nonnegative vector of length 3");
    noise_std_ = std::move(s);
}

Eigen::Matrix3d SyntheticPlant::linear_A() {
    Eigen::Matrix3d a;
    a << 0.90, 0.05, 0.00,
         0.02, 0.85, 0.05,
         0.00, 0.10, 0.80;
    return a;
}

Eigen::Matrix<double, 3, 2> SyntheticPlant::linear_B() {
    Eigen::Matrix<double, 3, 2> b;
    b << 0.10, 0.00,
         0.05, 0.10,
         0.00, 0.05;
    return b;
}

Eigen::VectorXd SyntheticPlant::map(const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& u, long k) const {
    if (x.size() != state_dim() || u.size() != input_dim()) throw DataError("plant: state or input has wrong length");
    if (kind_ == PlantKind::Linear) return linear_A() * x + linear_B() * u;

    const double drift = kind_ == PlantKind::Drifting ? drift_.factor(k) : 1.0;
    const double water_gain = kWaterGain * (2.0 - drift);
    const double evaporation = kEvaporation * drift;
    Eigen::VectorXd next(3);
    next[0] = 0.9 * x[0] + 0.1 * x[0] * u[0] + 0.05 * (1.0 - x[0]);
    next[1] = 0.8 * x[1] + water_gain * u[1] + 0.1 * u[2] + 0.03 * u[0] - evaporation * x[0] * x[2];
    next[2] = 0.05 + 0.7 * x[2] + 0.2 * x[0] + 0.1 * u[0] - 0.05 * x[1] * x[1];
    return next;
}

Eigen::VectorXd SyntheticPlant::step(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& u, long k, std::mt19937_64& rng) const {
    Eigen::VectorXd next = map(x, u, k);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < state_dim(); ++i) {
        const double z = gauss(rng);
        next[i] += noise_std_[i] * z;
    }
    return next;
}

Eigen::VectorXd SyntheticPlant::nominal_state() const {
    if (kind_ == PlantKind::Linear) {
        const Eigen::Matrix3d a = linear_A();
        return (Eigen::Matrix3d::Identity() - a).lu().solve(linear_B() * nominal_input());
    }
    return Eigen::VectorXd::Ones(3);
}

Eigen::VectorXd SyntheticPlant::nominal_input() const {
    if (kind_ == PlantKind::Linear) return Eigen::Vector2d(0.5, 0.5);
    return Eigen::VectorXd::Ones(3);
}

std::vector<bool> SyntheticPlant::manipulated() const {
    if (kind_ == PlantKind::Linear) return {true, true};
    return {true, true, false};
}

std::vector<std::string> SyntheticPlant::state_names() const {
    return {"Furnace Temperature", "Outlet Moisture", "Outlet Temperature"};
}

std::vector<std::string> SyntheticPlant::input_names() const {
    if (kind_ == PlantKind::Linear) return {"Steam Valve Opening", "Water Flow"};
    return {"Steam Valve Opening", "Water Flow", "Inlet Moisture"};
}

nlohmann::json SyntheticPlant::describe() const {
    nlohmann::json j;
    j["kind"] = std::string(to_string(kind_));
    j["state_names"] = state_names();
    j["input_names"] = input_names();
    j["manipulated"] = manipulated();
    j["noise_std"] = std::vector<double>(noise_std_.data(), noise_std_.data() + noise_std_.size());
    if (kind_ == PlantKind::Linear) {
        const Eigen::Matrix3d a = linear_A();
        const auto b = linear_B();
        j["A"] = {{a(0, 0), a(0, 1), a(0, 2)}, {a(1, 0), a(1, 1), a(1, 2)}, {a(2, 0), a(2, 1), a(2, 2)}};
        j["B"] = {{b(0, 0), b(0, 1)}, {b(1, 0), b(1, 1)}, {b(2, 0), b(2, 1)}};
    } else {
        j["equations"] = {
            "x1+ = 0.9 x1 + 0.1 x1 u1 + 0.05 (1 - x1)",
            "x2+ = 0.8 x2 + g_w u2 + 0.1 u3 + 0.03 u1 - c_e x1 x3",
            "x3+ = 0.05 + 0.7 x3 + 0.2 x1 + 0.1 u1 - 0.05 x2^2",
        };
        j["water_gain"] = kWaterGain;
        j["evaporation"] = kEvaporation;
        if (kind_ == PlantKind::Drifting) {
            j["drift"] = {{"start_step", drift_.start_step},
                          {"ramp_steps", drift_.ramp_steps},
                          {"scale", drift_.scale},
                          {"effect", "water_gain * (2 - scale), evaporation * scale"}};
        }
    }
    return j;
}

}  // namespace akmpc
