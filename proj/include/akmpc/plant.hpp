#pragma once

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace akmpc {

enum class PlantKind { Linear, Bilinear, Drifting };

std::string_view to_string(PlantKind kind);
PlantKind plant_kind_from_string(std::string_view name);

/// Ramp of the drifting coefficients: scale 1 before start, `scale` after start + ramp.
struct DriftSchedule {
    long start_step = 0;
    long ramp_steps = 0;
    double scale = 1.0;

    double factor(long step) const;
};

/**
 * Benchmark plants with known ground truth.
 *
 * Linear (3 states, 2 inputs):   x+ = A x + B u.
 *
 * Bilinear (3 states, 3 inputs; u = [steam valve, water flow, inlet moisture]):
 *   x1+ = 0.9 x1 + 0.1 x1 u1 + 0.05 (1 - x1)
 *   x2+ = 0.8 x2 + 0.12 u2 + 0.1 u3 + 0.03 u1 - 0.05 x1 x3
 *   x3+ = 0.05 + 0.7 x3 + 0.2 x1 + 0.1 u1 - 0.05 x2^2
 * States mimic furnace temperature, outlet moisture and outlet temperature in
 * normalized units with the nominal operating point x = u = (1, 1, 1).
 *
 * Drifting: the bilinear plant whose water-uptake gain (0.12) falls and whose
 * evaporation coefficient (0.05) rises by 20% according to the drift schedule.
 */
class SyntheticPlant {
public:
    static SyntheticPlant linear(double noise_std = 0.0);
    static SyntheticPlant bilinear(double noise_std = 0.0);
    static SyntheticPlant drifting(long drift_start, long ramp_steps = 0, double noise_std = 0.0);
    static SyntheticPlant by_name(std::string_view name, double noise_std, long drift_start = 0);

    PlantKind kind() const noexcept { return kind_; }
    int state_dim() const noexcept { return 3; }
    int input_dim() const noexcept { return kind_ == PlantKind::Linear ? 2 : 3; }

    /// Noise-free map at step index k (k selects the drift factor).
    Eigen::VectorXd map(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& u,
                        long k = 0) const;
    /// map() plus Gaussian noise drawn from rng.
    Eigen::VectorXd step(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& u,
                         long k, std::mt19937_64& rng) const;

    const Eigen::VectorXd& noise_std() const noexcept { return noise_std_; }
    void set_noise_std(Eigen::VectorXd s);
    const DriftSchedule& drift() const noexcept { return drift_; }

    /// Nominal operating point (an equilibrium of the noise-free map before drift).
    Eigen::VectorXd nominal_state() const;
    Eigen::VectorXd nominal_input() const;
    /// false marks measured disturbance channels.
    std::vector<bool> manipulated() const;
    std::vector<std::string> state_names() const;
    std::vector<std::string> input_names() const;

    /// Linear plant matrices.
    static Eigen::Matrix3d linear_A();
    static Eigen::Matrix<double, 3, 2> linear_B();

    /// Coefficients and metadata in the configuration document format.
    nlohmann::json describe() const;

private:
    SyntheticPlant(PlantKind kind, double noise_std);

    PlantKind kind_;
    Eigen::VectorXd noise_std_;
    DriftSchedule drift_;
};

}  // namespace akmpc
