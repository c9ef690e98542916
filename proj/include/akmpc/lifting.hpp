#pragma once

#include <vector>

#include <Eigen/Dense>

namespace akmpc {

/// Exponent tuple of one monomial observable, one entry per state component.
using Exponents = std::vector<int>;

/**
 * @brief Polynomial observable dictionary used to lift states.
 *
 * Coordinates are ordered as the raw states first, then the constant,
 * then pure squares, then cross products x_i*x_j (i < j, lexicographic).
 * Because the raw states lead, recovering a state from a lifted vector is
 * a prefix slice and the selection matrix is [I | 0].
 *
 * Immutable once built; every member function is safe to call concurrently.
 */
class Dictionary {
public:
    /// Canonical polynomial dictionary; degree must be 1 or 2.
    static Dictionary polynomial(int state_dim, int degree = 2);

    /**
     * Rebuild a dictionary from a stored exponent list (model files).
     * The list must start with the unit exponents of the raw states, hold
     * no duplicates and stay within total degree 2.
     */
    static Dictionary from_monomials(int state_dim, std::vector<Exponents> monomials);

    int state_dim() const noexcept { return state_dim_; }
    int degree() const noexcept { return degree_; }
    int lifted_dim() const noexcept { return static_cast<int>(monomials_.size()); }
    const std::vector<Exponents>& monomials() const noexcept { return monomials_; }

    /// Evaluate every observable at x. Throws DataError on non-finite input.
    Eigen::VectorXd lift(const Eigen::Ref<const Eigen::VectorXd>& x) const;

    /// Lift each column of a state matrix (state_dim x N).
    Eigen::MatrixXd lift_columns(const Eigen::Ref<const Eigen::MatrixXd>& states) const;

    /// Leading state_dim components of a lifted vector.
    Eigen::VectorXd recover(const Eigen::Ref<const Eigen::VectorXd>& psi) const;

    /// C_lift = [I | 0], state_dim x lifted_dim.
    Eigen::MatrixXd selection() const;

    bool operator==(const Dictionary& other) const = default;

private:
    Dictionary(int state_dim, int degree, std::vector<Exponents> monomials);

    int state_dim_ = 0;
    int degree_ = 0;
    std::vector<Exponents> monomials_;
};

}  // namespace akmpc
