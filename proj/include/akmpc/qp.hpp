#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace akmpc {

enum class QpStatus { Optimal, MaxIter, Infeasible };

std::string_view to_string(QpStatus status);

/// Result of a dense strictly convex QP  min 1/2 u'Hu + f'u  s.t.  G u <= h.
struct QpSolution {
    Eigen::VectorXd u_star;
    double cost = 0.0;
    /// Rows of G in the final working set, ascending.
    std::vector<int> active_set;
    /// One multiplier per row of G; zero for rows outside the working set.
    Eigen::VectorXd multipliers;
    int iterations = 0;
    QpStatus status = QpStatus::Infeasible;
    /// Objective after each outer iteration.
    std::vector<double> cost_history;
    /// A big-M phase-1 problem was solved to find the starting point.
    bool used_phase1 = false;
};

struct QpOptions {
    /// Outer iteration cap; 0 selects 50 * dim (at least 50).
    int max_iterations = 0;
    /// Allowed constraint violation for a point to count as feasible.
    double feasibility_tol = 1e-9;
    /// Multipliers above -multiplier_tol count as nonnegative.
    double multiplier_tol = 1e-12;
};

/**
 * Primal active-set solver for a strictly convex QP.
 *
 * Starts from a feasible point (the warm start if feasible, otherwise a
 * big-M phase-1 problem), solves the equality-constrained subproblem of the
 * current working set through a Cholesky factor of H and the Schur
 * complement, and adds blocking rows (lowest index on ties) or drops the row
 * with the most negative multiplier until the KKT conditions hold.
 *
 * Throws DataError when H is not symmetric positive definite or shapes disagree.
 */
QpSolution solve_qp(const Eigen::Ref<const Eigen::MatrixXd>& H, const Eigen::Ref<const Eigen::VectorXd>& f,
                    const Eigen::Ref<const Eigen::MatrixXd>& G, const Eigen::Ref<const Eigen::VectorXd>& h,
                    const std::optional<Eigen::VectorXd>& warm_start = std::nullopt, const QpOptions& options = {});

/// ||H u + f + G' mu||_inf for a candidate primal/dual pair.
double kkt_stationarity(const Eigen::Ref<const Eigen::MatrixXd>& H, const Eigen::Ref<const Eigen::VectorXd>& f,
                        const Eigen::Ref<const Eigen::MatrixXd>& G, const QpSolution& sol);

}  // namespace akmpc
