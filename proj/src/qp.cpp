#include "akmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "akmpc/errors.hpp"

namespace akmpc {

std::string_view to_string(QpStatus status) {
    switch (status) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::MaxIter: return "max_iter";
        case QpStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Subproblem {
    VectorXd p;
    VectorXd mu;
};

MatrixXd rows_of(const Eigen::Ref<const MatrixXd>& G, const std::vector<int>& working) {
    MatrixXd a(static_cast<Eigen::Index>(working.size()), G.cols());
    for (std::size_t r = 0; r < working.size(); ++r) a.row(static_cast<Eigen::Index>(r)) = G.row(working[r]);
    return a;
}

VectorXd entries_of(const Eigen::Ref<const VectorXd>& h, const std::vector<int>& working) {
    VectorXd b(static_cast<Eigen::Index>(working.size()));
    for (std::size_t r = 0; r < working.size(); ++r) b[static_cast<Eigen::Index>(r)] = h[working[r]];
    return b;
}

// Step p minimizing 1/2 p'Hp + g'p subject to A p = 0, with multipliers mu
// satisfying H p + g + A' mu = 0.
Subproblem solve_subproblem(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& a, const VectorXd& g) {
    const VectorXd hg = llt.solve(g);
    if (a.rows() == 0) return {-hg, VectorXd()};
    const MatrixXd y = llt.matrixL().solve(a.transpose());
    const MatrixXd schur = y.transpose() * y;
    const VectorXd mu = schur.ldlt().solve(-(a * hg));
    return {-llt.solve(g + a.transpose() * mu), mu};
}

// Minimizer on the affine set A x = b, with multipliers.
Subproblem solve_on_face(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& a, const VectorXd& b, const VectorXd& f) {
    const VectorXd hf = llt.solve(f);
    if (a.rows() == 0) return {-hf, VectorXd()};
    const MatrixXd y = llt.matrixL().solve(a.transpose());
    const MatrixXd schur = y.transpose() * y;
    const VectorXd mu = schur.ldlt().solve(-(b + a * hf));
    return {-llt.solve(f + a.transpose() * mu), mu};
}

double objective(const Eigen::Ref<const MatrixXd>& H, const Eigen::Ref<const VectorXd>& f, const VectorXd& x) {
    return 0.5 * x.dot(H * x) + f.dot(x);
}

double max_violation(const Eigen::Ref<const MatrixXd>& G, const Eigen::Ref<const VectorXd>& h, const VectorXd& x) {
    if (G.rows() == 0) return 0.0;
    return (G * x - h).maxCoeff();
}

bool independent_of(const MatrixXd& basis, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    if (basis.rows() == 0) return row.norm() > 0.0;
    if (basis.rows() >= basis.cols()) return false;
    MatrixXd trial(basis.rows() + 1, basis.cols());
    trial.topRows(basis.rows()) = basis;
    trial.row(basis.rows()) = row;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(trial);
    qr.setThreshold(1e-10);
    return qr.rank() == trial.rows();
}

// Rows active at x, keeping only a linearly independent subset (index order).
std::vector<int> initial_working_set(const Eigen::Ref<const MatrixXd>& G, const Eigen::Ref<const VectorXd>& h,
                                     const VectorXd& x, double tol) {
    std::vector<int> working;
    MatrixXd basis(0, G.cols());
    const VectorXd slack = h - G * x;
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
        const double scale = 1.0 + std::abs(h[i]);
        if (slack[i] > tol * scale) continue;
        if (static_cast<Eigen::Index>(working.size()) >= G.cols()) break;
        if (independent_of(basis, G.row(i))) {
            basis.conservativeResize(basis.rows() + 1, Eigen::NoChange);
            basis.row(basis.rows() - 1) = G.row(i);
            working.push_back(static_cast<int>(i));
        }
    }
    return working;
}

QpSolution active_set(const Eigen::Ref<const MatrixXd>& H, const Eigen::LLT<MatrixXd>& llt,
                      const Eigen::Ref<const VectorXd>& f, const Eigen::Ref<const MatrixXd>& G,
                      const Eigen::Ref<const VectorXd>& h, VectorXd x, int max_iterations, const QpOptions& opt) {
    const Eigen::Index m = G.rows();
    std::vector<int> working = initial_working_set(G, h, x, opt.feasibility_tol);

    QpSolution sol;
    sol.status = QpStatus::MaxIter;
    VectorXd mu;
    // After an unblocked full step x minimizes on the current face; the next
    // step would only be rounding noise, so go straight to the multipliers.
    bool on_face_minimum = false;
    for (int iter = 1; iter <= max_iterations; ++iter) {
        sol.iterations = iter;
        const VectorXd g = H * x + f;
        const MatrixXd a = rows_of(G, working);
        const Subproblem sub = solve_subproblem(llt, a, g);
        mu = sub.mu;

        const double step_scale = std::max(1.0, x.lpNorm<Eigen::Infinity>());
        if (!sub.p.allFinite()) break;
        if (on_face_minimum || sub.p.lpNorm<Eigen::Infinity>() <= 1e-12 * step_scale) {
            if (working.empty()) {
                sol.status = QpStatus::Optimal;
                sol.cost_history.push_back(objective(H, f, x));
                break;
            }
            Eigen::Index worst = 0;
            const double most_negative = mu.minCoeff(&worst);
            const double mu_scale = std::max(1.0, mu.lpNorm<Eigen::Infinity>());
            if (most_negative >= -opt.multiplier_tol * mu_scale) {
                sol.status = QpStatus::Optimal;
                sol.cost_history.push_back(objective(H, f, x));
                break;
            }
            working.erase(working.begin() + worst);
            on_face_minimum = false;
        } else {
            std::vector<std::pair<double, int>> candidates;
            for (Eigen::Index i = 0; i < m; ++i) {
                if (std::find(working.begin(), working.end(), static_cast<int>(i)) != working.end()) continue;
                const double ap = G.row(i).dot(sub.p);
                if (ap <= 1e-14 * G.row(i).norm() * sub.p.norm()) continue;
                const double ratio = std::max(0.0, (h[i] - G.row(i).dot(x)) / ap);
                if (ratio < 1.0) candidates.emplace_back(ratio, static_cast<int>(i));
            }
            std::sort(candidates.begin(), candidates.end());
            // Rows dependent on the working set cannot block a null-space step; they only
            // show up through rounding and would make the working set singular.
            double alpha = 1.0;
            int blocking = -1;
            for (const auto& [ratio, i] : candidates) {
                if (!independent_of(a, G.row(i))) continue;
                alpha = ratio;
                blocking = i;
                break;
            }
            x += alpha * sub.p;
            if (blocking >= 0) working.insert(std::upper_bound(working.begin(), working.end(), blocking), blocking);
            on_face_minimum = blocking < 0;
        }
        sol.cost_history.push_back(objective(H, f, x));
    }

    // The initial working set is kept sorted; removals and sorted inserts preserve that.
    if (sol.status == QpStatus::Optimal && !working.empty()) {
        const MatrixXd a = rows_of(G, working);
        const Subproblem face = solve_on_face(llt, a, entries_of(h, working), f);
        const double mu_scale = std::max(1.0, face.mu.lpNorm<Eigen::Infinity>());
        if (face.p.allFinite() && max_violation(G, h, face.p) <= opt.feasibility_tol &&
            face.mu.minCoeff() >= -opt.multiplier_tol * mu_scale &&
            objective(H, f, face.p) <= objective(H, f, x) + 1e-12 * (1.0 + std::abs(objective(H, f, x)))) {
            x = face.p;
            mu = face.mu;
        }
    }

    sol.u_star = x;
    sol.cost = objective(H, f, x);
    sol.active_set = working;
    sol.multipliers = VectorXd::Zero(m);
    for (std::size_t r = 0; r < working.size() && static_cast<Eigen::Index>(r) < mu.size(); ++r)
        sol.multipliers[working[r]] = mu[static_cast<Eigen::Index>(r)];
    return sol;
}

// min 1/2 x'x + 1/2 t^2 + M t  s.t.  G x - t <= h, -t <= 0. Exact penalty: t* = 0 iff feasible.
std::optional<VectorXd> phase_one(const Eigen::Ref<const MatrixXd>& G, const Eigen::Ref<const VectorXd>& h,
                                  const QpOptions& opt) {
    const Eigen::Index n = G.cols();
    const Eigen::Index m = G.rows();
    constexpr double big_m = 1e8;
    MatrixXd H1 = MatrixXd::Identity(n + 1, n + 1);
    VectorXd f1 = VectorXd::Zero(n + 1);
    f1[n] = big_m;
    MatrixXd G1 = MatrixXd::Zero(m + 1, n + 1);
    G1.topLeftCorner(m, n) = G;
    G1.col(n).head(m).setConstant(-1.0);
    G1(m, n) = -1.0;
    VectorXd h1 = VectorXd::Zero(m + 1);
    h1.head(m) = h;

    VectorXd z0 = VectorXd::Zero(n + 1);
    z0[n] = std::max(0.0, (-h).maxCoeff()) + 1.0;
    Eigen::LLT<MatrixXd> llt(H1);
    const QpSolution aux = active_set(H1, llt, f1, G1, h1, z0, 50 * static_cast<int>(n + m + 1), opt);
    VectorXd x = aux.u_star.head(n);
    if (max_violation(G, h, x) > opt.feasibility_tol) {
        // The big penalty leaves rounding of order 1e-8 on the active rows; re-solve
        // the nearest-to-origin point of that face without the elastic variable.
        std::vector<int> face;
        for (int i : aux.active_set)
            if (i < m) face.push_back(i);
        if (!face.empty()) {
            const Eigen::LLT<MatrixXd> eye(MatrixXd::Identity(n, n));
            const Subproblem s = solve_on_face(eye, rows_of(G, face), entries_of(h, face), VectorXd::Zero(n));
            if (s.p.allFinite()) x = s.p;
        }
    }
    if (max_violation(G, h, x) > opt.feasibility_tol) return std::nullopt;
    return x;
}

}  // namespace

QpSolution solve_qp(const Eigen::Ref<const MatrixXd>& H, const Eigen::Ref<const VectorXd>& f,
                    const Eigen::Ref<const MatrixXd>& G, const Eigen::Ref<const VectorXd>& h,
                    const std::optional<VectorXd>& warm_start, const QpOptions& options) {
    const Eigen::Index n = H.rows();
    if (H.cols() != n || f.size() != n) throw DataError("solve_qp: H must be square and match f");
    if (G.cols() != n || G.rows() != h.size()) throw DataError("solve_qp: G/h shape mismatch");
    if (warm_start && warm_start->size() != n) throw DataError("solve_qp: warm start has wrong length");
    if (!H.allFinite() || !f.allFinite() || !G.allFinite() || !h.allFinite())
        throw NumericError("solve_qp: non-finite problem data");
    const double asym = (H - H.transpose()).lpNorm<Eigen::Infinity>();
    if (asym > 1e-9 * std::max(1.0, H.lpNorm<Eigen::Infinity>())) throw DataError("solve_qp: H is not symmetric");
    Eigen::LLT<MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) throw DataError("solve_qp: H is not positive definite");

    const int max_iterations =
        options.max_iterations > 0 ? options.max_iterations : std::max(50, 50 * static_cast<int>(n));

    std::optional<VectorXd> start;
    bool used_phase1 = false;
    if (warm_start && max_violation(G, h, *warm_start) <= options.feasibility_tol) {
        start = *warm_start;
    } else if (!warm_start) {
        const VectorXd free_min = llt.solve(-f);
        if (max_violation(G, h, free_min) <= options.feasibility_tol) start = free_min;
        else if (max_violation(G, h, VectorXd::Zero(n)) <= options.feasibility_tol) start = VectorXd::Zero(n);
    }
    if (!start) {
        used_phase1 = true;
        start = phase_one(G, h, options);
        if (!start) {
            QpSolution infeasible;
            infeasible.u_star = warm_start.value_or(VectorXd::Zero(n));
            infeasible.cost = objective(H, f, infeasible.u_star);
            infeasible.multipliers = VectorXd::Zero(G.rows());
            infeasible.status = QpStatus::Infeasible;
            infeasible.used_phase1 = true;
            return infeasible;
        }
    }

    QpSolution sol = active_set(H, llt, f, G, h, *start, max_iterations, options);
    sol.used_phase1 = used_phase1;
    return sol;
}

double kkt_stationarity(const Eigen::Ref<const MatrixXd>& H, const Eigen::Ref<const VectorXd>& f,
                        const Eigen::Ref<const MatrixXd>& G, const QpSolution& sol) {
    VectorXd r = H * sol.u_star + f;
    if (G.rows() > 0) r += G.transpose() * sol.multipliers;
    return r.lpNorm<Eigen::Infinity>();
}

}  // namespace akmpc
