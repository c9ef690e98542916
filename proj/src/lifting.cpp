#include "akmpc/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "akmpc/errors.hpp"

namespace akmpc {

Dictionary::Dictionary(int state_dim, int degree, std::vector<Exponents> monomials)
    : state_dim_(state_dim), degree_(degree), monomials_(std::move(monomials)) {}

Dictionary Dictionary::polynomial(int state_dim, int degree) {
    if (state_dim < 1) throw DataError("dictionary: state_dim must be positive");
    if (degree < 1 || degree > 2)
        throw DataError("dictionary: polynomial degree must be 1 or 2, got " + std::to_string(degree));

    std::vector<Exponents> monomials;
    for (int i = 0; i < state_dim; ++i) {
        Exponents e(state_dim, 0);
        e[i] = 1;
        monomials.push_back(std::move(e));
    }
    monomials.emplace_back(state_dim, 0);
    if (degree == 2) {
        for (int i = 0; i < state_dim; ++i) {
            Exponents e(state_dim, 0);
            e[i] = 2;
            monomials.push_back(std::move(e));
        }
        for (int i = 0; i < state_dim; ++i) {
            for (int j = i + 1; j < state_dim; ++j) {
                Exponents e(state_dim, 0);
                e[i] = 1;
                e[j] = 1;
                monomials.push_back(std::move(e));
            }
        }
    }
    return Dictionary(state_dim, degree, std::move(monomials));
}

Dictionary Dictionary::from_monomials(int state_dim, std::vector<Exponents> monomials) {
    if (state_dim < 1) throw DataError("dictionary: state_dim must be positive");
    if (static_cast<int>(monomials.size()) < state_dim)
        throw DataError("dictionary: fewer monomials than state components");

    std::set<Exponents> seen;
    int degree = 0;
    for (std::size_t m = 0; m < monomials.size(); ++m) {
        const auto& e = monomials[m];
        if (static_cast<int>(e.size()) != state_dim)
            throw DataError("dictionary: monomial " + std::to_string(m) + " has wrong arity");
        if (std::any_of(e.begin(), e.end(), [](int p) { return p < 0; }))
            throw DataError("dictionary: negative exponent in monomial " + std::to_string(m));
        const int total = std::accumulate(e.begin(), e.end(), 0);
        if (total > 2) throw DataError("dictionary: monomial degree above 2 is not supported");
        degree = std::max(degree, total);
        if (!seen.insert(e).second)
            throw DataError("dictionary: duplicate monomial " + std::to_string(m));
        if (static_cast<int>(m) < state_dim) {
            Exponents unit(state_dim, 0);
            unit[m] = 1;
            if (e != unit) throw DataError("dictionary: raw state observables must come first");
        }
    }
    return Dictionary(state_dim, std::max(degree, 1), std::move(monomials));
}

Eigen::VectorXd Dictionary::lift(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != state_dim_) {
        std::ostringstream msg;
        msg << "lift: expected state of length " << state_dim_ << ", got " << x.size();
        throw DataError(msg.str());
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) {
            std::ostringstream msg;
            msg << "lift: state component " << i << " is not finite (" << x[i] << ")";
            throw DataError(msg.str());
        }
    }

    Eigen::VectorXd psi(lifted_dim());
    for (std::size_t m = 0; m < monomials_.size(); ++m) {
        double value = 1.0;
        for (int i = 0; i < state_dim_; ++i) {
            for (int p = 0; p < monomials_[m][i]; ++p) value *= x[i];
        }
        psi[static_cast<Eigen::Index>(m)] = value;
    }
    return psi;
}

Eigen::MatrixXd Dictionary::lift_columns(const Eigen::Ref<const Eigen::MatrixXd>& states) const {
    Eigen::MatrixXd out(lifted_dim(), states.cols());
    for (Eigen::Index c = 0; c < states.cols(); ++c) out.col(c) = lift(states.col(c));
    return out;
}

Eigen::VectorXd Dictionary::recover(const Eigen::Ref<const Eigen::VectorXd>& psi) const {
    if (psi.size() != lifted_dim()) {
        std::ostringstream msg;
        msg << "recover: expected lifted vector of length " << lifted_dim() << ", got " << psi.size();
        throw DataError(msg.str());
    }
    return psi.head(state_dim_);
}

Eigen::MatrixXd Dictionary::selection() const {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(state_dim_, lifted_dim());
    c.leftCols(state_dim_).setIdentity();
    return c;
}

}  // namespace akmpc
