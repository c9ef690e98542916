#include "akmpc/history.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "akmpc/csv.hpp"
#include "akmpc/errors.hpp"

namespace akmpc {

namespace {

struct Ranked {
    double distance;
    int index;
    bool operator<(const Ranked& o) const {
        return distance < o.distance || (distance == o.distance && index < o.index);
    }
};

}  // namespace

HistoryDatabase::HistoryDatabase(Eigen::MatrixXd psi, Eigen::MatrixXd inputs, std::vector<std::string> input_names)
    : psi_(std::move(psi)), inputs_(std::move(inputs)), input_names_(std::move(input_names)) {
    if (psi_.cols() != inputs_.cols()) throw DataError("history: lifted states and inputs differ in entry count");
    if (!psi_.allFinite() || !inputs_.allFinite()) throw DataError("history: non-finite entries");
    if (input_names_.empty()) {
        for (int j = 0; j < input_dim(); ++j) input_names_.push_back("u" + std::to_string(j));
    }
    if (static_cast<int>(input_names_.size()) != input_dim())
        throw DataError("history: input name count does not match input dimension");
}

double HistoryDatabase::median_kth_distance(int k) const {
    if (k < 1 || k >= n_entries()) throw DataError("history: need more than k entries to estimate the kernel width");
    std::vector<double> kth(static_cast<std::size_t>(n_entries()));
    std::vector<double> d(static_cast<std::size_t>(n_entries() - 1));
    for (int i = 0; i < n_entries(); ++i) {
        std::size_t pos = 0;
        for (int j = 0; j < n_entries(); ++j) {
            if (j == i) continue;
            d[pos++] = (psi_.col(i) - psi_.col(j)).squaredNorm();
        }
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        kth[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(k - 1)];
    }
    const auto mid = kth.size() / 2;
    std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(mid), kth.end());
    double median = kth[mid];
    if (kth.size() % 2 == 0) {
        const double lower = *std::max_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    return median;
}

void HistoryDatabase::save(const std::filesystem::path& path) const {
    csv::Table table;
    for (int i = 0; i < lifted_dim(); ++i) table.header.push_back("psi_" + std::to_string(i));
    for (const auto& name : input_names_) table.header.push_back(name);
    for (int e = 0; e < n_entries(); ++e) {
        std::vector<std::string> row;
        row.reserve(table.header.size());
        for (int i = 0; i < lifted_dim(); ++i) row.push_back(csv::format_number(psi_(i, e)));
        for (int j = 0; j < input_dim(); ++j) row.push_back(csv::format_number(inputs_(j, e)));
        table.rows.push_back(std::move(row));
    }
    csv::write(path, table);
}

HistoryDatabase HistoryDatabase::load(const std::filesystem::path& path, int lifted_dim) {
    const auto table = csv::read(path);
    const int cols = static_cast<int>(table.header.size());
    if (lifted_dim < 1 || cols <= lifted_dim)
        throw DataError("history: " + path.string() + " has too few columns for lifted dimension " +
                        std::to_string(lifted_dim));
    const int n_c = cols - lifted_dim;
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    Eigen::MatrixXd psi(lifted_dim, n);
    Eigen::MatrixXd inputs(n_c, n);
    for (Eigen::Index e = 0; e < n; ++e) {
        const auto& row = table.rows[static_cast<std::size_t>(e)];
        for (int c = 0; c < cols; ++c) {
            const auto v = csv::parse_number(row[static_cast<std::size_t>(c)]);
            if (!v) throw DataError("history: missing value in row " + std::to_string(e + 1));
            if (c < lifted_dim) psi(c, e) = *v;
            else inputs(c - lifted_dim, e) = *v;
        }
    }
    std::vector<std::string> names(table.header.begin() + lifted_dim, table.header.end());
    return HistoryDatabase(std::move(psi), std::move(inputs), std::move(names));
}

void CorridorConfig::validate() const {
    if (k < 1) throw DataError("corridor config: K must be at least 1");
    if (!(sigma_d2 > 0.0)) throw DataError("corridor config: sigma_d2 must be positive");
    if (!(alpha_base >= 0.0) || !(beta_adapt >= 0.0))
        throw DataError("corridor config: alpha_base and beta_adapt must be nonnegative");
    if (delta_abs.size() < 1 || !(delta_abs.array() >= 0.0).all())
        throw DataError("corridor config: delta_abs must be nonnegative");
}

Eigen::VectorXd CorridorConfig::delta_for(int input_dim) const {
    if (delta_abs.size() == 1) return Eigen::VectorXd::Constant(input_dim, delta_abs[0]);
    if (delta_abs.size() != input_dim) throw DataError("corridor config: delta_abs length does not match inputs");
    return delta_abs;
}

ReferenceControl reference_control(const HistoryDatabase& db, const Eigen::Ref<const Eigen::VectorXd>& psi_query,
                                   const CorridorConfig& cfg) {
    cfg.validate();
    if (db.n_entries() == 0) throw DataError("reference_control: history database is empty");
    if (cfg.k > db.n_entries())
        throw DataError("reference_control: K = " + std::to_string(cfg.k) + " exceeds the " +
                        std::to_string(db.n_entries()) + " database entries");
    if (psi_query.size() != db.lifted_dim()) throw DataError("reference_control: query dimension mismatch");

    std::vector<Ranked> ranked(static_cast<std::size_t>(db.n_entries()));
    for (int i = 0; i < db.n_entries(); ++i)
        ranked[static_cast<std::size_t>(i)] = {(psi_query - db.psi().col(i)).squaredNorm(), i};
    std::partial_sort(ranked.begin(), ranked.begin() + cfg.k, ranked.end());

    ReferenceControl out;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(db.input_dim());
    double total = 0.0;
    for (int j = 0; j < cfg.k; ++j) {
        const auto& r = ranked[static_cast<std::size_t>(j)];
        out.neighbors.push_back(r.index);
        const double w = std::exp(-r.distance / cfg.sigma_d2);
        acc += w * db.inputs().col(r.index);
        total += w;
    }
    if (total > 0.0 && std::isfinite(total)) {
        out.u_ref = acc / total;
    } else {
        out.u_ref = db.inputs().col(ranked.front().index);
        out.nearest_fallback = true;
    }
    return out;
}

Corridor corridor(const Eigen::Ref<const Eigen::VectorXd>& u_ref, double conf, const CorridorConfig& cfg) {
    cfg.validate();
    const double c = std::clamp(conf, 0.0, 1.0);
    const Eigen::VectorXd relative = (cfg.alpha_base + cfg.beta_adapt * c) * u_ref.cwiseAbs();
    const Eigen::VectorXd half = relative.cwiseMax(cfg.delta_for(static_cast<int>(u_ref.size())));
    return Corridor{u_ref, u_ref - half, u_ref + half, c};
}

Corridor advisor_corridor(const Eigen::Ref<const Eigen::VectorXd>& u_actual,
                          const Eigen::Ref<const Eigen::VectorXd>& u_range) {
    if (u_range.size() != u_actual.size()) throw DataError("advisor_corridor: range length mismatch");
    if (!(u_range.array() > 0.0).all()) throw DataError("advisor_corridor: ranges must be positive");
    const Eigen::VectorXd half = (0.1 * u_actual.cwiseAbs()).cwiseMax(0.01 * u_range);
    return Corridor{u_actual, u_actual - half, u_actual + half, 0.0};
}

}  // namespace akmpc
