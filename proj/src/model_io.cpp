#include "akmpc/model_io.hpp"

#include <fstream>

#include "akmpc/errors.hpp"

namespace akmpc {

using nlohmann::json;

json to_json_vector(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
    if (!j.is_array()) throw DataError("expected a numeric array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw DataError("expected a numeric array");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

json to_json_matrix(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_vector(m.row(r).transpose()));
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw DataError("expected an array of rows");
    if (j.empty()) return {};
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row = vector_from_json(j[r]);
        if (row.size() != cols) throw DataError("ragged matrix rows");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json model_to_json(const ModelFile& file) {
    const auto& m = file.model;
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["dictionary"] = {{"state_dim", file.dictionary.state_dim()}, {"monomials", file.dictionary.monomials()}};
    j["state_names"] = file.state_names;
    j["input_names"] = file.input_names;
    j["theta"] = to_json_matrix(m.theta);
    j["P"] = to_json_matrix(m.P);
    j["lambda_f"] = m.lambda_f;
    j["lambda_reg"] = m.lambda_reg;
    j["p0_trace"] = m.p0_trace;
    j["step_count"] = m.step_count;
    if (file.scaler) j["scaler"] = file.scaler->to_json();
    if (file.envelope)
        j["envelope"] = {{"u_min", to_json_vector(file.envelope->u_min)},
                         {"u_max", to_json_vector(file.envelope->u_max)},
                         {"range", to_json_vector(file.envelope->range)}};
    return j;
}

ModelFile model_from_json(const json& j) {
    try {
        if (j.value("format", std::string{}) != kModelFormat) throw DataError("not an akmpc model file");
        if (j.at("version").get<int>() != kModelVersion)
            throw DataError("unsupported model file version " + j.at("version").dump());
        ModelFile f;
        const auto& d = j.at("dictionary");
        f.dictionary = Dictionary::from_monomials(d.at("state_dim").get<int>(),
                                                  d.at("monomials").get<std::vector<Exponents>>());
        f.state_names = j.value("state_names", std::vector<std::string>{});
        f.input_names = j.value("input_names", std::vector<std::string>{});
        f.model.theta = matrix_from_json(j.at("theta"));
        f.model.P = matrix_from_json(j.at("P"));
        f.model.lambda_f = j.at("lambda_f").get<double>();
        f.model.lambda_reg = j.at("lambda_reg").get<double>();
        f.model.p0_trace = j.at("p0_trace").get<double>();
        f.model.step_count = j.at("step_count").get<long>();
        if (j.contains("scaler")) f.scaler = Scaler::from_json(j.at("scaler"));
        if (j.contains("envelope")) {
            const auto& e = j.at("envelope");
            f.envelope = InputEnvelope{vector_from_json(e.at("u_min")), vector_from_json(e.at("u_max")),
                                       vector_from_json(e.at("range"))};
        }
        f.model.validate();
        if (f.model.lifted_dim() != f.dictionary.lifted_dim())
            throw DataError("model theta does not match the dictionary");
        return f;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const ModelFile& file) { write_json_file(path, model_to_json(file)); }

ModelFile load_model(const std::filesystem::path& path) {
    try {
        return model_from_json(read_json_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace akmpc
