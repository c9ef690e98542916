#include "akmpc/app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "akmpc/advisor.hpp"
#include "akmpc/closedloop.hpp"
#include "akmpc/csv.hpp"
#include "akmpc/errors.hpp"
#include "akmpc/history.hpp"
#include "akmpc/ingest.hpp"
#include "akmpc/metrics.hpp"
#include "akmpc/model_io.hpp"

namespace akmpc {

namespace {

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& suffix) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() >= suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<BatchLog> load_cleaned(const std::vector<fs::path>& inputs, const RunConfig& cfg) {
    const Schema schema = cfg.schema();
    std::vector<BatchLog> logs;
    for (const auto& p : expand_inputs(inputs)) logs.push_back(BatchLog::load(p, schema));
    return logs;
}

std::string padded_id(int id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d", id);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> out;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            const auto files = files_with_extension(p, ".csv");
            out.insert(out.end(), files.begin(), files.end());
        } else {
            out.push_back(p);
        }
    }
    return out;
}

int cmd_ingest(const fs::path& raw_dir, const fs::path& out_dir, const RunConfig& cfg, std::ostream& log) {
    const auto files = files_with_extension(raw_dir, ".csv");
    LoadResult result = load_batches(files, cfg.schema());
    ensure_dir(out_dir);
    write_json_file(out_dir / "ingest_report.json", result.report());
    for (const auto& r : result.rejected) log << "rejected " << r.source << ": " << r.reason << '\n';
    if (result.batches.empty()) throw DataError("no batches survived ingestion of " + raw_dir.string());
    for (const auto& b : result.batches) {
        const BatchLog cleaned = decimate(b, cfg.ingest.sampling_period_s);
        cleaned.save(out_dir / ("batch_" + padded_id(cleaned.batch_id) + ".csv"));
    }
    log << "ingested " << result.batches.size() << " of " << files.size() << " files\n";
    return kExitOk;
}

int cmd_fit(const std::vector<fs::path>& batches, const fs::path& model_out, const RunConfig& cfg, std::ostream& log) {
    const std::vector<BatchLog> logs = load_cleaned(batches, cfg);
    if (logs.empty()) throw DataError("fit: no batches");
    const Schema schema = cfg.schema();
    const Dictionary dict = Dictionary::polynomial(schema.state_dim(), cfg.dictionary.degree);

    ModelFile file{dict, {}, schema.state_names, schema.input_names, std::nullopt, std::nullopt};
    if (cfg.ident.normalize) file.scaler = Scaler::fit(logs);
    file.envelope = compute_envelope(logs, cfg.envelope.coverage, cfg.envelope.margin);

    std::vector<Snapshot> snaps;
    for (const auto& b : logs)
        for (const auto& s : b.snapshots()) snaps.push_back(file.scaler ? file.scaler->scale(s) : s);
    if (snaps.empty()) throw DataError("fit: no valid transitions in the batches");
    file.model = batch_fit(snaps, dict, cfg.fit_options());
    save_model(model_out, file);
    log << "fitted " << dict.lifted_dim() << "-observable model on " << snaps.size() << " transitions from "
        << logs.size() << " batches\n";
    return kExitOk;
}

int cmd_builddb(const std::vector<fs::path>& batches, const fs::path& model_file, const fs::path& db_out,
                const RunConfig& cfg, std::ostream& log) {
    const ModelFile file = load_model(model_file);
    const std::vector<BatchLog> logs = load_cleaned(batches, cfg);
    std::vector<Eigen::VectorXd> psi, u;
    const auto& names = cfg.ingest.state_names;
    const auto primary = std::find(names.begin(), names.end(), cfg.advisor.primary_channel);
    if (cfg.hpc.min_batch_cpk && primary == names.end())
        throw DataError("builddb: primary channel '" + cfg.advisor.primary_channel + "' is not a state channel");
    std::size_t kept = 0;
    for (const auto& b : logs) {
        if (cfg.hpc.min_batch_cpk) {
            const auto ch = static_cast<Eigen::Index>(primary - names.begin());
            std::vector<double> series;
            for (std::size_t k = 0; k < b.rows(); ++k)
                if (b.valid[k]) series.push_back(b.states(ch, static_cast<Eigen::Index>(k)));
            const SpecLimits lim = cfg.spec_limits()[static_cast<std::size_t>(ch)];
            if (series.size() < 2 || cpk(series, lim).value < *cfg.hpc.min_batch_cpk) {
                log << "builddb: skipping batch " << b.batch_id << " below the Cpk threshold\n";
                continue;
            }
        }
        ++kept;
        for (std::size_t k = 0; k < b.rows(); ++k) {
            if (!b.valid[k]) continue;
            const auto c = static_cast<Eigen::Index>(k);
            const Eigen::VectorXd x = file.scaler ? file.scaler->scale_state(b.states.col(c)) : Eigen::VectorXd(b.states.col(c));
            psi.push_back(file.dictionary.lift(x));
            u.push_back(file.scaler ? file.scaler->scale_input(b.inputs.col(c)) : Eigen::VectorXd(b.inputs.col(c)));
        }
    }
    if (psi.empty()) throw DataError("builddb: no valid rows");
    Eigen::MatrixXd P(file.dictionary.lifted_dim(), static_cast<Eigen::Index>(psi.size()));
    Eigen::MatrixXd U(u.front().size(), static_cast<Eigen::Index>(u.size()));
    for (std::size_t i = 0; i < psi.size(); ++i) {
        P.col(static_cast<Eigen::Index>(i)) = psi[i];
        U.col(static_cast<Eigen::Index>(i)) = u[i];
    }
    const HistoryDatabase db(P, U, file.input_names);
    db.save(db_out);
    log << "history database with " << db.n_entries() << " entries from " << kept << " of " << logs.size()
        << " batches\n";
    return kExitOk;
}

int cmd_advise(const std::vector<fs::path>& batches, const fs::path& model_file, const fs::path& out_dir,
               const RunConfig& cfg, std::ostream& log) {
    const ModelFile file = load_model(model_file);
    const auto paths = expand_inputs(batches);
    if (paths.empty()) throw DataError("advise: no batches");
    if (!file.envelope) throw DataError("advise: model file has no input envelope");

    AdvisorSettings settings;
    settings.mpc = cfg.mpc_config(file.model.input_dim(), file.envelope);
    settings.setpoint = Eigen::Map<const Eigen::VectorXd>(cfg.advisor.setpoints.data(),
                                                          static_cast<Eigen::Index>(cfg.advisor.setpoints.size()));
    settings.u_range = file.envelope->range;
    settings.ident = cfg.online_ident();
    settings.limits = cfg.spec_limits();
    settings.what_if_horizon = cfg.advisor.what_if_horizon;
    settings.scaler = file.scaler;

    ensure_dir(out_dir);
    const Schema schema = cfg.schema();
    LiftedModel model = file.model;
    long errors = 0;
    for (const auto& p : paths) {
        const BatchLog batch = BatchLog::load(p, schema);
        const AdvisorRun run = run_advisor(batch, cfg.advisor.carry_over ? model : file.model, file.dictionary, settings);
        if (cfg.advisor.carry_over) model = run.final_model;
        const std::string stem = p.stem().string();
        {
            std::ofstream out(out_dir / (stem + "_steps.jsonl"), std::ios::binary);
            if (!out) throw DataError("cannot write step stream for " + stem);
            write_step_stream(out, run.steps);
        }
        nlohmann::json summary = run.summary.to_json();
        const BatchSeries series = run.comparison_series();
        summary["channel_names"] = batch.state_names;
        summary["series"] = {{"historical", to_json_matrix(series.historical)},
                             {"predicted", to_json_matrix(series.predicted)}};
        write_json_file(out_dir / (stem + "_summary.json"), summary);
        errors += run.summary.errors;
        log << stem << ": " << run.summary.steps << " steps, " << run.summary.fallbacks << " fallbacks, "
            << run.summary.errors << " errors\n";
    }
    if (errors > 0) log << "warning: " << errors << " steps recorded errors\n";
    return kExitOk;
}

int cmd_closedloop(const std::optional<std::string>& plant, const fs::path& out, const RunConfig& cfg,
                   std::ostream& log) {
    RunConfig c = cfg;
    if (plant) c.closedloop.plant = *plant;
    c.validate();
    const ClosedLoopResult r = run_closed_loop(closed_loop_options(c));
    nlohmann::json j = r.to_json();
    j["plant"] = c.closedloop.plant;
    j["adapt"] = c.closedloop.adapt;
    j["seed"] = c.seed;
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_json_file(out, j);
    log << c.closedloop.plant << ": post-drift-half MSE " << r.mse_post << ", resets " << r.resets << '\n';
    return kExitOk;
}

int cmd_report(const fs::path& summaries_dir, const fs::path& out_dir, const RunConfig& cfg, std::ostream& log) {
    const auto files = files_with_extension(summaries_dir, "_summary.json");
    std::vector<BatchSeries> series;
    for (const auto& f : files) {
        const nlohmann::json j = read_json_file(f);
        try {
            BatchSeries s;
            s.batch_id = j.at("batch").get<int>();
            s.historical = matrix_from_json(j.at("series").at("historical"));
            s.predicted = matrix_from_json(j.at("series").at("predicted"));
            series.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(f.string() + ": " + e.what());
        }
    }
    const ComparisonTable table = compare_batches(series, cfg.ingest.state_names, cfg.spec_limits());
    ensure_dir(out_dir);
    csv::write(out_dir / "report.csv", table.to_csv());
    write_json_file(out_dir / "report.json", table.to_json());
    for (const auto& s : table.summaries)
        log << s.channel << ": Cpk improved in " << s.improved << " of " << s.hist.count << " batches, median delta "
            << s.delta.median << '\n';
    return kExitOk;
}

int cmd_dump_config(const fs::path& out, const RunConfig& cfg, std::ostream& stdout_stream) {
    const nlohmann::json j = config_to_json(cfg);
    if (out.empty()) stdout_stream << j.dump(2) << '\n';
    else write_json_file(out, j);
    return kExitOk;
}

int guarded(const std::function<int()>& command, std::ostream& err) {
    try {
        return command();
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace akmpc
