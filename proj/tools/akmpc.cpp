#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "akmpc/app.hpp"
#include "akmpc/config.hpp"

namespace {

using namespace akmpc;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;

    RunConfig load() const {
        RunConfig cfg = config.empty() ? RunConfig{} : load_config(config);
        if (seed) cfg.seed = *seed;
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* sub, Common& common) {
    sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Override the configured seed");
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive Koopman MPC with historical process constraints"};
    app.require_subcommand(1);
    Common common;
    std::function<int()> action;

    std::string raw_dir, out_dir, model, db, summaries, out_file, plant;
    std::vector<std::string> batches;

    auto* ingest = app.add_subcommand("ingest", "Clean raw batch files");
    add_common(ingest, common);
    ingest->add_option("raw_dir", raw_dir, "Directory of raw batch CSV files")->required();
    ingest->add_option("out_dir", out_dir, "Directory for cleaned batches and the report")->required();
    ingest->callback([&] { action = [&] { return cmd_ingest(raw_dir, out_dir, common.load(), std::cerr); }; });

    auto* fit = app.add_subcommand("fit", "Batch-fit the lifted model");
    add_common(fit, common);
    fit->add_option("-o,--out", model, "Model file to write")->required();
    fit->add_option("batches", batches, "Cleaned batch files or directories")->required();
    fit->callback([&] { action = [&] { return cmd_fit(to_paths(batches), model, common.load(), std::cerr); }; });

    auto* builddb = app.add_subcommand("builddb", "Build the history database for HPC corridors");
    add_common(builddb, common);
    builddb->add_option("-m,--model", model, "Model file")->required()->check(CLI::ExistingFile);
    builddb->add_option("-o,--out", db, "Database file to write")->required();
    builddb->add_option("batches", batches, "Cleaned batch files or directories")->required();
    builddb->callback(
        [&] { action = [&] { return cmd_builddb(to_paths(batches), model, db, common.load(), std::cerr); }; });

    auto* advise = app.add_subcommand("advise", "Replay batches in advisor mode");
    add_common(advise, common);
    advise->add_option("-m,--model", model, "Model file")->required()->check(CLI::ExistingFile);
    advise->add_option("-o,--out", out_dir, "Directory for step streams and summaries")->required();
    advise->add_option("batches", batches, "Cleaned batch files or directories")->required();
    advise->callback(
        [&] { action = [&] { return cmd_advise(to_paths(batches), model, out_dir, common.load(), std::cerr); }; });

    auto* closedloop = app.add_subcommand("closedloop", "Closed-loop run on a synthetic plant");
    add_common(closedloop, common);
    closedloop->add_option("plant", plant, "linear, bilinear or drifting (default from config)");
    closedloop->add_option("-o,--out", out_file, "Trajectory JSON to write")->required();
    closedloop->callback([&] {
        action = [&] {
            return cmd_closedloop(plant.empty() ? std::nullopt : std::optional<std::string>(plant), out_file,
                                  common.load(), std::cerr);
        };
    });

    auto* report = app.add_subcommand("report", "Cpk comparison over advisor summaries");
    add_common(report, common);
    report->add_option("summaries_dir", summaries, "Directory written by advise")->required();
    report->add_option("-o,--out", out_dir, "Directory for report.csv and report.json")->required();
    report->callback([&] { action = [&] { return cmd_report(summaries, out_dir, common.load(), std::cerr); }; });

    auto* dump = app.add_subcommand("dump-config", "Print the effective configuration");
    add_common(dump, common);
    dump->add_option("-o,--out", out_file, "Write to a file instead of stdout");
    dump->callback([&] { action = [&] { return cmd_dump_config(out_file, common.load(), std::cout); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    return guarded(action, std::cerr);
}
