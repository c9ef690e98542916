#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "akmpc/config.hpp"

namespace akmpc {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumeric = 3,
};

namespace fs = std::filesystem;

/// Raw files in raw_dir (sorted by name) to cleaned batch_NNN.csv files plus ingest_report.json.
int cmd_ingest(const fs::path& raw_dir, const fs::path& out_dir, const RunConfig& cfg, std::ostream& log);

/// Batch fit on cleaned batches (files or directories); writes the model file.
int cmd_fit(const std::vector<fs::path>& batches, const fs::path& model_out, const RunConfig& cfg, std::ostream& log);

/// History database of lifted states and inputs from cleaned batches.
int cmd_builddb(const std::vector<fs::path>& batches, const fs::path& model_file, const fs::path& db_out,
                const RunConfig& cfg, std::ostream& log);

/// Advisor replay of every batch: <stem>_steps.jsonl and <stem>_summary.json in out_dir.
int cmd_advise(const std::vector<fs::path>& batches, const fs::path& model_file, const fs::path& out_dir,
               const RunConfig& cfg, std::ostream& log);

/// Synthetic closed-loop run; writes trajectory and metrics as JSON.
int cmd_closedloop(const std::optional<std::string>& plant, const fs::path& out, const RunConfig& cfg,
                   std::ostream& log);

/// Cpk comparison over the advisor summaries in summaries_dir: report.csv and report.json in out_dir.
int cmd_report(const fs::path& summaries_dir, const fs::path& out_dir, const RunConfig& cfg, std::ostream& log);

/// Effective configuration as JSON (to out, or stdout when out is empty).
int cmd_dump_config(const fs::path& out, const RunConfig& cfg, std::ostream& stdout_stream);

/// Run a command, turning exceptions into exit codes and a one-line message on err.
int guarded(const std::function<int()>& command, std::ostream& err);

/// Expand directories into their *.csv files, sorted by name.
std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs);

}  // namespace akmpc
