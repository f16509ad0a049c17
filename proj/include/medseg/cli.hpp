#pragma once

#include <optional>
#include <string>

#include "medseg/config.hpp"

namespace medseg {

struct CliOptions {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    bool deterministic = false;
    bool dry_run = false;
    bool force = false;
    std::optional<int> jobs;
};

// Loads the config (or defaults) and applies flag overrides (flag wins).
ExperimentConfig resolve_config(const CliOptions& opts);

// Subcommand bodies; each returns a process exit status and reports failures
// as a single diagnostic line on stderr.
int cmd_synth_data(const ExperimentConfig& cfg, const CliOptions& opts,
                   const std::string& target_dir);
int cmd_pretrain(const ExperimentConfig& cfg, const CliOptions& opts);
int cmd_finetune(const ExperimentConfig& cfg, const CliOptions& opts);
int cmd_pipeline(const ExperimentConfig& cfg, const CliOptions& opts);
int cmd_sweep(const ExperimentConfig& cfg, const CliOptions& opts);
int cmd_ablate_epochs(const ExperimentConfig& cfg, const CliOptions& opts);
int cmd_analyze(const std::string& records_dir, const std::string& out_dir);

// Shared data loading per the config's data section (synthetic generator or
// directory ingestion; MEDSEG_DATA_ROOT honored for the directory source).
DatasetBundle load_data(const ExperimentConfig& cfg);

}  // namespace medseg
