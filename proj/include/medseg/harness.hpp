#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "medseg/pipeline.hpp"
#include "medseg/seg.hpp"

namespace medseg {

// One cell of an experiment grid: (pipeline, subset size, seed) -> curve and
// final metrics. Persisted append-only, one self-describing JSON file per
// cell; the digest covers everything except wall-clock time.
struct RunRecord {
    std::string pipeline;
    long subset_size = 0;
    int seed_index = 0;
    uint64_t cell_seed = 0;
    LearningCurve curve;
    double final_test_loss = 0.0;
    double final_test_iou = 0.0;
    double wall_seconds = 0.0;
    std::string status = "DONE";  // DONE | FAILED
    std::string error;

    uint64_t digest() const;
};

std::string record_to_json(const RunRecord& r);
RunRecord record_from_json(const std::string& text, const std::string& context);

struct SweepSpec {
    std::vector<long> subset_sizes;      // absolute labeled-slice counts
    std::vector<int> seeds;              // distinct seed indices (default 0..9)
    std::vector<PipelineSpec> pipelines;
    SegConfig seg;
    DecoderConfig decoder;
    uint64_t sweep_seed = 0;
    std::string name = "sweep";

    void validate() const;
    size_t cell_count() const { return subset_sizes.size() * seeds.size() * pipelines.size(); }
};

struct SweepOptions {
    int jobs = 1;
    long max_cells = -1;  // stop after completing this many new cells (tests/interruption)
};

// Escape hatch for the `1 sample .. 100%` grid: values < 1 are fractions of
// the labeled train set, values >= 1 absolute counts.
std::vector<long> resolve_subset_sizes(const std::vector<double>& raw, long n_labeled);
std::vector<double> default_subset_grid();

// Runs/continues the grid under records_dir (one file per cell, atomic
// writes). Existing DONE cells are skipped; FAILED cells are retried. A
// failing cell records FAILED and the sweep continues.
std::vector<RunRecord> data_efficiency_sweep(const SweepSpec& spec, const DatasetBundle& data,
                                             const std::filesystem::path& records_dir,
                                             const SweepOptions& opts = {});

// Rebuilds the index by scanning the record tree.
std::vector<RunRecord> scan_records(const std::filesystem::path& records_dir);

std::filesystem::path record_path(const std::filesystem::path& records_dir,
                                  const std::string& pipeline, long size, int seed_index);

struct AblationSpec {
    ByolConfig ssl;          // checkpoint_every_epoch must be true
    SegConfig seg;
    DecoderConfig decoder;
    EncoderConfig encoder;
    HeadConfig heads;
    std::vector<int> seeds;
    long subset_size = 0;    // 0: full labeled train set
    uint64_t base_seed = 0;
};

// Fig. 5 protocol: pretrain saving the encoder after every epoch, then one
// downstream fine-tune per (epoch e = 0..E, seed); e = 0 uses base_encoder
// directly. Records carry pipeline key "epoch-<e>".
std::vector<RunRecord> pretrain_epoch_ablation(const NetworkWeights& base_encoder,
                                               const SemiSupervisedDataset& domain_data,
                                               const DatasetBundle& seg_data,
                                               const AblationSpec& spec,
                                               const std::filesystem::path& records_dir);

}  // namespace medseg
