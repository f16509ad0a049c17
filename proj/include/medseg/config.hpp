#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medseg/harness.hpp"

namespace medseg {

struct DataConfig {
    std::string source = "synthetic";  // synthetic | directory
    std::string root;                  // directory source (MEDSEG_DATA_ROOT honored)
    int patients = 10;
    int frames = 25;
    int slices = 4;
    int image_size = 64;
    uint64_t data_seed = 0;
    double train_frac = 0.7;
    double val_frac = 0.15;
    uint64_t split_seed = 0;
};

struct FinetuneSection {
    long subset_size = 0;  // 0: full labeled train set
    std::string encoder_checkpoint;
};

struct SweepSection {
    std::string name = "main";
    // < 1: fraction of the labeled train set, >= 1: absolute count
    std::vector<double> sizes;          // empty: default grid
    int seeds = 10;
    std::vector<std::string> pipelines;  // empty: all six kinds
};

struct AblateSection {
    int epochs = 5;
    int seeds = 2;
    long subset_size = 0;
};

struct ExternalWeights {
    std::string sup_imagenet;
    std::string byol_imagenet;
};

struct ExperimentConfig {
    uint64_t seed = 0;
    bool deterministic = true;
    std::string out_dir = "out";
    int jobs = 1;
    DataConfig data;
    AugmentConfig augment;
    EncoderConfig encoder;
    HeadConfig heads;
    DecoderConfig decoder;  // empty stage_channels: defaults for the encoder
    ByolConfig byol;
    SegConfig seg;
    std::string pipeline_kind = "byol-domain";
    ExternalWeights external_weights;
    FinetuneSection finetune;
    SweepSection sweep;
    AblateSection ablate;

    DecoderConfig resolved_decoder() const;
    PipelineSpec make_pipeline_spec(const std::string& kind_name) const;
    std::vector<std::string> sweep_pipeline_names() const;
    std::vector<double> sweep_size_grid() const;
};

ExperimentConfig default_config();

// Strict parse: unknown keys are rejected by name; syntax errors are reported
// with line and column.
ExperimentConfig parse_config_json(const std::string& text, const std::string& context);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace medseg
