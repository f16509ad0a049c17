#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medseg/byol.hpp"
#include "medseg/checkpoint.hpp"
#include "medseg/data.hpp"
#include "medseg/nets.hpp"

namespace medseg {

enum class PipelineKind {
    random_init,
    sup_imagenet,
    byol_imagenet,
    byol_domain,
    sup_imagenet_then_byol_domain,
    byol_imagenet_then_byol_domain,
};

std::string to_string(PipelineKind k);
PipelineKind pipeline_kind_from_string(const std::string& s);
bool pipeline_needs_external_weights(PipelineKind k);
bool pipeline_has_domain_ssl(PipelineKind k);

struct PipelineSpec {
    PipelineKind kind = PipelineKind::random_init;
    std::string external_weights_path;  // required for *_imagenet kinds
    std::optional<ByolConfig> domain_ssl;  // required for *_byol_domain kinds
    EncoderConfig encoder;                 // downstream (single-channel) encoder layout
    HeadConfig heads;

    void validate() const;
};

struct ProvenanceStage {
    std::string name;
    std::string source;
    int epochs = 0;
    uint64_t seed = 0;
    uint64_t checkpoint_digest = 0;
};

struct Provenance {
    std::vector<ProvenanceStage> stages;
    std::string to_text() const;
};

struct PipelineResult {
    NetworkWeights encoder;
    Provenance provenance;
};

// Validated load of an externally produced checkpoint; the name set must
// match `expected` exactly (with its manifest-declared channel count).
NetworkWeights import_external_weights(const std::filesystem::path& path,
                                       const EncoderConfig& expected);

// Executes the pretraining stages of one pipeline in order. Between stages
// only encoder weights flow; heads are re-initialized per stage; 3->1 channel
// adaptation happens at the first single-channel stage. When out_dir is
// non-empty, per-stage checkpoints (and the stage-entry snapshot init.ckpt
// for stages after the first) plus a provenance manifest are written under
// out_dir/stage-<n>/.
PipelineResult run_pipeline(const PipelineSpec& spec, const SemiSupervisedDataset& unlabeled,
                            uint64_t seed, const std::filesystem::path& out_dir = {},
                            MetricsSink* sink = nullptr);

}  // namespace medseg
