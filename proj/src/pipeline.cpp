#include "medseg/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "medseg/errors.hpp"

namespace medseg {

namespace fs = std::filesystem;

std::string to_string(PipelineKind k) {
    switch (k) {
        case PipelineKind::random_init: return "random-init";
        case PipelineKind::sup_imagenet: return "sup-imagenet";
        case PipelineKind::byol_imagenet: return "byol-imagenet";
        case PipelineKind::byol_domain: return "byol-domain";
        case PipelineKind::sup_imagenet_then_byol_domain: return "sup-imagenet+byol-domain";
        case PipelineKind::byol_imagenet_then_byol_domain: return "byol-imagenet+byol-domain";
    }
    return "unknown";
}

PipelineKind pipeline_kind_from_string(const std::string& s) {
    for (PipelineKind k :
         {PipelineKind::random_init, PipelineKind::sup_imagenet, PipelineKind::byol_imagenet,
          PipelineKind::byol_domain, PipelineKind::sup_imagenet_then_byol_domain,
          PipelineKind::byol_imagenet_then_byol_domain})
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown pipeline kind: " + s);
}

bool pipeline_needs_external_weights(PipelineKind k) {
    return k == PipelineKind::sup_imagenet || k == PipelineKind::byol_imagenet ||
           k == PipelineKind::sup_imagenet_then_byol_domain ||
           k == PipelineKind::byol_imagenet_then_byol_domain;
}

bool pipeline_has_domain_ssl(PipelineKind k) {
    return k == PipelineKind::byol_domain ||
           k == PipelineKind::sup_imagenet_then_byol_domain ||
           k == PipelineKind::byol_imagenet_then_byol_domain;
}

void PipelineSpec::validate() const {
    encoder.validate();
    heads.validate();
    if (encoder.in_channels != 1)
        throw ConfigError("PipelineSpec: downstream encoder must be single-channel");
    if (pipeline_needs_external_weights(kind) && external_weights_path.empty())
        throw ConfigError("pipeline " + to_string(kind) + " requires external_weights_path");
    if (pipeline_has_domain_ssl(kind) && !domain_ssl)
        throw ConfigError("pipeline " + to_string(kind) + " requires a domain SSL config");
}

std::string Provenance::to_text() const {
    std::string out = "# pipeline provenance\n";
    for (size_t i = 0; i < stages.size(); ++i) {
        const ProvenanceStage& s = stages[i];
        char digest[24];
        std::snprintf(digest, sizeof(digest), "%016llx",
                      static_cast<unsigned long long>(s.checkpoint_digest));
        out += "stage=" + std::to_string(i + 1) + " name=" + s.name + " source=" + s.source +
               " epochs=" + std::to_string(s.epochs) + " seed=" + std::to_string(s.seed) +
               " digest=" + digest + "\n";
    }
    return out;
}

NetworkWeights import_external_weights(const fs::path& path, const EncoderConfig& expected) {
    NetworkWeights w = load_checkpoint(path);
    auto vit = w.meta.find("variant");
    if (vit == w.meta.end())
        throw ImportError(path.string() + ": checkpoint carries no variant meta");
    if (encoder_variant_from_string(vit->second) != expected.variant)
        throw ImportError(path.string() + ": variant " + vit->second + " does not match " +
                          to_string(expected.variant));
    auto cit = w.meta.find("input_channels");
    if (cit == w.meta.end())
        throw ImportError(path.string() + ": checkpoint carries no input_channels meta");

    EncoderConfig layout = expected;
    layout.in_channels = std::stoi(cit->second);
    const auto specs = encoder_param_specs(layout);
    std::vector<std::string> problems;
    for (const auto& s : specs) {
        auto it = w.params.find(s.name);
        if (it == w.params.end())
            problems.push_back("missing " + s.name);
        else if (it->second.shape() != s.shape)
            problems.push_back("shape mismatch " + s.name);
    }
    std::size_t expected_count = specs.size();
    if (w.order.size() != expected_count) {
        for (const auto& name : w.order) {
            bool known = false;
            for (const auto& s : specs)
                if (s.name == name) {
                    known = true;
                    break;
                }
            if (!known) problems.push_back("unexpected " + name);
        }
    }
    if (!problems.empty()) {
        std::string msg = path.string() + ": name-set mismatch:";
        const size_t shown = std::min<size_t>(problems.size(), 10);
        for (size_t i = 0; i < shown; ++i) msg += "\n  " + problems[i];
        if (problems.size() > shown)
            msg += "\n  ... and " + std::to_string(problems.size() - shown) + " more";
        throw ImportError(msg);
    }
    return w;
}

namespace {

void maybe_save(const NetworkWeights& w, const fs::path& out_dir, int stage,
                const std::string& file) {
    if (out_dir.empty()) return;
    save_checkpoint(w, out_dir / ("stage-" + std::to_string(stage)) / file);
}

}  // namespace

PipelineResult run_pipeline(const PipelineSpec& spec, const SemiSupervisedDataset& unlabeled,
                            uint64_t seed, const fs::path& out_dir, MetricsSink* sink) {
    spec.validate();
    if (pipeline_needs_external_weights(spec.kind) &&
        !fs::exists(spec.external_weights_path))
        throw ConfigError("external weights not found: " + spec.external_weights_path);

    PipelineResult result;
    int stage_no = 0;
    NetworkWeights encoder;

    if (pipeline_needs_external_weights(spec.kind)) {
        ++stage_no;
        NetworkWeights imported = import_external_weights(spec.external_weights_path,
                                                          spec.encoder);
        // earliest single-channel stage is the next one; adapt here
        encoder = transfer_encoder_weights(imported, spec.encoder);
        encoder.meta["stage"] = to_string(spec.kind);
        const bool sup = spec.kind == PipelineKind::sup_imagenet ||
                         spec.kind == PipelineKind::sup_imagenet_then_byol_domain;
        result.provenance.stages.push_back({sup ? "import-sup-imagenet" : "import-byol-imagenet",
                                            spec.external_weights_path, 0, seed,
                                            checkpoint_digest(encoder)});
        maybe_save(encoder, out_dir, stage_no, "checkpoint.ckpt");
    } else if (spec.kind == PipelineKind::random_init) {
        ++stage_no;
        Rng rng(derive_seed(seed, {fnv1a64("stage"), static_cast<uint64_t>(stage_no)}));
        encoder = build_encoder(spec.encoder, rng);
        encoder.meta["stage"] = "random-init";
        result.provenance.stages.push_back(
            {"random-init", "kaiming", 0, seed, checkpoint_digest(encoder)});
        maybe_save(encoder, out_dir, stage_no, "checkpoint.ckpt");
    }

    if (pipeline_has_domain_ssl(spec.kind)) {
        ++stage_no;
        const uint64_t stage_seed =
            derive_seed(seed, {fnv1a64("stage"), static_cast<uint64_t>(stage_no)});
        std::optional<NetworkWeights> init;
        if (!encoder.order.empty()) {
            init = encoder;
            maybe_save(encoder, out_dir, stage_no, "init.ckpt");
        }
        PretrainResult pre = pretrain(unlabeled, *spec.domain_ssl, init, spec.encoder,
                                      spec.heads, stage_seed, sink);
        encoder = std::move(pre.encoder);
        encoder.meta["seed"] = std::to_string(stage_seed);
        result.provenance.stages.push_back({"byol-domain", "domain-ssl",
                                            spec.domain_ssl->epochs, stage_seed,
                                            checkpoint_digest(encoder)});
        maybe_save(encoder, out_dir, stage_no, "checkpoint.ckpt");
        if (!out_dir.empty() && spec.domain_ssl->checkpoint_every_epoch) {
            for (size_t e = 0; e < pre.checkpoints.size(); ++e)
                save_checkpoint(pre.checkpoints[e],
                                out_dir / ("stage-" + std::to_string(stage_no)) /
                                    ("epoch-" + std::to_string(e + 1) + ".ckpt"));
        }
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream prov(out_dir / "provenance.txt");
        prov << result.provenance.to_text();
    }
    result.encoder = std::move(encoder);
    return result;
}

}  // namespace medseg
