#include "medseg/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "medseg/errors.hpp"

namespace medseg {

using nlohmann::json;

DecoderConfig ExperimentConfig::resolved_decoder() const {
    if (!decoder.stage_channels.empty()) return decoder;
    DecoderConfig d = DecoderConfig::defaults_for(encoder);
    d.out_classes = decoder.out_classes;
    return d;
}

PipelineSpec ExperimentConfig::make_pipeline_spec(const std::string& kind_name) const {
    PipelineSpec spec;
    spec.kind = pipeline_kind_from_string(kind_name);
    spec.encoder = encoder;
    spec.encoder.in_channels = 1;
    spec.heads = heads;
    if (pipeline_has_domain_ssl(spec.kind)) {
        ByolConfig ssl = byol;
        ssl.augment = augment;
        spec.domain_ssl = ssl;
    }
    switch (spec.kind) {
        case PipelineKind::sup_imagenet:
        case PipelineKind::sup_imagenet_then_byol_domain:
            spec.external_weights_path = external_weights.sup_imagenet;
            break;
        case PipelineKind::byol_imagenet:
        case PipelineKind::byol_imagenet_then_byol_domain:
            spec.external_weights_path = external_weights.byol_imagenet;
            break;
        default: break;
    }
    return spec;
}

std::vector<std::string> ExperimentConfig::sweep_pipeline_names() const {
    if (!sweep.pipelines.empty()) return sweep.pipelines;
    return {"random-init",  "sup-imagenet",             "byol-imagenet",
            "byol-domain",  "sup-imagenet+byol-domain", "byol-imagenet+byol-domain"};
}

std::vector<double> ExperimentConfig::sweep_size_grid() const {
    return sweep.sizes.empty() ? default_subset_grid() : sweep.sizes;
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" +
                              (section.empty() ? it.key() : section + "." + it.key()) + "'");
}

template <class T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void parse_range(const json& j, const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 2)
        throw ConfigError(std::string("config key '") + key + "' must be [lo, hi]");
    lo = arr[0].get<double>();
    hi = arr[1].get<double>();
}

void parse_data(const json& j, DataConfig& d) {
    check_keys(j, "data",
               {"source", "root", "patients", "frames", "slices", "image_size", "data_seed",
                "train_frac", "val_frac", "split_seed"});
    get_to(j, "source", d.source);
    get_to(j, "root", d.root);
    get_to(j, "patients", d.patients);
    get_to(j, "frames", d.frames);
    get_to(j, "slices", d.slices);
    get_to(j, "image_size", d.image_size);
    get_to(j, "data_seed", d.data_seed);
    get_to(j, "train_frac", d.train_frac);
    get_to(j, "val_frac", d.val_frac);
    get_to(j, "split_seed", d.split_seed);
    if (d.source != "synthetic" && d.source != "directory")
        throw ConfigError("data.source must be 'synthetic' or 'directory'");
}

void parse_augment(const json& j, AugmentConfig& a) {
    check_keys(j, "augment",
               {"output_size", "crop_scale", "hflip_prob", "brightness_delta_max", "contrast"});
    get_to(j, "output_size", a.output_size);
    parse_range(j, "crop_scale", a.crop_scale_lo, a.crop_scale_hi);
    get_to(j, "hflip_prob", a.hflip_prob);
    get_to(j, "brightness_delta_max", a.brightness_delta_max);
    parse_range(j, "contrast", a.contrast_lo, a.contrast_hi);
}

void parse_encoder(const json& j, EncoderConfig& e) {
    check_keys(j, "encoder", {"variant", "stage_widths"});
    if (j.contains("variant")) e.variant = encoder_variant_from_string(j.at("variant"));
    get_to(j, "stage_widths", e.stage_widths);
}

void parse_heads(const json& j, HeadConfig& h) {
    check_keys(j, "heads", {"proj_hidden", "proj_out", "pred_hidden", "pred_out"});
    get_to(j, "proj_hidden", h.proj_hidden);
    get_to(j, "proj_out", h.proj_out);
    get_to(j, "pred_hidden", h.pred_hidden);
    get_to(j, "pred_out", h.pred_out);
}

void parse_decoder(const json& j, DecoderConfig& d) {
    check_keys(j, "decoder", {"stage_channels", "out_classes"});
    get_to(j, "stage_channels", d.stage_channels);
    get_to(j, "out_classes", d.out_classes);
}

void parse_byol(const json& j, ByolConfig& b) {
    check_keys(j, "byol",
               {"tau_base", "tau_schedule", "learning_rate", "momentum", "epochs", "batch_size",
                "checkpoint_every_epoch"});
    get_to(j, "tau_base", b.tau_base);
    if (j.contains("tau_schedule")) {
        const std::string s = j.at("tau_schedule");
        if (s == "constant")
            b.tau_schedule = TauSchedule::constant;
        else if (s == "cosine_to_one")
            b.tau_schedule = TauSchedule::cosine_to_one;
        else
            throw ConfigError("byol.tau_schedule must be 'constant' or 'cosine_to_one'");
    }
    get_to(j, "learning_rate", b.learning_rate);
    get_to(j, "momentum", b.momentum);
    get_to(j, "epochs", b.epochs);
    get_to(j, "batch_size", b.batch_size);
    get_to(j, "checkpoint_every_epoch", b.checkpoint_every_epoch);
}

void parse_seg(const json& j, SegConfig& s) {
    check_keys(j, "seg",
               {"total_steps", "epochs_equivalent", "batch_size", "lr_max", "lr_min",
                "anneal_period_steps", "eval_every_steps", "encoder_init", "jaccard_eps"});
    get_to(j, "total_steps", s.total_steps);
    get_to(j, "epochs_equivalent", s.epochs_equivalent);
    get_to(j, "batch_size", s.batch_size);
    get_to(j, "lr_max", s.lr_max);
    get_to(j, "lr_min", s.lr_min);
    get_to(j, "anneal_period_steps", s.anneal_period_steps);
    get_to(j, "eval_every_steps", s.eval_every_steps);
    if (j.contains("encoder_init")) {
        const std::string v = j.at("encoder_init");
        if (v == "random")
            s.encoder_init = EncoderInit::random;
        else if (v == "from_checkpoint")
            s.encoder_init = EncoderInit::from_checkpoint;
        else
            throw ConfigError("seg.encoder_init must be 'random' or 'from_checkpoint'");
    }
    get_to(j, "jaccard_eps", s.jaccard_eps);
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text, const std::string& context) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // report line and column from the byte offset
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(context + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": " + e.what());
    }

    check_keys(j, "",
               {"seed", "deterministic", "out_dir", "jobs", "data", "augment", "encoder",
                "heads", "decoder", "byol", "seg", "pipeline", "external_weights", "finetune",
                "sweep", "ablate"});

    ExperimentConfig cfg;
    get_to(j, "seed", cfg.seed);
    get_to(j, "deterministic", cfg.deterministic);
    get_to(j, "out_dir", cfg.out_dir);
    get_to(j, "jobs", cfg.jobs);
    if (j.contains("data")) parse_data(j.at("data"), cfg.data);
    if (j.contains("augment")) parse_augment(j.at("augment"), cfg.augment);
    if (j.contains("encoder")) parse_encoder(j.at("encoder"), cfg.encoder);
    if (j.contains("heads")) parse_heads(j.at("heads"), cfg.heads);
    if (j.contains("decoder")) parse_decoder(j.at("decoder"), cfg.decoder);
    if (j.contains("byol")) parse_byol(j.at("byol"), cfg.byol);
    if (j.contains("seg")) parse_seg(j.at("seg"), cfg.seg);
    if (j.contains("pipeline")) {
        check_keys(j.at("pipeline"), "pipeline", {"kind"});
        get_to(j.at("pipeline"), "kind", cfg.pipeline_kind);
    }
    if (j.contains("external_weights")) {
        check_keys(j.at("external_weights"), "external_weights", {"sup_imagenet", "byol_imagenet"});
        get_to(j.at("external_weights"), "sup_imagenet", cfg.external_weights.sup_imagenet);
        get_to(j.at("external_weights"), "byol_imagenet", cfg.external_weights.byol_imagenet);
    }
    if (j.contains("finetune")) {
        check_keys(j.at("finetune"), "finetune", {"subset_size", "encoder_checkpoint"});
        get_to(j.at("finetune"), "subset_size", cfg.finetune.subset_size);
        get_to(j.at("finetune"), "encoder_checkpoint", cfg.finetune.encoder_checkpoint);
    }
    if (j.contains("sweep")) {
        check_keys(j.at("sweep"), "sweep", {"name", "sizes", "seeds", "pipelines"});
        get_to(j.at("sweep"), "name", cfg.sweep.name);
        get_to(j.at("sweep"), "sizes", cfg.sweep.sizes);
        get_to(j.at("sweep"), "seeds", cfg.sweep.seeds);
        get_to(j.at("sweep"), "pipelines", cfg.sweep.pipelines);
    }
    if (j.contains("ablate")) {
        check_keys(j.at("ablate"), "ablate", {"epochs", "seeds", "subset_size"});
        get_to(j.at("ablate"), "epochs", cfg.ablate.epochs);
        get_to(j.at("ablate"), "seeds", cfg.ablate.seeds);
        get_to(j.at("ablate"), "subset_size", cfg.ablate.subset_size);
    }

    // shared augmentation chain for SSL and downstream training
    cfg.byol.augment = cfg.augment;
    cfg.seg.augment = cfg.augment;
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_json(text, path.string());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["deterministic"] = cfg.deterministic;
    j["out_dir"] = cfg.out_dir;
    j["jobs"] = cfg.jobs;
    j["data"] = {{"source", cfg.data.source},       {"root", cfg.data.root},
                 {"patients", cfg.data.patients},   {"frames", cfg.data.frames},
                 {"slices", cfg.data.slices},       {"image_size", cfg.data.image_size},
                 {"data_seed", cfg.data.data_seed}, {"train_frac", cfg.data.train_frac},
                 {"val_frac", cfg.data.val_frac},   {"split_seed", cfg.data.split_seed}};
    j["augment"] = {{"output_size", cfg.augment.output_size},
                    {"crop_scale", {cfg.augment.crop_scale_lo, cfg.augment.crop_scale_hi}},
                    {"hflip_prob", cfg.augment.hflip_prob},
                    {"brightness_delta_max", cfg.augment.brightness_delta_max},
                    {"contrast", {cfg.augment.contrast_lo, cfg.augment.contrast_hi}}};
    j["encoder"] = {{"variant", to_string(cfg.encoder.variant)},
                    {"stage_widths", cfg.encoder.stage_widths}};
    j["heads"] = {{"proj_hidden", cfg.heads.proj_hidden},
                  {"proj_out", cfg.heads.proj_out},
                  {"pred_hidden", cfg.heads.pred_hidden},
                  {"pred_out", cfg.heads.pred_out}};
    j["decoder"] = {{"stage_channels", cfg.decoder.stage_channels},
                    {"out_classes", cfg.decoder.out_classes}};
    j["byol"] = {{"tau_base", cfg.byol.tau_base},
                 {"tau_schedule",
                  cfg.byol.tau_schedule == TauSchedule::constant ? "constant" : "cosine_to_one"},
                 {"learning_rate", cfg.byol.learning_rate},
                 {"momentum", cfg.byol.momentum},
                 {"epochs", cfg.byol.epochs},
                 {"batch_size", cfg.byol.batch_size},
                 {"checkpoint_every_epoch", cfg.byol.checkpoint_every_epoch}};
    j["seg"] = {{"total_steps", cfg.seg.total_steps},
                {"epochs_equivalent", cfg.seg.epochs_equivalent},
                {"batch_size", cfg.seg.batch_size},
                {"lr_max", cfg.seg.lr_max},
                {"lr_min", cfg.seg.lr_min},
                {"anneal_period_steps", cfg.seg.anneal_period_steps},
                {"eval_every_steps", cfg.seg.eval_every_steps},
                {"encoder_init",
                 cfg.seg.encoder_init == EncoderInit::random ? "random" : "from_checkpoint"},
                {"jaccard_eps", cfg.seg.jaccard_eps}};
    j["pipeline"] = {{"kind", cfg.pipeline_kind}};
    j["external_weights"] = {{"sup_imagenet", cfg.external_weights.sup_imagenet},
                             {"byol_imagenet", cfg.external_weights.byol_imagenet}};
    j["finetune"] = {{"subset_size", cfg.finetune.subset_size},
                     {"encoder_checkpoint", cfg.finetune.encoder_checkpoint}};
    j["sweep"] = {{"name", cfg.sweep.name},
                  {"sizes", cfg.sweep.sizes},
                  {"seeds", cfg.sweep.seeds},
                  {"pipelines", cfg.sweep.pipelines}};
    j["ablate"] = {{"epochs", cfg.ablate.epochs},
                   {"seeds", cfg.ablate.seeds},
                   {"subset_size", cfg.ablate.subset_size}};
    return j.dump(2);
}

}  // namespace medseg
