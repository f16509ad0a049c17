#include "medseg/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "medseg/analysis.hpp"
#include "medseg/errors.hpp"

namespace medseg {

namespace fs = std::filesystem;

ExperimentConfig resolve_config(const CliOptions& opts) {
    ExperimentConfig cfg =
        opts.config_path.empty() ? default_config() : load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out) cfg.out_dir = *opts.out;
    if (opts.deterministic) cfg.deterministic = true;
    if (opts.jobs) cfg.jobs = *opts.jobs;
    return cfg;
}

DatasetBundle load_data(const ExperimentConfig& cfg) {
    if (cfg.data.source == "directory") {
        std::string root = cfg.data.root;
        if (const char* env = std::getenv("MEDSEG_DATA_ROOT"); env && root.empty()) {
            root = env;
            std::cerr << "data root from MEDSEG_DATA_ROOT: " << root << "\n";
        }
        if (root.empty()) throw ConfigError("data.source=directory but no root configured");
        return load_directory_dataset(root);
    }
    SemiSupervisedDataset full =
        generate_synthetic_dataset(cfg.data.patients, cfg.data.frames, cfg.data.slices,
                                   cfg.data.image_size, cfg.data.data_seed);
    return split_by_patient(full, cfg.data.train_frac, cfg.data.val_frac, cfg.data.split_seed);
}

namespace {

int fail(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return 1;
}

std::optional<NetworkWeights> maybe_load_encoder(const ExperimentConfig& cfg) {
    if (cfg.finetune.encoder_checkpoint.empty()) return std::nullopt;
    return load_checkpoint(cfg.finetune.encoder_checkpoint);
}

}  // namespace

int cmd_synth_data(const ExperimentConfig& cfg, const CliOptions& opts,
                   const std::string& target_dir) {
    try {
        const fs::path target =
            target_dir.empty() ? fs::path(cfg.out_dir) / "dataset" : fs::path(target_dir);
        if (fs::exists(target) && !fs::is_empty(target) && !opts.force)
            return fail("target directory exists and is not empty (use --force): " +
                        target.string());
        if (opts.dry_run) {
            const long total = static_cast<long>(cfg.data.patients) * cfg.data.frames *
                               cfg.data.slices;
            std::cout << "plan: synthesize " << total << " slices (" << cfg.data.patients
                      << " patients x " << cfg.data.frames << " frames x " << cfg.data.slices
                      << " slices, " << cfg.data.image_size << "px) into " << target.string()
                      << "\n";
            return 0;
        }
        SemiSupervisedDataset full =
            generate_synthetic_dataset(cfg.data.patients, cfg.data.frames, cfg.data.slices,
                                       cfg.data.image_size, cfg.data.data_seed);
        DatasetBundle bundle =
            split_by_patient(full, cfg.data.train_frac, cfg.data.val_frac, cfg.data.split_seed);
        write_directory_dataset(bundle, target);
        const DatasetStats st = dataset_stats(bundle);
        std::cout << "wrote " << st.total_slices << " slices (" << st.total_labeled
                  << " labeled, fraction " << format_fixed(st.labeled_fraction, 4) << ") to "
                  << target.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int cmd_pretrain(const ExperimentConfig& cfg, const CliOptions& opts) {
    try {
        DatasetBundle data = load_data(cfg);
        ByolConfig ssl = cfg.byol;
        ssl.augment = cfg.augment;
        const long n = static_cast<long>(data.train.slices.size());
        const long steps = ssl.epochs * (n / std::min<long>(ssl.batch_size, std::max<long>(n, 1)));
        if (opts.dry_run) {
            std::cout << "plan: ssl pretraining, " << ssl.epochs << " epochs over " << n
                      << " slices (batch " << ssl.batch_size << ", ~" << steps << " steps)\n";
            return 0;
        }
        const fs::path out = fs::path(cfg.out_dir) / "pretrain";
        fs::create_directories(out);
        FileMetricsSink sink(out / "metrics.csv");
        EncoderConfig enc = cfg.encoder;
        enc.in_channels = 1;
        std::optional<NetworkWeights> init = maybe_load_encoder(cfg);
        PretrainResult res =
            pretrain(data.train, ssl, init, enc, cfg.heads, cfg.seed, &sink);
        save_checkpoint(res.encoder, out / "encoder.ckpt");
        for (size_t e = 0; e < res.checkpoints.size(); ++e)
            save_checkpoint(res.checkpoints[e],
                            out / ("encoder-epoch" + std::to_string(e + 1) + ".ckpt"));
        std::cout << "pretrained encoder saved to " << (out / "encoder.ckpt").string() << " ("
                  << res.history.size() << " steps)\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int cmd_finetune(const ExperimentConfig& cfg, const CliOptions& opts) {
    try {
        DatasetBundle data = load_data(cfg);
        EncoderConfig enc = cfg.encoder;
        enc.in_channels = 1;
        SegConfig seg = cfg.seg;
        seg.augment = cfg.augment;
        const long n_labeled = static_cast<long>(data.train.labeled_indices.size());
        const long total = seg.resolved_total_steps(n_labeled);
        const long subset_size =
            cfg.finetune.subset_size > 0 ? cfg.finetune.subset_size : n_labeled;
        if (opts.dry_run) {
            std::cout << "plan: fine-tune on " << subset_size << "/" << n_labeled
                      << " labeled slices for " << total << " steps (eval every "
                      << seg.eval_every_steps << ", " << total / seg.eval_every_steps
                      << " curve points)\n";
            return 0;
        }
        const fs::path out = fs::path(cfg.out_dir) / "finetune";
        fs::create_directories(out);
        FileMetricsSink sink(out / "metrics.csv");
        std::optional<NetworkWeights> encoder = maybe_load_encoder(cfg);
        if (seg.encoder_init == EncoderInit::from_checkpoint && !encoder)
            return fail("seg.encoder_init=from_checkpoint requires finetune.encoder_checkpoint");
        const std::vector<int> subset = sample_labeled_subset(
            data.train,
            SubsetSpec::of_count(subset_size, derive_seed(cfg.seed, "finetune-subset")));
        FinetuneResult res = finetune(encoder, subset, data, enc, cfg.resolved_decoder(), seg,
                                      cfg.seed, &sink);
        save_checkpoint(res.weights, out / "unet.ckpt");
        std::cout << "final test IoU " << format_fixed(res.test_iou, 4) << ", test loss "
                  << format_fixed(res.test_loss, 4) << "; curve points " << res.curve.size()
                  << "; artifacts in " << out.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int cmd_pipeline(const ExperimentConfig& cfg, const CliOptions& opts) {
    try {
        PipelineSpec spec = cfg.make_pipeline_spec(cfg.pipeline_kind);
        spec.validate();
        if (opts.dry_run) {
            std::cout << "plan: pipeline " << to_string(spec.kind)
                      << (pipeline_has_domain_ssl(spec.kind)
                              ? " (domain SSL " + std::to_string(spec.domain_ssl->epochs) +
                                    " epochs)"
                              : "")
                      << ", seed " << cfg.seed << "\n";
            return 0;
        }
        DatasetBundle data = load_data(cfg);
        const fs::path out = fs::path(cfg.out_dir) / "runs" / to_string(spec.kind) /
                             std::to_string(cfg.seed);
        FileMetricsSink sink((fs::create_directories(out), out / "metrics.csv"));
        PipelineResult res = run_pipeline(spec, data.train, cfg.seed, out, &sink);
        save_checkpoint(res.encoder, out / "encoder.ckpt");
        std::cout << "pipeline " << to_string(spec.kind) << " done; "
                  << res.provenance.stages.size() << " stage(s); encoder at "
                  << (out / "encoder.ckpt").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int cmd_sweep(const ExperimentConfig& cfg, const CliOptions& opts) {
    try {
        const std::vector<std::string> pipeline_names = cfg.sweep_pipeline_names();
        const std::vector<double> raw_sizes = cfg.sweep_size_grid();
        if (opts.dry_run) {
            std::cout << "plan: " << raw_sizes.size() << " sizes x " << cfg.sweep.seeds
                      << " seeds x " << pipeline_names.size() << " pipelines = "
                      << raw_sizes.size() * static_cast<size_t>(cfg.sweep.seeds) *
                             pipeline_names.size()
                      << " cells\n";
            return 0;
        }
        DatasetBundle data = load_data(cfg);
        SweepSpec spec;
        spec.name = cfg.sweep.name;
        spec.sweep_seed = cfg.seed;
        spec.subset_sizes = resolve_subset_sizes(
            raw_sizes, static_cast<long>(data.train.labeled_indices.size()));
        for (int s = 0; s < cfg.sweep.seeds; ++s) spec.seeds.push_back(s);
        for (const std::string& name : pipeline_names)
            spec.pipelines.push_back(cfg.make_pipeline_spec(name));
        spec.seg = cfg.seg;
        spec.seg.augment = cfg.augment;
        spec.decoder = cfg.resolved_decoder();

        SweepOptions sw;
        sw.jobs = cfg.jobs;
        const fs::path records = fs::path(cfg.out_dir) / "sweeps" / spec.name;
        const std::vector<RunRecord> recs = data_efficiency_sweep(spec, data, records, sw);
        long done = 0, failed = 0;
        for (const auto& r : recs) (r.status == "DONE" ? done : failed)++;
        std::cout << "sweep '" << spec.name << "': " << done << " done, " << failed
                  << " failed, records under " << records.string() << "\n";
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int cmd_ablate_epochs(const ExperimentConfig& cfg, const CliOptions& opts) {
    try {
        if (opts.dry_run) {
            std::cout << "plan: epoch ablation, epochs 0.." << cfg.ablate.epochs << " x "
                      << cfg.ablate.seeds << " seeds = "
                      << (cfg.ablate.epochs + 1) * cfg.ablate.seeds << " fine-tuning curves\n";
            return 0;
        }
        DatasetBundle data = load_data(cfg);
        EncoderConfig enc = cfg.encoder;
        enc.in_channels = 1;

        NetworkWeights base;
        if (std::optional<NetworkWeights> loaded = maybe_load_encoder(cfg)) {
            base = std::move(*loaded);
        } else {
            Rng rng(derive_seed(cfg.seed, "ablate-base"));
            base = build_encoder(enc, rng);
        }

        AblationSpec spec;
        spec.ssl = cfg.byol;
        spec.ssl.augment = cfg.augment;
        spec.ssl.epochs = cfg.ablate.epochs;
        spec.ssl.checkpoint_every_epoch = true;
        spec.seg = cfg.seg;
        spec.seg.augment = cfg.augment;
        spec.decoder = cfg.resolved_decoder();
        spec.encoder = enc;
        spec.heads = cfg.heads;
        for (int s = 0; s < cfg.ablate.seeds; ++s) spec.seeds.push_back(s);
        spec.subset_size = cfg.ablate.subset_size;
        spec.base_seed = cfg.seed;

        const fs::path records = fs::path(cfg.out_dir) / "ablate";
        const std::vector<RunRecord> recs =
            pretrain_epoch_ablation(base, data.train, data, spec, records);

        // convergence trend per epoch count
        std::cout << "epoch ablation summary (mean convergence steps of eval IoU):\n";
        for (int e = 0; e <= cfg.ablate.epochs; ++e) {
            double sum = 0.0;
            int count = 0;
            for (const auto& r : recs) {
                if (r.status != "DONE" || r.pipeline != "epoch-" + std::to_string(e)) continue;
                sum += static_cast<double>(convergence_steps(r.curve, "eval_iou").step);
                ++count;
            }
            if (count)
                std::cout << "  epochs=" << e << ": " << format_fixed(sum / count, 1) << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int cmd_analyze(const std::string& records_dir, const std::string& out_dir) {
    try {
        const std::vector<RunRecord> records = scan_records(records_dir);
        if (records.empty()) return fail("no run records under " + records_dir);
        const fs::path out = out_dir.empty() ? fs::path(records_dir) / "analysis"
                                             : fs::path(out_dir);
        fs::create_directories(out);
        const auto files = emit_figures(records, out / "figures");
        const std::string report = summary_report(records);
        std::ofstream rep(out / "report.md");
        rep << report;
        std::cout << "analyzed " << records.size() << " records; " << files.size()
                  << " figure files and report.md under " << out.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

}  // namespace medseg
