// medseg: pretraining pipelines and data-efficiency experiments for 2D
// cardiac segmentation at desk scale.

#include <CLI11.hpp>

#include "medseg/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised pretraining pipelines for 2D medical image segmentation"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    medseg::CliOptions opts;
    uint64_t seed_flag = 0;
    std::string out_flag;
    int jobs_flag = 0;
    app.add_option("--config", opts.config_path, "experiment configuration file (JSON)");
    auto* seed_opt = app.add_option("--seed", seed_flag, "override the global seed");
    app.add_flag("--deterministic", opts.deterministic, "fixed batch order and rng derivation");
    auto* out_opt = app.add_option("--out", out_flag, "override the output directory");
    app.add_flag("--dry-run", opts.dry_run, "print the resolved plan without computing");
    app.add_flag("--force", opts.force, "overwrite non-empty targets");
    auto* jobs_opt = app.add_option("--jobs", jobs_flag, "parallel harness cells");

    std::string synth_target;
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset directory");
    synth->add_option("--target", synth_target, "dataset directory (default <out>/dataset)");

    auto* pretrain = app.add_subcommand("pretrain", "domain SSL pretraining");
    auto* finetune = app.add_subcommand("finetune", "downstream segmentation fine-tuning");
    auto* pipeline = app.add_subcommand("pipeline", "run one pretraining pipeline");
    auto* sweep = app.add_subcommand("sweep", "data-efficiency sweep grid");
    auto* ablate = app.add_subcommand("ablate-epochs", "domain-pretraining epoch ablation");

    std::string records_dir, analyze_out;
    auto* analyze = app.add_subcommand("analyze", "figures and report from run records");
    analyze->add_option("records", records_dir, "record store directory")->required();
    analyze->add_option("--analysis-out", analyze_out, "analysis output directory");

    CLI11_PARSE(app, argc, argv);
    if (!seed_opt->empty()) opts.seed = seed_flag;
    if (!out_opt->empty()) opts.out = out_flag;
    if (!jobs_opt->empty()) opts.jobs = jobs_flag;

    try {
        if (analyze->parsed()) return medseg::cmd_analyze(records_dir, analyze_out);
        const medseg::ExperimentConfig cfg = medseg::resolve_config(opts);
        if (synth->parsed()) return medseg::cmd_synth_data(cfg, opts, synth_target);
        if (pretrain->parsed()) return medseg::cmd_pretrain(cfg, opts);
        if (finetune->parsed()) return medseg::cmd_finetune(cfg, opts);
        if (pipeline->parsed()) return medseg::cmd_pipeline(cfg, opts);
        if (sweep->parsed()) return medseg::cmd_sweep(cfg, opts);
        if (ablate->parsed()) return medseg::cmd_ablate_epochs(cfg, opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
