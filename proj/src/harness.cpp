#include "medseg/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "medseg/errors.hpp"
#include "medseg/metrics.hpp"

namespace medseg {

namespace fs = std::filesystem;

uint64_t RunRecord::digest() const {
    // canonical digest text; wall_seconds intentionally excluded
    std::string s = pipeline + "|" + std::to_string(subset_size) + "|" +
                    std::to_string(seed_index) + "|" + std::to_string(cell_seed) + "|" + status +
                    "|" + error + "|" + format_g17(final_test_loss) + "|" +
                    format_g17(final_test_iou);
    for (size_t i = 0; i < curve.steps.size(); ++i)
        s += "|" + std::to_string(curve.steps[i]) + "," + format_g17(curve.train_loss[i]) + "," +
             format_g17(curve.eval_iou[i]) + "," + format_g17(curve.eval_loss[i]);
    return fnv1a64(s);
}

std::string record_to_json(const RunRecord& r) {
    nlohmann::json j;
    j["pipeline"] = r.pipeline;
    j["subset_size"] = r.subset_size;
    j["seed_index"] = r.seed_index;
    j["cell_seed"] = r.cell_seed;
    j["curve"] = {{"steps", r.curve.steps},
                  {"train_loss", r.curve.train_loss},
                  {"eval_iou", r.curve.eval_iou},
                  {"eval_loss", r.curve.eval_loss}};
    j["final_test_loss"] = r.final_test_loss;
    j["final_test_iou"] = r.final_test_iou;
    j["wall_seconds"] = r.wall_seconds;
    j["status"] = r.status;
    j["error"] = r.error;
    j["digest"] = r.digest();
    return j.dump(2);
}

RunRecord record_from_json(const std::string& text, const std::string& context) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(context + ": bad run record: " + e.what());
    }
    RunRecord r;
    r.pipeline = j.at("pipeline").get<std::string>();
    r.subset_size = j.at("subset_size").get<long>();
    r.seed_index = j.at("seed_index").get<int>();
    r.cell_seed = j.at("cell_seed").get<uint64_t>();
    r.curve.steps = j.at("curve").at("steps").get<std::vector<long>>();
    r.curve.train_loss = j.at("curve").at("train_loss").get<std::vector<double>>();
    r.curve.eval_iou = j.at("curve").at("eval_iou").get<std::vector<double>>();
    r.curve.eval_loss = j.at("curve").at("eval_loss").get<std::vector<double>>();
    r.final_test_loss = j.at("final_test_loss").get<double>();
    r.final_test_iou = j.at("final_test_iou").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    return r;
}

void SweepSpec::validate() const {
    if (subset_sizes.empty() || seeds.empty() || pipelines.empty())
        throw ArgumentError("SweepSpec: sizes, seeds and pipelines must be non-empty");
    std::set<int> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size()) throw ArgumentError("SweepSpec: seeds must be distinct");
    for (const auto& p : pipelines) p.validate();
    seg.validate();
}

std::vector<double> default_subset_grid() {
    // 1 sample, then log-spaced fractions up to the full labeled set
    return {1.0, 0.005, 0.01, 0.02, 0.05, 0.10, 0.25, 0.50, 1.0};
}

std::vector<long> resolve_subset_sizes(const std::vector<double>& raw, long n_labeled) {
    std::vector<long> sizes;
    std::set<long> seen;
    for (double v : raw) {
        long n = 0;
        if (v < 1.0)
            n = static_cast<long>(std::ceil(v * static_cast<double>(n_labeled)));
        else
            n = static_cast<long>(std::llround(v));
        n = std::clamp<long>(n, 1, n_labeled);
        if (seen.insert(n).second) sizes.push_back(n);
    }
    return sizes;
}

fs::path record_path(const fs::path& records_dir, const std::string& pipeline, long size,
                     int seed_index) {
    return records_dir / pipeline / std::to_string(size) /
           ("seed" + std::to_string(seed_index) + ".json");
}

namespace {

void write_record_atomic(const RunRecord& r, const fs::path& path) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw FormatError("cannot write record: " + path.string());
        out << record_to_json(r) << "\n";
    }
    fs::rename(tmp, path);
}

struct Cell {
    size_t pipeline_idx;
    long size;
    int seed_index;
};

}  // namespace

std::vector<RunRecord> data_efficiency_sweep(const SweepSpec& spec, const DatasetBundle& data,
                                             const fs::path& records_dir,
                                             const SweepOptions& opts) {
    spec.validate();
    fs::create_directories(records_dir);

    // one pretraining pass per pipeline, cached on disk for resumability
    std::vector<NetworkWeights> encoders(spec.pipelines.size());
    for (size_t pi = 0; pi < spec.pipelines.size(); ++pi) {
        const PipelineSpec& p = spec.pipelines[pi];
        const fs::path cache = records_dir / "encoders" / (to_string(p.kind) + ".ckpt");
        if (fs::exists(cache)) {
            encoders[pi] = load_checkpoint(cache);
            continue;
        }
        const uint64_t pseed = derive_seed(spec.sweep_seed, {fnv1a64("pipeline"),
                                                             fnv1a64(to_string(p.kind))});
        PipelineResult res = run_pipeline(p, data.train, pseed,
                                          records_dir / "encoders" / to_string(p.kind));
        save_checkpoint(res.encoder, cache);
        encoders[pi] = std::move(res.encoder);
    }

    std::vector<Cell> todo;
    for (size_t pi = 0; pi < spec.pipelines.size(); ++pi)
        for (long size : spec.subset_sizes)
            for (int s : spec.seeds) todo.push_back({pi, size, s});

    std::atomic<size_t> next{0};
    std::atomic<long> completed{0};
    std::mutex io_mutex;

    auto run_cell = [&](const Cell& cell) {
        const PipelineSpec& p = spec.pipelines[cell.pipeline_idx];
        const std::string key = to_string(p.kind);
        const fs::path path = record_path(records_dir, key, cell.size, cell.seed_index);
        if (fs::exists(path)) {
            std::ifstream in(path);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            RunRecord old = record_from_json(text, path.string());
            if (old.status == "DONE") return;  // resumable: completed cells are final
        }

        RunRecord rec;
        rec.pipeline = key;
        rec.subset_size = cell.size;
        rec.seed_index = cell.seed_index;
        rec.cell_seed = derive_seed(spec.sweep_seed,
                                    {fnv1a64(key), static_cast<uint64_t>(cell.size),
                                     static_cast<uint64_t>(cell.seed_index)});
        const auto t0 = std::chrono::steady_clock::now();
        try {
            // subsets are shared across pipelines per seed: f(sweep_seed, s)
            const uint64_t subset_seed =
                derive_seed(spec.sweep_seed, {fnv1a64("subset-seed"),
                                              static_cast<uint64_t>(cell.seed_index)});
            const std::vector<int> subset = sample_labeled_subset(
                data.train, SubsetSpec::of_count(cell.size, subset_seed));
            SegConfig cfg = spec.seg;
            cfg.encoder_init = EncoderInit::from_checkpoint;
            FinetuneResult ft = finetune(encoders[cell.pipeline_idx], subset, data,
                                         p.encoder, spec.decoder, cfg, rec.cell_seed);
            rec.curve = std::move(ft.curve);
            rec.final_test_loss = ft.test_loss;
            rec.final_test_iou = ft.test_iou;
            rec.status = "DONE";
        } catch (const std::exception& e) {
            rec.status = "FAILED";
            rec.error = e.what();
            std::lock_guard<std::mutex> lock(io_mutex);
            std::cerr << "sweep cell (" << key << "," << cell.size << "," << cell.seed_index
                      << ") failed: " << e.what() << "\n";
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_record_atomic(rec, path);
        ++completed;
    };

    auto worker = [&]() {
        while (true) {
            if (opts.max_cells >= 0 && completed.load() >= opts.max_cells) return;
            const size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            run_cell(todo[i]);
        }
    };

    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return scan_records(records_dir);
}

std::vector<RunRecord> scan_records(const fs::path& records_dir) {
    std::vector<RunRecord> out;
    if (!fs::exists(records_dir)) return out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(records_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::set<std::string> keys;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        RunRecord r = record_from_json(text, f.string());
        const std::string key = r.pipeline + "/" + std::to_string(r.subset_size) + "/" +
                                std::to_string(r.seed_index);
        if (!keys.insert(key).second)
            throw IntegrityError("duplicate run record key: " + key);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RunRecord> pretrain_epoch_ablation(const NetworkWeights& base_encoder,
                                               const SemiSupervisedDataset& domain_data,
                                               const DatasetBundle& seg_data,
                                               const AblationSpec& spec,
                                               const fs::path& records_dir) {
    if (!spec.ssl.checkpoint_every_epoch)
        throw ArgumentError("pretrain_epoch_ablation: checkpoint_every_epoch must be true");
    if (spec.seeds.empty()) throw ArgumentError("pretrain_epoch_ablation: seeds must be non-empty");
    fs::create_directories(records_dir);

    const uint64_t ssl_seed = derive_seed(spec.base_seed, "ablate-ssl");
    PretrainResult pre = pretrain(domain_data, spec.ssl, base_encoder, spec.encoder, spec.heads,
                                  ssl_seed);
    if (static_cast<int>(pre.checkpoints.size()) != spec.ssl.epochs)
        throw ContractError("pretrain_epoch_ablation: expected one checkpoint per epoch");

    std::vector<int> subset;
    if (spec.subset_size > 0) {
        subset = sample_labeled_subset(
            seg_data.train, SubsetSpec::of_count(spec.subset_size,
                                                 derive_seed(spec.base_seed, "ablate-subset")));
    } else {
        subset = seg_data.train.labeled_indices;
    }

    std::vector<RunRecord> records;
    for (int e = 0; e <= spec.ssl.epochs; ++e) {
        const NetworkWeights& enc = e == 0 ? base_encoder
                                           : pre.checkpoints[static_cast<size_t>(e - 1)];
        for (int s : spec.seeds) {
            RunRecord rec;
            rec.pipeline = "epoch-" + std::to_string(e);
            rec.subset_size = static_cast<long>(subset.size());
            rec.seed_index = s;
            // shared across epochs so curves are paired per seed; e=0 equals
            // a direct fine-tune from the base encoder with this seed
            rec.cell_seed = derive_seed(spec.base_seed,
                                        {fnv1a64("ablate-cell"), static_cast<uint64_t>(s)});
            const fs::path path = record_path(records_dir, rec.pipeline, rec.subset_size, s);
            if (fs::exists(path)) {
                std::ifstream in(path);
                std::string text((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
                RunRecord old = record_from_json(text, path.string());
                if (old.status == "DONE") {
                    records.push_back(std::move(old));
                    continue;
                }
            }
            const auto t0 = std::chrono::steady_clock::now();
            try {
                SegConfig cfg = spec.seg;
                cfg.encoder_init = EncoderInit::from_checkpoint;
                FinetuneResult ft = finetune(enc, subset, seg_data, spec.encoder, spec.decoder,
                                             cfg, rec.cell_seed);
                rec.curve = std::move(ft.curve);
                rec.final_test_loss = ft.test_loss;
                rec.final_test_iou = ft.test_iou;
                rec.status = "DONE";
            } catch (const std::exception& ex) {
                rec.status = "FAILED";
                rec.error = ex.what();
                std::cerr << "ablation cell (epoch " << e << ", seed " << s
                          << ") failed: " << ex.what() << "\n";
            }
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_record_atomic(rec, path);
            records.push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace medseg
