#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medseg/image.hpp"
#include "medseg/rng.hpp"

namespace medseg {

enum class FrameTag { ed, es, other };
enum class SplitTag { train, val, test };

std::string to_string(FrameTag t);
std::string to_string(SplitTag t);
FrameTag frame_tag_from_string(const std::string& s);
SplitTag split_tag_from_string(const std::string& s);

constexpr int kNumClasses = 4;  // background, RV, MYO, LV

struct SliceRecord {
    Image2D image;
    std::optional<Mask2D> mask;  // present iff frame_tag is ED or ES
    std::string patient_id;
    FrameTag frame_tag = FrameTag::other;
    int frame_index = 0;
    int slice_index = 0;
};

// All 2D slices of one split, with the labeled subset indexed. Immutable
// after construction; safe to share across threads.
struct SemiSupervisedDataset {
    std::vector<SliceRecord> slices;
    std::vector<int> labeled_indices;  // sorted; exactly the slices with a mask
    SplitTag split_tag = SplitTag::train;

    static SemiSupervisedDataset from_slices(std::vector<SliceRecord> slices, SplitTag split);
    size_t size() const { return slices.size(); }
};

struct DatasetBundle {
    SemiSupervisedDataset train;
    SemiSupervisedDataset val;
    SemiSupervisedDataset test;
};

struct SubsetSpec {
    std::optional<long> count;       // absolute count >= 1 ...
    std::optional<double> fraction;  // ... or fraction in (0,1]; exactly one set
    uint64_t seed = 0;

    static SubsetSpec of_count(long n, uint64_t seed) { return {n, std::nullopt, seed}; }
    static SubsetSpec of_fraction(double f, uint64_t seed) { return {std::nullopt, f, seed}; }
};

// Renders randomized concentric ellipse phantoms: background, outer ring (RV
// analog), middle ring (MYO), inner disk (LV), with per-patient geometry
// jitter, a per-frame contraction phase, and additive noise. Exactly two
// frames per cardiac cycle are labeled (ED at phase 0, ES at peak
// contraction). Bit-identical output for identical arguments.
SemiSupervisedDataset generate_synthetic_dataset(int n_patients, int frames_per_cycle,
                                                 int slices_per_frame, int image_size,
                                                 uint64_t seed);

// Patient-disjoint split (default 70/15/15 by patient count), seeded.
DatasetBundle split_by_patient(const SemiSupervisedDataset& ds, double train_frac,
                               double val_frac, uint64_t seed);

// Directory layout: one subdirectory per patient with per-slice PNGs, plus a
// root manifest.txt assigning patient/frame/split per file. Deterministic
// canonical ordering (patient, frame, slice).
DatasetBundle load_directory_dataset(const std::filesystem::path& root);
void write_directory_dataset(const DatasetBundle& bundle, const std::filesystem::path& root);

// Uniform sample without replacement from the labeled indices; sorted;
// count = ceil(fraction * |labeled|) for fractional specs.
std::vector<int> sample_labeled_subset(const SemiSupervisedDataset& ds, const SubsetSpec& spec);

struct SplitStats {
    long n_slices = 0;
    long n_labeled = 0;
    long n_patients = 0;
};

struct DatasetStats {
    SplitStats train, val, test;
    long total_slices = 0;
    long total_labeled = 0;
    double labeled_fraction = 0.0;
    std::array<double, kNumClasses> class_pixel_freq{};  // over labeled masks
};

DatasetStats dataset_stats(const DatasetBundle& bundle);
DatasetStats dataset_stats(const SemiSupervisedDataset& ds);

}  // namespace medseg
