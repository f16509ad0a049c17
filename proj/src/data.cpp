#include "medseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "medseg/errors.hpp"

namespace medseg {

namespace fs = std::filesystem;

std::string to_string(FrameTag t) {
    switch (t) {
        case FrameTag::ed: return "ED";
        case FrameTag::es: return "ES";
        default: return "OTHER";
    }
}

std::string to_string(SplitTag t) {
    switch (t) {
        case SplitTag::train: return "TRAIN";
        case SplitTag::val: return "VAL";
        default: return "TEST";
    }
}

FrameTag frame_tag_from_string(const std::string& s) {
    if (s == "ED") return FrameTag::ed;
    if (s == "ES") return FrameTag::es;
    if (s == "OTHER") return FrameTag::other;
    throw FormatError("unknown frame tag: " + s);
}

SplitTag split_tag_from_string(const std::string& s) {
    if (s == "TRAIN") return SplitTag::train;
    if (s == "VAL") return SplitTag::val;
    if (s == "TEST") return SplitTag::test;
    throw FormatError("unknown split tag: " + s);
}

namespace {

void validate_record(const SliceRecord& r, const std::string& context) {
    const bool labeled_tag = r.frame_tag == FrameTag::ed || r.frame_tag == FrameTag::es;
    if (r.mask.has_value() != labeled_tag)
        throw IntegrityError(context + ": mask must be present exactly for ED/ES frames");
    if (r.mask) {
        if (r.mask->h != r.image.h || r.mask->w != r.image.w)
            throw IntegrityError(context + ": mask shape does not match image shape");
        for (uint8_t c : r.mask->cls)
            if (c >= kNumClasses)
                throw IntegrityError(context + ": mask value " + std::to_string(c) +
                                     " outside the class set");
    }
}

}  // namespace

SemiSupervisedDataset SemiSupervisedDataset::from_slices(std::vector<SliceRecord> slices,
                                                         SplitTag split) {
    SemiSupervisedDataset ds;
    ds.slices = std::move(slices);
    ds.split_tag = split;
    for (size_t i = 0; i < ds.slices.size(); ++i) {
        validate_record(ds.slices[i], "slice " + std::to_string(i));
        if (ds.slices[i].mask) ds.labeled_indices.push_back(static_cast<int>(i));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// synthetic phantom generator

SemiSupervisedDataset generate_synthetic_dataset(int n_patients, int frames_per_cycle,
                                                 int slices_per_frame, int image_size,
                                                 uint64_t seed) {
    if (n_patients < 1 || frames_per_cycle < 2 || slices_per_frame < 1)
        throw ArgumentError("generate_synthetic_dataset: counts must be >= 1 and frames >= 2");
    if (image_size < 16) throw ArgumentError("generate_synthetic_dataset: image_size must be >= 16");

    const double S = static_cast<double>(image_size);
    const int es_frame = frames_per_cycle / 2;  // peak contraction
    std::vector<SliceRecord> slices;
    slices.reserve(static_cast<size_t>(n_patients) * frames_per_cycle * slices_per_frame);

    for (int p = 0; p < n_patients; ++p) {
        Rng prng(derive_seed(seed, {fnv1a64("patient"), static_cast<uint64_t>(p)}));
        const double cx = S * (0.5 + 0.08 * (2.0 * prng.uniform() - 1.0));
        const double cy = S * (0.5 + 0.08 * (2.0 * prng.uniform() - 1.0));
        const double r_lv = S * (0.10 + 0.03 * prng.uniform());
        const double w_myo = S * (0.06 + 0.03 * prng.uniform());
        const double w_rv = S * (0.06 + 0.03 * prng.uniform());
        const double contraction = 0.12 + 0.06 * prng.uniform();
        const double brightness = 0.90 + 0.20 * prng.uniform();
        const double ecc = 0.9 + 0.2 * prng.uniform();  // mild ellipse eccentricity

        char pid[32];
        std::snprintf(pid, sizeof(pid), "patient%03d", p);

        for (int f = 0; f < frames_per_cycle; ++f) {
            constexpr double two_pi = 6.283185307179586477;
            const double phase =
                0.5 * (1.0 - std::cos(two_pi * static_cast<double>(f) /
                                      static_cast<double>(frames_per_cycle)));
            const double frame_scale = 1.0 - contraction * phase;
            const FrameTag tag = f == 0 ? FrameTag::ed
                                : f == es_frame ? FrameTag::es
                                                : FrameTag::other;
            for (int s = 0; s < slices_per_frame; ++s) {
                const double t =
                    slices_per_frame > 1
                        ? static_cast<double>(s) / static_cast<double>(slices_per_frame - 1)
                        : 0.0;
                const double slice_scale = 1.0 - 0.25 * t;  // apex-to-base taper
                const double scale = frame_scale * slice_scale;
                const double a_lv = r_lv * scale;
                const double a_myo = a_lv + w_myo * scale;
                const double a_rv = a_myo + w_rv * scale;

                Rng nrng(derive_seed(seed, {fnv1a64("noise"), static_cast<uint64_t>(p),
                                            static_cast<uint64_t>(f), static_cast<uint64_t>(s)}));
                SliceRecord rec;
                rec.patient_id = pid;
                rec.frame_tag = tag;
                rec.frame_index = f;
                rec.slice_index = s;
                rec.image = Image2D::zeros(image_size, image_size);
                Mask2D mask = Mask2D::zeros(image_size, image_size);

                for (long y = 0; y < image_size; ++y)
                    for (long x = 0; x < image_size; ++x) {
                        const double dx = (static_cast<double>(x) - cx);
                        const double dy = (static_cast<double>(y) - cy) / ecc;
                        const double d = std::sqrt(dx * dx + dy * dy);
                        uint8_t cls = 0;
                        double base = 0.15;
                        if (d <= a_lv) {
                            cls = 3;
                            base = 0.75;
                        } else if (d <= a_myo) {
                            cls = 2;
                            base = 0.40;
                        } else if (d <= a_rv) {
                            cls = 1;
                            base = 0.60;
                        }
                        mask.at(y, x) = cls;
                        double v = base * brightness + 0.03 * (2.0 * nrng.uniform() - 1.0);
                        v = std::clamp(v, 0.0, 1.0);
                        // snap to the 16-bit grid so a PNG round-trip is lossless
                        rec.image.at(y, x) = std::round(v * 65535.0) / 65535.0;
                    }
                if (tag != FrameTag::other) rec.mask = std::move(mask);
                slices.push_back(std::move(rec));
            }
        }
    }
    return SemiSupervisedDataset::from_slices(std::move(slices), SplitTag::train);
}

DatasetBundle split_by_patient(const SemiSupervisedDataset& ds, double train_frac,
                               double val_frac, uint64_t seed) {
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
        throw ArgumentError("split_by_patient: invalid fractions");
    std::vector<std::string> patients;
    for (const auto& s : ds.slices)
        if (std::find(patients.begin(), patients.end(), s.patient_id) == patients.end())
            patients.push_back(s.patient_id);

    Rng rng(derive_seed(seed, "patient-split"));
    rng.shuffle(patients);
    const long n = static_cast<long>(patients.size());
    long n_train = std::lround(train_frac * static_cast<double>(n));
    long n_val = std::lround(val_frac * static_cast<double>(n));
    n_train = std::clamp<long>(n_train, n > 0 ? 1 : 0, n);
    n_val = std::clamp<long>(n_val, 0, n - n_train);

    std::map<std::string, SplitTag> assignment;
    for (long i = 0; i < n; ++i) {
        SplitTag tag = i < n_train            ? SplitTag::train
                       : i < n_train + n_val ? SplitTag::val
                                             : SplitTag::test;
        assignment[patients[static_cast<size_t>(i)]] = tag;
    }

    std::vector<SliceRecord> tr, va, te;
    for (const auto& s : ds.slices) {
        switch (assignment.at(s.patient_id)) {
            case SplitTag::train: tr.push_back(s); break;
            case SplitTag::val: va.push_back(s); break;
            case SplitTag::test: te.push_back(s); break;
        }
    }
    DatasetBundle b;
    b.train = SemiSupervisedDataset::from_slices(std::move(tr), SplitTag::train);
    b.val = SemiSupervisedDataset::from_slices(std::move(va), SplitTag::val);
    b.test = SemiSupervisedDataset::from_slices(std::move(te), SplitTag::test);
    return b;
}

// ---------------------------------------------------------------------------
// directory layout + manifest

namespace {

struct ManifestRow {
    std::string image;
    std::string mask;  // empty if unlabeled
    std::string patient;
    FrameTag frame = FrameTag::other;
    int slice = 0;
    SplitTag split = SplitTag::train;
};

ManifestRow parse_manifest_row(const std::string& line, int line_no) {
    ManifestRow row;
    bool have_image = false, have_patient = false, have_frame = false, have_split = false;
    std::istringstream iss(line);
    std::string token;
    while (iss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw FormatError("manifest line " + std::to_string(line_no) +
                              ": expected key=value, got '" + token + "'");
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "image") {
            row.image = value;
            have_image = true;
        } else if (key == "mask") {
            row.mask = value;
        } else if (key == "patient") {
            row.patient = value;
            have_patient = true;
        } else if (key == "frame") {
            row.frame = frame_tag_from_string(value);
            have_frame = true;
        } else if (key == "slice") {
            row.slice = std::stoi(value);
        } else if (key == "split") {
            row.split = split_tag_from_string(value);
            have_split = true;
        } else {
            throw FormatError("manifest line " + std::to_string(line_no) + ": unknown key '" +
                              key + "'");
        }
    }
    if (!have_image || !have_patient || !have_frame || !have_split)
        throw FormatError("manifest line " + std::to_string(line_no) +
                          ": image, patient, frame and split are required");
    return row;
}

}  // namespace

DatasetBundle load_directory_dataset(const fs::path& root) {
    if (!fs::exists(root)) throw FormatError("dataset root does not exist: " + root.string());
    const fs::path manifest_path = root / "manifest.txt";
    std::ifstream in(manifest_path);
    if (!in) throw FormatError("missing manifest: " + manifest_path.string());

    std::vector<ManifestRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(parse_manifest_row(line, line_no));
    }

    // canonical ordering: patient, then image path (encodes frame and slice)
    std::stable_sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) {
        if (a.patient != b.patient) return a.patient < b.patient;
        return a.image < b.image;
    });

    // patient-disjoint splits
    std::map<std::string, SplitTag> patient_split;
    for (const auto& r : rows) {
        auto [it, inserted] = patient_split.emplace(r.patient, r.split);
        if (!inserted && it->second != r.split)
            throw IntegrityError("patient " + r.patient + " assigned to multiple splits");
    }

    std::vector<SliceRecord> tr, va, te;
    std::set<std::string> referenced_dirs;
    for (const auto& r : rows) {
        referenced_dirs.insert(fs::path(r.image).begin()->string());
        SliceRecord rec;
        rec.patient_id = r.patient;
        rec.frame_tag = r.frame;
        rec.slice_index = r.slice;
        rec.image = load_image_png(root / r.image);
        if (!r.mask.empty()) {
            Mask2D m = load_mask_png(root / r.mask);
            if (m.h != rec.image.h || m.w != rec.image.w)
                throw IntegrityError("mask shape mismatch for " + (root / r.mask).string());
            rec.mask = std::move(m);
        }
        validate_record(rec, (root / r.image).string());
        switch (r.split) {
            case SplitTag::train: tr.push_back(std::move(rec)); break;
            case SplitTag::val: va.push_back(std::move(rec)); break;
            case SplitTag::test: te.push_back(std::move(rec)); break;
        }
    }

    // warn about patient directories the manifest never mentions
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (!referenced_dirs.count(name))
            std::cerr << "load_directory_dataset: skipping patient directory with no manifest"
                         " entries: "
                      << name << "\n";
    }

    DatasetBundle b;
    b.train = SemiSupervisedDataset::from_slices(std::move(tr), SplitTag::train);
    b.val = SemiSupervisedDataset::from_slices(std::move(va), SplitTag::val);
    b.test = SemiSupervisedDataset::from_slices(std::move(te), SplitTag::test);
    return b;
}

void write_directory_dataset(const DatasetBundle& bundle, const fs::path& root) {
    fs::create_directories(root);
    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) throw FormatError("cannot write manifest under " + root.string());
    manifest << "# medseg dataset manifest v1\n";

    auto write_split = [&](const SemiSupervisedDataset& ds) {
        for (const auto& s : ds.slices) {
            const fs::path dir = root / s.patient_id;
            fs::create_directories(dir);
            char stem[64];
            std::snprintf(stem, sizeof(stem), "f%03d_s%03d", s.frame_index, s.slice_index);
            const std::string img_rel = s.patient_id + "/" + stem + ".png";
            save_image_png16(s.image, root / img_rel);
            manifest << "image=" << img_rel;
            if (s.mask) {
                const std::string mask_rel = s.patient_id + "/" + stem + "_mask.png";
                save_mask_png(*s.mask, root / mask_rel);
                manifest << " mask=" << mask_rel;
            }
            manifest << " patient=" << s.patient_id << " frame=" << to_string(s.frame_tag)
                     << " slice=" << s.slice_index << " split=" << to_string(ds.split_tag)
                     << "\n";
        }
    };
    write_split(bundle.train);
    write_split(bundle.val);
    write_split(bundle.test);
}

// ---------------------------------------------------------------------------

std::vector<int> sample_labeled_subset(const SemiSupervisedDataset& ds, const SubsetSpec& spec) {
    const long n_labeled = static_cast<long>(ds.labeled_indices.size());
    if (spec.count.has_value() == spec.fraction.has_value())
        throw ArgumentError("SubsetSpec: exactly one of count/fraction must be set");
    long k = 0;
    if (spec.count) {
        k = *spec.count;
        if (k < 1) throw ArgumentError("SubsetSpec: count must be >= 1");
        if (k > n_labeled)
            throw ArgumentError("SubsetSpec: count " + std::to_string(k) + " exceeds " +
                                std::to_string(n_labeled) + " labeled slices");
    } else {
        const double f = *spec.fraction;
        if (f <= 0.0 || f > 1.0) throw ArgumentError("SubsetSpec: fraction must be in (0,1]");
        k = static_cast<long>(std::ceil(f * static_cast<double>(n_labeled)));
        k = std::min(k, n_labeled);
    }

    std::vector<int> pool = ds.labeled_indices;
    Rng rng(derive_seed(spec.seed, "labeled-subset"));
    // partial Fisher-Yates: the first k entries are a uniform sample
    for (long i = 0; i < k; ++i) {
        const long j = i + rng.uniform_int(static_cast<long>(pool.size()) - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace {

SplitStats split_stats(const SemiSupervisedDataset& ds) {
    SplitStats st;
    st.n_slices = static_cast<long>(ds.slices.size());
    st.n_labeled = static_cast<long>(ds.labeled_indices.size());
    std::set<std::string> patients;
    for (const auto& s : ds.slices) patients.insert(s.patient_id);
    st.n_patients = static_cast<long>(patients.size());
    return st;
}

void accumulate_class_freq(const SemiSupervisedDataset& ds, std::array<double, kNumClasses>& cnt,
                           double& total) {
    for (int i : ds.labeled_indices) {
        const Mask2D& m = *ds.slices[static_cast<size_t>(i)].mask;
        for (uint8_t c : m.cls) {
            cnt[c] += 1.0;
            total += 1.0;
        }
    }
}

}  // namespace

DatasetStats dataset_stats(const DatasetBundle& bundle) {
    DatasetStats st;
    st.train = split_stats(bundle.train);
    st.val = split_stats(bundle.val);
    st.test = split_stats(bundle.test);
    st.total_slices = st.train.n_slices + st.val.n_slices + st.test.n_slices;
    st.total_labeled = st.train.n_labeled + st.val.n_labeled + st.test.n_labeled;
    st.labeled_fraction = st.total_slices > 0 ? static_cast<double>(st.total_labeled) /
                                                    static_cast<double>(st.total_slices)
                                              : 0.0;
    double total_px = 0.0;
    accumulate_class_freq(bundle.train, st.class_pixel_freq, total_px);
    accumulate_class_freq(bundle.val, st.class_pixel_freq, total_px);
    accumulate_class_freq(bundle.test, st.class_pixel_freq, total_px);
    if (total_px > 0)
        for (double& v : st.class_pixel_freq) v /= total_px;
    return st;
}

DatasetStats dataset_stats(const SemiSupervisedDataset& ds) {
    DatasetBundle b;
    switch (ds.split_tag) {
        case SplitTag::train: b.train = ds; break;
        case SplitTag::val: b.val = ds; break;
        case SplitTag::test: b.test = ds; break;
    }
    return dataset_stats(b);
}

}  // namespace medseg
