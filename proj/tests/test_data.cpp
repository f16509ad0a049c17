#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "medseg/data.hpp"
#include "medseg/errors.hpp"

using namespace medseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("medseg_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

bool datasets_equal(const SemiSupervisedDataset& a, const SemiSupervisedDataset& b) {
    if (a.slices.size() != b.slices.size() || a.labeled_indices != b.labeled_indices)
        return false;
    for (size_t i = 0; i < a.slices.size(); ++i) {
        const SliceRecord& ra = a.slices[i];
        const SliceRecord& rb = b.slices[i];
        if (ra.patient_id != rb.patient_id || ra.frame_tag != rb.frame_tag ||
            ra.slice_index != rb.slice_index)
            return false;
        if (ra.image.px != rb.image.px) return false;
        if (ra.mask.has_value() != rb.mask.has_value()) return false;
        if (ra.mask && ra.mask->cls != rb.mask->cls) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("synthetic generator: counts and labeled fraction") {
    // 10 patients x 25 frames x 10 slices: 2500 slices, 200 labeled (8%)
    SemiSupervisedDataset ds = generate_synthetic_dataset(10, 25, 10, 64, 0);
    CHECK(ds.slices.size() == 2500);
    CHECK(ds.labeled_indices.size() == 200);
    const DatasetStats st = dataset_stats(ds);
    CHECK(st.labeled_fraction == doctest::Approx(0.08));
}

TEST_CASE("synthetic generator: degenerate two-frame cycle is fully labeled") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(1, 2, 1, 16, 0);
    CHECK(ds.slices.size() == 2);
    CHECK(ds.labeled_indices.size() == 2);
    CHECK(ds.slices[0].frame_tag == FrameTag::ed);
    CHECK(ds.slices[1].frame_tag == FrameTag::es);
}

TEST_CASE("synthetic generator: bit-identical output for identical arguments") {
    SemiSupervisedDataset a = generate_synthetic_dataset(2, 6, 2, 32, 7);
    SemiSupervisedDataset b = generate_synthetic_dataset(2, 6, 2, 32, 7);
    CHECK(datasets_equal(a, b));
    SemiSupervisedDataset c = generate_synthetic_dataset(2, 6, 2, 32, 8);
    CHECK_FALSE(datasets_equal(a, c));
}

TEST_CASE("synthetic generator: every class present in every mask at size >= 32") {
    for (uint64_t seed : {0ull, 1ull, 2ull, 3ull}) {
        SemiSupervisedDataset ds = generate_synthetic_dataset(3, 4, 3, 32, seed);
        for (int i : ds.labeled_indices) {
            long count[kNumClasses] = {0, 0, 0, 0};
            for (uint8_t c : ds.slices[static_cast<size_t>(i)].mask->cls) ++count[c];
            for (int c = 0; c < kNumClasses; ++c) CHECK(count[c] > 0);
        }
    }
}

TEST_CASE("synthetic generator: ED and ES masks differ (contraction phase)") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(1, 8, 1, 64, 3);
    const Mask2D* ed = nullptr;
    const Mask2D* es = nullptr;
    for (const auto& s : ds.slices) {
        if (s.frame_tag == FrameTag::ed) ed = &*s.mask;
        if (s.frame_tag == FrameTag::es) es = &*s.mask;
    }
    REQUIRE(ed != nullptr);
    REQUIRE(es != nullptr);
    long ed_fg = 0, es_fg = 0;
    for (uint8_t c : ed->cls) ed_fg += c != 0;
    for (uint8_t c : es->cls) es_fg += c != 0;
    CHECK(ed_fg > es_fg);  // ES is the contracted frame
}

TEST_CASE("generator argument validation") {
    CHECK_THROWS_AS(generate_synthetic_dataset(0, 4, 1, 32, 0), ArgumentError);
    CHECK_THROWS_AS(generate_synthetic_dataset(1, 1, 1, 32, 0), ArgumentError);
    CHECK_THROWS_AS(generate_synthetic_dataset(1, 4, 1, 8, 0), ArgumentError);
}

TEST_CASE("labeled indices always match mask presence") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(3, 5, 2, 32, 11);
    std::set<int> labeled(ds.labeled_indices.begin(), ds.labeled_indices.end());
    for (size_t i = 0; i < ds.slices.size(); ++i)
        CHECK(ds.slices[i].mask.has_value() == (labeled.count(static_cast<int>(i)) > 0));
}

TEST_CASE("patient split is disjoint and covers all patients") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(10, 4, 2, 32, 0);
    DatasetBundle b = split_by_patient(ds, 0.7, 0.15, 5);
    auto patients = [](const SemiSupervisedDataset& d) {
        std::set<std::string> p;
        for (const auto& s : d.slices) p.insert(s.patient_id);
        return p;
    };
    const auto tr = patients(b.train), va = patients(b.val), te = patients(b.test);
    CHECK(tr.size() == 7);
    CHECK(va.size() == 2);
    CHECK(te.size() == 1);
    for (const auto& p : va) CHECK(tr.count(p) == 0);
    for (const auto& p : te) {
        CHECK(tr.count(p) == 0);
        CHECK(va.count(p) == 0);
    }
}

TEST_CASE("directory round-trip is lossless") {
    const fs::path root = temp_dir("roundtrip");
    SemiSupervisedDataset full = generate_synthetic_dataset(3, 4, 2, 32, 9);
    DatasetBundle bundle = split_by_patient(full, 0.7, 0.15, 1);
    write_directory_dataset(bundle, root);
    DatasetBundle loaded = load_directory_dataset(root);
    CHECK(datasets_equal(bundle.train, loaded.train));
    CHECK(datasets_equal(bundle.val, loaded.val));
    CHECK(datasets_equal(bundle.test, loaded.test));
}

TEST_CASE("loader: missing manifest is a format error") {
    const fs::path root = temp_dir("nomanifest");
    CHECK_THROWS_AS(load_directory_dataset(root), FormatError);
    CHECK_THROWS_AS(load_directory_dataset(root / "does-not-exist"), FormatError);
}

TEST_CASE("loader: mask shape mismatch names the offending file") {
    const fs::path root = temp_dir("badmask");
    SemiSupervisedDataset full = generate_synthetic_dataset(1, 2, 1, 32, 0);
    DatasetBundle bundle;
    bundle.train = full;
    write_directory_dataset(bundle, root);
    // replace one mask with a wrong-shape image
    Mask2D bad = Mask2D::zeros(16, 16);
    save_mask_png(bad, root / "patient000" / "f000_s000_mask.png");
    try {
        load_directory_dataset(root);
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find("f000_s000_mask.png") != std::string::npos);
    }
}

TEST_CASE("loader: empty patient directory is skipped, dataset still valid") {
    const fs::path root = temp_dir("emptypatient");
    SemiSupervisedDataset full = generate_synthetic_dataset(2, 2, 1, 32, 0);
    DatasetBundle bundle;
    bundle.train = full;
    write_directory_dataset(bundle, root);
    fs::create_directories(root / "patient999");
    DatasetBundle loaded = load_directory_dataset(root);
    CHECK(loaded.train.slices.size() == 4);
}

TEST_CASE("loader: unknown manifest key and split conflicts are rejected") {
    const fs::path root = temp_dir("badmanifest");
    {
        std::ofstream m(root / "manifest.txt");
        m << "image=a.png patient=p0 frame=OTHER split=TRAIN wat=1\n";
    }
    CHECK_THROWS_AS(load_directory_dataset(root), FormatError);

    SemiSupervisedDataset full = generate_synthetic_dataset(1, 2, 2, 32, 0);
    DatasetBundle bundle;
    bundle.train = full;
    write_directory_dataset(bundle, root);
    // assign the same patient to two splits
    std::ifstream in(root / "manifest.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const size_t pos = text.rfind("split=TRAIN");
    text.replace(pos, 11, "split=VAL  ");
    std::ofstream(root / "manifest.txt") << text;
    CHECK_THROWS_AS(load_directory_dataset(root), IntegrityError);
}

TEST_CASE("subset sampling: identity, single sample, ceil arithmetic") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(5, 4, 5, 32, 2);
    REQUIRE(ds.labeled_indices.size() == 50);

    const auto all = sample_labeled_subset(ds, SubsetSpec::of_fraction(1.0, 0));
    CHECK(all == ds.labeled_indices);

    const auto one = sample_labeled_subset(ds, SubsetSpec::of_count(1, 0));
    CHECK(one.size() == 1);

    // fraction 0.02 of 1900 labeled slices -> ceil = 38
    SemiSupervisedDataset big;
    big.slices.resize(1900);
    for (int i = 0; i < 1900; ++i) {
        big.slices[static_cast<size_t>(i)].frame_tag = FrameTag::ed;
        big.slices[static_cast<size_t>(i)].mask = Mask2D::zeros(4, 4);
        big.slices[static_cast<size_t>(i)].patient_id = "p";
        big.labeled_indices.push_back(i);
    }
    CHECK(sample_labeled_subset(big, SubsetSpec::of_fraction(0.02, 1)).size() == 38);
}

TEST_CASE("subset sampling: deterministic, sorted, without replacement") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(5, 4, 5, 32, 2);
    const auto a = sample_labeled_subset(ds, SubsetSpec::of_count(13, 42));
    const auto b = sample_labeled_subset(ds, SubsetSpec::of_count(13, 42));
    CHECK(a == b);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::set<int>(a.begin(), a.end()).size() == a.size());
    const auto c = sample_labeled_subset(ds, SubsetSpec::of_count(13, 43));
    CHECK(a != c);
    for (int i : a) CHECK(ds.slices[static_cast<size_t>(i)].mask.has_value());
}

TEST_CASE("subset sampling: argument errors") {
    SemiSupervisedDataset ds = generate_synthetic_dataset(1, 2, 2, 32, 0);
    CHECK_THROWS_AS(sample_labeled_subset(ds, SubsetSpec::of_count(5, 0)), ArgumentError);
    CHECK_THROWS_AS(sample_labeled_subset(ds, SubsetSpec::of_count(0, 0)), ArgumentError);
    CHECK_THROWS_AS(sample_labeled_subset(ds, SubsetSpec::of_fraction(0.0, 0)), ArgumentError);
    CHECK_THROWS_AS(sample_labeled_subset(ds, SubsetSpec::of_fraction(1.5, 0)), ArgumentError);
}

TEST_CASE("dataset_stats: empty and all-background cases") {
    const DatasetStats empty = dataset_stats(DatasetBundle{});
    CHECK(empty.total_slices == 0);
    CHECK(empty.labeled_fraction == 0.0);

    SliceRecord rec;
    rec.patient_id = "p0";
    rec.frame_tag = FrameTag::ed;
    rec.image = Image2D::zeros(8, 8);
    rec.mask = Mask2D::zeros(8, 8);
    DatasetBundle b;
    b.train = SemiSupervisedDataset::from_slices({rec}, SplitTag::train);
    const DatasetStats st = dataset_stats(b);
    CHECK(st.class_pixel_freq[0] == doctest::Approx(1.0));
    CHECK(st.class_pixel_freq[1] == doctest::Approx(0.0));
    CHECK(st.class_pixel_freq[2] == doctest::Approx(0.0));
    CHECK(st.class_pixel_freq[3] == doctest::Approx(0.0));
}

TEST_CASE("record invariants: mask exactly for ED/ES, valid ids") {
    SliceRecord rec;
    rec.patient_id = "p0";
    rec.frame_tag = FrameTag::other;
    rec.image = Image2D::zeros(4, 4);
    rec.mask = Mask2D::zeros(4, 4);  // OTHER frame must not carry a mask
    CHECK_THROWS_AS(SemiSupervisedDataset::from_slices({rec}, SplitTag::train), IntegrityError);

    rec.frame_tag = FrameTag::ed;
    rec.mask->cls[0] = 7;  // invalid class id
    CHECK_THROWS_AS(SemiSupervisedDataset::from_slices({rec}, SplitTag::train), IntegrityError);
}
