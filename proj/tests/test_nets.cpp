#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "medseg/errors.hpp"
#include "medseg/kernels.hpp"
#include "medseg/nets.hpp"
#include "test_util.hpp"

using namespace medseg;

namespace {

EncoderConfig tiny_cfg(int in_channels = 1) {
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::tiny;
    cfg.in_channels = in_channels;
    cfg.stage_widths = {8, 16, 32};
    return cfg;
}

bool weights_equal(const NetworkWeights& a, const NetworkWeights& b) {
    if (a.order != b.order) return false;
    for (const auto& name : a.order)
        if (!(a.params.at(name) == b.params.at(name))) return false;
    return true;
}

Tensor replicate_channels(const Tensor& x1) {
    Tensor x3({x1.dim(0), 3, x1.dim(2), x1.dim(3)});
    for (long b = 0; b < x1.dim(0); ++b)
        for (long c = 0; c < 3; ++c)
            for (long y = 0; y < x1.dim(2); ++y)
                for (long x = 0; x < x1.dim(3); ++x) x3.at4(b, c, y, x) = x1.at4(b, 0, y, x);
    return x3;
}

}  // namespace

TEST_CASE("kaiming uniform: bound, moments, half-mass, determinism") {
    Rng rng(0);
    const double b = kaiming_bound(6);
    CHECK(b == doctest::Approx(1.0));

    Tensor t = kaiming_uniform_init({100000}, 6, rng);
    double sum = 0.0;
    long inside_half = 0;
    for (long i = 0; i < t.numel(); ++i) {
        CHECK(std::abs(t[i]) <= b);
        sum += t[i];
        if (std::abs(t[i]) <= b / 2) ++inside_half;
    }
    const double n = static_cast<double>(t.numel());
    const double sigma = b / std::sqrt(3.0);
    CHECK(std::abs(sum / n) < 3.0 * sigma / std::sqrt(n));
    CHECK(std::abs(static_cast<double>(inside_half) / n - 0.5) < 0.01);

    Rng r1(7), r2(7);
    CHECK(kaiming_uniform_init({32}, 9, r1) == kaiming_uniform_init({32}, 9, r2));
    CHECK_THROWS_AS(kaiming_uniform_init({4}, 0, rng), ArgumentError);
}

TEST_CASE("tiny encoder: skip sizes and embedding length from a 32x32 input") {
    Rng rng(1);
    NetworkWeights w = build_encoder(tiny_cfg(), rng);
    CHECK(w.meta.at("variant") == "tiny");
    CHECK(w.meta.at("input_channels") == "1");

    Tape tape;
    ParamBinder bind(tape, w, false);
    Rng xr(2);
    Var x = tape.input(test::random_tensor({1, 1, 32, 32}, xr, 0.0, 1.0));
    EncoderOutputs out = encoder_forward(tape, bind, tiny_cfg(), x, true, nullptr);
    REQUIRE(out.skips.size() == 3);
    CHECK(tape.value(out.skips[0]).dim(2) == 16);
    CHECK(tape.value(out.skips[1]).dim(2) == 8);
    CHECK(tape.value(out.skips[2]).dim(2) == 4);
    CHECK(tape.value(out.embedding).dim(1) == 32);
}

TEST_CASE("two builds with the same seed are bit-identical") {
    Rng a(5), b(5);
    CHECK(weights_equal(build_encoder(tiny_cfg(), a), build_encoder(tiny_cfg(), b)));
    Rng c(6);
    CHECK_FALSE(weights_equal(build_encoder(tiny_cfg(), a), build_encoder(tiny_cfg(), c)));
}

TEST_CASE("resnet50: parameter count ~23M, embedding 2048, stem kernel shape") {
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::resnet50;
    cfg.in_channels = 3;
    CHECK(cfg.embedding_dim() == 2048);

    const auto specs = encoder_param_specs(cfg);
    long total = 0;
    for (const auto& s : specs) {
        long n = 1;
        for (long d : s.shape) n *= d;
        total += n;
    }
    CHECK(total > 23000000);
    CHECK(total < 24000000);

    Rng rng(0);
    NetworkWeights w = build_encoder(cfg, rng);
    CHECK(w.at("enc.stem.conv.weight").shape() == std::vector<long>{64, 3, 7, 7});
    CHECK(w.total_params() == total);
}

TEST_CASE("resnet50 decoder is ~9M parameters, much smaller than the encoder") {
    EncoderConfig enc;
    enc.variant = EncoderVariant::resnet50;
    enc.in_channels = 1;
    const DecoderConfig dec = DecoderConfig::defaults_for(enc);
    long dec_total = 0;
    for (const auto& s : decoder_param_specs(enc, dec)) {
        long n = 1;
        for (long d : s.shape) n *= d;
        dec_total += n;
    }
    CHECK(dec_total > 8000000);
    CHECK(dec_total < 10000000);
}

TEST_CASE("adapt_input_layer: depth-wise sum, other parameters bit-identical") {
    Rng rng(3);
    NetworkWeights w3 = build_encoder(tiny_cfg(3), rng);
    NetworkWeights w1 = adapt_input_layer(w3);
    CHECK(w1.meta.at("input_channels") == "1");

    const Tensor& k3 = w3.at("enc.stage1.conv.weight");
    const Tensor& k1 = w1.at("enc.stage1.conv.weight");
    CHECK(k1.shape() == std::vector<long>{8, 1, 3, 3});
    for (long o = 0; o < 8; ++o)
        for (long y = 0; y < 3; ++y)
            for (long x = 0; x < 3; ++x)
                CHECK(k1.at4(o, 0, y, x) ==
                      doctest::Approx(k3.at4(o, 0, y, x) + k3.at4(o, 1, y, x) +
                                      k3.at4(o, 2, y, x))
                          .epsilon(1e-12));
    for (const auto& name : w3.order)
        if (name != "enc.stage1.conv.weight") CHECK(w3.params.at(name) == w1.params.at(name));

    // already single-channel: no-op
    NetworkWeights again = adapt_input_layer(w1);
    CHECK(weights_equal(again, w1));
}

TEST_CASE("adapted first layer responds to grayscale like the original to replicated RGB") {
    // resnet50 stem shape (64,3,7,7) per the adaptation contract
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::resnet50;
    cfg.in_channels = 3;
    Rng rng(4);
    NetworkWeights w3 = build_encoder(cfg, rng);
    NetworkWeights w1 = adapt_input_layer(w3);
    CHECK(w1.at("enc.stem.conv.weight").shape() == std::vector<long>{64, 1, 7, 7});

    Rng xr(5);
    Tensor x1 = test::random_tensor({1, 1, 16, 16}, xr, 0.0, 1.0);
    Tensor x3 = replicate_channels(x1);
    Tensor y1({1, 64, 8, 8}), y3({1, 64, 8, 8});
    kernels::conv2d_forward(x1, w1.at("enc.stem.conv.weight"), y1, 2, 3);
    kernels::conv2d_forward(x3, w3.at("enc.stem.conv.weight"), y3, 2, 3);
    double worst = 0.0;
    for (long i = 0; i < y1.numel(); ++i) worst = std::max(worst, test::rel_err(y1[i], y3[i]));
    CHECK(worst <= 1e-5);
}

TEST_CASE("transfer: bit-exact copy, 3->1 adaptation, idempotence, variant mismatch") {
    Rng rng(6);
    NetworkWeights src1 = build_encoder(tiny_cfg(1), rng);
    NetworkWeights t1 = transfer_encoder_weights(src1, tiny_cfg(1));
    for (const auto& name : src1.order) CHECK(src1.params.at(name) == t1.params.at(name));

    NetworkWeights src3 = build_encoder(tiny_cfg(3), rng);
    NetworkWeights t31 = transfer_encoder_weights(src3, tiny_cfg(1));
    NetworkWeights adapted = adapt_input_layer(src3);
    for (const auto& name : t31.order) CHECK(t31.params.at(name) == adapted.params.at(name));

    // idempotent on 1-channel sources
    CHECK(weights_equal(transfer_encoder_weights(t1, tiny_cfg(1)), t1));

    EncoderConfig r50;
    r50.variant = EncoderVariant::resnet50;
    r50.in_channels = 1;
    CHECK_THROWS_AS(transfer_encoder_weights(src1, r50), TransferError);
    // 1-channel source cannot grow back to 3 channels
    CHECK_THROWS_AS(transfer_encoder_weights(src1, tiny_cfg(3)), TransferError);
}

TEST_CASE("unet: logit shape matches input, decoder freshly Kaiming, deterministic") {
    Rng erng(7);
    NetworkWeights enc = build_encoder(tiny_cfg(), erng);
    DecoderConfig dec = DecoderConfig::defaults_for(tiny_cfg());
    dec.out_classes = 4;

    Rng d1(8), d2(8);
    NetworkWeights u1 = build_unet(enc, tiny_cfg(), dec, d1);
    NetworkWeights u2 = build_unet(enc, tiny_cfg(), dec, d2);
    CHECK(weights_equal(u1, u2));

    // decoder conv weights land inside their Kaiming bounds; biases zero
    for (const auto& s : decoder_param_specs(tiny_cfg(), dec)) {
        const Tensor& t = u1.at(s.name);
        if (s.init == ParamSpec::Init::kaiming) {
            const double bound = kaiming_bound(s.fan_in);
            for (long i = 0; i < t.numel(); ++i) CHECK(std::abs(t[i]) <= bound);
        } else if (s.init == ParamSpec::Init::zeros) {
            for (long i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);
        }
    }

    Tape tape;
    ParamBinder bind(tape, u1, false);
    Rng xr(9);
    Var x = tape.input(test::random_tensor({2, 1, 64, 64}, xr, 0.0, 1.0));
    Var logits = unet_forward(tape, bind, tiny_cfg(), dec, x, true, nullptr);
    CHECK(tape.value(logits).shape() == std::vector<long>{2, 4, 64, 64});

    DecoderConfig bad = dec;
    bad.stage_channels = {8, 8};  // skip-count mismatch
    Rng d3(1);
    CHECK_THROWS_AS(build_unet(enc, tiny_cfg(), bad, d3), ArgumentError);
}

TEST_CASE("unet output spatial size equals input for stride-divisible inputs") {
    Rng erng(10);
    NetworkWeights enc = build_encoder(tiny_cfg(), erng);
    DecoderConfig dec = DecoderConfig::defaults_for(tiny_cfg());
    Rng drng(11);
    NetworkWeights u = build_unet(enc, tiny_cfg(), dec, drng);
    for (long size : {32L, 48L}) {
        Tape tape;
        ParamBinder bind(tape, u, false);
        Rng xr(12);
        Var x = tape.input(test::random_tensor({2, 1, size, size}, xr, 0.0, 1.0));
        Var logits = unet_forward(tape, bind, tiny_cfg(), dec, x, true, nullptr);
        CHECK(tape.value(logits).dim(2) == size);
        CHECK(tape.value(logits).dim(3) == size);
    }
}

TEST_CASE("byol heads: shape contract and finite outputs on zero input") {
    HeadConfig cfg;
    cfg.proj_hidden = 64;
    cfg.proj_out = 16;
    cfg.pred_hidden = 64;
    cfg.pred_out = 16;
    Rng rng(13);
    auto [proj, pred] = build_byol_heads(32, cfg, rng);

    Tape tape;
    ParamBinder pbind(tape, proj, false);
    Var z = head_forward(tape, pbind, "proj", tape.input(Tensor::zeros({2, 32})), true, nullptr);
    CHECK(tape.value(z).shape() == std::vector<long>{2, 16});
    ParamBinder qbind(tape, pred, false);
    Var q = head_forward(tape, qbind, "pred", z, true, nullptr);
    CHECK(tape.value(q).shape() == std::vector<long>{2, 16});
    CHECK(tape.value(q).all_finite());

    Rng r1(3), r2(3);
    auto [p1, q1] = build_byol_heads(32, cfg, r1);
    auto [p2, q2] = build_byol_heads(32, cfg, r2);
    CHECK(weights_equal(p1, p2));
    CHECK(weights_equal(q1, q2));

    HeadConfig bad = cfg;
    bad.pred_out = 8;  // must equal projector out_dim
    Rng r3(0);
    CHECK_THROWS_AS(build_byol_heads(32, bad, r3), ArgumentError);
}

TEST_CASE("resnet50 forward produces five skips and a 2048-d embedding") {
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::resnet50;
    cfg.in_channels = 1;
    Rng rng(14);
    NetworkWeights w = build_encoder(cfg, rng);

    Tape tape;
    ParamBinder bind(tape, w, false);
    Rng xr(15);
    Var x = tape.input(test::random_tensor({1, 1, 32, 32}, xr, 0.0, 1.0));
    EncoderOutputs out = encoder_forward(tape, bind, cfg, x, true, nullptr);
    REQUIRE(out.skips.size() == 5);
    CHECK(tape.value(out.skips[0]).dim(2) == 16);
    CHECK(tape.value(out.skips[1]).dim(2) == 8);
    CHECK(tape.value(out.skips[2]).dim(2) == 4);
    CHECK(tape.value(out.skips[3]).dim(2) == 2);
    CHECK(tape.value(out.skips[4]).dim(2) == 1);
    CHECK(tape.value(out.embedding).shape() == std::vector<long>{1, 2048});
    CHECK(tape.value(out.embedding).all_finite());
}

TEST_CASE("config validation") {
    EncoderConfig bad = tiny_cfg();
    bad.in_channels = 2;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    EncoderConfig shallow = tiny_cfg();
    shallow.stage_widths = {8, 16};
    CHECK_THROWS_AS(shallow.validate(), ArgumentError);
}
