#include "medseg/nets.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "medseg/errors.hpp"

namespace medseg {

void NetworkWeights::add(const std::string& name, Tensor t) {
    if (params.count(name)) throw ContractError("NetworkWeights: duplicate parameter " + name);
    order.push_back(name);
    params.emplace(name, std::move(t));
}

Tensor& NetworkWeights::at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ArgumentError("NetworkWeights: unknown parameter " + name);
    return it->second;
}

const Tensor& NetworkWeights::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ArgumentError("NetworkWeights: unknown parameter " + name);
    return it->second;
}

long NetworkWeights::total_params() const {
    long n = 0;
    for (const auto& name : order) n += params.at(name).numel();
    return n;
}

std::vector<std::string> NetworkWeights::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& name : order)
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
}

void NetworkWeights::check_finite() const {
    for (const auto& name : order)
        if (!params.at(name).all_finite())
            throw NumericError("NetworkWeights: non-finite values in " + name);
}

bool is_trainable_param(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        const size_t n = std::char_traits<char>::length(suffix);
        return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
    };
    return !ends_with(".running_mean") && !ends_with(".running_var");
}

std::string to_string(EncoderVariant v) {
    return v == EncoderVariant::resnet50 ? "resnet50" : "tiny";
}

EncoderVariant encoder_variant_from_string(const std::string& s) {
    if (s == "tiny") return EncoderVariant::tiny;
    if (s == "resnet50") return EncoderVariant::resnet50;
    throw ArgumentError("unknown encoder variant: " + s);
}

void EncoderConfig::validate() const {
    if (in_channels != 1 && in_channels != 3)
        throw ArgumentError("EncoderConfig: in_channels must be 1 or 3, got " +
                            std::to_string(in_channels));
    if (variant == EncoderVariant::tiny) {
        if (stage_widths.size() < 3)
            throw ArgumentError("EncoderConfig: TINY needs >= 3 downsampling stages");
        for (int w : stage_widths)
            if (w < 1) throw ArgumentError("EncoderConfig: stage widths must be positive");
    }
}

void HeadConfig::validate() const {
    if (proj_hidden < 1 || proj_out < 1 || pred_hidden < 1 || pred_out < 1)
        throw ArgumentError("HeadConfig: dims must be >= 1");
    if (pred_out != proj_out)
        throw ArgumentError("HeadConfig: predictor out_dim must equal projector out_dim");
}

DecoderConfig DecoderConfig::defaults_for(const EncoderConfig& enc) {
    DecoderConfig dec;
    if (enc.variant == EncoderVariant::resnet50) {
        dec.stage_channels = {256, 128, 64, 32, 16};
    } else {
        dec.stage_channels.assign(enc.stage_widths.rbegin(), enc.stage_widths.rend());
    }
    return dec;
}

void DecoderConfig::validate(const EncoderConfig& enc) const {
    if (out_classes < 2) throw ArgumentError("DecoderConfig: out_classes must be >= 2");
    if (static_cast<int>(stage_channels.size()) != enc.skip_count())
        throw ArgumentError("DecoderConfig: stage count " +
                            std::to_string(stage_channels.size()) +
                            " does not match encoder skip count " +
                            std::to_string(enc.skip_count()));
}

// ---------------------------------------------------------------------------
// parameter layouts

namespace {

void push_conv(std::vector<ParamSpec>& specs, const std::string& name, long co, long ci, long k) {
    specs.push_back({name + ".weight", {co, ci, k, k}, ParamSpec::Init::kaiming, ci * k * k});
}

void push_bn(std::vector<ParamSpec>& specs, const std::string& name, long c) {
    specs.push_back({name + ".gamma", {c}, ParamSpec::Init::ones, 1});
    specs.push_back({name + ".beta", {c}, ParamSpec::Init::zeros, 1});
    specs.push_back({name + ".running_mean", {c}, ParamSpec::Init::zeros, 1});
    specs.push_back({name + ".running_var", {c}, ParamSpec::Init::ones, 1});
}

constexpr int kResnetBlocks[4] = {3, 4, 6, 3};
constexpr int kResnetPlanes[4] = {64, 128, 256, 512};
constexpr int kResnetExpansion = 4;

std::vector<int> encoder_skip_channels(const EncoderConfig& cfg) {
    if (cfg.variant == EncoderVariant::resnet50) return {64, 256, 512, 1024, 2048};
    return cfg.stage_widths;
}

}  // namespace

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> specs;
    if (cfg.variant == EncoderVariant::tiny) {
        long prev = cfg.in_channels;
        for (size_t i = 0; i < cfg.stage_widths.size(); ++i) {
            const std::string base = "enc.stage" + std::to_string(i + 1);
            const long w = cfg.stage_widths[i];
            push_conv(specs, base + ".conv", w, prev, 3);
            push_bn(specs, base + ".bn", w);
            prev = w;
        }
        return specs;
    }
    // ResNet-50
    push_conv(specs, "enc.stem.conv", 64, cfg.in_channels, 7);
    push_bn(specs, "enc.stem.bn", 64);
    long in_ch = 64;
    for (int l = 0; l < 4; ++l) {
        const long planes = kResnetPlanes[l];
        const long out_ch = planes * kResnetExpansion;
        for (int b = 0; b < kResnetBlocks[l]; ++b) {
            const std::string base =
                "enc.layer" + std::to_string(l + 1) + ".block" + std::to_string(b);
            const long stride = (b == 0 && l > 0) ? 2 : 1;
            push_conv(specs, base + ".conv1", planes, in_ch, 1);
            push_bn(specs, base + ".bn1", planes);
            push_conv(specs, base + ".conv2", planes, planes, 3);
            push_bn(specs, base + ".bn2", planes);
            push_conv(specs, base + ".conv3", out_ch, planes, 1);
            push_bn(specs, base + ".bn3", out_ch);
            if (b == 0 && (in_ch != out_ch || stride != 1)) {
                push_conv(specs, base + ".downsample.conv", out_ch, in_ch, 1);
                push_bn(specs, base + ".downsample.bn", out_ch);
            }
            in_ch = out_ch;
        }
    }
    return specs;
}

std::vector<ParamSpec> decoder_param_specs(const EncoderConfig& enc, const DecoderConfig& dec) {
    dec.validate(enc);
    const std::vector<int> skips = encoder_skip_channels(enc);
    const int n = static_cast<int>(dec.stage_channels.size());
    std::vector<ParamSpec> specs;
    long prev = skips.back();
    for (int i = 1; i <= n; ++i) {
        const std::string base = "dec.stage" + std::to_string(i);
        const int skip_idx = n - 1 - i;  // concatenated after upsampling; last stage has none
        long in_ch = prev + (skip_idx >= 0 ? skips[static_cast<size_t>(skip_idx)] : 0);
        const long ch = dec.stage_channels[static_cast<size_t>(i - 1)];
        push_conv(specs, base + ".conv1", ch, in_ch, 3);
        push_bn(specs, base + ".bn1", ch);
        push_conv(specs, base + ".conv2", ch, ch, 3);
        push_bn(specs, base + ".bn2", ch);
        prev = ch;
    }
    specs.push_back(
        {"dec.head.conv.weight", {dec.out_classes, prev, 1, 1}, ParamSpec::Init::kaiming, prev});
    specs.push_back({"dec.head.conv.bias", {dec.out_classes}, ParamSpec::Init::zeros, 1});
    return specs;
}

std::vector<ParamSpec> head_param_specs(const std::string& prefix, int in_dim, int hidden,
                                        int out_dim) {
    std::vector<ParamSpec> specs;
    specs.push_back({prefix + ".fc1.weight", {hidden, in_dim}, ParamSpec::Init::kaiming, in_dim});
    push_bn(specs, prefix + ".bn", hidden);
    specs.push_back({prefix + ".fc2.weight", {out_dim, hidden}, ParamSpec::Init::kaiming, hidden});
    specs.push_back({prefix + ".fc2.bias", {out_dim}, ParamSpec::Init::zeros, 1});
    return specs;
}

// ---------------------------------------------------------------------------
// initialization

double kaiming_bound(long fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

Tensor kaiming_uniform_init(const std::vector<long>& shape, long fan_in, Rng& rng) {
    if (fan_in < 1) throw ArgumentError("kaiming_uniform_init: fan_in must be >= 1");
    Tensor t(shape);
    const double b = kaiming_bound(fan_in);
    for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-b, b);
    return t;
}

void init_params(NetworkWeights& w, const std::vector<ParamSpec>& specs, Rng& rng) {
    for (const auto& s : specs) {
        switch (s.init) {
            case ParamSpec::Init::kaiming:
                w.add(s.name, kaiming_uniform_init(s.shape, s.fan_in, rng));
                break;
            case ParamSpec::Init::zeros:
                w.add(s.name, Tensor::zeros(s.shape));
                break;
            case ParamSpec::Init::ones:
                w.add(s.name, Tensor::full(s.shape, 1.0));
                break;
        }
    }
}

NetworkWeights build_encoder(const EncoderConfig& cfg, Rng& rng) {
    NetworkWeights w;
    init_params(w, encoder_param_specs(cfg), rng);
    w.meta["variant"] = to_string(cfg.variant);
    w.meta["input_channels"] = std::to_string(cfg.in_channels);
    return w;
}

namespace {

std::string first_conv_name(const NetworkWeights& w) {
    auto it = w.meta.find("variant");
    if (it == w.meta.end()) throw ArgumentError("weights carry no variant meta");
    return encoder_variant_from_string(it->second) == EncoderVariant::resnet50
               ? "enc.stem.conv.weight"
               : "enc.stage1.conv.weight";
}

int meta_input_channels(const NetworkWeights& w) {
    auto it = w.meta.find("input_channels");
    if (it == w.meta.end()) throw ArgumentError("weights carry no input_channels meta");
    return std::stoi(it->second);
}

}  // namespace

NetworkWeights adapt_input_layer(const NetworkWeights& w) {
    if (meta_input_channels(w) == 1) {
        std::cerr << "adapt_input_layer: weights are already single-channel; no-op\n";
        return w;
    }
    const std::string conv_name = first_conv_name(w);
    const Tensor& kern = w.at(conv_name);
    if (kern.ndim() != 4 || kern.dim(1) != 3)
        throw ArgumentError("adapt_input_layer: first convolution is not 3-channel");
    NetworkWeights out;
    out.meta = w.meta;
    out.meta["input_channels"] = "1";
    for (const auto& name : w.order) {
        if (name != conv_name) {
            out.add(name, w.params.at(name));
            continue;
        }
        const long co = kern.dim(0), kh = kern.dim(2), kw = kern.dim(3);
        Tensor summed({co, 1, kh, kw});
        for (long o = 0; o < co; ++o)
            for (long y = 0; y < kh; ++y)
                for (long x = 0; x < kw; ++x)
                    summed.at4(o, 0, y, x) = kern.at4(o, 0, y, x) + kern.at4(o, 1, y, x) +
                                             kern.at4(o, 2, y, x);
        out.add(name, std::move(summed));
    }
    return out;
}

NetworkWeights transfer_encoder_weights(const NetworkWeights& src_in,
                                        const EncoderConfig& dst_cfg) {
    dst_cfg.validate();
    auto vit = src_in.meta.find("variant");
    if (vit == src_in.meta.end()) throw TransferError("source weights carry no variant meta");
    if (encoder_variant_from_string(vit->second) != dst_cfg.variant)
        throw TransferError("variant mismatch: source is " + vit->second + ", destination wants " +
                            to_string(dst_cfg.variant));

    const int src_ch = meta_input_channels(src_in);
    NetworkWeights src = src_in;
    if (src_ch == 3 && dst_cfg.in_channels == 1) src = adapt_input_layer(src_in);
    else if (src_ch != dst_cfg.in_channels)
        throw TransferError("cannot transfer " + std::to_string(src_ch) +
                            "-channel weights into a " + std::to_string(dst_cfg.in_channels) +
                            "-channel encoder");

    const auto specs = encoder_param_specs(dst_cfg);
    std::vector<std::string> problems;
    NetworkWeights out;
    for (const auto& s : specs) {
        auto it = src.params.find(s.name);
        if (it == src.params.end()) {
            problems.push_back("missing " + s.name);
            continue;
        }
        if (it->second.shape() != s.shape) {
            problems.push_back("shape mismatch " + s.name + " " + shape_str(it->second) +
                               " != " + shape_str(s.shape));
            continue;
        }
        out.add(s.name, it->second);
    }
    for (const auto& name : src.names_with_prefix("enc."))
        if (!out.has(name)) problems.push_back("unexpected " + name);
    if (!problems.empty()) {
        std::string msg = "encoder transfer failed:";
        const size_t shown = std::min<size_t>(problems.size(), 10);
        for (size_t i = 0; i < shown; ++i) msg += "\n  " + problems[i];
        if (problems.size() > shown)
            msg += "\n  ... and " + std::to_string(problems.size() - shown) + " more";
        throw TransferError(msg);
    }
    out.meta["variant"] = to_string(dst_cfg.variant);
    out.meta["input_channels"] = std::to_string(dst_cfg.in_channels);
    if (auto it = src_in.meta.find("stage"); it != src_in.meta.end())
        out.meta["source_stage"] = it->second;
    return out;
}

NetworkWeights build_unet(const NetworkWeights& encoder_weights, const EncoderConfig& enc_cfg,
                          const DecoderConfig& dec_cfg, Rng& rng) {
    NetworkWeights w = transfer_encoder_weights(encoder_weights, enc_cfg);
    init_params(w, decoder_param_specs(enc_cfg, dec_cfg), rng);
    return w;
}

std::pair<NetworkWeights, NetworkWeights> build_byol_heads(int embedding_dim,
                                                           const HeadConfig& cfg, Rng& rng) {
    cfg.validate();
    NetworkWeights proj, pred;
    init_params(proj, head_param_specs("proj", embedding_dim, cfg.proj_hidden, cfg.proj_out), rng);
    init_params(pred, head_param_specs("pred", cfg.proj_out, cfg.pred_hidden, cfg.pred_out), rng);
    return {std::move(proj), std::move(pred)};
}

// ---------------------------------------------------------------------------
// forward execution

Var ParamBinder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v;
    if (trainable_ && is_trainable_param(name))
        v = tape_->param(&weights_->at(name));
    else
        v = tape_->input(weights_->at(name));
    bound_.emplace(name, v);
    return v;
}

const Tensor* ParamBinder::raw(const std::string& name) const { return &weights_->at(name); }

void ParamBinder::collect_grads(std::unordered_map<std::string, Tensor>& grads) const {
    for (const auto& [name, var] : bound_) {
        if (!is_trainable_param(name) || !tape_->needs_grad(var)) continue;
        if (!tape_->grad_touched(var)) continue;
        auto [it, inserted] = grads.emplace(name, tape_->grad(var));
        if (!inserted) it->second.add_scaled(tape_->grad(var), 1.0);
    }
}

void commit_bn_stats(NetworkWeights& w, const BnStatsList& stats, double momentum) {
    for (const auto& s : stats) {
        Tensor& rm = w.at(s.mean_name);
        Tensor& rv = w.at(s.var_name);
        for (long i = 0; i < rm.numel(); ++i) {
            rm[i] = (1.0 - momentum) * rm[i] + momentum * s.batch_mean[i];
            rv[i] = (1.0 - momentum) * rv[i] + momentum * s.batch_var[i];
        }
    }
}

namespace {

constexpr double kBnEps = 1e-5;

Var bn_layer(Tape& t, ParamBinder& bind, const std::string& prefix, Var x, bool training,
             BnStatsList* stats) {
    Var gamma = bind(prefix + ".gamma");
    Var beta = bind(prefix + ".beta");
    Tensor bm, bv;
    Var y = t.batchnorm(x, gamma, beta, bind.raw(prefix + ".running_mean"),
                        bind.raw(prefix + ".running_var"), training, kBnEps,
                        training ? &bm : nullptr, training ? &bv : nullptr);
    if (training && stats)
        stats->push_back({prefix + ".running_mean", prefix + ".running_var", std::move(bm),
                          std::move(bv)});
    return y;
}

Var conv_bn_relu(Tape& t, ParamBinder& bind, const std::string& base, Var x, long stride,
                 long pad, bool training, BnStatsList* stats) {
    Var y = t.conv2d(x, bind(base + ".conv.weight"), stride, pad);
    y = bn_layer(t, bind, base + ".bn", y, training, stats);
    return t.relu(y);
}

Var bottleneck_block(Tape& t, ParamBinder& bind, const std::string& base, Var x, long stride,
                     bool has_downsample, bool training, BnStatsList* stats) {
    Var identity = x;
    Var y = t.conv2d(x, bind(base + ".conv1.weight"), 1, 0);
    y = bn_layer(t, bind, base + ".bn1", y, training, stats);
    y = t.relu(y);
    y = t.conv2d(y, bind(base + ".conv2.weight"), stride, 1);
    y = bn_layer(t, bind, base + ".bn2", y, training, stats);
    y = t.relu(y);
    y = t.conv2d(y, bind(base + ".conv3.weight"), 1, 0);
    y = bn_layer(t, bind, base + ".bn3", y, training, stats);
    if (has_downsample) {
        identity = t.conv2d(x, bind(base + ".downsample.conv.weight"), stride, 0);
        identity = bn_layer(t, bind, base + ".downsample.bn", identity, training, stats);
    }
    return t.relu(t.add(y, identity));
}

}  // namespace

EncoderOutputs encoder_forward(Tape& tape, ParamBinder& bind, const EncoderConfig& cfg, Var x,
                               bool training, BnStatsList* bn_stats) {
    EncoderOutputs out;
    if (cfg.variant == EncoderVariant::tiny) {
        Var h = x;
        for (size_t i = 0; i < cfg.stage_widths.size(); ++i) {
            h = conv_bn_relu(tape, bind, "enc.stage" + std::to_string(i + 1), h, 2, 1, training,
                             bn_stats);
            out.skips.push_back(h);
        }
        out.embedding = tape.global_avg_pool(h);
        return out;
    }
    Var h = conv_bn_relu(tape, bind, "enc.stem", x, 2, 3, training, bn_stats);
    out.skips.push_back(h);
    h = tape.maxpool2d(h, 3, 2, 1);
    long in_ch = 64;
    for (int l = 0; l < 4; ++l) {
        const long out_ch = kResnetPlanes[l] * kResnetExpansion;
        for (int b = 0; b < kResnetBlocks[l]; ++b) {
            const std::string base =
                "enc.layer" + std::to_string(l + 1) + ".block" + std::to_string(b);
            const long stride = (b == 0 && l > 0) ? 2 : 1;
            const bool down = b == 0 && (in_ch != out_ch || stride != 1);
            h = bottleneck_block(tape, bind, base, h, stride, down, training, bn_stats);
            in_ch = out_ch;
        }
        out.skips.push_back(h);
    }
    out.embedding = tape.global_avg_pool(h);
    return out;
}

Var unet_forward(Tape& tape, ParamBinder& bind, const EncoderConfig& enc_cfg,
                 const DecoderConfig& dec_cfg, Var x, bool training, BnStatsList* bn_stats) {
    dec_cfg.validate(enc_cfg);
    EncoderOutputs enc = encoder_forward(tape, bind, enc_cfg, x, training, bn_stats);
    const int n = static_cast<int>(dec_cfg.stage_channels.size());
    Var h = enc.skips.back();
    for (int i = 1; i <= n; ++i) {
        const std::string base = "dec.stage" + std::to_string(i);
        h = tape.upsample_nearest2(h);
        const int skip_idx = n - 1 - i;
        if (skip_idx >= 0) h = tape.concat_channels(h, enc.skips[static_cast<size_t>(skip_idx)]);
        h = tape.conv2d(h, bind(base + ".conv1.weight"), 1, 1);
        h = bn_layer(tape, bind, base + ".bn1", h, training, bn_stats);
        h = tape.relu(h);
        h = tape.conv2d(h, bind(base + ".conv2.weight"), 1, 1);
        h = bn_layer(tape, bind, base + ".bn2", h, training, bn_stats);
        h = tape.relu(h);
    }
    h = tape.conv2d(h, bind("dec.head.conv.weight"), 1, 0);
    return tape.bias_add_channel(h, bind("dec.head.conv.bias"));
}

Var head_forward(Tape& tape, ParamBinder& bind, const std::string& prefix, Var x, bool training,
                 BnStatsList* bn_stats) {
    Var h = tape.linear(x, bind(prefix + ".fc1.weight"), Var{});
    const long b = tape.value(h).dim(0), d = tape.value(h).dim(1);
    h = tape.reshape(h, {b, d, 1, 1});
    h = bn_layer(tape, bind, prefix + ".bn", h, training, bn_stats);
    h = tape.reshape(h, {b, d});
    h = tape.relu(h);
    return tape.linear(h, bind(prefix + ".fc2.weight"), bind(prefix + ".fc2.bias"));
}

}  // namespace medseg
