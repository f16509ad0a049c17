#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "medseg/rng.hpp"
#include "medseg/tape.hpp"
#include "medseg/tensor.hpp"

namespace medseg {

// Ordered named parameter map: the unit of weight transfer and
// checkpointing. Canonical names follow stage.block.layer.kind, e.g.
// enc.stage1.conv.weight or enc.layer2.block0.bn3.gamma. Running batch-norm
// statistics live here too (kind running_mean / running_var) so they travel
// with the weights; they are excluded from gradient updates.
struct NetworkWeights {
    std::vector<std::string> order;
    std::unordered_map<std::string, Tensor> params;
    std::map<std::string, std::string> meta;

    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return params.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    long total_params() const;
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;
    void check_finite() const;
};

bool is_trainable_param(const std::string& name);

enum class EncoderVariant { tiny, resnet50 };

std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& s);

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::tiny;
    int in_channels = 1;
    std::vector<int> stage_widths = {8, 16, 32};  // TINY only

    int embedding_dim() const {
        return variant == EncoderVariant::resnet50 ? 2048 : stage_widths.back();
    }
    int skip_count() const { return variant == EncoderVariant::resnet50 ? 5 : static_cast<int>(stage_widths.size()); }
    // Total downsampling factor of the deepest feature map.
    int total_stride() const { return variant == EncoderVariant::resnet50 ? 32 : 1 << stage_widths.size(); }
    void validate() const;
};

struct HeadConfig {
    int proj_hidden = 64;
    int proj_out = 16;
    int pred_hidden = 64;
    int pred_out = 16;
    void validate() const;
};

struct DecoderConfig {
    std::vector<int> stage_channels;  // one entry per decoder stage
    int out_classes = 4;

    static DecoderConfig defaults_for(const EncoderConfig& enc);
    void validate(const EncoderConfig& enc) const;
};

// Declarative parameter layout; shared by builders, transfer validation and
// checkpoint import.
struct ParamSpec {
    enum class Init { kaiming, zeros, ones };
    std::string name;
    std::vector<long> shape;
    Init init = Init::kaiming;
    long fan_in = 1;
};

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg);
std::vector<ParamSpec> decoder_param_specs(const EncoderConfig& enc, const DecoderConfig& dec);
std::vector<ParamSpec> head_param_specs(const std::string& prefix, int in_dim, int hidden,
                                        int out_dim);

// i.i.d. uniform on [-b, b] with b = sqrt(6 / fan_in) (rectifier gain).
Tensor kaiming_uniform_init(const std::vector<long>& shape, long fan_in, Rng& rng);
double kaiming_bound(long fan_in);

void init_params(NetworkWeights& w, const std::vector<ParamSpec>& specs, Rng& rng);

NetworkWeights build_encoder(const EncoderConfig& cfg, Rng& rng);

// Collapses a 3-channel first convolution to single-channel by summing the
// kernel over its channel axis; every other parameter is copied bit-exactly.
NetworkWeights adapt_input_layer(const NetworkWeights& w);

// Copies encoder parameters bit-exactly into the layout demanded by dst_cfg
// (applying the input-layer adaptation for a 3->1 channel move). Non-encoder
// parameters never survive a transfer; heads and decoders are rebuilt fresh
// by their owners.
NetworkWeights transfer_encoder_weights(const NetworkWeights& src, const EncoderConfig& dst_cfg);

NetworkWeights build_unet(const NetworkWeights& encoder_weights, const EncoderConfig& enc_cfg,
                          const DecoderConfig& dec_cfg, Rng& rng);

std::pair<NetworkWeights, NetworkWeights> build_byol_heads(int embedding_dim,
                                                           const HeadConfig& cfg, Rng& rng);

// --- forward execution -----------------------------------------------------

// Binds named parameters of one NetworkWeights onto a tape, memoized per
// name. After backward, collect_grads harvests per-name gradients for the
// trainable bound parameters.
class ParamBinder {
public:
    ParamBinder(Tape& tape, NetworkWeights& weights, bool trainable = true)
        : tape_(&tape), weights_(&weights), trainable_(trainable) {}

    Var operator()(const std::string& name);
    const Tensor* raw(const std::string& name) const;
    void collect_grads(std::unordered_map<std::string, Tensor>& grads) const;

private:
    Tape* tape_;
    NetworkWeights* weights_;
    bool trainable_;
    std::unordered_map<std::string, Var> bound_;
};

// Batch statistics observed during a training-mode forward pass, to be folded
// into the running estimates once the step is committed.
struct BnBatchStats {
    std::string mean_name;
    std::string var_name;
    Tensor batch_mean;
    Tensor batch_var;
};

using BnStatsList = std::vector<BnBatchStats>;

// run = (1 - momentum) * run + momentum * batch
void commit_bn_stats(NetworkWeights& w, const BnStatsList& stats, double momentum = 0.1);

struct EncoderOutputs {
    Var embedding;           // (B, embedding_dim)
    std::vector<Var> skips;  // shallow -> deep; back() is the deepest map
};

EncoderOutputs encoder_forward(Tape& tape, ParamBinder& bind, const EncoderConfig& cfg, Var x,
                               bool training, BnStatsList* bn_stats);

Var unet_forward(Tape& tape, ParamBinder& bind, const EncoderConfig& enc_cfg,
                 const DecoderConfig& dec_cfg, Var x, bool training, BnStatsList* bn_stats);

// 2-layer MLP head (linear -> batchnorm -> relu -> linear), prefix "proj." or
// "pred.". x is (B, in_dim).
Var head_forward(Tape& tape, ParamBinder& bind, const std::string& prefix, Var x, bool training,
                 BnStatsList* bn_stats);

}  // namespace medseg
