#pragma once

#include <optional>
#include <vector>

#include "medseg/augment.hpp"
#include "medseg/data.hpp"
#include "medseg/metrics.hpp"
#include "medseg/nets.hpp"
#include "medseg/optim.hpp"

namespace medseg {

enum class TauSchedule { constant, cosine_to_one };

struct ByolConfig {
    double tau_base = 0.99;
    TauSchedule tau_schedule = TauSchedule::cosine_to_one;
    double learning_rate = 0.2;  // momentum SGD, cosine-decayed over the run
    double momentum = 0.9;
    int epochs = 25;
    int batch_size = 16;
    bool checkpoint_every_epoch = false;
    AugmentConfig augment;

    void validate() const;
};

// Online branch carries encoder+projector+predictor; the target never holds
// a predictor (the asymmetry that prevents collapse).
struct ByolState {
    NetworkWeights online;
    NetworkWeights target;
    double tau = 0.99;
    long step = 0;
    EncoderConfig encoder_cfg;
    HeadConfig head_cfg;
};

// Symmetrized normalized MSE between predictor outputs and (detached) target
// projections: mean over the batch of |q1^ - z2^|^2 + |q2^ - z1^|^2 where
// v^ = v/|v|. Equals the 2 - 2*cos form in both directions; bounded by 8.
double byol_loss(const Tensor& q1, const Tensor& z2, const Tensor& q2, const Tensor& z1);

// One direction only: mean_b |q^ - z^|^2, bounded by 4.
double byol_loss_directional(const Tensor& q, const Tensor& z);

// d(byol_loss)/dq1 and /dq2; the z inputs are constants by contract.
void byol_loss_grads(const Tensor& q1, const Tensor& z2, const Tensor& q2, const Tensor& z1,
                     Tensor& gq1, Tensor& gq2);

// xi' = tau*xi + (1-tau)*theta for every parameter the two share. The target
// name set must be a subset of the online one; predictor names never appear
// in the result.
NetworkWeights ema_update(const NetworkWeights& online, const NetworkWeights& target, double tau);

double tau_at(long step, long total_steps, const ByolConfig& cfg);

ByolState byol_init_state(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                          const std::optional<NetworkWeights>& init_encoder, uint64_t seed);

// Owns everything a step needs beyond the spec-visible state.
struct ByolTrainer {
    ByolState state;
    ByolConfig cfg;
    SgdMomentum opt;
    long total_steps = 0;
    double last_lr = 0.0;

    ByolTrainer(ByolState s, ByolConfig c, long total)
        : state(std::move(s)), cfg(c), opt(cfg.momentum), total_steps(total) {}
};

// Forward loss only, no state mutation; used by the training step and by the
// finite-difference gradient oracle.
double byol_forward_loss(ByolState& state, const std::vector<ViewPair>& batch,
                         GradMap* out_grads, BnStatsList* out_bn);

// One optimizer step on the online branch with target outputs treated as
// constants, then the EMA update; returns the (pre-update) loss.
double byol_train_step(ByolTrainer& trainer, const std::vector<ViewPair>& batch);

struct ByolHistoryRow {
    long step = 0;
    int epoch = 0;
    double loss = 0.0;
    double tau = 0.0;
    double learning_rate = 0.0;
};

struct PretrainResult {
    NetworkWeights encoder;                   // meta.stage/epoch recorded
    std::vector<NetworkWeights> checkpoints;  // per-epoch encoder snapshots
    std::vector<ByolHistoryRow> history;
};

// SSL over ALL slices (labeled and unlabeled). epochs = 0 returns the given
// (or fresh random) encoder untouched.
PretrainResult pretrain(const SemiSupervisedDataset& dataset, const ByolConfig& cfg,
                        const std::optional<NetworkWeights>& init_encoder,
                        const EncoderConfig& enc_cfg, const HeadConfig& head_cfg, uint64_t seed,
                        MetricsSink* sink = nullptr);

}  // namespace medseg
