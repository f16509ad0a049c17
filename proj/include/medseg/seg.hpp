#pragma once

#include <optional>
#include <vector>

#include "medseg/augment.hpp"
#include "medseg/data.hpp"
#include "medseg/metrics.hpp"
#include "medseg/nets.hpp"

namespace medseg {

enum class EncoderInit { random, from_checkpoint };

struct SegConfig {
    long total_steps = 0;       // 0: steps equivalent to `epochs_equivalent` on the full labeled set
    int epochs_equivalent = 150;
    int batch_size = 8;
    double lr_max = 3e-3;
    double lr_min = 1e-5;
    long anneal_period_steps = 0;  // 0: total_steps / 3 (3 restarts)
    long eval_every_steps = 10;
    EncoderInit encoder_init = EncoderInit::random;
    AugmentConfig augment;
    double jaccard_eps = 1e-7;

    void validate() const;
    long resolved_total_steps(long n_labeled_train) const;
    long resolved_period(long total_steps) const;
};

struct LearningCurve {
    std::vector<long> steps;  // strictly increasing
    std::vector<double> train_loss;
    std::vector<double> eval_iou;
    std::vector<double> eval_loss;

    size_t size() const { return steps.size(); }
};

// 1 - mean over classes of (sum p*t + eps)/(sum p + sum t - sum p*t + eps),
// sums over batch and pixels, t one-hot. probs (B,C,H,W), target (B,H,W)
// class ids.
double jaccard_loss(const Tensor& probs, const Tensor& target, double eps = 1e-7);
void jaccard_loss_grad(const Tensor& probs, const Tensor& target, double eps, Tensor& gprobs);
double soft_iou(const Tensor& probs, const Tensor& target, double eps = 1e-7);

// Hard IoU from label maps (B,H,W). Classes absent from both prediction and
// target are excluded from the macro average (NaN in the per-class form).
double iou_score_macro(const Tensor& pred_ids, const Tensor& target_ids, int n_classes);
std::vector<double> iou_score_per_class(const Tensor& pred_ids, const Tensor& target_ids,
                                        int n_classes);

// Periodic schedule restarting every `period` steps:
// lr = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi * (step mod period)/period))
double cosine_annealing_lr(long step, double lr_max, double lr_min, long period);

struct FinetuneResult {
    LearningCurve curve;
    NetworkWeights weights;
    double test_loss = 0.0;
    double test_iou = 0.0;
};

// Step-0 network: encoder transferred (or freshly built) and decoder freshly
// initialized. The decoder draws from its own seed-derived stream, so its
// initial values are identical whether the encoder came from a checkpoint or
// was random.
NetworkWeights finetune_init_weights(const std::optional<NetworkWeights>& encoder_ckpt,
                                     const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                                     EncoderInit init, uint64_t seed);

// Fixed-step-budget fine-tuning of a U-Net on a labeled subset; the subset is
// resampled every step so the budget is independent of its size. Curve points
// are taken on the val split every eval_every_steps; the test split is
// touched once at the end.
FinetuneResult finetune(const std::optional<NetworkWeights>& encoder_ckpt,
                        const std::vector<int>& subset, const DatasetBundle& data,
                        const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                        const SegConfig& cfg, uint64_t seed, MetricsSink* sink = nullptr);

struct EvalMetrics {
    double iou = 0.0;
    double loss = 0.0;
};

// Split-level metrics in eval mode (running batch-norm statistics).
EvalMetrics evaluate_unet(NetworkWeights& weights, const EncoderConfig& enc_cfg,
                          const DecoderConfig& dec_cfg, const SemiSupervisedDataset& ds,
                          int output_size, int batch_size, double eps);

}  // namespace medseg
