#include "medseg/seg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "medseg/errors.hpp"
#include "medseg/kernels.hpp"
#include "medseg/optim.hpp"

namespace medseg {

void SegConfig::validate() const {
    if (total_steps < 0) throw ArgumentError("SegConfig: total_steps must be >= 0");
    if (epochs_equivalent < 1) throw ArgumentError("SegConfig: epochs_equivalent must be >= 1");
    if (batch_size < 2) throw ArgumentError("SegConfig: batch_size must be >= 2 (batch norm)");
    if (!(lr_max > 0.0) || !(lr_min > 0.0) || lr_min > lr_max)
        throw ArgumentError("SegConfig: need 0 < lr_min <= lr_max");
    if (anneal_period_steps < 0) throw ArgumentError("SegConfig: anneal period must be >= 0");
    if (eval_every_steps < 1) throw ArgumentError("SegConfig: eval_every_steps must be >= 1");
    augment.validate();
}

long SegConfig::resolved_total_steps(long n_labeled_train) const {
    if (total_steps > 0) return total_steps;
    const long steps_per_epoch =
        std::max<long>(1, (n_labeled_train + batch_size - 1) / batch_size);
    return static_cast<long>(epochs_equivalent) * steps_per_epoch;
}

long SegConfig::resolved_period(long total) const {
    if (anneal_period_steps > 0) return anneal_period_steps;
    return std::max<long>(1, total / 3);
}

// ---------------------------------------------------------------------------
// losses and metrics

namespace {

void check_jaccard_shapes(const Tensor& probs, const Tensor& target) {
    if (probs.ndim() != 4 || target.ndim() != 3)
        throw ArgumentError("jaccard_loss: probs must be (B,C,H,W), target (B,H,W)");
    if (probs.dim(0) != target.dim(0) || probs.dim(2) != target.dim(1) ||
        probs.dim(3) != target.dim(2))
        throw ArgumentError("jaccard_loss: probs/target shape mismatch");
}

struct JaccardSums {
    std::vector<double> inter;  // sum p*t per class
    std::vector<double> psum;   // sum p per class
    std::vector<double> tsum;   // sum t per class
};

JaccardSums jaccard_sums(const Tensor& probs, const Tensor& target) {
    check_jaccard_shapes(probs, target);
    const long B = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
    JaccardSums s;
    s.inter.assign(static_cast<size_t>(C), 0.0);
    s.psum.assign(static_cast<size_t>(C), 0.0);
    s.tsum.assign(static_cast<size_t>(C), 0.0);
    for (long b = 0; b < B; ++b)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                const long t = static_cast<long>(target[(b * H + y) * W + x]);
                if (t < 0 || t >= C)
                    throw ArgumentError("jaccard_loss: target id outside [0,C)");
                s.tsum[static_cast<size_t>(t)] += 1.0;
                for (long c = 0; c < C; ++c) {
                    const double p = probs.at4(b, c, y, x);
                    s.psum[static_cast<size_t>(c)] += p;
                    if (c == t) s.inter[static_cast<size_t>(c)] += p;
                }
            }
    return s;
}

}  // namespace

double soft_iou(const Tensor& probs, const Tensor& target, double eps) {
    const JaccardSums s = jaccard_sums(probs, target);
    const size_t C = s.inter.size();
    double total = 0.0;
    for (size_t c = 0; c < C; ++c) {
        const double uni = s.psum[c] + s.tsum[c] - s.inter[c];
        total += (s.inter[c] + eps) / (uni + eps);
    }
    return total / static_cast<double>(C);
}

double jaccard_loss(const Tensor& probs, const Tensor& target, double eps) {
    return 1.0 - soft_iou(probs, target, eps);
}

void jaccard_loss_grad(const Tensor& probs, const Tensor& target, double eps, Tensor& gprobs) {
    const JaccardSums s = jaccard_sums(probs, target);
    const long B = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
    gprobs = Tensor::zeros(probs.shape());
    // d softIoU_c / dp = [t*(U+eps) - (I+eps)*(1-t)] / (U+eps)^2
    std::vector<double> i_eps(static_cast<size_t>(C)), u_eps(static_cast<size_t>(C));
    for (long c = 0; c < C; ++c) {
        i_eps[static_cast<size_t>(c)] = s.inter[static_cast<size_t>(c)] + eps;
        u_eps[static_cast<size_t>(c)] = s.psum[static_cast<size_t>(c)] +
                                        s.tsum[static_cast<size_t>(c)] -
                                        s.inter[static_cast<size_t>(c)] + eps;
    }
    const double inv_c = 1.0 / static_cast<double>(C);
    for (long b = 0; b < B; ++b)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                const long t = static_cast<long>(target[(b * H + y) * W + x]);
                for (long c = 0; c < C; ++c) {
                    const double tt = c == t ? 1.0 : 0.0;
                    const double u = u_eps[static_cast<size_t>(c)];
                    const double d = (tt * u - i_eps[static_cast<size_t>(c)] * (1.0 - tt)) /
                                     (u * u);
                    gprobs.at4(b, c, y, x) = -inv_c * d;
                }
            }
}

namespace {

struct IouCounts {
    std::vector<long> inter;
    std::vector<long> uni;
};

IouCounts iou_counts(const Tensor& pred_ids, const Tensor& target_ids, int n_classes) {
    if (!pred_ids.same_shape(target_ids))
        throw ArgumentError("iou_score: prediction/target shape mismatch");
    IouCounts c;
    c.inter.assign(static_cast<size_t>(n_classes), 0);
    c.uni.assign(static_cast<size_t>(n_classes), 0);
    for (long i = 0; i < pred_ids.numel(); ++i) {
        const long p = static_cast<long>(pred_ids[i]);
        const long t = static_cast<long>(target_ids[i]);
        if (p < 0 || p >= n_classes || t < 0 || t >= n_classes)
            throw ArgumentError("iou_score: class id outside [0,n_classes)");
        if (p == t) {
            ++c.inter[static_cast<size_t>(p)];
            ++c.uni[static_cast<size_t>(p)];
        } else {
            ++c.uni[static_cast<size_t>(p)];
            ++c.uni[static_cast<size_t>(t)];
        }
    }
    return c;
}

}  // namespace

std::vector<double> iou_score_per_class(const Tensor& pred_ids, const Tensor& target_ids,
                                        int n_classes) {
    const IouCounts c = iou_counts(pred_ids, target_ids, n_classes);
    std::vector<double> out(static_cast<size_t>(n_classes),
                            std::numeric_limits<double>::quiet_NaN());
    for (int k = 0; k < n_classes; ++k)
        if (c.uni[static_cast<size_t>(k)] > 0)
            out[static_cast<size_t>(k)] = static_cast<double>(c.inter[static_cast<size_t>(k)]) /
                                          static_cast<double>(c.uni[static_cast<size_t>(k)]);
    return out;
}

double iou_score_macro(const Tensor& pred_ids, const Tensor& target_ids, int n_classes) {
    const IouCounts c = iou_counts(pred_ids, target_ids, n_classes);
    double total = 0.0;
    int present = 0;
    for (int k = 0; k < n_classes; ++k) {
        if (c.uni[static_cast<size_t>(k)] == 0) continue;
        total += static_cast<double>(c.inter[static_cast<size_t>(k)]) /
                 static_cast<double>(c.uni[static_cast<size_t>(k)]);
        ++present;
    }
    return present > 0 ? total / static_cast<double>(present) : 0.0;
}

double cosine_annealing_lr(long step, double lr_max, double lr_min, long period) {
    if (step < 0) throw ArgumentError("cosine_annealing_lr: step must be >= 0");
    if (period < 1) throw ArgumentError("cosine_annealing_lr: period must be >= 1");
    const long t = step % period;
    constexpr double pi = 3.14159265358979323846;
    return lr_min + 0.5 * (lr_max - lr_min) *
                        (1.0 + std::cos(pi * static_cast<double>(t) / static_cast<double>(period)));
}

// ---------------------------------------------------------------------------
// fine-tuning

namespace {

Tensor image_batch_to_tensor(const std::vector<Image2D>& imgs) {
    const long B = static_cast<long>(imgs.size());
    const long S = imgs.front().h;
    Tensor t({B, 1, S, S});
    for (long b = 0; b < B; ++b)
        std::copy(imgs[static_cast<size_t>(b)].px.begin(), imgs[static_cast<size_t>(b)].px.end(),
                  t.data() + b * S * S);
    return t;
}

Tensor mask_batch_to_tensor(const std::vector<Mask2D>& masks) {
    const long B = static_cast<long>(masks.size());
    const long S = masks.front().h;
    Tensor t({B, S, S});
    for (long b = 0; b < B; ++b)
        for (long i = 0; i < S * S; ++i)
            t[b * S * S + i] = static_cast<double>(masks[static_cast<size_t>(b)].cls[
                static_cast<size_t>(i)]);
    return t;
}

// Resize a slice (and its mask) to the working resolution without any
// stochastic augmentation; used for evaluation.
void eval_resize(const SliceRecord& rec, int size, Image2D& img, Mask2D& mask) {
    if (rec.image.h == size && rec.image.w == size) {
        img = rec.image;
        mask = *rec.mask;
        return;
    }
    Tensor src({rec.image.h, rec.image.w});
    std::copy(rec.image.px.begin(), rec.image.px.end(), src.data());
    Tensor dst({size, size});
    kernels::resize_bilinear(src, dst);
    img = Image2D::zeros(size, size);
    std::copy(dst.data(), dst.data() + dst.numel(), img.px.begin());
    mask = Mask2D::zeros(size, size);
    kernels::resize_nearest_u8(rec.mask->cls, rec.mask->h, rec.mask->w, mask.cls, size, size);
}

Tensor argmax_channels(const Tensor& probs) {
    const long B = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
    Tensor ids({B, H, W});
    for (long b = 0; b < B; ++b)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                long best = 0;
                double bv = probs.at4(b, 0, y, x);
                for (long c = 1; c < C; ++c)
                    if (probs.at4(b, c, y, x) > bv) {
                        bv = probs.at4(b, c, y, x);
                        best = c;
                    }
                ids[(b * H + y) * W + x] = static_cast<double>(best);
            }
    return ids;
}

Var jaccard_loss_node(Tape& tape, Var probs, Tensor target, double eps) {
    const double loss = jaccard_loss(tape.value(probs), target, eps);
    return tape.custom(Tensor::scalar(loss), {probs},
                       [target = std::move(target), eps](Tape& t, Var out,
                                                         const std::vector<Var>& p) {
                           if (!t.needs_grad(p[0])) return;
                           Tensor g;
                           jaccard_loss_grad(t.value(p[0]), target, eps, g);
                           t.grad(p[0]).add_scaled(g, t.grad(out)[0]);
                       });
}

}  // namespace

EvalMetrics evaluate_unet(NetworkWeights& weights, const EncoderConfig& enc_cfg,
                          const DecoderConfig& dec_cfg, const SemiSupervisedDataset& ds,
                          int output_size, int batch_size, double eps) {
    const long n = static_cast<long>(ds.labeled_indices.size());
    if (n == 0) return {};
    const long C = dec_cfg.out_classes;
    std::vector<double> inter(static_cast<size_t>(C), 0.0), psum(static_cast<size_t>(C), 0.0),
        tsum(static_cast<size_t>(C), 0.0);
    std::vector<long> hard_inter(static_cast<size_t>(C), 0), hard_union(static_cast<size_t>(C), 0);

    for (long start = 0; start < n; start += batch_size) {
        const long count = std::min<long>(batch_size, n - start);
        std::vector<Image2D> imgs(static_cast<size_t>(count));
        std::vector<Mask2D> masks(static_cast<size_t>(count));
        for (long j = 0; j < count; ++j) {
            const SliceRecord& rec =
                ds.slices[static_cast<size_t>(ds.labeled_indices[static_cast<size_t>(start + j)])];
            eval_resize(rec, output_size, imgs[static_cast<size_t>(j)],
                        masks[static_cast<size_t>(j)]);
        }
        Tensor x = image_batch_to_tensor(imgs);
        Tensor target = mask_batch_to_tensor(masks);

        Tape tape;
        ParamBinder bind(tape, weights, /*trainable=*/false);
        Var logits = unet_forward(tape, bind, enc_cfg, dec_cfg, tape.input(std::move(x)),
                                  /*training=*/false, nullptr);
        Var probs = tape.softmax_channels(logits);
        const Tensor& pv = tape.value(probs);

        // fold into split-level soft and hard statistics
        const long B = pv.dim(0), H = pv.dim(2), W = pv.dim(3);
        for (long b = 0; b < B; ++b)
            for (long y = 0; y < H; ++y)
                for (long x2 = 0; x2 < W; ++x2) {
                    const long t = static_cast<long>(target[(b * H + y) * W + x2]);
                    tsum[static_cast<size_t>(t)] += 1.0;
                    for (long c = 0; c < C; ++c) {
                        const double p = pv.at4(b, c, y, x2);
                        psum[static_cast<size_t>(c)] += p;
                        if (c == t) inter[static_cast<size_t>(c)] += p;
                    }
                }
        Tensor pred = argmax_channels(pv);
        for (long i = 0; i < pred.numel(); ++i) {
            const long p = static_cast<long>(pred[i]);
            const long t = static_cast<long>(target[i]);
            if (p == t) {
                ++hard_inter[static_cast<size_t>(p)];
                ++hard_union[static_cast<size_t>(p)];
            } else {
                ++hard_union[static_cast<size_t>(p)];
                ++hard_union[static_cast<size_t>(t)];
            }
        }
    }

    EvalMetrics m;
    double soft_total = 0.0;
    for (long c = 0; c < C; ++c) {
        const double uni = psum[static_cast<size_t>(c)] + tsum[static_cast<size_t>(c)] -
                           inter[static_cast<size_t>(c)];
        soft_total += (inter[static_cast<size_t>(c)] + eps) / (uni + eps);
    }
    m.loss = 1.0 - soft_total / static_cast<double>(C);
    double iou_total = 0.0;
    int present = 0;
    for (long c = 0; c < C; ++c)
        if (hard_union[static_cast<size_t>(c)] > 0) {
            iou_total += static_cast<double>(hard_inter[static_cast<size_t>(c)]) /
                         static_cast<double>(hard_union[static_cast<size_t>(c)]);
            ++present;
        }
    m.iou = present > 0 ? iou_total / static_cast<double>(present) : 0.0;
    return m;
}

NetworkWeights finetune_init_weights(const std::optional<NetworkWeights>& encoder_ckpt,
                                     const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                                     EncoderInit init, uint64_t seed) {
    if (init == EncoderInit::from_checkpoint && !encoder_ckpt)
        throw ArgumentError("finetune: FROM_CHECKPOINT requires encoder weights");
    NetworkWeights encoder;
    if (init == EncoderInit::from_checkpoint) {
        encoder = transfer_encoder_weights(*encoder_ckpt, enc_cfg);
    } else {
        Rng enc_rng(derive_seed(seed, "seg-encoder"));
        encoder = build_encoder(enc_cfg, enc_rng);
    }
    Rng dec_rng(derive_seed(seed, "seg-decoder"));
    return build_unet(encoder, enc_cfg, dec_cfg, dec_rng);
}

FinetuneResult finetune(const std::optional<NetworkWeights>& encoder_ckpt,
                        const std::vector<int>& subset, const DatasetBundle& data,
                        const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                        const SegConfig& cfg, uint64_t seed, MetricsSink* sink) {
    cfg.validate();
    if (subset.empty()) throw ArgumentError("finetune: labeled subset is empty");
    for (int i : subset)
        if (i < 0 || static_cast<size_t>(i) >= data.train.slices.size() ||
            !data.train.slices[static_cast<size_t>(i)].mask)
            throw ArgumentError("finetune: subset index " + std::to_string(i) +
                                " is not a labeled train slice");

    NetworkWeights weights =
        finetune_init_weights(encoder_ckpt, enc_cfg, dec_cfg, cfg.encoder_init, seed);

    const long total = cfg.resolved_total_steps(
        static_cast<long>(data.train.labeled_indices.size()));
    const long period = cfg.resolved_period(total);
    Adam opt;

    FinetuneResult result;
    double window_loss = 0.0;
    long window_count = 0;

    for (long step = 0; step < total; ++step) {
        Rng batch_rng(derive_seed(seed, {fnv1a64("seg-batch"), static_cast<uint64_t>(step)}));
        const long B = cfg.batch_size;
        std::vector<int> picks(static_cast<size_t>(B));
        for (long j = 0; j < B; ++j)
            picks[static_cast<size_t>(j)] =
                subset[static_cast<size_t>(batch_rng.uniform_int(
                    static_cast<long>(subset.size())))];

        std::vector<Image2D> imgs(static_cast<size_t>(B));
        std::vector<Mask2D> masks(static_cast<size_t>(B));
#pragma omp parallel for schedule(static)
        for (long j = 0; j < B; ++j) {
            const SliceRecord& rec = data.train.slices[static_cast<size_t>(
                picks[static_cast<size_t>(j)])];
            Rng arng(derive_seed(seed, {fnv1a64("seg-aug"), static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(j)}));
            auto [im, mk] = augment_labeled_pair(rec.image, *rec.mask, cfg.augment, arng);
            imgs[static_cast<size_t>(j)] = std::move(im);
            masks[static_cast<size_t>(j)] = std::move(mk);
        }

        Tape tape;
        ParamBinder bind(tape, weights, /*trainable=*/true);
        BnStatsList bn;
        Var logits = unet_forward(tape, bind, enc_cfg, dec_cfg,
                                  tape.input(image_batch_to_tensor(imgs)), /*training=*/true,
                                  &bn);
        Var probs = tape.softmax_channels(logits);
        Var loss_node = jaccard_loss_node(tape, probs, mask_batch_to_tensor(masks),
                                          cfg.jaccard_eps);
        const double loss = tape.value(loss_node)[0];
        if (!std::isfinite(loss))
            throw NumericError("finetune: non-finite loss at step " + std::to_string(step));
        tape.backward(loss_node);
        GradMap grads;
        bind.collect_grads(grads);
        opt.step(weights, grads, cosine_annealing_lr(step, cfg.lr_max, cfg.lr_min, period));
        commit_bn_stats(weights, bn);

        window_loss += loss;
        ++window_count;

        if ((step + 1) % cfg.eval_every_steps == 0) {
            const EvalMetrics em = evaluate_unet(weights, enc_cfg, dec_cfg, data.val,
                                                 cfg.augment.output_size, cfg.batch_size,
                                                 cfg.jaccard_eps);
            const double train_avg = window_loss / static_cast<double>(window_count);
            window_loss = 0.0;
            window_count = 0;
            result.curve.steps.push_back(step + 1);
            result.curve.train_loss.push_back(train_avg);
            result.curve.eval_iou.push_back(em.iou);
            result.curve.eval_loss.push_back(em.loss);
            if (sink) {
                const std::string s = std::to_string(step + 1);
                sink->append(s + ",train,loss," + format_g17(train_avg));
                sink->append(s + ",val,iou," + format_g17(em.iou));
                sink->append(s + ",val,loss," + format_g17(em.loss));
            }
        }
    }

    const EvalMetrics test = evaluate_unet(weights, enc_cfg, dec_cfg, data.test,
                                           cfg.augment.output_size, cfg.batch_size,
                                           cfg.jaccard_eps);
    result.test_iou = test.iou;
    result.test_loss = test.loss;
    if (sink) {
        sink->append(std::to_string(total) + ",test,iou," + format_g17(test.iou));
        sink->append(std::to_string(total) + ",test,loss," + format_g17(test.loss));
    }
    result.weights = std::move(weights);
    return result;
}

}  // namespace medseg
