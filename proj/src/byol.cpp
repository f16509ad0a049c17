#include "medseg/byol.hpp"

#include <algorithm>
#include <cmath>

#include "medseg/errors.hpp"

namespace medseg {

void ByolConfig::validate() const {
    if (tau_base < 0.0 || tau_base > 1.0)
        throw ArgumentError("ByolConfig: tau_base must be in [0,1]");
    if (learning_rate <= 0.0) throw ArgumentError("ByolConfig: learning_rate must be > 0");
    if (epochs < 0) throw ArgumentError("ByolConfig: epochs must be >= 0");
    if (batch_size < 2) throw ArgumentError("ByolConfig: batch_size must be >= 2 (batch norm)");
    augment.validate();
}

namespace {

double row_norm(const Tensor& t, long row) {
    const long d = t.dim(1);
    double s = 0.0;
    for (long i = 0; i < d; ++i) s += t.at2(row, i) * t.at2(row, i);
    return std::sqrt(s);
}

constexpr double kNormGuard = 1e-12;

// mean_b |q^ - z^|^2 and, optionally, its gradient wrt q accumulated into gq.
double directional_loss(const Tensor& q, const Tensor& z, Tensor* gq, double gscale) {
    if (!q.same_shape(z) || q.ndim() != 2)
        throw ArgumentError("byol_loss: batches must share shape (B,D)");
    const long B = q.dim(0), D = q.dim(1);
    double total = 0.0;
    for (long b = 0; b < B; ++b) {
        const double nq = row_norm(q, b);
        const double nz = row_norm(z, b);
        if (nq < kNormGuard || nz < kNormGuard)
            throw NumericError("byol_loss: zero-norm row at batch index " + std::to_string(b));
        double dot = 0.0;
        for (long i = 0; i < D; ++i) dot += q.at2(b, i) * z.at2(b, i);
        const double cos = dot / (nq * nz);
        total += 2.0 - 2.0 * cos;
        if (gq) {
            // d/dq [2 - 2 q.z/(|q||z|)] = (-2/|q|) (z^ - cos * q^)
            const double c = -2.0 / nq * (gscale / static_cast<double>(B));
            for (long i = 0; i < D; ++i)
                gq->at2(b, i) += c * (z.at2(b, i) / nz - cos * q.at2(b, i) / nq);
        }
    }
    return total / static_cast<double>(B);
}

}  // namespace

double byol_loss_directional(const Tensor& q, const Tensor& z) {
    return directional_loss(q, z, nullptr, 1.0);
}

double byol_loss(const Tensor& q1, const Tensor& z2, const Tensor& q2, const Tensor& z1) {
    return directional_loss(q1, z2, nullptr, 1.0) + directional_loss(q2, z1, nullptr, 1.0);
}

void byol_loss_grads(const Tensor& q1, const Tensor& z2, const Tensor& q2, const Tensor& z1,
                     Tensor& gq1, Tensor& gq2) {
    gq1 = Tensor::zeros(q1.shape());
    gq2 = Tensor::zeros(q2.shape());
    directional_loss(q1, z2, &gq1, 1.0);
    directional_loss(q2, z1, &gq2, 1.0);
}

NetworkWeights ema_update(const NetworkWeights& online, const NetworkWeights& target,
                          double tau) {
    NetworkWeights out;
    out.meta = target.meta;
    for (const auto& name : target.order) {
        if (name.rfind("pred.", 0) == 0)
            throw ContractError("ema_update: target must not hold predictor parameters");
        auto it = online.params.find(name);
        if (it == online.params.end())
            throw ContractError("ema_update: online branch is missing " + name);
        const Tensor& xi = target.params.at(name);
        const Tensor& theta = it->second;
        if (!xi.same_shape(theta))
            throw ContractError("ema_update: shape mismatch for " + name);
        Tensor next(xi.shape());
        for (long i = 0; i < next.numel(); ++i)
            next[i] = tau * xi[i] + (1.0 - tau) * theta[i];
        out.add(name, std::move(next));
    }
    return out;
}

double tau_at(long step, long total_steps, const ByolConfig& cfg) {
    if (cfg.tau_schedule == TauSchedule::constant || total_steps <= 0) return cfg.tau_base;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0,
                                1.0);
    constexpr double pi = 3.14159265358979323846;
    return 1.0 - (1.0 - cfg.tau_base) * (std::cos(pi * t) + 1.0) / 2.0;
}

namespace {

NetworkWeights extract_encoder(const NetworkWeights& w, int epoch) {
    NetworkWeights enc;
    for (const auto& name : w.names_with_prefix("enc.")) enc.add(name, w.params.at(name));
    for (const char* key : {"variant", "input_channels"})
        if (auto it = w.meta.find(key); it != w.meta.end()) enc.meta[key] = it->second;
    enc.meta["stage"] = "byol-domain";
    enc.meta["epoch"] = std::to_string(epoch);
    return enc;
}

// Stacks both views into one (2B,...) batch so each branch runs a single
// forward pass; rows [0,B) are view1, rows [B,2B) view2.
Tensor stack_views(const std::vector<ViewPair>& batch) {
    const long B = static_cast<long>(batch.size());
    const long S = batch.front().view1.h;
    Tensor t({2 * B, 1, S, S});
    for (long b = 0; b < B; ++b) {
        std::copy(batch[static_cast<size_t>(b)].view1.px.begin(),
                  batch[static_cast<size_t>(b)].view1.px.end(), t.data() + b * S * S);
        std::copy(batch[static_cast<size_t>(b)].view2.px.begin(),
                  batch[static_cast<size_t>(b)].view2.px.end(), t.data() + (B + b) * S * S);
    }
    return t;
}

Tensor take_rows(const Tensor& t, long start, long count) {
    const long D = t.dim(1);
    Tensor out({count, D});
    std::copy(t.data() + start * D, t.data() + (start + count) * D, out.data());
    return out;
}

}  // namespace

ByolState byol_init_state(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                          const std::optional<NetworkWeights>& init_encoder, uint64_t seed) {
    enc_cfg.validate();
    head_cfg.validate();
    NetworkWeights encoder;
    if (init_encoder) {
        encoder = transfer_encoder_weights(*init_encoder, enc_cfg);
    } else {
        Rng rng(derive_seed(seed, "ssl-encoder"));
        encoder = build_encoder(enc_cfg, rng);
    }
    Rng head_rng(derive_seed(seed, "ssl-heads"));
    auto [proj, pred] = build_byol_heads(enc_cfg.embedding_dim(), head_cfg, head_rng);

    ByolState st;
    st.encoder_cfg = enc_cfg;
    st.head_cfg = head_cfg;
    st.online.meta = encoder.meta;
    for (const auto& n : encoder.order) st.online.add(n, encoder.params.at(n));
    for (const auto& n : proj.order) st.online.add(n, proj.params.at(n));
    for (const auto& n : pred.order) st.online.add(n, pred.params.at(n));
    // target starts as a copy of the online encoder+projector
    st.target.meta = encoder.meta;
    for (const auto& n : encoder.order) st.target.add(n, encoder.params.at(n));
    for (const auto& n : proj.order) st.target.add(n, proj.params.at(n));
    return st;
}

double byol_forward_loss(ByolState& state, const std::vector<ViewPair>& batch, GradMap* out_grads,
                         BnStatsList* out_bn) {
    if (batch.size() < 2) throw ArgumentError("byol: batch size must be >= 2");
    const long B = static_cast<long>(batch.size());
    Tensor stacked = stack_views(batch);

    Tape tape;
    ParamBinder online_bind(tape, state.online, /*trainable=*/true);
    Var x = tape.input(stacked);
    EncoderOutputs enc = encoder_forward(tape, online_bind, state.encoder_cfg, x, true, out_bn);
    Var z = head_forward(tape, online_bind, "proj", enc.embedding, true, out_bn);
    Var q = head_forward(tape, online_bind, "pred", z, true, out_bn);

    // target branch: constant leaves, so no gradient can reach it
    ParamBinder target_bind(tape, state.target, /*trainable=*/false);
    Var xt = tape.input(std::move(stacked));
    EncoderOutputs enc_t =
        encoder_forward(tape, target_bind, state.encoder_cfg, xt, true, nullptr);
    Var zt = head_forward(tape, target_bind, "proj", enc_t.embedding, true, nullptr);

    const Tensor& qv = tape.value(q);
    const Tensor& ztv = tape.value(zt);
    Tensor q1 = take_rows(qv, 0, B), q2 = take_rows(qv, B, B);
    Tensor z1t = take_rows(ztv, 0, B), z2t = take_rows(ztv, B, B);
    const double loss = byol_loss(q1, z2t, q2, z1t);

    if (out_grads) {
        Tensor gq1, gq2;
        byol_loss_grads(q1, z2t, q2, z1t, gq1, gq2);
        Var loss_node = tape.custom(
            Tensor::scalar(loss), {q},
            [B, gq1 = std::move(gq1), gq2 = std::move(gq2)](Tape& t, Var out,
                                                            const std::vector<Var>& p) {
                const double up = t.grad(out)[0];
                Tensor& gq = t.grad(p[0]);
                const long D = gq.dim(1);
                for (long b = 0; b < B; ++b)
                    for (long i = 0; i < D; ++i) {
                        gq.at2(b, i) += up * gq1.at2(b, i);
                        gq.at2(B + b, i) += up * gq2.at2(b, i);
                    }
            });
        tape.backward(loss_node);
        online_bind.collect_grads(*out_grads);
    }
    return loss;
}

double byol_train_step(ByolTrainer& trainer, const std::vector<ViewPair>& batch) {
    ByolState& st = trainer.state;
    GradMap grads;
    BnStatsList bn;
    const double loss = byol_forward_loss(st, batch, &grads, &bn);
    if (!std::isfinite(loss))
        throw NumericError("byol_train_step: non-finite loss at step " + std::to_string(st.step) +
                           " (tau=" + format_g17(st.tau) + ")");

    double lr = trainer.cfg.learning_rate;
    if (trainer.total_steps > 0) {
        constexpr double pi = 3.14159265358979323846;
        const double t = static_cast<double>(st.step) / static_cast<double>(trainer.total_steps);
        lr *= 0.5 * (1.0 + std::cos(pi * std::clamp(t, 0.0, 1.0)));
    }
    trainer.last_lr = lr;
    trainer.opt.step(st.online, grads, lr);
    commit_bn_stats(st.online, bn);

    st.tau = tau_at(st.step, trainer.total_steps, trainer.cfg);
    st.target = ema_update(st.online, st.target, st.tau);
    ++st.step;
    return loss;
}

PretrainResult pretrain(const SemiSupervisedDataset& dataset, const ByolConfig& cfg,
                        const std::optional<NetworkWeights>& init_encoder,
                        const EncoderConfig& enc_cfg, const HeadConfig& head_cfg, uint64_t seed,
                        MetricsSink* sink) {
    cfg.validate();
    if (dataset.slices.empty()) throw ArgumentError("pretrain: dataset is empty");

    ByolState state = byol_init_state(enc_cfg, head_cfg, init_encoder, seed);
    PretrainResult result;
    if (cfg.epochs == 0) {
        result.encoder = extract_encoder(state.online, 0);
        return result;
    }
    if (dataset.slices.size() < 2)
        throw ArgumentError("pretrain: need >= 2 slices for batched batch norm");

    const long n = static_cast<long>(dataset.slices.size());
    const long batch = std::min<long>(cfg.batch_size, n);
    const long batches_per_epoch = n / batch;
    const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;
    ByolTrainer trainer(std::move(state), cfg, total_steps);

    std::vector<long> order(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng order_rng(derive_seed(seed, {fnv1a64("epoch-order"), static_cast<uint64_t>(epoch)}));
        order_rng.shuffle(order);
        for (long bi = 0; bi < batches_per_epoch; ++bi) {
            std::vector<ViewPair> views(static_cast<size_t>(batch));
            // per-sample rng derived from (seed, epoch, slice index): worker
            // count cannot change the stream
#pragma omp parallel for schedule(static)
            for (long j = 0; j < batch; ++j) {
                const long ds_index = order[static_cast<size_t>(bi * batch + j)];
                Rng arng(derive_seed(seed, {fnv1a64("augment"), static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(ds_index)}));
                views[static_cast<size_t>(j)] = make_view_pair(
                    dataset.slices[static_cast<size_t>(ds_index)].image, cfg.augment, arng);
            }
            const long step_before = trainer.state.step;
            const double loss = byol_train_step(trainer, views);
            ByolHistoryRow row{step_before, epoch, loss, trainer.state.tau, trainer.last_lr};
            result.history.push_back(row);
            if (sink)
                sink->append("ssl," + std::to_string(row.step) + "," +
                             std::to_string(row.epoch) + "," + format_g17(row.loss) + "," +
                             format_g17(row.tau) + "," + format_g17(row.learning_rate));
        }
        if (cfg.checkpoint_every_epoch)
            result.checkpoints.push_back(extract_encoder(trainer.state.online, epoch));
    }
    result.encoder = extract_encoder(trainer.state.online, cfg.epochs);
    return result;
}

}  // namespace medseg
