#include "attnmix/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace attnmix {

namespace {

using rng_tags::kData;
using rng_tags::kDropout;
using rng_tags::kMix;

class Optimizer {
public:
    Optimizer(EncoderModel& model, const TrainConfig& cfg) : cfg_(cfg) {
        if (cfg_.optimizer == TrainConfig::Opt::Adam) {
            for (auto& [name, var] : model.parameters()) {
                m_.emplace_back(var->v.rows(), var->v.cols());
                v_.emplace_back(var->v.rows(), var->v.cols());
            }
        }
    }

    void step(EncoderModel& model) {
        auto params = model.parameters();
        if (cfg_.optimizer == TrainConfig::Opt::Sgd) {
            const real lr = static_cast<real>(cfg_.learning_rate);
            for (auto& [name, var] : params) axpy_inplace(var->v, -lr, var->g);
            return;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix& w = params[i].second->v;
            const Matrix& g = params[i].second->g;
            real* pw = w.data();
            const real* pg = g.data();
            real* pm = m_[i].data();
            real* pv = v_[i].data();
            const std::size_t n = w.size();
#pragma omp parallel for schedule(static) if (n > 4096)
            for (std::size_t k = 0; k < n; ++k) {
                const double grad = pg[k];
                const double m = cfg_.beta1 * pm[k] + (1.0 - cfg_.beta1) * grad;
                const double v = cfg_.beta2 * pv[k] + (1.0 - cfg_.beta2) * grad * grad;
                pm[k] = static_cast<real>(m);
                pv[k] = static_cast<real>(v);
                const double mh = m / bc1;
                const double vh = v / bc2;
                pw[k] -= static_cast<real>(cfg_.learning_rate * mh /
                                           (std::sqrt(vh) + cfg_.adam_eps));
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<Matrix> m_, v_;
    long t_ = 0;
};

std::vector<int> identity_permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    return p;
}

struct StepCounters {
    long train_passes = 0;
    long collect_passes = 0;
};

// One gradient step under the configured strategy. Returns the loss.
double train_step(EncoderModel& model, const Batch& batch, const TrainConfig& cfg,
                  Rng& mix_rng, Rng& dropout_rng, StepCounters& counters) {
    model.zero_grad();
    switch (cfg.strategy.kind) {
        case MixStrategy::Kind::None: {
            ForwardTrace trace = model.forward(batch, false, true, &dropout_rng);
            ++counters.train_passes;
            return model.loss_and_backward(trace, batch.labels_onehot);
        }
        case MixStrategy::Kind::AttentionMix: {
            // Attention-collection pass on the raw batch, dropout disabled,
            // gradients discarded.
            ForwardTrace collect = model.forward(batch, true, false, nullptr);
            ++counters.collect_passes;
            std::vector<RelevanceVector> relevance = extract(collect, cfg.strategy.selector);
            const std::vector<int> pairing = cfg.force_identity_pairing
                                                 ? identity_permutation(batch.size)
                                                 : pair_shuffle(batch.size, mix_rng);
            MixedBatch mixed =
                attention_mix_batch(batch, collect.input, relevance, pairing);
            ForwardTrace trace = model.forward_from_embeddings(
                mixed.mixed_embeddings, mixed.union_mask, batch.size, batch.width,
                false, true, &dropout_rng);
            ++counters.train_passes;
            const double loss = model.loss_and_backward(trace, mixed.soft_labels);
            Matrix dsource =
                unmix_embedding_grad(mixed, trace.input_grad, batch.size, batch.width);
            model.embed_backward(batch, dsource);
            return loss;
        }
        case MixStrategy::Kind::WordMixup: {
            Matrix embeddings = model.embed(batch);
            const std::vector<int> pairing = cfg.force_identity_pairing
                                                 ? identity_permutation(batch.size)
                                                 : pair_shuffle(batch.size, mix_rng);
            MixedBatch mixed =
                word_mixup_batch(batch, embeddings, pairing, mix_rng, cfg.strategy.alpha);
            ForwardTrace trace = model.forward_from_embeddings(
                mixed.mixed_embeddings, mixed.union_mask, batch.size, batch.width,
                false, true, &dropout_rng);
            ++counters.train_passes;
            const double loss = model.loss_and_backward(trace, mixed.soft_labels);
            Matrix dsource =
                unmix_embedding_grad(mixed, trace.input_grad, batch.size, batch.width);
            model.embed_backward(batch, dsource);
            return loss;
        }
        case MixStrategy::Kind::MixupEncoding: {
            ForwardTrace trace = model.forward(batch, false, true, &dropout_rng);
            ++counters.train_passes;
            const std::vector<int> pairing = cfg.force_identity_pairing
                                                 ? identity_permutation(batch.size)
                                                 : pair_shuffle(batch.size, mix_rng);
            MixedBatch mixed =
                mixup_encoding_batch(batch, trace.pooled, pairing, mix_rng, cfg.strategy.alpha);
            Matrix logits = model.classify(mixed.mixed_encodings);
            Matrix dlogits;
            const double loss = soft_cross_entropy(logits, mixed.soft_labels, &dlogits);
            Matrix dmixed;
            model.classifier_backward(mixed.mixed_encodings, dlogits, dmixed);
            Matrix dpooled = unmix_encoding_grad(mixed, dmixed);
            model.backward_from_pooled(trace, dpooled);
            return loss;
        }
    }
    throw ContractViolation("train_step: unknown strategy");
}

}  // namespace

void TrainConfig::validate() const {
    check(epochs >= 1, "TrainConfig: epochs must be >= 1");
    check(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    check(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    check(eval_every >= 1, "TrainConfig: eval_every must be >= 1");
    strategy.validate();
}

double RunRecord::median_step_seconds() const {
    if (step_seconds.empty()) return 0.0;
    std::vector<double> s = step_seconds;
    std::sort(s.begin(), s.end());
    return s[s.size() / 2];
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json j;
    j["train_loss"] = train_loss;
    j["step_losses"] = step_losses;
    j["eval_epochs"] = eval_epochs;
    j["val_accuracy"] = val_accuracy;
    j["best_epoch"] = best_epoch;
    j["best_val_accuracy"] = best_val_accuracy;
    j["test_accuracy"] = test_accuracy;
    j["train_step_passes"] = train_step_passes;
    j["collect_passes"] = collect_passes;
    j["eval_passes"] = eval_passes;
    j["steps"] = steps;
    j["diverged"] = diverged;
    j["diverged_epoch"] = diverged_epoch;
    return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
    RunRecord r;
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.step_losses = j.at("step_losses").get<std::vector<double>>();
    r.eval_epochs = j.at("eval_epochs").get<std::vector<int>>();
    r.val_accuracy = j.at("val_accuracy").get<std::vector<double>>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_accuracy = j.at("best_val_accuracy").get<double>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.train_step_passes = j.at("train_step_passes").get<long>();
    r.collect_passes = j.at("collect_passes").get<long>();
    r.eval_passes = j.at("eval_passes").get<long>();
    r.steps = j.at("steps").get<long>();
    r.diverged = j.at("diverged").get<bool>();
    r.diverged_epoch = j.at("diverged_epoch").get<int>();
    return r;
}

double evaluate(EncoderModel& model, const std::vector<Example>& split,
                int num_classes, int batch_size, int max_len) {
    check(!split.empty(), "evaluate: empty split");
    const std::vector<Batch> batches =
        make_batches(split, batch_size, max_len, num_classes, nullptr);
    long correct = 0, total = 0;
    for (const Batch& batch : batches) {
        ForwardTrace trace = model.forward(batch, false, false, nullptr);
        for (int b = 0; b < batch.size; ++b) {
            int argmax = 0;
            for (int c = 1; c < num_classes; ++c) {
                if (trace.logits.at(b, c) > trace.logits.at(b, argmax)) argmax = c;
            }
            correct += argmax == batch.label_index[b];
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(EncoderModel& model, const DataSplits& data, const TrainConfig& cfg,
                  std::ostream* log) {
    cfg.validate();
    check(!data.train.empty() && !data.val.empty() && !data.test.empty(),
          "train: data must have train/val/test splits");

    Rng data_rng = Rng::derive(cfg.seed, kData);
    Rng mix_rng = Rng::derive(cfg.seed, kMix);
    Rng dropout_rng = Rng::derive(cfg.seed, kDropout);

    const int max_len = model.config().max_len;
    Optimizer opt(model, cfg);

    TrainResult result;
    RunRecord& rec = result.record;
    result.best_params = model.snapshot_params();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<Batch> batches =
            make_batches(data.train, cfg.batch_size, max_len, data.num_classes, &data_rng);
        double loss_sum = 0.0;
        long n_steps = 0;
        StepCounters counters;
        for (const Batch& batch : batches) {
            const auto t0 = std::chrono::steady_clock::now();
            const double loss = train_step(model, batch, cfg, mix_rng, dropout_rng, counters);
            const auto t1 = std::chrono::steady_clock::now();
            rec.step_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
            rec.step_losses.push_back(loss);
            if (!std::isfinite(loss)) {
                rec.diverged = true;
                rec.diverged_epoch = epoch;
                rec.train_loss.push_back(loss_sum / std::max(1L, n_steps));
                rec.train_step_passes += counters.train_passes;
                rec.collect_passes += counters.collect_passes;
                rec.steps += n_steps;
                if (log) *log << "epoch=" << epoch << " diverged (non-finite loss)\n";
                return result;
            }
            opt.step(model);
            loss_sum += loss;
            ++n_steps;
        }
        rec.train_step_passes += counters.train_passes;
        rec.collect_passes += counters.collect_passes;
        rec.steps += n_steps;
        const double mean_loss = loss_sum / n_steps;
        rec.train_loss.push_back(mean_loss);

        if ((epoch + 1) % cfg.eval_every == 0 || epoch == cfg.epochs - 1) {
            const double val_acc =
                evaluate(model, data.val, data.num_classes, cfg.batch_size, max_len);
            rec.eval_passes += (static_cast<long>(data.val.size()) + cfg.batch_size - 1) /
                               cfg.batch_size;
            rec.eval_epochs.push_back(epoch);
            rec.val_accuracy.push_back(val_acc);
            if (val_acc > rec.best_val_accuracy || rec.best_epoch < 0) {
                rec.best_val_accuracy = val_acc;
                rec.best_epoch = epoch;
                result.best_params = model.snapshot_params();
            }
            if (log) {
                *log << "epoch=" << epoch << " loss=" << mean_loss << " val_acc=" << val_acc
                     << '\n';
            }
        } else if (log) {
            *log << "epoch=" << epoch << " loss=" << mean_loss << '\n';
        }
    }

    model.restore_params(result.best_params);
    rec.test_accuracy = evaluate(model, data.test, data.num_classes, cfg.batch_size, max_len);
    rec.eval_passes +=
        (static_cast<long>(data.test.size()) + cfg.batch_size - 1) / cfg.batch_size;
    return result;
}

OverheadTable measure_overhead(const EncoderModel& model, const DataSplits& data,
                               const std::vector<MixStrategy>& strategies,
                               const TrainConfig& base, int steps) {
    check(steps >= 1, "measure_overhead: steps must be >= 1");
    OverheadTable table;
    double word_median = 0.0, attention_median = 0.0;

    for (const MixStrategy& strategy : strategies) {
        EncoderModel clone = model;
        TrainConfig cfg = base;
        cfg.strategy = strategy;
        Rng data_rng = Rng::derive(cfg.seed, kData);
        Rng mix_rng = Rng::derive(cfg.seed, kMix);
        Rng dropout_rng = Rng::derive(cfg.seed, kDropout);
        Optimizer opt(clone, cfg);

        std::vector<Batch> batches =
            make_batches(data.train, cfg.batch_size, clone.config().max_len,
                         data.num_classes, &data_rng);
        StepCounters counters;
        std::vector<double> times;
        const int warmup = 3;
        int done = 0;
        while (done < steps + warmup) {
            for (const Batch& batch : batches) {
                if (done >= steps + warmup) break;
                const auto t0 = std::chrono::steady_clock::now();
                train_step(clone, batch, cfg, mix_rng, dropout_rng, counters);
                opt.step(clone);
                const auto t1 = std::chrono::steady_clock::now();
                if (done >= warmup) {
                    times.push_back(std::chrono::duration<double>(t1 - t0).count());
                }
                ++done;
            }
        }
        std::sort(times.begin(), times.end());

        // Inference timing: the eval path is strategy-independent.
        const auto e0 = std::chrono::steady_clock::now();
        evaluate(clone, data.val, data.num_classes, cfg.batch_size, clone.config().max_len);
        const auto e1 = std::chrono::steady_clock::now();

        OverheadRow row;
        row.strategy = strategy.name();
        row.median_step_seconds = times[times.size() / 2];
        row.median_eval_seconds = std::chrono::duration<double>(e1 - e0).count();
        row.train_passes = counters.train_passes;
        row.collect_passes = counters.collect_passes;
        table.rows.push_back(row);

        if (strategy.kind == MixStrategy::Kind::WordMixup) word_median = row.median_step_seconds;
        if (strategy.kind == MixStrategy::Kind::AttentionMix) {
            attention_median = row.median_step_seconds;
        }
    }
    if (word_median > 0.0 && attention_median > 0.0) {
        table.attention_over_word_ratio = attention_median / word_median;
    }
    return table;
}

}  // namespace attnmix
