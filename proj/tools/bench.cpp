// Kernel benchmark: OpenMP-parallel kernels vs. the serial reference
// implementations, plus the per-strategy training-step overhead table.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "attnmix/reference.hpp"
#include "attnmix/training.hpp"

using namespace attnmix;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            m.at(r, c) = static_cast<real>((rng.uniform01() * 2.0 - 1.0) * scale);
    return m;
}

double time_of(const std::function<void()>& fn, int iters) {
    fn();  // warmup
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / iters;
}

void report(const char* name, double serial, double parallel, double diff) {
    std::printf("%-24s serial %10.6fs   parallel %10.6fs   speedup %5.2fx   max|diff| %.3g\n",
                name, serial, parallel, serial / parallel, diff);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: disabled in this build\n");
#endif

    Rng rng(7);

    {
        const int n = 192;
        Matrix a = random_matrix(rng, n, n);
        Matrix b = random_matrix(rng, n, n);
        Matrix out_ref, out_par;
        const double ts = time_of([&] { out_ref = ref::matmul(a, b); }, 3);
        const double tp = time_of([&] { out_par = matmul(a, b); }, 3);
        report("matmul 192x192", ts, tp, max_abs_diff(out_ref, out_par));
    }

    {
        Matrix m = random_matrix(rng, 512, 256, 4.0);
        Matrix out_ref, out_par;
        const double ts = time_of([&] { out_ref = ref::softmax_rows(m); }, 5);
        const double tp = time_of([&] { out_par = softmax_rows(m); }, 5);
        report("softmax 512x256", ts, tp, max_abs_diff(out_ref, out_par));
    }

    {
        const int n = 48, d = 64, hd = 16;
        Matrix x = random_matrix(rng, n, d, 0.5);
        std::vector<std::uint8_t> mask(n, 1);
        mask[n - 1] = 0;
        HeadParams params{random_matrix(rng, d, hd, 0.1), random_matrix(rng, 1, hd, 0.1),
                          random_matrix(rng, d, hd, 0.1), random_matrix(rng, 1, hd, 0.1),
                          random_matrix(rng, d, hd, 0.1), random_matrix(rng, 1, hd, 0.1)};
        Matrix attn_ref, attn_par;
        const double ts = time_of([&] { attn_ref = ref::attention_head(x, mask, params).second; }, 2);
        const double tp = time_of([&] { attn_par = attention_head_forward(x, mask, params).second; }, 2);
        report("attention head n=48", ts, tp, max_abs_diff(attn_ref, attn_par));
    }

    // Strategy overhead on the toy corpus.
    ToySpec toy;
    toy.seed = 11;
    RawSplits raw = make_toy_corpus(toy);
    std::vector<std::vector<std::string>> corpus;
    for (const RawExample& ex : raw.train) corpus.push_back(tokenize(ex.text));
    Vocabulary vocab = build_vocab(corpus, 1, 1000);
    DataSplits data = encode_splits(raw, vocab);

    EncoderConfig cfg;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.embed_dim = 32;
    cfg.ff_dim = 64;
    cfg.max_len = 16;
    cfg.vocab_size = vocab.size();
    cfg.num_classes = data.num_classes;
    Rng init_rng = Rng::derive(11, rng_tags::kInit);
    EncoderModel model(cfg, init_rng);

    TrainConfig base;
    base.seed = 11;
    base.batch_size = 16;

    std::vector<MixStrategy> strategies = {
        MixStrategy::none(),
        MixStrategy::word_mixup(0.2),
        MixStrategy::mixup_encoding(0.2),
        MixStrategy::attention_mix(AttentionSelector::layer_mean(0)),
    };
    OverheadTable table = measure_overhead(model, data, strategies, base, 60);
    std::printf("\nstrategy overhead (median step time over 60 steps):\n");
    for (const OverheadRow& row : table.rows) {
        std::printf("  %-16s step %9.6fs   eval %9.6fs   train passes %ld   collect passes %ld\n",
                    row.strategy.c_str(), row.median_step_seconds, row.median_eval_seconds,
                    row.train_passes, row.collect_passes);
    }
    std::printf("attention_mix / word_mixup step-time ratio: %.3f\n",
                table.attention_over_word_ratio);
    return 0;
}
