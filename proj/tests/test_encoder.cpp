#include <cmath>

#include <doctest.h>

#include "attnmix/encoder.hpp"
#include "attnmix/reference.hpp"
#include "test_helpers.hpp"

using namespace attnmix;
using testutil::random_head;
using testutil::random_matrix;

TEST_SUITE_BEGIN("encoder");

using testutil::ids_batch;
using testutil::small_config;

TEST_CASE("single unmasked token attends to itself with weight one") {
    Rng rng(1);
    Matrix x = random_matrix(rng, 1, 8);
    auto [out, attn] = attention_head_forward(x, {1}, random_head(rng, 8, 4));
    CHECK(attn.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("zero queries and keys give uniform attention over unmasked keys") {
    Rng rng(2);
    const int n = 4, d = 8, hd = 4;
    Matrix x = random_matrix(rng, n, d);
    HeadParams p{Matrix(d, hd), Matrix(1, hd), Matrix(d, hd), Matrix(1, hd),
                 random_matrix(rng, d, hd), random_matrix(rng, 1, hd)};
    std::vector<std::uint8_t> mask = {1, 1, 1, 0};
    auto [out, attn] = attention_head_forward(x, mask, p);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(attn.at(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-6));
        CHECK(attn.at(i, 3) == real(0));
    }
}

TEST_CASE("attention matches the per-pair oracle on a random two-head case") {
    Rng rng(3);
    const int n = 3, d = 12, hd = 6;
    Matrix x = random_matrix(rng, n, d, 0.7);
    std::vector<std::uint8_t> mask = {1, 1, 1};
    for (int head = 0; head < 2; ++head) {
        HeadParams p = random_head(rng, d, hd);
        auto [out, attn] = attention_head_forward(x, mask, p);
        auto [out_ref, attn_ref] = ref::attention_head(x, mask, p);
        CHECK(max_abs_diff(attn, attn_ref) < 1e-6);
        CHECK(max_abs_diff(out, out_ref) < 1e-6);
    }
}

TEST_CASE("embedding adds token and positional components") {
    Rng rng(4);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{5, 5}}, {0}, 2);
    Matrix emb = model.embed(batch);

    Matrix tok, pos;
    for (auto& [name, var] : model.parameters()) {
        if (name == "tok_emb") tok = var->v;
        if (name == "pos_emb") pos = var->v;
    }
    // Same token at positions 1 and 2: token component equal, positional differs.
    for (int c = 0; c < emb.cols(); ++c) {
        CHECK(emb.at(1, c) - pos.at(1, c) == doctest::Approx(tok.at(5, c)).epsilon(1e-6));
        CHECK(emb.at(2, c) - pos.at(2, c) == doctest::Approx(tok.at(5, c)).epsilon(1e-6));
    }

    // Zeroed positional table: embedding equals the token rows.
    for (auto& [name, var] : model.parameters()) {
        if (name == "pos_emb") var->v.zero();
    }
    Matrix emb2 = model.embed(batch);
    for (int c = 0; c < emb2.cols(); ++c) {
        CHECK(emb2.at(1, c) == tok.at(5, c));
    }
}

TEST_CASE("embed rejects out-of-range ids") {
    Rng rng(5);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{42}}, {0}, 2);
    CHECK_THROWS_AS(model.embed(batch), ContractViolation);
}

TEST_CASE("logits have shape batch x num_classes") {
    Rng rng(6);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4}, {5}}, {0, 1}, 2);
    ForwardTrace trace = model.forward(batch, false);
    CHECK(trace.logits.rows() == 2);
    CHECK(trace.logits.cols() == 2);
}

TEST_CASE("trace without collection carries no attention stack") {
    Rng rng(7);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4}}, {0}, 2);
    ForwardTrace trace = model.forward(batch, false);
    CHECK_FALSE(trace.has_attention());
    CHECK_THROWS_AS(trace.attention_slice(0, 0, 0), ContractViolation);
}

TEST_CASE("collected attention rows sum to one over unmasked keys") {
    Rng rng(8);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4, 5}, {6}}, {0, 1}, 2);
    ForwardTrace trace = model.forward(batch, true);
    REQUIRE(trace.has_attention());
    for (int l = 0; l < 2; ++l) {
        for (int h = 0; h < 2; ++h) {
            for (int b = 0; b < batch.size; ++b) {
                Matrix aw = trace.attention_slice(l, h, b);
                for (int i = 0; i < batch.width; ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < batch.width; ++j) {
                        if (!batch.is_real(b, j)) CHECK(aw.at(i, j) == real(0));
                        sum += aw.at(i, j);
                    }
                    if (batch.is_real(b, i)) CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
                }
            }
        }
    }
}

TEST_CASE("forward_from_embeddings reproduces forward exactly") {
    Rng rng(9);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4}, {5, 6, 7}}, {0, 1}, 2);
    ForwardTrace a = model.forward(batch, false);
    Matrix emb = model.embed(batch);
    ForwardTrace b = model.forward_from_embeddings(emb, batch.mask, batch.size, batch.width, false);
    CHECK(max_abs_diff(a.logits, b.logits) == 0.0);
}

TEST_CASE("gradient flows to external input embeddings") {
    Rng rng(10);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4}}, {0}, 2);
    Matrix emb = model.embed(batch);
    ForwardTrace trace = model.forward_from_embeddings(emb, batch.mask, batch.size,
                                                       batch.width, false, true, nullptr);
    model.zero_grad();
    model.loss_and_backward(trace, batch.labels_onehot);
    REQUIRE(trace.input_grad.rows() == emb.rows());
    double total = 0.0;
    for (int t = 0; t < trace.input_grad.rows(); ++t) {
        for (int c = 0; c < trace.input_grad.cols(); ++c) {
            total += std::abs(static_cast<double>(trace.input_grad.at(t, c)));
        }
    }
    CHECK(total > 0.0);
}

TEST_CASE("soft cross entropy analytic values") {
    Matrix logits(1, 2);
    Matrix labels(1, 2);
    labels.at(0, 0) = real(0.5);
    labels.at(0, 1) = real(0.5);
    // Uniform p over two classes: loss = ln 2.
    CHECK(soft_cross_entropy(logits, labels, nullptr) == doctest::Approx(std::log(2.0)));

    Matrix one_hot(1, 2);
    one_hot.at(0, 1) = real(1);
    Matrix z(1, 2);
    z.at(0, 1) = real(8);
    const double p1 = std::exp(8.0) / (std::exp(8.0) + 1.0);
    CHECK(soft_cross_entropy(z, one_hot, nullptr) == doctest::Approx(-std::log(p1)).epsilon(1e-6));
}

TEST_CASE("non-normalized soft labels are rejected") {
    Matrix logits(1, 2);
    Matrix labels(1, 2);
    labels.at(0, 0) = real(0.7);
    labels.at(0, 1) = real(0.7);
    CHECK_THROWS_AS(soft_cross_entropy(logits, labels, nullptr), ContractViolation);
}

TEST_CASE("permuting batch order permutes logits identically") {
    Rng rng(11);
    EncoderModel model(small_config(10), rng);
    Batch fwd = ids_batch({{3, 4}, {5, 6, 7}, {8}}, {0, 1, 0}, 2);
    Batch rev = ids_batch({{8}, {5, 6, 7}, {3, 4}}, {0, 1, 0}, 2);
    Matrix la = model.forward(fwd, false).logits;
    Matrix lb = model.forward(rev, false).logits;
    for (int c = 0; c < 2; ++c) {
        CHECK(la.at(0, c) == lb.at(2, c));
        CHECK(la.at(1, c) == lb.at(1, c));
        CHECK(la.at(2, c) == lb.at(0, c));
    }
}

TEST_CASE("appending PAD tokens leaves logits unchanged") {
    Rng rng(12);
    EncoderModel model(small_config(10), rng);
    Batch tight = ids_batch({{3, 4, 5}}, {0}, 2);
    Batch padded = ids_batch({{3, 4, 5}}, {0}, 2, /*pad_to=*/10);
    Matrix la = model.forward(tight, false).logits;
    Matrix lb = model.forward(padded, false).logits;
    CHECK(max_abs_diff(la, lb) < 1e-5);
}

TEST_CASE("forward is deterministic with dropout disabled") {
    Rng rng(13);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4, 5}, {6, 7}}, {0, 1}, 2);
    Matrix la = model.forward(batch, false).logits;
    Matrix lb = model.forward(batch, false).logits;
    CHECK(max_abs_diff(la, lb) == 0.0);
}

TEST_CASE("dropout changes activations between draws but not eval mode") {
    Rng rng(14);
    EncoderModel model(small_config(10, real(0.5)), rng);
    Batch batch = ids_batch({{3, 4, 5}}, {0}, 2);
    Rng drop(77);
    Matrix la = model.forward(batch, false, true, &drop).logits;
    Matrix lb = model.forward(batch, false, true, &drop).logits;
    CHECK(max_abs_diff(la, lb) > 0.0);
}

TEST_CASE("full-model gradient check on a two-layer toy") {
    if (sizeof(real) == 4) {
        // The per-entry fd comparison needs the f64 noise floor; near-zero
        // gradients are unresolvable against fp32 forward noise.
        return;
    }
    Rng rng(15);
    EncoderConfig cfg = small_config(12);
    EncoderModel model(cfg, rng);
    Batch batch = ids_batch({{3, 4, 5, 6}, {7, 8}}, {0, 1}, 2);
    const Matrix labels = batch.labels_onehot;

    auto forward_loss = [&]() {
        ForwardTrace trace = model.forward(batch, false, false, nullptr);
        return soft_cross_entropy(trace.logits, labels, nullptr);
    };
    auto compute_grads = [&]() {
        model.zero_grad();
        ForwardTrace trace = model.forward(batch, false, true, nullptr);
        model.loss_and_backward(trace, labels);
    };
    GradCheckReport report =
        full_gradient_check(model.parameters(), forward_loss, compute_grads, 1e-3);
    INFO("worst: ", report.worst_param, "[", report.worst_index, "] analytic ",
         report.worst_analytic, " fd ", report.worst_fd);
    CHECK(report.max_rel_error < 1e-3);
}

TEST_CASE("mean pooling ignores PAD and backpropagates correctly") {
    Rng rng(17);
    EncoderConfig cfg = small_config(12);
    cfg.pooling = EncoderConfig::Pooling::Mean;
    cfg.num_layers = 1;
    EncoderModel model(cfg, rng);

    Batch tight = ids_batch({{3, 4, 5}}, {0}, 2);
    Batch padded = ids_batch({{3, 4, 5}}, {0}, 2, /*pad_to=*/9);
    CHECK(max_abs_diff(model.forward(tight, false).logits,
                       model.forward(padded, false).logits) < 1e-5);

    if (sizeof(real) == 8) {
        Batch batch = ids_batch({{3, 4, 5, 6}, {7, 8}}, {0, 1}, 2);
        const Matrix labels = batch.labels_onehot;
        auto forward_loss = [&]() {
            ForwardTrace trace = model.forward(batch, false, false, nullptr);
            return soft_cross_entropy(trace.logits, labels, nullptr);
        };
        auto compute_grads = [&]() {
            model.zero_grad();
            ForwardTrace trace = model.forward(batch, false, true, nullptr);
            model.loss_and_backward(trace, labels);
        };
        GradCheckReport report =
            full_gradient_check(model.parameters(), forward_loss, compute_grads, 1e-3);
        CHECK(report.max_rel_error < 1e-3);
    }
}

TEST_CASE("checkpoint round trip preserves parameters and logits") {
    Rng rng(16);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4}}, {0}, 2);
    Matrix before = model.forward(batch, false).logits;

    const std::string dir = testutil::scratch_dir("encoder_ckpt");
    model.save_checkpoint(dir + "/model.bin");
    EncoderModel loaded = EncoderModel::load_checkpoint(dir + "/model.bin");
    Matrix after = loaded.forward(batch, false).logits;
    CHECK(max_abs_diff(before, after) == 0.0);
    CHECK(loaded.config().num_layers == model.config().num_layers);
}

TEST_SUITE_END();
