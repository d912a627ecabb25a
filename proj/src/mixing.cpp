#include "attnmix/mixing.hpp"

#include <cmath>

namespace attnmix {

namespace {
constexpr double kLambdaEps = 1e-8;

real clamp01(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<real>(v);
}
}  // namespace

MixStrategy MixStrategy::none() { return MixStrategy{}; }

MixStrategy MixStrategy::attention_mix(const AttentionSelector& sel) {
    MixStrategy s;
    s.kind = Kind::AttentionMix;
    s.selector = sel;
    return s;
}

MixStrategy MixStrategy::word_mixup(double alpha) {
    MixStrategy s;
    s.kind = Kind::WordMixup;
    s.alpha = alpha;
    return s;
}

MixStrategy MixStrategy::mixup_encoding(double alpha) {
    MixStrategy s;
    s.kind = Kind::MixupEncoding;
    s.alpha = alpha;
    return s;
}

void MixStrategy::validate() const {
    if (kind == Kind::WordMixup || kind == Kind::MixupEncoding) {
        check(alpha > 0.0, "MixStrategy: alpha must be > 0");
    }
}

std::string MixStrategy::name() const {
    switch (kind) {
        case Kind::None: return "none";
        case Kind::AttentionMix: return "attention_mix";
        case Kind::WordMixup: return "word_mixup";
        case Kind::MixupEncoding: return "mixup_encoding";
    }
    return "none";
}

std::vector<int> pair_shuffle(int batch_size, Rng& rng) {
    check(batch_size >= 1, "pair_shuffle: batch_size must be >= 1");
    return rng.permutation(batch_size);
}

std::vector<real> lambda_vector(const RelevanceVector& b1, const RelevanceVector& b2) {
    check(b1.values.size() == b2.values.size(), "lambda_vector: width mismatch");
    std::vector<real> lambda(b1.values.size());
    for (std::size_t j = 0; j < lambda.size(); ++j) {
        const double denom = static_cast<double>(b1.values[j]) + b2.values[j] + kLambdaEps;
        lambda[j] = clamp01(static_cast<double>(b1.values[j]) / denom);
    }
    return lambda;
}

Matrix mix_labels(const Matrix& y1, const Matrix& y2, double lambda_label) {
    check(lambda_label >= 0.0 && lambda_label <= 1.0, "mix_labels: lambda out of [0,1]");
    check(y1.same_shape(y2), "mix_labels: shape mismatch");
    Matrix out(y1.rows(), y1.cols());
    for (int r = 0; r < y1.rows(); ++r) {
        for (int c = 0; c < y1.cols(); ++c) {
            out.at(r, c) = static_cast<real>(lambda_label * y1.at(r, c) +
                                             (1.0 - lambda_label) * y2.at(r, c));
        }
    }
    return out;
}

PairMix attention_mix(const Matrix& emb1, const Matrix& emb2,
                      const RelevanceVector& b1, const RelevanceVector& b2,
                      const std::vector<std::uint8_t>& mask1,
                      const std::vector<std::uint8_t>& mask2) {
    check(emb1.same_shape(emb2), "attention_mix: embedding shape mismatch");
    const int width = emb1.rows();
    check(static_cast<int>(b1.values.size()) == width &&
              static_cast<int>(b2.values.size()) == width,
          "attention_mix: relevance width mismatch");
    check(static_cast<int>(mask1.size()) == width && static_cast<int>(mask2.size()) == width,
          "attention_mix: mask width mismatch");

    PairMix mix;
    mix.lambda.assign(width, real(0));
    mix.counted.assign(width, 0);
    mix.union_mask.assign(width, 0);
    const std::vector<real> raw = lambda_vector(b1, b2);
    for (int t = 0; t < width; ++t) {
        const bool real1 = mask1[t] != 0;
        const bool real2 = mask2[t] != 0;
        mix.union_mask[t] = real1 || real2;
        if (real1 && real2) {
            mix.lambda[t] = raw[t];
            mix.counted[t] = 1;
        } else if (real1) {
            mix.lambda[t] = real(1);
        } else if (real2) {
            mix.lambda[t] = real(0);
        } else {
            mix.lambda[t] = real(0.5);
        }
    }
    double sum = 0.0;
    long n_counted = 0;
    for (int t = 0; t < width; ++t) {
        if (!mix.counted[t]) continue;
        sum += mix.lambda[t];
        ++n_counted;
    }
    check(n_counted > 0, "attention_mix: no overlapping real tokens");
    mix.lambda_label = sum / static_cast<double>(n_counted);

    mix.mixed = Matrix(width, emb1.cols());
    for (int t = 0; t < width; ++t) {
        const double lam = mix.lambda[t];
        const real* r1 = emb1.row(t);
        const real* r2 = emb2.row(t);
        real* dst = mix.mixed.row(t);
        for (int c = 0; c < emb1.cols(); ++c) {
            dst[c] = static_cast<real>(lam * r1[c] + (1.0 - lam) * r2[c]);
        }
    }
    return mix;
}

namespace {

Matrix slice_rows(const Matrix& m, int row0, int nrows) {
    Matrix out(nrows, m.cols());
    for (int r = 0; r < nrows; ++r) {
        const real* src = m.row(row0 + r);
        real* dst = out.row(r);
        for (int c = 0; c < m.cols(); ++c) dst[c] = src[c];
    }
    return out;
}

Matrix label_row(const Batch& batch, int b) {
    Matrix out(1, batch.labels_onehot.cols());
    for (int c = 0; c < out.cols(); ++c) out.at(0, c) = batch.labels_onehot.at(b, c);
    return out;
}

void validate_pairing(const std::vector<int>& pairing, int batch_size) {
    check(static_cast<int>(pairing.size()) == batch_size, "pairing size mismatch");
    std::vector<char> seen(batch_size, 0);
    for (int p : pairing) {
        check(p >= 0 && p < batch_size && !seen[p], "pairing is not a permutation");
        seen[p] = 1;
    }
}

}  // namespace

MixedBatch attention_mix_batch(const Batch& batch, const Matrix& embeddings,
                               const std::vector<RelevanceVector>& relevance,
                               const std::vector<int>& pairing) {
    check(static_cast<int>(relevance.size()) == batch.size,
          "attention_mix_batch: relevance count mismatch");
    validate_pairing(pairing, batch.size);

    MixedBatch out;
    out.pairing = pairing;
    out.mixed_embeddings = Matrix(batch.size * batch.width, embeddings.cols());
    out.soft_labels = Matrix(batch.size, batch.labels_onehot.cols());
    out.union_mask.assign(batch.size * batch.width, 0);
    out.lambda_label.resize(batch.size);
    out.lambda.resize(batch.size);
    out.counted.resize(batch.size);

    for (int b = 0; b < batch.size; ++b) {
        const int j = pairing[b];
        std::vector<std::uint8_t> mask1(batch.mask.begin() + b * batch.width,
                                        batch.mask.begin() + (b + 1) * batch.width);
        std::vector<std::uint8_t> mask2(batch.mask.begin() + j * batch.width,
                                        batch.mask.begin() + (j + 1) * batch.width);
        Matrix emb1 = slice_rows(embeddings, b * batch.width, batch.width);
        Matrix emb2 = slice_rows(embeddings, j * batch.width, batch.width);
        PairMix mix = attention_mix(emb1, emb2, relevance[b], relevance[j], mask1, mask2);

        for (int t = 0; t < batch.width; ++t) {
            const real* src = mix.mixed.row(t);
            real* dst = out.mixed_embeddings.row(b * batch.width + t);
            for (int c = 0; c < embeddings.cols(); ++c) dst[c] = src[c];
            out.union_mask[b * batch.width + t] = mix.union_mask[t];
        }
        Matrix soft = mix_labels(label_row(batch, b), label_row(batch, j), mix.lambda_label);
        for (int c = 0; c < soft.cols(); ++c) out.soft_labels.at(b, c) = soft.at(0, c);
        out.lambda_label[b] = mix.lambda_label;
        out.lambda[b] = std::move(mix.lambda);
        out.counted[b] = std::move(mix.counted);
    }
    return out;
}

MixedBatch word_mixup_batch(const Batch& batch, const Matrix& embeddings,
                            const std::vector<int>& pairing, Rng& rng, double alpha) {
    check(alpha > 0.0, "word_mixup_batch: alpha must be > 0");
    validate_pairing(pairing, batch.size);

    MixedBatch out;
    out.pairing = pairing;
    out.mixed_embeddings = Matrix(batch.size * batch.width, embeddings.cols());
    out.soft_labels = Matrix(batch.size, batch.labels_onehot.cols());
    out.union_mask.assign(batch.size * batch.width, 0);
    out.lambda_label.resize(batch.size);
    out.lambda.resize(batch.size);
    out.counted.resize(batch.size);

    for (int b = 0; b < batch.size; ++b) {
        const int j = pairing[b];
        const double lam = sample_beta(rng, alpha);
        out.lambda_label[b] = lam;
        out.lambda[b].assign(batch.width, static_cast<real>(lam));
        out.counted[b].assign(batch.width, 1);
        for (int t = 0; t < batch.width; ++t) {
            const real* r1 = embeddings.row(b * batch.width + t);
            const real* r2 = embeddings.row(j * batch.width + t);
            real* dst = out.mixed_embeddings.row(b * batch.width + t);
            for (int c = 0; c < embeddings.cols(); ++c) {
                dst[c] = static_cast<real>(lam * r1[c] + (1.0 - lam) * r2[c]);
            }
            out.union_mask[b * batch.width + t] =
                batch.mask[b * batch.width + t] || batch.mask[j * batch.width + t];
        }
        Matrix soft = mix_labels(label_row(batch, b), label_row(batch, j), lam);
        for (int c = 0; c < soft.cols(); ++c) out.soft_labels.at(b, c) = soft.at(0, c);
    }
    return out;
}

MixedBatch mixup_encoding_batch(const Batch& batch, const Matrix& pooled,
                                const std::vector<int>& pairing, Rng& rng, double alpha) {
    check(alpha > 0.0, "mixup_encoding_batch: alpha must be > 0");
    check(pooled.rows() == batch.size, "mixup_encoding_batch: pooled row count mismatch");
    validate_pairing(pairing, batch.size);

    MixedBatch out;
    out.pairing = pairing;
    out.mixed_encodings = Matrix(batch.size, pooled.cols());
    out.soft_labels = Matrix(batch.size, batch.labels_onehot.cols());
    out.lambda_label.resize(batch.size);

    for (int b = 0; b < batch.size; ++b) {
        const int j = pairing[b];
        const double lam = sample_beta(rng, alpha);
        out.lambda_label[b] = lam;
        const real* r1 = pooled.row(b);
        const real* r2 = pooled.row(j);
        real* dst = out.mixed_encodings.row(b);
        for (int c = 0; c < pooled.cols(); ++c) {
            dst[c] = static_cast<real>(lam * r1[c] + (1.0 - lam) * r2[c]);
        }
        Matrix soft = mix_labels(label_row(batch, b), label_row(batch, j), lam);
        for (int c = 0; c < soft.cols(); ++c) out.soft_labels.at(b, c) = soft.at(0, c);
    }
    return out;
}

Matrix unmix_embedding_grad(const MixedBatch& mixed, const Matrix& dmixed,
                            int batch, int width) {
    check(dmixed.rows() == batch * width, "unmix_embedding_grad: shape mismatch");
    Matrix dsource(batch * width, dmixed.cols());
    for (int b = 0; b < batch; ++b) {
        const int j = mixed.pairing[b];
        for (int t = 0; t < width; ++t) {
            const double lam = mixed.lambda[b][t];
            const real* g = dmixed.row(b * width + t);
            real* d1 = dsource.row(b * width + t);
            real* d2 = dsource.row(j * width + t);
            for (int c = 0; c < dmixed.cols(); ++c) {
                d1[c] += static_cast<real>(lam * g[c]);
                d2[c] += static_cast<real>((1.0 - lam) * g[c]);
            }
        }
    }
    return dsource;
}

Matrix unmix_encoding_grad(const MixedBatch& mixed, const Matrix& dmixed) {
    Matrix dsource(dmixed.rows(), dmixed.cols());
    for (int b = 0; b < dmixed.rows(); ++b) {
        const int j = mixed.pairing[b];
        const double lam = mixed.lambda_label[b];
        const real* g = dmixed.row(b);
        real* d1 = dsource.row(b);
        real* d2 = dsource.row(j);
        for (int c = 0; c < dmixed.cols(); ++c) {
            d1[c] += static_cast<real>(lam * g[c]);
            d2[c] += static_cast<real>((1.0 - lam) * g[c]);
        }
    }
    return dsource;
}

}  // namespace attnmix
