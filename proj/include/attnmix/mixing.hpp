#pragma once

#include <string>
#include <vector>

#include "attnmix/relevance.hpp"

namespace attnmix {

struct MixStrategy {
    enum class Kind { None, AttentionMix, WordMixup, MixupEncoding };
    Kind kind = Kind::None;
    AttentionSelector selector;  // AttentionMix only
    double alpha = 0.2;          // Beta(alpha, alpha) for the two baselines

    static MixStrategy none();
    static MixStrategy attention_mix(const AttentionSelector& sel);
    static MixStrategy word_mixup(double alpha);
    static MixStrategy mixup_encoding(double alpha);

    void validate() const;
    std::string name() const;  // none | attention_mix | word_mixup | mixup_encoding
};

// Uniformly random pairing permutation; fixed points allowed (an example may
// mix with itself).
std::vector<int> pair_shuffle(int batch_size, Rng& rng);

// Eq.-style per-token mixing ratio b1 / (b1 + b2 + eps), clamped to [0,1].
std::vector<real> lambda_vector(const RelevanceVector& b1, const RelevanceVector& b2);

// Convex label combination lambda*y1 + (1-lambda)*y2.
Matrix mix_labels(const Matrix& y1, const Matrix& y2, double lambda_label);

struct PairMix {
    Matrix mixed;                 // width x d
    std::vector<real> lambda;     // per position
    std::vector<std::uint8_t> counted;  // positions entering the lambda_label mean
    double lambda_label = 0.0;
    std::vector<std::uint8_t> union_mask;
};

// Attention-guided pair mix. Positions where exactly one side is PAD keep
// the real token fully (lambda forced to the endpoint) and are excluded from
// the lambda_label mean; both-PAD positions are excluded entirely.
PairMix attention_mix(const Matrix& emb1, const Matrix& emb2,
                      const RelevanceVector& b1, const RelevanceVector& b2,
                      const std::vector<std::uint8_t>& mask1,
                      const std::vector<std::uint8_t>& mask2);

struct MixedBatch {
    Matrix mixed_embeddings;             // (batch*width) x d, embedding-level strategies
    Matrix mixed_encodings;              // batch x d, MixupEncoding
    Matrix soft_labels;                  // batch x num_classes
    std::vector<double> lambda_label;    // per example
    std::vector<std::vector<real>> lambda;  // per example per position
    std::vector<std::vector<std::uint8_t>> counted;
    std::vector<int> pairing;
    std::vector<std::uint8_t> union_mask;  // batch*width
};

MixedBatch attention_mix_batch(const Batch& batch, const Matrix& embeddings,
                               const std::vector<RelevanceVector>& relevance,
                               const std::vector<int>& pairing);

// Single Beta(alpha, alpha) scalar per pair, applied to every token and dim.
MixedBatch word_mixup_batch(const Batch& batch, const Matrix& embeddings,
                            const std::vector<int>& pairing, Rng& rng, double alpha);

// Scalar mix of pooled sentence encodings after the full encoder.
MixedBatch mixup_encoding_batch(const Batch& batch, const Matrix& pooled,
                                const std::vector<int>& pairing, Rng& rng, double alpha);

// Adjoint of the embedding-level mix: routes d(loss)/d(mixed) back to the
// two source rows of each pair.
Matrix unmix_embedding_grad(const MixedBatch& mixed, const Matrix& dmixed,
                            int batch, int width);

// Adjoint of the encoding-level mix.
Matrix unmix_encoding_grad(const MixedBatch& mixed, const Matrix& dmixed);

}  // namespace attnmix
