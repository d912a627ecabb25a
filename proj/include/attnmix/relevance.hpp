#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "attnmix/encoder.hpp"

namespace attnmix {

// Chooses the attention source for token relevance: one (layer, head) pair
// or the mean over all heads of one layer.
struct AttentionSelector {
    enum class Mode { SingleHead, LayerMean };
    Mode mode = Mode::LayerMean;
    int layer = 0;
    int head = 0;

    static AttentionSelector single_head(int layer, int head);
    static AttentionSelector layer_mean(int layer);

    void validate(int num_layers, int num_heads) const;
    std::string to_string() const;
    bool operator==(const AttentionSelector&) const = default;
};

// Per-token importance distribution over one sentence; sums to 1 over
// unmasked positions, PAD positions exactly 0.
struct RelevanceVector {
    std::vector<real> values;
    AttentionSelector source;
};

// Column sums over unmasked query rows divided by the unmasked token count.
// aw is the n x n attention of one sentence (padded width allowed; masked
// query rows must be zero, which the encoder guarantees).
RelevanceVector head_relevance(const Matrix& aw, const std::vector<std::uint8_t>& mask);

// Arithmetic mean of head_relevance across heads, same summation order as
// computing them one by one.
RelevanceVector layer_relevance(const std::vector<Matrix>& aws,
                                const std::vector<std::uint8_t>& mask);

// One relevance vector per batch row, dispatched by the selector.
std::vector<RelevanceVector> extract(const ForwardTrace& trace,
                                     const AttentionSelector& selector);

// Debug dump line: {"sentence_id":...,"selector":"...","values":[...]}.
void dump_relevance_jsonl(std::ostream& out, std::size_t sentence_id,
                          const RelevanceVector& rv);

}  // namespace attnmix
