#include "attnmix/relevance.hpp"

#include <json.hpp>

namespace attnmix {

AttentionSelector AttentionSelector::single_head(int layer, int head) {
    AttentionSelector s;
    s.mode = Mode::SingleHead;
    s.layer = layer;
    s.head = head;
    return s;
}

AttentionSelector AttentionSelector::layer_mean(int layer) {
    AttentionSelector s;
    s.mode = Mode::LayerMean;
    s.layer = layer;
    return s;
}

void AttentionSelector::validate(int num_layers, int num_heads) const {
    check(layer >= 0 && layer < num_layers, "AttentionSelector: layer out of range");
    if (mode == Mode::SingleHead) {
        check(head >= 0 && head < num_heads, "AttentionSelector: head out of range");
    }
}

std::string AttentionSelector::to_string() const {
    if (mode == Mode::LayerMean) return "layer" + std::to_string(layer) + "/all";
    return "layer" + std::to_string(layer) + "/head" + std::to_string(head);
}

RelevanceVector head_relevance(const Matrix& aw, const std::vector<std::uint8_t>& mask) {
    const int width = aw.cols();
    check(aw.rows() == width, "head_relevance: attention must be square");
    check(static_cast<int>(mask.size()) == width, "head_relevance: mask length mismatch");
    int n = 0;
    for (auto m : mask) n += m;
    check(n > 0, "head_relevance: no unmasked tokens");

    RelevanceVector rv;
    rv.values.assign(width, real(0));
    for (int j = 0; j < width; ++j) {
        if (!mask[j]) continue;
        double col = 0.0;
        for (int i = 0; i < width; ++i) {
            if (!mask[i]) continue;
            col += aw.at(i, j);
        }
        rv.values[j] = static_cast<real>(col / n);
    }
    return rv;
}

RelevanceVector layer_relevance(const std::vector<Matrix>& aws,
                                const std::vector<std::uint8_t>& mask) {
    check(!aws.empty(), "layer_relevance: empty head list");
    const int width = static_cast<int>(mask.size());
    std::vector<double> acc(width, 0.0);
    for (const Matrix& aw : aws) {
        RelevanceVector head = head_relevance(aw, mask);
        for (int j = 0; j < width; ++j) acc[j] += head.values[j];
    }
    RelevanceVector rv;
    rv.values.assign(width, real(0));
    const double inv = 1.0 / static_cast<double>(aws.size());
    for (int j = 0; j < width; ++j) rv.values[j] = static_cast<real>(acc[j] * inv);
    return rv;
}

std::vector<RelevanceVector> extract(const ForwardTrace& trace,
                                     const AttentionSelector& selector) {
    check(trace.has_attention(), "extract: trace carries no attention stack");
    const int num_layers = static_cast<int>(trace.layers.size());
    check(selector.layer >= 0 && selector.layer < num_layers,
          "extract: selector layer out of range");
    const int num_heads = static_cast<int>(trace.layers[selector.layer].attn.size());
    selector.validate(num_layers, num_heads);
    for (int b = 0; b < trace.batch; ++b) {
        bool any = false;
        for (int t = 0; t < trace.width && !any; ++t) any = trace.mask[b * trace.width + t];
        check(any, "extract: batch row with no unmasked tokens");
    }

    std::vector<RelevanceVector> out(trace.batch);
#pragma omp parallel for schedule(static) if (trace.batch > 1)
    for (int b = 0; b < trace.batch; ++b) {
        std::vector<std::uint8_t> mask(trace.mask.begin() + b * trace.width,
                                       trace.mask.begin() + (b + 1) * trace.width);
        if (selector.mode == AttentionSelector::Mode::SingleHead) {
            out[b] = head_relevance(trace.attention_slice(selector.layer, selector.head, b), mask);
        } else {
            std::vector<Matrix> heads;
            heads.reserve(num_heads);
            for (int h = 0; h < num_heads; ++h) {
                heads.push_back(trace.attention_slice(selector.layer, h, b));
            }
            out[b] = layer_relevance(heads, mask);
        }
        out[b].source = selector;
    }
    return out;
}

void dump_relevance_jsonl(std::ostream& out, std::size_t sentence_id,
                          const RelevanceVector& rv) {
    nlohmann::json j;
    j["sentence_id"] = sentence_id;
    j["selector"] = rv.source.to_string();
    j["values"] = rv.values;
    out << j.dump() << '\n';
}

}  // namespace attnmix
