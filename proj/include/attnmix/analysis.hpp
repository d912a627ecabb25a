#pragma once

#include <string>
#include <vector>

#include "attnmix/relevance.hpp"

namespace attnmix {

struct PosReport {
    struct Row {
        std::string tag;
        long count = 0;
        double mean_attention = 0.0;
        double relative_mean = 0.0;  // tag mean / overall mean over tagged tokens
    };
    std::vector<Row> rows;     // tags sorted by name; SPECIAL (BOS) appended last
    double overall_mean = 0.0;
    long total_tokens = 0;     // tagged (non-special) tokens
    bool fallback_tagger_used = false;
    AttentionSelector selector;
};

// Per-token received attention (column sum of attention over unmasked
// queries, averaged over heads for a layer-mean selector) bucketed by POS
// tag across the corpus. BOS is reported separately as SPECIAL.
PosReport pos_attention_report(EncoderModel& model,
                               const std::vector<TaggedSentence>& corpus,
                               const Vocabulary& vocab,
                               const AttentionSelector& selector);

// Lexicon + suffix-rule tagger over the Universal POS tagset; unknown words
// default to NOUN, punctuation to PUNCT.
std::vector<std::string> tag_fallback(const std::vector<std::string>& tokens);

// pos_report.csv: tag,count,mean_attention,relative_mean (RFC 4180, CRLF).
void write_pos_report_csv(const std::string& path, const PosReport& report);

}  // namespace attnmix
