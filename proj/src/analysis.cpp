#include "attnmix/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace attnmix {

namespace {

const std::unordered_map<std::string, std::string>& lexicon() {
    static const std::unordered_map<std::string, std::string> kLexicon = {
        // determiners
        {"the", "DET"}, {"a", "DET"}, {"an", "DET"}, {"this", "DET"}, {"that", "DET"},
        {"these", "DET"}, {"those", "DET"}, {"some", "DET"}, {"any", "DET"}, {"no", "DET"},
        {"every", "DET"}, {"each", "DET"},
        // adpositions
        {"of", "ADP"}, {"in", "ADP"}, {"on", "ADP"}, {"at", "ADP"}, {"by", "ADP"},
        {"with", "ADP"}, {"from", "ADP"}, {"about", "ADP"}, {"into", "ADP"}, {"over", "ADP"},
        {"under", "ADP"}, {"for", "ADP"}, {"between", "ADP"},
        // pronouns
        {"i", "PRON"}, {"you", "PRON"}, {"he", "PRON"}, {"she", "PRON"}, {"it", "PRON"},
        {"we", "PRON"}, {"they", "PRON"}, {"me", "PRON"}, {"him", "PRON"}, {"her", "PRON"},
        {"us", "PRON"}, {"them", "PRON"}, {"my", "PRON"}, {"your", "PRON"}, {"his", "PRON"},
        {"its", "PRON"}, {"our", "PRON"}, {"their", "PRON"}, {"who", "PRON"}, {"what", "PRON"},
        // coordinating conjunctions
        {"and", "CCONJ"}, {"or", "CCONJ"}, {"but", "CCONJ"}, {"nor", "CCONJ"}, {"yet", "CCONJ"},
        // subordinating conjunctions
        {"because", "SCONJ"}, {"although", "SCONJ"}, {"while", "SCONJ"}, {"if", "SCONJ"},
        {"since", "SCONJ"}, {"unless", "SCONJ"},
        // auxiliaries
        {"is", "AUX"}, {"am", "AUX"}, {"are", "AUX"}, {"was", "AUX"}, {"were", "AUX"},
        {"be", "AUX"}, {"been", "AUX"}, {"being", "AUX"}, {"have", "AUX"}, {"has", "AUX"},
        {"had", "AUX"}, {"do", "AUX"}, {"does", "AUX"}, {"did", "AUX"}, {"will", "AUX"},
        {"would", "AUX"}, {"can", "AUX"}, {"could", "AUX"}, {"shall", "AUX"},
        {"should", "AUX"}, {"may", "AUX"}, {"might", "AUX"}, {"must", "AUX"},
        // particles
        {"to", "PART"}, {"not", "PART"},
        // adverbs
        {"very", "ADV"}, {"quite", "ADV"}, {"too", "ADV"}, {"extremely", "ADV"},
        {"really", "ADV"}, {"never", "ADV"}, {"always", "ADV"}, {"often", "ADV"},
        {"also", "ADV"}, {"just", "ADV"}, {"here", "ADV"}, {"there", "ADV"}, {"again", "ADV"},
        // frequent sentiment adjectives
        {"good", "ADJ"}, {"bad", "ADJ"}, {"great", "ADJ"}, {"terrible", "ADJ"},
        {"excellent", "ADJ"}, {"awful", "ADJ"}, {"fantastic", "ADJ"}, {"wonderful", "ADJ"},
        {"horrible", "ADJ"}, {"superb", "ADJ"}, {"poor", "ADJ"}, {"fine", "ADJ"},
        {"nice", "ADJ"}, {"dull", "ADJ"}, {"dreadful", "ADJ"}, {"lousy", "ADJ"},
        {"delightful", "ADJ"}, {"charming", "ADJ"}, {"best", "ADJ"}, {"worst", "ADJ"},
        {"new", "ADJ"}, {"old", "ADJ"}, {"big", "ADJ"}, {"small", "ADJ"}, {"long", "ADJ"},
        // frequent verbs
        {"love", "VERB"}, {"like", "VERB"}, {"hate", "VERB"}, {"enjoy", "VERB"},
        {"watch", "VERB"}, {"see", "VERB"}, {"think", "VERB"}, {"feel", "VERB"},
        {"make", "VERB"}, {"made", "VERB"}, {"go", "VERB"}, {"went", "VERB"},
        {"say", "VERB"}, {"said", "VERB"}, {"know", "VERB"}, {"get", "VERB"},
        // interjections
        {"oh", "INTJ"}, {"wow", "INTJ"}, {"hey", "INTJ"}, {"ouch", "INTJ"},
    };
    return kLexicon;
}

bool all_punct(const std::string& token) {
    for (unsigned char c : token) {
        if (c >= 0x80 || !std::ispunct(c)) return false;
    }
    return !token.empty();
}

bool all_digits(const std::string& token) {
    for (unsigned char c : token) {
        if (c >= 0x80 || !std::isdigit(c)) return false;
    }
    return !token.empty();
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() > suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string tag_one(const std::string& token) {
    if (all_punct(token)) return "PUNCT";
    if (all_digits(token)) return "NUM";
    auto it = lexicon().find(token);
    if (it != lexicon().end()) return it->second;
    if (ends_with(token, "ly")) return "ADV";
    if (ends_with(token, "ing") || ends_with(token, "ed")) return "VERB";
    if (ends_with(token, "ness") || ends_with(token, "ment") || ends_with(token, "tion") ||
        ends_with(token, "ity")) {
        return "NOUN";
    }
    if (ends_with(token, "ous") || ends_with(token, "ful") || ends_with(token, "ive") ||
        ends_with(token, "able") || ends_with(token, "ible")) {
        return "ADJ";
    }
    return "NOUN";
}

}  // namespace

std::vector<std::string> tag_fallback(const std::vector<std::string>& tokens) {
    std::vector<std::string> tags;
    tags.reserve(tokens.size());
    for (const auto& t : tokens) tags.push_back(tag_one(t));
    return tags;
}

PosReport pos_attention_report(EncoderModel& model,
                               const std::vector<TaggedSentence>& corpus,
                               const Vocabulary& vocab,
                               const AttentionSelector& selector) {
    check(!corpus.empty(), "pos_attention_report: empty corpus");
    const EncoderConfig& cfg = model.config();
    selector.validate(cfg.num_layers, cfg.num_heads);

    std::map<std::string, double> tag_sum;
    std::map<std::string, long> tag_count;
    double special_sum = 0.0;
    long special_count = 0;
    double tagged_total = 0.0;
    long tagged_count = 0;

    for (std::size_t s = 0; s < corpus.size(); ++s) {
        const TaggedSentence& sent = corpus[s];
        if (sent.tokens.size() != sent.tags.size()) {
            throw InputError("pos_attention_report: misaligned tags in sentence " +
                             std::to_string(s));
        }
        if (sent.tokens.empty()) continue;
        const int n_tokens =
            std::min(static_cast<int>(sent.tokens.size()), cfg.max_len - 1);

        // Single-sentence batch: BOS + tokens.
        Batch batch;
        batch.size = 1;
        batch.width = 1 + n_tokens;
        batch.ids.assign(batch.width, Vocabulary::kPad);
        batch.mask.assign(batch.width, 1);
        batch.ids[0] = Vocabulary::kBos;
        for (int t = 0; t < n_tokens; ++t) {
            batch.ids[1 + t] = vocab.id(sent.tokens[t]);
        }
        batch.labels_onehot = Matrix(1, cfg.num_classes);
        batch.labels_onehot.at(0, 0) = real(1);
        batch.label_index.push_back(0);
        batch.lengths.push_back(batch.width);
        batch.doc_ids.push_back(s);

        ForwardTrace trace = model.forward(batch, true, false, nullptr);

        // Received attention per position: column sum over queries, averaged
        // over heads for a layer-mean selector.
        std::vector<double> received(batch.width, 0.0);
        const int heads = selector.mode == AttentionSelector::Mode::LayerMean ? cfg.num_heads : 1;
        for (int h = 0; h < heads; ++h) {
            const int head_index =
                selector.mode == AttentionSelector::Mode::LayerMean ? h : selector.head;
            Matrix aw = trace.attention_slice(selector.layer, head_index, 0);
            for (int j = 0; j < batch.width; ++j) {
                double col = 0.0;
                for (int i = 0; i < batch.width; ++i) col += aw.at(i, j);
                received[j] += col;
            }
        }
        for (int j = 0; j < batch.width; ++j) received[j] /= heads;

        special_sum += received[0];
        ++special_count;
        for (int t = 0; t < n_tokens; ++t) {
            const std::string& tag = sent.tags[t];
            tag_sum[tag] += received[1 + t];
            ++tag_count[tag];
            tagged_total += received[1 + t];
            ++tagged_count;
        }
    }

    check(tagged_count > 0, "pos_attention_report: no tagged tokens");
    PosReport report;
    report.selector = selector;
    report.total_tokens = tagged_count;
    report.overall_mean = tagged_total / static_cast<double>(tagged_count);
    for (const auto& [tag, sum] : tag_sum) {
        PosReport::Row row;
        row.tag = tag;
        row.count = tag_count[tag];
        row.mean_attention = sum / static_cast<double>(row.count);
        row.relative_mean = row.mean_attention / report.overall_mean;
        report.rows.push_back(std::move(row));
    }
    if (special_count > 0) {
        PosReport::Row row;
        row.tag = "SPECIAL";
        row.count = special_count;
        row.mean_attention = special_sum / static_cast<double>(special_count);
        row.relative_mean = row.mean_attention / report.overall_mean;
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_pos_report_csv(const std::string& path, const PosReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write csv: " + path);
    out << "tag,count,mean_attention,relative_mean\r\n";
    for (const auto& row : report.rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", row.mean_attention, row.relative_mean);
        out << row.tag << ',' << row.count << ',' << buf << "\r\n";
    }
}

}  // namespace attnmix
