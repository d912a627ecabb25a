#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "attnmix/matrix.hpp"
#include "attnmix/rng.hpp"

namespace attnmix {

// Lowercases, splits punctuation into single-character tokens, and splits on
// whitespace. BOS is prepended at batch-encoding time, not here.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;

    Vocabulary();

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int id(const std::string& token) const;  // kUnk for out-of-vocabulary
    const std::string& token(int id) const;
    bool contains(const std::string& token) const;

    std::vector<std::int32_t> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<std::int32_t>& ids) const;

    void add(const std::string& token);  // appends a non-reserved entry

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Tokens with frequency >= min_freq, ordered most frequent first (ties
// lexicographic), truncated to cap non-reserved entries.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                       int min_freq, int cap);

struct RawExample {
    std::string text;
    int label = 0;
    std::vector<std::string> pos_tags;  // empty unless source provides them
    std::size_t line_no = 0;
};

struct Example {
    std::vector<std::int32_t> ids;       // token ids, no BOS
    int label = 0;
    std::vector<std::string> pos_tags;   // aligned 1:1 with ids when present
    std::size_t doc_id = 0;
};

enum class DatasetFormat { Tsv, Jsonl };

DatasetFormat parse_format(const std::string& name);

// One file of (text, label[, pos]) records. Malformed rows and non-integer
// labels raise InputError with the line number.
std::vector<RawExample> load_dataset(const std::string& path, DatasetFormat format);

struct RawSplits {
    std::vector<RawExample> train, val, test;
};

// Loads train/test (and val when provided). Without a val file, 10% of train
// is carved off by a seeded shuffle.
RawSplits load_splits(const std::string& train_path, const std::string& val_path,
                      const std::string& test_path, DatasetFormat format,
                      std::uint64_t seed);

struct DataSplits {
    std::vector<Example> train, val, test;
    int num_classes = 0;
};

DataSplits encode_splits(const RawSplits& raw, const Vocabulary& vocab);

struct Batch {
    int size = 0;                       // examples in this batch
    int width = 0;                      // padded token count incl. BOS
    std::vector<std::int32_t> ids;      // size*width, PAD-filled
    std::vector<std::uint8_t> mask;     // 1 = real token (incl. BOS), 0 = PAD
    Matrix labels_onehot;               // size x num_classes
    std::vector<int> label_index;
    std::vector<int> lengths;           // real token count incl. BOS
    std::vector<std::size_t> doc_ids;

    std::int32_t id_at(int b, int t) const { return ids[static_cast<std::size_t>(b) * width + t]; }
    bool is_real(int b, int t) const { return mask[static_cast<std::size_t>(b) * width + t] != 0; }
};

// Partitions examples into batches. With an rng the example order is
// reshuffled (one epoch); without, source order is kept. Width per batch is
// min(BOS + longest sentence in the batch, max_len).
std::vector<Batch> make_batches(const std::vector<Example>& examples, int batch_size,
                                int max_len, int num_classes, Rng* rng);

struct TaggedSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
};

// CoNLL-like file: one "token<TAB>UPOS" per line, blank line between sentences.
std::vector<TaggedSentence> load_conll_pos(const std::string& path);

// Synthetic sentiment corpus: two keyword-determined classes with filler
// words; optional label noise applied to the train split only.
struct ToySpec {
    int n_train = 200;
    int n_val = 50;
    int n_test = 50;
    double label_noise = 0.0;
    std::uint64_t seed = 1;
};

RawSplits make_toy_corpus(const ToySpec& spec);

void write_tsv(const std::string& path, const std::vector<RawExample>& rows);

}  // namespace attnmix
