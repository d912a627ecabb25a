#include "attnmix/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace attnmix {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char ch : text) {
        if (ch < 0x80 && std::isspace(ch)) {
            flush();
        } else if (ch < 0x80 && std::ispunct(ch)) {
            flush();
            out.emplace_back(1, static_cast<char>(ch));
        } else {
            cur.push_back(static_cast<char>(ch < 0x80 ? std::tolower(ch) : ch));
        }
    }
    flush();
    return out;
}

Vocabulary::Vocabulary() {
    // Reserved symbols contain punctuation, so the tokenizer can never
    // produce them from corpus text.
    id_to_token_ = {"<pad>", "<unk>", "<bos>"};
    for (int i = 0; i < 3; ++i) token_to_id_[id_to_token_[i]] = i;
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    check(id >= 0 && id < size(), "Vocabulary::token: id out of range");
    return id_to_token_[id];
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

void Vocabulary::add(const std::string& token) {
    if (token_to_id_.count(token)) return;
    token_to_id_[token] = size();
    id_to_token_.push_back(token);
}

std::vector<std::int32_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<std::int32_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::int32_t>& ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (auto i : ids) tokens.push_back(token(i));
    return tokens;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                       int min_freq, int cap) {
    check(!corpus.empty(), "build_vocab: empty corpus");
    std::map<std::string, long> freq;
    for (const auto& sent : corpus)
        for (const auto& tok : sent) ++freq[tok];

    std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    int kept = 0;
    for (const auto& [tok, count] : entries) {
        if (count < min_freq) break;
        if (kept >= cap) break;
        vocab.add(tok);
        ++kept;
    }
    return vocab;
}

DatasetFormat parse_format(const std::string& name) {
    if (name == "tsv") return DatasetFormat::Tsv;
    if (name == "jsonl") return DatasetFormat::Jsonl;
    throw InputError("unknown dataset format '" + name + "' (expected tsv or jsonl)");
}

namespace {

int parse_label(const std::string& s, const std::string& path, std::size_t line_no) {
    if (s.empty()) throw InputError(path + ":" + std::to_string(line_no) + ": empty label");
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            throw InputError(path + ":" + std::to_string(line_no) + ": unknown label string '" + s + "'");
        }
    }
    return std::stoi(s);
}

std::vector<RawExample> load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset file: " + path);
    std::vector<RawExample> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw InputError(path + ":" + std::to_string(line_no) + ": missing tab separator");
        }
        RawExample ex;
        ex.text = line.substr(0, tab);
        ex.label = parse_label(line.substr(tab + 1), path, line_no);
        ex.line_no = line_no;
        rows.push_back(std::move(ex));
    }
    return rows;
}

std::vector<RawExample> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset file: " + path);
    std::vector<RawExample> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        if (!j.contains("text") || !j["text"].is_string()) {
            throw InputError(path + ":" + std::to_string(line_no) + ": missing string field 'text'");
        }
        RawExample ex;
        ex.text = j["text"].get<std::string>();
        if (!j.contains("label")) {
            throw InputError(path + ":" + std::to_string(line_no) + ": missing field 'label'");
        }
        if (j["label"].is_number_integer()) {
            ex.label = j["label"].get<int>();
            if (ex.label < 0) {
                throw InputError(path + ":" + std::to_string(line_no) + ": negative label");
            }
        } else {
            throw InputError(path + ":" + std::to_string(line_no) + ": unknown label string '" +
                             j["label"].dump() + "'");
        }
        if (j.contains("pos")) {
            if (!j["pos"].is_array()) {
                throw InputError(path + ":" + std::to_string(line_no) + ": 'pos' must be an array");
            }
            for (const auto& tag : j["pos"]) ex.pos_tags.push_back(tag.get<std::string>());
        }
        ex.line_no = line_no;
        rows.push_back(std::move(ex));
    }
    return rows;
}

}  // namespace

std::vector<RawExample> load_dataset(const std::string& path, DatasetFormat format) {
    return format == DatasetFormat::Tsv ? load_tsv(path) : load_jsonl(path);
}

RawSplits load_splits(const std::string& train_path, const std::string& val_path,
                      const std::string& test_path, DatasetFormat format,
                      std::uint64_t seed) {
    RawSplits splits;
    std::vector<RawExample> train = load_dataset(train_path, format);
    if (train.empty()) throw InputError("train split is empty: " + train_path);

    if (!val_path.empty()) {
        splits.train = std::move(train);
        splits.val = load_dataset(val_path, format);
    } else {
        // 10% validation carve-out by seeded shuffle; remaining train keeps
        // its source order.
        const std::size_t n = train.size();
        const std::size_t n_val = n / 10;
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        Rng rng = Rng::derive(seed, /*tag=*/0x5117);
        rng.shuffle(idx);
        std::vector<bool> to_val(n, false);
        for (std::size_t i = 0; i < n_val; ++i) to_val[idx[i]] = true;
        for (std::size_t i = 0; i < n; ++i) {
            (to_val[i] ? splits.val : splits.train).push_back(std::move(train[i]));
        }
    }
    if (!test_path.empty()) splits.test = load_dataset(test_path, format);
    return splits;
}

DataSplits encode_splits(const RawSplits& raw, const Vocabulary& vocab) {
    DataSplits out;
    int max_label = 0;
    std::size_t doc_id = 0;
    auto encode_all = [&](const std::vector<RawExample>& src, std::vector<Example>& dst) {
        dst.reserve(src.size());
        for (const auto& r : src) {
            Example ex;
            auto tokens = tokenize(r.text);
            ex.ids = vocab.encode(tokens);
            ex.label = r.label;
            if (!r.pos_tags.empty()) {
                if (r.pos_tags.size() != tokens.size()) {
                    throw InputError("pos tags misaligned with tokens at source line " +
                                     std::to_string(r.line_no));
                }
                ex.pos_tags = r.pos_tags;
            }
            ex.doc_id = doc_id++;
            max_label = std::max(max_label, r.label);
            dst.push_back(std::move(ex));
        }
    };
    encode_all(raw.train, out.train);
    encode_all(raw.val, out.val);
    encode_all(raw.test, out.test);
    out.num_classes = max_label + 1;
    return out;
}

std::vector<Batch> make_batches(const std::vector<Example>& examples, int batch_size,
                                int max_len, int num_classes, Rng* rng) {
    check(!examples.empty(), "make_batches: empty example list");
    check(batch_size >= 1, "make_batches: batch_size must be >= 1");
    check(max_len >= 2, "make_batches: max_len must allow BOS plus one token");

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (rng) rng->shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const int bsize = static_cast<int>(std::min<std::size_t>(batch_size, order.size() - start));
        int longest = 0;
        for (int b = 0; b < bsize; ++b) {
            longest = std::max(longest, static_cast<int>(examples[order[start + b]].ids.size()));
        }
        Batch batch;
        batch.size = bsize;
        batch.width = std::min(1 + longest, max_len);
        batch.ids.assign(static_cast<std::size_t>(bsize) * batch.width, Vocabulary::kPad);
        batch.mask.assign(static_cast<std::size_t>(bsize) * batch.width, 0);
        batch.labels_onehot = Matrix(bsize, num_classes);
        for (int b = 0; b < bsize; ++b) {
            const Example& ex = examples[order[start + b]];
            check(ex.label >= 0 && ex.label < num_classes, "make_batches: label out of range");
            const int n_tokens = std::min(static_cast<int>(ex.ids.size()), batch.width - 1);
            std::size_t base = static_cast<std::size_t>(b) * batch.width;
            batch.ids[base] = Vocabulary::kBos;
            batch.mask[base] = 1;
            for (int t = 0; t < n_tokens; ++t) {
                batch.ids[base + 1 + t] = ex.ids[t];
                batch.mask[base + 1 + t] = 1;
            }
            batch.labels_onehot.at(b, ex.label) = real(1);
            batch.label_index.push_back(ex.label);
            batch.lengths.push_back(1 + n_tokens);
            batch.doc_ids.push_back(ex.doc_id);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::vector<TaggedSentence> load_conll_pos(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open tagged corpus: " + path);
    std::vector<TaggedSentence> sentences;
    TaggedSentence cur;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (!cur.tokens.empty()) {
                sentences.push_back(std::move(cur));
                cur = TaggedSentence{};
            }
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw InputError(path + ":" + std::to_string(line_no) + ": expected token<TAB>UPOS");
        }
        cur.tokens.push_back(line.substr(0, tab));
        cur.tags.push_back(line.substr(tab + 1));
    }
    if (!cur.tokens.empty()) sentences.push_back(std::move(cur));
    return sentences;
}

RawSplits make_toy_corpus(const ToySpec& spec) {
    static const std::vector<std::string> kPositive = {
        "great", "excellent", "wonderful", "superb", "delightful", "charming"};
    static const std::vector<std::string> kNegative = {
        "terrible", "awful", "dreadful", "boring", "disappointing", "lousy"};
    static const std::vector<std::string> kFiller = {
        "the", "movie", "film", "was", "with", "plot", "and", "a",
        "story", "acting", "it", "cast", "scene", "script", "of", "this"};

    Rng rng = Rng::derive(spec.seed, /*tag=*/0x70c0);
    auto make_split = [&](int count, bool noisy, std::vector<RawExample>& out) {
        for (int i = 0; i < count; ++i) {
            const int cls = static_cast<int>(rng.next_below(2));
            const auto& keywords = cls == 1 ? kPositive : kNegative;
            const int n_filler = 4 + static_cast<int>(rng.next_below(5));
            std::vector<std::string> words;
            for (int w = 0; w < n_filler; ++w) {
                words.push_back(kFiller[rng.next_below(kFiller.size())]);
            }
            const int n_kw = 1 + static_cast<int>(rng.next_below(2));
            for (int k = 0; k < n_kw; ++k) {
                const auto& kw = keywords[rng.next_below(keywords.size())];
                words.insert(words.begin() + rng.next_below(words.size() + 1), kw);
            }
            RawExample ex;
            for (std::size_t w = 0; w < words.size(); ++w) {
                if (w) ex.text += ' ';
                ex.text += words[w];
            }
            ex.label = cls;
            if (noisy && spec.label_noise > 0.0 && rng.uniform01() < spec.label_noise) {
                ex.label = 1 - ex.label;
            }
            ex.line_no = out.size() + 1;
            out.push_back(std::move(ex));
        }
    };
    RawSplits splits;
    make_split(spec.n_train, /*noisy=*/true, splits.train);
    make_split(spec.n_val, /*noisy=*/false, splits.val);
    make_split(spec.n_test, /*noisy=*/false, splits.test);
    return splits;
}

void write_tsv(const std::string& path, const std::vector<RawExample>& rows) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path);
    for (const auto& r : rows) out << r.text << '\t' << r.label << '\n';
}

}  // namespace attnmix
