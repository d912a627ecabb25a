#include "attnmix/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace attnmix {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InputError("manifest key '" + key + "': not an integer: '" + value + "'");
    }
}

}  // namespace

const std::set<std::string>& Manifest::known_keys() {
    static const std::set<std::string> kKeys = {
        "data.train", "data.val", "data.test", "data.format", "data.pos",
        "vocab.min_freq", "vocab.cap", "vocab.file",
        "model.layers", "model.heads", "model.dim", "model.ff_dim",
        "model.dropout", "model.max_len", "model.pooling",
        "train.epochs", "train.batch", "train.lr", "train.optimizer",
        "train.beta1", "train.beta2", "train.eps", "train.eval_every",
        "strategy", "selector.layer", "selector.head", "alpha",
        "seed", "out", "checkpoint",
        "sweep.repeats", "sweep.strategies", "sweep.layer_means",
        "sweep.single_heads", "sweep.top_k",
        "augment.count",
    };
    return kKeys;
}

void Manifest::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw InputError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (!known_keys().count(key)) {
            throw InputError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        kv_[key] = value;
    }
}

void Manifest::set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw InputError("unknown manifest key '" + key + "'");
    kv_[key] = value;
}

bool Manifest::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string Manifest::get(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

int Manifest::get_int(const std::string& key, int fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : to_int(key, it->second);
}

double Manifest::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw InputError("manifest key '" + key + "': not a number: '" + it->second + "'");
    }
}

std::uint64_t Manifest::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw InputError("manifest key '" + key + "': not an unsigned integer: '" + it->second + "'");
    }
}

std::string Manifest::require(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end() || it->second.empty()) {
        throw InputError("manifest is missing required key '" + key + "'");
    }
    return it->second;
}

EncoderConfig Manifest::encoder_config() const {
    EncoderConfig cfg;
    cfg.num_layers = get_int("model.layers", 4);
    cfg.num_heads = get_int("model.heads", 4);
    cfg.embed_dim = get_int("model.dim", 128);
    cfg.ff_dim = get_int("model.ff_dim", 256);
    cfg.dropout = static_cast<real>(get_double("model.dropout", 0.1));
    cfg.max_len = get_int("model.max_len", 128);
    const std::string pool = get("model.pooling", "bos");
    if (pool == "bos") {
        cfg.pooling = EncoderConfig::Pooling::Bos;
    } else if (pool == "mean") {
        cfg.pooling = EncoderConfig::Pooling::Mean;
    } else {
        throw InputError("model.pooling must be bos or mean, got '" + pool + "'");
    }
    return cfg;
}

TrainConfig Manifest::train_config() const {
    TrainConfig cfg;
    cfg.epochs = get_int("train.epochs", 30);
    cfg.batch_size = get_int("train.batch", 32);
    cfg.learning_rate = get_double("train.lr", 3e-4);
    const std::string opt = get("train.optimizer", "adam");
    if (opt == "adam") {
        cfg.optimizer = TrainConfig::Opt::Adam;
    } else if (opt == "sgd") {
        cfg.optimizer = TrainConfig::Opt::Sgd;
    } else {
        throw InputError("train.optimizer must be adam or sgd, got '" + opt + "'");
    }
    cfg.beta1 = get_double("train.beta1", 0.9);
    cfg.beta2 = get_double("train.beta2", 0.999);
    cfg.adam_eps = get_double("train.eps", 1e-8);
    cfg.eval_every = get_int("train.eval_every", 1);
    cfg.seed = get_u64("seed", 1);
    cfg.strategy = strategy();
    return cfg;
}

AttentionSelector Manifest::selector() const {
    const int layer = get_int("selector.layer", 0);
    const std::string head = get("selector.head", "all");
    if (head == "all") return AttentionSelector::layer_mean(layer);
    return AttentionSelector::single_head(layer, to_int("selector.head", head));
}

MixStrategy Manifest::strategy() const {
    const std::string name = get("strategy", "none");
    if (name == "none") return MixStrategy::none();
    if (name == "attention_mix") return MixStrategy::attention_mix(selector());
    const double alpha = get_double("alpha", 0.2);
    if (name == "word_mixup") return MixStrategy::word_mixup(alpha);
    if (name == "mixup_encoding") return MixStrategy::mixup_encoding(alpha);
    throw InputError("unknown strategy '" + name +
                     "' (expected none|attention_mix|word_mixup|mixup_encoding)");
}

void Manifest::validate_paths(bool need_train_data) const {
    auto must_exist = [](const std::string& key, const std::string& path) {
        if (!std::filesystem::exists(path)) {
            throw InputError(key + ": path does not exist: " + path);
        }
    };
    if (need_train_data) must_exist("data.train", require("data.train"));
    for (const char* key : {"data.train", "data.val", "data.test", "data.pos",
                            "checkpoint", "vocab.file"}) {
        if (has(key) && !get(key).empty()) must_exist(key, get(key));
    }
}

std::vector<MixStrategy> sweep_strategies(const Manifest& manifest, int num_layers,
                                          int num_heads) {
    std::vector<MixStrategy> out;
    const std::string list = manifest.get(
        "sweep.strategies", "none,word_mixup,mixup_encoding,attention_mix");
    const double alpha = manifest.get_double("alpha", 0.2);
    bool want_attention = false;
    for (const std::string& name : split_list(list)) {
        if (name == "none") {
            out.push_back(MixStrategy::none());
        } else if (name == "word_mixup") {
            out.push_back(MixStrategy::word_mixup(alpha));
        } else if (name == "mixup_encoding") {
            out.push_back(MixStrategy::mixup_encoding(alpha));
        } else if (name == "attention_mix") {
            want_attention = true;
        } else {
            throw InputError("sweep.strategies: unknown strategy '" + name + "'");
        }
    }
    if (want_attention) {
        const std::string layer_means = manifest.get("sweep.layer_means", "all");
        if (layer_means == "all") {
            for (int l = 0; l < num_layers; ++l) {
                out.push_back(MixStrategy::attention_mix(AttentionSelector::layer_mean(l)));
            }
        } else if (layer_means != "none") {
            for (const std::string& ls : split_list(layer_means)) {
                const int l = to_int("sweep.layer_means", ls);
                check(l >= 0 && l < num_layers, "sweep.layer_means: layer out of range");
                out.push_back(MixStrategy::attention_mix(AttentionSelector::layer_mean(l)));
            }
        }
        // Entries "L:all" expand to every head of layer L; "L:H" is one head.
        for (const std::string& spec : split_list(manifest.get("sweep.single_heads", ""))) {
            auto colon = spec.find(':');
            if (colon == std::string::npos) {
                throw InputError("sweep.single_heads: expected layer:head, got '" + spec + "'");
            }
            const int l = to_int("sweep.single_heads", spec.substr(0, colon));
            check(l >= 0 && l < num_layers, "sweep.single_heads: layer out of range");
            const std::string hs = spec.substr(colon + 1);
            if (hs == "all") {
                for (int h = 0; h < num_heads; ++h) {
                    out.push_back(MixStrategy::attention_mix(AttentionSelector::single_head(l, h)));
                }
            } else {
                const int h = to_int("sweep.single_heads", hs);
                check(h >= 0 && h < num_heads, "sweep.single_heads: head out of range");
                out.push_back(MixStrategy::attention_mix(AttentionSelector::single_head(l, h)));
            }
        }
    }
    return out;
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write vocab file: " + path);
    for (int i = Vocabulary::kBos + 1; i < vocab.size(); ++i) {
        out << vocab.token(i) << '\n';
    }
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open vocab file: " + path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) vocab.add(line);
    }
    return vocab;
}

}  // namespace attnmix
