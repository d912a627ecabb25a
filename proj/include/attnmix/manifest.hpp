#pragma once

#include <map>
#include <set>
#include <string>

#include "attnmix/sweep.hpp"

namespace attnmix {

// Flat key=value run configuration. Precedence: explicit set() (CLI flags)
// over file values over defaults. Unknown keys are rejected.
class Manifest {
public:
    static const std::set<std::string>& known_keys();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback = "") const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::string require(const std::string& key) const;

    // Typed views. vocab_size/num_classes are filled in by the caller after
    // data loading.
    EncoderConfig encoder_config() const;
    TrainConfig train_config() const;
    MixStrategy strategy() const;
    AttentionSelector selector() const;

    // Checks that every referenced input path exists.
    void validate_paths(bool need_train_data) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

// Expands sweep.* manifest keys into the strategy grid.
std::vector<MixStrategy> sweep_strategies(const Manifest& manifest, int num_layers,
                                          int num_heads);

void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

}  // namespace attnmix
