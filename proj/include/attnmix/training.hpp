#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnmix/mixing.hpp"

namespace attnmix {

// Independent rng streams per purpose, so e.g. a pairing draw can never
// shift the dropout mask stream of another strategy.
namespace rng_tags {
inline constexpr std::uint64_t kInit = 0x11;
inline constexpr std::uint64_t kData = 0x22;
inline constexpr std::uint64_t kMix = 0x33;
inline constexpr std::uint64_t kDropout = 0x44;
}  // namespace rng_tags

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 3e-4;
    enum class Opt { Sgd, Adam };
    Opt optimizer = Opt::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    MixStrategy strategy;
    int eval_every = 1;
    // Test hook: replaces the pairing draw with the identity permutation
    // without consuming the mixing rng.
    bool force_identity_pairing = false;

    void validate() const;
};

struct RunRecord {
    std::vector<double> train_loss;      // mean loss per epoch
    std::vector<double> step_losses;     // every gradient step, in order
    std::vector<int> eval_epochs;        // epochs at which val was evaluated
    std::vector<double> val_accuracy;    // aligned with eval_epochs
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
    double test_accuracy = 0.0;          // best-val checkpoint
    long train_step_passes = 0;
    long collect_passes = 0;
    long eval_passes = 0;
    long steps = 0;
    bool diverged = false;
    int diverged_epoch = -1;
    std::vector<double> step_seconds;    // wall clock; kept out of the canonical JSON

    double median_step_seconds() const;

    // Canonical serialization is timing-free so reruns with the same seed
    // produce byte-identical records.
    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

struct TrainResult {
    RunRecord record;
    std::vector<real> best_params;
};

// Full training loop: per-batch strategy dispatch, per-epoch validation,
// best-on-validation selection, final test evaluation with the best
// parameters (which are left installed in the model).
TrainResult train(EncoderModel& model, const DataSplits& data, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

// Argmax accuracy with dropout disabled and no mixing.
double evaluate(EncoderModel& model, const std::vector<Example>& split,
                int num_classes, int batch_size, int max_len);

struct OverheadRow {
    std::string strategy;
    double median_step_seconds = 0.0;
    double median_eval_seconds = 0.0;
    long train_passes = 0;
    long collect_passes = 0;
};

struct OverheadTable {
    std::vector<OverheadRow> rows;
    double attention_over_word_ratio = 0.0;  // median step-time ratio
};

// Median step wall-clock per strategy over `steps` measured steps (after a
// short warmup), on cloned models so strategies start identically.
OverheadTable measure_overhead(const EncoderModel& model, const DataSplits& data,
                               const std::vector<MixStrategy>& strategies,
                               const TrainConfig& base, int steps = 100);

}  // namespace attnmix
