// Command-line driver: train / sweep / augment / analyze / eval.
// Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnmix/analysis.hpp"
#include "attnmix/manifest.hpp"

namespace {

using namespace attnmix;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct LoadedData {
    DataSplits splits;
    Vocabulary vocab;
};

LoadedData load_data(const Manifest& manifest) {
    const DatasetFormat format = parse_format(manifest.get("data.format", "tsv"));
    RawSplits raw = load_splits(manifest.require("data.train"), manifest.get("data.val"),
                                manifest.require("data.test"), format,
                                manifest.get_u64("seed", 1));
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(raw.train.size());
    for (const RawExample& ex : raw.train) corpus.push_back(tokenize(ex.text));
    LoadedData data;
    data.vocab = build_vocab(corpus, manifest.get_int("vocab.min_freq", 1),
                             manifest.get_int("vocab.cap", 50000));
    data.splits = encode_splits(raw, data.vocab);
    return data;
}

EncoderModel build_model(const Manifest& manifest, const LoadedData& data) {
    EncoderConfig cfg = manifest.encoder_config();
    cfg.vocab_size = data.vocab.size();
    cfg.num_classes = data.splits.num_classes;
    Rng init_rng = Rng::derive(manifest.get_u64("seed", 1), rng_tags::kInit);
    return EncoderModel(cfg, init_rng);
}

std::string out_dir(const Manifest& manifest) {
    const std::string dir = manifest.get("out", "out");
    std::filesystem::create_directories(dir);
    return dir;
}

int cmd_train(const Manifest& manifest) {
    LoadedData data = load_data(manifest);
    EncoderModel model = build_model(manifest, data);
    TrainConfig cfg = manifest.train_config();

    TrainResult result = train(model, data.splits, cfg, &std::cout);

    const std::string dir = out_dir(manifest);
    {
        std::ofstream rec(dir + "/run_record.json", std::ios::binary);
        rec << result.record.to_json().dump(2) << '\n';
    }
    {
        nlohmann::json timing;
        timing["median_step_seconds"] = result.record.median_step_seconds();
        timing["steps"] = result.record.steps;
        std::ofstream tf(dir + "/timing.json", std::ios::binary);
        tf << timing.dump(2) << '\n';
    }
    model.save_checkpoint(dir + "/checkpoint.bin");
    save_vocab(dir + "/vocab.txt", data.vocab);
    if (result.record.diverged) {
        std::cerr << "training diverged at epoch " << result.record.diverged_epoch << "\n";
        return kExitRuntime;
    }
    std::cout << "test_acc=" << result.record.test_accuracy << " best_epoch="
              << result.record.best_epoch << "\n";
    return kExitOk;
}

int cmd_sweep(const Manifest& manifest, bool resume, int top_k) {
    LoadedData data = load_data(manifest);

    SweepPlan plan;
    plan.encoder = manifest.encoder_config();
    plan.encoder.vocab_size = data.vocab.size();
    plan.encoder.num_classes = data.splits.num_classes;
    plan.base = manifest.train_config();
    plan.repeats = manifest.get_int("sweep.repeats", 3);
    plan.base_seed = manifest.get_u64("seed", 1);
    plan.strategies = sweep_strategies(manifest, plan.encoder.num_layers,
                                       plan.encoder.num_heads);

    const std::string dir = out_dir(manifest);
    const std::string cell_dir = dir + "/cells";
    if (!resume && std::filesystem::exists(cell_dir)) {
        std::filesystem::remove_all(cell_dir);
    }
    plan.record_dir = cell_dir;

    SweepResult result = run_sweep(plan, data.splits);

    const int k = top_k > 0 ? top_k : manifest.get_int("sweep.top_k", 0);
    write_comparison_csv(dir + "/comparison.csv", rank_cells(result, k));
    write_series_csv(dir + "/layer_series.csv", dir + "/head_series.csv", result);
    {
        nlohmann::json meta;
        meta["repeats"] = plan.repeats;
        meta["base_seed"] = plan.base_seed;
        meta["std"] = "population";
        meta["cells"] = plan.strategies.size();
        std::ofstream mf(dir + "/sweep_meta.json", std::ios::binary);
        mf << meta.dump(2) << '\n';
    }

    int failures = 0;
    for (const CellResult& cell : result.cells) {
        failures += static_cast<int>(cell.failures.size());
        std::cout << cell.approach();
        if (cell.strategy.kind == MixStrategy::Kind::AttentionMix) {
            std::cout << " " << cell.strategy.selector.to_string();
        }
        std::cout << " mean=" << cell.mean << " std=" << cell.stddev << "\n";
    }
    if (failures > 0) {
        std::cerr << failures << " cell run(s) failed\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_augment(const Manifest& manifest, int count) {
    LoadedData data = load_data(manifest);
    EncoderModel model = build_model(manifest, data);
    if (manifest.has("checkpoint")) {
        model = EncoderModel::load_checkpoint(manifest.require("checkpoint"));
    }
    const AttentionSelector sel = manifest.selector();
    sel.validate(model.config().num_layers, model.config().num_heads);

    TrainConfig cfg = manifest.train_config();
    Rng data_rng = Rng::derive(cfg.seed, rng_tags::kData);
    Rng mix_rng = Rng::derive(cfg.seed, rng_tags::kMix);

    std::vector<Batch> batches = make_batches(data.splits.train, cfg.batch_size,
                                              model.config().max_len,
                                              data.splits.num_classes, &data_rng);
    int emitted = 0;
    for (const Batch& batch : batches) {
        if (emitted >= count) break;
        ForwardTrace trace = model.forward(batch, true, false, nullptr);
        std::vector<RelevanceVector> relevance = extract(trace, sel);
        std::vector<int> pairing = pair_shuffle(batch.size, mix_rng);
        MixedBatch mixed = attention_mix_batch(batch, trace.input, relevance, pairing);
        for (int b = 0; b < batch.size && emitted < count; ++b, ++emitted) {
            const int j = pairing[b];
            nlohmann::json row;
            row["lambda_label"] = mixed.lambda_label[b];
            row["lambda_vector"] = mixed.lambda[b];
            nlohmann::json t1 = nlohmann::json::array(), t2 = nlohmann::json::array();
            for (int t = 0; t < batch.width; ++t) {
                if (batch.is_real(b, t)) t1.push_back(data.vocab.token(batch.id_at(b, t)));
                if (batch.is_real(j, t)) t2.push_back(data.vocab.token(batch.id_at(j, t)));
            }
            row["tokens1"] = t1;
            row["tokens2"] = t2;
            std::vector<double> soft(mixed.soft_labels.cols());
            for (int c = 0; c < mixed.soft_labels.cols(); ++c) soft[c] = mixed.soft_labels.at(b, c);
            row["soft_label"] = soft;
            std::cout << row.dump() << "\n";
        }
    }
    return kExitOk;
}

int cmd_analyze(const Manifest& manifest, bool fallback_tagger) {
    EncoderModel model = EncoderModel::load_checkpoint(manifest.require("checkpoint"));
    Vocabulary vocab = load_vocab(manifest.require("vocab.file"));

    std::vector<TaggedSentence> corpus;
    bool used_fallback = false;
    if (manifest.has("data.pos") && !fallback_tagger) {
        corpus = load_conll_pos(manifest.require("data.pos"));
    } else {
        if (!fallback_tagger) {
            throw InputError("analyze needs data.pos or --fallback-tagger");
        }
        used_fallback = true;
        const DatasetFormat format = parse_format(manifest.get("data.format", "tsv"));
        for (const RawExample& ex : load_dataset(manifest.require("data.train"), format)) {
            TaggedSentence sent;
            sent.tokens = tokenize(ex.text);
            if (sent.tokens.empty()) continue;
            sent.tags = tag_fallback(sent.tokens);
            corpus.push_back(std::move(sent));
        }
    }

    const AttentionSelector sel = manifest.selector();
    PosReport report = pos_attention_report(model, corpus, vocab, sel);
    report.fallback_tagger_used = used_fallback;

    const std::string dir = out_dir(manifest);
    write_pos_report_csv(dir + "/pos_report.csv", report);
    {
        nlohmann::json meta;
        meta["selector"] = sel.to_string();
        meta["tagger"] = used_fallback ? "fallback" : "gold";
        meta["sentences"] = corpus.size();
        meta["tagged_tokens"] = report.total_tokens;
        std::ofstream mf(dir + "/pos_report.meta.json", std::ios::binary);
        mf << meta.dump(2) << '\n';
    }
    for (const auto& row : report.rows) {
        std::cout << row.tag << " count=" << row.count << " relative_mean="
                  << row.relative_mean << "\n";
    }
    return kExitOk;
}

int cmd_eval(const Manifest& manifest, const std::string& split) {
    EncoderModel model = EncoderModel::load_checkpoint(manifest.require("checkpoint"));
    Vocabulary vocab = load_vocab(manifest.require("vocab.file"));

    const DatasetFormat format = parse_format(manifest.get("data.format", "tsv"));
    RawSplits raw = load_splits(manifest.require("data.train"), manifest.get("data.val"),
                                manifest.require("data.test"), format,
                                manifest.get_u64("seed", 1));
    DataSplits splits = encode_splits(raw, vocab);

    const std::vector<Example>* part = nullptr;
    if (split == "train") part = &splits.train;
    else if (split == "val") part = &splits.val;
    else if (split == "test") part = &splits.test;
    else throw InputError("--split must be train, val, or test");

    const double acc = evaluate(model, *part, splits.num_classes,
                                manifest.get_int("train.batch", 32), model.config().max_len);
    std::cout << "split=" << split << " accuracy=" << acc << "\n";
    return kExitOk;
}

// Applies --config then flag overrides; validates referenced paths.
class ManifestBuilder {
public:
    void attach_common(CLI::App* cmd) {
        cmd->add_option("--config", config_path_, "manifest file (key = value lines)");
        add_override(cmd, "--seed", "seed", "rng seed");
        add_override(cmd, "--out", "out", "output directory");
    }

    void add_override(CLI::App* cmd, const std::string& flag, const std::string& key,
                      const std::string& help) {
        // std::list keeps node addresses stable across insertions, so the
        // option callback can capture a pointer to its slot.
        overrides_.push_back({flag, key, "", false});
        Override* slot = &overrides_.back();
        cmd->add_option_function<std::string>(
               flag,
               [slot](const std::string& v) {
                   slot->value = v;
                   slot->set = true;
               },
               help)
            ->expected(1);
    }

    Manifest build(bool need_train_data) const {
        Manifest manifest;
        if (!config_path_.empty()) manifest.load_file(config_path_);
        for (const auto& o : overrides_) {
            if (o.set) manifest.set(o.key, o.value);
        }
        manifest.validate_paths(need_train_data);
        return manifest;
    }

private:
    struct Override {
        std::string flag, key, value;
        bool set = false;
    };
    std::string config_path_;
    std::list<Override> overrides_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-guided mixup augmentation for text classification"};
    app.require_subcommand(1);

    ManifestBuilder train_mb, sweep_mb, augment_mb, analyze_mb, eval_mb;

    CLI::App* train_cmd = app.add_subcommand("train", "train one model per the manifest");
    train_mb.attach_common(train_cmd);
    train_mb.add_override(train_cmd, "--strategy", "strategy",
                          "none|attention_mix|word_mixup|mixup_encoding");
    train_mb.add_override(train_cmd, "--layer", "selector.layer", "attention layer");
    train_mb.add_override(train_cmd, "--head", "selector.head", "attention head index or 'all'");
    train_mb.add_override(train_cmd, "--alpha", "alpha", "Beta(alpha,alpha) for baselines");
    train_mb.add_override(train_cmd, "--epochs", "train.epochs", "training epochs");
    train_mb.add_override(train_cmd, "--batch", "train.batch", "batch size");
    train_mb.add_override(train_cmd, "--lr", "train.lr", "learning rate");
    train_mb.add_override(train_cmd, "--train", "data.train", "train split path");
    train_mb.add_override(train_cmd, "--val", "data.val", "validation split path");
    train_mb.add_override(train_cmd, "--test", "data.test", "test split path");
    train_mb.add_override(train_cmd, "--format", "data.format", "tsv|jsonl");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a strategy/selector grid");
    sweep_mb.attach_common(sweep_cmd);
    sweep_mb.add_override(sweep_cmd, "--repeats", "sweep.repeats", "repeats per cell");
    sweep_mb.add_override(sweep_cmd, "--strategies", "sweep.strategies", "comma list");
    sweep_mb.add_override(sweep_cmd, "--layer-means", "sweep.layer_means",
                          "all|none|comma layer list");
    sweep_mb.add_override(sweep_cmd, "--single-heads", "sweep.single_heads",
                          "comma list of layer:head or layer:all");
    bool resume = false;
    sweep_cmd->add_flag("--resume", resume, "reuse completed cell records");
    int top_k = 0;
    sweep_cmd->add_option("--top-k", top_k, "keep only the k best attention rows");

    CLI::App* augment_cmd = app.add_subcommand("augment", "dump mixed samples as JSONL");
    augment_mb.attach_common(augment_cmd);
    augment_mb.add_override(augment_cmd, "--layer", "selector.layer", "attention layer");
    augment_mb.add_override(augment_cmd, "--head", "selector.head", "head index or 'all'");
    augment_mb.add_override(augment_cmd, "--checkpoint", "checkpoint", "trained model");
    int augment_count = 0;
    CLI::Option* augment_n =
        augment_cmd->add_option("-n", augment_count, "number of mixed samples");

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "per-POS attention report");
    analyze_mb.attach_common(analyze_cmd);
    analyze_mb.add_override(analyze_cmd, "--checkpoint", "checkpoint", "trained model");
    analyze_mb.add_override(analyze_cmd, "--vocab", "vocab.file", "vocab.txt from training");
    analyze_mb.add_override(analyze_cmd, "--pos", "data.pos", "CoNLL-like tagged corpus");
    analyze_mb.add_override(analyze_cmd, "--layer", "selector.layer", "attention layer");
    analyze_mb.add_override(analyze_cmd, "--head", "selector.head", "head index or 'all'");
    analyze_mb.add_override(analyze_cmd, "--train", "data.train", "untagged corpus for fallback");
    bool fallback_tagger = false;
    analyze_cmd->add_flag("--fallback-tagger", fallback_tagger,
                          "tag with the built-in rule tagger");

    CLI::App* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on one split");
    eval_mb.attach_common(eval_cmd);
    eval_mb.add_override(eval_cmd, "--checkpoint", "checkpoint", "trained model");
    eval_mb.add_override(eval_cmd, "--vocab", "vocab.file", "vocab.txt from training");
    eval_mb.add_override(eval_cmd, "--train", "data.train", "train split path");
    eval_mb.add_override(eval_cmd, "--val", "data.val", "validation split path");
    eval_mb.add_override(eval_cmd, "--test", "data.test", "test split path");
    std::string eval_split = "test";
    eval_cmd->add_option("--split", eval_split, "train|val|test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            Manifest m = train_mb.build(true);
            return cmd_train(m);
        }
        if (sweep_cmd->parsed()) {
            Manifest m = sweep_mb.build(true);
            return cmd_sweep(m, resume, top_k);
        }
        if (augment_cmd->parsed()) {
            Manifest m = augment_mb.build(true);
            const int count =
                augment_n->count() > 0 ? augment_count : m.get_int("augment.count", 5);
            return cmd_augment(m, count);
        }
        if (analyze_cmd->parsed()) {
            Manifest m = analyze_mb.build(false);
            return cmd_analyze(m, fallback_tagger);
        }
        if (eval_cmd->parsed()) {
            Manifest m = eval_mb.build(true);
            return cmd_eval(m, eval_split);
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
