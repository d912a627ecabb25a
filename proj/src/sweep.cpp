#include "attnmix/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace attnmix {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

nlohmann::json strategy_descriptor(const MixStrategy& s) {
    nlohmann::json j;
    j["kind"] = s.name();
    if (s.kind == MixStrategy::Kind::AttentionMix) {
        j["layer"] = s.selector.layer;
        j["head"] = s.selector.mode == AttentionSelector::Mode::SingleHead
                        ? nlohmann::json(s.selector.head)
                        : nlohmann::json("all");
    }
    if (s.kind == MixStrategy::Kind::WordMixup || s.kind == MixStrategy::Kind::MixupEncoding) {
        j["alpha"] = s.alpha;
    }
    return j;
}

void aggregate(CellResult& cell) {
    if (cell.runs.empty()) return;
    double sum = 0.0;
    for (const RunRecord& r : cell.runs) sum += r.test_accuracy;
    cell.mean = sum / static_cast<double>(cell.runs.size());
    double sq = 0.0;
    for (const RunRecord& r : cell.runs) {
        const double d = r.test_accuracy - cell.mean;
        sq += d * d;
    }
    cell.stddev = std::sqrt(sq / static_cast<double>(cell.runs.size()));
}

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void SweepPlan::validate() const {
    check(repeats >= 1, "SweepPlan: repeats must be >= 1");
    check(!strategies.empty(), "SweepPlan: empty strategy grid");
    for (const MixStrategy& s : strategies) s.validate();
}

std::string CellResult::approach() const {
    switch (strategy.kind) {
        case MixStrategy::Kind::None: return "standard";
        case MixStrategy::Kind::WordMixup: return "wordMixup";
        case MixStrategy::Kind::MixupEncoding: return "MixupEncoding";
        case MixStrategy::Kind::AttentionMix: return "AttentionMix";
    }
    return "standard";
}

std::string cell_record_key(const SweepPlan& plan, const MixStrategy& strategy,
                            int repeat, std::uint64_t seed) {
    nlohmann::json j;
    j["strategy"] = strategy_descriptor(strategy);
    j["repeat"] = repeat;
    j["seed"] = seed;
    j["encoder"] = {{"num_layers", plan.encoder.num_layers},
                    {"num_heads", plan.encoder.num_heads},
                    {"embed_dim", plan.encoder.embed_dim},
                    {"ff_dim", plan.encoder.ff_dim},
                    {"max_len", plan.encoder.max_len},
                    {"dropout", static_cast<double>(plan.encoder.dropout)}};
    j["train"] = {{"epochs", plan.base.epochs},
                  {"batch_size", plan.base.batch_size},
                  {"learning_rate", plan.base.learning_rate},
                  {"optimizer", plan.base.optimizer == TrainConfig::Opt::Adam ? "adam" : "sgd"}};
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

SweepResult run_sweep_with(const SweepPlan& plan, const CellRunner& runner) {
    plan.validate();
    const bool resumable = !plan.record_dir.empty();
    if (resumable) std::filesystem::create_directories(plan.record_dir);

    SweepResult result;
    for (const MixStrategy& strategy : plan.strategies) {
        CellResult cell;
        cell.strategy = strategy;
        for (int repeat = 0; repeat < plan.repeats; ++repeat) {
            const std::uint64_t seed = plan.base_seed + static_cast<std::uint64_t>(repeat);
            std::string record_path;
            if (resumable) {
                record_path = plan.record_dir + "/" +
                              cell_record_key(plan, strategy, repeat, seed) + ".json";
                std::ifstream in(record_path);
                if (in) {
                    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
                    if (!j.is_discarded() && j.contains("record")) {
                        cell.runs.push_back(RunRecord::from_json(j["record"]));
                        continue;
                    }
                }
            }
            try {
                RunRecord record = runner(strategy, seed);
                if (resumable) {
                    nlohmann::json j;
                    j["strategy"] = strategy_descriptor(strategy);
                    j["repeat"] = repeat;
                    j["seed"] = seed;
                    j["record"] = record.to_json();
                    std::ofstream out(record_path);
                    out << j.dump(2) << '\n';
                }
                cell.runs.push_back(std::move(record));
            } catch (const std::exception& e) {
                cell.failures.push_back(e.what());
            }
        }
        aggregate(cell);
        result.cells.push_back(std::move(cell));
    }
    return result;
}

SweepResult run_sweep(const SweepPlan& plan, const DataSplits& data) {
    return run_sweep_with(plan, [&](const MixStrategy& strategy, std::uint64_t seed) {
        EncoderConfig cfg = plan.encoder;
        cfg.num_classes = data.num_classes;
        Rng init_rng = Rng::derive(seed, rng_tags::kInit);
        EncoderModel model(cfg, init_rng);
        TrainConfig tc = plan.base;
        tc.strategy = strategy;
        tc.seed = seed;
        return train(model, data, tc).record;
    });
}

std::vector<RankedRow> rank_cells(const SweepResult& result, int top_k) {
    std::vector<RankedRow> baselines, attention;
    for (const CellResult& cell : result.cells) {
        if (cell.runs.empty()) continue;
        RankedRow row;
        row.approach = cell.approach();
        row.mean = cell.mean;
        row.stddev = cell.stddev;
        if (cell.strategy.kind == MixStrategy::Kind::AttentionMix) {
            row.layer = cell.strategy.selector.layer;
            if (cell.strategy.selector.mode == AttentionSelector::Mode::SingleHead) {
                row.head = cell.strategy.selector.head;
            }
            attention.push_back(row);
        } else {
            row.baseline = true;
            baselines.push_back(row);
        }
    }
    std::sort(attention.begin(), attention.end(),
              [](const RankedRow& a, const RankedRow& b) { return a.mean > b.mean; });
    if (top_k > 0 && static_cast<int>(attention.size()) > top_k) {
        attention.resize(top_k);
    }
    std::vector<RankedRow> rows = std::move(baselines);
    rows.insert(rows.end(), attention.begin(), attention.end());
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RankedRow& a, const RankedRow& b) { return a.mean > b.mean; });
    return rows;
}

void write_comparison_csv(const std::string& path, const std::vector<RankedRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write csv: " + path);
    out << "approach,layer,head,mean,std\r\n";
    for (const RankedRow& row : rows) {
        out << row.approach << ',';
        if (row.layer) out << *row.layer;
        out << ',';
        if (row.head) {
            out << *row.head;
        } else if (row.layer) {
            out << "all";
        }
        out << ',' << csv_number(row.mean) << ',' << csv_number(row.stddev) << "\r\n";
    }
}

void write_series_csv(const std::string& layer_path, const std::string& head_path,
                      const SweepResult& result) {
    std::ofstream layer_out(layer_path, std::ios::binary);
    if (!layer_out) throw InputError("cannot write csv: " + layer_path);
    std::ofstream head_out(head_path, std::ios::binary);
    if (!head_out) throw InputError("cannot write csv: " + head_path);
    layer_out << "layer,mean,std\r\n";
    head_out << "layer,head,mean,std\r\n";
    for (const CellResult& cell : result.cells) {
        if (cell.strategy.kind != MixStrategy::Kind::AttentionMix || cell.runs.empty()) continue;
        const AttentionSelector& sel = cell.strategy.selector;
        if (sel.mode == AttentionSelector::Mode::LayerMean) {
            layer_out << sel.layer << ',' << csv_number(cell.mean) << ','
                      << csv_number(cell.stddev) << "\r\n";
        } else {
            head_out << sel.layer << ',' << sel.head << ',' << csv_number(cell.mean) << ','
                     << csv_number(cell.stddev) << "\r\n";
        }
    }
}

}  // namespace attnmix
