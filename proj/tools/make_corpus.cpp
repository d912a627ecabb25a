// Generates the synthetic keyword-sentiment corpus as train/val/test TSVs,
// plus an optional CoNLL-style POS file over the train sentences.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "attnmix/analysis.hpp"

using namespace attnmix;

int main(int argc, char** argv) {
    CLI::App app{"synthetic sentiment corpus generator"};
    std::string out_dir = "data";
    int n_train = 200, n_val = 50, n_test = 50;
    double noise = 0.0;
    std::uint64_t seed = 1;
    bool with_pos = false;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--train", n_train, "train size");
    app.add_option("--val", n_val, "validation size");
    app.add_option("--test", n_test, "test size");
    app.add_option("--noise", noise, "train label-flip probability");
    app.add_option("--seed", seed, "rng seed");
    app.add_flag("--pos", with_pos, "also write pos.tsv over the train split");
    CLI11_PARSE(app, argc, argv);

    ToySpec spec;
    spec.n_train = n_train;
    spec.n_val = n_val;
    spec.n_test = n_test;
    spec.label_noise = noise;
    spec.seed = seed;
    RawSplits splits = make_toy_corpus(spec);

    std::filesystem::create_directories(out_dir);
    write_tsv(out_dir + "/train.tsv", splits.train);
    write_tsv(out_dir + "/val.tsv", splits.val);
    write_tsv(out_dir + "/test.tsv", splits.test);

    if (with_pos) {
        std::ofstream pos(out_dir + "/pos.tsv");
        for (const RawExample& ex : splits.train) {
            const auto tokens = tokenize(ex.text);
            const auto tags = tag_fallback(tokens);
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                pos << tokens[t] << '\t' << tags[t] << '\n';
            }
            pos << '\n';
        }
    }
    std::printf("wrote %d/%d/%d examples to %s\n", n_train, n_val, n_test, out_dir.c_str());
    return 0;
}
