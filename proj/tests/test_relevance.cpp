#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "attnmix/reference.hpp"
#include "attnmix/relevance.hpp"
#include "test_helpers.hpp"

using namespace attnmix;
using testutil::ids_batch;
using testutil::random_attention;
using testutil::random_mask;
using testutil::small_config;

TEST_SUITE_BEGIN("relevance");

TEST_CASE("uniform attention gives uniform relevance") {
    const int n = 5;
    std::vector<std::uint8_t> mask(n, 1);
    Matrix aw(n, n, static_cast<real>(1.0 / n));
    RelevanceVector rv = head_relevance(aw, mask);
    for (int j = 0; j < n; ++j) CHECK(rv.values[j] == doctest::Approx(1.0 / n).epsilon(1e-6));
}

TEST_CASE("fully concentrated attention concentrates relevance") {
    const int n = 4;
    std::vector<std::uint8_t> mask(n, 1);
    Matrix aw(n, n);
    for (int i = 0; i < n; ++i) aw.at(i, 0) = real(1);
    RelevanceVector rv = head_relevance(aw, mask);
    CHECK(rv.values[0] == doctest::Approx(1.0));
    for (int j = 1; j < n; ++j) CHECK(rv.values[j] == real(0));
}

TEST_CASE("head relevance matches the double-loop oracle") {
    Rng rng(21);
    std::vector<std::uint8_t> mask = {1, 1, 1, 1};
    Matrix aw = random_attention(rng, mask);
    RelevanceVector rv = head_relevance(aw, mask);
    std::vector<double> oracle = ref::head_relevance(aw, mask);
    for (int j = 0; j < 4; ++j) {
        CHECK(std::abs(rv.values[j] - oracle[j]) < 1e-7);
    }
}

TEST_CASE("relevance errors on an all-PAD mask") {
    Matrix aw(2, 2);
    CHECK_THROWS_AS(head_relevance(aw, {0, 0}), ContractViolation);
}

TEST_CASE("single-head layer mean equals the head relevance") {
    Rng rng(22);
    std::vector<std::uint8_t> mask = {1, 1, 1};
    Matrix aw = random_attention(rng, mask);
    RelevanceVector lr = layer_relevance({aw}, mask);
    RelevanceVector hr = head_relevance(aw, mask);
    for (int j = 0; j < 3; ++j) CHECK(lr.values[j] == hr.values[j]);
}

TEST_CASE("two opposite heads average to a half") {
    std::vector<std::uint8_t> mask = {1, 1};
    Matrix a(2, 2), b(2, 2);
    for (int i = 0; i < 2; ++i) {
        a.at(i, 0) = real(1);
        b.at(i, 1) = real(1);
    }
    RelevanceVector lr = layer_relevance({a, b}, mask);
    CHECK(lr.values[0] == doctest::Approx(0.5));
    CHECK(lr.values[1] == doctest::Approx(0.5));
}

TEST_CASE("four-head layer mean matches the oracle mean") {
    Rng rng(23);
    std::vector<std::uint8_t> mask = random_mask(rng, 6, 2);
    std::vector<Matrix> heads;
    for (int h = 0; h < 4; ++h) heads.push_back(random_attention(rng, mask));
    RelevanceVector lr = layer_relevance(heads, mask);
    std::vector<double> oracle = ref::layer_relevance(heads, mask);
    for (int j = 0; j < 6; ++j) CHECK(std::abs(lr.values[j] - oracle[j]) < 1e-7);
}

TEST_CASE("layer relevance rejects an empty head list") {
    CHECK_THROWS_AS(layer_relevance({}, {1, 1}), ContractViolation);
}

TEST_CASE("relevance sums to one and is nonnegative on random tensors") {
    Rng rng(24);
    for (int trial = 0; trial < 200; ++trial) {
        const int width = 2 + static_cast<int>(rng.next_below(7));
        std::vector<std::uint8_t> mask = random_mask(rng, width, 1);
        Matrix aw = random_attention(rng, mask);
        RelevanceVector rv = head_relevance(aw, mask);
        double sum = 0.0;
        for (int j = 0; j < width; ++j) {
            CHECK(rv.values[j] >= real(0));
            if (!mask[j]) CHECK(rv.values[j] == real(0));
            sum += rv.values[j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("PAD garbage in the attention tensor never leaks into relevance") {
    Rng rng(25);
    std::vector<std::uint8_t> mask = {1, 1, 0, 0};
    Matrix aw = random_attention(rng, mask);
    Matrix poisoned = aw;
    poisoned.at(2, 0) = real(9);
    poisoned.at(0, 2) = real(9);
    poisoned.at(3, 3) = real(9);
    RelevanceVector a = head_relevance(aw, mask);
    RelevanceVector b = head_relevance(poisoned, mask);
    for (int j = 0; j < 4; ++j) CHECK(a.values[j] == b.values[j]);
}

TEST_CASE("relevance debug dump emits one json object per sentence") {
    Rng rng(27);
    std::vector<std::uint8_t> mask = {1, 1, 1};
    RelevanceVector rv = head_relevance(random_attention(rng, mask), mask);
    rv.source = AttentionSelector::single_head(2, 5);
    std::ostringstream out;
    dump_relevance_jsonl(out, 17, rv);
    nlohmann::json j = nlohmann::json::parse(out.str());
    CHECK(j["sentence_id"].get<std::size_t>() == 17);
    CHECK(j["selector"].get<std::string>() == "layer2/head5");
    CHECK(j["values"].size() == 3);
}

TEST_CASE("selector validation covers deep reference-scale models") {
    CHECK_NOTHROW(AttentionSelector::single_head(10, 3).validate(12, 12));
    CHECK_NOTHROW(AttentionSelector::layer_mean(0).validate(12, 12));
    CHECK_THROWS_AS(AttentionSelector::single_head(10, 3).validate(4, 4), ContractViolation);
    CHECK_THROWS_AS(AttentionSelector::layer_mean(99).validate(4, 4), ContractViolation);
}

TEST_CASE("extract dispatches by selector and range-checks it") {
    Rng rng(26);
    EncoderModel model(small_config(10), rng);
    Batch batch = ids_batch({{3, 4, 5}, {6}}, {0, 1}, 2);
    ForwardTrace trace = model.forward(batch, true);

    std::vector<RelevanceVector> single = extract(trace, AttentionSelector::single_head(1, 0));
    std::vector<RelevanceVector> mean = extract(trace, AttentionSelector::layer_mean(0));
    REQUIRE(single.size() == 2);
    REQUIRE(mean.size() == 2);
    for (const auto& rv : {single[0], mean[0], single[1], mean[1]}) {
        double sum = 0.0;
        for (real v : rv.values) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    // Layer mean equals the elementwise mean of per-head relevance, exactly.
    for (int b = 0; b < 2; ++b) {
        std::vector<std::uint8_t> mask(trace.mask.begin() + b * trace.width,
                                       trace.mask.begin() + (b + 1) * trace.width);
        std::vector<Matrix> heads = {trace.attention_slice(0, 0, b),
                                     trace.attention_slice(0, 1, b)};
        RelevanceVector lr = layer_relevance(heads, mask);
        for (std::size_t j = 0; j < lr.values.size(); ++j) {
            CHECK(lr.values[j] == mean[b].values[j]);
        }
    }

    CHECK_THROWS_AS(extract(trace, AttentionSelector::single_head(99, 0)), ContractViolation);
    CHECK_THROWS_AS(extract(trace, AttentionSelector::single_head(0, 99)), ContractViolation);
}

TEST_SUITE_END();
