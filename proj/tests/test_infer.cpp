// Copyright 2026 The editlm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>

#include "editlm/eval.hpp"
#include "editlm/infer.hpp"

using namespace editlm;

namespace {

// Independent nucleus oracle: enumerate sorted prefixes with long-double
// accumulation and renormalize.
std::vector<double> brute_force_top_p(const std::vector<double>& probs, double p) {
    std::vector<int> order(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });
    size_t keep = order.size();
    long double cum = 0.0L;
    for (size_t i = 0; i < order.size(); ++i) {
        cum += probs[order[i]];
        if (cum >= p) {
            keep = i + 1;
            break;
        }
    }
    long double mass = 0.0L;
    for (size_t i = 0; i < keep; ++i) mass += probs[order[i]];
    std::vector<double> out(probs.size(), 0.0);
    for (size_t i = 0; i < keep; ++i)
        out[order[i]] = static_cast<double>(probs[order[i]] / mass);
    return out;
}

}  // namespace

TEST_CASE("top_p_filter: worked example") {
    const std::vector<double> probs = {0.5, 0.3, 0.15, 0.05};
    const auto out = top_p_filter(probs, 0.8);
    CHECK(out[0] == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(out[2] == 0.0);
    CHECK(out[3] == 0.0);
}

TEST_CASE("top_p_filter: identity cases") {
    const std::vector<double> probs = {0.5, 0.25, 0.125, 0.125};
    const auto full = top_p_filter(probs, 1.0);
    for (size_t i = 0; i < probs.size(); ++i) CHECK(full[i] == doctest::Approx(probs[i]).epsilon(1e-12));

    const std::vector<double> onehot = {0.0, 1.0, 0.0};
    for (double p : {0.1, 0.5, 1.0}) {
        const auto out = top_p_filter(onehot, p);
        CHECK(out[1] == doctest::Approx(1.0));
        CHECK(out[0] == 0.0);
        CHECK(out[2] == 0.0);
    }

    CHECK_THROWS_AS(top_p_filter(probs, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(top_p_filter(probs, -0.2), std::invalid_argument);
    CHECK_THROWS_AS(top_p_filter({0.5, 0.4}, 0.5), std::invalid_argument);
}

TEST_CASE("top_p_filter: matches the brute-force oracle on random distributions") {
    Rng rng(404);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + rng.below_int(31);
        std::vector<double> probs(n);
        double sum = 0.0;
        for (double& v : probs) {
            v = -std::log(1.0 - rng.real01());
            sum += v;
        }
        for (double& v : probs) v /= sum;
        for (double p : {0.3, 0.5, 0.8, 1.0}) {
            const auto got = top_p_filter(probs, p);
            const auto expect = brute_force_top_p(probs, p);
            double out_sum = 0.0;
            for (int i = 0; i < n; ++i) {
                CHECK((got[i] > 0.0) == (expect[i] > 0.0));  // identical supports
                CHECK(std::abs(got[i] - expect[i]) <= 1e-9);
                if (got[i] > 0.0) CHECK(probs[i] > 0.0);  // support subset of input
                out_sum += got[i];
            }
            CHECK(std::abs(out_sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("repetition_penalize: identity, scope, and arithmetic") {
    std::vector<float> logits = {2.0f, -1.0f, 0.5f};

    auto copy = logits;
    repetition_penalize(copy, {0, 1}, 10, 1.0);
    CHECK(copy == logits);  // rho = 1 is the identity

    copy = logits;
    repetition_penalize(copy, {1}, 10, 1.25);
    CHECK(copy[0] == 2.0f);                       // absent from history: unchanged
    CHECK(copy[1] == doctest::Approx(-1.25f));    // negative multiplied
    CHECK(copy[2] == 0.5f);

    copy = logits;
    repetition_penalize(copy, {0}, 10, 1.25);
    CHECK(copy[0] == doctest::Approx(1.6f));      // 2.0 / 1.25

    // only the last W tokens count
    copy = logits;
    std::vector<int32_t> history(20, 2);
    history[0] = 0;
    repetition_penalize(copy, history, 10, 2.0);
    CHECK(copy[0] == 2.0f);
    CHECK(copy[2] == doctest::Approx(0.25f));

    CHECK_THROWS_AS(repetition_penalize(copy, {0}, 10, 0.5), std::invalid_argument);
}

TEST_CASE("repetition penalty: raising rho never raises an in-window probability") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> logits(16);
        for (float& v : logits) v = static_cast<float>(rng.normal() * 2.0);
        const int tok = rng.below_int(16);
        double prev = 1.0;
        for (double rho : {1.0, 1.1, 1.5, 2.0, 4.0}) {
            auto penalized = logits;
            repetition_penalize(penalized, {tok}, 10, rho);
            double m = penalized[0];
            for (float v : penalized) m = std::max<double>(m, v);
            double z = 0.0;
            for (float v : penalized) z += std::exp(v - m);
            const double prob = std::exp(penalized[tok] - m) / z;
            CHECK(prob <= prev + 1e-12);
            prev = prob;
        }
    }
}

TEST_CASE("rank_sum_select: dominance, singleton, and the tie example") {
    // a candidate best on both criteria always wins
    CHECK(rank_sum_select({{0.0, 0.9}, {0.5, 0.2}, {0.3, 0.5}}) == 0);
    // n = 1
    CHECK(rank_sum_select({{0.7, -0.3}}) == 0);
    // ranks (1,3), (2,2), (3,1): sums tie at 4, lowest content error wins
    CHECK(rank_sum_select({{0.0, 0.1}, {0.1, 0.5}, {0.2, 0.9}}) == 0);
}

TEST_CASE("best_of_n over real grids") {
    CodecOracle oracle(1);
    const std::vector<int> target = {4, 9, 2, 7};
    const SpeakerVec ref = oracle.speaker_vector(3);

    AttributeProfile perfect;
    perfect.content = target;
    perfect.speaker = 3;
    AttributeProfile wrong_content = perfect;
    wrong_content.content = {4, 9, 2, 8};
    AttributeProfile wrong_speaker = perfect;
    wrong_speaker.speaker = 12;

    std::vector<CodecGrid> candidates = {
        oracle.encode(wrong_speaker, 1),
        oracle.encode(wrong_content, 2),
        oracle.encode(perfect, 3),
    };
    const CodecGrid& chosen = best_of_n(candidates, target, ref, oracle, 3);
    CHECK(chosen == candidates[2]);

    // an empty candidate never wins over a decodable one
    candidates.push_back(CodecGrid{});
    CHECK(best_of_n(candidates, target, ref, oracle, 4) == candidates[2]);
    CHECK(best_of_n({candidates[0]}, target, ref, oracle, 1) == candidates[0]);
    CHECK_THROWS_AS(best_of_n({}, target, ref, oracle, 1), std::invalid_argument);
}

TEST_CASE("generate: determinism and the grid contract on an untrained model") {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 32;
    cfg.ff_dim = 64;
    cfg.dropout = 0.0;
    cfg.max_seq_len = 256;
    ModelBundle bundle(cfg, 55);
    CodecOracle oracle(1);

    AttributeProfile p;
    p.content = {1, 5, 3, 8};
    p.speaker = 2;
    const CodecGrid prompt = oracle.encode(p, 10);
    const EditSpec spec = build_spec(Task::kZeroShotTts, {});

    SamplingParams sampling;
    sampling.p = 0.5;
    sampling.max_frames = 24;
    sampling.seed = 1234;

    const GenerateResult a = generate(bundle, spec, p.content, {2, 7}, prompt, sampling);
    const GenerateResult b = generate(bundle, spec, p.content, {2, 7}, prompt, sampling);
    CHECK(a.grid == b.grid);
    CHECK(a.truncated == b.truncated);
    if (!a.grid.tokens.empty()) {
        CHECK(a.grid.tokens.size() % kCodecLayers == 0);  // width is always 8
        for (int32_t tok : a.grid.tokens) {
            CHECK(tok >= 0);
            CHECK(tok < kCodecVocab);
        }
    }

    // greedy decoding ignores the seed entirely
    SamplingParams greedy = sampling;
    greedy.temperature = 0.0;
    greedy.seed = 1;
    const GenerateResult g1 = generate(bundle, spec, p.content, {2, 7}, prompt, greedy);
    greedy.seed = 999;
    const GenerateResult g2 = generate(bundle, spec, p.content, {2, 7}, prompt, greedy);
    CHECK(g1.grid == g2.grid);

    // an untrained model rarely emits the end token: the truncation flag works
    SamplingParams tiny = sampling;
    tiny.max_frames = 4;
    const GenerateResult t = generate(bundle, spec, p.content, {2, 7}, prompt, tiny);
    if (t.grid.frames() == 4) CHECK(t.truncated);
}
