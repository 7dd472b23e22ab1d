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

#include "editlm/codec.hpp"
#include "editlm/corpus.hpp"

using namespace editlm;

namespace {

AttributeProfile random_profile(Rng& rng) {
    AttributeProfile p;
    p.content = sample_content(rng, 1, 12);
    p.speaker = rng.below_int(kMaxSpeakers);
    p.emotion = rng.below_int(kEmotionClasses);
    p.pitch = rng.below_int(kProsodyLevels);
    p.energy = rng.below_int(kProsodyLevels);
    p.speed = rng.below_int(kProsodyLevels);
    return p;
}

}  // namespace

TEST_CASE("encode: all-zero identity case") {
    CodecOracle oracle(1);
    AttributeProfile p;
    p.content = {0};
    p.speed = kMedium;
    const CodecGrid grid = oracle.encode(p, 42);
    REQUIRE(grid.frames() == 4);
    for (int t = 0; t < 4; ++t) CHECK(grid.at(t, 0) == 0);
}

TEST_CASE("encode: layer-1 formula") {
    CodecOracle oracle(1);
    AttributeProfile p;
    p.content = {3};
    p.emotion = kSad;
    p.pitch = kVeryHigh;
    p.speed = kVeryHigh;
    const CodecGrid grid = oracle.encode(p, 7);
    REQUIRE(grid.frames() == 2);
    CHECK(grid.at(0, 0) == 110);  // 3*32 + 2*5 + 4
    CHECK(grid.at(1, 0) == 110);
}

TEST_CASE("encode: deterministic for a fixed seed") {
    CodecOracle oracle(1);
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        const AttributeProfile p = random_profile(rng);
        const uint64_t seed = rng.next_u64();
        CHECK(oracle.encode(p, seed) == oracle.encode(p, seed));
    }
}

TEST_CASE("encode: validation errors") {
    CodecOracle oracle(1);
    AttributeProfile p;
    p.content = {};
    CHECK_THROWS_AS(oracle.encode(p, 1), std::invalid_argument);
    p.content = {3, 3};  // adjacent duplicate: not representable by run decoding
    CHECK_THROWS_AS(oracle.encode(p, 1), std::invalid_argument);
    p.content = {3};
    p.emotion = 5;
    CHECK_THROWS_AS(oracle.encode(p, 1), std::invalid_argument);
    p.emotion = 0;
    p.speaker = 64;
    CHECK_THROWS_AS(oracle.encode(p, 1), std::invalid_argument);
}

TEST_CASE("decode: identity profile round-trips") {
    CodecOracle oracle(1);
    AttributeProfile p;
    p.content = {0};
    p.speed = kMedium;
    CHECK(oracle.decode(oracle.encode(p, 5)).profile == p);
}

TEST_CASE("decode: layer-1 [110,110] means content 3, sad, very-high pitch") {
    CodecOracle oracle(1);
    CodecGrid grid;
    grid.tokens.assign(2 * kCodecLayers, 0);
    for (int t = 0; t < 2; ++t) {
        grid.at(t, 0) = 110;
        for (int j = 1; j < kCodecLayers; ++j) {
            grid.at(t, j) = oracle.layer_code(5, j + 1) * 8 + 3;
        }
    }
    const DecodeResult out = oracle.decode(grid);
    CHECK(out.profile.emotion == kSad);
    CHECK(out.profile.pitch == kVeryHigh);
    REQUIRE(out.profile.content.size() == 1);
    CHECK(out.profile.content[0] == 3);
    CHECK(out.profile.speaker == 5);
    CHECK(out.profile.energy == 3);
}

TEST_CASE("decode: exact round-trip on 1000 random profiles") {
    CodecOracle oracle(17);
    Rng rng(2026);
    for (int i = 0; i < 1000; ++i) {
        const AttributeProfile p = random_profile(rng);
        const CodecGrid grid = oracle.encode(p, rng.next_u64());
        const AttributeProfile back = oracle.decode(grid).profile;
        REQUIRE(back == p);
    }
}

TEST_CASE("decode: empty grid rejected") {
    CodecOracle oracle(1);
    CodecGrid grid;
    CHECK_THROWS_AS(oracle.decode(grid), std::invalid_argument);
}

TEST_CASE("attribute locality under paired encodes") {
    CodecOracle oracle(3);
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        AttributeProfile p = random_profile(rng);
        const uint64_t seed = rng.next_u64();

        // Changing only the emotion touches only the layer-1 emotion component.
        AttributeProfile q = p;
        q.emotion = (p.emotion + 1 + rng.below_int(kEmotionClasses - 1)) % kEmotionClasses;
        const CodecGrid gp = oracle.encode(p, seed);
        const CodecGrid gq = oracle.encode(q, seed);
        REQUIRE(gp.frames() == gq.frames());
        for (int t = 0; t < gp.frames(); ++t) {
            CHECK(gp.at(t, 0) / 32 == gq.at(t, 0) / 32);            // content untouched
            CHECK(gp.at(t, 0) % 5 == gq.at(t, 0) % 5);              // pitch untouched
            CHECK(gp.at(t, 0) % 32 / 5 != gq.at(t, 0) % 32 / 5);    // emotion moved
            for (int j = 1; j < kCodecLayers; ++j) CHECK(gp.at(t, j) == gq.at(t, j));
        }

        // Changing only the energy shifts layers 2-8 by the exact delta.
        AttributeProfile r = p;
        r.energy = (p.energy + 1 + rng.below_int(kProsodyLevels - 1)) % kProsodyLevels;
        const CodecGrid gr = oracle.encode(r, seed);
        for (int t = 0; t < gp.frames(); ++t) {
            CHECK(gp.at(t, 0) == gr.at(t, 0));
            for (int j = 1; j < kCodecLayers; ++j) {
                CHECK(gr.at(t, j) - gp.at(t, j) == r.energy - p.energy);
            }
        }
    }
}

TEST_CASE("token range: every emitted index is below 1024 at the extremes") {
    CodecOracle oracle(5);
    for (int emotion = 0; emotion < kEmotionClasses; emotion += 4) {
        for (int pitch = 0; pitch < kProsodyLevels; pitch += 4) {
            for (int energy = 0; energy < kProsodyLevels; energy += 4) {
                for (int speaker : {0, 31, 63}) {
                    AttributeProfile p;
                    p.content = {31, 30, 31};
                    p.speaker = speaker;
                    p.emotion = emotion;
                    p.pitch = pitch;
                    p.energy = energy;
                    p.speed = kVeryLow;
                    const CodecGrid grid = oracle.encode(p, 123);
                    for (int32_t tok : grid.tokens) {
                        CHECK(tok >= 0);
                        CHECK(tok < kCodecVocab);
                    }
                }
            }
        }
    }
}

TEST_CASE("speaker vectors: unit norm, deterministic, near-orthogonal on average") {
    CodecOracle a(9), b(9);
    double sum_cos = 0.0;
    int pairs = 0;
    for (int s = 0; s < kMaxSpeakers; ++s) {
        const auto& v = a.speaker_vector(s);
        double norm2 = 0.0;
        for (double x : v) norm2 += x * x;
        CHECK(std::abs(std::sqrt(norm2) - 1.0) < 1e-9);
        CHECK(a.speaker_vector(s) == b.speaker_vector(s));
        for (int t = 0; t < s; ++t) {
            sum_cos += cosine(a.speaker_vector(s), a.speaker_vector(t));
            ++pairs;
        }
    }
    CHECK(std::abs(sum_cos / pairs) < 0.15);
    CHECK_THROWS_AS(a.speaker_vector(64), std::invalid_argument);
}

TEST_CASE("speaker code tuples are distinct and within range") {
    CodecOracle oracle(7);
    for (int s = 0; s < kMaxSpeakers; ++s) {
        for (int j = 2; j <= kCodecLayers; ++j) {
            CHECK(oracle.layer_code(s, j) >= 0);
            CHECK(oracle.layer_code(s, j) < 127);
        }
        for (int t = 0; t < s; ++t) {
            int diff = 0;
            for (int j = 2; j <= kCodecLayers; ++j)
                diff += oracle.layer_code(s, j) != oracle.layer_code(t, j);
            CHECK(diff >= 2);
        }
    }
}

TEST_CASE("cosine basics") {
    const std::vector<double> v = {0.3, -1.2, 0.5};
    const std::vector<double> neg = {-0.3, 1.2, -0.5};
    CHECK(cosine(v, v) == doctest::Approx(1.0));
    CHECK(cosine(v, neg) == doctest::Approx(-1.0));
    const std::vector<double> ex = {1.0, 0.0}, ey = {0.0, 1.0}, zero = {0.0, 0.0};
    CHECK(cosine(ex, ey) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine(zero, ex), std::invalid_argument);
}
