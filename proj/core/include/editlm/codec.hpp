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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "editlm/rng.hpp"

namespace editlm {

constexpr int kContentSymbols = 32;
constexpr int kMaxSpeakers = 64;
constexpr int kEmotionClasses = 5;
constexpr int kProsodyLevels = 5;
constexpr int kCodecLayers = 8;
constexpr int kCodecVocab = 1024;
constexpr int kSpeakerVecDim = 64;

enum Emotion : int { kNeutral = 0, kHappy = 1, kSad = 2, kAngry = 3, kSurprise = 4 };
enum Level : int { kVeryLow = 0, kLow = 1, kMedium = 2, kHigh = 3, kVeryHigh = 4 };

const char* emotion_name(int e);
const char* level_name(int l);
int emotion_from_name(const std::string& name);   // -1 if unknown
int level_from_name(const std::string& name);     // -1 if unknown

/// Ground-truth factors of one utterance. `content` is a sequence of
/// symbol ids in [0,32); the remaining fields are categorical/ordinal ids.
struct AttributeProfile {
    std::vector<int> content;
    int speaker = 0;
    int emotion = 0;
    int pitch = 0;
    int energy = 0;
    int speed = kMedium;

    bool operator==(const AttributeProfile&) const = default;
};

/// T x 8 grid of codec token indices in [0,1024), row-major by frame.
struct CodecGrid {
    std::vector<int32_t> tokens;  // frames * 8

    int frames() const { return static_cast<int>(tokens.size()) / kCodecLayers; }
    int32_t& at(int frame, int layer) { return tokens[frame * kCodecLayers + layer]; }
    int32_t at(int frame, int layer) const { return tokens[frame * kCodecLayers + layer]; }

    bool operator==(const CodecGrid&) const = default;
};

/// Frames emitted per content symbol at the given speed level.
/// Speed is encoded temporally: faster speech = fewer frames per symbol.
int frames_per_symbol(int speed_level);

/// Throws std::invalid_argument if any field is out of range, the content is
/// empty, or the content has adjacent duplicate symbols (which the run-length
/// decoding cannot separate; see decode()).
void validate_profile(const AttributeProfile& profile);

struct SpeakerDecode {
    int speaker = 0;
    bool exact = false;   // all 7 layer codes matched the table entry
    int margin = 0;       // matched-layer count: best minus runner-up
};

struct DecodeResult {
    AttributeProfile profile;
    SpeakerDecode speaker_match;
    int emotion_margin = 0;  // frame-vote count: best emotion minus runner-up
};

/// The synthetic codec. Encoding is a fixed arithmetic map from attributes to
/// tokens plus seeded jitter on layers 2-8; decoding inverts it exactly on
/// clean grids and degrades gracefully on model-generated ones.
///
/// Layer 1:   token = content*32 + emotion*5 + pitch, repeated for the
///            frames_per_symbol(speed) frames of each symbol's span.
/// Layers 2-8: token = speaker_code[layer]*8 + energy + jitter, where jitter
///            is 0 on even frames and drawn from {0,1,2} on odd frames, so a
///            lowest-tie frame vote always recovers the energy offset.
class CodecOracle {
public:
    /// The table (layer codes and speaker vectors) is a pure function of
    /// `table_seed`; everything that touches speaker identity must agree on it.
    explicit CodecOracle(uint64_t table_seed);

    CodecGrid encode(const AttributeProfile& profile, uint64_t seed) const;
    DecodeResult decode(const CodecGrid& grid) const;

    /// Unit-norm 64-dim vector for a speaker id; the oracle stand-in for a
    /// voice-print extractor.
    const std::array<double, kSpeakerVecDim>& speaker_vector(int speaker) const;

    int layer_code(int speaker, int layer) const;  // layer in [2,8]

    uint64_t table_seed() const { return table_seed_; }

private:
    uint64_t table_seed_;
    // codes_[s][j] is the layer-(j+2) code of speaker s, in [0,127).
    std::array<std::array<int, kCodecLayers - 1>, kMaxSpeakers> codes_{};
    std::array<std::array<double, kSpeakerVecDim>, kMaxSpeakers> vectors_{};
};

/// Cosine similarity between two non-zero vectors of equal dimension.
double cosine(const std::array<double, kSpeakerVecDim>& a,
              const std::array<double, kSpeakerVecDim>& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace editlm
