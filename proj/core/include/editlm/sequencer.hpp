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
#include <optional>
#include <string>
#include <vector>

#include "editlm/codec.hpp"

namespace editlm {

/// Fixed id layout shared by instruction tags, content symbols and codec
/// tokens. Tags live in the same table region as text so one embedding table
/// serves both.
///
///   [0,32)    content symbols
///   [32,37)   emotion tags
///   [37,42)   pitch tags
///   [42,47)   energy tags
///   [47,52)   speed tags
///   52        fill-in
///   53..57    c-sep, t-sep, a-sep, c2t, t2a
///   58        eos
///   59        speaker slot (continuous input, embedding row unused)
///   [60,1084) codec tokens, shared across layers
struct TokenVocabulary {
    static constexpr int kContentBase = 0;
    static constexpr int kEmotionBase = 32;
    static constexpr int kPitchBase = 37;
    static constexpr int kEnergyBase = 42;
    static constexpr int kSpeedBase = 47;
    static constexpr int kFillIn = 52;
    static constexpr int kCSep = 53;
    static constexpr int kTSep = 54;
    static constexpr int kASep = 55;  // reserved; not placed by compose()
    static constexpr int kC2T = 56;
    static constexpr int kT2A = 57;
    static constexpr int kEos = 58;
    static constexpr int kSpkSlot = 59;
    static constexpr int kCodecBase = 60;
    static constexpr int kTextIds = 60;  // ids below the codec region
    static constexpr int kTotal = kCodecBase + kCodecVocab;

    static int content_id(int symbol);
    static int emotion_tag(int emotion);
    static int pitch_tag(int level);
    static int energy_tag(int level);
    static int speed_tag(int level);
    static int codec_id(int token);

    static bool is_codec(int id) { return id >= kCodecBase && id < kTotal; }
    static int codec_token(int id);

    /// Human-readable token name, e.g. "content-07", "emotion-sad", "c2t".
    static std::string name(int id);

    /// Writes the `name<TAB>id` manifest, one token per line.
    static void write_manifest(const std::string& path);
};

using SpeakerVec = std::array<double, kSpeakerVecDim>;

/// Per-attribute instruction. nullopt means the fill-in tag: infer the
/// attribute from the acoustic prompt. `speaker` is the zero vector for
/// zero-shot/style tasks and a reference vector for voice conversion.
struct EditSpec {
    std::optional<int> emotion;
    std::optional<int> pitch;
    std::optional<int> energy;
    std::optional<int> speed;
    SpeakerVec speaker{};

    bool has_speaker_vec() const;
    bool is_zero_shot() const;
};

enum class Task { kZeroShotTts, kStyleEdit, kVoiceConversion };

struct TagRequest {
    std::optional<int> emotion;
    std::optional<int> pitch;
    std::optional<int> energy;
    std::optional<int> speed;
};

/// Builds the edit spec for a task. Zero-shot forces everything to fill-in
/// with a zero speaker vector; style edit takes the requested explicit tags;
/// voice conversion requires a speaker vector and passes tags through.
EditSpec build_spec(Task task, const TagRequest& tags, const SpeakerVec* speaker = nullptr);

/// The flattened conditioning+context token sequence:
///   [spk-slot, c-sep, emotion, pitch, energy, speed, c2t,
///    x1..., t-sep, x2..., t2a, a1...]
struct ComposedSequence {
    std::vector<int32_t> ids;
    SpeakerVec speaker{};
    int end_of_conditioning = 0;  // index of c2t
    int start_of_context = 0;     // index of the first x1 token
    int start_of_generation = 0;  // == ids.size(); the first generated frame
};

ComposedSequence compose(const EditSpec& spec, const std::vector<int>& x1,
                         const std::vector<int>& x2, const std::vector<int32_t>& a1_layer1);

struct ParsedSequence {
    EditSpec spec;
    std::vector<int> x1;
    std::vector<int> x2;
    std::vector<int32_t> a1_layer1;
};

/// Exact inverse of compose() (speaker vector is carried through).
ParsedSequence parse(const ComposedSequence& seq);

/// Prefix-bidirectional attention mask: positions up to and including c2t
/// attend freely among themselves, everything after attends causally to all
/// earlier positions. Stored compactly; allowed(i,j) and a materialized
/// matrix are provided for probing.
struct AttentionMask {
    int length = 0;
    int prefix_end = 0;  // last index of the bidirectional prefix

    bool allowed(int i, int j) const {
        if (i <= prefix_end) return j <= prefix_end;
        return j <= i;
    }
    /// Exclusive end of the allowed key range for row i (allowed keys are
    /// always a contiguous range starting at 0).
    int row_end(int i) const { return (i <= prefix_end ? prefix_end : i) + 1; }

    std::vector<std::vector<bool>> materialize() const;
};

/// Mask over the composed sequence plus `gen_len` generated positions.
/// With `full_prefix` the bidirectional block covers the whole known input
/// (typical prefix-LM practice) instead of stopping at the conditioning.
AttentionMask ar_mask(const ComposedSequence& seq, int gen_len, bool full_prefix = false);

}  // namespace editlm
