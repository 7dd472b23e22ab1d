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

#include "editlm/sequencer.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace editlm {

namespace {

void check_range(int v, int n, const char* what) {
    if (v < 0 || v >= n) throw std::invalid_argument(std::string("vocab: ") + what + " out of range");
}

std::string two_digits(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", v);
    return buf;
}

}  // namespace

int TokenVocabulary::content_id(int symbol) {
    check_range(symbol, kContentSymbols, "content symbol");
    return kContentBase + symbol;
}

int TokenVocabulary::emotion_tag(int emotion) {
    check_range(emotion, kEmotionClasses, "emotion");
    return kEmotionBase + emotion;
}

int TokenVocabulary::pitch_tag(int level) {
    check_range(level, kProsodyLevels, "pitch level");
    return kPitchBase + level;
}

int TokenVocabulary::energy_tag(int level) {
    check_range(level, kProsodyLevels, "energy level");
    return kEnergyBase + level;
}

int TokenVocabulary::speed_tag(int level) {
    check_range(level, kProsodyLevels, "speed level");
    return kSpeedBase + level;
}

int TokenVocabulary::codec_id(int token) {
    check_range(token, kCodecVocab, "codec token");
    return kCodecBase + token;
}

int TokenVocabulary::codec_token(int id) {
    if (!is_codec(id)) throw std::invalid_argument("vocab: id is not a codec token");
    return id - kCodecBase;
}

std::string TokenVocabulary::name(int id) {
    check_range(id, kTotal, "token id");
    if (id < kEmotionBase) return "content-" + two_digits(id);
    if (id < kPitchBase) return std::string("emotion-") + emotion_name(id - kEmotionBase);
    if (id < kEnergyBase) return std::string("pitch-") + level_name(id - kPitchBase);
    if (id < kSpeedBase) return std::string("energy-") + level_name(id - kEnergyBase);
    if (id < kFillIn) return std::string("speed-") + level_name(id - kSpeedBase);
    switch (id) {
        case kFillIn: return "fill-in";
        case kCSep: return "c-sep";
        case kTSep: return "t-sep";
        case kASep: return "a-sep";
        case kC2T: return "c2t";
        case kT2A: return "t2a";
        case kEos: return "eos";
        case kSpkSlot: return "spk-slot";
        default: break;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "codec-%04d", id - kCodecBase);
    return buf;
}

void TokenVocabulary::write_manifest(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("vocab: cannot write manifest: " + path);
    for (int id = 0; id < kTotal; ++id) {
        out << name(id) << '\t' << id << '\n';
    }
}

bool EditSpec::has_speaker_vec() const {
    for (double v : speaker) {
        if (v != 0.0) return true;
    }
    return false;
}

bool EditSpec::is_zero_shot() const {
    return !has_speaker_vec() && !emotion && !pitch && !energy && !speed;
}

EditSpec build_spec(Task task, const TagRequest& tags, const SpeakerVec* speaker) {
    auto check_tag = [](const std::optional<int>& t, int n, const char* what) {
        if (t && (*t < 0 || *t >= n))
            throw std::invalid_argument(std::string("build_spec: ") + what + " tag out of range");
    };
    check_tag(tags.emotion, kEmotionClasses, "emotion");
    check_tag(tags.pitch, kProsodyLevels, "pitch");
    check_tag(tags.energy, kProsodyLevels, "energy");
    check_tag(tags.speed, kProsodyLevels, "speed");

    EditSpec spec;
    switch (task) {
        case Task::kZeroShotTts:
            if (tags.emotion || tags.pitch || tags.energy || tags.speed)
                throw std::invalid_argument("build_spec: zero-shot tts takes no explicit tags");
            if (speaker)
                throw std::invalid_argument("build_spec: zero-shot tts takes no speaker vector");
            break;
        case Task::kStyleEdit:
            if (speaker)
                throw std::invalid_argument("build_spec: style edit takes no speaker vector");
            spec.emotion = tags.emotion;
            spec.pitch = tags.pitch;
            spec.energy = tags.energy;
            spec.speed = tags.speed;
            break;
        case Task::kVoiceConversion:
            if (!speaker)
                throw std::invalid_argument("build_spec: voice conversion needs a speaker vector");
            spec.speaker = *speaker;
            spec.emotion = tags.emotion;
            spec.pitch = tags.pitch;
            spec.energy = tags.energy;
            spec.speed = tags.speed;
            break;
    }
    return spec;
}

ComposedSequence compose(const EditSpec& spec, const std::vector<int>& x1,
                         const std::vector<int>& x2, const std::vector<int32_t>& a1_layer1) {
    if (x1.empty() || x2.empty() || a1_layer1.empty())
        throw std::invalid_argument("compose: empty input");

    using V = TokenVocabulary;
    ComposedSequence seq;
    seq.speaker = spec.speaker;
    seq.ids.reserve(10 + x1.size() + x2.size() + a1_layer1.size());

    seq.ids.push_back(V::kSpkSlot);
    seq.ids.push_back(V::kCSep);
    seq.ids.push_back(spec.emotion ? V::emotion_tag(*spec.emotion) : V::kFillIn);
    seq.ids.push_back(spec.pitch ? V::pitch_tag(*spec.pitch) : V::kFillIn);
    seq.ids.push_back(spec.energy ? V::energy_tag(*spec.energy) : V::kFillIn);
    seq.ids.push_back(spec.speed ? V::speed_tag(*spec.speed) : V::kFillIn);
    seq.end_of_conditioning = static_cast<int>(seq.ids.size());
    seq.ids.push_back(V::kC2T);
    seq.start_of_context = static_cast<int>(seq.ids.size());
    for (int c : x1) seq.ids.push_back(V::content_id(c));
    seq.ids.push_back(V::kTSep);
    for (int c : x2) seq.ids.push_back(V::content_id(c));
    seq.ids.push_back(V::kT2A);
    for (int32_t tok : a1_layer1) seq.ids.push_back(V::codec_id(tok));
    seq.start_of_generation = static_cast<int>(seq.ids.size());
    return seq;
}

ParsedSequence parse(const ComposedSequence& seq) {
    using V = TokenVocabulary;
    const auto& ids = seq.ids;
    if (ids.size() < 10 || ids[0] != V::kSpkSlot || ids[1] != V::kCSep ||
        ids[seq.end_of_conditioning] != V::kC2T) {
        throw std::invalid_argument("parse: malformed sequence");
    }

    ParsedSequence out;
    out.spec.speaker = seq.speaker;
    auto tag_of = [](int id, int base, int count) -> std::optional<int> {
        if (id == V::kFillIn) return std::nullopt;
        if (id < base || id >= base + count)
            throw std::invalid_argument("parse: unexpected tag id");
        return id - base;
    };
    out.spec.emotion = tag_of(ids[2], V::kEmotionBase, kEmotionClasses);
    out.spec.pitch = tag_of(ids[3], V::kPitchBase, kProsodyLevels);
    out.spec.energy = tag_of(ids[4], V::kEnergyBase, kProsodyLevels);
    out.spec.speed = tag_of(ids[5], V::kSpeedBase, kProsodyLevels);

    size_t i = seq.start_of_context;
    while (i < ids.size() && ids[i] != V::kTSep) out.x1.push_back(ids[i++]);
    if (i >= ids.size()) throw std::invalid_argument("parse: missing t-sep");
    ++i;
    while (i < ids.size() && ids[i] != V::kT2A) out.x2.push_back(ids[i++]);
    if (i >= ids.size()) throw std::invalid_argument("parse: missing t2a");
    ++i;
    while (i < ids.size()) out.a1_layer1.push_back(V::codec_token(ids[i++]));
    return out;
}

std::vector<std::vector<bool>> AttentionMask::materialize() const {
    std::vector<std::vector<bool>> m(length, std::vector<bool>(length, false));
    for (int i = 0; i < length; ++i) {
        for (int j = 0; j < length; ++j) m[i][j] = allowed(i, j);
    }
    return m;
}

AttentionMask ar_mask(const ComposedSequence& seq, int gen_len, bool full_prefix) {
    if (gen_len < 0) throw std::invalid_argument("ar_mask: negative gen_len");
    AttentionMask mask;
    mask.length = static_cast<int>(seq.ids.size()) + gen_len;
    mask.prefix_end = full_prefix ? seq.start_of_generation - 1 : seq.end_of_conditioning;
    return mask;
}

}  // namespace editlm
