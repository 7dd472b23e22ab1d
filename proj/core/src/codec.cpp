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

#include "editlm/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace editlm {

namespace {

constexpr const char* kEmotionNames[kEmotionClasses] = {"neutral", "happy", "sad", "angry",
                                                        "surprise"};
constexpr const char* kLevelNames[kProsodyLevels] = {"verylow", "low", "medium", "high",
                                                     "veryhigh"};

// Number of distinct code values per layer. Keeping the per-layer alphabet
// small means a handful of training speakers already covers every code block
// a held-out speaker can use, so the token LM never has to emit an embedding
// row it has never seen trained.
constexpr int kAnchorsPerLayer = 8;

int jitter_at(uint64_t seed, int frame, int layer) {
    // Even frames carry no jitter; with ties broken toward the lower value,
    // the per-frame offset vote is then guaranteed to recover the energy.
    if (frame % 2 == 0) return 0;
    return static_cast<int>(Rng::derive(seed, static_cast<uint64_t>(frame),
                                        static_cast<uint64_t>(layer)) %
                            3);
}

// Mode of non-negative values, ties broken toward the smaller value.
int lowest_mode(const std::vector<int>& values, int upper_bound) {
    std::vector<int> counts(upper_bound, 0);
    for (int v : values) {
        if (v >= 0 && v < upper_bound) counts[v]++;
    }
    int best = 0;
    for (int v = 1; v < upper_bound; ++v) {
        if (counts[v] > counts[best]) best = v;
    }
    return best;
}

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

}  // namespace

const char* emotion_name(int e) { return kEmotionNames[e]; }
const char* level_name(int l) { return kLevelNames[l]; }

int emotion_from_name(const std::string& name) {
    for (int i = 0; i < kEmotionClasses; ++i) {
        if (name == kEmotionNames[i]) return i;
    }
    return -1;
}

int level_from_name(const std::string& name) {
    for (int i = 0; i < kProsodyLevels; ++i) {
        if (name == kLevelNames[i]) return i;
    }
    return -1;
}

int frames_per_symbol(int speed_level) {
    static constexpr int kFrames[kProsodyLevels] = {6, 5, 4, 3, 2};
    if (speed_level < 0 || speed_level >= kProsodyLevels) {
        throw std::invalid_argument("codec: speed level out of range");
    }
    return kFrames[speed_level];
}

void validate_profile(const AttributeProfile& p) {
    if (p.content.empty()) throw std::invalid_argument("codec: empty content");
    for (size_t i = 0; i < p.content.size(); ++i) {
        if (p.content[i] < 0 || p.content[i] >= kContentSymbols) {
            throw std::invalid_argument("codec: content symbol out of range");
        }
        if (i > 0 && p.content[i] == p.content[i - 1]) {
            throw std::invalid_argument("codec: adjacent duplicate content symbols");
        }
    }
    if (p.speaker < 0 || p.speaker >= kMaxSpeakers)
        throw std::invalid_argument("codec: speaker out of range");
    if (p.emotion < 0 || p.emotion >= kEmotionClasses)
        throw std::invalid_argument("codec: emotion out of range");
    if (p.pitch < 0 || p.pitch >= kProsodyLevels)
        throw std::invalid_argument("codec: pitch out of range");
    if (p.energy < 0 || p.energy >= kProsodyLevels)
        throw std::invalid_argument("codec: energy out of range");
    if (p.speed < 0 || p.speed >= kProsodyLevels)
        throw std::invalid_argument("codec: speed out of range");
}

CodecOracle::CodecOracle(uint64_t table_seed) : table_seed_(table_seed) {
    // Per layer, pick kAnchorsPerLayer distinct code values spread over
    // [0,127); every speaker's layer code is one of these anchors.
    std::array<std::array<int, kAnchorsPerLayer>, kCodecLayers - 1> anchors{};
    Rng rng(Rng::derive(table_seed, 0xc0de));
    for (int j = 0; j < kCodecLayers - 1; ++j) {
        int picked = 0;
        while (picked < kAnchorsPerLayer) {
            int candidate = rng.below_int(127);
            bool dup = false;
            for (int k = 0; k < picked; ++k) dup |= (anchors[j][k] == candidate);
            if (!dup) anchors[j][picked++] = candidate;
        }
    }

    // Assign anchor tuples; resample until all tuples are pairwise at
    // Hamming distance >= 2 so near-twin speakers cannot arise.
    for (int s = 0; s < kMaxSpeakers; ++s) {
        for (;;) {
            std::array<int, kCodecLayers - 1> tuple{};
            for (int j = 0; j < kCodecLayers - 1; ++j) {
                tuple[j] = anchors[j][rng.below_int(kAnchorsPerLayer)];
            }
            bool ok = true;
            for (int t = 0; t < s && ok; ++t) {
                int diff = 0;
                for (int j = 0; j < kCodecLayers - 1; ++j) diff += (codes_[t][j] != tuple[j]);
                ok = diff >= 2;
            }
            if (ok) {
                codes_[s] = tuple;
                break;
            }
        }
    }

    for (int s = 0; s < kMaxSpeakers; ++s) {
        Rng vrng(Rng::derive(table_seed, 0x5bea, static_cast<uint64_t>(s)));
        double norm2 = 0.0;
        for (int d = 0; d < kSpeakerVecDim; ++d) {
            vectors_[s][d] = vrng.normal();
            norm2 += vectors_[s][d] * vectors_[s][d];
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (int d = 0; d < kSpeakerVecDim; ++d) vectors_[s][d] *= inv;
    }
}

CodecGrid CodecOracle::encode(const AttributeProfile& p, uint64_t seed) const {
    validate_profile(p);
    const int r = frames_per_symbol(p.speed);
    const int frames = static_cast<int>(p.content.size()) * r;

    CodecGrid grid;
    grid.tokens.resize(static_cast<size_t>(frames) * kCodecLayers);
    for (int t = 0; t < frames; ++t) {
        const int symbol = p.content[t / r];
        grid.at(t, 0) = symbol * 32 + p.emotion * 5 + p.pitch;
        for (int j = 1; j < kCodecLayers; ++j) {
            grid.at(t, j) = codes_[p.speaker][j - 1] * 8 + p.energy + jitter_at(seed, t, j);
        }
    }
    return grid;
}

DecodeResult CodecOracle::decode(const CodecGrid& grid) const {
    const int frames = grid.frames();
    if (frames == 0 || grid.tokens.empty()) throw std::invalid_argument("codec: empty grid");
    for (int32_t tok : grid.tokens) {
        if (tok < 0 || tok >= kCodecVocab) throw std::invalid_argument("codec: token out of range");
    }

    DecodeResult result;
    AttributeProfile& p = result.profile;

    // Content per maximal constant run of layer-1 tokens; speed from the
    // (lower) median run length.
    std::vector<int> run_lengths;
    int run_start = 0;
    for (int t = 1; t <= frames; ++t) {
        if (t == frames || grid.at(t, 0) != grid.at(run_start, 0)) {
            p.content.push_back(grid.at(run_start, 0) / 32);
            run_lengths.push_back(t - run_start);
            run_start = t;
        }
    }
    std::sort(run_lengths.begin(), run_lengths.end());
    const int median_run = run_lengths[(run_lengths.size() - 1) / 2];
    int best_speed = 0;
    for (int l = 1; l < kProsodyLevels; ++l) {
        if (std::abs(median_run - frames_per_symbol(l)) <
            std::abs(median_run - frames_per_symbol(best_speed))) {
            best_speed = l;
        }
    }
    p.speed = best_speed;

    // Emotion and pitch by per-frame vote over the layer-1 remainder.
    std::vector<int> emo_votes(frames), pitch_votes(frames);
    for (int t = 0; t < frames; ++t) {
        const int rem = grid.at(t, 0) % 32;
        emo_votes[t] = clamp_int(rem / 5, 0, kEmotionClasses - 1);
        pitch_votes[t] = rem % 5;
    }
    {
        std::vector<int> counts(kEmotionClasses, 0);
        for (int v : emo_votes) counts[v]++;
        int best = 0, second = -1;
        for (int e = 1; e < kEmotionClasses; ++e) {
            if (counts[e] > counts[best]) best = e;
        }
        for (int e = 0; e < kEmotionClasses; ++e) {
            if (e != best && (second < 0 || counts[e] > counts[second])) second = e;
        }
        p.emotion = best;
        result.emotion_margin = counts[best] - counts[second];
    }
    p.pitch = lowest_mode(pitch_votes, kProsodyLevels);

    // Speaker: per-layer frame vote of token/8, then best code-tuple match.
    std::array<int, kCodecLayers - 1> layer_modes{};
    for (int j = 1; j < kCodecLayers; ++j) {
        std::vector<int> votes(frames);
        for (int t = 0; t < frames; ++t) votes[t] = grid.at(t, j) / 8;
        layer_modes[j - 1] = lowest_mode(votes, kCodecVocab / 8);
    }
    int best_spk = 0, best_score = -1, second_score = -1;
    for (int s = 0; s < kMaxSpeakers; ++s) {
        int score = 0;
        for (int j = 0; j < kCodecLayers - 1; ++j) score += (codes_[s][j] == layer_modes[j]);
        if (score > best_score) {
            second_score = best_score;
            best_score = score;
            best_spk = s;
        } else if (score > second_score) {
            second_score = score;
        }
    }
    p.speaker = best_spk;
    result.speaker_match.speaker = best_spk;
    result.speaker_match.exact = (best_score == kCodecLayers - 1);
    result.speaker_match.margin = best_score - std::max(second_score, 0);

    // Energy from the layer-2 offset against the decoded speaker's code.
    std::vector<int> energy_votes(frames);
    const int code2 = codes_[best_spk][0] * 8;
    for (int t = 0; t < frames; ++t) {
        energy_votes[t] = clamp_int(grid.at(t, 1) - code2, 0, kProsodyLevels - 1);
    }
    p.energy = lowest_mode(energy_votes, kProsodyLevels);

    return result;
}

const std::array<double, kSpeakerVecDim>& CodecOracle::speaker_vector(int speaker) const {
    if (speaker < 0 || speaker >= kMaxSpeakers)
        throw std::invalid_argument("codec: unknown speaker id");
    return vectors_[speaker];
}

int CodecOracle::layer_code(int speaker, int layer) const {
    if (speaker < 0 || speaker >= kMaxSpeakers)
        throw std::invalid_argument("codec: unknown speaker id");
    if (layer < 2 || layer > kCodecLayers) throw std::invalid_argument("codec: layer out of range");
    return codes_[speaker][layer - 2];
}

namespace {

double cosine_impl(const double* a, const double* b, size_t n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cosine(const std::array<double, kSpeakerVecDim>& a,
              const std::array<double, kSpeakerVecDim>& b) {
    return cosine_impl(a.data(), b.data(), kSpeakerVecDim);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine: dimension mismatch");
    return cosine_impl(a.data(), b.data(), a.size());
}

}  // namespace editlm
