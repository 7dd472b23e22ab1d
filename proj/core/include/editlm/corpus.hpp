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
#include <unordered_map>
#include <vector>

#include "editlm/codec.hpp"
#include "editlm/sequencer.hpp"

namespace editlm {

struct LabelerReport {
    char labeler = 'A';  // 'A' is the primary model whose confidence is gated
    int emotion = 0;
    double confidence = 0.0;
};

struct Annotation {
    std::array<LabelerReport, 3> reports{};
    std::optional<int> accepted_label;  // nullopt when the vote rejected it
    int pitch = 0;                      // quantized from noisy raw estimates
    int energy = 0;
    int speed = 0;
};

struct Utterance {
    std::string id;
    AttributeProfile profile;
    CodecGrid grid;
    uint64_t seed = 0;  // per-utterance encode seed
    std::optional<Annotation> annotation;

    const std::vector<int>& transcript() const { return profile.content; }
    int duration_frames() const { return grid.frames(); }
};

struct Corpus {
    std::vector<Utterance> utterances;
    int n_speakers = 0;

    const Utterance* find(const std::string& id) const;
    std::vector<int> indices_of_speaker(int speaker) const;
};

struct CorpusConfig {
    int n_utts = 1000;
    int n_speakers = 16;
    uint64_t seed = 1;
    // Neutral-heavy by default, with Sad the most frequent non-neutral class.
    std::array<double, kEmotionClasses> emotion_weights = {0.60, 0.10, 0.15, 0.06, 0.09};
    int content_len_min = 4;
    int content_len_max = 12;
    int min_frames = 8;  // minimum-duration filter
    std::string id_prefix = "utt";
};

Corpus generate_corpus(const CorpusConfig& cfg, const CodecOracle& oracle);

/// Simulated labeler behaviour: a per-labeler confusion row for the true
/// emotion plus a Beta confidence model that peaks higher on correct calls.
struct LabelerNoise {
    // confusion[labeler][truth][predicted]
    std::array<std::array<std::array<double, kEmotionClasses>, kEmotionClasses>, 3> confusion{};
    double conf_correct_a = 8.0, conf_correct_b = 2.0;
    double conf_wrong_a = 2.0, conf_wrong_b = 3.0;

    /// All three labelers correct with probability 1-off_diagonal, errors
    /// spread uniformly over the other classes.
    static LabelerNoise uniform_offdiagonal(double off_diagonal);
    static LabelerNoise defaults() { return uniform_offdiagonal(0.10); }
};

std::array<LabelerReport, 3> simulate_labelers(const Utterance& utt, const LabelerNoise& noise,
                                               uint64_t seed);

/// Threshold-then-vote: reject unless the primary labeler ('A') clears the
/// confidence threshold of its own predicted class AND at least two labelers
/// agree; the accepted label is the majority class.
std::optional<int> vote_and_filter(const std::array<LabelerReport, 3>& reports,
                                   const std::array<double, kEmotionClasses>& thresholds);

/// Corpus quantile cutpoints at 20/40/60/80% used to bin raw prosody
/// estimates into the five ordinal levels.
struct ProsodyStats {
    std::array<double, 4> cuts{};

    static ProsodyStats from_samples(std::vector<double> samples);  // needs >= 100
};

/// Level = number of cutpoints strictly below the raw value, so boundary
/// values fall to the lower level.
int quantize_prosody(double raw, const ProsodyStats& stats);

enum class TripletKind { kSameSpeaker, kCrossSpeaker };

const char* triplet_kind_name(TripletKind kind);

/// (prompt, edit spec, target) training record. Indices refer into the
/// corpus the triplet was sampled from; `ref` is set for cross-speaker
/// triplets only and names the utterance the speaker vector was derived from.
struct Triplet {
    int prompt = 0;
    int target = 0;
    TripletKind kind = TripletKind::kSameSpeaker;
    EditSpec spec;
    std::optional<int> ref;
};

struct SamplerOptions {
    double fill_in_prob = 0.7;  // chance of fill-in where prompt == target
    int max_speaker = -1;       // exclusive bound on eligible speakers; -1 = all
    int exclude_begin = -1;     // half-open ineligible speaker range
    int exclude_end = -1;       //   (the evaluation holdout)

    bool eligible(int speaker) const {
        if (max_speaker >= 0 && speaker >= max_speaker) return false;
        return speaker < exclude_begin || speaker >= exclude_end;
    }
};

Triplet sample_same_speaker(const Corpus& corpus, const CodecOracle& oracle, Rng& rng,
                            const SamplerOptions& opt = {});
Triplet sample_cross_speaker(const Corpus& corpus, const CodecOracle& oracle, Rng& rng,
                             const SamplerOptions& opt = {});

/// Draws n triplets with the given same/cross mix.
std::vector<Triplet> make_pairs(const Corpus& corpus, const CodecOracle& oracle, int n,
                                double same_weight, double cross_weight, uint64_t seed,
                                const SamplerOptions& opt = {});

/// Annotates every utterance in place (labeler reports, vote, prosody
/// quantization). Raw prosody estimates are the true level plus Gaussian
/// noise so the quantile path is exercised nontrivially.
void annotate_corpus(Corpus& corpus, const LabelerNoise& noise,
                     const std::array<double, kEmotionClasses>& thresholds, double prosody_sigma,
                     uint64_t seed);

/// Random content of the corpus shape (no adjacent duplicate symbols).
std::vector<int> sample_content(Rng& rng, int len_min, int len_max);

}  // namespace editlm
