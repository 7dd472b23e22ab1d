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

#include "editlm/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace editlm {

const Utterance* Corpus::find(const std::string& id) const {
    for (const auto& u : utterances) {
        if (u.id == id) return &u;
    }
    return nullptr;
}

std::vector<int> Corpus::indices_of_speaker(int speaker) const {
    std::vector<int> out;
    for (size_t i = 0; i < utterances.size(); ++i) {
        if (utterances[i].profile.speaker == speaker) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> sample_content(Rng& rng, int len_min, int len_max) {
    const int len = len_min + rng.below_int(len_max - len_min + 1);
    std::vector<int> content(len);
    content[0] = rng.below_int(kContentSymbols);
    for (int i = 1; i < len; ++i) {
        // uniform over the 31 symbols distinct from the previous one
        int c = rng.below_int(kContentSymbols - 1);
        content[i] = (c >= content[i - 1]) ? c + 1 : c;
    }
    return content;
}

Corpus generate_corpus(const CorpusConfig& cfg, const CodecOracle& oracle) {
    if (cfg.n_speakers < 1 || cfg.n_speakers > kMaxSpeakers)
        throw std::invalid_argument("corpus: n_speakers must be in [1,64]");
    if (cfg.n_utts < cfg.n_speakers)
        throw std::invalid_argument("corpus: need at least one utterance per speaker");
    if (cfg.content_len_min < 1 || cfg.content_len_max < cfg.content_len_min)
        throw std::invalid_argument("corpus: bad content length range");

    Corpus corpus;
    corpus.n_speakers = cfg.n_speakers;
    corpus.utterances.reserve(cfg.n_utts);

    Rng rng(Rng::derive(cfg.seed, 0xc0a9));
    int emitted = 0;
    while (emitted < cfg.n_utts) {
        AttributeProfile p;
        p.content = sample_content(rng, cfg.content_len_min, cfg.content_len_max);
        // Cycle speakers through the first n_speakers draws so every speaker
        // exists, then draw uniformly.
        p.speaker = emitted < cfg.n_speakers ? emitted : rng.below_int(cfg.n_speakers);
        p.emotion = rng.categorical(cfg.emotion_weights.data(), kEmotionClasses);
        p.pitch = rng.below_int(kProsodyLevels);
        p.energy = rng.below_int(kProsodyLevels);
        p.speed = rng.below_int(kProsodyLevels);

        if (static_cast<int>(p.content.size()) * frames_per_symbol(p.speed) < cfg.min_frames) {
            continue;  // minimum-duration filter
        }

        Utterance utt;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "-%06d", emitted);
        utt.id = cfg.id_prefix + buf;
        utt.seed = Rng::derive(cfg.seed, 0xacc0, static_cast<uint64_t>(emitted));
        utt.grid = oracle.encode(p, utt.seed);
        utt.profile = std::move(p);
        corpus.utterances.push_back(std::move(utt));
        ++emitted;
    }
    return corpus;
}

LabelerNoise LabelerNoise::uniform_offdiagonal(double off_diagonal) {
    if (off_diagonal < 0.0 || off_diagonal >= 1.0)
        throw std::invalid_argument("labeler noise: off_diagonal must be in [0,1)");
    LabelerNoise noise;
    for (auto& labeler : noise.confusion) {
        for (int truth = 0; truth < kEmotionClasses; ++truth) {
            for (int pred = 0; pred < kEmotionClasses; ++pred) {
                labeler[truth][pred] = (pred == truth)
                                           ? 1.0 - off_diagonal
                                           : off_diagonal / (kEmotionClasses - 1);
            }
        }
    }
    return noise;
}

std::array<LabelerReport, 3> simulate_labelers(const Utterance& utt, const LabelerNoise& noise,
                                               uint64_t seed) {
    for (const auto& labeler : noise.confusion) {
        for (const auto& row : labeler) {
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) throw std::invalid_argument("labeler noise: negative probability");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("labeler noise: confusion row must sum to 1");
        }
    }

    std::array<LabelerReport, 3> reports{};
    const int truth = utt.profile.emotion;
    for (int l = 0; l < 3; ++l) {
        Rng rng(Rng::derive(seed, 0x1abe, static_cast<uint64_t>(l)));
        const auto& row = noise.confusion[l][truth];
        const int predicted = rng.categorical(row.data(), kEmotionClasses);
        const bool correct = predicted == truth;
        reports[l].labeler = static_cast<char>('A' + l);
        reports[l].emotion = predicted;
        reports[l].confidence = correct ? rng.beta(noise.conf_correct_a, noise.conf_correct_b)
                                        : rng.beta(noise.conf_wrong_a, noise.conf_wrong_b);
    }
    return reports;
}

std::optional<int> vote_and_filter(const std::array<LabelerReport, 3>& reports,
                                   const std::array<double, kEmotionClasses>& thresholds) {
    for (double t : thresholds) {
        if (t < 0.0 || t > 1.0)
            throw std::invalid_argument("vote: thresholds must be in [0,1]");
    }
    // Threshold gate on the primary labeler, against its own predicted class.
    const LabelerReport* primary = nullptr;
    for (const auto& r : reports) {
        if (r.labeler == 'A') primary = &r;
    }
    if (primary == nullptr) throw std::invalid_argument("vote: missing primary labeler");
    if (primary->confidence <= thresholds[primary->emotion]) return std::nullopt;

    int counts[kEmotionClasses] = {0};
    for (const auto& r : reports) counts[r.emotion]++;
    for (int e = 0; e < kEmotionClasses; ++e) {
        if (counts[e] >= 2) return e;
    }
    return std::nullopt;  // full disagreement
}

ProsodyStats ProsodyStats::from_samples(std::vector<double> samples) {
    if (samples.size() < 100)
        throw std::invalid_argument("prosody stats: need at least 100 samples");
    std::sort(samples.begin(), samples.end());
    ProsodyStats stats;
    const size_t n = samples.size();
    for (int k = 0; k < 4; ++k) {
        size_t idx = static_cast<size_t>((k + 1) * 0.2 * static_cast<double>(n));
        if (idx >= n) idx = n - 1;
        stats.cuts[k] = samples[idx];
    }
    return stats;
}

int quantize_prosody(double raw, const ProsodyStats& stats) {
    int level = 0;
    for (double cut : stats.cuts) {
        if (cut < raw) ++level;
    }
    return level;
}

const char* triplet_kind_name(TripletKind kind) {
    return kind == TripletKind::kSameSpeaker ? "same_speaker" : "cross_speaker";
}

namespace {

// Explicit target tags where prompt and target differ; fill-in with
// probability `fill_in_prob` where they agree, explicit otherwise.
EditSpec delta_spec(const AttributeProfile& prompt, const AttributeProfile& target,
                    double fill_in_prob, Rng& rng) {
    EditSpec spec;
    auto pick = [&](int prompt_v, int target_v) -> std::optional<int> {
        if (prompt_v != target_v) return target_v;
        if (rng.real01() < fill_in_prob) return std::nullopt;
        return target_v;
    };
    spec.emotion = pick(prompt.emotion, target.emotion);
    spec.pitch = pick(prompt.pitch, target.pitch);
    spec.energy = pick(prompt.energy, target.energy);
    spec.speed = pick(prompt.speed, target.speed);
    return spec;
}

}  // namespace

Triplet sample_same_speaker(const Corpus& corpus, const CodecOracle& oracle, Rng& rng,
                            const SamplerOptions& opt) {
    (void)oracle;
    const int bound = corpus.n_speakers;

    // Speakers with at least two distinct emotion classes are eligible.
    std::vector<std::vector<int>> by_speaker(bound);
    std::vector<int> eligible;
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        const int s = corpus.utterances[i].profile.speaker;
        if (opt.eligible(s)) by_speaker[s].push_back(static_cast<int>(i));
    }
    for (int s = 0; s < bound; ++s) {
        int first_emotion = -1;
        for (int idx : by_speaker[s]) {
            const int e = corpus.utterances[idx].profile.emotion;
            if (first_emotion < 0) first_emotion = e;
            if (e != first_emotion) {
                eligible.push_back(s);
                break;
            }
        }
    }
    if (eligible.empty())
        throw std::runtime_error("sampling: no speaker with two distinct emotion classes");

    const int speaker = eligible[rng.below_int(static_cast<int>(eligible.size()))];
    const auto& pool = by_speaker[speaker];
    const int prompt = pool[rng.below_int(static_cast<int>(pool.size()))];
    std::vector<int> others;
    for (int idx : pool) {
        if (corpus.utterances[idx].profile.emotion != corpus.utterances[prompt].profile.emotion)
            others.push_back(idx);
    }
    const int target = others[rng.below_int(static_cast<int>(others.size()))];

    Triplet t;
    t.prompt = prompt;
    t.target = target;
    t.kind = TripletKind::kSameSpeaker;
    t.spec = delta_spec(corpus.utterances[prompt].profile, corpus.utterances[target].profile,
                        opt.fill_in_prob, rng);
    return t;
}

Triplet sample_cross_speaker(const Corpus& corpus, const CodecOracle& oracle, Rng& rng,
                             const SamplerOptions& opt) {
    const int bound = corpus.n_speakers;
    if (bound < 2) throw std::runtime_error("sampling: need at least two speakers");

    std::vector<std::vector<int>> by_speaker(bound);
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        const int s = corpus.utterances[i].profile.speaker;
        if (opt.eligible(s)) by_speaker[s].push_back(static_cast<int>(i));
    }
    // Target speaker needs a second utterance to serve as the
    // content-independent speaker reference.
    std::vector<int> eligible_targets;
    for (int s = 0; s < bound; ++s) {
        if (by_speaker[s].size() >= 2) eligible_targets.push_back(s);
    }
    if (eligible_targets.empty())
        throw std::runtime_error("sampling: no target speaker with two utterances");

    const int target_spk = eligible_targets[rng.below_int(static_cast<int>(eligible_targets.size()))];
    const auto& target_pool = by_speaker[target_spk];
    const int target = target_pool[rng.below_int(static_cast<int>(target_pool.size()))];

    std::vector<int> refs;
    for (int idx : target_pool) {
        if (corpus.utterances[idx].profile.content != corpus.utterances[target].profile.content)
            refs.push_back(idx);
    }
    if (refs.empty())
        throw std::runtime_error("sampling: target speaker has no content-independent reference");
    const int ref = refs[rng.below_int(static_cast<int>(refs.size()))];

    std::vector<int> prompts;
    for (int s = 0; s < bound; ++s) {
        if (s == target_spk) continue;
        for (int idx : by_speaker[s]) prompts.push_back(idx);
    }
    if (prompts.empty()) throw std::runtime_error("sampling: no prompt from another speaker");
    const int prompt = prompts[rng.below_int(static_cast<int>(prompts.size()))];

    Triplet t;
    t.prompt = prompt;
    t.target = target;
    t.ref = ref;
    t.kind = TripletKind::kCrossSpeaker;
    t.spec = delta_spec(corpus.utterances[prompt].profile, corpus.utterances[target].profile,
                        opt.fill_in_prob, rng);
    t.spec.speaker = oracle.speaker_vector(corpus.utterances[ref].profile.speaker);
    return t;
}

std::vector<Triplet> make_pairs(const Corpus& corpus, const CodecOracle& oracle, int n,
                                double same_weight, double cross_weight, uint64_t seed,
                                const SamplerOptions& opt) {
    if (same_weight < 0.0 || cross_weight < 0.0 || same_weight + cross_weight <= 0.0)
        throw std::invalid_argument("make_pairs: bad mixture weights");
    const double p_same = same_weight / (same_weight + cross_weight);

    std::vector<Triplet> pairs;
    pairs.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, 0x9a12, static_cast<uint64_t>(i)));
        if (rng.real01() < p_same) {
            pairs.push_back(sample_same_speaker(corpus, oracle, rng, opt));
        } else {
            pairs.push_back(sample_cross_speaker(corpus, oracle, rng, opt));
        }
    }
    return pairs;
}

void annotate_corpus(Corpus& corpus, const LabelerNoise& noise,
                     const std::array<double, kEmotionClasses>& thresholds, double prosody_sigma,
                     uint64_t seed) {
    // Corpus-wide raw estimate pools define the quantile bins.
    std::vector<double> raw_pitch, raw_energy, raw_speed;
    raw_pitch.reserve(corpus.utterances.size());
    raw_energy.reserve(corpus.utterances.size());
    raw_speed.reserve(corpus.utterances.size());
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        Rng rng(Rng::derive(seed, 0x9050, static_cast<uint64_t>(i)));
        const auto& p = corpus.utterances[i].profile;
        raw_pitch.push_back(p.pitch + rng.normal(0.0, prosody_sigma));
        raw_energy.push_back(p.energy + rng.normal(0.0, prosody_sigma));
        raw_speed.push_back(p.speed + rng.normal(0.0, prosody_sigma));
    }
    const ProsodyStats pitch_stats = ProsodyStats::from_samples(raw_pitch);
    const ProsodyStats energy_stats = ProsodyStats::from_samples(raw_energy);
    const ProsodyStats speed_stats = ProsodyStats::from_samples(raw_speed);

    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        Utterance& utt = corpus.utterances[i];
        Annotation ann;
        ann.reports =
            simulate_labelers(utt, noise, Rng::derive(seed, 0xa110, static_cast<uint64_t>(i)));
        ann.accepted_label = vote_and_filter(ann.reports, thresholds);
        ann.pitch = quantize_prosody(raw_pitch[i], pitch_stats);
        ann.energy = quantize_prosody(raw_energy[i], energy_stats);
        ann.speed = quantize_prosody(raw_speed[i], speed_stats);
        utt.annotation = ann;
    }
}

}  // namespace editlm
