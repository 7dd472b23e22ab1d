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

#include "editlm/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "editlm/eval.hpp"

namespace editlm {

std::vector<double> top_p_filter(const std::vector<double>& probs, double p) {
    if (p <= 0.0 || p > 1.0) throw std::invalid_argument("top_p: p must be in (0,1]");
    if (probs.empty()) throw std::invalid_argument("top_p: empty distribution");
    double sum = 0.0;
    for (double v : probs) {
        if (v < 0.0) throw std::invalid_argument("top_p: negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("top_p: input does not sum to 1");

    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });

    size_t keep = order.size();
    double cum = 0.0;
    for (size_t i = 0; i < order.size(); ++i) {
        cum += probs[order[i]];
        if (cum >= p) {
            keep = i + 1;
            break;
        }
    }

    std::vector<double> out(probs.size(), 0.0);
    double mass = 0.0;
    for (size_t i = 0; i < keep; ++i) mass += probs[order[i]];
    for (size_t i = 0; i < keep; ++i) out[order[i]] = probs[order[i]] / mass;
    return out;
}

void repetition_penalize(std::vector<float>& logits, const std::vector<int32_t>& history,
                         int window, double rho) {
    if (rho < 1.0) throw std::invalid_argument("repetition penalty: rho must be >= 1");
    if (rho == 1.0 || history.empty()) return;
    const size_t begin = history.size() > static_cast<size_t>(window)
                             ? history.size() - static_cast<size_t>(window)
                             : 0;
    std::vector<bool> in_window(logits.size(), false);
    for (size_t i = begin; i < history.size(); ++i) {
        const int32_t tok = history[i];
        if (tok >= 0 && tok < static_cast<int32_t>(logits.size())) in_window[tok] = true;
    }
    const float r = static_cast<float>(rho);
    for (size_t i = 0; i < logits.size(); ++i) {
        if (!in_window[i]) continue;
        logits[i] = logits[i] > 0.0f ? logits[i] / r : logits[i] * r;
    }
}

namespace {

std::vector<double> softmax_double(const std::vector<float>& logits) {
    double m = logits[0];
    for (float v : logits) m = std::max(m, static_cast<double>(v));
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits[i]) - m);
        sum += probs[i];
    }
    for (double& v : probs) v /= sum;
    return probs;
}

int sample_from(const std::vector<double>& probs, Rng& rng) {
    const double r = rng.real01();
    double acc = 0.0;
    int last_nonzero = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_nonzero = static_cast<int>(i);
        acc += probs[i];
        if (r < acc) return static_cast<int>(i);
    }
    return last_nonzero;
}

int argmax_logits(const std::vector<float>& logits) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace

GenerateResult generate(const ModelBundle& bundle, const EditSpec& spec,
                        const std::vector<int>& x1, const std::vector<int>& x2,
                        const CodecGrid& prompt_grid, const SamplingParams& sampling) {
    const ModelConfig& cfg = bundle.cfg;
    std::vector<int32_t> a1(prompt_grid.frames());
    for (int t = 0; t < prompt_grid.frames(); ++t) a1[t] = prompt_grid.at(t, 0);
    const ComposedSequence seq = compose(spec, x1, x2, a1);

    ArExample prompt;
    prompt.speaker = seq.speaker;
    prompt.spk_slot_pos = 0;
    prompt.prefix_end = ar_mask(seq, 0, cfg.full_prefix_bidirectional).prefix_end;
    prompt.loss_start = 0;
    prompt.targets = {0};  // unused by prime()
    for (int32_t id : seq.ids) prompt.rows.push_back(id < TokenVocabulary::kCodecBase
                                                         ? id
                                                         : cfg.text_vocab +
                                                               (id - TokenVocabulary::kCodecBase));

    Rng rng(Rng::derive(sampling.seed, 0x9e4e));
    auto state = bundle.ar.prime(prompt);

    std::vector<int32_t> layer1;
    bool truncated = true;
    const int budget = std::min(sampling.max_frames,
                                cfg.max_seq_len - static_cast<int>(seq.ids.size()));
    for (int step = 0; step < budget; ++step) {
        std::vector<float> logits(state.last_logits.data(),
                                  state.last_logits.data() + state.last_logits.size());
        repetition_penalize(logits, layer1, sampling.window, sampling.rho);

        int choice;
        if (sampling.temperature <= 0.0) {
            choice = argmax_logits(logits);
        } else {
            if (sampling.temperature != 1.0) {
                const float inv = static_cast<float>(1.0 / sampling.temperature);
                for (float& v : logits) v *= inv;
            }
            std::vector<double> probs = softmax_double(logits);
            probs = top_p_filter(probs, sampling.p);
            choice = sample_from(probs, rng);
        }
        if (choice == cfg.end_class()) {
            truncated = false;
            break;
        }
        layer1.push_back(choice);
        bundle.ar.step(state, choice);
    }

    GenerateResult result;
    result.truncated = truncated;
    const int frames = static_cast<int>(layer1.size());
    if (frames == 0) return result;

    result.grid.tokens.assign(static_cast<size_t>(frames) * kCodecLayers, 0);
    for (int t = 0; t < frames; ++t) result.grid.at(t, 0) = layer1[t];

    // NAR completion, greedy layer by layer.
    for (int j = 2; j <= kCodecLayers; ++j) {
        NarExample ex = make_nar_example(cfg, seq, prompt_grid, result.grid, j);
        Mat<float> logits = bundle.nar.forward(ex);
        for (int t = 0; t < frames; ++t) {
            int best = 0;
            for (int c = 1; c < cfg.codec_vocab; ++c) {
                if (logits(t, c) > logits(t, best)) best = c;
            }
            result.grid.at(t, j - 1) = best;
        }
    }
    return result;
}

int rank_sum_select(const std::vector<std::pair<double, double>>& cer_and_sim) {
    const int n = static_cast<int>(cer_and_sim.size());
    if (n == 0) throw std::invalid_argument("rank_sum_select: empty candidate list");

    // Competition ranking: ties share the better rank, so a candidate that is
    // at least as good as every other on both criteria always wins.
    std::vector<int> rank_cer(n), rank_sim(n);
    for (int i = 0; i < n; ++i) {
        int better_cer = 0, better_sim = 0;
        for (int j = 0; j < n; ++j) {
            better_cer += cer_and_sim[j].first < cer_and_sim[i].first;
            better_sim += cer_and_sim[j].second > cer_and_sim[i].second;
        }
        rank_cer[i] = 1 + better_cer;
        rank_sim[i] = 1 + better_sim;
    }
    int best = 0;
    for (int i = 1; i < n; ++i) {
        const int si = rank_cer[i] + rank_sim[i];
        const int sb = rank_cer[best] + rank_sim[best];
        if (si < sb) {
            best = i;
        } else if (si == sb) {
            if (cer_and_sim[i].first < cer_and_sim[best].first) best = i;
            // equal rank sum and equal content error: keep the earlier index
        }
    }
    return best;
}

const CodecGrid& best_of_n(const std::vector<CodecGrid>& candidates,
                           const std::vector<int>& target_content, const SpeakerVec& ref_speaker,
                           const CodecOracle& oracle, int n) {
    if (candidates.empty() || n < 1) throw std::invalid_argument("best_of_n: empty candidate list");
    const int count = std::min<int>(n, static_cast<int>(candidates.size()));

    std::vector<std::pair<double, double>> metrics(count);
    for (int i = 0; i < count; ++i) {
        if (candidates[i].tokens.empty()) {
            metrics[i] = {2.0, -2.0};  // worse than any decodable candidate
            continue;
        }
        const DecodeResult decoded = oracle.decode(candidates[i]);
        metrics[i].first = content_error_rate(candidates[i], target_content, oracle);
        metrics[i].second = cosine(oracle.speaker_vector(decoded.profile.speaker), ref_speaker);
    }
    return candidates[rank_sum_select(metrics)];
}

}  // namespace editlm
