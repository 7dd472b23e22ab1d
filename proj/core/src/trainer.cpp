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

#include "editlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace editlm {

const char* stage_name(Stage stage) { return stage == Stage::kPretrain ? "pretrain" : "edit"; }

void TrainConfig::validate() const {
    if (peak_lr <= 0.0) throw std::invalid_argument("train config: peak_lr <= 0");
    if (warmup_steps < 1) throw std::invalid_argument("train config: warmup_steps < 1");
    if (warmup_steps >= pretrain_steps + edit_steps)
        throw std::invalid_argument("train config: warmup must be shorter than training");
    if (batch_tokens < 1) throw std::invalid_argument("train config: batch_tokens < 1");
    const double mix_sum = mix_same + mix_cross + mix_tts;
    if (mix_same < 0 || mix_cross < 0 || mix_tts < 0 || std::abs(mix_sum - 1.0) > 1e-9)
        throw std::invalid_argument("train config: mixture weights must sum to 1");
    if (clip_norm <= 0.0) throw std::invalid_argument("train config: clip_norm <= 0");
    if (holdout_speakers < 0) throw std::invalid_argument("train config: holdout_speakers < 0");
}

double lr_at(const TrainConfig& cfg, int64_t step) {
    if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(cfg.warmup_steps);
    return cfg.peak_lr * std::min(s / w, std::sqrt(w / s));
}

std::string format_step_log(const StepLog& log) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "step=%lld stage=%s loss_ar=%.9g loss_nar=%.9g lr=%.9g mixture_kind=%s",
                  static_cast<long long>(log.step), stage_name(log.stage), log.loss_ar,
                  log.loss_nar, log.lr, log.mixture_kind.c_str());
    return buf;
}

TrainingExample make_training_example(const ModelConfig& cfg, const Corpus& corpus,
                                      const Triplet& triplet, int nar_layer) {
    const Utterance& prompt = corpus.utterances.at(triplet.prompt);
    const Utterance& target = corpus.utterances.at(triplet.target);

    std::vector<int32_t> a1(prompt.grid.frames());
    for (int t = 0; t < prompt.grid.frames(); ++t) a1[t] = prompt.grid.at(t, 0);
    const ComposedSequence seq =
        compose(triplet.spec, prompt.transcript(), target.transcript(), a1);

    std::vector<int32_t> y1(target.grid.frames());
    for (int t = 0; t < target.grid.frames(); ++t) y1[t] = target.grid.at(t, 0);

    TrainingExample ex;
    ex.ar = make_ar_example(cfg, seq, y1);
    ex.nar = make_nar_example(cfg, seq, prompt.grid, target.grid, nar_layer);
    return ex;
}

TrainingExample make_tts_example(const ModelConfig& cfg, const Utterance& utt, int split_symbol,
                                 int nar_layer) {
    const int len = static_cast<int>(utt.profile.content.size());
    if (split_symbol < 1 || split_symbol >= len)
        throw std::invalid_argument("trainer: bad split point");
    const int r = frames_per_symbol(utt.profile.speed);
    const int split_frame = split_symbol * r;
    const int frames = utt.grid.frames();

    std::vector<int> x1(utt.profile.content.begin(), utt.profile.content.begin() + split_symbol);
    std::vector<int> x2(utt.profile.content.begin() + split_symbol, utt.profile.content.end());

    CodecGrid prompt_grid, target_grid;
    prompt_grid.tokens.assign(utt.grid.tokens.begin(),
                              utt.grid.tokens.begin() + split_frame * kCodecLayers);
    target_grid.tokens.assign(utt.grid.tokens.begin() + split_frame * kCodecLayers,
                              utt.grid.tokens.begin() + frames * kCodecLayers);

    std::vector<int32_t> a1(split_frame);
    for (int t = 0; t < split_frame; ++t) a1[t] = prompt_grid.at(t, 0);
    EditSpec spec = build_spec(Task::kZeroShotTts, {});
    const ComposedSequence seq = compose(spec, x1, x2, a1);

    std::vector<int32_t> y1(target_grid.frames());
    for (int t = 0; t < target_grid.frames(); ++t) y1[t] = target_grid.at(t, 0);

    TrainingExample ex;
    ex.ar = make_ar_example(cfg, seq, y1);
    ex.nar = make_nar_example(cfg, seq, prompt_grid, target_grid, nar_layer);
    return ex;
}

namespace {

struct MixturePools {
    std::vector<int> same;   // indices into pairs
    std::vector<int> cross;
    std::vector<int> train_utts;  // corpus indices outside the speaker holdout
};

MixturePools build_pools(const Corpus& corpus, const std::vector<Triplet>* pairs,
                         const TrainConfig& cfg, const TrainStageOptions& options) {
    MixturePools pools;
    const int holdout_begin = options.holdout_begin >= 0
                                  ? options.holdout_begin
                                  : corpus.n_speakers - cfg.holdout_speakers;
    const int holdout_end = options.holdout_end >= 0 ? options.holdout_end : corpus.n_speakers;
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        const int s = corpus.utterances[i].profile.speaker;
        if (s < holdout_begin || s >= holdout_end)
            pools.train_utts.push_back(static_cast<int>(i));
    }
    if (pairs != nullptr) {
        for (size_t i = 0; i < pairs->size(); ++i) {
            if ((*pairs)[i].kind == TripletKind::kSameSpeaker)
                pools.same.push_back(static_cast<int>(i));
            else
                pools.cross.push_back(static_cast<int>(i));
        }
    }
    return pools;
}

void adam_update(ModelBundle& bundle, AdamState& adam, const TrainConfig& cfg, double lr) {
    adam.t += 1;
    const float b1 = static_cast<float>(cfg.adam_beta1);
    const float b2 = static_cast<float>(cfg.adam_beta2);
    const float eps = static_cast<float>(cfg.adam_eps);
    const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.t));
    const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.t));
    const float step_size = static_cast<float>(lr * std::sqrt(bias2) / bias1);
    const float wd = static_cast<float>(lr * cfg.weight_decay);

    // Gradient clipping at a global norm over every parameter.
    double norm2 = 0.0;
    bundle.visit([&](Tensor<float>& t) { norm2 += static_cast<double>(t.g.squaredNorm()); });
    const double norm = std::sqrt(norm2);
    const float clip =
        norm > cfg.clip_norm ? static_cast<float>(cfg.clip_norm / norm) : 1.0f;

    bundle.visit([&](Tensor<float>& t) {
        Mat<float>& m = adam.m[t.name];
        Mat<float>& v = adam.v[t.name];
        if (m.size() == 0) {
            m.setZero(t.g.rows(), t.g.cols());
            v.setZero(t.g.rows(), t.g.cols());
        }
        Mat<float> g = t.g * clip;
        m = b1 * m + (1.0f - b1) * g;
        v = b2 * v.array().matrix() + (1.0f - b2) * g.cwiseProduct(g);
        // Decoupled weight decay; bias and normalization tensors are excluded.
        if (t.decay && cfg.weight_decay > 0.0) t.v -= wd * t.v;
        t.v.array() -= step_size * m.array() / (v.array().sqrt() + eps);
    });
}

}  // namespace

void train_stage(Stage stage, ModelBundle& bundle, AdamState& adam, const Corpus& corpus,
                 const CodecOracle& oracle, const TrainConfig& cfg,
                 const TrainStageOptions& options) {
    (void)oracle;
    cfg.validate();
    const int total_steps = stage == Stage::kPretrain ? cfg.pretrain_steps : cfg.edit_steps;
    const uint64_t stage_tag = stage == Stage::kPretrain ? 0x11 : 0x22;

    if (stage == Stage::kEdit && (cfg.mix_same > 0 || cfg.mix_cross > 0) &&
        (options.pairs == nullptr || options.pairs->empty())) {
        throw std::runtime_error("trainer: edit stage requested without triplets");
    }
    MixturePools pools = build_pools(corpus, options.pairs, cfg, options);
    if (pools.train_utts.empty()) throw std::runtime_error("trainer: no training utterances");

    double mix_same = cfg.mix_same, mix_cross = cfg.mix_cross, mix_tts = cfg.mix_tts;
    if (cfg.same_speaker_only) {
        mix_same += mix_cross;
        mix_cross = 0.0;
    }
    if (stage == Stage::kEdit && mix_cross > 0 && pools.cross.empty())
        throw std::runtime_error("trainer: mixture requests cross-speaker pairs but none exist");
    if (stage == Stage::kEdit && mix_same > 0 && pools.same.empty())
        throw std::runtime_error("trainer: mixture requests same-speaker pairs but none exist");

    for (int64_t step = options.start_step + 1; step <= total_steps; ++step) {
        Rng rng(Rng::derive(cfg.seed, stage_tag, static_cast<uint64_t>(step)));

        std::string kind;
        ARBatch ar_batch;
        NARBatch nar_batch;
        int tokens = 0;
        if (stage == Stage::kPretrain) {
            kind = "plain_tts";
        } else {
            const double weights[3] = {mix_same, mix_cross, mix_tts};
            const int pick = rng.categorical(weights, 3);
            kind = pick == 0 ? "same_speaker" : (pick == 1 ? "cross_speaker" : "plain_tts");
        }

        while (tokens < cfg.batch_tokens) {
            const int nar_layer = 2 + rng.below_int(kCodecLayers - 1);
            TrainingExample ex;
            if (kind == "plain_tts") {
                const int idx =
                    pools.train_utts[rng.below_int(static_cast<int>(pools.train_utts.size()))];
                const Utterance& utt = corpus.utterances[idx];
                const int len = static_cast<int>(utt.profile.content.size());
                const int split = 1 + rng.below_int(len - 1);
                ex = make_tts_example(bundle.cfg, utt, split, nar_layer);
            } else {
                const auto& pool = kind == "same_speaker" ? pools.same : pools.cross;
                const int idx = pool[rng.below_int(static_cast<int>(pool.size()))];
                ex = make_training_example(bundle.cfg, corpus, (*options.pairs)[idx], nar_layer);
            }
            tokens += static_cast<int>(ex.ar.rows.size());
            ar_batch.items.push_back(std::move(ex.ar));
            nar_batch.items.push_back(std::move(ex.nar));
        }

        const double lr = lr_at(cfg, step);
        bundle.zero_grads();
        Rng drop_ar(Rng::derive(cfg.seed, stage_tag, static_cast<uint64_t>(step), 0xd0));
        Rng drop_nar(Rng::derive(cfg.seed, stage_tag, static_cast<uint64_t>(step), 0xd1));
        double loss_ar = 0.0, loss_nar = 0.0;
        if (options.workers >= 2) {
            // The two parameter sets are disjoint except for the speaker
            // projection; NAR accumulates into a scratch copy merged after the
            // join. Bit-reproducible for a fixed worker count.
            SharedParams<float> scratch;
            scratch.spk_w = bundle.shared.spk_w;
            scratch.spk_b = bundle.shared.spk_b;
            scratch.spk_w.zero_grad();
            scratch.spk_b.zero_grad();
            bundle.nar.set_shared(&scratch);
            std::thread nar_thread(
                [&] { loss_nar = bundle.nar.loss(nar_batch, /*backward=*/true, &drop_nar); });
            loss_ar = bundle.ar.loss(ar_batch, /*backward=*/true, &drop_ar);
            nar_thread.join();
            bundle.nar.set_shared(&bundle.shared);
            bundle.shared.spk_w.g += scratch.spk_w.g;
            bundle.shared.spk_b.g += scratch.spk_b.g;
        } else {
            loss_ar = bundle.ar.loss(ar_batch, /*backward=*/true, &drop_ar);
            loss_nar = bundle.nar.loss(nar_batch, /*backward=*/true, &drop_nar);
        }
        adam_update(bundle, adam, cfg, lr);

        StepLog log{step, stage, loss_ar, loss_nar, lr, kind};
        if (options.metrics != nullptr) *options.metrics << format_step_log(log) << '\n';
        if (options.on_step) options.on_step(log);

        if (!options.checkpoint_path.empty() &&
            (step % cfg.checkpoint_every == 0 || step == total_steps)) {
            CheckpointMeta meta;
            meta.stage = stage_name(stage);
            meta.step = step;
            meta.codec_seed = oracle.table_seed();
            meta.train_seed = cfg.seed;
            save_checkpoint(options.checkpoint_path, bundle, &adam, meta);
        }
    }
}

}  // namespace editlm
