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

#include <functional>
#include <iosfwd>
#include <string>

#include "editlm/checkpoint.hpp"
#include "editlm/corpus.hpp"
#include "editlm/model.hpp"

namespace editlm {

enum class Stage { kPretrain, kEdit };

const char* stage_name(Stage stage);

struct TrainConfig {
    double peak_lr = 5e-4;
    int warmup_steps = 500;
    int pretrain_steps = 3000;
    int edit_steps = 5000;
    int batch_tokens = 2560;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-9;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    uint64_t seed = 1;
    double mix_same = 0.5;
    double mix_cross = 0.5;
    double mix_tts = 0.0;
    bool same_speaker_only = false;    // Ablation-Task: drop cross-speaker pairs
    bool data_mix_variant = false;     // Ablation-Data: train on the mixed corpus
    int checkpoint_every = 1000;
    int holdout_speakers = 4;
    // Chance that an attribute matching between prompt and target is replaced
    // by the fill-in tag. Low rates starve the "rely on the prompt" signal
    // during the edit stage and the model forgets how to copy attributes.
    double fill_in_prob = 0.7;

    void validate() const;
};

/// Inverse square-root schedule with linear warmup:
/// lr = peak * min(step/warmup, sqrt(warmup/step)); step counts from 1.
double lr_at(const TrainConfig& cfg, int64_t step);

struct StepLog {
    int64_t step = 0;
    Stage stage = Stage::kPretrain;
    double loss_ar = 0.0;
    double loss_nar = 0.0;
    double lr = 0.0;
    std::string mixture_kind;
};

struct TrainStageOptions {
    const std::vector<Triplet>* pairs = nullptr;   // required for the edit stage
    std::ostream* metrics = nullptr;               // line-delimited step records
    std::string checkpoint_path;                   // written every checkpoint_every steps
    int64_t start_step = 0;                        // resume point within the stage
    std::function<void(const StepLog&)> on_step;   // optional observer
    int workers = 1;  // >= 2 runs the AR and NAR backward passes concurrently
    // Holdout speaker range; -1 derives [n_speakers - holdout, n_speakers)
    // from the corpus. Callers merging corpora pass the base range explicitly.
    int holdout_begin = -1;
    int holdout_end = -1;
};

/// Runs one training stage. Pretrain draws zero-shot TTS continuations
/// (one utterance split into prompt and target); the edit stage draws
/// Delta-Pair triplets with the configured same/cross mixture. Each step
/// updates AR and NAR parameters together (they share the speaker
/// projection), one optimizer step over the union of parameters.
void train_stage(Stage stage, ModelBundle& bundle, AdamState& adam, const Corpus& corpus,
                 const CodecOracle& oracle, const TrainConfig& cfg,
                 const TrainStageOptions& options);

/// One formatted metrics line, the exact format written to the metrics log.
std::string format_step_log(const StepLog& log);

/// Builds the teacher-forced AR/NAR example pair for a triplet.
struct TrainingExample {
    ArExample ar;
    NarExample nar;
};
TrainingExample make_training_example(const ModelConfig& cfg, const Corpus& corpus,
                                      const Triplet& triplet, int nar_layer);

/// Zero-shot TTS continuation example: utterance split at symbol k.
TrainingExample make_tts_example(const ModelConfig& cfg, const Utterance& utt, int split_symbol,
                                 int nar_layer);

}  // namespace editlm
