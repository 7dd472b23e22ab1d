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

#include <map>
#include <string>
#include <vector>

#include "editlm/infer.hpp"
#include "editlm/model.hpp"

namespace editlm {

/// Levenshtein distance between two symbol sequences.
int levenshtein(const std::vector<int>& a, const std::vector<int>& b);

/// Normalized edit distance between the decoded content of a generated grid
/// and the requested content (normalized by the target length).
double content_error_rate(const CodecGrid& generated, const std::vector<int>& target_content,
                          const CodecOracle& oracle);

/// Cosine similarity between the decoded speaker of a grid and a reference
/// speaker id, via the oracle's speaker vectors. Equals 1.0 exactly when the
/// identities match.
double sim_score(const CodecGrid& generated, int reference_speaker, const CodecOracle& oracle);

enum class TaskMode { kEasy, kHard, kVoiceConversion };

struct EvalItem {
    Task task = Task::kStyleEdit;
    int prompt_index = 0;
    std::vector<int> x2;
    EditSpec spec;
    int target_speaker = -1;  // voice conversion only
    int ref_index = -1;       // utterance the speaker vector came from
};

struct EvalRecord {
    EvalItem item;
    bool ok = false;  // a non-empty grid came back
    bool truncated = false;
    AttributeProfile decoded;
    bool speaker_exact = false;
    int speaker_margin = 0;
    int emotion_margin = 0;
    double cer = 1.0;
    double sim_to_prompt = -1.0;
    double sim_to_target = -1.0;  // voice conversion only
};

/// Easy: all-neutral prompts from the speaker holdout, targets balanced over
/// the four non-neutral emotions. Hard: exactly 80% of prompts conflict with
/// the target emotion, targets balanced over all five. Voice conversion:
/// holdout prompts, training-speaker targets.
std::vector<EvalItem> build_task(const Corpus& corpus, const CodecOracle& oracle, TaskMode mode,
                                 int n, int holdout_speakers, uint64_t seed);

/// Generates (best-of-`candidates` under the rank-sum rule) and scores every
/// item. Deterministic for any worker count: item i uses the seed stream
/// derived from (sampling.seed, i).
std::vector<EvalRecord> run_task(const Corpus& corpus, const CodecOracle& oracle,
                                 const ModelBundle& bundle, const std::vector<EvalItem>& items,
                                 const SamplingParams& sampling, int candidates, int workers = 1);

/// Per-attribute accuracy. Explicit instances score the decoded attribute
/// against the instructed tag; fill-in instances score it against the
/// prompt's value (retention). The two sets are disjoint by construction.
double edit_accuracy(const std::vector<EvalRecord>& records, const Corpus& corpus,
                     const std::string& attribute, bool explicit_instances);

struct Summary {
    std::map<std::string, double> metrics;
};

Summary summarize(const std::vector<EvalRecord>& records, const Corpus& corpus, TaskMode mode);

struct DirectionalPoint {
    double p = 0.0;
    double accuracy = 0.0;
};

/// For each top-p value, generates Low- vs High-instructed pairs from the
/// same source and reports the fraction where the decoded ordinal follows the
/// instruction direction (ties broken by a seeded coin flip).
std::vector<DirectionalPoint> directional_accuracy(const Corpus& corpus, const CodecOracle& oracle,
                                                   const ModelBundle& bundle,
                                                   const std::string& attribute, int low_level,
                                                   int high_level,
                                                   const std::vector<double>& p_values,
                                                   int n_pairs, int holdout_speakers,
                                                   SamplingParams sampling, int workers = 1);

void write_report(const std::string& path, const std::vector<EvalRecord>& records,
                  const Corpus& corpus, const Summary& summary);

struct TradeoffPoint {
    double p = 0.0;
    double cer_percent = 0.0;
    double acc_percent = 0.0;
};

/// Renders the content-error vs edit-accuracy trade-off curve as an SVG.
void write_tradeoff_svg(const std::string& path, const std::vector<TradeoffPoint>& points);

}  // namespace editlm
