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

#include <string>

#include "editlm/corpus.hpp"
#include "editlm/infer.hpp"
#include "editlm/model.hpp"
#include "editlm/trainer.hpp"

namespace editlm {

/// Everything a run needs, driven by a flat `key = value` config file.
/// Unknown keys are hard errors; every key maps 1:1 to a field here.
struct AppConfig {
    uint64_t codec_seed = 1;

    CorpusConfig corpus;
    ModelConfig model;
    TrainConfig train;
    SamplingParams sampling;

    // annotation pipeline
    double annotate_offdiag = 0.10;
    std::array<double, kEmotionClasses> thresholds = {0.5, 0.5, 0.5, 0.5, 0.5};
    double prosody_sigma = 0.3;

    // evaluation
    int eval_candidates = 5;
    int workers = 1;
};

/// Applies `key = value` lines from a file over the given defaults.
/// '#' starts a comment; blank lines are ignored.
AppConfig load_config(const std::string& path, AppConfig defaults = {});

/// Applies a single assignment (used for config files and CLI overrides).
void apply_config_line(AppConfig& cfg, const std::string& key, const std::string& value);

/// Serializes every key in a stable order; load(dump(x)) == x.
std::string dump_config(const AppConfig& cfg);

}  // namespace editlm
