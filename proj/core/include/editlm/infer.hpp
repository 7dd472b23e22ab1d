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

#include "editlm/model.hpp"

namespace editlm {

/// Nucleus filter: keeps the smallest probability-sorted prefix with
/// cumulative mass >= p (ties in probability broken by ascending token id),
/// zeroes the rest and renormalizes. Input must sum to 1 within 1e-6.
std::vector<double> top_p_filter(const std::vector<double>& probs, double p);

/// Window-based repetition penalty: for tokens appearing in the last
/// `window` entries of `history`, positive logits are divided by rho and
/// negative ones multiplied by it. rho must be >= 1; rho == 1 is a no-op.
void repetition_penalize(std::vector<float>& logits, const std::vector<int32_t>& history,
                         int window, double rho);

struct SamplingParams {
    double p = 0.5;
    double temperature = 1.0;
    double rho = 1.0;
    int window = 10;
    int max_frames = 128;
    uint64_t seed = 1;
};

struct GenerateResult {
    CodecGrid grid;       // target-region grid only, width 8
    bool truncated = false;  // no end token before max_frames
};

/// Full generation: AR samples layer 1 until the end token, the NAR fills
/// layers 2-8 greedily, layer by layer. temperature <= 0 selects argmax
/// decoding, which is seed-independent.
GenerateResult generate(const ModelBundle& bundle, const EditSpec& spec,
                        const std::vector<int>& x1, const std::vector<int>& x2,
                        const CodecGrid& prompt_grid, const SamplingParams& sampling);

/// Rank-sum selection: candidates are ranked by content error ascending and
/// by speaker similarity descending; the winner minimizes the sum of rank
/// positions, ties broken by lower content error, then by index.
int rank_sum_select(const std::vector<std::pair<double, double>>& cer_and_sim);

/// The full ranking rule over decoded grids (empty or undecodable candidates
/// rank last). Considers the first n candidates.
const CodecGrid& best_of_n(const std::vector<CodecGrid>& candidates,
                           const std::vector<int>& target_content, const SpeakerVec& ref_speaker,
                           const CodecOracle& oracle, int n = 5);

}  // namespace editlm
