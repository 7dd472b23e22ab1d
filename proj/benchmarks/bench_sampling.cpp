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

#include <benchmark/benchmark.h>

#include "editlm/infer.hpp"

namespace {

using namespace editlm;

void BM_TopPFilter(benchmark::State& state) {
    Rng rng(3);
    const int n = static_cast<int>(state.range(0));
    std::vector<double> probs(n);
    double sum = 0.0;
    for (double& v : probs) {
        v = -std::log(1.0 - rng.real01());
        sum += v;
    }
    for (double& v : probs) v /= sum;
    for (auto _ : state) {
        benchmark::DoNotOptimize(top_p_filter(probs, 0.5));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TopPFilter)->Arg(32)->Arg(1025);

void BM_RepetitionPenalize(benchmark::State& state) {
    Rng rng(4);
    std::vector<float> logits(1025);
    for (float& v : logits) v = static_cast<float>(rng.normal());
    std::vector<int32_t> history(64);
    for (auto& t : history) t = rng.below_int(1024);
    for (auto _ : state) {
        auto copy = logits;
        repetition_penalize(copy, history, 10, 1.25);
        benchmark::DoNotOptimize(copy);
    }
}
BENCHMARK(BM_RepetitionPenalize);

void BM_ComposeAndMask(benchmark::State& state) {
    Rng rng(5);
    const std::vector<int> x1 = sample_content(rng, 8, 8);
    const std::vector<int> x2 = sample_content(rng, 8, 8);
    std::vector<int32_t> a1(32);
    for (auto& t : a1) t = rng.below_int(kCodecVocab);
    TagRequest tags;
    tags.emotion = kSad;
    const EditSpec spec = build_spec(Task::kStyleEdit, tags);
    for (auto _ : state) {
        const ComposedSequence seq = compose(spec, x1, x2, a1);
        benchmark::DoNotOptimize(ar_mask(seq, 32));
    }
}
BENCHMARK(BM_ComposeAndMask);

}  // namespace
