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

#include "editlm/corpus.hpp"
#include "editlm/eval.hpp"

namespace {

using namespace editlm;

AttributeProfile bench_profile(Rng& rng, int len) {
    AttributeProfile p;
    p.content = sample_content(rng, len, len);
    p.speaker = rng.below_int(kMaxSpeakers);
    p.emotion = rng.below_int(kEmotionClasses);
    p.pitch = rng.below_int(kProsodyLevels);
    p.energy = rng.below_int(kProsodyLevels);
    p.speed = rng.below_int(kProsodyLevels);
    return p;
}

void BM_CodecEncode(benchmark::State& state) {
    const CodecOracle oracle(1);
    Rng rng(7);
    const AttributeProfile p = bench_profile(rng, static_cast<int>(state.range(0)));
    uint64_t seed = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(oracle.encode(p, seed++));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CodecEncode)->Arg(4)->Arg(12);

void BM_CodecDecode(benchmark::State& state) {
    const CodecOracle oracle(1);
    Rng rng(7);
    const AttributeProfile p = bench_profile(rng, static_cast<int>(state.range(0)));
    const CodecGrid grid = oracle.encode(p, 99);
    for (auto _ : state) {
        benchmark::DoNotOptimize(oracle.decode(grid));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CodecDecode)->Arg(4)->Arg(12);

void BM_Levenshtein(benchmark::State& state) {
    Rng rng(9);
    const std::vector<int> a = sample_content(rng, 12, 12);
    const std::vector<int> b = sample_content(rng, 12, 12);
    for (auto _ : state) {
        benchmark::DoNotOptimize(levenshtein(a, b));
    }
}
BENCHMARK(BM_Levenshtein);

void BM_SampleSameSpeaker(benchmark::State& state) {
    const CodecOracle oracle(1);
    CorpusConfig cfg;
    cfg.n_utts = 2000;
    cfg.n_speakers = 16;
    const Corpus corpus = generate_corpus(cfg, oracle);
    Rng rng(11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_same_speaker(corpus, oracle, rng));
    }
}
BENCHMARK(BM_SampleSameSpeaker);

}  // namespace
