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

#include <memory>

#include "editlm/trainer.hpp"

namespace {

using namespace editlm;

struct BenchFixture {
    CodecOracle oracle{1};
    Corpus corpus;
    ModelConfig cfg;
    std::unique_ptr<ModelBundle> bundle;
    std::vector<Triplet> pairs;

    BenchFixture() {
        CorpusConfig ccfg;
        ccfg.n_utts = 500;
        ccfg.n_speakers = 16;
        corpus = generate_corpus(ccfg, oracle);
        cfg.dropout = 0.0;
        bundle = std::make_unique<ModelBundle>(cfg, 1);
        pairs = make_pairs(corpus, oracle, 64, 0.5, 0.5, 3);
    }
};

BenchFixture& fixture() {
    static BenchFixture f;
    return f;
}

void BM_ArLossBackward(benchmark::State& state) {
    auto& f = fixture();
    Rng rng(5);
    ARBatch batch;
    int tokens = 0;
    while (tokens < state.range(0)) {
        const auto& t = f.pairs[rng.below_int(static_cast<int>(f.pairs.size()))];
        TrainingExample ex = make_training_example(f.cfg, f.corpus, t, 2);
        tokens += static_cast<int>(ex.ar.rows.size());
        batch.items.push_back(std::move(ex.ar));
    }
    for (auto _ : state) {
        f.bundle->zero_grads();
        benchmark::DoNotOptimize(f.bundle->ar.loss(batch, true, nullptr));
    }
    state.SetItemsProcessed(state.iterations() * tokens);
}
BENCHMARK(BM_ArLossBackward)->Arg(256)->Arg(768);

void BM_NarForward(benchmark::State& state) {
    auto& f = fixture();
    Rng rng(6);
    const auto& t = f.pairs[0];
    TrainingExample ex = make_training_example(f.cfg, f.corpus, t, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(f.bundle->nar.forward(ex.nar));
    }
}
BENCHMARK(BM_NarForward);

void BM_ArDecodeStep(benchmark::State& state) {
    auto& f = fixture();
    const auto& t = f.pairs[1];
    TrainingExample full = make_training_example(f.cfg, f.corpus, t, 2);
    ArExample prompt = full.ar;
    prompt.rows.resize(prompt.loss_start + 1);
    auto state_cache = f.bundle->ar.prime(prompt);
    const auto base_len = state_cache.length;
    for (auto _ : state) {
        state_cache.length = base_len;  // rewind the cache, keep the prompt
        benchmark::DoNotOptimize(f.bundle->ar.step(state_cache, 100));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ArDecodeStep);

}  // namespace
