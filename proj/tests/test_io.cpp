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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "editlm/checkpoint.hpp"
#include "editlm/config.hpp"
#include "editlm/manifest.hpp"

using namespace editlm;

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint: bit-exact round trip including optimizer state") {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 16;
    cfg.ff_dim = 16;
    cfg.max_seq_len = 32;
    ModelBundle bundle(cfg, 42);
    AdamState adam;
    adam.t = 17;
    bundle.visit([&](Tensor<float>& t) {
        adam.m[t.name] = Mat<float>::Constant(t.v.rows(), t.v.cols(), 0.25f);
        adam.v[t.name] = Mat<float>::Constant(t.v.rows(), t.v.cols(), 0.5f);
    });

    const auto path = (fs::temp_directory_path() / "editlm_ckpt_test.bin").string();
    CheckpointMeta meta;
    meta.stage = "pretrain";
    meta.step = 123;
    meta.codec_seed = 9;
    meta.train_seed = 5;
    save_checkpoint(path, bundle, &adam, meta);

    const LoadedCheckpoint peek = peek_checkpoint(path);
    CHECK(peek.cfg == cfg);
    CHECK(peek.meta.stage == "pretrain");
    CHECK(peek.meta.step == 123);
    CHECK(peek.has_adam);

    ModelBundle other(cfg, 999);
    AdamState other_adam;
    load_checkpoint(path, other, &other_adam);
    bool identical = true;
    other.visit([&](Tensor<float>& t) {
        bool found = false;
        bundle.visit([&](Tensor<float>& orig) {
            if (orig.name == t.name) {
                found = true;
                identical &= orig.v == t.v;
            }
        });
        identical &= found;
    });
    CHECK(identical);
    CHECK(other_adam.t == 17);
    CHECK(other_adam.m.at("ar.tok_emb") == adam.m.at("ar.tok_emb"));

    // re-saving the loaded state reproduces the file byte for byte
    const auto path2 = (fs::temp_directory_path() / "editlm_ckpt_test2.bin").string();
    save_checkpoint(path2, other, &other_adam, meta);
    CHECK(read_file(path) == read_file(path2));

    // config mismatch is rejected
    ModelConfig wrong = cfg;
    wrong.embed_dim = 32;
    wrong.ff_dim = 32;
    ModelBundle mismatched(wrong, 1);
    CHECK_THROWS_AS(load_checkpoint(path, mismatched, nullptr), std::runtime_error);

    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("config: parse, dump, unknown keys") {
    const auto path = (fs::temp_directory_path() / "editlm_config_test.txt").string();
    {
        std::ofstream out(path);
        out << "# a comment\n";
        out << "train_peak_lr = 0.001\n";
        out << "corpus_n_utts = 500   # trailing comment\n";
        out << "train_same_speaker_only = true\n";
        out << "\n";
    }
    const AppConfig cfg = load_config(path);
    CHECK(cfg.train.peak_lr == doctest::Approx(0.001));
    CHECK(cfg.corpus.n_utts == 500);
    CHECK(cfg.train.same_speaker_only);
    CHECK(cfg.model.layers == 4);  // untouched defaults

    {
        std::ofstream out(path);
        out << "no_such_key = 3\n";
    }
    CHECK_THROWS_AS(load_config(path), std::invalid_argument);

    // dump covers every key and round-trips
    AppConfig tweaked;
    tweaked.train.batch_tokens = 123;
    tweaked.sampling.p = 0.8;
    {
        std::ofstream out(path);
        out << dump_config(tweaked);
    }
    const AppConfig back = load_config(path);
    CHECK(back.train.batch_tokens == 123);
    CHECK(back.sampling.p == doctest::Approx(0.8));
    CHECK(dump_config(back) == dump_config(tweaked));
    fs::remove(path);
}

TEST_CASE("corpus manifest: round trip, annotated and not") {
    CodecOracle oracle(1);
    CorpusConfig ccfg;
    ccfg.n_utts = 150;
    ccfg.n_speakers = 6;
    ccfg.seed = 3;
    Corpus corpus = generate_corpus(ccfg, oracle);

    const auto path = (fs::temp_directory_path() / "editlm_corpus_test.jsonl").string();
    save_corpus(path, corpus);
    const Corpus loaded = load_corpus(path);
    REQUIRE(loaded.utterances.size() == corpus.utterances.size());
    CHECK(loaded.n_speakers == corpus.n_speakers);
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        CHECK(loaded.utterances[i].id == corpus.utterances[i].id);
        CHECK(loaded.utterances[i].profile == corpus.utterances[i].profile);
        CHECK(loaded.utterances[i].grid == corpus.utterances[i].grid);
        CHECK(loaded.utterances[i].seed == corpus.utterances[i].seed);
        CHECK(!loaded.utterances[i].annotation.has_value());
    }

    annotate_corpus(corpus, LabelerNoise::defaults(), {0.5, 0.5, 0.5, 0.5, 0.5}, 0.3, 11);
    save_corpus(path, corpus);
    const Corpus annotated = load_corpus(path);
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        REQUIRE(annotated.utterances[i].annotation.has_value());
        const auto& a = *annotated.utterances[i].annotation;
        const auto& b = *corpus.utterances[i].annotation;
        CHECK(a.accepted_label == b.accepted_label);
        CHECK(a.pitch == b.pitch);
        for (int r = 0; r < 3; ++r) {
            CHECK(a.reports[r].labeler == b.reports[r].labeler);
            CHECK(a.reports[r].emotion == b.reports[r].emotion);
            CHECK(a.reports[r].confidence == doctest::Approx(b.reports[r].confidence));
        }
    }

    // saving twice yields identical bytes (manifest determinism)
    const auto path2 = (fs::temp_directory_path() / "editlm_corpus_test2.jsonl").string();
    save_corpus(path2, corpus);
    CHECK(read_file(path) == read_file(path2));
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("triplet file: round trip with speaker vector rederivation") {
    CodecOracle oracle(1);
    CorpusConfig ccfg;
    ccfg.n_utts = 400;
    ccfg.n_speakers = 8;
    ccfg.seed = 5;
    const Corpus corpus = generate_corpus(ccfg, oracle);
    const auto pairs = make_pairs(corpus, oracle, 200, 0.5, 0.5, 7);

    const auto path = (fs::temp_directory_path() / "editlm_pairs_test.jsonl").string();
    save_pairs(path, corpus, pairs);
    const auto loaded = load_pairs(path, corpus, oracle);
    REQUIRE(loaded.size() == pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        CHECK(loaded[i].prompt == pairs[i].prompt);
        CHECK(loaded[i].target == pairs[i].target);
        CHECK(loaded[i].kind == pairs[i].kind);
        CHECK(loaded[i].ref == pairs[i].ref);
        CHECK(loaded[i].spec.emotion == pairs[i].spec.emotion);
        CHECK(loaded[i].spec.pitch == pairs[i].spec.pitch);
        CHECK(loaded[i].spec.energy == pairs[i].spec.energy);
        CHECK(loaded[i].spec.speed == pairs[i].spec.speed);
        CHECK(loaded[i].spec.speaker == pairs[i].spec.speaker);
    }
    fs::remove(path);
}

TEST_CASE("merge_corpus: speaker remap and bounds") {
    CodecOracle oracle(1);
    CorpusConfig ccfg;
    ccfg.n_utts = 30;
    ccfg.n_speakers = 4;
    ccfg.seed = 8;
    Corpus base = generate_corpus(ccfg, oracle);
    ccfg.seed = 9;
    ccfg.id_prefix = "mix";
    const Corpus extra = generate_corpus(ccfg, oracle);

    merge_corpus(base, extra, 4);
    CHECK(base.n_speakers == 8);
    CHECK(base.utterances.size() == 60);
    for (size_t i = 30; i < 60; ++i) {
        CHECK(base.utterances[i].profile.speaker >= 4);
        CHECK(base.utterances[i].id.rfind("mix", 0) == 0);
    }

    Corpus big;
    big.n_speakers = 60;
    CHECK_THROWS_AS(merge_corpus(big, extra, 62), std::invalid_argument);
}
