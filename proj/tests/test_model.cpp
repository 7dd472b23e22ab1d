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

#include <cmath>

#include "editlm/checkpoint.hpp"
#include "editlm/model.hpp"
#include "editlm/trainer.hpp"

using namespace editlm;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.embed_dim = 32;
    cfg.ff_dim = 64;
    cfg.dropout = 0.0;
    cfg.max_seq_len = 48;
    cfg.text_vocab = 16;
    cfg.codec_vocab = 24;
    return cfg;
}

// Synthetic batches over the reduced vocabulary (semantics play no role in a
// gradient check, only shapes and the loss mask).
ArExample random_ar_example(const ModelConfig& cfg, Rng& rng) {
    ArExample ex;
    const int prompt_len = 6 + rng.below_int(6);
    const int gen_len = 2 + rng.below_int(4);
    for (int i = 0; i < prompt_len; ++i)
        ex.rows.push_back(rng.below_int(cfg.vocab_total()));
    ex.rows[0] = 0;
    ex.spk_slot_pos = 0;
    ex.prefix_end = 3;
    ex.loss_start = prompt_len - 1;
    for (int i = 0; i < gen_len; ++i) {
        const int tok = rng.below_int(cfg.codec_vocab);
        ex.rows.push_back(cfg.text_vocab + tok);
        ex.targets.push_back(tok);
    }
    ex.targets.push_back(cfg.end_class());
    for (int i = 0; i < kSpeakerVecDim; ++i) ex.speaker[i] = rng.normal() * 0.2;
    return ex;
}

NarExample random_nar_example(const ModelConfig& cfg, Rng& rng) {
    NarExample ex;
    const int text_len = 4 + rng.below_int(4);
    for (int i = 0; i < text_len; ++i) ex.text_rows.push_back(rng.below_int(cfg.text_vocab));
    ex.text_rows[0] = 0;
    ex.spk_slot_pos = 0;
    ex.layer_j = 2 + rng.below_int(kCodecLayers - 1);
    const int prompt_len = 3 + rng.below_int(4);
    const int target_len = 2 + rng.below_int(4);
    ex.prompt.resize(prompt_len);
    ex.target.resize(target_len);
    for (auto& frame : ex.prompt) {
        for (auto& tok : frame) tok = rng.below_int(cfg.codec_vocab);
    }
    for (auto& frame : ex.target) {
        for (auto& tok : frame) tok = rng.below_int(cfg.codec_vocab);
    }
    for (int i = 0; i < kSpeakerVecDim; ++i) ex.speaker[i] = rng.normal() * 0.2;
    return ex;
}

struct GradCheckStats {
    double worst_rel = 0.0;
    int checked = 0;
};

template <typename Model, typename LossFn>
GradCheckStats finite_difference_check(Model& model, SharedParams<double>& shared, LossFn loss_fn,
                                       bool every_param, Rng& pick) {
    GradCheckStats stats;
    model.visit([](Tensor<double>& t) { t.zero_grad(); });
    shared.visit([](Tensor<double>& t) { t.zero_grad(); });
    loss_fn(true);

    auto check_entry = [&](Tensor<double>& t, int i, int j) {
        const double saved = t.v(i, j);
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        t.v(i, j) = saved + h;
        const double up = loss_fn(false);
        t.v(i, j) = saved - h;
        const double down = loss_fn(false);
        t.v(i, j) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = t.g(i, j);
        // The 1e-3 floor keeps finite-difference roundoff (~1e-10 absolute at
        // this h) from registering on entries whose true gradient is ~1e-8.
        const double rel = std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
        stats.worst_rel = std::max(stats.worst_rel, rel);
        ++stats.checked;
    };
    auto per_tensor = [&](Tensor<double>& t) {
        if (every_param) {
            for (int i = 0; i < t.v.rows(); ++i) {
                for (int j = 0; j < t.v.cols(); ++j) check_entry(t, i, j);
            }
        } else {
            for (int probe = 0; probe < 4; ++probe) {
                check_entry(t, pick.below_int(static_cast<int>(t.v.rows())),
                            pick.below_int(static_cast<int>(t.v.cols())));
            }
        }
    };
    model.visit(per_tensor);
    shared.visit(per_tensor);
    return stats;
}

}  // namespace

TEST_CASE("ar_forward: output shape is [T, 1025] and loss at init is ln(1025)") {
    ModelConfig cfg;  // desk defaults, full vocabulary
    cfg.dropout = 0.0;
    ModelBundle bundle(cfg, 3);

    const EditSpec spec = build_spec(Task::kZeroShotTts, {});
    const ComposedSequence seq = compose(spec, {1, 2, 3}, {4, 5}, {100, 100, 101, 101});
    const std::vector<int32_t> target = {200, 200, 201, 201, 202, 202};
    const ArExample ex = make_ar_example(cfg, seq, target);

    const Mat<float> logits = bundle.ar.forward(ex);
    CHECK(logits.rows() == static_cast<int>(ex.rows.size()));
    CHECK(logits.cols() == 1025);

    ARBatch batch;
    for (int i = 0; i < 8; ++i) batch.items.push_back(ex);
    // The tied output head gives the untrained model a slight bias toward the
    // current token, and the targets are runs, so the empirical init loss
    // sits a little below the uniform-logit value ln(1025) = 6.93.
    const double loss = bundle.ar.loss(batch, false, nullptr);
    CHECK(loss == doctest::Approx(std::log(1025.0)).epsilon(0.025));
}

TEST_CASE("nar_forward: output covers the target region and init loss is ln(1024)") {
    ModelConfig cfg;
    cfg.dropout = 0.0;
    ModelBundle bundle(cfg, 4);
    CodecOracle oracle(1);

    AttributeProfile p;
    p.content = {3, 7, 1};
    p.speaker = 5;
    const CodecGrid prompt_grid = oracle.encode(p, 11);
    AttributeProfile q = p;
    q.content = {2, 9};
    q.emotion = kHappy;
    const CodecGrid target_grid = oracle.encode(q, 12);

    const EditSpec spec = build_spec(Task::kZeroShotTts, {});
    std::vector<int32_t> a1(prompt_grid.frames());
    for (int t = 0; t < prompt_grid.frames(); ++t) a1[t] = prompt_grid.at(t, 0);
    const ComposedSequence seq = compose(spec, p.content, q.content, a1);

    for (int j : {2, 5, 8}) {
        const NarExample ex = make_nar_example(cfg, seq, prompt_grid, target_grid, j);
        const Mat<float> logits = bundle.nar.forward(ex);
        CHECK(logits.rows() == target_grid.frames());
        CHECK(logits.cols() == 1024);
    }
    CHECK_THROWS_AS(make_nar_example(cfg, seq, prompt_grid, target_grid, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_nar_example(cfg, seq, prompt_grid, target_grid, 9),
                    std::invalid_argument);

    NARBatch batch;
    for (int j = 2; j <= 8; ++j)
        batch.items.push_back(make_nar_example(cfg, seq, prompt_grid, target_grid, j));
    const double loss = bundle.nar.loss(batch, false, nullptr);
    CHECK(loss == doctest::Approx(std::log(1024.0)).epsilon(0.015));
}

TEST_CASE("causality: future perturbations never leak backward") {
    ModelConfig cfg = tiny_config();
    SharedParams<float> shared;
    Rng srng(1);
    shared.init(cfg.embed_dim, srng);
    ArModel<float> model(cfg, 2, &shared);

    Rng rng(3);
    ArExample ex = random_ar_example(cfg, rng);
    const Mat<float> base = model.forward(ex);
    const int T = static_cast<int>(ex.rows.size());

    for (int j = 1; j < T; ++j) {
        ArExample perturbed = ex;
        perturbed.rows[j] = (perturbed.rows[j] + 1) % cfg.vocab_total();
        const Mat<float> out = model.forward(perturbed);
        for (int i = 0; i < T; ++i) {
            const float diff = (out.row(i) - base.row(i)).cwiseAbs().maxCoeff();
            const bool reachable =
                (i <= ex.prefix_end) ? (j <= ex.prefix_end) : (j <= i);
            if (!reachable) {
                CHECK(diff == 0.0f);  // exactly zero, not approximately
            } else if (i >= j) {
                CHECK(diff > 0.0f);
            }
        }
    }
}

TEST_CASE("prefix bidirectionality: later conditioning tokens reach earlier positions") {
    ModelConfig cfg = tiny_config();
    SharedParams<float> shared;
    Rng srng(5);
    shared.init(cfg.embed_dim, srng);
    ArModel<float> model(cfg, 6, &shared);

    Rng rng(7);
    ArExample ex = random_ar_example(cfg, rng);
    const Mat<float> base = model.forward(ex);

    // perturb the last prefix token; positions 1..prefix_end-1 must change
    ArExample perturbed = ex;
    perturbed.rows[ex.prefix_end] = (perturbed.rows[ex.prefix_end] + 1) % cfg.vocab_total();
    const Mat<float> out = model.forward(perturbed);
    for (int i = 1; i < ex.prefix_end; ++i) {
        CHECK((out.row(i) - base.row(i)).cwiseAbs().maxCoeff() > 0.0f);
    }
}

TEST_CASE("NAR permutation equivariance without positional encodings") {
    ModelConfig cfg = tiny_config();
    cfg.use_positional = false;
    SharedParams<float> shared;
    Rng srng(8);
    shared.init(cfg.embed_dim, srng);
    NarModel<float> model(cfg, 9, &shared);

    Rng rng(10);
    NarExample ex = random_nar_example(cfg, rng);
    while (ex.target.size() < 2) ex = random_nar_example(cfg, rng);
    const Mat<float> base = model.forward(ex);

    NarExample swapped = ex;
    std::swap(swapped.target[0], swapped.target[1]);
    const Mat<float> out = model.forward(swapped);
    const int last = static_cast<int>(ex.target.size()) - 1;
    (void)last;
    CHECK((out.row(0) - base.row(1)).cwiseAbs().maxCoeff() < 1e-4f);
    CHECK((out.row(1) - base.row(0)).cwiseAbs().maxCoeff() < 1e-4f);
    for (size_t i = 2; i < ex.target.size(); ++i) {
        CHECK((out.row(i) - base.row(i)).cwiseAbs().maxCoeff() < 1e-4f);
    }
}

TEST_CASE("gradients: AR loss matches central finite differences everywhere") {
    ModelConfig cfg = tiny_config();
    SharedParams<double> shared;
    Rng srng(11);
    shared.init(cfg.embed_dim, srng);
    ArModel<double> model(cfg, 12, &shared);

    Rng rng(13);
    ARBatch batch;
    for (int i = 0; i < 2; ++i) batch.items.push_back(random_ar_example(cfg, rng));

    Rng pick(14);
    const auto stats = finite_difference_check(
        model, shared, [&](bool backward) { return model.loss(batch, backward, nullptr); },
        /*every_param=*/true, pick);
    CHECK(stats.checked > 10000);
    CHECK(stats.worst_rel < 1e-4);
}

TEST_CASE("gradients: NAR loss matches central finite differences everywhere") {
    ModelConfig cfg = tiny_config();
    SharedParams<double> shared;
    Rng srng(15);
    shared.init(cfg.embed_dim, srng);
    NarModel<double> model(cfg, 16, &shared);

    Rng rng(17);
    NARBatch batch;
    for (int i = 0; i < 2; ++i) batch.items.push_back(random_nar_example(cfg, rng));

    Rng pick(18);
    const auto stats = finite_difference_check(
        model, shared, [&](bool backward) { return model.loss(batch, backward, nullptr); },
        /*every_param=*/true, pick);
    CHECK(stats.checked > 10000);
    CHECK(stats.worst_rel < 1e-4);
}

TEST_CASE("losses are non-negative and reject an empty mask") {
    ModelConfig cfg = tiny_config();
    SharedParams<float> shared;
    Rng srng(19);
    shared.init(cfg.embed_dim, srng);
    ArModel<float> model(cfg, 20, &shared);
    Rng rng(21);
    ARBatch batch;
    batch.items.push_back(random_ar_example(cfg, rng));
    CHECK(model.loss(batch, false, nullptr) >= 0.0f);
    batch.items[0].targets.clear();
    CHECK_THROWS_AS(model.loss(batch, false, nullptr), std::invalid_argument);
}

TEST_CASE("overfitting one triplet drives both losses under 0.05") {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.embed_dim = 64;
    cfg.ff_dim = 256;
    cfg.dropout = 0.0;
    ModelBundle bundle(cfg, 30);
    CodecOracle oracle(1);

    AttributeProfile p;
    p.content = {3, 7, 1, 9};
    p.speaker = 2;
    p.emotion = kNeutral;
    const CodecGrid prompt_grid = oracle.encode(p, 40);
    AttributeProfile q = p;
    q.content = {5, 2, 8};
    q.emotion = kAngry;
    q.speed = kHigh;
    const CodecGrid target_grid = oracle.encode(q, 41);

    TagRequest tags;
    tags.emotion = q.emotion;
    tags.speed = q.speed;
    const EditSpec spec = build_spec(Task::kStyleEdit, tags);
    std::vector<int32_t> a1(prompt_grid.frames());
    for (int t = 0; t < prompt_grid.frames(); ++t) a1[t] = prompt_grid.at(t, 0);
    const ComposedSequence seq = compose(spec, p.content, q.content, a1);
    std::vector<int32_t> y1(target_grid.frames());
    for (int t = 0; t < target_grid.frames(); ++t) y1[t] = target_grid.at(t, 0);

    ARBatch ar_batch;
    ar_batch.items.push_back(make_ar_example(cfg, seq, y1));
    NARBatch nar_batch;
    for (int j = 2; j <= 8; ++j)
        nar_batch.items.push_back(make_nar_example(cfg, seq, prompt_grid, target_grid, j));

    TrainConfig tc;
    tc.peak_lr = 1e-3;
    tc.warmup_steps = 20;
    tc.weight_decay = 0.0;
    tc.pretrain_steps = 1000;
    AdamState adam;
    double loss_ar = 0, loss_nar = 0;
    for (int step = 1; step <= 600; ++step) {
        bundle.zero_grads();
        loss_ar = bundle.ar.loss(ar_batch, true, nullptr);
        loss_nar = bundle.nar.loss(nar_batch, true, nullptr);
        // reuse the trainer's update by hand: plain Adam, no decay
        adam.t += 1;
        const float lr = static_cast<float>(lr_at(tc, step));
        const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
        const float corr =
            static_cast<float>(std::sqrt(1.0 - std::pow(b2, adam.t)) / (1.0 - std::pow(b1, adam.t)));
        bundle.visit([&](Tensor<float>& t) {
            Mat<float>& m = adam.m[t.name];
            Mat<float>& v = adam.v[t.name];
            if (m.size() == 0) {
                m.setZero(t.g.rows(), t.g.cols());
                v.setZero(t.g.rows(), t.g.cols());
            }
            m = static_cast<float>(b1) * m + static_cast<float>(1 - b1) * t.g;
            v = static_cast<float>(b2) * v + static_cast<float>(1 - b2) * t.g.cwiseProduct(t.g);
            t.v.array() -= lr * corr * m.array() / (v.array().sqrt() + 1e-9f);
        });
    }
    CHECK(loss_ar < 0.05);
    CHECK(loss_nar < 0.05);

    // teacher-forced decoding of the overfit model reproduces the target
    const ArExample ex = ar_batch.items[0];
    const Mat<float> logits = bundle.ar.forward(ex);
    for (size_t k = 0; k < ex.targets.size(); ++k) {
        int best = 0;
        for (int c = 1; c < cfg.ar_classes(); ++c) {
            if (logits(ex.loss_start + k, c) > logits(ex.loss_start + k, best)) best = c;
        }
        CHECK(best == ex.targets[k]);
    }
}

TEST_CASE("incremental decode matches the full forward pass") {
    ModelConfig cfg = tiny_config();
    SharedParams<float> shared;
    Rng srng(22);
    shared.init(cfg.embed_dim, srng);
    ArModel<float> model(cfg, 23, &shared);

    Rng rng(24);
    ArExample full = random_ar_example(cfg, rng);
    const int prompt_len = full.loss_start + 1;

    ArExample prompt = full;
    prompt.rows.resize(prompt_len);
    prompt.targets = {0};

    auto state = model.prime(prompt);
    const Mat<float> reference = model.forward(full);
    CHECK((state.last_logits - reference.row(prompt_len - 1)).cwiseAbs().maxCoeff() < 2e-3f);

    for (size_t i = prompt_len; i < full.rows.size(); ++i) {
        const int tok = full.rows[i] - cfg.text_vocab;
        REQUIRE(tok >= 0);
        const RowVec<float> logits = model.step(state, tok);
        CHECK((logits - reference.row(i)).cwiseAbs().maxCoeff() < 2e-3f);
    }
}

TEST_CASE("one embedding table serves tags and content symbols") {
    // Tags, content symbols, and separators all map to rows of the same
    // AR token table (ids below the codec region are table rows verbatim).
    ModelConfig cfg;
    const EditSpec spec = build_spec(Task::kStyleEdit, TagRequest{.emotion = kSad,
                                                                  .pitch = std::nullopt,
                                                                  .energy = std::nullopt,
                                                                  .speed = std::nullopt});
    const ComposedSequence seq = compose(spec, {5}, {6}, {7});
    const ArExample ex = make_ar_example(cfg, seq, {8});
    CHECK(ex.rows[2] == TokenVocabulary::emotion_tag(kSad));
    CHECK(ex.rows[seq.start_of_context] == TokenVocabulary::content_id(5));
    ModelBundle bundle(cfg, 31);
    CHECK(bundle.ar.token_table().rows() == cfg.vocab_total());
}
