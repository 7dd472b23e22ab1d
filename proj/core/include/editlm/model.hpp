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

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "editlm/corpus.hpp"
#include "editlm/sequencer.hpp"

namespace editlm {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

struct ModelConfig {
    int layers = 4;
    int heads = 4;
    int embed_dim = 128;
    int ff_dim = 512;
    double dropout = 0.1;
    int max_seq_len = 640;
    int text_vocab = TokenVocabulary::kTextIds;
    int codec_vocab = kCodecVocab;
    bool use_positional = true;
    bool full_prefix_bidirectional = false;

    int vocab_total() const { return text_vocab + codec_vocab; }
    int ar_classes() const { return codec_vocab + 1; }  // layer-1 tokens + end
    int end_class() const { return codec_vocab; }
    void validate() const;

    static ModelConfig desk_default() { return ModelConfig{}; }
    static ModelConfig paper_scale();

    bool operator==(const ModelConfig&) const = default;
};

/// One teacher-forced AR training/probing example. `rows` are embedding-table
/// row indices over the full input (composed sequence plus target frames);
/// position p >= loss_start predicts `targets[p - loss_start]`, the last
/// target being the end class.
struct ArExample {
    std::vector<int32_t> rows;
    int spk_slot_pos = 0;
    SpeakerVec speaker{};
    int prefix_end = 0;
    int loss_start = 0;
    std::vector<int32_t> targets;
};

struct ARBatch {
    std::vector<ArExample> items;
    int total_tokens() const;
};

/// One NAR example: text block, full 8-layer prompt frames, target frames
/// conditioned on layers < layer_j; the layer_j column is the label.
struct NarExample {
    std::vector<int32_t> text_rows;
    int spk_slot_pos = 0;
    SpeakerVec speaker{};
    std::vector<std::array<int32_t, kCodecLayers>> prompt;
    std::vector<std::array<int32_t, kCodecLayers>> target;
    int layer_j = 2;
};

struct NARBatch {
    std::vector<NarExample> items;
    int total_tokens() const;
};

ArExample make_ar_example(const ModelConfig& cfg, const ComposedSequence& seq,
                          const std::vector<int32_t>& target_layer1);
NarExample make_nar_example(const ModelConfig& cfg, const ComposedSequence& seq,
                            const CodecGrid& prompt_grid, const CodecGrid& target_grid,
                            int layer_j);

template <typename S>
struct Tensor {
    Mat<S> v;
    Mat<S> g;
    std::string name;
    bool decay = true;

    void alloc(int rows, int cols, std::string n, bool d);
    void zero_grad() { g.setZero(); }
};

template <typename S>
struct SharedParams {
    Tensor<S> spk_w;  // embed_dim x 64
    Tensor<S> spk_b;  // 1 x embed_dim

    void init(int embed_dim, Rng& rng);
    void visit(const std::function<void(Tensor<S>&)>& fn);
};

template <typename S>
struct BlockParams {
    Tensor<S> ln1_g, ln1_b;
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<S> ln2_g, ln2_b;
    Tensor<S> w1, b1, w2, b2;

    void init(const ModelConfig& cfg, const std::string& prefix, Rng& rng);
    void visit(const std::function<void(Tensor<S>&)>& fn);
};

/// Per-sequence forward cache so backward can be exact without recompute.
template <typename S>
struct CoreCache;

template <typename S>
class ArModel {
public:
    ArModel(const ModelConfig& cfg, uint64_t init_seed, SharedParams<S>* shared);

    /// Full-position logits [T, codec_vocab+1]; no dropout. Attention obeys
    /// the prefix-bidirectional mask exactly.
    Mat<S> forward(const ArExample& ex) const;

    /// Mean NLL over the loss-masked region (target frames plus end token).
    /// With `backward`, parameter gradients are accumulated.
    S loss(const ARBatch& batch, bool backward, Rng* dropout_rng);

    /// Incremental decoding with cached keys/values.
    struct DecodeState;
    DecodeState prime(const ArExample& prompt) const;
    RowVec<S> step(DecodeState& state, int32_t codec_token) const;

    void visit(const std::function<void(Tensor<S>&)>& fn);
    const ModelConfig& config() const { return cfg_; }
    const Mat<S>& token_table() const { return tok_.v; }

private:
    Mat<S> embed(const ArExample& ex, Rng* dropout_rng, Mat<S>* drop_mask) const;
    void embed_backward(const ArExample& ex, const Mat<S>& dx);
    Mat<S> head_logits(const Mat<S>& h) const;

    ModelConfig cfg_;
    SharedParams<S>* shared_;
    // The output head is tied to the codec rows of the token table, with one
    // extra row for the end class.
    Tensor<S> tok_, end_w_;
    std::vector<BlockParams<S>> blocks_;
    Tensor<S> lnf_g_, lnf_b_;
    Tensor<S> head_b_;
};

template <typename S>
class NarModel {
public:
    NarModel(const ModelConfig& cfg, uint64_t init_seed, SharedParams<S>* shared);

    /// Logits [target_len, codec_vocab] for layer `ex.layer_j`, full
    /// bidirectional attention.
    Mat<S> forward(const NarExample& ex) const;

    S loss(const NARBatch& batch, bool backward, Rng* dropout_rng);

    void visit(const std::function<void(Tensor<S>&)>& fn);
    const ModelConfig& config() const { return cfg_; }

    /// Swaps the speaker-projection block, used to accumulate NAR gradients
    /// into a scratch buffer when AR and NAR backward run concurrently.
    void set_shared(SharedParams<S>* shared) { shared_ = shared; }

private:
    Mat<S> embed(const NarExample& ex, Rng* dropout_rng, Mat<S>* drop_mask) const;
    void embed_backward(const NarExample& ex, const Mat<S>& dx);

    ModelConfig cfg_;
    SharedParams<S>* shared_;
    Tensor<S> txt_, layer_emb_;
    std::vector<Tensor<S>> acoustic_;  // one table per codec layer
    std::vector<BlockParams<S>> blocks_;
    Tensor<S> lnf_g_, lnf_b_;
    // The layer-j head is tied to the layer-j acoustic table.
    Tensor<S> head_b_;
};

template <typename S>
struct ArModel<S>::DecodeState {
    std::vector<Mat<S>> keys;    // per layer, grows one row per step
    std::vector<Mat<S>> values;
    int length = 0;
    RowVec<S> last_logits;
};

/// Both stages plus the speaker projection they share.
struct ModelBundle {
    ModelConfig cfg;
    SharedParams<float> shared;
    ArModel<float> ar;
    NarModel<float> nar;

    ModelBundle(const ModelConfig& cfg, uint64_t init_seed);
    ModelBundle(const ModelBundle&) = delete;
    ModelBundle& operator=(const ModelBundle&) = delete;

    void visit(const std::function<void(Tensor<float>&)>& fn);
    void zero_grads();
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template struct SharedParams<float>;
extern template struct SharedParams<double>;
extern template class ArModel<float>;
extern template class ArModel<double>;
extern template class NarModel<float>;
extern template class NarModel<double>;

}  // namespace editlm
