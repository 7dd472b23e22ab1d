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

#include "editlm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace editlm {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

template <typename S>
void fill_normal(Mat<S>& m, Rng& rng, double std) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = static_cast<S>(rng.normal(0.0, std));
        }
    }
}

int map_row(int32_t id, int text_vocab) {
    if (id < TokenVocabulary::kCodecBase) {
        if (id < 0 || id >= text_vocab)
            throw std::invalid_argument("model: token id outside configured text vocabulary");
        return id;
    }
    return text_vocab + (id - TokenVocabulary::kCodecBase);
}

// y = x * W^T + b
template <typename S>
void linear_forward(const Mat<S>& x, const Tensor<S>& w, const Tensor<S>& b, Mat<S>& y) {
    y.noalias() = x * w.v.transpose();
    y.rowwise() += b.v.row(0);
}

template <typename S>
void linear_backward(const Mat<S>& x, const Mat<S>& dy, Tensor<S>& w, Tensor<S>& b, Mat<S>* dx,
                     bool accumulate_dx = false) {
    w.g.noalias() += dy.transpose() * x;
    b.g.row(0) += dy.colwise().sum();
    if (dx != nullptr) {
        if (accumulate_dx) {
            dx->noalias() += dy * w.v;
        } else {
            dx->noalias() = dy * w.v;
        }
    }
}

template <typename S>
void layer_norm_forward(const Mat<S>& x, const Tensor<S>& g, const Tensor<S>& b, Mat<S>& norm,
                        Mat<S>& inv_std, Mat<S>& out) {
    const Eigen::Index n = x.rows(), d = x.cols();
    norm.resize(n, d);
    inv_std.resize(n, 1);
    out.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const S mu = x.row(i).mean();
        const S var = (x.row(i).array() - mu).square().mean();
        const S inv = S(1) / std::sqrt(var + S(kLnEps));
        inv_std(i, 0) = inv;
        norm.row(i) = (x.row(i).array() - mu).matrix() * inv;
        out.row(i) = norm.row(i).cwiseProduct(g.v.row(0)) + b.v.row(0);
    }
}

template <typename S>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& norm, const Mat<S>& inv_std, Tensor<S>& g,
                         Tensor<S>& b, Mat<S>& dx) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    dx.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        g.g.row(0) += dy.row(i).cwiseProduct(norm.row(i));
        b.g.row(0) += dy.row(i);
        RowVec<S> dn = dy.row(i).cwiseProduct(g.v.row(0));
        const S mean_dn = dn.mean();
        const S mean_dn_norm = dn.cwiseProduct(norm.row(i)).mean();
        dx.row(i) =
            ((dn.array() - mean_dn) - norm.row(i).array() * mean_dn_norm).matrix() * inv_std(i, 0);
    }
}

// Rotary position tables for dh/2 frequency pairs, positions t0..t0+T-1.
template <typename S>
void rope_tables(int T, int dh, int t0, Mat<S>& cos_t, Mat<S>& sin_t) {
    const int half = dh / 2;
    cos_t.resize(T, half);
    sin_t.resize(T, half);
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dh);
        for (int t = 0; t < T; ++t) {
            const double angle = (t + t0) * freq;
            cos_t(t, i) = static_cast<S>(std::cos(angle));
            sin_t(t, i) = static_cast<S>(std::sin(angle));
        }
    }
}

// In-place per-head rotation of adjacent column pairs; `inverse` applies the
// transpose rotation (used for gradients).
template <typename S>
void rope_apply(Mat<S>& x, int heads, const Mat<S>& cos_t, const Mat<S>& sin_t, bool inverse) {
    const int dh = static_cast<int>(x.cols()) / heads;
    const int half = dh / 2;
    const S sign = inverse ? S(-1) : S(1);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < half; ++i) {
                const int ia = h * dh + 2 * i, ib = ia + 1;
                const S a = x(t, ia), b = x(t, ib);
                const S c = cos_t(t, i), s = sign * sin_t(t, i);
                x(t, ia) = a * c - b * s;
                x(t, ib) = a * s + b * c;
            }
        }
    }
}

template <typename S>
void apply_dropout(Mat<S>& x, double p, Rng* rng, Mat<S>* mask) {
    if (rng == nullptr || p <= 0.0) {
        if (mask) mask->resize(0, 0);
        return;
    }
    const S scale = S(1.0 / (1.0 - p));
    mask->resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            (*mask)(i, j) = rng->real01() < p ? S(0) : scale;
        }
    }
    x = x.cwiseProduct(*mask);
}

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("model config: layers < 1");
    if (heads < 1 || embed_dim % heads != 0)
        throw std::invalid_argument("model config: embed_dim must be divisible by heads");
    if ((embed_dim / heads) % 2 != 0)
        throw std::invalid_argument("model config: head dim must be even for rotary positions");
    if (ff_dim < embed_dim) throw std::invalid_argument("model config: ff_dim < embed_dim");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: bad dropout");
    if (max_seq_len < 8) throw std::invalid_argument("model config: max_seq_len too small");
    if (text_vocab < 1 || codec_vocab < 1)
        throw std::invalid_argument("model config: bad vocabulary sizes");
}

ModelConfig ModelConfig::paper_scale() {
    ModelConfig cfg;
    cfg.layers = 12;
    cfg.heads = 16;
    cfg.embed_dim = 1024;
    cfg.ff_dim = 4096;
    return cfg;
}

int ARBatch::total_tokens() const {
    int n = 0;
    for (const auto& ex : items) n += static_cast<int>(ex.rows.size());
    return n;
}

int NARBatch::total_tokens() const {
    int n = 0;
    for (const auto& ex : items) {
        n += static_cast<int>(ex.text_rows.size() + ex.prompt.size() + ex.target.size());
    }
    return n;
}

ArExample make_ar_example(const ModelConfig& cfg, const ComposedSequence& seq,
                          const std::vector<int32_t>& target_layer1) {
    ArExample ex;
    ex.speaker = seq.speaker;
    ex.spk_slot_pos = 0;
    ex.prefix_end =
        ar_mask(seq, static_cast<int>(target_layer1.size()), cfg.full_prefix_bidirectional)
            .prefix_end;
    ex.loss_start = seq.start_of_generation - 1;
    ex.rows.reserve(seq.ids.size() + target_layer1.size());
    for (int32_t id : seq.ids) ex.rows.push_back(map_row(id, cfg.text_vocab));
    for (int32_t tok : target_layer1) {
        if (tok < 0 || tok >= cfg.codec_vocab)
            throw std::invalid_argument("model: target token out of range");
        ex.rows.push_back(cfg.text_vocab + tok);
        ex.targets.push_back(tok);
    }
    ex.targets.push_back(cfg.end_class());
    if (static_cast<int>(ex.rows.size()) > cfg.max_seq_len)
        throw std::invalid_argument("model: sequence length exceeds max_seq_len");
    return ex;
}

NarExample make_nar_example(const ModelConfig& cfg, const ComposedSequence& seq,
                            const CodecGrid& prompt_grid, const CodecGrid& target_grid,
                            int layer_j) {
    if (layer_j < 2 || layer_j > kCodecLayers)
        throw std::invalid_argument("model: NAR layer index must be in [2,8]");
    NarExample ex;
    ex.layer_j = layer_j;
    ex.speaker = seq.speaker;
    ex.spk_slot_pos = 0;

    int a1_start = -1;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (seq.ids[i] == TokenVocabulary::kT2A) {
            a1_start = static_cast<int>(i) + 1;
            break;
        }
    }
    if (a1_start < 0) throw std::invalid_argument("model: sequence has no t2a marker");
    ex.text_rows.reserve(a1_start);
    for (int i = 0; i < a1_start; ++i) ex.text_rows.push_back(map_row(seq.ids[i], cfg.text_vocab));

    auto copy_grid = [&](const CodecGrid& grid,
                         std::vector<std::array<int32_t, kCodecLayers>>& out) {
        out.resize(grid.frames());
        for (int t = 0; t < grid.frames(); ++t) {
            for (int j = 0; j < kCodecLayers; ++j) {
                const int32_t tok = grid.at(t, j);
                if (tok < 0 || tok >= cfg.codec_vocab)
                    throw std::invalid_argument("model: grid token out of range");
                out[t][j] = tok;
            }
        }
    };
    copy_grid(prompt_grid, ex.prompt);
    copy_grid(target_grid, ex.target);

    const int total = static_cast<int>(ex.text_rows.size() + ex.prompt.size() + ex.target.size());
    if (total > cfg.max_seq_len)
        throw std::invalid_argument("model: sequence length exceeds max_seq_len");
    return ex;
}

template <typename S>
void Tensor<S>::alloc(int rows, int cols, std::string n, bool d) {
    v.setZero(rows, cols);
    g.setZero(rows, cols);
    name = std::move(n);
    decay = d;
}

template <typename S>
void SharedParams<S>::init(int embed_dim, Rng& rng) {
    spk_w.alloc(embed_dim, kSpeakerVecDim, "shared.spk_w", true);
    spk_b.alloc(1, embed_dim, "shared.spk_b", false);
    fill_normal(spk_w.v, rng, kInitStd);
}

template <typename S>
void SharedParams<S>::visit(const std::function<void(Tensor<S>&)>& fn) {
    fn(spk_w);
    fn(spk_b);
}

template <typename S>
void BlockParams<S>::init(const ModelConfig& cfg, const std::string& prefix, Rng& rng) {
    const int d = cfg.embed_dim, f = cfg.ff_dim;
    auto weight = [&](Tensor<S>& t, int rows, int cols, const char* n) {
        t.alloc(rows, cols, prefix + "." + n, true);
        fill_normal(t.v, rng, kInitStd);
    };
    auto bias = [&](Tensor<S>& t, int cols, const char* n) {
        t.alloc(1, cols, prefix + "." + n, false);
    };
    ln1_g.alloc(1, d, prefix + ".ln1_g", false);
    ln1_g.v.setOnes();
    ln1_b.alloc(1, d, prefix + ".ln1_b", false);
    weight(wq, d, d, "wq");
    bias(bq, d, "bq");
    weight(wk, d, d, "wk");
    bias(bk, d, "bk");
    weight(wv, d, d, "wv");
    bias(bv, d, "bv");
    weight(wo, d, d, "wo");
    bias(bo, d, "bo");
    ln2_g.alloc(1, d, prefix + ".ln2_g", false);
    ln2_g.v.setOnes();
    ln2_b.alloc(1, d, prefix + ".ln2_b", false);
    weight(w1, f, d, "w1");
    bias(b1, f, "b1");
    weight(w2, d, f, "w2");
    bias(b2, d, "b2");
}

template <typename S>
void BlockParams<S>::visit(const std::function<void(Tensor<S>&)>& fn) {
    fn(ln1_g);
    fn(ln1_b);
    fn(wq);
    fn(bq);
    fn(wk);
    fn(bk);
    fn(wv);
    fn(bv);
    fn(wo);
    fn(bo);
    fn(ln2_g);
    fn(ln2_b);
    fn(w1);
    fn(b1);
    fn(w2);
    fn(b2);
}

template <typename S>
struct CoreCache {
    std::vector<Mat<S>> x_in;                 // block input
    std::vector<Mat<S>> ln1_norm, ln1_inv;    // LN internals
    std::vector<Mat<S>> attn_in;              // post-LN1 activation fed to q/k/v
    std::vector<Mat<S>> q, k, v;
    std::vector<std::vector<Mat<S>>> attn;    // softmaxed weights per head
    std::vector<Mat<S>> ctx;                  // pre-Wo context
    std::vector<Mat<S>> attn_drop;
    std::vector<Mat<S>> h_mid;                // after attention residual
    std::vector<Mat<S>> ln2_norm, ln2_inv;
    std::vector<Mat<S>> ff_in;                // post-LN2 activation
    std::vector<Mat<S>> ff_pre;               // pre-ReLU
    std::vector<Mat<S>> ff_drop;
    Mat<S> final_norm, final_inv, final_out;  // final LN
};

namespace {

// Shared transformer trunk. row_end[i] is the exclusive end of the allowed
// key range for query position i; allowed ranges always start at 0, which is
// all the prefix-bidirectional mask needs. Positions enter through rotary
// embeddings on q/k (disabled by use_positional = false for probes).
template <typename S>
void core_forward(const ModelConfig& cfg, const std::vector<BlockParams<S>>& blocks,
                  const Tensor<S>& lnf_g, const Tensor<S>& lnf_b, const Mat<S>& x0,
                  const std::vector<int>& row_end, CoreCache<S>& cache, Rng* dropout_rng) {
    const int T = static_cast<int>(x0.rows());
    const int d = cfg.embed_dim;
    const int heads = cfg.heads;
    const int dh = d / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
    const int L = cfg.layers;

    Mat<S> rope_cos, rope_sin;
    if (cfg.use_positional) rope_tables(T, dh, 0, rope_cos, rope_sin);

    cache.x_in.resize(L);
    cache.ln1_norm.resize(L);
    cache.ln1_inv.resize(L);
    cache.attn_in.resize(L);
    cache.q.resize(L);
    cache.k.resize(L);
    cache.v.resize(L);
    cache.attn.assign(L, {});
    cache.ctx.resize(L);
    cache.attn_drop.resize(L);
    cache.h_mid.resize(L);
    cache.ln2_norm.resize(L);
    cache.ln2_inv.resize(L);
    cache.ff_in.resize(L);
    cache.ff_pre.resize(L);
    cache.ff_drop.resize(L);

    Mat<S> x = x0;
    for (int l = 0; l < L; ++l) {
        const auto& blk = blocks[l];
        cache.x_in[l] = x;

        layer_norm_forward(x, blk.ln1_g, blk.ln1_b, cache.ln1_norm[l], cache.ln1_inv[l],
                           cache.attn_in[l]);
        linear_forward(cache.attn_in[l], blk.wq, blk.bq, cache.q[l]);
        linear_forward(cache.attn_in[l], blk.wk, blk.bk, cache.k[l]);
        linear_forward(cache.attn_in[l], blk.wv, blk.bv, cache.v[l]);
        if (cfg.use_positional) {
            // caches hold the rotated projections
            rope_apply(cache.q[l], heads, rope_cos, rope_sin, false);
            rope_apply(cache.k[l], heads, rope_cos, rope_sin, false);
        }

        cache.ctx[l].resize(T, d);
        cache.attn[l].resize(heads);
        for (int h = 0; h < heads; ++h) {
            auto Q = cache.q[l].middleCols(h * dh, dh);
            auto K = cache.k[l].middleCols(h * dh, dh);
            auto V = cache.v[l].middleCols(h * dh, dh);
            Mat<S>& A = cache.attn[l][h];
            A.noalias() = Q * K.transpose();
            A *= scale;
            for (int i = 0; i < T; ++i) {
                const int end = row_end[i];
                auto row = A.row(i);
                const S m = row.head(end).maxCoeff();
                row.head(end) = (row.head(end).array() - m).exp();
                const S denom = row.head(end).sum();
                row.head(end) /= denom;
                if (end < T) row.tail(T - end).setZero();
            }
            cache.ctx[l].middleCols(h * dh, dh).noalias() = A * V;
        }

        Mat<S> attn_out;
        linear_forward(cache.ctx[l], blk.wo, blk.bo, attn_out);
        apply_dropout(attn_out, cfg.dropout, dropout_rng, &cache.attn_drop[l]);
        cache.h_mid[l] = x + attn_out;

        layer_norm_forward(cache.h_mid[l], blk.ln2_g, blk.ln2_b, cache.ln2_norm[l],
                           cache.ln2_inv[l], cache.ff_in[l]);
        linear_forward(cache.ff_in[l], blk.w1, blk.b1, cache.ff_pre[l]);
        Mat<S> act = cache.ff_pre[l].cwiseMax(S(0));
        Mat<S> ff_out;
        linear_forward(act, blk.w2, blk.b2, ff_out);
        apply_dropout(ff_out, cfg.dropout, dropout_rng, &cache.ff_drop[l]);
        x = cache.h_mid[l] + ff_out;
    }

    layer_norm_forward(x, lnf_g, lnf_b, cache.final_norm, cache.final_inv, cache.final_out);
}

// Returns the gradient with respect to the trunk input; parameter gradients
// are accumulated in place.
template <typename S>
Mat<S> core_backward(const ModelConfig& cfg, std::vector<BlockParams<S>>& blocks, Tensor<S>& lnf_g,
                     Tensor<S>& lnf_b, const std::vector<int>& row_end, CoreCache<S>& cache,
                     const Mat<S>& d_final_out) {
    const int T = static_cast<int>(d_final_out.rows());
    const int d = cfg.embed_dim;
    const int heads = cfg.heads;
    const int dh = d / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));

    Mat<S> rope_cos, rope_sin;
    if (cfg.use_positional) rope_tables(T, dh, 0, rope_cos, rope_sin);

    Mat<S> dx;
    layer_norm_backward(d_final_out, cache.final_norm, cache.final_inv, lnf_g, lnf_b, dx);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        auto& blk = blocks[l];

        // feed-forward sublayer
        Mat<S> d_ff_out = dx;
        if (cache.ff_drop[l].size() > 0) d_ff_out = d_ff_out.cwiseProduct(cache.ff_drop[l]);
        Mat<S> act = cache.ff_pre[l].cwiseMax(S(0));
        Mat<S> d_act;
        linear_backward(act, d_ff_out, blk.w2, blk.b2, &d_act);
        Mat<S> d_pre =
            d_act.cwiseProduct((cache.ff_pre[l].array() > S(0)).template cast<S>().matrix());
        Mat<S> d_ff_in;
        linear_backward(cache.ff_in[l], d_pre, blk.w1, blk.b1, &d_ff_in);
        Mat<S> d_h_mid;
        layer_norm_backward(d_ff_in, cache.ln2_norm[l], cache.ln2_inv[l], blk.ln2_g, blk.ln2_b,
                            d_h_mid);
        d_h_mid += dx;  // residual path

        // attention sublayer
        Mat<S> d_attn_out = d_h_mid;
        if (cache.attn_drop[l].size() > 0)
            d_attn_out = d_attn_out.cwiseProduct(cache.attn_drop[l]);
        Mat<S> d_ctx;
        linear_backward(cache.ctx[l], d_attn_out, blk.wo, blk.bo, &d_ctx);

        Mat<S> dq(T, d), dk(T, d), dv(T, d);
        for (int h = 0; h < heads; ++h) {
            const Mat<S>& A = cache.attn[l][h];
            auto Q = cache.q[l].middleCols(h * dh, dh);
            auto K = cache.k[l].middleCols(h * dh, dh);
            auto d_ctx_h = d_ctx.middleCols(h * dh, dh);

            Mat<S> dA;
            dA.noalias() = d_ctx_h * cache.v[l].middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh).noalias() = A.transpose() * d_ctx_h;

            Mat<S> dS(T, T);
            for (int i = 0; i < T; ++i) {
                const int end = row_end[i];
                auto a_row = A.row(i).head(end);
                auto da_row = dA.row(i).head(end);
                const S dot = a_row.cwiseProduct(da_row).sum();
                dS.row(i).head(end) = a_row.cwiseProduct((da_row.array() - dot).matrix());
                if (end < T) dS.row(i).tail(T - end).setZero();
            }
            dq.middleCols(h * dh, dh).noalias() = dS * K * scale;
            dk.middleCols(h * dh, dh).noalias() = dS.transpose() * Q * scale;
        }
        if (cfg.use_positional) {
            // gradients flow back through the rotation
            rope_apply(dq, heads, rope_cos, rope_sin, true);
            rope_apply(dk, heads, rope_cos, rope_sin, true);
        }

        Mat<S> d_attn_in;
        linear_backward(cache.attn_in[l], dq, blk.wq, blk.bq, &d_attn_in);
        linear_backward(cache.attn_in[l], dk, blk.wk, blk.bk, &d_attn_in, /*accumulate=*/true);
        linear_backward(cache.attn_in[l], dv, blk.wv, blk.bv, &d_attn_in, /*accumulate=*/true);

        Mat<S> d_x_in;
        layer_norm_backward(d_attn_in, cache.ln1_norm[l], cache.ln1_inv[l], blk.ln1_g, blk.ln1_b,
                            d_x_in);
        dx = d_h_mid + d_x_in;  // residual path
    }
    return dx;
}

template <typename S>
std::vector<int> ar_row_ends(const ArExample& ex) {
    const int T = static_cast<int>(ex.rows.size());
    std::vector<int> ends(T);
    for (int i = 0; i < T; ++i) ends[i] = (i <= ex.prefix_end ? ex.prefix_end : i) + 1;
    return ends;
}

// Mean-NLL forward over selected rows; fills d_logits for backward.
template <typename S>
S cross_entropy(const Mat<S>& logits, const std::vector<int32_t>& targets, S inv_count,
                Mat<S>* d_logits) {
    S total = 0;
    if (d_logits) d_logits->resize(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const S m = logits.row(i).maxCoeff();
        RowVec<S> ex = (logits.row(i).array() - m).exp();
        const S z = ex.sum();
        total += std::log(z) + m - logits(i, targets[i]);
        if (d_logits) {
            d_logits->row(i) = ex * (inv_count / z);
            (*d_logits)(i, targets[i]) -= inv_count;
        }
    }
    return total;
}

}  // namespace

template <typename S>
ArModel<S>::ArModel(const ModelConfig& cfg, uint64_t init_seed, SharedParams<S>* shared)
    : cfg_(cfg), shared_(shared) {
    cfg_.validate();
    Rng rng(Rng::derive(init_seed, 0xa7));
    tok_.alloc(cfg.vocab_total(), cfg.embed_dim, "ar.tok_emb", true);
    fill_normal(tok_.v, rng, kInitStd);
    end_w_.alloc(1, cfg.embed_dim, "ar.end_w", true);
    fill_normal(end_w_.v, rng, kInitStd);
    blocks_.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
        blocks_[l].init(cfg, "ar.block" + std::to_string(l), rng);
    }
    lnf_g_.alloc(1, cfg.embed_dim, "ar.lnf_g", false);
    lnf_g_.v.setOnes();
    lnf_b_.alloc(1, cfg.embed_dim, "ar.lnf_b", false);
    head_b_.alloc(1, cfg.ar_classes(), "ar.head_b", false);
}

template <typename S>
void ArModel<S>::visit(const std::function<void(Tensor<S>&)>& fn) {
    fn(tok_);
    fn(end_w_);
    for (auto& blk : blocks_) blk.visit(fn);
    fn(lnf_g_);
    fn(lnf_b_);
    fn(head_b_);
}

template <typename S>
Mat<S> ArModel<S>::head_logits(const Mat<S>& h) const {
    Mat<S> logits(h.rows(), cfg_.ar_classes());
    logits.leftCols(cfg_.codec_vocab).noalias() =
        h * tok_.v.middleRows(cfg_.text_vocab, cfg_.codec_vocab).transpose();
    logits.col(cfg_.codec_vocab).noalias() = h * end_w_.v.row(0).transpose();
    logits.rowwise() += head_b_.v.row(0);
    return logits;
}

template <typename S>
Mat<S> ArModel<S>::embed(const ArExample& ex, Rng* dropout_rng, Mat<S>* drop_mask) const {
    const int T = static_cast<int>(ex.rows.size());
    if (T > cfg_.max_seq_len)
        throw std::invalid_argument("model: sequence length exceeds max_seq_len");
    Mat<S> x(T, cfg_.embed_dim);
    for (int t = 0; t < T; ++t) {
        if (t == ex.spk_slot_pos) {
            Eigen::Matrix<S, Eigen::Dynamic, 1> v(kSpeakerVecDim);
            for (int i = 0; i < kSpeakerVecDim; ++i) v(i) = static_cast<S>(ex.speaker[i]);
            x.row(t) = (shared_->spk_w.v * v).transpose() + shared_->spk_b.v.row(0);
        } else {
            x.row(t) = tok_.v.row(ex.rows[t]);
        }
    }
    apply_dropout(x, cfg_.dropout, dropout_rng, drop_mask);
    return x;
}

template <typename S>
void ArModel<S>::embed_backward(const ArExample& ex, const Mat<S>& dx) {
    const int T = static_cast<int>(ex.rows.size());
    for (int t = 0; t < T; ++t) {
        if (t == ex.spk_slot_pos) {
            Eigen::Matrix<S, Eigen::Dynamic, 1> v(kSpeakerVecDim);
            for (int i = 0; i < kSpeakerVecDim; ++i) v(i) = static_cast<S>(ex.speaker[i]);
            shared_->spk_w.g.noalias() += dx.row(t).transpose() * v.transpose();
            shared_->spk_b.g.row(0) += dx.row(t);
        } else {
            tok_.g.row(ex.rows[t]) += dx.row(t);
        }
    }
}

template <typename S>
Mat<S> ArModel<S>::forward(const ArExample& ex) const {
    Mat<S> x = embed(ex, nullptr, nullptr);
    CoreCache<S> cache;
    core_forward(cfg_, blocks_, lnf_g_, lnf_b_, x, ar_row_ends<S>(ex), cache, nullptr);
    return head_logits(cache.final_out);
}

template <typename S>
S ArModel<S>::loss(const ARBatch& batch, bool backward, Rng* dropout_rng) {
    if (batch.items.empty()) throw std::invalid_argument("model: empty batch");
    int64_t count = 0;
    for (const auto& ex : batch.items) {
        if (ex.targets.empty() || ex.loss_start >= static_cast<int>(ex.rows.size()))
            throw std::invalid_argument("model: empty loss mask");
        count += static_cast<int64_t>(ex.targets.size());
    }
    const S inv_count = S(1.0 / static_cast<double>(count));

    S total = 0;
    for (const auto& ex : batch.items) {
        const int T = static_cast<int>(ex.rows.size());
        const int n_loss = static_cast<int>(ex.targets.size());
        auto row_ends = ar_row_ends<S>(ex);

        Mat<S> drop_mask;
        Mat<S> x = embed(ex, dropout_rng, &drop_mask);
        CoreCache<S> cache;
        core_forward(cfg_, blocks_, lnf_g_, lnf_b_, x, row_ends, cache, dropout_rng);

        Mat<S> h_sel = cache.final_out.middleRows(ex.loss_start, n_loss);
        Mat<S> logits = head_logits(h_sel);
        Mat<S> d_logits;
        total += cross_entropy(logits, ex.targets, inv_count, backward ? &d_logits : nullptr);

        if (backward) {
            auto codec_rows = tok_.v.middleRows(cfg_.text_vocab, cfg_.codec_vocab);
            Mat<S> d_h_sel;
            d_h_sel.noalias() = d_logits.leftCols(cfg_.codec_vocab) * codec_rows;
            d_h_sel.noalias() += d_logits.col(cfg_.codec_vocab) * end_w_.v.row(0);
            tok_.g.middleRows(cfg_.text_vocab, cfg_.codec_vocab).noalias() +=
                d_logits.leftCols(cfg_.codec_vocab).transpose() * h_sel;
            end_w_.g.row(0).noalias() += d_logits.col(cfg_.codec_vocab).transpose() * h_sel;
            head_b_.g.row(0) += d_logits.colwise().sum();

            Mat<S> d_final = Mat<S>::Zero(T, cfg_.embed_dim);
            d_final.middleRows(ex.loss_start, n_loss) = d_h_sel;
            Mat<S> dx = core_backward(cfg_, blocks_, lnf_g_, lnf_b_, row_ends, cache, d_final);
            if (drop_mask.size() > 0) dx = dx.cwiseProduct(drop_mask);
            embed_backward(ex, dx);
        }
    }
    return total * inv_count;
}

template <typename S>
typename ArModel<S>::DecodeState ArModel<S>::prime(const ArExample& prompt) const {
    Mat<S> x = embed(prompt, nullptr, nullptr);
    CoreCache<S> cache;
    core_forward(cfg_, blocks_, lnf_g_, lnf_b_, x, ar_row_ends<S>(prompt), cache, nullptr);

    DecodeState state;
    state.keys.resize(cfg_.layers);
    state.values.resize(cfg_.layers);
    const int T = static_cast<int>(prompt.rows.size());
    for (int l = 0; l < cfg_.layers; ++l) {
        state.keys[l].resize(cfg_.max_seq_len, cfg_.embed_dim);
        state.values[l].resize(cfg_.max_seq_len, cfg_.embed_dim);
        state.keys[l].topRows(T) = cache.k[l];
        state.values[l].topRows(T) = cache.v[l];
    }
    state.length = T;
    Mat<S> h_last = cache.final_out.row(T - 1);
    state.last_logits = head_logits(h_last).row(0);
    return state;
}

template <typename S>
RowVec<S> ArModel<S>::step(DecodeState& state, int32_t codec_token) const {
    if (codec_token < 0 || codec_token >= cfg_.codec_vocab)
        throw std::invalid_argument("model: decode token out of range");
    if (state.length + 1 > cfg_.max_seq_len)
        throw std::invalid_argument("model: decode exceeded max_seq_len");

    const int d = cfg_.embed_dim;
    const int heads = cfg_.heads;
    const int dh = d / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
    const int pos = state.length;

    RowVec<S> x = tok_.v.row(cfg_.text_vocab + codec_token);

    Mat<S> rope_cos, rope_sin;
    if (cfg_.use_positional) rope_tables(1, dh, pos, rope_cos, rope_sin);

    Mat<S> norm, inv, out;
    for (int l = 0; l < cfg_.layers; ++l) {
        const auto& blk = blocks_[l];
        Mat<S> xin = x;
        layer_norm_forward(xin, blk.ln1_g, blk.ln1_b, norm, inv, out);
        Mat<S> q = out.row(0) * blk.wq.v.transpose() + blk.bq.v.row(0);
        Mat<S> k = out.row(0) * blk.wk.v.transpose() + blk.bk.v.row(0);
        RowVec<S> v = out.row(0) * blk.wv.v.transpose() + blk.bv.v.row(0);
        if (cfg_.use_positional) {
            rope_apply(q, heads, rope_cos, rope_sin, false);
            rope_apply(k, heads, rope_cos, rope_sin, false);
        }
        state.keys[l].row(pos) = k.row(0);
        state.values[l].row(pos) = v;

        RowVec<S> ctx(d);
        const int n = pos + 1;
        for (int h = 0; h < heads; ++h) {
            auto K = state.keys[l].block(0, h * dh, n, dh);
            auto V = state.values[l].block(0, h * dh, n, dh);
            RowVec<S> scores = q.row(0).middleCols(h * dh, dh) * K.transpose() * scale;
            const S m = scores.maxCoeff();
            scores = (scores.array() - m).exp();
            scores /= scores.sum();
            ctx.middleCols(h * dh, dh) = scores * V;
        }
        RowVec<S> attn_out = ctx * blk.wo.v.transpose() + blk.bo.v.row(0);
        RowVec<S> h_mid = x + attn_out;

        Mat<S> hm = h_mid;
        layer_norm_forward(hm, blk.ln2_g, blk.ln2_b, norm, inv, out);
        RowVec<S> pre = out.row(0) * blk.w1.v.transpose() + blk.b1.v.row(0);
        RowVec<S> act = pre.cwiseMax(S(0));
        RowVec<S> ff_out = act * blk.w2.v.transpose() + blk.b2.v.row(0);
        x = h_mid + ff_out;
    }
    Mat<S> xin = x;
    layer_norm_forward(xin, lnf_g_, lnf_b_, norm, inv, out);
    state.length = pos + 1;
    state.last_logits = head_logits(out).row(0);
    return state.last_logits;
}

template <typename S>
NarModel<S>::NarModel(const ModelConfig& cfg, uint64_t init_seed, SharedParams<S>* shared)
    : cfg_(cfg), shared_(shared) {
    cfg_.validate();
    Rng rng(Rng::derive(init_seed, 0xa8));
    txt_.alloc(cfg.text_vocab, cfg.embed_dim, "nar.txt_emb", true);
    fill_normal(txt_.v, rng, kInitStd);
    layer_emb_.alloc(kCodecLayers - 1, cfg.embed_dim, "nar.layer_emb", true);
    fill_normal(layer_emb_.v, rng, kInitStd);
    acoustic_.resize(kCodecLayers);
    for (int j = 0; j < kCodecLayers; ++j) {
        acoustic_[j].alloc(cfg.codec_vocab, cfg.embed_dim, "nar.ac_emb" + std::to_string(j + 1),
                           true);
        fill_normal(acoustic_[j].v, rng, kInitStd);
    }
    blocks_.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
        blocks_[l].init(cfg, "nar.block" + std::to_string(l), rng);
    }
    lnf_g_.alloc(1, cfg.embed_dim, "nar.lnf_g", false);
    lnf_g_.v.setOnes();
    lnf_b_.alloc(1, cfg.embed_dim, "nar.lnf_b", false);
    head_b_.alloc(1, cfg.codec_vocab, "nar.head_b", false);
}

template <typename S>
void NarModel<S>::visit(const std::function<void(Tensor<S>&)>& fn) {
    fn(txt_);
    fn(layer_emb_);
    for (auto& t : acoustic_) fn(t);
    for (auto& blk : blocks_) blk.visit(fn);
    fn(lnf_g_);
    fn(lnf_b_);
    fn(head_b_);
}

template <typename S>
Mat<S> NarModel<S>::embed(const NarExample& ex, Rng* dropout_rng, Mat<S>* drop_mask) const {
    const int text_len = static_cast<int>(ex.text_rows.size());
    const int prompt_len = static_cast<int>(ex.prompt.size());
    const int target_len = static_cast<int>(ex.target.size());
    const int T = text_len + prompt_len + target_len;
    if (T > cfg_.max_seq_len)
        throw std::invalid_argument("model: sequence length exceeds max_seq_len");

    Mat<S> x(T, cfg_.embed_dim);
    for (int t = 0; t < text_len; ++t) {
        if (t == ex.spk_slot_pos) {
            Eigen::Matrix<S, Eigen::Dynamic, 1> v(kSpeakerVecDim);
            for (int i = 0; i < kSpeakerVecDim; ++i) v(i) = static_cast<S>(ex.speaker[i]);
            x.row(t) = (shared_->spk_w.v * v).transpose() + shared_->spk_b.v.row(0);
        } else {
            x.row(t) = txt_.v.row(ex.text_rows[t]);
        }
    }
    for (int f = 0; f < prompt_len; ++f) {
        auto row = x.row(text_len + f);
        row = acoustic_[0].v.row(ex.prompt[f][0]);
        for (int j = 1; j < kCodecLayers; ++j) row += acoustic_[j].v.row(ex.prompt[f][j]);
    }
    for (int f = 0; f < target_len; ++f) {
        auto row = x.row(text_len + prompt_len + f);
        row = acoustic_[0].v.row(ex.target[f][0]);
        for (int j = 1; j < ex.layer_j - 1; ++j) row += acoustic_[j].v.row(ex.target[f][j]);
    }
    x.rowwise() += layer_emb_.v.row(ex.layer_j - 2);
    apply_dropout(x, cfg_.dropout, dropout_rng, drop_mask);
    return x;
}

template <typename S>
void NarModel<S>::embed_backward(const NarExample& ex, const Mat<S>& dx) {
    const int text_len = static_cast<int>(ex.text_rows.size());
    const int prompt_len = static_cast<int>(ex.prompt.size());
    const int target_len = static_cast<int>(ex.target.size());
    const int T = text_len + prompt_len + target_len;

    for (int t = 0; t < text_len; ++t) {
        if (t == ex.spk_slot_pos) {
            Eigen::Matrix<S, Eigen::Dynamic, 1> v(kSpeakerVecDim);
            for (int i = 0; i < kSpeakerVecDim; ++i) v(i) = static_cast<S>(ex.speaker[i]);
            shared_->spk_w.g.noalias() += dx.row(t).transpose() * v.transpose();
            shared_->spk_b.g.row(0) += dx.row(t);
        } else {
            txt_.g.row(ex.text_rows[t]) += dx.row(t);
        }
    }
    for (int f = 0; f < prompt_len; ++f) {
        for (int j = 0; j < kCodecLayers; ++j) {
            acoustic_[j].g.row(ex.prompt[f][j]) += dx.row(text_len + f);
        }
    }
    for (int f = 0; f < target_len; ++f) {
        for (int j = 0; j < ex.layer_j - 1; ++j) {
            acoustic_[j].g.row(ex.target[f][j]) += dx.row(text_len + prompt_len + f);
        }
    }
    layer_emb_.g.row(ex.layer_j - 2) += dx.colwise().sum();
    (void)T;
}

template <typename S>
Mat<S> NarModel<S>::forward(const NarExample& ex) const {
    if (ex.layer_j < 2 || ex.layer_j > kCodecLayers)
        throw std::invalid_argument("model: NAR layer index must be in [2,8]");
    const int T =
        static_cast<int>(ex.text_rows.size() + ex.prompt.size() + ex.target.size());
    Mat<S> x = embed(ex, nullptr, nullptr);
    std::vector<int> row_ends(T, T);  // full bidirectional attention
    CoreCache<S> cache;
    core_forward(cfg_, blocks_, lnf_g_, lnf_b_, x, row_ends, cache, nullptr);
    const int target_len = static_cast<int>(ex.target.size());
    Mat<S> h_sel = cache.final_out.bottomRows(target_len);
    Mat<S> logits;
    logits.noalias() = h_sel * acoustic_[ex.layer_j - 1].v.transpose();
    logits.rowwise() += head_b_.v.row(0);
    return logits;
}

template <typename S>
S NarModel<S>::loss(const NARBatch& batch, bool backward, Rng* dropout_rng) {
    if (batch.items.empty()) throw std::invalid_argument("model: empty batch");
    int64_t count = 0;
    for (const auto& ex : batch.items) {
        if (ex.target.empty()) throw std::invalid_argument("model: empty loss mask");
        count += static_cast<int64_t>(ex.target.size());
    }
    const S inv_count = S(1.0 / static_cast<double>(count));

    S total = 0;
    for (const auto& ex : batch.items) {
        if (ex.layer_j < 2 || ex.layer_j > kCodecLayers)
            throw std::invalid_argument("model: NAR layer index must be in [2,8]");
        const int text_len = static_cast<int>(ex.text_rows.size());
        const int prompt_len = static_cast<int>(ex.prompt.size());
        const int target_len = static_cast<int>(ex.target.size());
        const int T = text_len + prompt_len + target_len;
        std::vector<int> row_ends(T, T);

        Mat<S> drop_mask;
        Mat<S> x = embed(ex, dropout_rng, &drop_mask);
        CoreCache<S> cache;
        core_forward(cfg_, blocks_, lnf_g_, lnf_b_, x, row_ends, cache, dropout_rng);

        std::vector<int32_t> labels(target_len);
        for (int f = 0; f < target_len; ++f) labels[f] = ex.target[f][ex.layer_j - 1];

        Tensor<S>& head = acoustic_[ex.layer_j - 1];
        Mat<S> h_sel = cache.final_out.bottomRows(target_len);
        Mat<S> logits;
        logits.noalias() = h_sel * head.v.transpose();
        logits.rowwise() += head_b_.v.row(0);
        Mat<S> d_logits;
        total += cross_entropy(logits, labels, inv_count, backward ? &d_logits : nullptr);

        if (backward) {
            Mat<S> d_h_sel;
            d_h_sel.noalias() = d_logits * head.v;
            head.g.noalias() += d_logits.transpose() * h_sel;
            head_b_.g.row(0) += d_logits.colwise().sum();
            Mat<S> d_final = Mat<S>::Zero(T, cfg_.embed_dim);
            d_final.bottomRows(target_len) = d_h_sel;
            Mat<S> dx = core_backward(cfg_, blocks_, lnf_g_, lnf_b_, row_ends, cache, d_final);
            if (drop_mask.size() > 0) dx = dx.cwiseProduct(drop_mask);
            embed_backward(ex, dx);
        }
    }
    return total * inv_count;
}

namespace {

SharedParams<float> make_shared_params(const ModelConfig& cfg, uint64_t init_seed) {
    SharedParams<float> s;
    Rng rng(Rng::derive(init_seed, 0));
    s.init(cfg.embed_dim, rng);
    return s;
}

}  // namespace

ModelBundle::ModelBundle(const ModelConfig& config, uint64_t init_seed)
    : cfg(config),
      shared(make_shared_params(config, init_seed)),
      ar(config, Rng::derive(init_seed, 1), &shared),
      nar(config, Rng::derive(init_seed, 2), &shared) {}

void ModelBundle::visit(const std::function<void(Tensor<float>&)>& fn) {
    shared.visit(fn);
    ar.visit(fn);
    nar.visit(fn);
}

void ModelBundle::zero_grads() {
    visit([](Tensor<float>& t) { t.zero_grad(); });
}

template struct Tensor<float>;
template struct Tensor<double>;
template struct SharedParams<float>;
template struct SharedParams<double>;
template struct BlockParams<float>;
template struct BlockParams<double>;
template class ArModel<float>;
template class ArModel<double>;
template class NarModel<float>;
template class NarModel<double>;

}  // namespace editlm
