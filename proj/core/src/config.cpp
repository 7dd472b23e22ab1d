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

#include "editlm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace editlm {

namespace {

struct Field {
    std::function<void(AppConfig&, const std::string&)> set;
    std::function<std::string(const AppConfig&)> get;
};

int64_t parse_int(const std::string& v) {
    size_t pos = 0;
    const int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad integer '" + v + "'");
    return out;
}

uint64_t parse_u64(const std::string& v) {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad integer '" + v + "'");
    return out;
}

double parse_double(const std::string& v) {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad number '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad bool '" + v + "'");
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

#define INT_FIELD(key, expr)                                                              \
    {key, Field{[](AppConfig& c, const std::string& v) { c.expr = static_cast<int>(parse_int(v)); }, \
                [](const AppConfig& c) { return std::to_string(c.expr); }}}
#define U64_FIELD(key, expr)                                                    \
    {key, Field{[](AppConfig& c, const std::string& v) { c.expr = parse_u64(v); }, \
                [](const AppConfig& c) { return std::to_string(c.expr); }}}
#define DBL_FIELD(key, expr)                                                       \
    {key, Field{[](AppConfig& c, const std::string& v) { c.expr = parse_double(v); }, \
                [](const AppConfig& c) { return fmt_double(c.expr); }}}
#define BOOL_FIELD(key, expr)                                                    \
    {key, Field{[](AppConfig& c, const std::string& v) { c.expr = parse_bool(v); }, \
                [](const AppConfig& c) { return c.expr ? std::string("true") : std::string("false"); }}}
#define STR_FIELD(key, expr)                                     \
    {key, Field{[](AppConfig& c, const std::string& v) { c.expr = v; }, \
                [](const AppConfig& c) { return c.expr; }}}

const std::map<std::string, Field>& field_table() {
    static const std::map<std::string, Field> table = {
        U64_FIELD("codec_seed", codec_seed),

        INT_FIELD("corpus_n_utts", corpus.n_utts),
        INT_FIELD("corpus_n_speakers", corpus.n_speakers),
        U64_FIELD("corpus_seed", corpus.seed),
        DBL_FIELD("corpus_weight_neutral", corpus.emotion_weights[0]),
        DBL_FIELD("corpus_weight_happy", corpus.emotion_weights[1]),
        DBL_FIELD("corpus_weight_sad", corpus.emotion_weights[2]),
        DBL_FIELD("corpus_weight_angry", corpus.emotion_weights[3]),
        DBL_FIELD("corpus_weight_surprise", corpus.emotion_weights[4]),
        INT_FIELD("corpus_content_len_min", corpus.content_len_min),
        INT_FIELD("corpus_content_len_max", corpus.content_len_max),
        INT_FIELD("corpus_min_frames", corpus.min_frames),
        STR_FIELD("corpus_id_prefix", corpus.id_prefix),

        INT_FIELD("model_layers", model.layers),
        INT_FIELD("model_heads", model.heads),
        INT_FIELD("model_embed_dim", model.embed_dim),
        INT_FIELD("model_ff_dim", model.ff_dim),
        DBL_FIELD("model_dropout", model.dropout),
        INT_FIELD("model_max_seq_len", model.max_seq_len),
        BOOL_FIELD("model_use_positional", model.use_positional),
        BOOL_FIELD("model_full_prefix_bidirectional", model.full_prefix_bidirectional),

        DBL_FIELD("train_peak_lr", train.peak_lr),
        INT_FIELD("train_warmup_steps", train.warmup_steps),
        INT_FIELD("train_pretrain_steps", train.pretrain_steps),
        INT_FIELD("train_edit_steps", train.edit_steps),
        INT_FIELD("train_batch_tokens", train.batch_tokens),
        DBL_FIELD("train_adam_beta1", train.adam_beta1),
        DBL_FIELD("train_adam_beta2", train.adam_beta2),
        DBL_FIELD("train_adam_eps", train.adam_eps),
        DBL_FIELD("train_weight_decay", train.weight_decay),
        DBL_FIELD("train_clip_norm", train.clip_norm),
        U64_FIELD("train_seed", train.seed),
        DBL_FIELD("train_mix_same", train.mix_same),
        DBL_FIELD("train_mix_cross", train.mix_cross),
        DBL_FIELD("train_mix_tts", train.mix_tts),
        BOOL_FIELD("train_same_speaker_only", train.same_speaker_only),
        BOOL_FIELD("train_data_mix_variant", train.data_mix_variant),
        INT_FIELD("train_checkpoint_every", train.checkpoint_every),
        INT_FIELD("train_holdout_speakers", train.holdout_speakers),
        DBL_FIELD("train_fill_in_prob", train.fill_in_prob),

        DBL_FIELD("sampling_p", sampling.p),
        DBL_FIELD("sampling_temperature", sampling.temperature),
        DBL_FIELD("sampling_rho", sampling.rho),
        INT_FIELD("sampling_window", sampling.window),
        INT_FIELD("sampling_max_frames", sampling.max_frames),
        U64_FIELD("sampling_seed", sampling.seed),

        DBL_FIELD("annotate_offdiag", annotate_offdiag),
        DBL_FIELD("threshold_neutral", thresholds[0]),
        DBL_FIELD("threshold_happy", thresholds[1]),
        DBL_FIELD("threshold_sad", thresholds[2]),
        DBL_FIELD("threshold_angry", thresholds[3]),
        DBL_FIELD("threshold_surprise", thresholds[4]),
        DBL_FIELD("prosody_sigma", prosody_sigma),

        INT_FIELD("eval_candidates", eval_candidates),
        INT_FIELD("workers", workers),
    };
    return table;
}

#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD
#undef STR_FIELD

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_line(AppConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = field_table();
    auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

AppConfig load_config(const std::string& path, AppConfig defaults) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: missing '=' at " + path + ":" +
                                     std::to_string(lineno));
        }
        apply_config_line(defaults, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return defaults;
}

std::string dump_config(const AppConfig& cfg) {
    std::ostringstream out;
    for (const auto& [key, field] : field_table()) {
        out << key << " = " << field.get(cfg) << '\n';
    }
    return out.str();
}

}  // namespace editlm
