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

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "editlm/checkpoint.hpp"
#include "editlm/config.hpp"
#include "editlm/eval.hpp"
#include "editlm/infer.hpp"
#include "editlm/manifest.hpp"
#include "editlm/trainer.hpp"

namespace fs = std::filesystem;
using namespace editlm;

namespace {

struct CommonArgs {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "flat key=value config file");
    cmd->add_option("--seed", args.seed, "root seed override")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--workers", args.workers, "worker threads (results are deterministic per count)");
}

AppConfig resolve_config(const CommonArgs& args) {
    AppConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path, cfg);
    if (args.seed_set) {
        cfg.corpus.seed = args.seed;
        cfg.train.seed = args.seed;
        cfg.sampling.seed = args.seed;
    }
    if (args.workers > 0) cfg.workers = args.workers;
    return cfg;
}

std::vector<int> parse_content(const std::string& text) {
    std::vector<int> out;
    std::string token;
    for (char c : text + ",") {
        if (c == ',' || c == ' ') {
            if (!token.empty()) {
                out.push_back(std::stoi(token));
                token.clear();
            }
        } else {
            token += c;
        }
    }
    return out;
}

std::optional<int> parse_tag(const std::string& value, int (*parser)(const std::string&),
                             const char* what) {
    if (value.empty() || value == "fill-in") return std::nullopt;
    const int v = parser(value);
    if (v < 0) throw std::invalid_argument(std::string("unknown ") + what + " tag: " + value);
    return v;
}

void emit_vocab(const fs::path& dir) {
    fs::create_directories(dir);
    TokenVocabulary::write_manifest((dir / "vocab.txt").string());
}

int cmd_gen_corpus(const CommonArgs& common, int n, int speakers, const std::string& out,
                   const std::string& id_prefix) {
    AppConfig cfg = resolve_config(common);
    if (n > 0) cfg.corpus.n_utts = n;
    if (speakers > 0) cfg.corpus.n_speakers = speakers;
    if (!id_prefix.empty()) cfg.corpus.id_prefix = id_prefix;
    const CodecOracle oracle(cfg.codec_seed);
    const Corpus corpus = generate_corpus(cfg.corpus, oracle);
    save_corpus(out, corpus);
    emit_vocab(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    std::printf("gen-corpus: wrote %zu utterances (%d speakers) to %s\n",
                corpus.utterances.size(), corpus.n_speakers, out.c_str());
    return 0;
}

int cmd_annotate(const CommonArgs& common, const std::string& corpus_path,
                 const std::string& out) {
    AppConfig cfg = resolve_config(common);
    Corpus corpus = load_corpus(corpus_path);
    const LabelerNoise noise = LabelerNoise::uniform_offdiagonal(cfg.annotate_offdiag);
    const uint64_t seed = common.seed_set ? common.seed : cfg.corpus.seed;
    annotate_corpus(corpus, noise, cfg.thresholds, cfg.prosody_sigma, seed);
    save_corpus(out.empty() ? corpus_path : out, corpus);

    int accepted = 0;
    for (const auto& u : corpus.utterances) {
        if (u.annotation && u.annotation->accepted_label) ++accepted;
    }
    std::printf("annotate: %d/%zu utterances accepted by the vote\n", accepted,
                corpus.utterances.size());
    return 0;
}

int cmd_make_pairs(const CommonArgs& common, const std::string& corpus_path,
                   const std::string& extra_path, int n, const std::string& out,
                   bool same_only) {
    AppConfig cfg = resolve_config(common);
    const CodecOracle oracle(cfg.codec_seed);
    Corpus corpus = load_corpus(corpus_path);
    // The evaluation holdout is the top block of the base corpus; merged
    // extra speakers sit above it and stay eligible.
    SamplerOptions opt;
    opt.fill_in_prob = cfg.train.fill_in_prob;
    opt.exclude_begin = corpus.n_speakers - cfg.train.holdout_speakers;
    opt.exclude_end = corpus.n_speakers;
    if (!extra_path.empty()) {
        const Corpus extra = load_corpus(extra_path);
        merge_corpus(corpus, extra, corpus.n_speakers);
    }

    double same_w = same_only ? 1.0 : cfg.train.mix_same;
    double cross_w = same_only ? 0.0 : cfg.train.mix_cross;
    if (same_w + cross_w <= 0) {
        same_w = 0.5;
        cross_w = 0.5;
    }
    const uint64_t seed = common.seed_set ? common.seed : cfg.corpus.seed;
    const std::vector<Triplet> pairs = make_pairs(corpus, oracle, n, same_w, cross_w, seed, opt);
    save_pairs(out, corpus, pairs);
    int same = 0;
    for (const auto& t : pairs) same += t.kind == TripletKind::kSameSpeaker;
    std::printf("make-pairs: wrote %zu triplets (%d same / %zu cross) to %s\n", pairs.size(), same,
                pairs.size() - same, out.c_str());
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& stage_str,
              const std::string& corpus_path, const std::string& extra_path,
              const std::string& pairs_path, const std::string& init_path,
              const std::string& resume_path, const std::string& out_dir) {
    AppConfig cfg = resolve_config(common);
    const CodecOracle oracle(cfg.codec_seed);
    Corpus corpus = load_corpus(corpus_path);
    const int holdout_begin = corpus.n_speakers - cfg.train.holdout_speakers;
    const int holdout_end = corpus.n_speakers;
    if (!extra_path.empty()) {
        const Corpus extra = load_corpus(extra_path);
        merge_corpus(corpus, extra, corpus.n_speakers);
    }

    Stage stage;
    if (stage_str == "pretrain") {
        stage = Stage::kPretrain;
    } else if (stage_str == "edit") {
        stage = Stage::kEdit;
    } else {
        throw std::invalid_argument("train: stage must be 'pretrain' or 'edit'");
    }

    std::vector<Triplet> pairs;
    if (!pairs_path.empty()) pairs = load_pairs(pairs_path, corpus, oracle);

    ModelBundle bundle(cfg.model, cfg.train.seed);
    AdamState adam;
    int64_t start_step = 0;
    if (!resume_path.empty()) {
        const LoadedCheckpoint loaded = load_checkpoint(resume_path, bundle, &adam);
        if (loaded.meta.stage != stage_str)
            throw std::runtime_error("train: checkpoint stage mismatch for resume");
        start_step = loaded.meta.step;
    } else if (!init_path.empty()) {
        load_checkpoint(init_path, bundle, &adam);
    }

    fs::create_directories(out_dir);
    emit_vocab(out_dir);
    {
        std::ofstream cfg_out(fs::path(out_dir) / "train_config.txt");
        cfg_out << dump_config(cfg);
    }
    const fs::path metrics_path = fs::path(out_dir) / ("metrics_" + stage_str + ".log");
    std::ofstream metrics(metrics_path, start_step > 0 ? std::ios::app : std::ios::trunc);

    TrainStageOptions options;
    options.pairs = pairs.empty() ? nullptr : &pairs;
    options.metrics = &metrics;
    options.checkpoint_path = (fs::path(out_dir) / (stage_str + ".ckpt")).string();
    options.start_step = start_step;
    options.workers = cfg.workers;
    options.holdout_begin = holdout_begin;
    options.holdout_end = holdout_end;
    int64_t done = 0;
    auto t_last = std::chrono::steady_clock::now();
    options.on_step = [&](const StepLog& log) {
        ++done;
        if (log.step % 500 == 0) {
            const auto now = std::chrono::steady_clock::now();
            const double secs = std::chrono::duration<double>(now - t_last).count();
            t_last = now;
            std::fprintf(stderr, "  %s (%.3f s/step)\n", format_step_log(log).c_str(),
                         secs / 500.0);
        }
    };
    train_stage(stage, bundle, adam, corpus, oracle, cfg.train, options);
    std::printf("train: stage %s finished (%lld steps this run), checkpoint at %s\n",
                stage_str.c_str(), static_cast<long long>(done), options.checkpoint_path.c_str());
    return 0;
}

int cmd_synth(const CommonArgs& common, const std::string& ckpt_path,
              const std::string& corpus_path, const std::string& prompt_id,
              const std::string& task_str, const std::string& text, const std::string& emotion,
              const std::string& pitch, const std::string& energy, const std::string& speed,
              const std::string& target_ref_id, const std::string& grid_out) {
    AppConfig cfg = resolve_config(common);
    const CodecOracle oracle(cfg.codec_seed);
    const Corpus corpus = load_corpus(corpus_path);

    const Utterance* prompt = corpus.find(prompt_id);
    if (prompt == nullptr) throw std::runtime_error("synth: unknown prompt id " + prompt_id);

    TagRequest tags;
    tags.emotion = parse_tag(emotion, emotion_from_name, "emotion");
    tags.pitch = parse_tag(pitch, level_from_name, "pitch");
    tags.energy = parse_tag(energy, level_from_name, "energy");
    tags.speed = parse_tag(speed, level_from_name, "speed");

    EditSpec spec;
    if (task_str == "tts") {
        spec = build_spec(Task::kZeroShotTts, tags);
    } else if (task_str == "style-edit") {
        spec = build_spec(Task::kStyleEdit, tags);
    } else if (task_str == "vc") {
        if (target_ref_id.empty())
            throw std::invalid_argument("synth: vc needs --target-ref <utterance id>");
        const Utterance* ref = corpus.find(target_ref_id);
        if (ref == nullptr) throw std::runtime_error("synth: unknown reference id " + target_ref_id);
        const SpeakerVec vec = oracle.speaker_vector(ref->profile.speaker);
        spec = build_spec(Task::kVoiceConversion, tags, &vec);
    } else {
        throw std::invalid_argument("synth: task must be tts, style-edit, or vc");
    }

    std::vector<int> x2 = text.empty() ? prompt->transcript() : parse_content(text);

    LoadedCheckpoint peek = peek_checkpoint(ckpt_path);
    ModelBundle bundle(peek.cfg, 0);
    load_checkpoint(ckpt_path, bundle, nullptr);

    const GenerateResult result =
        generate(bundle, spec, prompt->transcript(), x2, prompt->grid, cfg.sampling);
    if (result.grid.tokens.empty()) {
        std::printf("synth: empty generation (truncated=%d)\n", result.truncated ? 1 : 0);
        return 0;
    }
    const DecodeResult decoded = oracle.decode(result.grid);
    std::printf("frames: %d%s\n", result.grid.frames(), result.truncated ? " (truncated)" : "");
    std::printf("decoded.speaker: %d (%s, margin %d)\n", decoded.profile.speaker,
                decoded.speaker_match.exact ? "exact" : "nearest", decoded.speaker_match.margin);
    std::printf("decoded.emotion: %s\n", emotion_name(decoded.profile.emotion));
    std::printf("decoded.pitch: %s\n", level_name(decoded.profile.pitch));
    std::printf("decoded.energy: %s\n", level_name(decoded.profile.energy));
    std::printf("decoded.speed: %s\n", level_name(decoded.profile.speed));
    std::printf("decoded.content:");
    for (int c : decoded.profile.content) std::printf(" %d", c);
    std::printf("\n");
    std::printf("cer_vs_request: %.4f\n", content_error_rate(result.grid, x2, oracle));

    if (!grid_out.empty()) {
        std::ofstream out(grid_out);
        for (int t = 0; t < result.grid.frames(); ++t) {
            for (int j = 0; j < kCodecLayers; ++j)
                out << result.grid.at(t, j) << (j + 1 == kCodecLayers ? '\n' : ' ');
        }
    }
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& ckpt_path,
             const std::string& corpus_path, const std::string& mode_str, int n,
             const std::string& report_path, const std::string& plot_path,
             const std::string& sweep_attr, const std::string& sweep_p_list, int sweep_pairs) {
    AppConfig cfg = resolve_config(common);
    const CodecOracle oracle(cfg.codec_seed);
    const Corpus corpus = load_corpus(corpus_path);

    LoadedCheckpoint peek = peek_checkpoint(ckpt_path);
    ModelBundle bundle(peek.cfg, 0);
    load_checkpoint(ckpt_path, bundle, nullptr);

    if (!sweep_attr.empty()) {
        std::vector<double> ps;
        for (const int v : parse_content(sweep_p_list.empty() ? "30,50,80" : sweep_p_list))
            ps.push_back(v / 100.0);
        const auto points = directional_accuracy(corpus, oracle, bundle, sweep_attr, kLow, kHigh,
                                                 ps, sweep_pairs, cfg.train.holdout_speakers,
                                                 cfg.sampling, cfg.workers);
        for (const auto& pt : points)
            std::printf("directional %s p=%.2f accuracy=%.4f\n", sweep_attr.c_str(), pt.p,
                        pt.accuracy);
        if (!report_path.empty()) {
            std::ofstream out(report_path);
            for (const auto& pt : points)
                out << "attribute=" << sweep_attr << " p=" << pt.p << " accuracy=" << pt.accuracy
                    << '\n';
        }
        return 0;
    }

    TaskMode mode;
    if (mode_str == "easy") {
        mode = TaskMode::kEasy;
    } else if (mode_str == "hard") {
        mode = TaskMode::kHard;
    } else if (mode_str == "vc") {
        mode = TaskMode::kVoiceConversion;
    } else {
        throw std::invalid_argument("eval: mode must be easy, hard, or vc");
    }

    const uint64_t task_seed = common.seed_set ? common.seed : cfg.sampling.seed;
    const auto items = build_task(corpus, oracle, mode, n, cfg.train.holdout_speakers, task_seed);
    const auto records =
        run_task(corpus, oracle, bundle, items, cfg.sampling, cfg.eval_candidates, cfg.workers);
    const Summary summary = summarize(records, corpus, mode);
    for (const auto& [key, value] : summary.metrics)
        std::printf("%s = %.6g\n", key.c_str(), value);
    if (!report_path.empty()) write_report(report_path, records, corpus, summary);

    if (!plot_path.empty()) {
        // Trade-off curve: re-run the task over a small top-p sweep.
        std::vector<TradeoffPoint> points;
        for (double p : {0.3, 0.5, 0.8}) {
            SamplingParams sp = cfg.sampling;
            sp.p = p;
            const auto recs = run_task(corpus, oracle, bundle, items, sp, cfg.eval_candidates,
                                       cfg.workers);
            const Summary s = summarize(recs, corpus, mode);
            points.push_back({p, s.metrics.at("cer_mean") * 100.0,
                              s.metrics.at("edit_acc_emotion") * 100.0});
        }
        write_tradeoff_svg(plot_path, points);
    }
    return 0;
}

int cmd_selfcheck(const CommonArgs& common);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"instruction-conditioned codec-token editing LM, with an exact synthetic codec"};
    app.require_subcommand(1);

    CommonArgs common;

    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus manifest");
    int gen_n = 0, gen_speakers = 0;
    std::string gen_out = "corpus.jsonl", gen_prefix;
    gen->add_option("--n", gen_n, "number of utterances");
    gen->add_option("--speakers", gen_speakers, "number of speakers");
    gen->add_option("--out", gen_out, "output manifest path");
    gen->add_option("--id-prefix", gen_prefix, "utterance id prefix");
    add_common(gen, common);

    auto* ann = app.add_subcommand("annotate", "run labelers, vote, and prosody quantization");
    std::string ann_corpus, ann_out;
    ann->add_option("--corpus", ann_corpus, "corpus manifest")->required();
    ann->add_option("--out", ann_out, "output manifest (default: in place)");
    add_common(ann, common);

    auto* pairs = app.add_subcommand("make-pairs", "sample Delta-Pair training triplets");
    std::string mp_corpus, mp_extra, mp_out = "pairs.jsonl";
    int mp_n = 20000;
    bool mp_same_only = false;
    pairs->add_option("--corpus", mp_corpus, "corpus manifest")->required();
    pairs->add_option("--extra-corpus", mp_extra, "second corpus to mix in (data ablation)");
    pairs->add_option("--n", mp_n, "number of triplets");
    pairs->add_option("--out", mp_out, "output triplet file");
    pairs->add_flag("--same-speaker-only", mp_same_only, "task-ablation sampling");
    add_common(pairs, common);

    auto* train = app.add_subcommand("train", "train one stage");
    std::string tr_stage, tr_corpus, tr_extra, tr_pairs, tr_init, tr_resume, tr_out = "run";
    train->add_option("--stage", tr_stage, "pretrain or edit")->required();
    train->add_option("--corpus", tr_corpus, "corpus manifest")->required();
    train->add_option("--extra-corpus", tr_extra, "second corpus (data ablation)");
    train->add_option("--pairs", tr_pairs, "triplet file (edit stage)");
    train->add_option("--init", tr_init, "initialize from checkpoint");
    train->add_option("--resume", tr_resume, "resume a stage checkpoint");
    train->add_option("--out", tr_out, "output directory");
    add_common(train, common);

    auto* synth = app.add_subcommand("synth", "one generation request; prints decoded attributes");
    std::string sy_ckpt, sy_corpus, sy_prompt, sy_task = "tts", sy_text, sy_emotion, sy_pitch,
                sy_energy, sy_speed, sy_ref, sy_grid_out;
    synth->add_option("--ckpt", sy_ckpt, "checkpoint path")->required();
    synth->add_option("--corpus", sy_corpus, "corpus manifest")->required();
    synth->add_option("--prompt", sy_prompt, "prompt utterance id")->required();
    synth->add_option("--task", sy_task, "tts | style-edit | vc");
    synth->add_option("--text", sy_text, "target content symbols, e.g. '3,14,7'");
    synth->add_option("--emotion", sy_emotion, "emotion tag or fill-in");
    synth->add_option("--pitch", sy_pitch, "pitch tag or fill-in");
    synth->add_option("--energy", sy_energy, "energy tag or fill-in");
    synth->add_option("--speed", sy_speed, "speed tag or fill-in");
    synth->add_option("--target-ref", sy_ref, "speaker reference utterance id (vc)");
    synth->add_option("--grid-out", sy_grid_out, "write the generated grid to a file");
    add_common(synth, common);

    auto* ev = app.add_subcommand("eval", "run an evaluation protocol");
    std::string ev_ckpt, ev_corpus, ev_mode = "easy", ev_report, ev_plot, ev_sweep_attr,
                ev_sweep_p;
    int ev_n = 100, ev_sweep_pairs = 50;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--corpus", ev_corpus, "corpus manifest")->required();
    ev->add_option("--mode", ev_mode, "easy | hard | vc");
    ev->add_option("--n", ev_n, "number of items");
    ev->add_option("--report", ev_report, "report file path");
    ev->add_option("--plot", ev_plot, "trade-off curve SVG path");
    ev->add_option("--sweep-attr", ev_sweep_attr, "directional sweep attribute");
    ev->add_option("--sweep-p", ev_sweep_p, "sweep top-p values in percent, e.g. '50,80'");
    ev->add_option("--sweep-pairs", ev_sweep_pairs, "pairs per sweep point");
    add_common(ev, common);

    auto* self = app.add_subcommand("selfcheck", "oracle round-trips, mask probes, grad checks");
    add_common(self, common);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_corpus(common, gen_n, gen_speakers, gen_out, gen_prefix);
        if (ann->parsed()) return cmd_annotate(common, ann_corpus, ann_out);
        if (pairs->parsed())
            return cmd_make_pairs(common, mp_corpus, mp_extra, mp_n, mp_out, mp_same_only);
        if (train->parsed())
            return cmd_train(common, tr_stage, tr_corpus, tr_extra, tr_pairs, tr_init, tr_resume,
                             tr_out);
        if (synth->parsed())
            return cmd_synth(common, sy_ckpt, sy_corpus, sy_prompt, sy_task, sy_text, sy_emotion,
                             sy_pitch, sy_energy, sy_speed, sy_ref, sy_grid_out);
        if (ev->parsed())
            return cmd_eval(common, ev_ckpt, ev_corpus, ev_mode, ev_n, ev_report, ev_plot,
                            ev_sweep_attr, ev_sweep_p, ev_sweep_pairs);
        if (self->parsed()) return cmd_selfcheck(common);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

namespace {

int cmd_selfcheck(const CommonArgs& common) {
    AppConfig cfg = resolve_config(common);
    const uint64_t seed = common.seed_set ? common.seed : 1;
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };

    // Codec round trip on random profiles.
    {
        const CodecOracle oracle(cfg.codec_seed);
        Rng rng(Rng::derive(seed, 0x5e1f, 1));
        bool ok = true;
        for (int i = 0; i < 1000 && ok; ++i) {
            AttributeProfile p;
            p.content = sample_content(rng, 1, 12);
            p.speaker = rng.below_int(kMaxSpeakers);
            p.emotion = rng.below_int(kEmotionClasses);
            p.pitch = rng.below_int(kProsodyLevels);
            p.energy = rng.below_int(kProsodyLevels);
            p.speed = rng.below_int(kProsodyLevels);
            const CodecGrid grid = oracle.encode(p, rng.next_u64());
            ok = oracle.decode(grid).profile == p;
        }
        check("codec round-trip (1000 random profiles)", ok);
    }

    // Prefix/causal mask probe on a small model.
    {
        ModelConfig mc;
        mc.layers = 2;
        mc.heads = 2;
        mc.embed_dim = 32;
        mc.ff_dim = 64;
        mc.dropout = 0.0;
        mc.max_seq_len = 64;
        ModelBundle bundle(mc, seed);

        EditSpec spec = build_spec(Task::kZeroShotTts, {});
        const std::vector<int> x1 = {1, 2, 3}, x2 = {4, 5};
        const std::vector<int32_t> a1 = {10, 10, 11, 11};
        const ComposedSequence seq = compose(spec, x1, x2, a1);
        ArExample ex = make_ar_example(mc, seq, {20, 21});
        const Mat<float> base = bundle.ar.forward(ex);
        const AttentionMask mask = ar_mask(seq, 2);

        bool ok = true;
        for (size_t j = 2; j < ex.rows.size() && ok; ++j) {
            ArExample perturbed = ex;
            perturbed.rows[j] = perturbed.rows[j] == 4 ? 5 : 4;
            const Mat<float> out = bundle.ar.forward(perturbed);
            for (int i = 0; i < base.rows() && ok; ++i) {
                const bool changed = (out.row(i) - base.row(i)).cwiseAbs().maxCoeff() > 0.0f;
                const bool reachable = mask.allowed(i, static_cast<int>(j));
                if (!reachable && changed) ok = false;
                if (i >= static_cast<int>(j) && !changed) ok = false;
            }
        }
        check("attention mask probe (prefix bidirectional, context causal)", ok);
    }

    // Gradient check on a tiny double-precision model.
    {
        ModelConfig mc;
        mc.layers = 1;
        mc.heads = 2;
        mc.embed_dim = 16;
        mc.ff_dim = 32;
        mc.dropout = 0.0;
        mc.max_seq_len = 32;
        SharedParams<double> shared;
        Rng srng(Rng::derive(seed, 0x6ead, 0));
        shared.init(mc.embed_dim, srng);
        ArModel<double> model(mc, Rng::derive(seed, 0x6ead, 1), &shared);

        EditSpec spec = build_spec(Task::kZeroShotTts, {});
        const ComposedSequence seq = compose(spec, {1, 2}, {3}, {7, 8});
        ARBatch batch;
        batch.items.push_back(make_ar_example(mc, seq, {9, 9}));

        bool ok = true;
        int checked = 0;
        Rng pick(Rng::derive(seed, 0x6ead, 2));
        model.visit([&](Tensor<double>& t) { t.zero_grad(); });
        shared.visit([&](Tensor<double>& t) { t.zero_grad(); });
        model.loss(batch, true, nullptr);
        auto check_tensor = [&](Tensor<double>& t) {
            for (int probe = 0; probe < 2; ++probe) {
                const int i = pick.below_int(static_cast<int>(t.v.rows()));
                const int j = pick.below_int(static_cast<int>(t.v.cols()));
                const double saved = t.v(i, j);
                const double h = 1e-6 * std::max(1.0, std::abs(saved));
                t.v(i, j) = saved + h;
                const double up = model.loss(batch, false, nullptr);
                t.v(i, j) = saved - h;
                const double down = model.loss(batch, false, nullptr);
                t.v(i, j) = saved;
                const double fd = (up - down) / (2.0 * h);
                const double an = t.g(i, j);
                const double rel = std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
                if (rel > 1e-4) ok = false;
                ++checked;
            }
        };
        model.visit(check_tensor);
        shared.visit(check_tensor);
        check("AR gradient finite-difference spot check", ok && checked > 0);
    }

    // Nucleus filter against a brute-force oracle.
    {
        Rng rng(Rng::derive(seed, 0x70b, 0));
        bool ok = true;
        for (int trial = 0; trial < 100 && ok; ++trial) {
            const int n = 2 + rng.below_int(31);
            std::vector<double> probs(n);
            double sum = 0.0;
            for (double& v : probs) {
                v = -std::log(1.0 - rng.real01());
                sum += v;
            }
            for (double& v : probs) v /= sum;
            for (double p : {0.3, 0.5, 0.8, 1.0}) {
                const std::vector<double> got = top_p_filter(probs, p);
                // oracle: enumerate sorted prefixes
                std::vector<int> order(n);
                for (int i = 0; i < n; ++i) order[i] = i;
                std::sort(order.begin(), order.end(), [&](int a, int b) {
                    if (probs[a] != probs[b]) return probs[a] > probs[b];
                    return a < b;
                });
                long double cum = 0.0;
                size_t keep = order.size();
                for (size_t i = 0; i < order.size(); ++i) {
                    cum += probs[order[i]];
                    if (cum >= p) {
                        keep = i + 1;
                        break;
                    }
                }
                long double mass = 0.0;
                for (size_t i = 0; i < keep; ++i) mass += probs[order[i]];
                for (size_t i = 0; i < order.size(); ++i) {
                    const double expect =
                        i < keep ? static_cast<double>(probs[order[i]] / mass) : 0.0;
                    if (std::abs(got[order[i]] - expect) > 1e-9) ok = false;
                }
            }
        }
        check("top-p filter vs brute-force oracle", ok);
    }

    if (failures == 0) {
        std::printf("selfcheck: all checks passed\n");
        return 0;
    }
    std::fprintf(stderr, "error: selfcheck: %d check(s) failed\n", failures);
    return 1;
}

}  // namespace
