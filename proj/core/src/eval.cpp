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

#include "editlm/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <thread>

namespace editlm {

namespace {
using json = nlohmann::ordered_json;
}

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double content_error_rate(const CodecGrid& generated, const std::vector<int>& target_content,
                          const CodecOracle& oracle) {
    if (target_content.empty()) throw std::invalid_argument("cer: empty target content");
    const DecodeResult decoded = oracle.decode(generated);
    return static_cast<double>(levenshtein(decoded.profile.content, target_content)) /
           static_cast<double>(target_content.size());
}

double sim_score(const CodecGrid& generated, int reference_speaker, const CodecOracle& oracle) {
    const DecodeResult decoded = oracle.decode(generated);
    return cosine(oracle.speaker_vector(decoded.profile.speaker),
                  oracle.speaker_vector(reference_speaker));
}

namespace {

std::vector<int> holdout_pool(const Corpus& corpus, int holdout_speakers) {
    const int first_holdout = corpus.n_speakers - holdout_speakers;
    if (holdout_speakers < 1 || first_holdout < 1)
        throw std::runtime_error("eval: corpus has no usable speaker holdout");
    std::vector<int> pool;
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        if (corpus.utterances[i].profile.speaker >= first_holdout)
            pool.push_back(static_cast<int>(i));
    }
    if (pool.empty()) throw std::runtime_error("eval: holdout is empty");
    return pool;
}

int pick_prompt_with_emotion(const std::vector<int>& pool, const Corpus& corpus, Rng& rng,
                             int emotion, bool equal) {
    std::vector<int> matches;
    for (int idx : pool) {
        const bool is_match = corpus.utterances[idx].profile.emotion == emotion;
        if (is_match == equal) matches.push_back(idx);
    }
    if (matches.empty()) throw std::runtime_error("eval: no prompt with the requested emotion");
    return matches[rng.below_int(static_cast<int>(matches.size()))];
}

}  // namespace

std::vector<EvalItem> build_task(const Corpus& corpus, const CodecOracle& oracle, TaskMode mode,
                                 int n, int holdout_speakers, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("eval: n must be positive");
    const std::vector<int> pool = holdout_pool(corpus, holdout_speakers);
    const int train_speakers = corpus.n_speakers - holdout_speakers;

    std::vector<EvalItem> items;
    items.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, 0xe7a1, static_cast<uint64_t>(i)));
        EvalItem item;
        item.x2 = sample_content(rng, 4, 12);
        switch (mode) {
            case TaskMode::kEasy: {
                // Neutral prompts; targets balanced over the four non-neutral
                // emotions.
                const int target_emotion = 1 + (i % (kEmotionClasses - 1));
                item.task = Task::kStyleEdit;
                item.prompt_index = pick_prompt_with_emotion(pool, corpus, rng, kNeutral, true);
                TagRequest tags;
                tags.emotion = target_emotion;
                item.spec = build_spec(Task::kStyleEdit, tags);
                break;
            }
            case TaskMode::kHard: {
                // Targets balanced over all five emotions; exactly 80% of
                // prompts carry a different emotion than the target.
                const int target_emotion = i % kEmotionClasses;
                const bool conflict = (i / kEmotionClasses) % 5 != 0;
                item.task = Task::kStyleEdit;
                item.prompt_index =
                    pick_prompt_with_emotion(pool, corpus, rng, target_emotion, !conflict);
                TagRequest tags;
                tags.emotion = target_emotion;
                item.spec = build_spec(Task::kStyleEdit, tags);
                break;
            }
            case TaskMode::kVoiceConversion: {
                // Prompts from the holdout; target identities cycle over the
                // training speakers (the code table has no structure an
                // unseen-speaker vector could generalize from).
                item.task = Task::kVoiceConversion;
                item.prompt_index = pool[rng.below_int(static_cast<int>(pool.size()))];
                int target_spk = i % train_speakers;
                if (target_spk == corpus.utterances[item.prompt_index].profile.speaker) {
                    target_spk = (target_spk + 1) % train_speakers;
                }
                item.target_speaker = target_spk;
                const std::vector<int> refs = corpus.indices_of_speaker(target_spk);
                if (refs.empty()) throw std::runtime_error("eval: target speaker has no utterance");
                item.ref_index = refs[rng.below_int(static_cast<int>(refs.size()))];
                const SpeakerVec vec = oracle.speaker_vector(target_spk);
                item.spec = build_spec(Task::kVoiceConversion, {}, &vec);
                break;
            }
        }
        items.push_back(std::move(item));
    }
    return items;
}

namespace {

EvalRecord eval_one(const Corpus& corpus, const CodecOracle& oracle, const ModelBundle& bundle,
                    const EvalItem& item, const SamplingParams& sampling, int candidates,
                    uint64_t item_seed) {
    const Utterance& prompt = corpus.utterances.at(item.prompt_index);

    std::vector<CodecGrid> grids;
    bool any_truncated = false;
    for (int c = 0; c < candidates; ++c) {
        SamplingParams per = sampling;
        per.seed = Rng::derive(item_seed, static_cast<uint64_t>(c));
        GenerateResult gen =
            generate(bundle, item.spec, prompt.transcript(), item.x2, prompt.grid, per);
        any_truncated |= gen.truncated;
        grids.push_back(std::move(gen.grid));
    }
    const int ref_speaker = item.task == Task::kVoiceConversion ? item.target_speaker
                                                                : prompt.profile.speaker;
    const CodecGrid& chosen =
        best_of_n(grids, item.x2, oracle.speaker_vector(ref_speaker), oracle, candidates);

    EvalRecord rec;
    rec.item = item;
    rec.truncated = any_truncated;
    if (chosen.tokens.empty()) return rec;  // total failure, worst-case metrics

    const DecodeResult decoded = oracle.decode(chosen);
    rec.ok = true;
    rec.decoded = decoded.profile;
    rec.speaker_exact = decoded.speaker_match.exact;
    rec.speaker_margin = decoded.speaker_match.margin;
    rec.emotion_margin = decoded.emotion_margin;
    rec.cer = content_error_rate(chosen, item.x2, oracle);
    rec.sim_to_prompt = cosine(oracle.speaker_vector(decoded.profile.speaker),
                               oracle.speaker_vector(prompt.profile.speaker));
    if (item.task == Task::kVoiceConversion) {
        rec.sim_to_target = cosine(oracle.speaker_vector(decoded.profile.speaker),
                                   oracle.speaker_vector(item.target_speaker));
    }
    return rec;
}

}  // namespace

std::vector<EvalRecord> run_task(const Corpus& corpus, const CodecOracle& oracle,
                                 const ModelBundle& bundle, const std::vector<EvalItem>& items,
                                 const SamplingParams& sampling, int candidates, int workers) {
    if (candidates < 1) throw std::invalid_argument("eval: candidates must be >= 1");
    std::vector<EvalRecord> records(items.size());
    auto work = [&](int begin, int step) {
        for (size_t i = begin; i < items.size(); i += step) {
            const uint64_t item_seed = Rng::derive(sampling.seed, 0x17e3, i);
            records[i] = eval_one(corpus, oracle, bundle, items[i], sampling, candidates,
                                  item_seed);
        }
    };
    if (workers <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
        for (auto& t : threads) t.join();
    }
    return records;
}

namespace {

struct AttrAccess {
    std::optional<int> EditSpec::* spec_field;
    int AttributeProfile::* profile_field;
};

AttrAccess attr_access(const std::string& attribute) {
    if (attribute == "emotion") return {&EditSpec::emotion, &AttributeProfile::emotion};
    if (attribute == "pitch") return {&EditSpec::pitch, &AttributeProfile::pitch};
    if (attribute == "energy") return {&EditSpec::energy, &AttributeProfile::energy};
    if (attribute == "speed") return {&EditSpec::speed, &AttributeProfile::speed};
    throw std::invalid_argument("eval: unknown attribute " + attribute);
}

}  // namespace

double edit_accuracy(const std::vector<EvalRecord>& records, const Corpus& corpus,
                     const std::string& attribute, bool explicit_instances) {
    const AttrAccess access = attr_access(attribute);
    int64_t total = 0, correct = 0;
    for (const auto& rec : records) {
        const std::optional<int>& tag = rec.item.spec.*access.spec_field;
        if (tag.has_value() != explicit_instances) continue;
        ++total;
        if (!rec.ok) continue;
        const int expected =
            tag ? *tag
                : corpus.utterances.at(rec.item.prompt_index).profile.*access.profile_field;
        if (rec.decoded.*access.profile_field == expected) ++correct;
    }
    if (total == 0) return 0.0;
    return static_cast<double>(correct) / static_cast<double>(total);
}

Summary summarize(const std::vector<EvalRecord>& records, const Corpus& corpus, TaskMode mode) {
    Summary s;
    const double n = static_cast<double>(records.size());
    s.metrics["n"] = n;

    double cer = 0.0, speaker_keep = 0.0, truncated = 0.0;
    double spk_margin = 0.0, emo_margin = 0.0;
    for (const auto& rec : records) {
        cer += rec.cer;
        truncated += rec.truncated ? 1.0 : 0.0;
        spk_margin += rec.speaker_margin;
        emo_margin += rec.emotion_margin;
        const int prompt_spk = corpus.utterances.at(rec.item.prompt_index).profile.speaker;
        if (rec.ok && rec.decoded.speaker == prompt_spk) speaker_keep += 1.0;
    }
    s.metrics["cer_mean"] = cer / n;
    s.metrics["truncated_frac"] = truncated / n;
    s.metrics["speaker_retention"] = speaker_keep / n;
    // the oracle stand-in for classifier confidence: code-match margins
    s.metrics["speaker_margin_mean"] = spk_margin / n;
    s.metrics["emotion_margin_mean"] = emo_margin / n;

    if (mode == TaskMode::kVoiceConversion) {
        double polarity = 0.0, sim_target = 0.0, sim_source = 0.0, exact = 0.0;
        for (const auto& rec : records) {
            if (rec.ok && rec.sim_to_target > rec.sim_to_prompt) polarity += 1.0;
            sim_target += rec.sim_to_target;
            sim_source += rec.sim_to_prompt;
            exact += (rec.ok && rec.decoded.speaker == rec.item.target_speaker) ? 1.0 : 0.0;
        }
        s.metrics["vc_polarity"] = polarity / n;
        s.metrics["sim_to_target_mean"] = sim_target / n;
        s.metrics["sim_to_source_mean"] = sim_source / n;
        s.metrics["vc_exact"] = exact / n;
        return s;
    }

    s.metrics["edit_acc_emotion"] = edit_accuracy(records, corpus, "emotion", true);
    double retention_sum = 0.0;
    for (const char* attr : {"pitch", "energy", "speed"}) {
        const double r = edit_accuracy(records, corpus, attr, false);
        s.metrics[std::string("retention_") + attr] = r;
        retention_sum += r;
    }
    s.metrics["retention_mean"] = retention_sum / 3.0;

    double conflicts = 0.0;
    for (const auto& rec : records) {
        if (!rec.item.spec.emotion) continue;
        const int prompt_emotion = corpus.utterances.at(rec.item.prompt_index).profile.emotion;
        conflicts += prompt_emotion != *rec.item.spec.emotion;
    }
    s.metrics["conflict_frac"] = conflicts / n;
    return s;
}

std::vector<DirectionalPoint> directional_accuracy(const Corpus& corpus, const CodecOracle& oracle,
                                                   const ModelBundle& bundle,
                                                   const std::string& attribute, int low_level,
                                                   int high_level,
                                                   const std::vector<double>& p_values,
                                                   int n_pairs, int holdout_speakers,
                                                   SamplingParams sampling, int workers) {
    if (low_level >= high_level) throw std::invalid_argument("directional: low must be < high");
    const AttrAccess access = attr_access(attribute);
    const std::vector<int> pool = holdout_pool(corpus, holdout_speakers);

    std::vector<DirectionalPoint> points;
    for (double p : p_values) {
        std::vector<double> outcomes(n_pairs, 0.0);
        auto work = [&](int begin, int step) {
            for (int i = begin; i < n_pairs; i += step) {
                Rng rng(Rng::derive(sampling.seed, 0xd19e, static_cast<uint64_t>(i)));
                const int prompt_idx = pool[rng.below_int(static_cast<int>(pool.size()))];
                const Utterance& prompt = corpus.utterances[prompt_idx];
                const std::vector<int> x2 = sample_content(rng, 4, 12);

                auto gen_level = [&](int level, uint64_t tag) {
                    TagRequest tags;
                    if (attribute == "emotion") {
                        tags.emotion = level;
                    } else if (attribute == "pitch") {
                        tags.pitch = level;
                    } else if (attribute == "energy") {
                        tags.energy = level;
                    } else {
                        tags.speed = level;
                    }
                    EditSpec spec = build_spec(Task::kStyleEdit, tags);
                    SamplingParams per = sampling;
                    per.p = p;
                    per.seed = Rng::derive(sampling.seed, 0xd20, static_cast<uint64_t>(i), tag);
                    return generate(bundle, spec, prompt.transcript(), x2, prompt.grid, per);
                };
                const GenerateResult low = gen_level(low_level, 1);
                const GenerateResult high = gen_level(high_level, 2);
                if (low.grid.tokens.empty() || high.grid.tokens.empty()) {
                    outcomes[i] = 0.0;
                    continue;
                }
                const int lo = oracle.decode(low.grid).profile.*access.profile_field;
                const int hi = oracle.decode(high.grid).profile.*access.profile_field;
                if (lo < hi) {
                    outcomes[i] = 1.0;
                } else if (lo == hi) {
                    outcomes[i] = rng.real01() < 0.5 ? 1.0 : 0.0;  // tie broken randomly
                } else {
                    outcomes[i] = 0.0;
                }
            }
        };
        if (workers <= 1) {
            work(0, 1);
        } else {
            std::vector<std::thread> threads;
            for (int w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
            for (auto& t : threads) t.join();
        }
        double acc = 0.0;
        for (double o : outcomes) acc += o;
        points.push_back({p, acc / n_pairs});
    }
    return points;
}

void write_report(const std::string& path, const std::vector<EvalRecord>& records,
                  const Corpus& corpus, const Summary& summary) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("eval: cannot write report " + path);
    for (const auto& rec : records) {
        const Utterance& prompt = corpus.utterances.at(rec.item.prompt_index);
        json line;
        line["task"] = rec.item.task == Task::kVoiceConversion ? "voice_conversion"
                       : rec.item.task == Task::kZeroShotTts   ? "tts"
                                                               : "style_edit";
        line["prompt"] = prompt.id;
        json spec;
        auto tag_str = [](const std::optional<int>& t, const char* (*namer)(int)) {
            return t ? json(namer(*t)) : json("fill-in");
        };
        spec["emotion"] = tag_str(rec.item.spec.emotion, emotion_name);
        spec["pitch"] = tag_str(rec.item.spec.pitch, level_name);
        spec["energy"] = tag_str(rec.item.spec.energy, level_name);
        spec["speed"] = tag_str(rec.item.spec.speed, level_name);
        line["spec"] = spec;
        line["ok"] = rec.ok;
        line["truncated"] = rec.truncated;
        line["cer"] = rec.cer;
        if (rec.ok) {
            json decoded;
            decoded["speaker"] = rec.decoded.speaker;
            decoded["emotion"] = emotion_name(rec.decoded.emotion);
            decoded["pitch"] = level_name(rec.decoded.pitch);
            decoded["energy"] = level_name(rec.decoded.energy);
            decoded["speed"] = level_name(rec.decoded.speed);
            line["decoded"] = decoded;
            line["speaker_exact"] = rec.speaker_exact;
            line["speaker_margin"] = rec.speaker_margin;
            line["emotion_margin"] = rec.emotion_margin;
            line["sim_to_prompt"] = rec.sim_to_prompt;
            if (rec.item.task == Task::kVoiceConversion) {
                line["sim_to_target"] = rec.sim_to_target;
                line["target_speaker"] = rec.item.target_speaker;
            }
        }
        out << line.dump() << '\n';
    }
    json tail;
    tail["summary"] = summary.metrics;
    out << tail.dump() << '\n';
}

void write_tradeoff_svg(const std::string& path, const std::vector<TradeoffPoint>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("eval: cannot write plot " + path);

    const int width = 560, height = 420;
    const int margin = 60;
    double max_cer = 1.0;
    for (const auto& pt : points) max_cer = std::max(max_cer, pt.cer_percent);
    max_cer = std::max(max_cer, 5.0) * 1.1;

    auto sx = [&](double cer) {
        return margin + cer / max_cer * (width - 2 * margin);
    };
    auto sy = [&](double acc) {
        return height - margin - acc / 100.0 * (height - 2 * margin);
    };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 16
        << "\" text-anchor=\"middle\" font-size=\"13\">content error rate (%)</text>\n";
    out << "<text x=\"18\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " << height / 2
        << ")\">edit accuracy (%)</text>\n";

    if (!points.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#2266cc\" stroke-width=\"2\" points=\"";
        for (const auto& pt : points) out << sx(pt.cer_percent) << ',' << sy(pt.acc_percent) << ' ';
        out << "\"/>\n";
        for (const auto& pt : points) {
            out << "<circle cx=\"" << sx(pt.cer_percent) << "\" cy=\"" << sy(pt.acc_percent)
                << "\" r=\"4\" fill=\"#2266cc\"/>\n";
            char label[64];
            std::snprintf(label, sizeof(label), "p=%.2g", pt.p);
            out << "<text x=\"" << sx(pt.cer_percent) + 8 << "\" y=\"" << sy(pt.acc_percent) - 8
                << "\" font-size=\"12\">" << label << "</text>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace editlm
