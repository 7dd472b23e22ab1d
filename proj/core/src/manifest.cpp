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

#include "editlm/manifest.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <unordered_map>

namespace editlm {

namespace {
using json = nlohmann::ordered_json;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    json header;
    header["n_speakers"] = corpus.n_speakers;
    header["n_utterances"] = corpus.utterances.size();
    out << header.dump() << '\n';
    for (const auto& utt : corpus.utterances) {
        json line;
        line["id"] = utt.id;
        line["speaker"] = utt.profile.speaker;
        line["emotion"] = utt.profile.emotion;
        line["pitch"] = utt.profile.pitch;
        line["energy"] = utt.profile.energy;
        line["speed"] = utt.profile.speed;
        line["content"] = utt.profile.content;
        json grid = json::array();
        for (int t = 0; t < utt.grid.frames(); ++t) {
            json frame = json::array();
            for (int j = 0; j < kCodecLayers; ++j) frame.push_back(utt.grid.at(t, j));
            grid.push_back(std::move(frame));
        }
        line["grid"] = std::move(grid);
        line["seed"] = utt.seed;
        if (utt.annotation) {
            const Annotation& ann = *utt.annotation;
            json reports = json::array();
            for (const auto& r : ann.reports) {
                reports.push_back(json{{"labeler", std::string(1, r.labeler)},
                                       {"emotion", r.emotion},
                                       {"confidence", r.confidence}});
            }
            line["reports"] = std::move(reports);
            line["accepted_label"] =
                ann.accepted_label ? json(*ann.accepted_label) : json(nullptr);
            line["annotated"] =
                json{{"pitch", ann.pitch}, {"energy", ann.energy}, {"speed", ann.speed}};
        } else {
            line["reports"] = json::array();
            line["accepted_label"] = nullptr;
        }
        out << line.dump() << '\n';
    }
    if (!out) throw std::runtime_error("manifest: write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("manifest: empty file " + path);
    const json header = json::parse(line);

    Corpus corpus;
    corpus.n_speakers = header.at("n_speakers");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Utterance utt;
        utt.id = j.at("id");
        utt.profile.speaker = j.at("speaker");
        utt.profile.emotion = j.at("emotion");
        utt.profile.pitch = j.at("pitch");
        utt.profile.energy = j.at("energy");
        utt.profile.speed = j.at("speed");
        utt.profile.content = j.at("content").get<std::vector<int>>();
        const auto& grid = j.at("grid");
        utt.grid.tokens.reserve(grid.size() * kCodecLayers);
        for (const auto& frame : grid) {
            if (frame.size() != kCodecLayers)
                throw std::runtime_error("manifest: grid row is not 8 wide in " + utt.id);
            for (const auto& tok : frame) utt.grid.tokens.push_back(tok.get<int32_t>());
        }
        utt.seed = j.at("seed");
        if (j.contains("annotated")) {
            Annotation ann;
            const auto& reports = j.at("reports");
            for (size_t r = 0; r < 3 && r < reports.size(); ++r) {
                ann.reports[r].labeler = reports[r].at("labeler").get<std::string>()[0];
                ann.reports[r].emotion = reports[r].at("emotion");
                ann.reports[r].confidence = reports[r].at("confidence");
            }
            if (!j.at("accepted_label").is_null())
                ann.accepted_label = j.at("accepted_label").get<int>();
            ann.pitch = j.at("annotated").at("pitch");
            ann.energy = j.at("annotated").at("energy");
            ann.speed = j.at("annotated").at("speed");
            utt.annotation = ann;
        }
        corpus.utterances.push_back(std::move(utt));
    }
    return corpus;
}

void merge_corpus(Corpus& corpus, const Corpus& extra, int speaker_offset) {
    if (speaker_offset + extra.n_speakers > kMaxSpeakers)
        throw std::invalid_argument("manifest: merged speaker ids exceed the table");
    for (const auto& utt : extra.utterances) {
        Utterance copy = utt;
        copy.profile.speaker += speaker_offset;
        corpus.utterances.push_back(std::move(copy));
    }
    corpus.n_speakers = std::max(corpus.n_speakers, speaker_offset + extra.n_speakers);
}

namespace {

json tag_json(const std::optional<int>& tag, const char* (*namer)(int)) {
    return tag ? json(namer(*tag)) : json("fill-in");
}

std::optional<int> tag_from_json(const json& j, int (*parser)(const std::string&)) {
    const std::string s = j.get<std::string>();
    if (s == "fill-in") return std::nullopt;
    const int v = parser(s);
    if (v < 0) throw std::runtime_error("manifest: unknown tag name " + s);
    return v;
}

}  // namespace

void save_pairs(const std::string& path, const Corpus& corpus, const std::vector<Triplet>& pairs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    for (const auto& t : pairs) {
        json line;
        line["prompt"] = corpus.utterances.at(t.prompt).id;
        line["target"] = corpus.utterances.at(t.target).id;
        line["kind"] = triplet_kind_name(t.kind);
        json spec;
        spec["emotion"] = tag_json(t.spec.emotion, emotion_name);
        spec["pitch"] = tag_json(t.spec.pitch, level_name);
        spec["energy"] = tag_json(t.spec.energy, level_name);
        spec["speed"] = tag_json(t.spec.speed, level_name);
        line["spec"] = std::move(spec);
        line["speaker_ref"] = t.ref ? json(corpus.utterances.at(*t.ref).id) : json(nullptr);
        out << line.dump() << '\n';
    }
    if (!out) throw std::runtime_error("manifest: write failed: " + path);
}

std::vector<Triplet> load_pairs(const std::string& path, const Corpus& corpus,
                                const CodecOracle& oracle) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);

    std::unordered_map<std::string, int> index;
    for (size_t i = 0; i < corpus.utterances.size(); ++i)
        index[corpus.utterances[i].id] = static_cast<int>(i);
    auto resolve = [&](const std::string& id) {
        auto it = index.find(id);
        if (it == index.end()) throw std::runtime_error("manifest: unknown utterance id " + id);
        return it->second;
    };

    std::vector<Triplet> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Triplet t;
        t.prompt = resolve(j.at("prompt"));
        t.target = resolve(j.at("target"));
        const std::string kind = j.at("kind");
        if (kind == "same_speaker") {
            t.kind = TripletKind::kSameSpeaker;
        } else if (kind == "cross_speaker") {
            t.kind = TripletKind::kCrossSpeaker;
        } else {
            throw std::runtime_error("manifest: unknown triplet kind " + kind);
        }
        const auto& spec = j.at("spec");
        t.spec.emotion = tag_from_json(spec.at("emotion"), emotion_from_name);
        t.spec.pitch = tag_from_json(spec.at("pitch"), level_from_name);
        t.spec.energy = tag_from_json(spec.at("energy"), level_from_name);
        t.spec.speed = tag_from_json(spec.at("speed"), level_from_name);
        if (!j.at("speaker_ref").is_null()) {
            t.ref = resolve(j.at("speaker_ref"));
            t.spec.speaker =
                oracle.speaker_vector(corpus.utterances[*t.ref].profile.speaker);
        }
        pairs.push_back(std::move(t));
    }
    return pairs;
}

}  // namespace editlm
