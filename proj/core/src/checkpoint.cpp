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

#include "editlm/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace editlm {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'E', 'L', 'M', 'C', 'K', 'P', 'T', '1'};

json config_to_json(const ModelConfig& cfg) {
    return json{{"layers", cfg.layers},
                {"heads", cfg.heads},
                {"embed_dim", cfg.embed_dim},
                {"ff_dim", cfg.ff_dim},
                {"dropout", cfg.dropout},
                {"max_seq_len", cfg.max_seq_len},
                {"text_vocab", cfg.text_vocab},
                {"codec_vocab", cfg.codec_vocab},
                {"use_positional", cfg.use_positional},
                {"full_prefix_bidirectional", cfg.full_prefix_bidirectional}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.layers = j.at("layers");
    cfg.heads = j.at("heads");
    cfg.embed_dim = j.at("embed_dim");
    cfg.ff_dim = j.at("ff_dim");
    cfg.dropout = j.at("dropout");
    cfg.max_seq_len = j.at("max_seq_len");
    cfg.text_vocab = j.at("text_vocab");
    cfg.codec_vocab = j.at("codec_vocab");
    cfg.use_positional = j.at("use_positional");
    cfg.full_prefix_bidirectional = j.at("full_prefix_bidirectional");
    return cfg;
}

struct Entry {
    std::string name;
    int64_t rows = 0, cols = 0, offset = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, ModelBundle& bundle, const AdamState* adam,
                     const CheckpointMeta& meta) {
    std::vector<Entry> entries;
    std::vector<const Mat<float>*> data;
    int64_t offset = 0;
    auto add = [&](const std::string& name, const Mat<float>& m) {
        entries.push_back({name, m.rows(), m.cols(), offset});
        data.push_back(&m);
        offset += static_cast<int64_t>(m.size()) * static_cast<int64_t>(sizeof(float));
    };
    bundle.visit([&](Tensor<float>& t) { add(t.name, t.v); });
    if (adam != nullptr) {
        for (const auto& [name, m] : adam->m) add("adam.m." + name, m);
        for (const auto& [name, m] : adam->v) add("adam.v." + name, m);
    }

    json manifest;
    manifest["model"] = config_to_json(bundle.cfg);
    manifest["stage"] = meta.stage;
    manifest["step"] = meta.step;
    manifest["codec_seed"] = meta.codec_seed;
    manifest["train_seed"] = meta.train_seed;
    manifest["adam_t"] = adam != nullptr ? adam->t : 0;
    manifest["has_adam"] = adam != nullptr;
    json tensors = json::array();
    for (const auto& e : entries) {
        tensors.push_back(json{{"name", e.name}, {"rows", e.rows}, {"cols", e.cols},
                               {"offset", e.offset}});
    }
    manifest["tensors"] = tensors;
    const std::string header = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t header_len = header.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Mat<float>* m : data) {
        out.write(reinterpret_cast<const char*>(m->data()),
                  static_cast<std::streamsize>(m->size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

namespace {

json read_manifest(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
    return json::parse(header);
}

LoadedCheckpoint meta_of(const json& manifest) {
    LoadedCheckpoint out;
    out.cfg = config_from_json(manifest.at("model"));
    out.meta.stage = manifest.at("stage");
    out.meta.step = manifest.at("step");
    out.meta.codec_seed = manifest.at("codec_seed");
    out.meta.train_seed = manifest.at("train_seed");
    out.has_adam = manifest.at("has_adam");
    return out;
}

}  // namespace

LoadedCheckpoint peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    return meta_of(read_manifest(in, path));
}

LoadedCheckpoint load_checkpoint(const std::string& path, ModelBundle& bundle, AdamState* adam) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    const json manifest = read_manifest(in, path);
    LoadedCheckpoint out = meta_of(manifest);
    if (out.cfg != bundle.cfg)
        throw std::runtime_error("checkpoint: model config mismatch in " + path);

    const std::streampos data_begin = in.tellg();
    std::map<std::string, Entry> index;
    for (const auto& t : manifest.at("tensors")) {
        Entry e{t.at("name"), t.at("rows"), t.at("cols"), t.at("offset")};
        index[e.name] = e;
    }
    auto read_into = [&](const std::string& name, Mat<float>& m) {
        auto it = index.find(name);
        if (it == index.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
        const Entry& e = it->second;
        m.resize(e.rows, e.cols);
        in.seekg(data_begin + static_cast<std::streamoff>(e.offset));
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
    };

    bundle.visit([&](Tensor<float>& t) {
        Mat<float> m;
        read_into(t.name, m);
        if (m.rows() != t.v.rows() || m.cols() != t.v.cols())
            throw std::runtime_error("checkpoint: shape mismatch for " + t.name);
        t.v = m;
    });
    if (adam != nullptr) {
        adam->m.clear();
        adam->v.clear();
        adam->t = manifest.at("adam_t");
        if (out.has_adam) {
            bundle.visit([&](Tensor<float>& t) {
                read_into("adam.m." + t.name, adam->m[t.name]);
                read_into("adam.v." + t.name, adam->v[t.name]);
            });
        }
    }
    return out;
}

}  // namespace editlm
