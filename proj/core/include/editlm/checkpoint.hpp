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

#include <map>
#include <string>

#include "editlm/model.hpp"

namespace editlm {

/// Adam first/second-moment buffers keyed by tensor name.
struct AdamState {
    std::map<std::string, Mat<float>> m;
    std::map<std::string, Mat<float>> v;
    int64_t t = 0;
};

struct CheckpointMeta {
    std::string stage;
    int64_t step = 0;
    uint64_t codec_seed = 0;
    uint64_t train_seed = 0;
};

/// Binary named-tensor archive: a JSON manifest (tensor names, shapes, model
/// config, metadata) followed by raw little-endian float32 data. Round-trips
/// bit-exactly.
void save_checkpoint(const std::string& path, ModelBundle& bundle, const AdamState* adam,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    ModelConfig cfg;
    CheckpointMeta meta;
    bool has_adam = false;
};

/// Reads the manifest only (config + metadata), without tensor data.
LoadedCheckpoint peek_checkpoint(const std::string& path);

/// Loads tensors into an existing bundle whose config must match the file.
LoadedCheckpoint load_checkpoint(const std::string& path, ModelBundle& bundle, AdamState* adam);

}  // namespace editlm
