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

#include <string>
#include <vector>

#include "editlm/corpus.hpp"

namespace editlm {

/// Corpus manifest: one JSON record per line with fields
/// {id, speaker, emotion, pitch, energy, speed, content, grid, seed,
///  accepted_label, reports, annotated}.
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

/// Appends the utterances of `extra` to `corpus`, remapping speaker ids by
/// `speaker_offset` so two generated corpora can coexist (data-mix training).
void merge_corpus(Corpus& corpus, const Corpus& extra, int speaker_offset);

/// Triplet file: one JSON record per line with prompt id, target id, kind,
/// spec (tag names or "fill-in"), and speaker_ref id.
void save_pairs(const std::string& path, const Corpus& corpus, const std::vector<Triplet>& pairs);
std::vector<Triplet> load_pairs(const std::string& path, const Corpus& corpus,
                                const CodecOracle& oracle);

}  // namespace editlm
