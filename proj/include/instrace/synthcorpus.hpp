// Copyright 2026 The instrace Authors
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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "instrace/trace_model.hpp"

namespace instrace {

// Signature ids are builtin pattern catalog ids plus two non-syscall motifs.
inline constexpr std::string_view kMotifPort6667 = "net_port_6667";  // outbound TCP to port 6667
inline constexpr std::string_view kMotifRootSsh = "dir_root_ssh";    // opens under /root/.ssh

/// Every signature that only malicious bundles may carry.
std::vector<std::string> malicious_signatures();
/// Catalog templates that ordinary installs produce.
std::vector<std::string> benign_motifs();
bool is_malicious_only(std::string_view signature);
bool is_known_signature(std::string_view signature);

struct SynthProfile {
    Label label = Label::benign;
    std::uint64_t seed = 0;
    double base_event_rate = 20.0;  // filler syscalls per second of install
    std::vector<std::string> injected_signatures;
    // 0 gives class-exclusive signatures only. Higher values add filler
    // syscalls, benign anomalies (failed opens, odd ports) and let malicious
    // bundles skip the ENOENT probe burst.
    double noise_level = 0.2;
    std::string name;  // empty: derived from label and seed

    /// One message per violated rule; empty when valid.
    std::vector<std::string> validate() const;
};

/// Deterministic in the profile. Every injected signature appears at least
/// once as a contiguous run. Throws InvalidProfile.
TraceBundle synth_bundle(const SynthProfile& profile);

struct SynthCorpus {
    std::vector<TraceBundle> bundles;  // benign first, then malicious
    std::vector<SynthProfile> profiles;
    nlohmann::json metadata;
};

/// Bundle i is generated from derive_seed(seed, i). Malicious bundles draw
/// one to three signatures and, with probability 1 - noise_level / 2, the
/// ENOENT probe burst as well. Throws std::invalid_argument for zero counts.
SynthCorpus synth_corpus(std::size_t n_benign, std::size_t n_malicious, std::uint64_t seed,
                         double noise_level = 0.2, unsigned workers = 0);

/// Writes `bundles/<name>.json` per bundle and `corpus.json`.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace instrace
