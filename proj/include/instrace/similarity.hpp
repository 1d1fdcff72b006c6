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

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace instrace {

enum class SimilarityMethod { string_match, levenshtein, jaccard, cosine };

std::string_view to_string(SimilarityMethod m);

struct SimilarityScore {
    SimilarityMethod method;
    double value = 0;  // in [0, 1]; string_match is 0 or 1
};

/// Minimal insert/delete/substitute count (bytewise).
std::size_t levenshtein_distance(std::string_view a, std::string_view b);

/// 1 - d / max(|a|, |b|), and 1 when both are empty.
double levenshtein_similarity(std::string_view a, std::string_view b);

/// |A n B| / |A u B|, 1 when both are empty.
double jaccard_similarity(const std::set<std::string>& a, const std::set<std::string>& b);

/// Term-frequency vectors keyed by term. 0 if either norm is 0.
double cosine_similarity(const std::map<std::string, double>& a, const std::map<std::string, double>& b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// 1 if the registry-normalized names are equal, else 0.
double string_match(std::string_view a, std::string_view b);

/// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view text);

struct IndexEntry {
    std::string name;
    std::string metadata;  // summary / description text, optional
};

struct SimilarityThresholds {
    double string_match = 1.0;
    double levenshtein = 0.85;
    double jaccard = 0.6;
    double cosine = 0.6;
};

/// All four scores for a pair, in method order.
std::vector<SimilarityScore> score_pair(const IndexEntry& a, const IndexEntry& b);

struct Candidate {
    std::string name;
    SimilarityMethod best_method;
    double score = 0;
    std::vector<SimilarityScore> scores;
};

/// Index entries passing at least one method threshold, ranked by the best
/// score across methods (descending), ties by name.
std::vector<Candidate> find_counterparts(const IndexEntry& query, std::span<const IndexEntry> index,
                                         const SimilarityThresholds& thresholds = {});

/// `query,candidate,method,score` rows with header.
std::string counterparts_csv(std::string_view query, std::span<const Candidate> candidates);

}  // namespace instrace
