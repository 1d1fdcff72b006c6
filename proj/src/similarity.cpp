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

#include "instrace/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "instrace/trace_model.hpp"

namespace instrace {
namespace {

std::map<std::string, double> term_frequencies(const std::vector<std::string>& tokens) {
    std::map<std::string, double> tf;
    for (const auto& t : tokens) tf[t] += 1.0;
    return tf;
}

std::vector<std::string> entry_tokens(const IndexEntry& e) {
    auto tokens = tokenize(e.name);
    auto meta = tokenize(e.metadata);
    tokens.insert(tokens.end(), meta.begin(), meta.end());
    return tokens;
}

}  // namespace

std::string_view to_string(SimilarityMethod m) {
    switch (m) {
        case SimilarityMethod::string_match: return "string_match";
        case SimilarityMethod::levenshtein: return "levenshtein";
        case SimilarityMethod::jaccard: return "jaccard";
        case SimilarityMethod::cosine: return "cosine";
    }
    return "?";
}

std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein_distance(a, b)) / static_cast<double>(longest);
}

double jaccard_similarity(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t common = 0;
    for (const auto& x : a) common += b.contains(x) ? 1 : 0;
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

double cosine_similarity(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (const auto& [k, v] : a) {
        na += v * v;
        if (auto it = b.find(k); it != b.end()) dot += v * it->second;
    }
    for (const auto& [k, v] : b) nb += v * v;
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double string_match(std::string_view a, std::string_view b) {
    return normalize_package_name(a) == normalize_package_name(b) ? 1.0 : 0.0;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<SimilarityScore> score_pair(const IndexEntry& a, const IndexEntry& b) {
    const auto ta = entry_tokens(a);
    const auto tb = entry_tokens(b);
    const std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
    const std::string na = normalize_package_name(a.name), nb = normalize_package_name(b.name);
    return {
        {SimilarityMethod::string_match, string_match(a.name, b.name)},
        {SimilarityMethod::levenshtein, levenshtein_similarity(na, nb)},
        {SimilarityMethod::jaccard, jaccard_similarity(sa, sb)},
        {SimilarityMethod::cosine, cosine_similarity(term_frequencies(ta), term_frequencies(tb))},
    };
}

std::vector<Candidate> find_counterparts(const IndexEntry& query, std::span<const IndexEntry> index,
                                         const SimilarityThresholds& t) {
    std::vector<Candidate> out;
    for (const auto& entry : index) {
        auto scores = score_pair(query, entry);
        const double limits[] = {t.string_match, t.levenshtein, t.jaccard, t.cosine};
        bool pass = false;
        Candidate c{entry.name, SimilarityMethod::string_match, -1.0, scores};
        for (std::size_t m = 0; m < scores.size(); ++m) {
            if (scores[m].value >= limits[m]) pass = true;
            if (scores[m].value > c.score) {
                c.score = scores[m].value;
                c.best_method = scores[m].method;
            }
        }
        if (pass) out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    });
    return out;
}

std::string counterparts_csv(std::string_view query, std::span<const Candidate> candidates) {
    std::string out = "query,candidate,method,score\n";
    char buf[32];
    for (const auto& c : candidates) {
        std::snprintf(buf, sizeof buf, "%.6f", c.score);
        out += std::string(query) + "," + c.name + "," + std::string(to_string(c.best_method)) + "," + buf + "\n";
    }
    return out;
}

}  // namespace instrace
