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

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "instrace/matrix.hpp"
#include "instrace/trace_model.hpp"

namespace instrace {

// ---------------------------------------------------------------------------
// Pattern catalog
// ---------------------------------------------------------------------------

inline constexpr int kPatternCategories = 10;

/// Human-readable name of Pattern_<category> (1-based).
std::string_view pattern_category_name(int category);

/// One element of a pattern template. Text form: `name` optionally followed
/// by qualifiers `|errno=X`, `|no-error`, `|fd=N`, `|no-fd`. An unqualified
/// token matches the syscall regardless of its errno and fd annotation.
struct PatternToken {
    std::string name;
    std::optional<std::string> errno_name;  // "" requires success
    std::optional<std::string> fd_note;

    static PatternToken parse(std::string_view text);
    std::string to_string() const;
    bool matches(const SyscallEvent& e) const;

    /// A concrete event satisfying this token.
    SyscallEvent instantiate(std::int64_t timestamp_ms) const;

    bool operator==(const PatternToken&) const = default;
};

struct PatternEntry {
    std::string id;
    int category = 1;  // Pattern_1 .. Pattern_10
    std::vector<PatternToken> sequence;
    bool malicious_indicator = false;

    bool operator==(const PatternEntry&) const = default;
};

class PatternCatalog {
public:
    PatternCatalog() = default;
    explicit PatternCatalog(std::vector<PatternEntry> entries);

    /// Shipped templates: the ten top-ranked syscall patterns plus the
    /// additional high-impact motifs, grouped into the ten categories.
    static const PatternCatalog& builtin();

    static PatternCatalog from_json(const nlohmann::json& j);
    static PatternCatalog load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Empty iff every entry has a non-empty template and a category in 1..10
    /// and ids are unique.
    std::vector<std::string> validate() const;

    const std::vector<PatternEntry>& entries() const { return entries_; }
    const PatternEntry* find(std::string_view id) const;

private:
    std::vector<PatternEntry> entries_;
};

using PatternCounts = std::array<std::size_t, kPatternCategories>;

/// Non-overlapping left-to-right occurrences of `sequence` as a contiguous run.
std::size_t count_template(std::span<const SyscallEvent> events, std::span<const PatternToken> sequence);

/// Per-category totals: index c-1 holds the sum over Pattern_c templates.
PatternCounts match_patterns(std::span<const SyscallEvent> events, const PatternCatalog& catalog);

/// Per-entry counts in catalog order.
std::vector<std::size_t> match_pattern_entries(std::span<const SyscallEvent> events,
                                               const PatternCatalog& catalog);

// ---------------------------------------------------------------------------
// n-grams
// ---------------------------------------------------------------------------

/// Token used for an event inside a gram: the syscall name, then
/// `|errno=X` and `|<fd note>` when present.
std::string event_token(const SyscallEvent& e);

inline constexpr std::string_view kGramSeparator = "->";

struct NGramProfile {
    std::vector<int> n_range;
    std::map<std::string, std::size_t> counts;

    std::size_t total_for(int n) const;
};

/// Counts every contiguous window of each size in `n_range` (each in 2..6).
NGramProfile extract_ngrams(std::span<const SyscallEvent> events, std::span<const int> n_range);

inline const std::vector<int> kDefaultNGramRange = {3, 4, 5};

// ---------------------------------------------------------------------------
// Candidate features
// ---------------------------------------------------------------------------

enum class FeatureCategory { filetop, install, opensnoop, tcp, syscall, pattern };
enum class FeatureKind { numerical, categorical_derived };

std::string_view to_string(FeatureCategory c);

struct FeatureSpec {
    std::string name;
    FeatureCategory category;
    FeatureKind kind;
};

/// The 62 candidate features, in extraction order.
class FeatureCatalog {
public:
    static const FeatureCatalog& standard();

    const std::vector<FeatureSpec>& features() const { return features_; }
    std::size_t size() const { return features_.size(); }
    std::vector<std::string> names() const;
    std::optional<std::size_t> index_of(std::string_view name) const;
    std::size_t count(FeatureCategory c) const;

private:
    explicit FeatureCatalog(std::vector<FeatureSpec> features) : features_(std::move(features)) {}
    std::vector<FeatureSpec> features_;
};

struct FeatureConfig {
    // Ports treated as ordinary install traffic.
    std::set<std::int64_t> standard_ports{80, 443, 22, 53, 3128, 8080};
};

struct FeatureVector {
    PackageRef package;
    Label label = Label::unknown;
    std::vector<double> values;  // aligned with FeatureCatalog::standard()

    double at(std::string_view name) const;
};

FeatureVector extract_candidates(const TraceBundle& bundle,
                                 const PatternCatalog& catalog = PatternCatalog::builtin(),
                                 const FeatureConfig& config = {});

Matrix to_matrix(std::span<const FeatureVector> vectors);

/// Feature matrix CSV: catalog names then `label`, one row per package.
std::string feature_matrix_csv(std::span<const FeatureVector> vectors);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct MinMaxScaler {
    std::vector<double> min;
    std::vector<double> max;

    static MinMaxScaler fit(const Matrix& m);

    /// (v - min) / (max - min); constant columns map to 0.
    std::vector<double> apply(std::span<const double> row) const;
    Matrix transform(const Matrix& m) const;

    nlohmann::json to_json() const;
    static MinMaxScaler from_json(const nlohmann::json& j);
};

struct NormalizedMatrix {
    Matrix values;
    MinMaxScaler scaler;
};

NormalizedMatrix minmax_normalize(const Matrix& m);

// ---------------------------------------------------------------------------
// Corpus cleaning
// ---------------------------------------------------------------------------

struct CleaningReport {
    struct Drop {
        std::string package;
        std::string reason;  // "duplicate" or "incomplete"
        std::string kept;    // surviving duplicate, if any
    };
    std::vector<Drop> dropped;
    std::size_t rewritten_paths = 0;

    nlohmann::json to_json() const;
};

struct CleanedCorpus {
    std::vector<TraceBundle> bundles;
    CleaningReport report;
};

/// Rewrites `/home/<user>` prefixes to the canonical root.
std::string standardize_path(std::string_view path, std::string_view canonical_root = "/work");

/// Drops bundles with missing logs, rewrites device-specific path prefixes,
/// then removes duplicates (same normalized name and same trace digest),
/// keeping the first occurrence.
CleanedCorpus clean_corpus(std::vector<TraceBundle> bundles, std::string_view canonical_root = "/work");

}  // namespace instrace
