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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "instrace/acquisition.hpp"
#include "instrace/evaluation.hpp"
#include "instrace/features.hpp"
#include "instrace/models.hpp"
#include "instrace/selection.hpp"
#include "instrace/similarity.hpp"
#include "instrace/trace_model.hpp"

namespace instrace {

/// Settings shared by every command. Loaded from a `key = value` file
/// (`#` starts a comment) and then overridden by flags.
struct RunConfig {
    std::filesystem::path traces;
    std::filesystem::path out = "out";
    std::filesystem::path model;
    std::filesystem::path catalog;   // pattern catalog JSON; empty = builtin
    std::filesystem::path packages;  // acquire: name,version,archive[,label]
    std::filesystem::path targets;   // acquire: id,transport[,credentials]
    std::filesystem::path replay_root;
    std::filesystem::path work_root;
    std::string ssh_program = "ssh";
    LocalCommands local;
    SelectionThresholds thresholds;
    SimilarityThresholds similarity;
    std::uint64_t seed = 42;
    unsigned workers = 0;
    int window_s = kDefaultCaptureWindowS;
    std::size_t cv_folds = 5;

    /// Throws std::invalid_argument for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

/// Reads a corpus from a directory of bundle JSON files (`bundles/*.json`
/// or `*.json`, sorted by file name), from an acquisition layout with
/// `data.csv` (labels from an optional `labels.csv` of `name,label`), or
/// from a single bundle JSON file.
std::vector<TraceBundle> load_corpus(const std::filesystem::path& path, int window_s = kDefaultCaptureWindowS);

/// One bundle from a JSON file or a trace directory named after the package.
TraceBundle load_bundle(const std::filesystem::path& path, int window_s = kDefaultCaptureWindowS);

/// Everything a scan needs: the detector, the scaler over all candidate
/// features, and the catalog the features were extracted with.
struct Detector {
    TrainedModel model;                  // feature_order = SEF
    std::vector<std::string> candidates;  // names the scaler columns follow
    MinMaxScaler scaler;
    PatternCatalog catalog;

    nlohmann::json to_json() const;
    static Detector from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kDetectorFormat = "instrace-detector/1";

struct Verdict {
    std::string package;
    double score = 0;
    Label label = Label::unknown;
    std::vector<std::pair<std::string, double>> top_features;
    double elapsed_ms = 0;

    nlohmann::json to_json() const;
};

/// Raised when a detector cannot score the current feature layout.
class ModelMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Extract, normalize with the stored min/max, select, score. Throws
/// ModelMismatch when the detector's candidate list or SEF does not match.
Verdict scan_bundle(const Detector& detector, const TraceBundle& bundle, std::size_t top_k = 3);

struct PipelineResult {
    CleaningReport cleaning;
    std::vector<std::string> unlabeled;
    std::vector<FeatureVector> features;
    SplitPlan split;
    SelectionReport selection;
    std::vector<TrainedModel> models;  // RF, DT, SVM, GB on SEF
    Detector detector;
    EvaluationReport evaluation;
    nlohmann::json cross_validation;
    nlohmann::json timing;
};

/// clean -> extract -> split -> normalize (fit on train) -> select SEF on
/// train/validation -> train four models -> evaluate on test, plus k-fold
/// cross-validation over train and validation. Throws DegenerateData for a
/// single-class corpus.
PipelineResult run_pipeline(const RunConfig& config, std::vector<TraceBundle> bundles);

/// Writes every artifact of a pipeline run under `dir`. All files except
/// timing.json are byte-identical for identical inputs and seeds.
void write_pipeline_outputs(const PipelineResult& result, const RunConfig& config,
                            const std::filesystem::path& dir);

/// `name[,version[,archive[,label]]]` rows; a header row starting with
/// "name" is skipped.
std::vector<CampaignPackage> read_package_list(const std::filesystem::path& path);
/// `id,transport[,credentials]` rows.
std::vector<ExecutorTarget> read_target_list(const std::filesystem::path& path);
/// `name[<TAB>metadata]` lines.
std::vector<IndexEntry> read_similarity_index(const std::filesystem::path& path);

}  // namespace instrace
