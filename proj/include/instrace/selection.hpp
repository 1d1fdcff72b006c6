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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "instrace/matrix.hpp"
#include "instrace/models.hpp"

namespace instrace {

struct SelectionThresholds {
    double r_max = 0.50;
    double ims_low = 0.05;
    double ims_high = 0.08;
};

/// Product-moment correlation; 0 if either series is constant.
/// Throws LengthMismatch for unequal lengths or fewer than 2 points.
double pearson_r(std::span<const double> x, std::span<const double> y);

struct CorrelatedPair {
    std::size_t dropped;
    std::size_t kept;
    double r;
};

struct FilterResult {
    std::vector<std::size_t> kept;  // column indices, ascending
    std::vector<CorrelatedPair> removed;
};

/// Greedy scan in column order. For each surviving i and later surviving j
/// with |r| > r_max, j is dropped unless var(j) > var(i), in which case i is
/// dropped and the scan moves to the next i. No kept pair exceeds r_max.
FilterResult correlation_filter(const Matrix& X, double r_max = 0.50, unsigned workers = 1);

struct ImportanceTable {
    ModelKind model = ModelKind::RF;
    std::vector<std::string> features;
    std::vector<double> scores;  // aligned with features, >= 0

    double max() const;
    nlohmann::json to_json() const;
};

/// Trees: mean decrease in impurity of `X`, `y` routed through each tree,
/// normalized per tree, averaged and normalized to sum 1 (boosting sums raw
/// stage decreases on the pseudo-residuals). Falls back to training-time
/// impurities when the supplied data produce no decrease. Linear: |w|
/// normalized to sum 1. Throws UntrainedModel.
ImportanceTable importance_scores(const TrainedModel& model, const Matrix& X, const Labels& y);

/// Trains `kind` on the training columns and scores importance on the
/// held-out columns. Replaceable for controlled experiments.
using ImportanceProvider = std::function<ImportanceTable(
    ModelKind kind, const Matrix& train_X, const Labels& train_y, const Matrix& holdout_X,
    const Labels& holdout_y, const std::vector<std::string>& names)>;

ImportanceProvider trained_importance(std::uint64_t seed, unsigned workers = 0);

struct SelectionOptions {
    SelectionThresholds thresholds;
    std::vector<ModelKind> models{ModelKind::RF, ModelKind::DT, ModelKind::SVM, ModelKind::GB};
    std::uint64_t seed = 42;
    unsigned workers = 0;
    ImportanceProvider provider;  // empty = trained_importance(seed, workers)
};

struct SelectionReport {
    std::vector<std::string> cf;        // candidate features
    std::vector<std::string> constant;  // zero variance, dropped first
    struct Removal {
        std::string feature;
        std::string partner;
        double r;
    };
    std::vector<Removal> removed;
    std::vector<std::string> idf;
    std::vector<ImportanceTable> importance;
    std::map<std::string, std::vector<std::string>> imf_low;   // per model, IMS > ims_low
    std::map<std::string, std::vector<std::string>> imf_high;  // per model, IMS > ims_high
    std::vector<std::string> imf;  // max IMS > ims_low
    std::vector<std::string> sef;  // IDF and max IMS > ims_low and max IMS > ims_high
    SelectionThresholds thresholds;

    nlohmann::json to_json() const;
    std::string sef_text() const;
};

/// `holdout_X` may be empty, in which case importance is scored on the
/// training data. Columns of both matrices follow `names`.
SelectionReport select_sef(const Matrix& train_X, const Labels& train_y, const Matrix& holdout_X,
                           const Labels& holdout_y, const std::vector<std::string>& names,
                           const SelectionOptions& options = {});

/// Recomputes SEF from a report's importance tables at other thresholds.
std::vector<std::string> sef_at(const SelectionReport& report, double ims_low, double ims_high);

std::vector<std::string> read_feature_list(const std::string& path);

}  // namespace instrace
