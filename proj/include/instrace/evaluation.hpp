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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "instrace/models.hpp"

namespace instrace {

struct SplitFractions {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;
};

/// Disjoint, exhaustive partition of sample indices. Each index list is
/// sorted ascending.
struct SplitPlan {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    SplitFractions fractions;
    bool stratified = true;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// Per-class cell counts are floor or ceil of count * fraction, and part
/// totals are the largest-remainder rounding of n * fraction whenever a
/// rounding satisfying both exists. Throws InsufficientClass when a class
/// has fewer than 3 samples.
SplitPlan stratified_split(const Labels& labels, SplitFractions fractions = {},
                           std::uint64_t seed = 42);

/// k disjoint folds covering every index, same rounding rules as the split.
/// Throws InsufficientClass when a class has fewer than k samples.
std::vector<std::vector<std::size_t>> stratified_kfold(const Labels& labels, std::size_t k = 5,
                                                       std::uint64_t seed = 42);

/// Rounds counts[c] * fractions[p] to integers so every row sums to its count
/// and every cell is the floor or ceil of its exact value. Exposed for tests.
std::vector<std::vector<std::size_t>> controlled_rounding(std::span<const std::size_t> counts,
                                                          std::span<const double> fractions);

/// Malicious is the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    std::string to_csv() const;
    nlohmann::json to_json() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const Labels& predicted, const Labels& truth);

struct MetricSet {
    double accuracy = 0;
    double precision_weighted = 0;
    double recall_weighted = 0;
    double f1_weighted = 0;
    double precision_positive = 0;
    double recall_positive = 0;
    double f1_positive = 0;
    std::optional<double> roc_auc;  // absent without scores or with one class
    double test_time_s = 0;

    nlohmann::json to_json(bool include_timing = false) const;
};

/// Support-weighted two-class precision/recall/F1 plus positive-class
/// values. A zero denominator yields 0. Throws EmptyInput on an empty matrix.
MetricSet metrics(const ConfusionMatrix& cm, std::span<const double> scores = {},
                  const Labels& truth = {});

/// Mann-Whitney statistic with average ranks for ties. Throws SingleClass.
double roc_auc(std::span<const double> scores, const Labels& truth);

struct EvaluationRow {
    std::string model;
    std::string feature_set;
    ConfusionMatrix cm;
    MetricSet metrics;
};

struct EvaluationReport {
    std::vector<EvaluationRow> rows;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

}  // namespace instrace
