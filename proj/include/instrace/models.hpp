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
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "instrace/matrix.hpp"

namespace instrace {

/// Binary labels: 1 = malicious (positive class), 0 = benign.
using Labels = std::vector<int>;

enum class ModelKind { DT, RF, GB, SVM };

std::string_view to_string(ModelKind k);
std::optional<ModelKind> model_kind_from_string(std::string_view s);

struct ModelConfig {
    ModelKind kind = ModelKind::RF;
    int max_depth = 8;
    int min_samples_split = 2;
    int n_estimators = 100;
    double learning_rate = 0.1;
    double svm_c = 1.0;
    double svm_tolerance = 1e-4;  // relative change of the dual objective
    int svm_max_epochs = 1000;
    std::uint64_t seed = 42;
    unsigned workers = 0;  // RF tree fitting; 0 = hardware concurrency

    /// Published hyperparameters: DT depth 8 / min split 10; RF 100 trees of
    /// depth 8; GB 100 stages of depth 5 at rate 0.1; linear SVM.
    static ModelConfig defaults(ModelKind kind, std::uint64_t seed = 42);

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0;
    int left = -1;   // x[feature] <= threshold
    int right = -1;
    double value = 0;     // P(malicious) for classification, output for regression
    double weight = 0;    // training sample weight reaching the node
    double impurity = 0;  // Gini or variance at training time

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    std::size_t leaf_index(std::span<const double> x) const;
    double predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }
    int depth() const;
};

struct TreeParams {
    int max_depth = 8;
    int min_samples_split = 2;
    std::size_t max_features = 0;  // per split; 0 = all features
};

/// Best Gini split over `features` for the weighted rows. Candidates are the
/// midpoints between consecutive distinct values. `children_impurity` is
/// w_left * gini_left + w_right * gini_right; ties keep the earliest feature
/// and the lowest threshold.
struct SplitChoice {
    int feature = -1;
    double threshold = 0;
    double children_impurity = 0;
};
std::optional<SplitChoice> best_gini_split(const Matrix& X, std::span<const std::size_t> rows,
                                           const Labels& y, std::span<const double> weights,
                                           std::span<const std::size_t> features);

double gini(double w_benign, double w_malicious);

class Rng;

/// Greedy CART classification tree. `weights` may be empty (all ones).
Tree fit_classification_tree(const Matrix& X, const Labels& y, std::span<const double> weights,
                             const TreeParams& params, Rng* feature_rng = nullptr);

struct TreeEnsemble {
    std::vector<Tree> trees;  // one tree for DT
};

struct BoostedEnsemble {
    double init_score = 0;  // log-odds of the training base rate
    double learning_rate = 0.1;
    std::vector<Tree> stages;

    double raw_score(std::span<const double> x) const;
};

struct LinearModel {
    std::vector<double> weights;
    double bias = 0;
    // Probability = 1 / (1 + exp(platt_a * margin + platt_b)).
    double platt_a = -1.0;
    double platt_b = 0.0;

    double margin(std::span<const double> x) const;
};

struct TrainedModel {
    ModelConfig config;
    std::vector<std::string> feature_order;
    std::size_t n_samples = 0;
    std::variant<std::monostate, TreeEnsemble, BoostedEnsemble, LinearModel> body;

    bool trained() const { return !std::holds_alternative<std::monostate>(body); }
    std::size_t n_features() const { return feature_order.size(); }

    /// P(malicious) in [0, 1].
    double score(std::span<const double> x) const;
    /// Malicious (1) iff score > 0.5; an exact 0.5 goes to benign.
    int predict(std::span<const double> x) const;
    std::vector<double> score_batch(const Matrix& X) const;
    Labels predict_batch(const Matrix& X) const;

    /// Per-feature contribution to the score of `x`: decision-path deltas
    /// for trees (log-odds for GB), weight * value for the linear model.
    std::vector<double> contributions(std::span<const double> x) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);
};

inline constexpr std::string_view kModelFormat = "instrace-model/1";

/// Throws DegenerateData for a single class, DimensionMismatch for shape
/// errors. `feature_order` defaults to f0..f{d-1}.
TrainedModel train(const ModelConfig& config, const Matrix& X, const Labels& y,
                   std::vector<std::string> feature_order = {});

/// Platt-scales the SVM margin on held-out data. No-op for other kinds.
void calibrate(TrainedModel& model, const Matrix& X, const Labels& y);

/// Fits (a, b) minimizing the log loss of 1 / (1 + exp(a * f + b)).
std::pair<double, double> fit_platt(std::span<const double> margins, const Labels& y);

}  // namespace instrace
