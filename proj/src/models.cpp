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

#include "instrace/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "instrace/errors.hpp"
#include "instrace/parallel.hpp"
#include "instrace/rng.hpp"

namespace instrace {

namespace {

constexpr double kMinGain = 1e-12;

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

struct Ordered {
    double value;
    std::size_t row;
};

std::vector<Ordered> sorted_column(const Matrix& X, std::span<const std::size_t> rows,
                                   std::size_t feature) {
    std::vector<Ordered> v;
    v.reserve(rows.size());
    for (std::size_t r : rows) v.push_back({X(r, feature), r});
    std::sort(v.begin(), v.end(), [](const Ordered& a, const Ordered& b) {
        return a.value < b.value || (a.value == b.value && a.row < b.row);
    });
    return v;
}

double midpoint(double lo, double hi) {
    double t = lo + (hi - lo) / 2;
    return t >= hi ? lo : t;
}

// Best split of one feature by Gini; nullopt if the feature is constant.
std::optional<SplitChoice> gini_on_feature(const Matrix& X, std::span<const std::size_t> rows,
                                           const Labels& y, std::span<const double> w,
                                           std::size_t feature) {
    auto col = sorted_column(X, rows, feature);
    if (col.size() < 2 || col.front().value == col.back().value) return std::nullopt;
    double total[2] = {0, 0};
    for (const auto& o : col) total[y[o.row]] += w.empty() ? 1.0 : w[o.row];
    double left[2] = {0, 0};
    std::optional<SplitChoice> best;
    for (std::size_t i = 0; i + 1 < col.size(); ++i) {
        left[y[col[i].row]] += w.empty() ? 1.0 : w[col[i].row];
        if (col[i].value == col[i + 1].value) continue;
        double wl = left[0] + left[1];
        double wr = total[0] + total[1] - wl;
        double imp = wl * gini(left[0], left[1]) +
                     wr * gini(total[0] - left[0], total[1] - left[1]);
        if (!best || imp < best->children_impurity)
            best = SplitChoice{static_cast<int>(feature), midpoint(col[i].value, col[i + 1].value),
                               imp};
    }
    return best;
}

// Best split of one feature by summed squared error of `target`.
std::optional<SplitChoice> sse_on_feature(const Matrix& X, std::span<const std::size_t> rows,
                                          std::span<const double> target, std::size_t feature) {
    auto col = sorted_column(X, rows, feature);
    if (col.size() < 2 || col.front().value == col.back().value) return std::nullopt;
    double n = 0, s = 0, s2 = 0;
    for (const auto& o : col) {
        n += 1;
        s += target[o.row];
        s2 += target[o.row] * target[o.row];
    }
    double nl = 0, sl = 0, s2l = 0;
    std::optional<SplitChoice> best;
    for (std::size_t i = 0; i + 1 < col.size(); ++i) {
        double t = target[col[i].row];
        nl += 1;
        sl += t;
        s2l += t * t;
        if (col[i].value == col[i + 1].value) continue;
        double nr = n - nl, sr = s - sl, s2r = s2 - s2l;
        double sse = (s2l - sl * sl / nl) + (s2r - sr * sr / nr);
        if (!best || sse < best->children_impurity)
            best = SplitChoice{static_cast<int>(feature), midpoint(col[i].value, col[i + 1].value),
                               sse};
    }
    return best;
}

// Shared recursive builder. Classification uses Gini on weighted labels;
// regression (boosting) uses squared error on `target` with Newton leaf
// values sum(target) / sum(hessian).
class TreeBuilder {
public:
    const Matrix& X;
    const Labels* y = nullptr;
    std::span<const double> weights;
    std::span<const double> target;
    std::span<const double> hessian;
    TreeParams params;
    Rng* rng = nullptr;
    Tree tree;

    TreeBuilder(const Matrix& x, TreeParams p, Rng* r) : X(x), params(p), rng(r) {}

    bool regression() const { return y == nullptr; }

    int build(std::vector<std::size_t> rows, int depth) {
        int index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        TreeNode node = stats(rows);
        double parent_total = node.impurity * node.weight;

        std::optional<SplitChoice> split;
        bool may_split = depth < params.max_depth &&
                         node.weight >= static_cast<double>(params.min_samples_split) &&
                         node.impurity > kMinGain && rows.size() >= 2;
        if (may_split) split = choose(rows);
        if (split && parent_total - split->children_impurity > kMinGain) {
            std::vector<std::size_t> lrows, rrows;
            for (std::size_t r : rows)
                (X(r, static_cast<std::size_t>(split->feature)) <= split->threshold ? lrows : rrows)
                    .push_back(r);
            rows.clear();
            rows.shrink_to_fit();
            node.feature = split->feature;
            node.threshold = split->threshold;
            tree.nodes[static_cast<std::size_t>(index)] = node;
            int l = build(std::move(lrows), depth + 1);
            int r = build(std::move(rrows), depth + 1);
            tree.nodes[static_cast<std::size_t>(index)].left = l;
            tree.nodes[static_cast<std::size_t>(index)].right = r;
        } else {
            tree.nodes[static_cast<std::size_t>(index)] = node;
        }
        return index;
    }

private:
    double w(std::size_t r) const { return weights.empty() ? 1.0 : weights[r]; }

    TreeNode stats(std::span<const std::size_t> rows) const {
        TreeNode node;
        if (!regression()) {
            double c[2] = {0, 0};
            for (std::size_t r : rows) c[(*y)[r]] += w(r);
            node.weight = c[0] + c[1];
            node.value = node.weight > 0 ? c[1] / node.weight : 0.0;
            node.impurity = gini(c[0], c[1]);
        } else {
            double n = 0, s = 0, s2 = 0, h = 0;
            for (std::size_t r : rows) {
                n += 1;
                s += target[r];
                s2 += target[r] * target[r];
                h += hessian.empty() ? 1.0 : hessian[r];
            }
            node.weight = n;
            node.impurity = n > 0 ? std::max(0.0, s2 / n - (s / n) * (s / n)) : 0.0;
            node.value = std::abs(h) < 1e-150 ? 0.0 : s / h;
        }
        return node;
    }

    std::optional<SplitChoice> on_feature(std::span<const std::size_t> rows, std::size_t f) const {
        return regression() ? sse_on_feature(X, rows, target, f)
                            : gini_on_feature(X, rows, *y, weights, f);
    }

    std::optional<SplitChoice> choose(std::span<const std::size_t> rows) {
        std::size_t d = X.cols();
        std::vector<std::size_t> order(d);
        std::iota(order.begin(), order.end(), 0);
        std::size_t budget = d;
        if (params.max_features > 0 && params.max_features < d && rng) {
            rng->shuffle(order);
            budget = params.max_features;
        }
        // Constant features do not consume the per-split budget.
        std::optional<SplitChoice> best;
        std::size_t visited = 0;
        for (std::size_t f : order) {
            if (visited == budget) break;
            auto s = on_feature(rows, f);
            if (!s) continue;
            ++visited;
            if (!best || s->children_impurity < best->children_impurity) best = s;
        }
        return best;
    }
};

void check_shape(const Matrix& X, const Labels& y) {
    if (X.rows() != y.size())
        throw DimensionMismatch("matrix has " + std::to_string(X.rows()) + " rows but " +
                                std::to_string(y.size()) + " labels");
    if (X.rows() == 0 || X.cols() == 0) throw DimensionMismatch("empty training matrix");
    for (int v : y)
        if (v != 0 && v != 1) throw std::invalid_argument("labels must be 0 or 1");
}

TreeEnsemble fit_forest(const ModelConfig& c, const Matrix& X, const Labels& y) {
    std::size_t n = X.rows();
    TreeParams params{c.max_depth, c.min_samples_split,
                      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(X.cols()))))};
    TreeEnsemble forest;
    forest.trees.resize(static_cast<std::size_t>(std::max(c.n_estimators, 0)));
    parallel_for(forest.trees.size(), resolve_workers(c.workers), [&](std::size_t t) {
        Rng rng(derive_seed(c.seed, t));
        std::vector<double> counts(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) counts[rng.below(n)] += 1.0;
        forest.trees[t] = fit_classification_tree(X, y, counts, params, &rng);
    });
    return forest;
}

BoostedEnsemble fit_boosting(const ModelConfig& c, const Matrix& X, const Labels& y) {
    std::size_t n = X.rows();
    double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    double base = pos / static_cast<double>(n);
    BoostedEnsemble gb;
    gb.init_score = std::log(base / (1 - base));
    gb.learning_rate = c.learning_rate;
    std::vector<double> raw(n, gb.init_score), residual(n), hess(n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    TreeParams params{c.max_depth, c.min_samples_split, 0};
    for (int stage = 0; stage < c.n_estimators; ++stage) {
        for (std::size_t i = 0; i < n; ++i) {
            double p = sigmoid(raw[i]);
            residual[i] = y[i] - p;
            hess[i] = p * (1 - p);
        }
        TreeBuilder b(X, params, nullptr);
        b.target = residual;
        b.hessian = hess;
        b.build(all, 0);
        for (std::size_t i = 0; i < n; ++i) raw[i] += gb.learning_rate * b.tree.predict(X.row(i));
        gb.stages.push_back(std::move(b.tree));
    }
    return gb;
}

LinearModel fit_linear_svm(const ModelConfig& c, const Matrix& X, const Labels& y) {
    std::size_t n = X.rows(), d = X.cols();
    LinearModel m;
    m.weights.assign(d, 0.0);
    std::vector<double> alpha(n, 0.0), qdiag(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 1.0;  // bias coordinate
        for (double v : X.row(i)) s += v * v;
        qdiag[i] = s;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(c.seed);
    double previous = 0;
    for (int epoch = 0; epoch < c.svm_max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            double yi = y[i] == 1 ? 1.0 : -1.0;
            double g = yi * m.margin(X.row(i)) - 1.0;
            double pg = g;
            if (alpha[i] <= 0) pg = std::min(g, 0.0);
            else if (alpha[i] >= c.svm_c) pg = std::max(g, 0.0);
            if (std::abs(pg) <= 1e-12) continue;
            double old = alpha[i];
            alpha[i] = std::clamp(old - g / qdiag[i], 0.0, c.svm_c);
            double delta = (alpha[i] - old) * yi;
            auto row = X.row(i);
            for (std::size_t j = 0; j < d; ++j) m.weights[j] += delta * row[j];
            m.bias += delta;
        }
        double norm2 = m.bias * m.bias;
        for (double v : m.weights) norm2 += v * v;
        double objective = 0.5 * norm2 - std::accumulate(alpha.begin(), alpha.end(), 0.0);
        if (epoch > 0 &&
            std::abs(objective - previous) <= c.svm_tolerance * std::max(1.0, std::abs(objective)))
            break;
        previous = objective;
    }
    return m;
}

nlohmann::json tree_to_json(const Tree& t) {
    nlohmann::json j;
    auto column = [&](auto member) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& n : t.nodes) a.push_back(n.*member);
        return a;
    };
    j["feature"] = column(&TreeNode::feature);
    j["threshold"] = column(&TreeNode::threshold);
    j["left"] = column(&TreeNode::left);
    j["right"] = column(&TreeNode::right);
    j["value"] = column(&TreeNode::value);
    j["weight"] = column(&TreeNode::weight);
    j["impurity"] = column(&TreeNode::impurity);
    return j;
}

Tree tree_from_json(const nlohmann::json& j, std::size_t n_features) {
    const auto& feature = j.at("feature");
    std::size_t n = feature.size();
    for (const char* key : {"threshold", "left", "right", "value", "weight", "impurity"})
        if (j.at(key).size() != n) throw FormatError(std::string("tree column size mismatch: ") + key);
    if (n == 0) throw FormatError("empty tree");
    Tree t;
    t.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        TreeNode& node = t.nodes[i];
        node.feature = j["feature"][i].get<int>();
        node.threshold = j["threshold"][i].get<double>();
        node.left = j["left"][i].get<int>();
        node.right = j["right"][i].get<int>();
        node.value = j["value"][i].get<double>();
        node.weight = j["weight"][i].get<double>();
        node.impurity = j["impurity"][i].get<double>();
        if (!node.is_leaf()) {
            auto in_range = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
            if (static_cast<std::size_t>(node.feature) >= n_features || !in_range(node.left) ||
                !in_range(node.right))
                throw FormatError("tree node " + std::to_string(i) + " is malformed");
        }
    }
    return t;
}

}  // namespace

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::DT: return "DT";
        case ModelKind::RF: return "RF";
        case ModelKind::GB: return "GB";
        case ModelKind::SVM: return "SVM";
    }
    return "?";
}

std::optional<ModelKind> model_kind_from_string(std::string_view s) {
    for (ModelKind k : {ModelKind::DT, ModelKind::RF, ModelKind::GB, ModelKind::SVM}) {
        std::string_view name = to_string(k);
        if (s.size() == name.size() &&
            std::equal(s.begin(), s.end(), name.begin(),
                       [](char a, char b) { return std::toupper(static_cast<unsigned char>(a)) == b; }))
            return k;
    }
    return std::nullopt;
}

ModelConfig ModelConfig::defaults(ModelKind kind, std::uint64_t seed) {
    ModelConfig c;
    c.kind = kind;
    c.seed = seed;
    switch (kind) {
        case ModelKind::DT:
            c.max_depth = 8;
            c.min_samples_split = 10;
            c.n_estimators = 1;
            break;
        case ModelKind::RF:
            c.max_depth = 8;
            c.min_samples_split = 2;
            c.n_estimators = 100;
            break;
        case ModelKind::GB:
            c.max_depth = 5;
            c.min_samples_split = 2;
            c.n_estimators = 100;
            c.learning_rate = 0.1;
            break;
        case ModelKind::SVM:
            c.n_estimators = 0;
            break;
    }
    return c;
}

nlohmann::json ModelConfig::to_json() const {
    return {{"kind", std::string(to_string(kind))},
            {"max_depth", max_depth},
            {"min_samples_split", min_samples_split},
            {"n_estimators", n_estimators},
            {"learning_rate", learning_rate},
            {"svm_c", svm_c},
            {"svm_tolerance", svm_tolerance},
            {"svm_max_epochs", svm_max_epochs},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    auto kind = model_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw FormatError("unknown model kind");
    ModelConfig c = defaults(*kind, j.value("seed", std::uint64_t{42}));
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
    c.n_estimators = j.value("n_estimators", c.n_estimators);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.svm_c = j.value("svm_c", c.svm_c);
    c.svm_tolerance = j.value("svm_tolerance", c.svm_tolerance);
    c.svm_max_epochs = j.value("svm_max_epochs", c.svm_max_epochs);
    return c;
}

std::size_t Tree::leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                            : n.right);
    }
    return i;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, d[i]);
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return deepest;
}

double gini(double w_benign, double w_malicious) {
    double total = w_benign + w_malicious;
    if (total <= 0) return 0.0;
    double p = w_malicious / total;
    return 1.0 - p * p - (1 - p) * (1 - p);
}

std::optional<SplitChoice> best_gini_split(const Matrix& X, std::span<const std::size_t> rows,
                                           const Labels& y, std::span<const double> weights,
                                           std::span<const std::size_t> features) {
    std::optional<SplitChoice> best;
    for (std::size_t f : features) {
        auto s = gini_on_feature(X, rows, y, weights, f);
        if (s && (!best || s->children_impurity < best->children_impurity)) best = s;
    }
    return best;
}

Tree fit_classification_tree(const Matrix& X, const Labels& y, std::span<const double> weights,
                             const TreeParams& params, Rng* feature_rng) {
    check_shape(X, y);
    TreeBuilder b(X, params, feature_rng);
    b.y = &y;
    b.weights = weights;
    std::vector<std::size_t> rows;
    rows.reserve(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i)
        if (weights.empty() || weights[i] > 0) rows.push_back(i);
    b.build(std::move(rows), 0);
    return std::move(b.tree);
}

double BoostedEnsemble::raw_score(std::span<const double> x) const {
    double s = init_score;
    for (const Tree& t : stages) s += learning_rate * t.predict(x);
    return s;
}

double LinearModel::margin(std::span<const double> x) const {
    double s = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * x[j];
    return s;
}

double TrainedModel::score(std::span<const double> x) const {
    if (!trained()) throw UntrainedModel("model has not been trained");
    if (x.size() != n_features())
        throw DimensionMismatch("row has " + std::to_string(x.size()) + " values, model expects " +
                                std::to_string(n_features()));
    if (const auto* f = std::get_if<TreeEnsemble>(&body)) {
        double s = 0;
        for (const Tree& t : f->trees) s += t.predict(x);
        return std::clamp(s / static_cast<double>(f->trees.size()), 0.0, 1.0);
    }
    if (const auto* g = std::get_if<BoostedEnsemble>(&body)) return sigmoid(g->raw_score(x));
    const auto& m = std::get<LinearModel>(body);
    return sigmoid(-(m.platt_a * m.margin(x) + m.platt_b));
}

int TrainedModel::predict(std::span<const double> x) const { return score(x) > 0.5 ? 1 : 0; }

std::vector<double> TrainedModel::score_batch(const Matrix& X) const {
    std::vector<double> out;
    out.reserve(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out.push_back(score(X.row(i)));
    return out;
}

Labels TrainedModel::predict_batch(const Matrix& X) const {
    Labels out;
    out.reserve(X.rows());
    for (double s : score_batch(X)) out.push_back(s > 0.5 ? 1 : 0);
    return out;
}

std::vector<double> TrainedModel::contributions(std::span<const double> x) const {
    score(x);  // validates shape and training state
    std::vector<double> c(n_features(), 0.0);
    auto walk = [&](const Tree& t, double scale) {
        std::size_t i = 0;
        while (!t.nodes[i].is_leaf()) {
            const TreeNode& n = t.nodes[i];
            std::size_t next = static_cast<std::size_t>(
                x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
            c[static_cast<std::size_t>(n.feature)] += scale * (t.nodes[next].value - n.value);
            i = next;
        }
    };
    if (const auto* f = std::get_if<TreeEnsemble>(&body)) {
        for (const Tree& t : f->trees) walk(t, 1.0 / static_cast<double>(f->trees.size()));
    } else if (const auto* g = std::get_if<BoostedEnsemble>(&body)) {
        for (const Tree& t : g->stages) walk(t, g->learning_rate);
    } else {
        const auto& m = std::get<LinearModel>(body);
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = m.weights[j] * x[j];
    }
    return c;
}

nlohmann::json TrainedModel::to_json() const {
    if (!trained()) throw UntrainedModel("cannot serialize an untrained model");
    nlohmann::json j;
    j["format"] = std::string(kModelFormat);
    j["config"] = config.to_json();
    j["feature_order"] = feature_order;
    j["n_samples"] = n_samples;
    if (const auto* f = std::get_if<TreeEnsemble>(&body)) {
        nlohmann::json trees = nlohmann::json::array();
        for (const Tree& t : f->trees) trees.push_back(tree_to_json(t));
        j["trees"] = std::move(trees);
    } else if (const auto* g = std::get_if<BoostedEnsemble>(&body)) {
        nlohmann::json stages = nlohmann::json::array();
        for (const Tree& t : g->stages) stages.push_back(tree_to_json(t));
        j["init_score"] = g->init_score;
        j["learning_rate"] = g->learning_rate;
        j["stages"] = std::move(stages);
    } else {
        const auto& m = std::get<LinearModel>(body);
        j["weights"] = m.weights;
        j["bias"] = m.bias;
        j["platt"] = {{"a", m.platt_a}, {"b", m.platt_b}};
    }
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kModelFormat)
            throw FormatError("unsupported model format " + j.at("format").dump());
        TrainedModel m;
        m.config = ModelConfig::from_json(j.at("config"));
        m.feature_order = j.at("feature_order").get<std::vector<std::string>>();
        m.n_samples = j.value("n_samples", std::size_t{0});
        std::size_t d = m.feature_order.size();
        switch (m.config.kind) {
            case ModelKind::DT:
            case ModelKind::RF: {
                TreeEnsemble f;
                for (const auto& t : j.at("trees")) f.trees.push_back(tree_from_json(t, d));
                if (f.trees.empty()) throw FormatError("forest has no trees");
                m.body = std::move(f);
                break;
            }
            case ModelKind::GB: {
                BoostedEnsemble g;
                g.init_score = j.at("init_score").get<double>();
                g.learning_rate = j.at("learning_rate").get<double>();
                for (const auto& t : j.at("stages")) g.stages.push_back(tree_from_json(t, d));
                m.body = std::move(g);
                break;
            }
            case ModelKind::SVM: {
                LinearModel l;
                l.weights = j.at("weights").get<std::vector<double>>();
                l.bias = j.at("bias").get<double>();
                l.platt_a = j.at("platt").at("a").get<double>();
                l.platt_b = j.at("platt").at("b").get<double>();
                if (l.weights.size() != d) throw FormatError("weight vector does not match feature order");
                m.body = std::move(l);
                break;
            }
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model JSON: ") + e.what());
    }
}

TrainedModel train(const ModelConfig& config, const Matrix& X, const Labels& y,
                   std::vector<std::string> feature_order) {
    check_shape(X, y);
    if (feature_order.empty())
        for (std::size_t j = 0; j < X.cols(); ++j) feature_order.push_back("f" + std::to_string(j));
    if (feature_order.size() != X.cols())
        throw DimensionMismatch("feature order has " + std::to_string(feature_order.size()) +
                                " names for " + std::to_string(X.cols()) + " columns");
    auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size()))
        throw DegenerateData("training labels contain a single class");

    TrainedModel m;
    m.config = config;
    m.feature_order = std::move(feature_order);
    m.n_samples = X.rows();
    switch (config.kind) {
        case ModelKind::DT:
            m.body = TreeEnsemble{{fit_classification_tree(
                X, y, {}, TreeParams{config.max_depth, config.min_samples_split, 0})}};
            break;
        case ModelKind::RF: m.body = fit_forest(config, X, y); break;
        case ModelKind::GB: m.body = fit_boosting(config, X, y); break;
        case ModelKind::SVM: m.body = fit_linear_svm(config, X, y); break;
    }
    return m;
}

std::pair<double, double> fit_platt(std::span<const double> margins, const Labels& y) {
    if (margins.size() != y.size()) throw LengthMismatch("margins and labels differ in length");
    double prior1 = static_cast<double>(std::count(y.begin(), y.end(), 1));
    double prior0 = static_cast<double>(y.size()) - prior1;
    double hi = (prior1 + 1) / (prior1 + 2), lo = 1 / (prior0 + 2);
    std::vector<double> t(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i] == 1 ? hi : lo;

    auto loss = [&](double a, double b) {
        double f = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double z = margins[i] * a + b;
            f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1) * z + std::log1p(std::exp(z));
        }
        return f;
    };
    double a = 0, b = std::log((prior0 + 1) / (prior1 + 1));
    double fval = loss(a, b);
    for (int it = 0; it < 100; ++it) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0, g1 = 0, g2 = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double z = margins[i] * a + b;
            double p = sigmoid(-z), q = 1 - p;
            double d2 = p * q;
            h11 += margins[i] * margins[i] * d2;
            h22 += d2;
            h21 += margins[i] * d2;
            double d1 = t[i] - p;
            g1 += margins[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        double det = h11 * h22 - h21 * h21;
        double da = -(h22 * g1 - h21 * g2) / det;
        double db = -(-h21 * g1 + h11 * g2) / det;
        double gd = g1 * da + g2 * db;
        double step = 1;
        while (step >= 1e-10) {
            double na = a + step * da, nb = b + step * db;
            double nf = loss(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2;
        }
        if (step < 1e-10) break;
    }
    return {a, b};
}

void calibrate(TrainedModel& model, const Matrix& X, const Labels& y) {
    auto* m = std::get_if<LinearModel>(&model.body);
    if (!m) return;
    check_shape(X, y);
    if (X.cols() != model.n_features()) throw DimensionMismatch("calibration data width differs");
    auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size())) return;  // keep the uncalibrated logistic
    std::vector<double> margins;
    margins.reserve(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) margins.push_back(m->margin(X.row(i)));
    std::tie(m->platt_a, m->platt_b) = fit_platt(margins, y);
}

}  // namespace instrace
