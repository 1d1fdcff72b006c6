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

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <numeric>
#include <set>

#include "instrace/errors.hpp"
#include "instrace/models.hpp"
#include "instrace/rng.hpp"

using namespace instrace;

namespace {

struct Data {
    Matrix X;
    Labels y;
};

double gini_oracle(const std::vector<int>& labels) {
    if (labels.empty()) return 0;
    double p = 0;
    for (int v : labels) p += v;
    p /= static_cast<double>(labels.size());
    return 1 - p * p - (1 - p) * (1 - p);
}

// Enumerates every (feature, midpoint) candidate by explicit partitioning.
double brute_force_best(const Matrix& X, const std::vector<std::size_t>& rows, const Labels& y) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < X.cols(); ++f) {
        std::set<double> values;
        for (auto r : rows) values.insert(X(r, f));
        for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
            double t = (*it + *std::next(it)) / 2;
            std::vector<int> l, rr;
            for (auto r : rows) (X(r, f) <= t ? l : rr).push_back(y[r]);
            double imp = static_cast<double>(l.size()) * gini_oracle(l) +
                         static_cast<double>(rr.size()) * gini_oracle(rr);
            best = std::min(best, imp);
        }
    }
    return best;
}

Data labelled_noise(std::uint64_t seed, std::size_t n, std::size_t d, int levels = 0) {
    Rng rng(seed);
    Data out{Matrix(n, d), Labels(n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            out.X(i, j) = levels ? static_cast<double>(rng.below(static_cast<std::size_t>(levels))) / levels
                                 : rng.uniform();
        out.y[i] = rng.chance(0.5) ? 1 : 0;
    }
    out.y[0] = 0;
    out.y[1] = 1;
    return out;
}

// Two blobs with centers 3 apart along the diagonal; each coordinate stays
// within 0.5 of its center, so the classes are separated by a margin > 1.
Data blobs(std::uint64_t seed, std::size_t per_class) {
    Rng rng(seed);
    Data out;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        int label = static_cast<int>(i % 2);
        double c = label ? 3.0 : 0.0;
        std::vector<double> row{c + rng.uniform(-0.5, 0.5), c + rng.uniform(-0.5, 0.5)};
        out.X.append_row(row);
        out.y.push_back(label);
    }
    return out;
}

Data noisy(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Data out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(10);
        for (double& v : row) v = rng.uniform();
        int label = row[0] + row[1] > 1.0 ? 1 : 0;
        if (rng.chance(0.2)) label = 1 - label;
        out.X.append_row(row);
        out.y.push_back(label);
    }
    return out;
}

double error_rate(const TrainedModel& m, const Data& d) {
    auto p = m.predict_batch(d.X);
    double wrong = 0;
    for (std::size_t i = 0; i < p.size(); ++i) wrong += p[i] != d.y[i];
    return wrong / static_cast<double>(p.size());
}

std::vector<std::vector<std::size_t>> node_rows(const Tree& t, const Matrix& X) {
    std::vector<std::vector<std::size_t>> rows(t.nodes.size());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        std::size_t n = 0;
        for (;;) {
            rows[n].push_back(i);
            if (t.nodes[n].is_leaf()) break;
            n = static_cast<std::size_t>(X(i, static_cast<std::size_t>(t.nodes[n].feature)) <= t.nodes[n].threshold
                                             ? t.nodes[n].left
                                             : t.nodes[n].right);
        }
    }
    return rows;
}

TrainedModel leaf_forest(std::vector<double> leaf_values) {
    TrainedModel m;
    m.config = ModelConfig::defaults(ModelKind::RF);
    m.feature_order = {"f0"};
    TreeEnsemble f;
    for (double v : leaf_values) {
        Tree t;
        t.nodes.push_back(TreeNode{-1, 0, -1, -1, v, 1, 0});
        f.trees.push_back(t);
    }
    m.body = f;
    return m;
}

}  // namespace

TEST_CASE("defaults carry the published hyperparameters") {
    auto dt = ModelConfig::defaults(ModelKind::DT);
    CHECK(dt.max_depth == 8);
    CHECK(dt.min_samples_split == 10);
    auto rf = ModelConfig::defaults(ModelKind::RF);
    CHECK(rf.n_estimators == 100);
    CHECK(rf.max_depth == 8);
    auto gb = ModelConfig::defaults(ModelKind::GB);
    CHECK(gb.n_estimators == 100);
    CHECK(gb.max_depth == 5);
    CHECK(gb.learning_rate == 0.1);
    CHECK(model_kind_from_string("svm") == ModelKind::SVM);
}

TEST_CASE("best split equals brute-force enumeration") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng pick(seed);
        std::size_t n = 2 + pick.below(49), d = 1 + pick.below(5);
        auto data = labelled_noise(seed + 1000, n, d, seed % 2 ? 5 : 0);
        std::vector<std::size_t> rows(n), feats(d);
        std::iota(rows.begin(), rows.end(), 0);
        std::iota(feats.begin(), feats.end(), 0);
        auto s = best_gini_split(data.X, rows, data.y, {}, feats);
        double oracle = brute_force_best(data.X, rows, data.y);
        if (std::isinf(oracle)) {
            CHECK_FALSE(s.has_value());
            continue;
        }
        REQUIRE(s.has_value());
        CHECK(s->children_impurity == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("every fitted node uses an optimal split") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto data = labelled_noise(seed, 50, 5, 4);
        auto t = fit_classification_tree(data.X, data.y, {}, TreeParams{8, 2, 0});
        auto rows = node_rows(t, data.X);
        for (std::size_t n = 0; n < t.nodes.size(); ++n) {
            const auto& node = t.nodes[n];
            if (node.is_leaf()) continue;
            std::vector<int> l, r;
            for (auto i : rows[n])
                (data.X(i, static_cast<std::size_t>(node.feature)) <= node.threshold ? l : r).push_back(data.y[i]);
            double chosen = static_cast<double>(l.size()) * gini_oracle(l) + static_cast<double>(r.size()) * gini_oracle(r);
            CHECK(chosen == doctest::Approx(brute_force_best(data.X, rows[n], data.y)).epsilon(1e-12));
        }
    }
}

TEST_CASE("separable single feature gives a stump") {
    Matrix X = Matrix::from_rows({{0.1}, {0.2}, {0.3}, {0.7}, {0.8}, {0.9}, {0.15}, {0.25}, {0.75}, {0.85}, {0.95}, {0.05}});
    Labels y{0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0};
    auto m = train(ModelConfig::defaults(ModelKind::DT), X, y);
    const auto& tree = std::get<TreeEnsemble>(m.body).trees.at(0);
    CHECK(tree.depth() == 1);
    CHECK(tree.nodes[0].threshold == doctest::Approx(0.5));
    CHECK(error_rate(m, {X, y}) == 0.0);
}

TEST_CASE("depth and minimum split bounds hold") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto data = labelled_noise(seed, 300, 6);
        for (auto [depth, split] : {std::pair{3, 2}, std::pair{8, 10}, std::pair{5, 40}}) {
            auto t = fit_classification_tree(data.X, data.y, {}, TreeParams{depth, split, 0});
            CHECK(t.depth() <= depth);
            for (const auto& node : t.nodes) {
                if (!node.is_leaf()) CHECK(node.weight >= split);
                CHECK(node.value >= 0.0);
                CHECK(node.value <= 1.0);
            }
        }
    }
}

TEST_CASE("forest is deterministic for a fixed seed") {
    auto data = noisy(5, 400);
    auto probe = noisy(6, 200);
    auto c = ModelConfig::defaults(ModelKind::RF, 42);
    auto a = train(c, data.X, data.y);
    c.workers = 3;
    auto b = train(c, data.X, data.y);
    CHECK(a.score_batch(probe.X) == b.score_batch(probe.X));
    CHECK(a.to_json().dump() == b.to_json().dump());
    c.seed = 43;
    CHECK(train(c, data.X, data.y).to_json().dump() != a.to_json().dump());
}

TEST_CASE("every model separates margin blobs") {
    auto tr = blobs(1, 60), te = blobs(2, 40), va = blobs(3, 20);
    for (auto kind : {ModelKind::DT, ModelKind::RF, ModelKind::GB, ModelKind::SVM}) {
        CAPTURE(to_string(kind));
        auto m = train(ModelConfig::defaults(kind, 7), tr.X, tr.y, {"x", "y"});
        calibrate(m, va.X, va.y);
        CHECK(error_rate(m, te) == 0.0);
    }
}

TEST_CASE("forest beats a single tree on noisy data") {
    double dt = 0, rf = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto tr = noisy(100 + seed, 400), te = noisy(200 + seed, 400);
        dt += error_rate(train(ModelConfig::defaults(ModelKind::DT, seed), tr.X, tr.y), te);
        rf += error_rate(train(ModelConfig::defaults(ModelKind::RF, seed), tr.X, tr.y), te);
    }
    CHECK(rf <= dt);
}

TEST_CASE("tree predictions ignore positive column scaling") {
    auto tr = noisy(7, 300), te = noisy(8, 200);
    auto scale = [](Matrix m) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            m(r, 0) *= 3.7;
            m(r, 4) *= 0.25;
        }
        return m;
    };
    for (auto kind : {ModelKind::DT, ModelKind::RF, ModelKind::GB}) {
        auto c = ModelConfig::defaults(kind, 3);
        c.n_estimators = std::min(c.n_estimators, 20);
        auto a = train(c, tr.X, tr.y);
        auto b = train(c, scale(tr.X), tr.y);
        CHECK(a.predict_batch(te.X) == b.predict_batch(scale(te.X)));
    }
}

TEST_CASE("prediction tie rule and batch order") {
    CHECK(leaf_forest({0.9}).predict(std::vector<double>{0.0}) == 1);
    CHECK(leaf_forest({0.5}).predict(std::vector<double>{0.0}) == 0);
    CHECK(leaf_forest({0.4, 0.6}).score(std::vector<double>{0.0}) == 0.5);
    CHECK(leaf_forest({0.4, 0.6}).predict(std::vector<double>{0.0}) == 0);
    CHECK(leaf_forest(std::vector<double>(100, 1.0)).score(std::vector<double>{0.3}) == 1.0);

    auto data = blobs(4, 30);
    auto m = train(ModelConfig::defaults(ModelKind::DT), data.X, data.y);
    auto batch = m.predict_batch(data.X);
    REQUIRE(batch.size() == data.X.rows());
    for (std::size_t i = 0; i < batch.size(); ++i) CHECK(batch[i] == m.predict(data.X.row(i)));
    CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), DimensionMismatch);
}

TEST_CASE("boosting starts from the base rate and is monotone in a lone feature") {
    Matrix X;
    Labels y;
    for (int i = 0; i < 40; ++i) {
        X.append_row(std::vector<double>{i / 40.0});
        y.push_back(i >= 30 ? 1 : 0);
    }
    auto c = ModelConfig::defaults(ModelKind::GB);
    c.n_estimators = 0;
    auto zero = train(c, X, y);
    CHECK(zero.score(std::vector<double>{0.5}) == doctest::Approx(0.25).epsilon(1e-12));

    c.n_estimators = 50;
    c.max_depth = 1;
    auto stumps = train(c, X, y);
    double previous = -1;
    for (int g = 0; g <= 200; ++g) {
        double s = stumps.score(std::vector<double>{g / 200.0});
        CHECK(s >= previous);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        previous = s;
    }
}

TEST_CASE("training rejects degenerate input") {
    Matrix X = Matrix::from_rows({{0.1}, {0.2}, {0.3}});
    CHECK_THROWS_AS(train(ModelConfig::defaults(ModelKind::RF), X, Labels{1, 1, 1}), DegenerateData);
    CHECK_THROWS_AS(train(ModelConfig::defaults(ModelKind::RF), X, Labels{1, 0}), DimensionMismatch);
    CHECK_THROWS_AS(train(ModelConfig::defaults(ModelKind::RF), X, Labels{1, 0, 1}, {"a", "b"}),
                    DimensionMismatch);
    TrainedModel untrained;
    CHECK_THROWS_AS(untrained.score(std::vector<double>{}), UntrainedModel);
}

TEST_CASE("serialization round trips every kind") {
    auto tr = noisy(11, 200), te = noisy(12, 100);
    for (auto kind : {ModelKind::DT, ModelKind::RF, ModelKind::GB, ModelKind::SVM}) {
        auto c = ModelConfig::defaults(kind, 9);
        c.n_estimators = std::min(c.n_estimators, 15);
        auto m = train(c, tr.X, tr.y);
        calibrate(m, te.X, te.y);
        auto text = m.to_json().dump();
        auto back = TrainedModel::from_json(nlohmann::json::parse(text));
        CHECK(back.score_batch(te.X) == m.score_batch(te.X));
        CHECK(back.feature_order == m.feature_order);
        CHECK(back.to_json().dump() == text);
    }
    auto j = train(ModelConfig::defaults(ModelKind::DT), tr.X, tr.y).to_json();
    j["format"] = "something-else/9";
    CHECK_THROWS_AS(TrainedModel::from_json(j), FormatError);
}

TEST_CASE("contributions explain the forest score") {
    auto tr = noisy(21, 300), te = noisy(22, 20);
    auto c = ModelConfig::defaults(ModelKind::RF, 1);
    c.n_estimators = 25;
    auto m = train(c, tr.X, tr.y);
    const auto& f = std::get<TreeEnsemble>(m.body);
    double bias = 0;
    for (const auto& t : f.trees) bias += t.nodes[0].value;
    bias /= static_cast<double>(f.trees.size());
    for (std::size_t i = 0; i < te.X.rows(); ++i) {
        auto contrib = m.contributions(te.X.row(i));
        double sum = bias;
        for (double v : contrib) sum += v;
        CHECK(sum == doctest::Approx(m.score(te.X.row(i))).epsilon(1e-9));
    }
}

TEST_CASE("platt scaling recovers a known logistic") {
    Rng rng(4);
    std::vector<double> margins;
    Labels y;
    for (int i = 0; i < 4000; ++i) {
        double f = rng.uniform(-4, 4);
        double p = 1 / (1 + std::exp(-(2.0 * f - 1.0)));
        margins.push_back(f);
        y.push_back(rng.chance(p) ? 1 : 0);
    }
    auto [a, b] = fit_platt(margins, y);
    CHECK(a == doctest::Approx(-2.0).epsilon(0.15));
    CHECK(b == doctest::Approx(1.0).epsilon(0.2));
}
