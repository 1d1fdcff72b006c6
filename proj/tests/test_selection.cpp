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
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include "instrace/errors.hpp"
#include "instrace/rng.hpp"
#include "instrace/selection.hpp"

using namespace instrace;

namespace {

// Textbook sum formula: (n*Sxy - Sx*Sy) / sqrt((n*Sxx - Sx^2)(n*Syy - Sy^2)).
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += (long double)x[i] * x[i];
        syy += (long double)y[i] * y[i];
        sxy += (long double)x[i] * y[i];
    }
    long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    return static_cast<double>((n * sxy - sx * sy) / den);
}

std::vector<std::string> names_for(std::size_t d) {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < d; ++j) out.push_back("f" + std::to_string(j));
    return out;
}

double gini_counts(double neg, double pos) {
    double n = neg + pos;
    if (n == 0) return 0;
    return 1.0 - (neg / n) * (neg / n) - (pos / n) * (pos / n);
}

// Manual impurity bookkeeping: route every row, tally class counts per node,
// credit n_t*g_t - n_l*g_l - n_r*g_r to the node's feature.
std::vector<double> mdi_oracle(const Tree& t, const Matrix& X, const Labels& y, std::size_t d) {
    std::vector<double> neg(t.nodes.size(), 0), pos(t.nodes.size(), 0);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        int n = 0;
        while (true) {
            (y[i] ? pos : neg)[n] += 1;
            const auto& node = t.nodes[n];
            if (node.feature < 0) break;
            n = X(i, node.feature) <= node.threshold ? node.left : node.right;
        }
    }
    std::vector<double> imp(d, 0);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        const auto& node = t.nodes[k];
        if (node.feature < 0) continue;
        auto l = static_cast<std::size_t>(node.left), r = static_cast<std::size_t>(node.right);
        imp[node.feature] += (neg[k] + pos[k]) * gini_counts(neg[k], pos[k]) -
                             (neg[l] + pos[l]) * gini_counts(neg[l], pos[l]) -
                             (neg[r] + pos[r]) * gini_counts(neg[r], pos[r]);
    }
    double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    for (auto& v : imp) v /= total;
    return imp;
}

// Provider returning fixed scores, one table per model.
ImportanceProvider fixed_scores(std::map<ModelKind, std::vector<double>> by_model) {
    return [by_model](ModelKind kind, const Matrix&, const Labels&, const Matrix&, const Labels&,
                      const std::vector<std::string>& names) {
        ImportanceTable t;
        t.model = kind;
        t.features = names;
        auto it = by_model.find(kind);
        t.scores = it == by_model.end() ? std::vector<double>(names.size(), 0.0) : it->second;
        return t;
    };
}

Labels alternating(std::size_t n) {
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
    return y;
}

}  // namespace

TEST_CASE("pearson examples") {
    std::vector<double> x{1, 2, 3, 4};
    CHECK(pearson_r(x, x) == doctest::Approx(1.0));
    CHECK(pearson_r(std::vector<double>{1, 2, 3}, std::vector<double>{6, 4, 2}) == doctest::Approx(-1.0));
    std::vector<double> y{1, 3, 2, 5};
    // Sxy = 5.5, Sxx = 5, Syy = 8.75 about the means.
    double exact = 5.5 / std::sqrt(5.0 * 8.75);
    CHECK(pearson_oracle(x, y) == doctest::Approx(exact).epsilon(1e-12));
    CHECK(pearson_r(x, y) == doctest::Approx(exact).epsilon(1e-12));
    CHECK(pearson_r(x, y) == doctest::Approx(0.8315).epsilon(1e-4));
    CHECK(pearson_r(x, std::vector<double>{7, 7, 7, 7}) == 0.0);
    CHECK_THROWS_AS(pearson_r(x, std::vector<double>{1, 2}), LengthMismatch);
    CHECK_THROWS_AS(pearson_r(std::vector<double>{1}, std::vector<double>{1}), LengthMismatch);
}

TEST_CASE("pearson matches the sum formula on random series") {
    Rng rng(100);
    for (int round = 0; round < 1000; ++round) {
        std::size_t n = 2 + rng.below(200);
        std::vector<double> x(n), y(n);
        double scale = std::pow(10.0, rng.uniform(-3, 3));
        double coupling = rng.uniform(-1, 1);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-1, 1) * scale;
            y[i] = coupling * x[i] / scale + rng.uniform(-1, 1);
        }
        double r = pearson_r(x, y);
        CHECK(std::abs(r - pearson_oracle(x, y)) <= 1e-9);
        CHECK(std::abs(r) <= 1.0 + 1e-12);
        CHECK(r == pearson_r(y, x));
    }
}

TEST_CASE("identical columns lose one member") {
    Matrix X = Matrix::from_rows({{1, 1, 5}, {2, 2, 3}, {3, 3, 9}, {4, 4, 1}});
    auto res = correlation_filter(X);
    REQUIRE(res.removed.size() == 1);
    CHECK(res.removed[0].dropped == 1);
    CHECK(res.removed[0].kept == 0);
    CHECK(res.removed[0].r == doctest::Approx(1.0));
    CHECK(res.kept == std::vector<std::size_t>{0, 2});
}

TEST_CASE("the higher-variance member of a pair survives") {
    // Column 1 is column 0 doubled, so it has four times the variance.
    Matrix X = Matrix::from_rows({{1, 2}, {2, 4}, {3, 6}, {5, 10}});
    auto res = correlation_filter(X);
    REQUIRE(res.removed.size() == 1);
    CHECK(res.removed[0].dropped == 0);
    CHECK(res.removed[0].kept == 1);
    CHECK(res.kept == std::vector<std::size_t>{1});
}

TEST_CASE("kept pairs never exceed the threshold") {
    Rng rng(8);
    for (int round = 0; round < 100; ++round) {
        std::size_t n = 20 + rng.below(60), d = 2 + rng.below(15);
        Matrix X(n, d);
        for (std::size_t r = 0; r < n; ++r) {
            double shared = rng.uniform();
            for (std::size_t c = 0; c < d; ++c) X(r, c) = rng.uniform(0, 1) * (c % 3) + shared * (c % 2);
        }
        double r_max = rng.uniform(0.2, 0.8);
        auto res = correlation_filter(X, r_max, 1 + round % 3);
        CHECK(res.kept.size() + res.removed.size() == d);
        for (std::size_t a = 0; a < res.kept.size(); ++a)
            for (std::size_t b = a + 1; b < res.kept.size(); ++b)
                CHECK(std::abs(pearson_r(X.column(res.kept[a]), X.column(res.kept[b]))) <= r_max);
        CHECK(correlation_filter(X, r_max, 4).kept == res.kept);
    }
}

TEST_CASE("independent columns are all kept") {
    // Orthogonal +/-1 contrasts are exactly uncorrelated.
    Matrix X(8, 3);
    for (std::size_t r = 0; r < 8; ++r) {
        X(r, 0) = (r & 1) ? 1 : -1;
        X(r, 1) = (r & 2) ? 1 : -1;
        X(r, 2) = (r & 4) ? 1 : -1;
    }
    auto res = correlation_filter(X);
    CHECK(res.removed.empty());
    CHECK(res.kept.size() == 3);
}

TEST_CASE("a perfectly separating stump owns all importance") {
    Matrix X(12, 1);
    Labels y(12);
    for (std::size_t i = 0; i < 12; ++i) {
        X(i, 0) = 0.05 * static_cast<double>(i) + (i >= 6 ? 0.3 : 0.0);
        y[i] = i >= 6;
    }
    auto model = train(ModelConfig::defaults(ModelKind::DT, 1), X, y);
    auto table = importance_scores(model, X, y);
    REQUIRE(table.scores.size() == 1);
    CHECK(table.scores[0] == doctest::Approx(1.0));
    CHECK(table.max() == doctest::Approx(1.0));
}

TEST_CASE("a feature carrying every split ranks first") {
    Rng rng(4);
    Matrix X(200, 2);
    Labels y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        X(i, 0) = rng.uniform();
        X(i, 1) = rng.uniform();
        y[i] = X(i, 0) > 0.5;
    }
    auto model = train(ModelConfig::defaults(ModelKind::RF, 3), X, y);
    auto table = importance_scores(model, X, y);
    CHECK(table.scores[0] > table.scores[1]);
    CHECK(table.scores[0] + table.scores[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("depth-2 tree importance equals manual bookkeeping") {
    Rng rng(21);
    for (int round = 0; round < 20; ++round) {
        std::size_t n = 40;
        Matrix X(n, 4);
        Labels y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 4; ++c) X(i, c) = static_cast<double>(rng.below(5));
            y[i] = (X(i, 0) + X(i, 2) + static_cast<double>(rng.below(3)) > 5) ? 1 : 0;
        }
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) continue;
        auto config = ModelConfig::defaults(ModelKind::DT, 5);
        config.max_depth = 2;
        config.min_samples_split = 2;
        auto model = train(config, X, y);
        const auto& tree = std::get<TreeEnsemble>(model.body).trees.at(0);
        REQUIRE(tree.depth() <= 2);
        auto expect = mdi_oracle(tree, X, y, 4);
        auto got = importance_scores(model, X, y);
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(got.scores[c] - expect[c]) <= 1e-9);
    }
}

TEST_CASE("importance scores are normalized for every kind") {
    Rng rng(77);
    Matrix X(120, 5);
    Labels y(120);
    for (std::size_t i = 0; i < 120; ++i) {
        for (std::size_t c = 0; c < 5; ++c) X(i, c) = rng.uniform();
        y[i] = X(i, 1) + 0.3 * X(i, 3) + 0.2 * rng.uniform() > 0.75;
    }
    for (auto kind : {ModelKind::RF, ModelKind::DT, ModelKind::GB, ModelKind::SVM}) {
        auto model = train(ModelConfig::defaults(kind, 9), X, y);
        auto t = importance_scores(model, X, y);
        CHECK(t.model == kind);
        double total = 0;
        for (double s : t.scores) {
            CHECK(std::isfinite(s));
            CHECK(s >= 0.0);
            total += s;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        auto top = std::max_element(t.scores.begin(), t.scores.end()) - t.scores.begin();
        CHECK(top == 1);
    }
    TrainedModel empty;
    CHECK_THROWS_AS(importance_scores(empty, X, y), UntrainedModel);
}

TEST_CASE("column rescaling keeps tree importance rankings") {
    Rng rng(13);
    Matrix X(150, 4);
    Labels y(150);
    for (std::size_t i = 0; i < 150; ++i) {
        for (std::size_t c = 0; c < 4; ++c) X(i, c) = rng.uniform();
        y[i] = X(i, 0) + 0.5 * X(i, 2) > 0.8;
    }
    Matrix scaled = X;
    for (std::size_t i = 0; i < 150; ++i) scaled(i, 2) *= 250.0;
    for (auto kind : {ModelKind::RF, ModelKind::DT, ModelKind::GB}) {
        auto a = importance_scores(train(ModelConfig::defaults(kind, 2), X, y), X, y);
        auto b = importance_scores(train(ModelConfig::defaults(kind, 2), scaled, y), scaled, y);
        auto rank = [](const std::vector<double>& s) {
            std::vector<std::size_t> idx(s.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](auto l, auto r) { return s[l] > s[r]; });
            return idx;
        };
        CHECK(rank(a.scores) == rank(b.scores));
    }
}

TEST_CASE("a feature at 0.06 enters IMF but not SEF") {
    Matrix X(8, 3);
    for (std::size_t r = 0; r < 8; ++r) {
        X(r, 0) = (r & 1) ? 1 : 0;
        X(r, 1) = (r & 2) ? 1 : 0;
        X(r, 2) = (r & 4) ? 1 : 0;
    }
    auto y = alternating(8);
    SelectionOptions opt;
    opt.provider = fixed_scores({{ModelKind::RF, {0.5, 0.06, 0.44}}, {ModelKind::DT, {0.9, 0.04, 0.06}}});
    auto rep = select_sef(X, y, {}, {}, names_for(3), opt);
    CHECK(rep.idf.size() == 3);
    CHECK(rep.imf == std::vector<std::string>{"f0", "f1", "f2"});
    CHECK(rep.sef == std::vector<std::string>{"f0", "f2"});
    CHECK(rep.imf_low.at("RF") == std::vector<std::string>{"f0", "f1", "f2"});
    CHECK(rep.imf_low.at("DT") == std::vector<std::string>{"f0", "f2"});
    CHECK(rep.imf_high.at("DT") == std::vector<std::string>{"f0"});
    CHECK(rep.sef_text() == "f0\nf2\n");
}

TEST_CASE("uncorrelated features above both thresholds keep SEF equal to CF") {
    Matrix X(8, 3);
    for (std::size_t r = 0; r < 8; ++r) {
        X(r, 0) = (r & 1) ? 1 : -1;
        X(r, 1) = (r & 2) ? 1 : -1;
        X(r, 2) = (r & 4) ? 1 : -1;
    }
    SelectionOptions opt;
    opt.provider = fixed_scores({{ModelKind::GB, {0.3, 0.3, 0.4}}});
    auto rep = select_sef(X, alternating(8), {}, {}, names_for(3), opt);
    CHECK(rep.sef == rep.cf);
    CHECK(rep.removed.empty());
}

TEST_CASE("constant columns are dropped before correlation") {
    Matrix X(8, 3, 1.0);
    for (std::size_t r = 0; r < 8; ++r) X(r, 0) = static_cast<double>(r), X(r, 2) = (r & 2) ? 1 : 0;
    SelectionOptions opt;
    opt.provider = fixed_scores({{ModelKind::RF, {0.5, 0.5}}});
    auto rep = select_sef(X, alternating(8), {}, {}, names_for(3), opt);
    CHECK(rep.constant == std::vector<std::string>{"f1"});
    CHECK(rep.idf == std::vector<std::string>{"f0", "f2"});
    CHECK(rep.to_json()["counts"]["cf"] == 3);

    Matrix flat(8, 2, 0.0);
    CHECK_THROWS_AS(select_sef(flat, alternating(8), {}, {}, names_for(2), opt), DegenerateData);
}

TEST_CASE("raising the upper threshold never grows SEF") {
    Rng rng(55);
    std::size_t d = 12;
    Matrix X(16, d);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < d; ++c) X(r, c) = rng.uniform();
    std::map<ModelKind, std::vector<double>> tables;
    for (auto kind : {ModelKind::RF, ModelKind::DT, ModelKind::SVM, ModelKind::GB}) {
        std::vector<double> s(d);
        for (auto& v : s) v = rng.uniform(0, 0.2);
        tables[kind] = s;
    }
    SelectionOptions opt;
    opt.thresholds.r_max = 1.0;
    opt.provider = fixed_scores(tables);
    auto rep = select_sef(X, alternating(16), {}, {}, names_for(d), opt);
    std::size_t previous = d + 1;
    for (double high = 0.0; high <= 0.25; high += 0.01) {
        auto sef = sef_at(rep, 0.05, high);
        CHECK(sef.size() <= previous);
        previous = sef.size();
        std::set<std::string> idf(rep.idf.begin(), rep.idf.end());
        for (const auto& f : sef) CHECK(idf.count(f) == 1);
    }
    CHECK(sef_at(rep, 0.05, 0.08) == rep.sef);
}

TEST_CASE("trained selection runs every model on the holdout") {
    Rng rng(3);
    auto make = [&](std::size_t n, Matrix& X, Labels& y) {
        X = Matrix(n, 6);
        y.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 6; ++c) X(i, c) = rng.uniform();
            X(i, 5) = 0.98 * X(i, 0) + 0.01 * rng.uniform();  // near duplicate of f0
            y[i] = X(i, 0) + X(i, 2) > 1.0;
        }
    };
    Matrix tx, hx;
    Labels ty, hy;
    make(200, tx, ty);
    make(60, hx, hy);
    SelectionOptions opt;
    opt.seed = 11;
    opt.workers = 2;
    auto rep = select_sef(tx, ty, hx, hy, names_for(6), opt);
    CHECK(rep.importance.size() == 4);
    REQUIRE(rep.removed.size() == 1);
    CHECK(rep.removed[0].feature == "f5");
    CHECK(rep.removed[0].partner == "f0");
    CHECK(std::find(rep.sef.begin(), rep.sef.end(), "f0") != rep.sef.end());
    CHECK(std::find(rep.sef.begin(), rep.sef.end(), "f2") != rep.sef.end());
    auto again = select_sef(tx, ty, hx, hy, names_for(6), opt);
    CHECK(again.to_json() == rep.to_json());
}

TEST_CASE("feature lists round trip through text") {
    auto path = std::filesystem::temp_directory_path() / "instrace_sef_test.txt";
    {
        std::ofstream out(path);
        out << "f0\n\nf2\n";
    }
    CHECK(read_feature_list(path.string()) == std::vector<std::string>{"f0", "f2"});
    std::filesystem::remove(path);
}
