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

#include "instrace/selection.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <thread>

#include "instrace/errors.hpp"
#include "instrace/parallel.hpp"

namespace instrace {

namespace {

double variance(std::span<const double> v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size());
}

void normalize(std::vector<double>& v) {
    double total = std::accumulate(v.begin(), v.end(), 0.0);
    if (total > 0)
        for (double& x : v) x /= total;
}

double gini_of(double neg, double pos) { return gini(neg, pos); }

// Weighted impurity decrease per feature of one classification tree, from
// the supplied rows routed through it.
std::vector<double> routed_gini_decrease(const Tree& t, const Matrix& X, const Labels& y,
                                         std::size_t d) {
    std::vector<std::array<double, 2>> counts(t.nodes.size(), {0.0, 0.0});
    for (std::size_t i = 0; i < X.rows(); ++i) {
        auto x = X.row(i);
        std::size_t n = 0;
        for (;;) {
            counts[n][static_cast<std::size_t>(y[i])] += 1;
            if (t.nodes[n].is_leaf()) break;
            const TreeNode& node = t.nodes[n];
            n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                             ? node.left
                                             : node.right);
        }
    }
    auto weighted = [&](std::size_t n) {
        return (counts[n][0] + counts[n][1]) * gini_of(counts[n][0], counts[n][1]);
    };
    std::vector<double> dec(d, 0.0);
    for (std::size_t n = 0; n < t.nodes.size(); ++n) {
        const TreeNode& node = t.nodes[n];
        if (node.is_leaf()) continue;
        double g = weighted(n) - weighted(static_cast<std::size_t>(node.left)) -
                   weighted(static_cast<std::size_t>(node.right));
        dec[static_cast<std::size_t>(node.feature)] += std::max(0.0, g);
    }
    return dec;
}

std::vector<double> training_decrease(const Tree& t, std::size_t d) {
    std::vector<double> dec(d, 0.0);
    for (const TreeNode& node : t.nodes) {
        if (node.is_leaf()) continue;
        const TreeNode& l = t.nodes[static_cast<std::size_t>(node.left)];
        const TreeNode& r = t.nodes[static_cast<std::size_t>(node.right)];
        double g = node.weight * node.impurity - l.weight * l.impurity - r.weight * r.impurity;
        dec[static_cast<std::size_t>(node.feature)] += std::max(0.0, g);
    }
    return dec;
}

// Squared-error decrease of `target` routed through a regression tree.
std::vector<double> routed_sse_decrease(const Tree& t, const Matrix& X,
                                        std::span<const double> target, std::size_t d) {
    struct Acc {
        double n = 0, s = 0, s2 = 0;
        double sse() const { return n > 0 ? std::max(0.0, s2 - s * s / n) : 0.0; }
    };
    std::vector<Acc> acc(t.nodes.size());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        auto x = X.row(i);
        std::size_t n = 0;
        for (;;) {
            acc[n].n += 1;
            acc[n].s += target[i];
            acc[n].s2 += target[i] * target[i];
            if (t.nodes[n].is_leaf()) break;
            const TreeNode& node = t.nodes[n];
            n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                             ? node.left
                                             : node.right);
        }
    }
    std::vector<double> dec(d, 0.0);
    for (std::size_t n = 0; n < t.nodes.size(); ++n) {
        const TreeNode& node = t.nodes[n];
        if (node.is_leaf()) continue;
        double g = acc[n].sse() - acc[static_cast<std::size_t>(node.left)].sse() -
                   acc[static_cast<std::size_t>(node.right)].sse();
        dec[static_cast<std::size_t>(node.feature)] += std::max(0.0, g);
    }
    return dec;
}

std::vector<double> forest_importance(const TreeEnsemble& f, const Matrix& X, const Labels& y,
                                      std::size_t d, bool routed) {
    std::vector<double> total(d, 0.0);
    for (const Tree& t : f.trees) {
        auto dec = routed ? routed_gini_decrease(t, X, y, d) : training_decrease(t, d);
        normalize(dec);
        for (std::size_t j = 0; j < d; ++j) total[j] += dec[j];
    }
    normalize(total);
    return total;
}

std::vector<double> boosting_importance(const BoostedEnsemble& g, const Matrix& X, const Labels& y,
                                        std::size_t d, bool routed) {
    std::vector<double> total(d, 0.0);
    std::vector<double> raw(X.rows(), g.init_score), residual(X.rows());
    for (const Tree& t : g.stages) {
        std::vector<double> dec;
        if (routed) {
            for (std::size_t i = 0; i < X.rows(); ++i)
                residual[i] = y[i] - 1.0 / (1.0 + std::exp(-raw[i]));
            dec = routed_sse_decrease(t, X, residual, d);
            for (std::size_t i = 0; i < X.rows(); ++i) raw[i] += g.learning_rate * t.predict(X.row(i));
        } else {
            dec = training_decrease(t, d);
        }
        for (std::size_t j = 0; j < d; ++j) total[j] += dec[j];
    }
    normalize(total);
    return total;
}

bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

std::vector<std::string> pick(const std::vector<std::string>& names, const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(names[i]);
    return out;
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw LengthMismatch("series differ in length");
    if (x.size() < 2) throw LengthMismatch("correlation needs at least 2 points");
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

FilterResult correlation_filter(const Matrix& X, double r_max, unsigned workers) {
    std::size_t d = X.cols();
    std::vector<std::vector<double>> cols(d);
    std::vector<double> var(d);
    for (std::size_t j = 0; j < d; ++j) {
        cols[j] = X.column(j);
        var[j] = X.rows() > 0 ? variance(cols[j]) : 0.0;
    }
    std::vector<double> r(d * d, 0.0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < d;)
            for (std::size_t j = i + 1; j < d; ++j) r[i * d + j] = pearson_r(cols[i], cols[j]);
    };
    if (X.rows() < 2) throw LengthMismatch("correlation filter needs at least 2 rows");
    unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(d)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    FilterResult out;
    std::vector<char> alive(d, 1);
    for (std::size_t i = 0; i < d; ++i) {
        if (!alive[i]) continue;
        for (std::size_t j = i + 1; j < d; ++j) {
            if (!alive[j]) continue;
            double rij = r[i * d + j];
            if (std::abs(rij) <= r_max) continue;
            if (var[j] > var[i]) {
                alive[i] = 0;
                out.removed.push_back({i, j, rij});
                break;
            }
            alive[j] = 0;
            out.removed.push_back({j, i, rij});
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        if (alive[j]) out.kept.push_back(j);
    return out;
}

double ImportanceTable::max() const {
    return scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end());
}

nlohmann::json ImportanceTable::to_json() const {
    nlohmann::json s = nlohmann::json::object();
    for (std::size_t j = 0; j < features.size(); ++j) s[features[j]] = scores[j];
    return {{"model", std::string(to_string(model))}, {"scores", s}};
}

ImportanceTable importance_scores(const TrainedModel& model, const Matrix& X, const Labels& y) {
    if (!model.trained()) throw UntrainedModel("importance requested for an untrained model");
    std::size_t d = model.n_features();
    if (X.cols() != d) throw DimensionMismatch("importance data width differs from the model");
    if (X.rows() != y.size()) throw DimensionMismatch("importance data and labels differ in length");
    ImportanceTable t;
    t.model = model.config.kind;
    t.features = model.feature_order;
    bool routed = X.rows() > 0;
    if (const auto* f = std::get_if<TreeEnsemble>(&model.body)) {
        t.scores = forest_importance(*f, X, y, d, routed);
        if (all_zero(t.scores)) t.scores = forest_importance(*f, X, y, d, false);
    } else if (const auto* g = std::get_if<BoostedEnsemble>(&model.body)) {
        t.scores = boosting_importance(*g, X, y, d, routed);
        if (all_zero(t.scores)) t.scores = boosting_importance(*g, X, y, d, false);
    } else {
        const auto& m = std::get<LinearModel>(model.body);
        t.scores.resize(d);
        for (std::size_t j = 0; j < d; ++j) t.scores[j] = std::abs(m.weights[j]);
        normalize(t.scores);
    }
    return t;
}

ImportanceProvider trained_importance(std::uint64_t seed, unsigned workers) {
    return [seed, workers](ModelKind kind, const Matrix& train_X, const Labels& train_y,
                           const Matrix& holdout_X, const Labels& holdout_y,
                           const std::vector<std::string>& names) {
        ModelConfig c = ModelConfig::defaults(kind, seed);
        c.workers = workers;
        TrainedModel m = train(c, train_X, train_y, names);
        return importance_scores(m, holdout_X, holdout_y);
    };
}

SelectionReport select_sef(const Matrix& train_X, const Labels& train_y, const Matrix& holdout_X,
                           const Labels& holdout_y, const std::vector<std::string>& names,
                           const SelectionOptions& options) {
    if (names.size() != train_X.cols())
        throw DimensionMismatch("feature names do not match matrix width");
    bool has_holdout = holdout_X.rows() > 0;
    if (has_holdout && holdout_X.cols() != train_X.cols())
        throw DimensionMismatch("holdout width differs from training width");

    SelectionReport rep;
    rep.thresholds = options.thresholds;
    rep.cf = names;

    std::vector<std::size_t> varying;
    for (std::size_t j = 0; j < train_X.cols(); ++j) {
        auto col = train_X.column(j);
        if (col.size() >= 2 && variance(col) > 0) varying.push_back(j);
        else rep.constant.push_back(names[j]);
    }
    Matrix reduced = train_X.select_columns(varying);
    unsigned workers = resolve_workers(options.workers);
    FilterResult filt = correlation_filter(reduced, options.thresholds.r_max, workers);
    for (const auto& p : filt.removed)
        rep.removed.push_back({names[varying[p.dropped]], names[varying[p.kept]], p.r});
    std::vector<std::size_t> idf_cols;
    for (std::size_t k : filt.kept) idf_cols.push_back(varying[k]);
    rep.idf = pick(names, idf_cols);
    if (idf_cols.empty()) throw DegenerateData("no independent features remain");

    Matrix tx = train_X.select_columns(idf_cols);
    Matrix hx = has_holdout ? holdout_X.select_columns(idf_cols) : tx;
    const Labels& hy = has_holdout ? holdout_y : train_y;
    ImportanceProvider provider =
        options.provider ? options.provider : trained_importance(options.seed, options.workers);

    std::vector<std::future<ImportanceTable>> jobs;
    for (ModelKind k : options.models)
        jobs.push_back(std::async(std::launch::async, [&, k] {
            return provider(k, tx, train_y, hx, hy, rep.idf);
        }));
    for (auto& j : jobs) rep.importance.push_back(j.get());

    std::vector<double> best(rep.idf.size(), 0.0);
    for (const auto& t : rep.importance) {
        if (t.features != rep.idf) throw DimensionMismatch("importance table does not follow IDF order");
        auto& low = rep.imf_low[std::string(to_string(t.model))];
        auto& high = rep.imf_high[std::string(to_string(t.model))];
        for (std::size_t j = 0; j < t.scores.size(); ++j) {
            best[j] = std::max(best[j], t.scores[j]);
            if (t.scores[j] > options.thresholds.ims_low) low.push_back(rep.idf[j]);
            if (t.scores[j] > options.thresholds.ims_high) high.push_back(rep.idf[j]);
        }
    }
    for (std::size_t j = 0; j < rep.idf.size(); ++j) {
        if (best[j] > options.thresholds.ims_low) rep.imf.push_back(rep.idf[j]);
        if (best[j] > options.thresholds.ims_low && best[j] > options.thresholds.ims_high)
            rep.sef.push_back(rep.idf[j]);
    }
    return rep;
}

std::vector<std::string> sef_at(const SelectionReport& report, double ims_low, double ims_high) {
    std::vector<double> best(report.idf.size(), 0.0);
    for (const auto& t : report.importance)
        for (std::size_t j = 0; j < t.scores.size(); ++j) best[j] = std::max(best[j], t.scores[j]);
    std::vector<std::string> out;
    for (std::size_t j = 0; j < report.idf.size(); ++j)
        if (best[j] > ims_low && best[j] > ims_high) out.push_back(report.idf[j]);
    return out;
}

nlohmann::json SelectionReport::to_json() const {
    nlohmann::json removed_j = nlohmann::json::array();
    for (const auto& r : removed)
        removed_j.push_back({{"feature", r.feature}, {"partner", r.partner}, {"r", r.r}});
    nlohmann::json imp = nlohmann::json::array();
    for (const auto& t : importance) imp.push_back(t.to_json());
    return {{"thresholds",
             {{"r_max", thresholds.r_max}, {"ims_low", thresholds.ims_low}, {"ims_high", thresholds.ims_high}}},
            {"counts",
             {{"cf", cf.size()},
              {"constant", constant.size()},
              {"removed_correlated", removed.size()},
              {"idf", idf.size()},
              {"imf", imf.size()},
              {"sef", sef.size()}}},
            {"cf", cf},
            {"constant", constant},
            {"removed_correlated", removed_j},
            {"idf", idf},
            {"importance", imp},
            {"imf_low", imf_low},
            {"imf_high", imf_high},
            {"imf", imf},
            {"sef", sef}};
}

std::string SelectionReport::sef_text() const {
    std::string out;
    for (const auto& f : sef) out += f + '\n';
    return out;
}

std::vector<std::string> read_feature_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature list " + path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

}  // namespace instrace
