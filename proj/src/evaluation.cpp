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

#include "instrace/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "instrace/errors.hpp"
#include "instrace/rng.hpp"

namespace instrace {

namespace {

// Largest-remainder rounding of total * fractions; ties go to the earlier part.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> fractions) {
    std::vector<std::size_t> out(fractions.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
        double exact = static_cast<double>(total) * fractions[p];
        out[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        assigned += out[p];
        rem.emplace_back(exact - static_cast<double>(out[p]), p);
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < rem.size(); ++i, ++assigned) ++out[rem[i].second];
    return out;
}

// Unit-capacity bipartite flow from classes (supply) to parts (demand).
// Returns false if the demand cannot be met.
bool route_extras(std::vector<std::vector<std::size_t>>& cells,
                  const std::vector<std::vector<double>>& frac, std::vector<std::size_t> supply,
                  std::vector<std::size_t> demand) {
    std::size_t C = supply.size(), P = demand.size();
    std::vector<std::vector<int>> used(C, std::vector<int>(P, 0));
    std::vector<std::vector<std::size_t>> order(C);
    for (std::size_t c = 0; c < C; ++c) {
        order[c].resize(P);
        std::iota(order[c].begin(), order[c].end(), 0);
        std::stable_sort(order[c].begin(), order[c].end(),
                         [&](std::size_t a, std::size_t b) { return frac[c][a] > frac[c][b]; });
    }
    // Augmenting path search over class -> part -> (back to class via used edge).
    auto augment = [&](std::size_t start) {
        std::vector<char> seen_class(C, 0), seen_part(P, 0);
        std::function<bool(std::size_t)> dfs = [&](std::size_t c) -> bool {
            seen_class[c] = 1;
            for (std::size_t p : order[c]) {
                if (used[c][p] || frac[c][p] <= 1e-9 || seen_part[p]) continue;
                seen_part[p] = 1;
                if (demand[p] > 0) {
                    --demand[p];
                    used[c][p] = 1;
                    return true;
                }
                for (std::size_t c2 = 0; c2 < C; ++c2) {
                    if (!used[c2][p] || seen_class[c2]) continue;
                    // Move c2's unit in p elsewhere, then take its place.
                    used[c2][p] = 0;
                    if (dfs(c2)) {
                        used[c][p] = 1;
                        return true;
                    }
                    used[c2][p] = 1;
                }
            }
            return false;
        };
        return dfs(start);
    };
    for (std::size_t c = 0; c < C; ++c)
        for (; supply[c] > 0; --supply[c])
            if (!augment(c)) return false;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) cells[c][p] += static_cast<std::size_t>(used[c][p]);
    return true;
}

std::vector<std::vector<std::size_t>> class_indices(const Labels& labels) {
    std::vector<std::vector<std::size_t>> by(2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("labels must be 0 or 1");
        by[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    return by;
}

// Shuffles each class with its own derived seed and deals the cells out in
// part order.
std::vector<std::vector<std::size_t>> deal(const Labels& labels, std::span<const double> fractions,
                                           std::uint64_t seed) {
    auto by = class_indices(labels);
    std::vector<std::size_t> counts{by[0].size(), by[1].size()};
    auto cells = controlled_rounding(counts, fractions);
    std::vector<std::vector<std::size_t>> parts(fractions.size());
    for (std::size_t c = 0; c < by.size(); ++c) {
        Rng rng(derive_seed(seed, c));
        rng.shuffle(by[c]);
        std::size_t at = 0;
        for (std::size_t p = 0; p < fractions.size(); ++p) {
            parts[p].insert(parts[p].end(), by[c].begin() + static_cast<long>(at),
                            by[c].begin() + static_cast<long>(at + cells[c][p]));
            at += cells[c][p];
        }
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return parts;
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::vector<std::vector<std::size_t>> controlled_rounding(std::span<const std::size_t> counts,
                                                          std::span<const double> fractions) {
    std::size_t C = counts.size(), P = fractions.size();
    std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    auto part_totals = largest_remainder(total, fractions);

    std::vector<std::vector<std::size_t>> cells(C, std::vector<std::size_t>(P, 0));
    std::vector<std::vector<double>> frac(C, std::vector<double>(P, 0.0));
    std::vector<std::size_t> supply(C, 0);
    std::vector<std::size_t> col(P, 0);
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t row = 0;
        for (std::size_t p = 0; p < P; ++p) {
            double exact = static_cast<double>(counts[c]) * fractions[p];
            cells[c][p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            frac[c][p] = std::max(0.0, exact - static_cast<double>(cells[c][p]));
            row += cells[c][p];
            col[p] += cells[c][p];
        }
        supply[c] = counts[c] - row;
    }
    std::vector<std::size_t> demand(P);
    bool feasible = true;
    for (std::size_t p = 0; p < P; ++p) {
        if (part_totals[p] < col[p]) feasible = false;
        else demand[p] = part_totals[p] - col[p];
    }
    auto floors = cells;
    if (feasible && route_extras(cells, frac, supply, demand)) return cells;

    // No rounding meets both margins; keep per-class largest remainder.
    cells = floors;
    for (std::size_t c = 0; c < C; ++c) cells[c] = largest_remainder(counts[c], fractions);
    return cells;
}

nlohmann::json SplitPlan::to_json() const {
    return {{"train", train},
            {"validation", validation},
            {"test", test},
            {"fractions", {fractions.train, fractions.validation, fractions.test}},
            {"stratified", stratified},
            {"seed", seed}};
}

SplitPlan stratified_split(const Labels& labels, SplitFractions fractions, std::uint64_t seed) {
    double sum = fractions.train + fractions.validation + fractions.test;
    if (std::abs(sum - 1.0) > 1e-9 || fractions.train < 0 || fractions.validation < 0 ||
        fractions.test < 0)
        throw std::invalid_argument("split fractions must be non-negative and sum to 1");
    auto by = class_indices(labels);
    for (std::size_t c = 0; c < by.size(); ++c)
        if (by[c].size() < 3)
            throw InsufficientClass("class " + std::to_string(c) + " has " +
                                    std::to_string(by[c].size()) + " samples, need at least 3");
    std::vector<double> f{fractions.train, fractions.validation, fractions.test};
    auto parts = deal(labels, f, seed);
    SplitPlan plan;
    plan.train = std::move(parts[0]);
    plan.validation = std::move(parts[1]);
    plan.test = std::move(parts[2]);
    plan.fractions = fractions;
    plan.seed = seed;
    return plan;
}

std::vector<std::vector<std::size_t>> stratified_kfold(const Labels& labels, std::size_t k,
                                                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    auto by = class_indices(labels);
    for (std::size_t c = 0; c < by.size(); ++c)
        if (by[c].size() < k)
            throw InsufficientClass("class " + std::to_string(c) + " has " +
                                    std::to_string(by[c].size()) + " samples, fewer than k = " +
                                    std::to_string(k));
    std::vector<double> f(k, 1.0 / static_cast<double>(k));
    return deal(labels, f, seed);
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream os;
    os << ",predicted_benign,predicted_malicious\n"
       << "actual_benign," << tn << ',' << fp << '\n'
       << "actual_malicious," << fn << ',' << tp << '\n';
    return os.str();
}

nlohmann::json ConfusionMatrix::to_json() const {
    return {{"tp", tp}, {"tn", tn}, {"fp", fp}, {"fn", fn}};
}

ConfusionMatrix confusion(const Labels& predicted, const Labels& truth) {
    if (predicted.size() != truth.size())
        throw LengthMismatch("predictions and truth differ in length");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        bool p = predicted[i] == 1, t = truth[i] == 1;
        if (p && t) ++cm.tp;
        else if (!p && !t) ++cm.tn;
        else if (p) ++cm.fp;
        else ++cm.fn;
    }
    return cm;
}

double roc_auc(std::span<const double> scores, const Labels& truth) {
    if (scores.size() != truth.size()) throw LengthMismatch("scores and truth differ in length");
    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos = 0, rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t)
            if (truth[order[t]] == 1) {
                rank_sum += avg;
                pos += 1;
            }
        i = j;
    }
    double neg = static_cast<double>(n) - pos;
    if (pos == 0 || neg == 0) throw SingleClass("ROC AUC needs both classes");
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

MetricSet metrics(const ConfusionMatrix& cm, std::span<const double> scores, const Labels& truth) {
    if (cm.total() == 0) throw EmptyInput("confusion matrix is empty");
    double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
    double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
    double total = tp + tn + fp + fn;
    double support_pos = tp + fn, support_neg = tn + fp;

    MetricSet m;
    m.accuracy = (tp + tn) / total;
    m.precision_positive = ratio(tp, tp + fp);
    m.recall_positive = ratio(tp, tp + fn);
    m.f1_positive = f1(m.precision_positive, m.recall_positive);
    double precision_neg = ratio(tn, tn + fn);
    double recall_neg = ratio(tn, tn + fp);
    double f1_neg = f1(precision_neg, recall_neg);
    m.precision_weighted = (m.precision_positive * support_pos + precision_neg * support_neg) / total;
    m.recall_weighted = (m.recall_positive * support_pos + recall_neg * support_neg) / total;
    m.f1_weighted = (m.f1_positive * support_pos + f1_neg * support_neg) / total;
    if (!scores.empty()) {
        auto pos = std::count(truth.begin(), truth.end(), 1);
        if (pos > 0 && pos < static_cast<long>(truth.size())) m.roc_auc = roc_auc(scores, truth);
        else if (scores.size() != truth.size())
            throw LengthMismatch("scores and truth differ in length");
    }
    return m;
}

nlohmann::json MetricSet::to_json(bool include_timing) const {
    nlohmann::json j = {{"accuracy", accuracy},
                        {"precision_weighted", precision_weighted},
                        {"recall_weighted", recall_weighted},
                        {"f1_weighted", f1_weighted},
                        {"precision_positive", precision_positive},
                        {"recall_positive", recall_positive},
                        {"f1_positive", f1_positive},
                        {"roc_auc", roc_auc ? nlohmann::json(*roc_auc) : nlohmann::json()}};
    if (include_timing) j["test_time_s"] = test_time_s;
    return j;
}

nlohmann::json EvaluationReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
        arr.push_back({{"model", r.model},
                       {"feature_set", r.feature_set},
                       {"confusion", r.cm.to_json()},
                       {"metrics", r.metrics.to_json()}});
    return {{"evaluations", arr}};
}

std::string EvaluationReport::to_csv() const {
    std::ostringstream os;
    os << "model,feature_set,accuracy,precision,recall,f1_score,f1_positive,roc_auc,tp,tn,fp,fn\n";
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << r.model << ',' << r.feature_set << ',' << fmt(m.accuracy) << ','
           << fmt(m.precision_weighted) << ',' << fmt(m.recall_weighted) << ','
           << fmt(m.f1_weighted) << ',' << fmt(m.f1_positive) << ','
           << (m.roc_auc ? fmt(*m.roc_auc) : std::string()) << ',' << r.cm.tp << ',' << r.cm.tn
           << ',' << r.cm.fp << ',' << r.cm.fn << '\n';
    }
    return os.str();
}

}  // namespace instrace
