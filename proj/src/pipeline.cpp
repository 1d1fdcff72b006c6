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

#include "instrace/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "instrace/errors.hpp"
#include "instrace/parallel.hpp"
#include "instrace/trace_parsers.hpp"

namespace instrace {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

// Data lines of a small CSV file, header and comments removed.
std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fields = split_csv(t);
        if (first && (fields[0] == "name" || fields[0] == "id")) {
            first = false;
            continue;
        }
        first = false;
        rows.push_back(std::move(fields));
    }
    return rows;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (...) {
        used = 0;
    }
    if (used != v.size() || v.empty() || !std::isfinite(d)) throw std::invalid_argument(key + ": not a number: " + v);
    return d;
}

unsigned long long parse_unsigned(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    unsigned long long u = 0;
    try {
        if (!v.empty() && v[0] != '-') u = std::stoull(v, &used);
    } catch (...) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw std::invalid_argument(key + ": not a non-negative integer: " + v);
    return u;
}

std::vector<fs::path> json_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "corpus.json")
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

PatternCatalog catalog_for(const RunConfig& c) {
    return c.catalog.empty() ? PatternCatalog::builtin() : PatternCatalog::load(c.catalog);
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

constexpr ModelKind kKinds[] = {ModelKind::RF, ModelKind::DT, ModelKind::SVM, ModelKind::GB};

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    auto threshold = [&](double& slot) {
        double d = parse_double(key, value);
        if (d < 0 || d > 1) throw std::invalid_argument(key + ": must lie in [0, 1]");
        slot = d;
    };
    if (key == "traces") traces = value;
    else if (key == "out") out = value;
    else if (key == "model") model = value;
    else if (key == "catalog") catalog = value;
    else if (key == "packages") packages = value;
    else if (key == "targets") targets = value;
    else if (key == "replay_root") replay_root = value;
    else if (key == "work_root") work_root = value;
    else if (key == "ssh_program") ssh_program = value;
    else if (key == "local.install") local.install = value;
    else if (key == "local.filetop") local.tracers[LogKind::filetop] = value;
    else if (key == "local.opensnoop") local.tracers[LogKind::opensnoop] = value;
    else if (key == "local.tcpconnect") local.tracers[LogKind::tcpconnect] = value;
    else if (key == "local.syscall") local.tracers[LogKind::syscall] = value;
    else if (key == "r_max") threshold(thresholds.r_max);
    else if (key == "ims_low") threshold(thresholds.ims_low);
    else if (key == "ims_high") threshold(thresholds.ims_high);
    else if (key == "similarity.string_match") threshold(similarity.string_match);
    else if (key == "similarity.levenshtein") threshold(similarity.levenshtein);
    else if (key == "similarity.jaccard") threshold(similarity.jaccard);
    else if (key == "similarity.cosine") threshold(similarity.cosine);
    else if (key == "seed") seed = parse_unsigned(key, value);
    else if (key == "workers") workers = static_cast<unsigned>(parse_unsigned(key, value));
    else if (key == "window") {
        auto w = parse_unsigned(key, value);
        if (w == 0) throw std::invalid_argument("window: must be positive");
        window_s = static_cast<int>(w);
    } else if (key == "cv_folds") {
        cv_folds = parse_unsigned(key, value);
        if (cv_folds == 1) throw std::invalid_argument("cv_folds: use 0 to disable or at least 2");
    } else {
        throw std::invalid_argument("unknown configuration key: " + key);
    }
}

RunConfig RunConfig::load(const fs::path& path) {
    RunConfig c;
    std::istringstream in(read_text(path));
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path.string() + ":" + std::to_string(n) + ": expected key = value");
        try {
            c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return c;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json tracers = nlohmann::json::object();
    for (const auto& [k, v] : local.tracers) tracers[std::string(to_string(k))] = v;
    return {{"traces", traces.string()},
            {"out", out.string()},
            {"model", model.string()},
            {"catalog", catalog.string()},
            {"seed", seed},
            {"window", window_s},
            {"cv_folds", cv_folds},
            {"thresholds", {{"r_max", thresholds.r_max}, {"ims_low", thresholds.ims_low}, {"ims_high", thresholds.ims_high}}},
            {"similarity",
             {{"string_match", similarity.string_match},
              {"levenshtein", similarity.levenshtein},
              {"jaccard", similarity.jaccard},
              {"cosine", similarity.cosine}}}};
}

TraceBundle load_bundle(const fs::path& path, int window_s) {
    if (fs::is_directory(path)) {
        PackageRef ref;
        ref.name = path.filename().string();
        if (ref.name.empty()) ref.name = path.parent_path().filename().string();
        return load_trace_directory(path, ref, window_s);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return bundle_from_json(j);
}

std::vector<TraceBundle> load_corpus(const fs::path& path, int window_s) {
    if (fs::is_regular_file(path)) return {load_bundle(path, window_s)};
    if (!fs::is_directory(path)) throw std::invalid_argument("no corpus at " + path.string());

    std::vector<fs::path> files = fs::is_directory(path / "bundles") ? json_files(path / "bundles") : json_files(path);
    std::vector<TraceBundle> out;
    if (!files.empty()) {
        for (const auto& f : files) out.push_back(load_bundle(f, window_s));
        return out;
    }
    if (!fs::exists(path / "data.csv")) throw std::invalid_argument("no bundles or data.csv under " + path.string());
    std::map<std::string, Label> labels;
    if (fs::exists(path / "labels.csv"))
        for (const auto& row : csv_rows(path / "labels.csv"))
            if (row.size() >= 2) labels[row[0]] = label_from_string(row[1]).value_or(Label::unknown);
    for (const auto& row : csv_rows(path / "data.csv")) {
        PackageRef ref;
        ref.name = row[0];
        ref.version = row.size() > 1 ? row[1] : "";
        ref.label = labels.count(ref.name) ? labels[ref.name] : Label::unknown;
        out.push_back(load_trace_directory(path / ref.name, ref, window_s));
    }
    return out;
}

nlohmann::json Detector::to_json() const {
    return {{"format", kDetectorFormat},
            {"model", model.to_json()},
            {"candidates", candidates},
            {"scaler", scaler.to_json()},
            {"catalog", catalog.to_json()}};
}

Detector Detector::from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != kDetectorFormat)
        throw FormatError("not an instrace detector file");
    try {
        Detector d;
        d.model = TrainedModel::from_json(j.at("model"));
        d.candidates = j.at("candidates").get<std::vector<std::string>>();
        d.scaler = MinMaxScaler::from_json(j.at("scaler"));
        d.catalog = PatternCatalog::from_json(j.at("catalog"));
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("detector file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("detector file: ") + e.what());
    }
}

nlohmann::json Verdict::to_json() const {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& [name, c] : top_features) top.push_back({{"feature", name}, {"contribution", c}});
    return {{"package", package},
            {"score", score},
            {"class", to_string(label)},
            {"top_features", top},
            {"elapsed_ms", elapsed_ms}};
}

Verdict scan_bundle(const Detector& d, const TraceBundle& bundle, std::size_t top_k) {
    auto start = Clock::now();
    if (d.candidates != FeatureCatalog::standard().names())
        throw ModelMismatch("detector was trained on a different candidate feature list");
    if (d.scaler.min.size() != d.candidates.size() || d.scaler.max.size() != d.candidates.size())
        throw ModelMismatch("scaler width does not match the candidate features");
    std::vector<std::size_t> cols;
    for (const auto& name : d.model.feature_order) {
        auto it = std::find(d.candidates.begin(), d.candidates.end(), name);
        if (it == d.candidates.end()) throw ModelMismatch("model feature not among candidates: " + name);
        cols.push_back(static_cast<std::size_t>(it - d.candidates.begin()));
    }

    auto fv = extract_candidates(bundle, d.catalog);
    auto scaled = d.scaler.apply(fv.values);
    std::vector<double> x;
    x.reserve(cols.size());
    for (auto c : cols) x.push_back(scaled[c]);

    Verdict v;
    v.package = bundle.package.name;
    v.score = d.model.score(x);
    v.label = d.model.predict(x) == 1 ? Label::malicious : Label::benign;
    auto contrib = d.model.contributions(x);
    std::vector<std::size_t> order(contrib.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return std::abs(contrib[a]) > std::abs(contrib[b]); });
    for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i)
        v.top_features.emplace_back(d.model.feature_order[order[i]], contrib[order[i]]);
    v.elapsed_ms = seconds_since(start) * 1000.0;
    return v;
}

PipelineResult run_pipeline(const RunConfig& config, std::vector<TraceBundle> bundles) {
    auto start = Clock::now();
    PipelineResult r;
    const unsigned workers = resolve_workers(config.workers);
    const PatternCatalog catalog = catalog_for(config);

    auto cleaned = clean_corpus(std::move(bundles));
    r.cleaning = cleaned.report;
    std::vector<TraceBundle> labeled;
    for (auto& b : cleaned.bundles) {
        if (b.package.label == Label::unknown) r.unlabeled.push_back(b.package.name);
        else labeled.push_back(std::move(b));
    }
    if (labeled.empty()) throw DegenerateData("corpus has no labeled bundles");

    r.features.resize(labeled.size());
    parallel_for(labeled.size(), workers,
                 [&](std::size_t i) { r.features[i] = extract_candidates(labeled[i], catalog); });
    Labels y;
    for (const auto& fv : r.features) y.push_back(fv.label == Label::malicious ? 1 : 0);
    auto positives = std::count(y.begin(), y.end(), 1);
    if (positives == 0 || positives == static_cast<long>(y.size()))
        throw DegenerateData("corpus has a single class");

    r.split = stratified_split(y, {}, config.seed);
    const auto names = FeatureCatalog::standard().names();
    Matrix raw = to_matrix(r.features);
    MinMaxScaler scaler = MinMaxScaler::fit(raw.select_rows(r.split.train));
    Matrix X = scaler.transform(raw);
    auto labels_of = [&](const std::vector<std::size_t>& idx) {
        Labels out;
        for (auto i : idx) out.push_back(y[i]);
        return out;
    };
    Matrix trX = X.select_rows(r.split.train), vaX = X.select_rows(r.split.validation),
           teX = X.select_rows(r.split.test);
    Labels ytr = labels_of(r.split.train), yva = labels_of(r.split.validation), yte = labels_of(r.split.test);

    SelectionOptions sel;
    sel.thresholds = config.thresholds;
    sel.seed = config.seed;
    sel.workers = workers;
    r.selection = select_sef(trX, ytr, vaX, yva, names, sel);
    std::vector<std::size_t> sef_cols, all_cols;
    for (const auto& f : r.selection.sef)
        sef_cols.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), f) - names.begin()));
    for (std::size_t j = 0; j < names.size(); ++j) all_cols.push_back(j);
    if (sef_cols.empty()) throw DegenerateData("feature selection kept no features");

    nlohmann::json test_times = nlohmann::json::object();
    for (const auto& [set_name, cols] : {std::pair{std::string("sef"), sef_cols}, std::pair{std::string("cf"), all_cols}}) {
        std::vector<std::string> order;
        for (auto c : cols) order.push_back(names[c]);
        Matrix tr = trX.select_columns(cols), va = vaX.select_columns(cols), te = teX.select_columns(cols);
        for (ModelKind kind : kKinds) {
            auto cfg = ModelConfig::defaults(kind, config.seed);
            cfg.workers = workers;
            TrainedModel m = train(cfg, tr, ytr, order);
            if (kind == ModelKind::SVM) calibrate(m, va, yva);
            auto t0 = Clock::now();
            auto scores = m.score_batch(te);
            Labels pred;
            for (double s : scores) pred.push_back(s > 0.5 ? 1 : 0);
            double elapsed = seconds_since(t0);
            auto cm = confusion(pred, yte);
            auto ms = metrics(cm, scores, yte);
            ms.test_time_s = elapsed;
            r.evaluation.rows.push_back({std::string(to_string(kind)), set_name, cm, ms});
            test_times[std::string(to_string(kind)) + "/" + set_name] = elapsed;
            if (set_name == "sef") r.models.push_back(std::move(m));
        }
    }

    r.detector.model = r.models.front();
    r.detector.candidates = names;
    r.detector.scaler = scaler;
    r.detector.catalog = catalog;

    // k-fold over train and validation on the selected features.
    r.cross_validation = {{"k", config.cv_folds}, {"feature_set", "sef"}, {"models", nlohmann::json::object()}};
    if (config.cv_folds >= 2) {
        std::vector<std::size_t> pool = r.split.train;
        pool.insert(pool.end(), r.split.validation.begin(), r.split.validation.end());
        std::sort(pool.begin(), pool.end());
        Labels ypool = labels_of(pool);
        Matrix P = X.select_rows(pool).select_columns(sef_cols);
        try {
            auto folds = stratified_kfold(ypool, config.cv_folds, config.seed);
            for (ModelKind kind : kKinds) {
                std::vector<double> acc, f1;
                for (std::size_t f = 0; f < folds.size(); ++f) {
                    std::vector<std::size_t> fit_idx;
                    for (std::size_t g = 0; g < folds.size(); ++g)
                        if (g != f) fit_idx.insert(fit_idx.end(), folds[g].begin(), folds[g].end());
                    std::sort(fit_idx.begin(), fit_idx.end());
                    Labels yfit, yhold;
                    for (auto i : fit_idx) yfit.push_back(ypool[i]);
                    for (auto i : folds[f]) yhold.push_back(ypool[i]);
                    auto cfg = ModelConfig::defaults(kind, derive_seed(config.seed, f));
                    cfg.workers = workers;
                    auto m = train(cfg, P.select_rows(fit_idx), yfit, r.selection.sef);
                    auto ms = metrics(confusion(m.predict_batch(P.select_rows(folds[f])), yhold));
                    acc.push_back(ms.accuracy);
                    f1.push_back(ms.f1_positive);
                }
                auto mean = [](const std::vector<double>& v) {
                    double s = 0;
                    for (double x : v) s += x;
                    return s / static_cast<double>(v.size());
                };
                double mu = mean(acc), var = 0;
                for (double a : acc) var += (a - mu) * (a - mu);
                r.cross_validation["models"][std::string(to_string(kind))] = {
                    {"accuracy", acc}, {"f1_positive", f1}, {"mean_accuracy", mu},
                    {"std_accuracy", std::sqrt(var / static_cast<double>(acc.size()))}};
            }
        } catch (const InsufficientClass& e) {
            r.cross_validation["skipped"] = e.what();
        }
    }

    r.timing = {{"test_time_s", test_times}, {"total_s", seconds_since(start)}};
    return r;
}

void write_pipeline_outputs(const PipelineResult& r, const RunConfig& config, const fs::path& dir) {
    fs::create_directories(dir);
    write_json(dir / "config.json", config.to_json());
    auto cleaning = r.cleaning.to_json();
    cleaning["unlabeled"] = r.unlabeled;
    cleaning["kept"] = r.features.size();
    write_json(dir / "cleaning_report.json", cleaning);
    write_text(dir / "features.csv", feature_matrix_csv(r.features));
    write_json(dir / "split.json", r.split.to_json());
    write_json(dir / "selection_report.json", r.selection.to_json());
    write_text(dir / "sef.txt", r.selection.sef_text());
    for (const auto& m : r.models)
        write_json(dir / ("model_" + lower(to_string(m.config.kind)) + ".json"), m.to_json());
    write_json(dir / "model.json", r.detector.to_json());
    write_json(dir / "evaluation.json", r.evaluation.to_json());
    write_text(dir / "evaluation.csv", r.evaluation.to_csv());
    for (const auto& row : r.evaluation.rows)
        if (row.feature_set == "sef") write_text(dir / ("confusion_" + lower(row.model) + ".csv"), row.cm.to_csv());
    write_json(dir / "cv.json", r.cross_validation);
    write_json(dir / "timing.json", r.timing);
}

std::vector<CampaignPackage> read_package_list(const fs::path& path) {
    std::vector<CampaignPackage> out;
    for (const auto& row : csv_rows(path)) {
        if (row[0].empty()) throw std::invalid_argument(path.string() + ": empty package name");
        CampaignPackage p;
        p.ref.name = row[0];
        p.ref.version = row.size() > 1 ? row[1] : "";
        p.archive = row.size() > 2 ? row[2] : "";
        if (row.size() > 3) p.ref.label = label_from_string(row[3]).value_or(Label::unknown);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ExecutorTarget> read_target_list(const fs::path& path) {
    std::vector<ExecutorTarget> out;
    for (const auto& row : csv_rows(path)) {
        if (row.size() < 2) throw std::invalid_argument(path.string() + ": expected id,transport[,credentials]");
        auto t = transport_from_string(row[1]);
        if (!t) throw std::invalid_argument(path.string() + ": unknown transport " + row[1]);
        out.push_back({row[0], *t, row.size() > 2 ? row[2] : ""});
    }
    return out;
}

std::vector<IndexEntry> read_similarity_index(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<IndexEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) out.push_back({t, ""});
        else out.push_back({trim(line.substr(0, tab)), trim(line.substr(tab + 1))});
    }
    return out;
}

}  // namespace instrace
