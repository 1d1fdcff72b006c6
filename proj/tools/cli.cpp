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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <optional>

#include "instrace/acquisition.hpp"
#include "instrace/errors.hpp"
#include "instrace/pipeline.hpp"
#include "instrace/synthcorpus.hpp"

namespace instrace {

namespace fs = std::filesystem;

namespace {

// Flags shared by every subcommand; each maps onto a RunConfig key.
struct CommonFlags {
    std::string config;
    std::map<std::string, std::string> values;  // config key -> flag text

    void add(CLI::App& app) {
        app.add_option("--config", config, "key = value configuration file");
        for (const auto& [flag, key] : kFlags) app.add_option(flag, values[key], "overrides '" + key + "'");
    }

    RunConfig resolve(const CLI::App& app) const {
        RunConfig c = config.empty() ? RunConfig{} : RunConfig::load(config);
        for (const auto& [flag, key] : kFlags)
            if (app.count(flag) > 0) c.set(key, values.at(key));
        return c;
    }

    static inline const std::vector<std::pair<std::string, std::string>> kFlags = {
        {"--traces", "traces"}, {"--out", "out"},       {"--seed", "seed"},     {"--workers", "workers"},
        {"--window", "window"}, {"--model", "model"},   {"--catalog", "catalog"},
    };
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int cmd_synth(const RunConfig& c, std::size_t benign, std::size_t malicious, double noise, std::ostream& out) {
    if (benign == 0 || malicious == 0) throw UsageError("--benign and --malicious must be at least 1");
    if (noise < 0 || noise > 1) throw UsageError("--noise must lie in [0, 1]");
    auto corpus = synth_corpus(benign, malicious, c.seed, noise, c.workers);
    write_corpus(corpus, c.out);
    out << "wrote " << corpus.bundles.size() << " bundles to " << (c.out / "bundles").string() << "\n";
    return kExitOk;
}

int cmd_acquire(const RunConfig& c, std::ostream& out, std::ostream& err) {
    if (c.packages.empty()) throw UsageError("acquire needs a package list (--packages)");
    auto packages = read_package_list(c.packages);
    if (packages.empty()) throw UsageError("package list is empty");
    std::vector<ExecutorTarget> targets;
    if (!c.targets.empty()) targets = read_target_list(c.targets);
    else if (!c.replay_root.empty()) targets = {{"replay", Transport::replay_fixture, ""}};
    if (targets.empty()) throw UsageError("no executor targets configured (--targets)");

    std::optional<ReplayExecutor> replay;
    if (!c.replay_root.empty()) replay.emplace(c.replay_root);
    LocalProcessExecutor local(c.local);
    RemoteShellExecutor remote(c.local, c.ssh_program);
    DispatchExecutor dispatch;
    if (replay) dispatch.route(Transport::replay_fixture, &*replay);
    dispatch.route(Transport::local_process, &local);
    dispatch.route(Transport::remote_shell, &remote);

    CampaignOptions opts;
    opts.traces_dir = c.traces.empty() ? fs::path("Traces") : c.traces;
    if (!c.work_root.empty()) opts.work_root = c.work_root;
    opts.window_s = c.window_s;
    opts.seed = c.seed;
    auto result = run_campaign(packages, targets, dispatch, opts);

    std::string labels = "name,label\n";
    bool any_label = false;
    for (const auto& p : packages)
        if (p.ref.label != Label::unknown) {
            labels += p.ref.name + "," + std::string(to_string(p.ref.label)) + "\n";
            any_label = true;
        }
    if (any_label) std::ofstream(opts.traces_dir / "labels.csv") << labels;

    std::size_t executor_failures = 0;
    for (const auto& s : result.sessions)
        if (s.status == SessionStatus::failed && s.failure != "install") {
            ++executor_failures;
            err << s.package.name << ": " << s.failure << " on " << s.target.id << "\n";
        }
    for (const auto& name : result.skipped) err << name << ": skipped, unsupported archive\n";
    out << result.manifest.rows().size() << " manifest rows, " << result.bundles.size() << " bundles in "
        << opts.traces_dir.string() << "\n";
    if (!result.complete() || executor_failures > 0) return kExitAcquisition;
    return kExitOk;
}

int cmd_pipeline(const RunConfig& c, std::ostream& out) {
    if (c.traces.empty()) throw UsageError("pipeline needs a corpus (--traces)");
    auto bundles = load_corpus(c.traces, c.window_s);
    auto result = run_pipeline(c, std::move(bundles));
    write_pipeline_outputs(result, c, c.out);
    const auto& sel = result.selection;
    out << "features: " << sel.cf.size() << " candidates, " << sel.idf.size() << " independent, "
        << sel.sef.size() << " selected\n";
    char line[160];
    for (const auto& row : result.evaluation.rows) {
        std::snprintf(line, sizeof line, "%-3s %-3s accuracy=%.4f f1=%.4f roc_auc=%s\n", row.model.c_str(),
                      row.feature_set.c_str(), row.metrics.accuracy, row.metrics.f1_weighted,
                      row.metrics.roc_auc ? std::to_string(*row.metrics.roc_auc).c_str() : "n/a");
        out << line;
    }
    out << "artifacts in " << c.out.string() << "\n";
    return kExitOk;
}

int cmd_scan(const RunConfig& c, const std::vector<std::string>& bundles, std::ostream& out) {
    if (c.model.empty()) throw UsageError("scan needs a detector (--model)");
    if (bundles.empty()) throw UsageError("scan needs at least one bundle path");
    std::ifstream in(c.model);
    if (!in) throw UsageError("cannot read model " + c.model.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file: ") + e.what());
    }
    Detector detector = Detector::from_json(j);
    if (!c.catalog.empty() && PatternCatalog::load(c.catalog).to_json() != detector.catalog.to_json())
        throw ModelMismatch("pattern catalog differs from the one the detector was trained with");
    for (const auto& path : bundles) {
        auto start = std::chrono::steady_clock::now();
        auto bundle = load_bundle(path, c.window_s);
        auto verdict = scan_bundle(detector, bundle);
        verdict.elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        out << verdict.to_json().dump() << "\n";
    }
    return kExitOk;
}

int cmd_similar(const RunConfig& c, const std::string& query, const std::string& index_path,
                const std::string& csv_path, std::ostream& out) {
    auto index = read_similarity_index(index_path);
    if (index.empty()) throw UsageError("similarity index is empty");
    auto hits = find_counterparts({query, ""}, index, c.similarity);
    auto csv = counterparts_csv(query, hits);
    if (csv_path.empty()) {
        out << csv;
    } else {
        std::ofstream f(csv_path);
        if (!f) throw UsageError("cannot write " + csv_path);
        f << csv;
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"instrace: install-time trace analysis for Python packages"};
    app.require_subcommand(1);
    CommonFlags common;

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    std::size_t n_benign = 500, n_malicious = 500;
    double noise = 0.2;
    synth->add_option("--benign", n_benign, "benign bundles")->capture_default_str();
    synth->add_option("--malicious", n_malicious, "malicious bundles")->capture_default_str();
    synth->add_option("--noise", noise, "noise level in [0, 1]")->capture_default_str();

    auto* acquire = app.add_subcommand("acquire", "capture install-time traces for a package list");
    std::string packages, targets, fixtures;
    acquire->add_option("--packages", packages, "CSV of name,version,archive[,label]");
    acquire->add_option("--targets", targets, "CSV of id,transport[,credentials]");
    acquire->add_option("--fixtures", fixtures, "replay fixture root");

    auto* pipeline = app.add_subcommand("pipeline", "clean, extract, select, train and evaluate");

    auto* scan = app.add_subcommand("scan", "score bundles with a trained detector");
    std::vector<std::string> scan_paths;
    scan->add_option("bundles", scan_paths, "bundle JSON files or trace directories");

    auto* similar = app.add_subcommand("similar", "rank counterpart candidates for a package name");
    std::string query, index_path, csv_path;
    similar->add_option("query", query, "package name")->required();
    similar->add_option("--index", index_path, "one name per line, optional TAB and metadata")->required();
    similar->add_option("--csv", csv_path, "write the CSV here instead of stdout");

    for (auto* sub : {synth, acquire, pipeline, scan, similar}) common.add(*sub);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        RunConfig c = common.resolve(*active);
        if (active == synth) return cmd_synth(c, n_benign, n_malicious, noise, out);
        if (active == acquire) {
            if (!packages.empty()) c.packages = packages;
            if (!targets.empty()) c.targets = targets;
            if (!fixtures.empty()) c.replay_root = fixtures;
            return cmd_acquire(c, out, err);
        }
        if (active == pipeline) return cmd_pipeline(c, out);
        if (active == scan) return cmd_scan(c, scan_paths, out);
        return cmd_similar(c, query, index_path, csv_path, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ModelMismatch& e) {
        err << "model mismatch: " << e.what() << "\n";
        return kExitModelMismatch;
    } catch (const DegenerateData& e) {
        err << "degenerate data: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const InsufficientClass& e) {
        err << "degenerate data: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const SingleClass& e) {
        err << "degenerate data: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const EmptyInput& e) {
        err << "degenerate data: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const TargetUnreachable& e) {
        err << "acquisition: " << e.what() << "\n";
        return kExitAcquisition;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace instrace
