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

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fixtures.hpp"
#include "instrace/pipeline.hpp"
#include "instrace/synthcorpus.hpp"

using namespace instrace;
using instrace::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// One shared trained pipeline keeps the suite fast.
struct Trained {
    TempDir dir{"cli"};
    fs::path corpus = dir.path() / "corpus";
    fs::path out = dir.path() / "out";
    Trained() {
        REQUIRE(cli({"synth", "--out", corpus.string(), "--benign", "80", "--malicious", "80", "--seed", "3"}).code == 0);
        auto r = cli({"pipeline", "--traces", corpus.string(), "--out", out.string(), "--seed", "3"});
        REQUIRE(r.code == 0);
    }
};

Trained& trained() {
    static Trained t;
    return t;
}

}  // namespace

TEST_CASE("usage errors exit 1 and help exits 0") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"pipeline", "--seed", "not-a-number", "--traces", "x"}).code == kExitUsage);
    CHECK(cli({"pipeline"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("configuration defaults and overrides") {
    RunConfig c;
    CHECK(c.thresholds.r_max == 0.50);
    CHECK(c.thresholds.ims_low == 0.05);
    CHECK(c.thresholds.ims_high == 0.08);
    CHECK(c.window_s == 120);
    CHECK(c.cv_folds == 5);

    TempDir tmp("cfg");
    auto path = tmp.path() / "run.conf";
    write_file(path, "# comment\nseed = 7\nims_high=0.1\n  r_max = 0.4  \nlocal.install = pip install {name}\n");
    auto loaded = RunConfig::load(path);
    CHECK(loaded.seed == 7);
    CHECK(loaded.thresholds.ims_high == 0.1);
    CHECK(loaded.thresholds.r_max == 0.4);
    CHECK(loaded.local.install == "pip install {name}");

    write_file(path, "seed = 7\ncolour = blue\n");
    CHECK_THROWS_AS(RunConfig::load(path), std::invalid_argument);
    write_file(path, "r_max = 1.5\n");
    CHECK_THROWS_AS(RunConfig::load(path), std::invalid_argument);
    write_file(path, "window = 0\n");
    CHECK_THROWS_AS(RunConfig::load(path), std::invalid_argument);
    CHECK(cli({"pipeline", "--config", path.string(), "--traces", "x"}).code == kExitUsage);
}

TEST_CASE("flags override the configuration file") {
    auto& t = trained();
    TempDir tmp("cfg2");
    auto conf = tmp.path() / "run.conf";
    write_file(conf, "seed = 3\nout = " + (tmp.path() / "from-config").string() + "\ncv_folds = 0\n");
    auto r = cli({"pipeline", "--config", conf.string(), "--traces", t.corpus.string(), "--out",
                  (tmp.path() / "from-flag").string()});
    CHECK(r.code == 0);
    CHECK(fs::exists(tmp.path() / "from-flag" / "evaluation.json"));
    CHECK_FALSE(fs::exists(tmp.path() / "from-config"));
    auto cv = nlohmann::json::parse(slurp(tmp.path() / "from-flag" / "cv.json"));
    CHECK(cv["models"].empty());
}

TEST_CASE("pipeline writes every artifact and reruns byte-identically") {
    auto& t = trained();
    for (const char* f : {"cleaning_report.json", "features.csv", "split.json", "selection_report.json", "sef.txt",
                          "model_rf.json", "model_dt.json", "model_svm.json", "model_gb.json", "model.json",
                          "evaluation.json", "evaluation.csv", "confusion_rf.csv", "cv.json", "timing.json"})
        CHECK_MESSAGE(fs::exists(t.out / f), f);

    std::map<std::string, std::string> before;
    for (const auto& e : fs::directory_iterator(t.out)) before[e.path().filename().string()] = slurp(e.path());
    REQUIRE(cli({"pipeline", "--traces", t.corpus.string(), "--out", t.out.string(), "--seed", "3", "--workers", "3"}).code == 0);
    for (const auto& [name, text] : before)
        if (name != "timing.json") CHECK_MESSAGE(slurp(t.out / name) == text, name);

    auto eval = nlohmann::json::parse(slurp(t.out / "evaluation.json"));
    CHECK(eval["evaluations"].size() == 8);
    auto split = nlohmann::json::parse(slurp(t.out / "split.json"));
    CHECK(split["test"].size() == 24);
}

TEST_CASE("single-class corpora exit 3") {
    TempDir tmp("mono");
    auto c = synth_corpus(20, 1, 5);
    c.bundles.pop_back();
    c.metadata = nlohmann::json::object();
    write_corpus(c, tmp.path() / "corpus");
    auto r = cli({"pipeline", "--traces", (tmp.path() / "corpus").string(), "--out", (tmp.path() / "out").string()});
    CHECK(r.code == kExitDegenerate);
    CHECK(r.err.find("single class") != std::string::npos);
}

TEST_CASE("scan labels synthetic bundles within the latency budget") {
    auto& t = trained();
    auto model = (t.out / "model.json").string();
    auto mal = (t.corpus / "bundles" / "synth-m-1.json").string();
    auto ben = (t.corpus / "bundles" / "synth-b-1.json").string();
    auto r = cli({"scan", "--model", model, mal, ben});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string l1, l2;
    std::getline(lines, l1);
    std::getline(lines, l2);
    auto v1 = nlohmann::json::parse(l1), v2 = nlohmann::json::parse(l2);
    CHECK(v1["package"] == "synth-m-1");
    CHECK(v1["class"] == "malicious");
    CHECK(v2["class"] == "benign");
    CHECK(v1["top_features"].size() == 3);
    CHECK(v1["elapsed_ms"].get<double>() < 500.0);
    CHECK(v1["score"].get<double>() > 0.5);
}

TEST_CASE("scan rejects incompatible detectors with exit 4") {
    auto& t = trained();
    TempDir tmp("mismatch");
    auto j = nlohmann::json::parse(slurp(t.out / "model.json"));
    auto bundle = (t.corpus / "bundles" / "synth-m-1.json").string();

    auto renamed = j;
    renamed["candidates"][0] = "something_else";
    write_file(tmp.path() / "a.json", renamed.dump());
    CHECK(cli({"scan", "--model", (tmp.path() / "a.json").string(), bundle}).code == kExitModelMismatch);

    auto foreign = j;
    foreign["model"]["feature_order"][0] = "not_a_feature";
    write_file(tmp.path() / "b.json", foreign.dump());
    CHECK(cli({"scan", "--model", (tmp.path() / "b.json").string(), bundle}).code == kExitModelMismatch);

    auto catalog = PatternCatalog::builtin().to_json();
    catalog.erase(catalog.begin());
    write_file(tmp.path() / "catalog.json", catalog.dump());
    CHECK(cli({"scan", "--model", (t.out / "model.json").string(), "--catalog",
               (tmp.path() / "catalog.json").string(), bundle})
              .code == kExitModelMismatch);

    write_file(tmp.path() / "c.json", "{\"format\": \"other\"}");
    CHECK(cli({"scan", "--model", (tmp.path() / "c.json").string(), bundle}).code == kExitUsage);
    CHECK(cli({"scan", bundle}).code == kExitUsage);
}

TEST_CASE("acquire with replay fixtures") {
    TempDir tmp("acquire");
    auto fixtures = tmp.path() / "fixtures";
    std::string list = "name,version,archive,label\n";
    for (int i = 0; i < 3; ++i) {
        SynthProfile p;
        p.seed = static_cast<std::uint64_t>(i);
        p.name = "fx" + std::to_string(i);
        p.label = i == 2 ? Label::malicious : Label::benign;
        auto b = synth_bundle(p);
        write_replay_fixture(b, fixtures);
        list += p.name + ",1.0," + p.name + "-1.0.tar.gz," + std::string(to_string(p.label)) + "\n";
    }
    write_file(tmp.path() / "packages.csv", list);
    auto traces = tmp.path() / "Traces";
    auto r = cli({"acquire", "--packages", (tmp.path() / "packages.csv").string(), "--fixtures", fixtures.string(),
                  "--traces", traces.string()});
    CHECK(r.code == 0);
    for (int i = 0; i < 3; ++i) CHECK(fs::is_directory(traces / ("fx" + std::to_string(i))));
    CHECK(slurp(traces / "data.csv").rfind("name,version,status,target\n", 0) == 0);

    auto corpus = load_corpus(traces);
    REQUIRE(corpus.size() == 3);
    CHECK(corpus[2].package.label == Label::malicious);
    CHECK(corpus[0].package.label == Label::benign);

    write_file(tmp.path() / "empty.csv", "name,version,archive\n");
    CHECK(cli({"acquire", "--packages", (tmp.path() / "empty.csv").string(), "--fixtures", fixtures.string(),
               "--traces", traces.string()})
              .code == kExitUsage);

    // A remote target whose ssh always fails.
    auto dead = tmp.path() / "dead-ssh";
    write_file(dead, "#!/bin/sh\nexit 255\n");
    fs::permissions(dead, fs::perms::owner_all);
    write_file(tmp.path() / "targets.csv", "id,transport,credentials\nuser@box,remote_shell,/k\n");
    write_file(tmp.path() / "acq.conf", "ssh_program = " + dead.string() + "\nwork_root = " +
                                            (tmp.path() / "work").string() + "\n");
    auto traces2 = tmp.path() / "Traces2";
    auto bad = cli({"acquire", "--config", (tmp.path() / "acq.conf").string(), "--packages",
                    (tmp.path() / "packages.csv").string(), "--targets", (tmp.path() / "targets.csv").string(),
                    "--traces", traces2.string()});
    CHECK(bad.code == kExitAcquisition);
    auto manifest = slurp(traces2 / "data.csv");
    CHECK(manifest.find("fx0,1.0,failed,user@box") != std::string::npos);
    CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 4);
}

TEST_CASE("similar ranks counterparts") {
    TempDir tmp("similar");
    auto index = tmp.path() / "index.txt";
    write_file(index, "# popular packages\nrequests\tHTTP for humans\nnumpy\nflask\n");
    auto r = cli({"similar", "requests3", "--index", index.string()});
    CHECK(r.code == 0);
    CHECK(r.out.rfind("query,candidate,method,score\nrequests3,requests,levenshtein,0.888889\n", 0) == 0);

    auto exact = cli({"similar", "numpy", "--index", index.string()});
    CHECK(exact.out.find("numpy,numpy,") != std::string::npos);
    CHECK(exact.out.find(",1.000000\n") != std::string::npos);

    auto none = cli({"similar", "zzzzzz", "--index", index.string()});
    CHECK(none.code == 0);
    CHECK(none.out == "query,candidate,method,score\n");

    write_file(tmp.path() / "empty.txt", "# nothing\n");
    CHECK(cli({"similar", "requests", "--index", (tmp.path() / "empty.txt").string()}).code == kExitUsage);

    auto csv = tmp.path() / "hits.csv";
    CHECK(cli({"similar", "requests3", "--index", index.string(), "--csv", csv.string()}).code == 0);
    CHECK(slurp(csv).find("requests3,requests") != std::string::npos);
}
