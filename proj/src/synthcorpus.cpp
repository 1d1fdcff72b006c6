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

#include "instrace/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "instrace/errors.hpp"
#include "instrace/features.hpp"
#include "instrace/parallel.hpp"
#include "instrace/rng.hpp"

namespace instrace {

namespace {

// Observed install outcome counts per class, in kAllBehaviorClasses order.
constexpr std::array<double, 15> kMaliciousOutcomes = {6184, 288, 161, 231, 73, 121, 10, 7,
                                                       23,   2,   19,  4,   1,  3,   0};
constexpr std::array<double, 15> kBenignOutcomes = {6352, 232, 0, 321, 149, 53, 0, 0,
                                                    0,    0,   0, 0,   0,   0,  37};

// Filler never contains fcntl, execve, fork, bind, listen, accept, setres*,
// ptrace or encrypt, and never fails an fstat, so it cannot complete any
// malicious-only template.
const std::vector<std::string> kFiller = {
    "read",   "write",      "openat",   "close",     "newfstatat",   "fstat",
    "mmap",   "munmap",     "mprotect", "brk",       "futex",        "clock_gettime",
    "getpid", "rt_sigaction", "lseek",  "getdents64", "pread64",     "getrandom",
};

const std::vector<std::string> kPypiHosts = {"151.101.0.223", "151.101.64.223", "151.101.128.223",
                                             "151.101.192.223"};

struct Stream {
    std::vector<SyscallEvent> events;  // timestamps assigned at the end
};

void append_filler(Stream& s, Rng& rng, std::size_t count, double noise) {
    for (std::size_t i = 0; i < count; ++i) {
        SyscallEvent e;
        e.name = kFiller[rng.below(kFiller.size())];
        if ((e.name == "openat" || e.name == "newfstatat") && rng.chance(0.05 + 0.2 * noise))
            e.errno_name = "ENOENT";
        if (e.name == "close" && rng.chance(0.5)) e.fd_note = "fd=" + std::to_string(3 + rng.below(20));
        s.events.push_back(std::move(e));
    }
}

void append_template(Stream& s, const PatternEntry& entry) {
    for (const auto& token : entry.sequence) s.events.push_back(token.instantiate(0));
}

void append_named(Stream& s, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        SyscallEvent e;
        e.name = n;
        s.events.push_back(std::move(e));
    }
}

std::string derived_name(Label label, std::uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(seed & 0xffffffffULL));
    return std::string(label == Label::malicious ? "synth-m-" : "synth-b-") + buf;
}

std::int64_t draw_duration(BehaviorClass c, Rng& rng) {
    switch (c) {
        case BehaviorClass::system_freezing:
        case BehaviorClass::infinite_waiting:
        case BehaviorClass::version_looping:
            return kDefaultCaptureWindowS * 1000LL;
        case BehaviorClass::successfully_installed:
            return rng.between(3000, 60000);
        default:
            return rng.between(800, 20000);
    }
}

}  // namespace

std::vector<std::string> malicious_signatures() {
    std::vector<std::string> out;
    for (const auto& e : PatternCatalog::builtin().entries())
        if (e.malicious_indicator) out.push_back(e.id);
    out.emplace_back(kMotifPort6667);
    out.emplace_back(kMotifRootSsh);
    return out;
}

std::vector<std::string> benign_motifs() {
    std::vector<std::string> out;
    for (const auto& e : PatternCatalog::builtin().entries())
        if (!e.malicious_indicator) out.push_back(e.id);
    return out;
}

bool is_malicious_only(std::string_view signature) {
    auto all = malicious_signatures();
    return std::find(all.begin(), all.end(), signature) != all.end();
}

bool is_known_signature(std::string_view signature) {
    return signature == kMotifPort6667 || signature == kMotifRootSsh ||
           PatternCatalog::builtin().find(signature) != nullptr;
}

std::vector<std::string> SynthProfile::validate() const {
    std::vector<std::string> out;
    if (label == Label::unknown) out.push_back("label must be benign or malicious");
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) out.push_back("noise_level outside [0, 1]");
    if (!(base_event_rate > 0.0) || !std::isfinite(base_event_rate))
        out.push_back("base_event_rate must be positive");
    for (const auto& sig : injected_signatures) {
        if (!is_known_signature(sig)) out.push_back("unknown signature " + sig);
        else if (label == Label::benign && is_malicious_only(sig))
            out.push_back("benign profile requests malicious signature " + sig);
    }
    return out;
}

TraceBundle synth_bundle(const SynthProfile& profile) {
    auto problems = profile.validate();
    if (!problems.empty()) throw InvalidProfile(problems.front());

    const auto& catalog = PatternCatalog::builtin();
    const double noise = profile.noise_level;
    const bool malicious = profile.label == Label::malicious;
    Rng rng(profile.seed);

    TraceBundle b;
    b.package.name = profile.name.empty() ? derived_name(profile.label, profile.seed) : profile.name;
    b.package.version = "0." + std::to_string(rng.between(1, 9)) + "." + std::to_string(rng.between(0, 20));
    b.package.archive_kind = rng.chance(0.8) ? ArchiveKind::tar_gz : ArchiveKind::zip;
    b.package.label = profile.label;

    const auto& weights = malicious ? kMaliciousOutcomes : kBenignOutcomes;
    BehaviorClass outcome = kAllBehaviorClasses[rng.weighted({weights.begin(), weights.end()})];
    b.outcome = InstallOutcome::of(outcome, draw_duration(outcome, rng));
    b.direct_deps = rng.between(0, 6);
    b.indirect_deps = rng.between(0, 3 * b.direct_deps);

    // Syscall stream: shuffled motif chunks separated by filler runs.
    std::vector<const PatternEntry*> chunks;
    auto add_entry = [&](std::string_view id, long long times) {
        const PatternEntry* e = catalog.find(id);
        for (long long i = 0; i < times; ++i) chunks.push_back(e);
    };
    add_entry("p2_read_read_read_stat", rng.between(1, 4));
    for (const auto& id : benign_motifs())
        if (id != "p2_read_read_read_stat" && rng.chance(0.6)) add_entry(id, rng.between(1, 3));
    bool port_motif = false, ssh_motif = false;
    for (const auto& sig : profile.injected_signatures) {
        if (sig == kMotifPort6667) port_motif = true;
        else if (sig == kMotifRootSsh) ssh_motif = true;
        else add_entry(sig, rng.between(1, 3));
    }
    rng.shuffle(chunks);

    double seconds = std::min<double>(static_cast<double>(b.outcome.duration_ms) / 1000.0, 30.0);
    auto filler_total = static_cast<std::size_t>(std::lround(profile.base_event_rate * seconds * (0.25 + noise)));
    Stream stream;
    std::size_t gaps = chunks.size() + 1;
    for (std::size_t c = 0; c <= chunks.size(); ++c) {
        append_filler(stream, rng, filler_total / gaps + (c < filler_total % gaps ? 1 : 0), noise);
        if (c < chunks.size()) append_template(stream, *chunks[c]);
    }
    if (port_motif) append_named(stream, {"socket", "connect", "sendto"});
    if (ssh_motif) append_named(stream, {"openat", "read", "close"});

    const std::int64_t span_ms = std::max<std::int64_t>(b.outcome.duration_ms, 1);
    const std::size_t n = stream.events.size();
    for (std::size_t i = 0; i < n; ++i)
        stream.events[i].timestamp_ms = static_cast<std::int64_t>(i) * span_ms / static_cast<std::int64_t>(std::max<std::size_t>(n, 1));
    b.syscalls = std::move(stream.events);

    // File activity.
    std::string site = "/usr/lib/python3.10/site-packages/" + normalize_package_name(b.package.name);
    std::string build = "/tmp/pip-install-" + std::to_string(rng.below(100000)) + "/" + b.package.name;
    std::vector<std::string> paths = {site + "/__init__.py", site + "/core.py", build + "/setup.py",
                                      build + "/PKG-INFO", "/usr/lib/python3.10/os.py",
                                      "/home/user/.cache/pip/http/" + std::to_string(rng.below(1000))};
    auto at = [&](std::size_t k, std::size_t of) {
        return static_cast<std::int64_t>(k) * span_ms / static_cast<std::int64_t>(std::max<std::size_t>(of, 1));
    };
    std::size_t opens = 5 + rng.below(20);
    for (std::size_t k = 0; k < opens; ++k) {
        OpenRecord o;
        o.timestamp_ms = at(k, opens);
        o.process = rng.chance(0.7) ? "pip" : "python3";
        o.path = paths[rng.below(paths.size())];
        o.fd = 3 + static_cast<std::int64_t>(rng.below(30));
        b.opens.push_back(std::move(o));
    }
    if (rng.chance(noise)) {
        OpenRecord o;
        o.timestamp_ms = at(opens / 2, opens);
        o.process = "python3";
        o.fd = -1;
        o.errno_name = "ENOENT";
        o.path = site + "/_speedups.so";
        b.opens.push_back(std::move(o));
    }
    if (ssh_motif) {
        for (const char* p : {"/root", "/root/.ssh", "/root/.ssh/id_rsa"}) {
            OpenRecord o;
            o.timestamp_ms = span_ms / 2;
            o.process = "python3";
            o.fd = 3 + static_cast<std::int64_t>(rng.below(30));
            o.path = p;
            b.opens.push_back(std::move(o));
        }
    }
    std::stable_sort(b.opens.begin(), b.opens.end(),
                     [](const auto& l, const auto& r) { return l.timestamp_ms < r.timestamp_ms; });

    std::size_t files = 2 + rng.below(6);
    for (std::size_t k = 0; k < files; ++k) {
        FiletopRecord f;
        f.timestamp_ms = at(k, files);
        f.process = k % 2 ? "python3" : "pip";
        f.file_path = paths[k % paths.size()];
        f.reads = rng.between(1, 200);
        f.writes = rng.between(0, 50);
        f.read_kb = std::round(rng.uniform(0.5, 512.0) * 10) / 10;
        f.write_kb = std::round(rng.uniform(0.0, 128.0) * 10) / 10;
        b.filetop.push_back(std::move(f));
    }
    if (ssh_motif) {
        FiletopRecord f;
        f.timestamp_ms = span_ms / 2;
        f.process = "python3";
        f.file_path = "/root/.ssh/id_rsa";
        f.reads = 1;
        f.read_kb = 3.2;
        b.filetop.push_back(std::move(f));
    }

    // Network activity: index downloads over 443, odd ports as noise.
    if (rng.chance(0.8)) {
        std::size_t conns = 1 + rng.below(3);
        for (std::size_t k = 0; k < conns; ++k) {
            TcpRecord t;
            t.timestamp_ms = at(k, conns);
            t.process = "pip";
            t.remote_ip = kPypiHosts[rng.below(kPypiHosts.size())];
            t.remote_port = 443;
            t.state = TcpState::established;
            b.tcp.push_back(std::move(t));
        }
    }
    if (rng.chance(noise / 2)) {
        TcpRecord t;
        t.timestamp_ms = span_ms / 3;
        t.process = "python3";
        t.remote_ip = "10.0." + std::to_string(rng.below(256)) + "." + std::to_string(1 + rng.below(254));
        t.remote_port = 8000 + static_cast<std::int64_t>(rng.below(1000));
        t.state = rng.chance(0.5) ? TcpState::failed : TcpState::established;
        b.tcp.push_back(std::move(t));
    }
    if (port_motif) {
        TcpRecord t;
        t.timestamp_ms = span_ms - 1;
        t.process = "python3";
        t.remote_ip = std::to_string(45 + rng.below(150)) + "." + std::to_string(rng.below(256)) + "." +
                      std::to_string(rng.below(256)) + "." + std::to_string(1 + rng.below(254));
        t.remote_port = 6667;
        t.state = TcpState::attempted;
        b.tcp.push_back(std::move(t));
    }
    std::stable_sort(b.tcp.begin(), b.tcp.end(),
                     [](const auto& l, const auto& r) { return l.timestamp_ms < r.timestamp_ms; });
    return b;
}

SynthCorpus synth_corpus(std::size_t n_benign, std::size_t n_malicious, std::uint64_t seed,
                         double noise_level, unsigned workers) {
    if (n_benign == 0 || n_malicious == 0) throw std::invalid_argument("corpus counts must be at least 1");
    SynthCorpus out;
    const std::size_t total = n_benign + n_malicious;
    auto pool = malicious_signatures();
    const std::string probe = "p10_stat_open_enoent";
    pool.erase(std::remove(pool.begin(), pool.end(), probe), pool.end());

    for (std::size_t i = 0; i < total; ++i) {
        SynthProfile p;
        p.seed = derive_seed(seed, i);
        p.noise_level = noise_level;
        p.label = i < n_benign ? Label::benign : Label::malicious;
        p.name = (p.label == Label::benign ? "synth-b-" : "synth-m-") + std::to_string(i < n_benign ? i : i - n_benign);
        if (p.label == Label::malicious) {
            Rng pick(derive_seed(p.seed, 1));
            auto shuffled = pool;
            pick.shuffle(shuffled);
            std::size_t k = 1 + pick.below(3);
            p.injected_signatures.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
            if (!pick.chance(noise_level / 2)) p.injected_signatures.insert(p.injected_signatures.begin(), probe);
        }
        out.profiles.push_back(std::move(p));
    }
    out.bundles.resize(total);
    parallel_for(total, resolve_workers(workers),
                 [&](std::size_t i) { out.bundles[i] = synth_bundle(out.profiles[i]); });

    std::map<std::string, std::size_t> freq_b, freq_m;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& p : out.profiles) {
        auto& freq = p.label == Label::malicious ? freq_m : freq_b;
        std::set<std::string> seen(p.injected_signatures.begin(), p.injected_signatures.end());
        for (const auto& s : seen) ++freq[s];
        items.push_back({{"name", p.name},
                         {"label", to_string(p.label)},
                         {"seed", p.seed},
                         {"signatures", p.injected_signatures}});
    }
    auto table = [](const std::map<std::string, std::size_t>& f, std::size_t n) {
        nlohmann::json t = nlohmann::json::object();
        for (const auto& sig : malicious_signatures())
            t[sig] = static_cast<double>(f.count(sig) ? f.at(sig) : 0) / static_cast<double>(n);
        return t;
    };
    out.metadata = {{"format", "instrace-synth/1"},
                    {"seed", seed},
                    {"noise_level", noise_level},
                    {"n_benign", n_benign},
                    {"n_malicious", n_malicious},
                    {"signature_frequency", {{"benign", table(freq_b, n_benign)},
                                             {"malicious", table(freq_m, n_malicious)}}},
                    {"bundles", items}};
    return out;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "bundles");
    for (const auto& b : corpus.bundles) {
        std::ofstream out(dir / "bundles" / (b.package.name + ".json"));
        if (!out) throw std::runtime_error("cannot write bundle " + b.package.name);
        out << to_json(b).dump() << '\n';
    }
    std::ofstream meta(dir / "corpus.json");
    if (!meta) throw std::runtime_error("cannot write corpus.json");
    meta << corpus.metadata.dump(2) << '\n';
}

}  // namespace instrace
