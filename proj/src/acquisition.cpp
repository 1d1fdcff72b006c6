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

#include "instrace/acquisition.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "instrace/errors.hpp"
#include "instrace/parallel.hpp"
#include "instrace/trace_parsers.hpp"

namespace instrace {

namespace fs = std::filesystem;

namespace {

constexpr LogKind kTracerKinds[] = {LogKind::filetop, LogKind::opensnoop, LogKind::tcpconnect,
                                    LogKind::syscall};

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, std::string_view text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

std::string shell_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

std::string substitute(std::string text, const CaptureRequest& r, const std::string& workdir) {
    const std::pair<std::string, std::string> subs[] = {{"{name}", r.package.name},
                                                        {"{version}", r.package.version},
                                                        {"{window}", std::to_string(r.window_s)},
                                                        {"{workdir}", workdir}};
    for (const auto& [key, value] : subs)
        for (std::size_t pos; (pos = text.find(key)) != std::string::npos;) text.replace(pos, key.size(), value);
    return text;
}

int exit_code(int status) {
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

std::string safe_component(std::string_view s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
    return out.empty() ? "_" : out;
}

// Collects whatever files a script left in `dir`.
CaptureResult collect(const fs::path& dir, const std::string& name) {
    CaptureResult r;
    for (LogKind k : kAllLogKinds) {
        auto p = log_path(dir, name, k);
        if (fs::exists(p)) r.logs[k] = read_text(p);
    }
    if (fs::exists(dir / ".install_ms")) {
        try {
            r.install_ms = std::stoll(read_text(dir / ".install_ms"));
        } catch (...) {
        }
    }
    return r;
}

fs::path session_workdir(const CampaignOptions& o, const ExecutorTarget& t, const PackageRef& p, int attempt) {
    std::string leaf = "venv-" + normalize_package_name(p.name);
    if (attempt > 1) leaf += "-" + std::to_string(attempt);
    return o.work_root / safe_component(t.id) / leaf;
}

void run_session(CaptureSession& s, Executor& executor, const CampaignOptions& o) {
    s.attempts += 1;
    s.status = SessionStatus::pending;
    s.failure.clear();
    s.bundle.reset();
    s.log_paths.clear();
    s.err_log.clear();
    s.window_s = o.window_s;

    fs::path workdir = session_workdir(o, s.target, s.package, s.attempts);
    s.workdir = workdir.string();
    fs::remove_all(workdir);
    fs::create_directories(workdir);

    CaptureResult result;
    std::string reason;
    try {
        result = executor.capture({s.package, s.target, o.window_s, workdir, s.attempts});
    } catch (const TargetUnreachable& e) {
        s.failure = "unreachable";
        reason = e.what();
    }
    fs::remove_all(workdir);

    fs::path dir = o.traces_dir / s.package.name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& [kind, text] : result.logs) {
        auto p = log_path(dir, s.package.name, kind);
        write_text(p, text);
        s.log_paths[kind] = p;
    }
    s.capture_s = result.capture_s;

    if (s.failure.empty() && result.corrupted) {
        s.failure = "corrupted";
        reason = "environment reported corrupted";
    }
    if (s.failure.empty() && s.log_paths.size() != kAllLogKinds.size()) {
        s.failure = "incomplete";
        for (LogKind k : kAllLogKinds)
            if (!s.log_paths.count(k)) reason += (reason.empty() ? "missing " : ", ") + std::string(to_string(k));
    }
    if (s.failure.empty()) {
        try {
            TraceBundle b = load_trace_directory(dir, s.package, o.window_s, result.install_ms);
            if (!b.outcome.success) {
                s.failure = "install";
                reason = "install finished as " + std::string(to_string(b.outcome.behavior_class));
            }
            s.bundle = std::move(b);
        } catch (const FormatError& e) {
            s.failure = "corrupted";
            reason = e.what();
        }
    }

    s.status = s.failure.empty() ? SessionStatus::success : SessionStatus::failed;
    if (s.status == SessionStatus::failed) {
        s.err_log = dir / (s.package.name + "_err.log");
        std::string body = "attempt " + std::to_string(s.attempts) + " on " + s.target.id + ": " + s.failure +
                           (reason.empty() ? "" : " (" + reason + ")") + "\n";
        if (result.logs.count(LogKind::install)) body += result.logs.at(LogKind::install);
        write_text(s.err_log, body);
    }
}

}  // namespace

std::string_view to_string(Transport t) {
    switch (t) {
        case Transport::local_process: return "local_process";
        case Transport::remote_shell: return "remote_shell";
        case Transport::replay_fixture: return "replay_fixture";
    }
    return "replay_fixture";
}

std::optional<Transport> transport_from_string(std::string_view s) {
    for (auto t : {Transport::local_process, Transport::remote_shell, Transport::replay_fixture})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

std::string_view to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::pending: return "pending";
        case SessionStatus::success: return "success";
        case SessionStatus::failed: return "failed";
    }
    return "pending";
}

std::vector<std::string> ExecutorTarget::validate() const {
    std::vector<std::string> out;
    if (id.empty()) out.push_back("target id is empty");
    if (transport == Transport::remote_shell && credentials.empty())
        out.push_back("remote_shell target " + id + " needs credentials");
    return out;
}

std::optional<ArchiveKind> archive_kind_from_filename(std::string_view file) {
    auto ends = [&](std::string_view suffix) {
        if (file.size() < suffix.size()) return false;
        auto tail = file.substr(file.size() - suffix.size());
        return std::equal(tail.begin(), tail.end(), suffix.begin(),
                          [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
    };
    if (ends(".zip")) return ArchiveKind::zip;
    if (ends(".tar.gz") || ends(".tgz")) return ArchiveKind::tar_gz;
    return std::nullopt;
}

CaptureResult ReplayExecutor::capture(const CaptureRequest& request) {
    fs::path dir = root_ / request.package.name;
    if (!fs::is_directory(dir)) throw TargetUnreachable("no replay fixture for " + request.package.name);
    nlohmann::json script = nlohmann::json::object();
    if (fs::exists(dir / "replay.json")) script = nlohmann::json::parse(read_text(dir / "replay.json"));
    if (request.attempt <= script.value("unreachable_attempts", 0))
        throw TargetUnreachable("replay: " + request.target.id + " unreachable");
    CaptureResult r = collect(dir, request.package.name);
    r.install_ms = script.value("install_ms", std::int64_t{0});
    r.capture_s = request.window_s;
    r.corrupted = request.attempt <= script.value("corrupt_attempts", 0);
    return r;
}

std::string LocalProcessExecutor::session_script(const CaptureRequest& r, const std::string& workdir) const {
    const std::string w = std::to_string(r.window_s);
    std::ostringstream s;
    s << "cd " << shell_quote(workdir) << " || exit 97\n";
    // The sleeper holds the window open even if every tracer exits early.
    s << "sleep " << w << " &\n";
    for (LogKind k : kTracerKinds) {
        auto it = commands_.tracers.find(k);
        if (it == commands_.tracers.end() || it->second.empty()) continue;
        s << "timeout " << w << " sh -c " << shell_quote(substitute(it->second, r, workdir)) << " > "
          << shell_quote((fs::path(workdir) / (r.package.name + std::string(log_suffix(k)))).string())
          << " 2>/dev/null &\n";
    }
    if (!commands_.install.empty()) {
        s << "start=$(date +%s%N)\n";
        s << "timeout " << w << " sh -c " << shell_quote(substitute(commands_.install, r, workdir)) << " > "
          << shell_quote((fs::path(workdir) / (r.package.name + "_inst.log")).string()) << " 2>&1\n";
        s << "echo $(( ($(date +%s%N) - start) / 1000000 )) > .install_ms\n";
    }
    s << "wait\n";
    return s.str();
}

CaptureResult LocalProcessExecutor::capture(const CaptureRequest& request) {
    const std::string workdir = request.workdir.string();
    fs::path script = request.workdir / ".session.sh";
    write_text(script, session_script(request, workdir));
    auto start = std::chrono::steady_clock::now();
    int rc = exit_code(std::system(("sh " + shell_quote(script.string())).c_str()));
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CaptureResult r = collect(request.workdir, request.package.name);
    r.capture_s = elapsed;
    r.corrupted = rc == 97;
    return r;
}

CaptureResult RemoteShellExecutor::capture(const CaptureRequest& request) {
    if (request.target.credentials.empty())
        throw TargetUnreachable("remote target " + request.target.id + " has no credentials");
    const std::string remote = remote_root_ + "/" + request.workdir.filename().string();
    const std::string ssh = ssh_ + " -i " + shell_quote(request.target.credentials) + " " +
                            shell_quote(request.target.id) + " ";
    auto run = [&](const std::string& remote_cmd, const std::string& redirect) {
        int rc = exit_code(std::system((ssh + shell_quote(remote_cmd) + redirect).c_str()));
        if (rc == 255 || rc == -1) throw TargetUnreachable("ssh to " + request.target.id + " failed");
        return rc;
    };
    fs::path script = request.workdir / ".session.sh";
    write_text(script, local_.session_script(request, remote));
    auto start = std::chrono::steady_clock::now();
    run("rm -rf " + shell_quote(remote) + " && mkdir -p " + shell_quote(remote), "");
    int rc = run("sh -s", " < " + shell_quote(script.string()));
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<std::string> files;
    for (LogKind k : kAllLogKinds) files.push_back(request.package.name + std::string(log_suffix(k)));
    files.push_back(".install_ms");
    for (const auto& f : files) {
        auto local = request.workdir / f;
        if (run("cat " + shell_quote(remote + "/" + f), " > " + shell_quote(local.string()) + " 2>/dev/null") != 0)
            fs::remove(local);
    }
    run("rm -rf " + shell_quote(remote), "");
    CaptureResult r = collect(request.workdir, request.package.name);
    r.capture_s = elapsed;
    r.corrupted = rc == 97;
    return r;
}

CaptureResult DispatchExecutor::capture(const CaptureRequest& request) {
    auto it = routes_.find(request.target.transport);
    if (it == routes_.end() || it->second == nullptr)
        throw TargetUnreachable("no executor for transport " + std::string(to_string(request.target.transport)));
    return it->second->capture(request);
}

void CampaignManifest::append(ManifestRow row) {
    std::lock_guard lock(mutex_);
    rows_.push_back(std::move(row));
}

std::vector<ManifestRow> CampaignManifest::rows() const {
    std::lock_guard lock(mutex_);
    return rows_;
}

std::string CampaignManifest::to_csv() const {
    auto field = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    };
    std::string out = std::string(kHeader) + "\n";
    for (const auto& r : rows())
        out += field(r.name) + "," + field(r.version) + "," + field(r.status) + "," + field(r.target) + "\n";
    return out;
}

bool CampaignResult::complete() const { return manifest.rows().size() == sessions.size(); }

const ExecutorTarget& target_select(const std::vector<ExecutorTarget>& targets, Rng& rng) {
    if (targets.empty()) throw std::invalid_argument("no targets");
    return targets[rng.below(targets.size())];
}

void retrace_failed(std::vector<CaptureSession>& sessions, const std::vector<ExecutorTarget>& targets,
                    Executor& executor, const CampaignOptions& options) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < sessions.size(); ++i)
        if (sessions[i].retryable()) todo.push_back(i);
    Rng rng(derive_seed(options.seed, 1));
    for (auto i : todo) sessions[i].target = target_select(targets, rng);

    // Group by target so each target runs one session at a time.
    std::map<std::string, std::vector<std::size_t>> by_target;
    for (auto i : todo) by_target[sessions[i].target.id].push_back(i);
    std::vector<std::vector<std::size_t>> groups;
    for (auto& [id, g] : by_target) groups.push_back(std::move(g));
    parallel_for(groups.size(), static_cast<unsigned>(groups.size()), [&](std::size_t g) {
        for (auto i : groups[g]) run_session(sessions[i], executor, options);
    });
}

CampaignResult run_campaign(const std::vector<CampaignPackage>& packages,
                            const std::vector<ExecutorTarget>& targets, Executor& executor,
                            const CampaignOptions& options) {
    if (packages.empty()) throw std::invalid_argument("campaign needs at least one package");
    if (targets.empty()) throw std::invalid_argument("campaign needs at least one target");
    for (const auto& t : targets) {
        auto problems = t.validate();
        if (!problems.empty()) throw std::invalid_argument(problems.front());
    }

    CampaignResult result;
    Rng rng(options.seed);
    for (const auto& p : packages) {
        PackageRef ref = p.ref;
        if (!p.archive.empty()) {
            auto kind = archive_kind_from_filename(p.archive);
            if (!kind) {
                result.skipped.push_back(p.ref.name);
                continue;
            }
            ref.archive_kind = *kind;
        }
        CaptureSession s;
        s.package = ref;
        s.target = target_select(targets, rng);
        s.window_s = options.window_s;
        result.sessions.push_back(std::move(s));
    }

    fs::create_directories(options.traces_dir);
    std::map<std::string, std::vector<std::size_t>> by_target;
    for (std::size_t i = 0; i < result.sessions.size(); ++i) by_target[result.sessions[i].target.id].push_back(i);
    std::vector<std::vector<std::size_t>> groups;
    for (auto& [id, g] : by_target) groups.push_back(std::move(g));
    parallel_for(groups.size(), static_cast<unsigned>(groups.size()), [&](std::size_t g) {
        for (auto i : groups[g]) run_session(result.sessions[i], executor, options);
    });
    if (options.retry) retrace_failed(result.sessions, targets, executor, options);

    // Rows are appended once a package's final status is known.
    for (auto& s : result.sessions) {
        result.manifest.append({s.package.name, s.package.version, std::string(to_string(s.status)), s.target.id});
        if (s.bundle) result.bundles.push_back(*s.bundle);
    }
    write_text(options.traces_dir / "data.csv", result.manifest.to_csv());
    return result;
}

void write_replay_fixture(const TraceBundle& bundle, const fs::path& root) {
    const std::string& name = bundle.package.name;
    fs::path dir = root / name;
    fs::create_directories(dir);
    write_text(log_path(dir, name, LogKind::filetop), format_filetop(bundle.filetop));
    write_text(log_path(dir, name, LogKind::opensnoop), format_opensnoop(bundle.opens));
    write_text(log_path(dir, name, LogKind::tcpconnect), format_tcpconnect(bundle.tcp));
    write_text(log_path(dir, name, LogKind::syscall), format_syscalls(bundle.syscalls));

    std::string install = "Processing ./" + name + "-" + bundle.package.version + "\n";
    for (std::int64_t d = 0; d < bundle.direct_deps; ++d)
        install += "Collecting dep" + std::to_string(d) + " (from " + name + ")\n";
    for (std::int64_t d = 0; d < bundle.indirect_deps; ++d)
        install += "Collecting sub" + std::to_string(d) + " (from dep0)\n";
    if (bundle.outcome.behavior_class == BehaviorClass::successfully_installed) {
        install += "Successfully installed " + name + "-" + bundle.package.version + "\n";
    } else {
        for (const auto& rule : install_phrase_rules())
            if (rule.behavior == bundle.outcome.behavior_class) {
                install += "ERROR: " + std::string(rule.phrase) + "\n";
                break;
            }
    }
    write_text(log_path(dir, name, LogKind::install), install);
    write_text(dir / "replay.json", nlohmann::json{{"install_ms", bundle.outcome.duration_ms}}.dump() + "\n");
}

}  // namespace instrace
