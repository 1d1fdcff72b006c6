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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "instrace/rng.hpp"
#include "instrace/trace_model.hpp"

namespace instrace {

enum class Transport { local_process, remote_shell, replay_fixture };

std::string_view to_string(Transport t);
std::optional<Transport> transport_from_string(std::string_view s);

struct ExecutorTarget {
    std::string id;
    Transport transport = Transport::replay_fixture;
    std::string credentials;  // identity file for remote_shell, "" otherwise

    std::vector<std::string> validate() const;
};

/// zip or tar_gz from an archive file name; nullopt for anything else.
std::optional<ArchiveKind> archive_kind_from_filename(std::string_view file);

struct CampaignPackage {
    PackageRef ref;
    std::string archive;  // archive file name; empty means ref.archive_kind
};

// Capture seen from the executor side.
struct CaptureRequest {
    PackageRef package;
    ExecutorTarget target;
    int window_s = kDefaultCaptureWindowS;
    std::filesystem::path workdir;  // fresh and empty
    int attempt = 1;
};

struct CaptureResult {
    std::map<LogKind, std::string> logs;  // absent key: log never produced
    std::int64_t install_ms = 0;
    double capture_s = 0;    // time tracing was active
    bool corrupted = false;  // environment broke; worth one retry
};

/// Implementations must tolerate concurrent calls for distinct targets.
class Executor {
public:
    virtual ~Executor() = default;
    /// Throws TargetUnreachable on transport failure.
    virtual CaptureResult capture(const CaptureRequest& request) = 0;
};

/// Serves canned logs from `<root>/<name>/<name><suffix>`. An optional
/// `<root>/<name>/replay.json` may set `corrupt_attempts`,
/// `unreachable_attempts` (the first N attempts fail that way) and
/// `install_ms`. Tracing is simulated as running exactly the window.
class ReplayExecutor : public Executor {
public:
    explicit ReplayExecutor(std::filesystem::path root) : root_(std::move(root)) {}
    CaptureResult capture(const CaptureRequest& request) override;

private:
    std::filesystem::path root_;
};

/// Shell commands run inside the session workdir. Placeholders: {name},
/// {version}, {window}, {workdir}. Each tracer writes its log to stdout and
/// is stopped when the window closes; the install is killed at the window.
struct LocalCommands {
    std::string install;
    std::map<LogKind, std::string> tracers;  // kinds other than install
};

/// Runs the tracers and the install on this machine (Linux, eBPF tooling
/// installed, usually root). Capture time is measured wall time.
class LocalProcessExecutor : public Executor {
public:
    explicit LocalProcessExecutor(LocalCommands commands) : commands_(std::move(commands)) {}
    CaptureResult capture(const CaptureRequest& request) override;

    /// The POSIX shell script one session runs.
    std::string session_script(const CaptureRequest& request, const std::string& workdir) const;

private:
    LocalCommands commands_;
};

/// Same session script, run on `target.id` over ssh with
/// `-i target.credentials`. Exit status 255 from the ssh program, or a
/// missing credential, raises TargetUnreachable.
class RemoteShellExecutor : public Executor {
public:
    explicit RemoteShellExecutor(LocalCommands commands, std::string ssh_program = "ssh",
                                 std::string remote_root = "/tmp/instrace")
        : local_(std::move(commands)), ssh_(std::move(ssh_program)), remote_root_(std::move(remote_root)) {}
    CaptureResult capture(const CaptureRequest& request) override;

private:
    LocalProcessExecutor local_;
    std::string ssh_;
    std::string remote_root_;
};

/// Routes each request by its target's transport.
class DispatchExecutor : public Executor {
public:
    void route(Transport t, Executor* executor) { routes_[t] = executor; }
    CaptureResult capture(const CaptureRequest& request) override;

private:
    std::map<Transport, Executor*> routes_;
};

enum class SessionStatus { pending, success, failed };
std::string_view to_string(SessionStatus s);

struct CaptureSession {
    PackageRef package;
    ExecutorTarget target;
    int window_s = kDefaultCaptureWindowS;
    std::map<LogKind, std::filesystem::path> log_paths;
    std::filesystem::path err_log;  // set when status is failed
    SessionStatus status = SessionStatus::pending;
    int attempts = 0;
    double capture_s = 0;
    std::string workdir;
    std::string failure;  // "", "install", "corrupted", "incomplete", "unreachable"
    std::optional<TraceBundle> bundle;

    /// Failures an environment rebuild may fix.
    bool retryable() const {
        return status == SessionStatus::failed && failure != "install" && attempts < 2;
    }
};

struct ManifestRow {
    std::string name;
    std::string version;
    std::string status;
    std::string target;
};

/// Append-only; one row per attempted package. Safe to append from several
/// threads.
class CampaignManifest {
public:
    static constexpr std::string_view kHeader = "name,version,status,target";

    CampaignManifest() = default;
    CampaignManifest(const CampaignManifest& other) : rows_(other.rows()) {}
    CampaignManifest& operator=(const CampaignManifest& other) {
        auto copy = other.rows();
        std::lock_guard lock(mutex_);
        rows_ = std::move(copy);
        return *this;
    }

    void append(ManifestRow row);
    std::vector<ManifestRow> rows() const;
    std::string to_csv() const;

private:
    mutable std::mutex mutex_;
    std::vector<ManifestRow> rows_;
};

inline constexpr double kWindowGraceS = 2.0;

struct CampaignOptions {
    std::filesystem::path traces_dir = "Traces";
    std::filesystem::path work_root = std::filesystem::temp_directory_path() / "instrace-work";
    int window_s = kDefaultCaptureWindowS;
    std::uint64_t seed = 42;
    bool retry = true;
};

struct CampaignResult {
    std::vector<TraceBundle> bundles;     // accepted packages with complete logs, input order
    std::vector<CaptureSession> sessions;  // one per accepted package, input order
    CampaignManifest manifest;
    std::vector<std::string> skipped;  // rejected archive kinds
    bool complete() const;             // every accepted package has a manifest row
};

/// Uniform draw from `targets`.
const ExecutorTarget& target_select(const std::vector<ExecutorTarget>& targets, Rng& rng);

/// Assigns packages to targets with a seeded draw, runs sessions on
/// different targets in parallel (one at a time per target), retries
/// retryable failures once in a fresh workdir, then writes
/// `<traces_dir>/data.csv`. Throws std::invalid_argument for empty input or
/// invalid targets.
CampaignResult run_campaign(const std::vector<CampaignPackage>& packages,
                            const std::vector<ExecutorTarget>& targets, Executor& executor,
                            const CampaignOptions& options = {});

/// Re-runs every retryable session once, reselecting its target.
void retrace_failed(std::vector<CaptureSession>& sessions, const std::vector<ExecutorTarget>& targets,
                    Executor& executor, const CampaignOptions& options);

/// Writes a bundle as a replay fixture with an install transcript that
/// classifies back to the bundle's outcome.
void write_replay_fixture(const TraceBundle& bundle, const std::filesystem::path& root);

}  // namespace instrace
