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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace instrace {

enum class ArchiveKind { zip, tar_gz };
enum class Label { malicious, benign, unknown };

enum class BehaviorGroup { normal, compatibility, system };

// Install-time outcomes observed while installing packages in isolation.
enum class BehaviorClass {
    successfully_installed,
    no_metadata,
    missing_setup_files,
    failed_build_wheels,
    mismatch_distribution,
    requires_different_version,
    missing_package_version,
    unexpected_auth_request,
    missing_install_module,
    unicode_file_naming,
    system_freezing,
    infinite_waiting,
    system_shutdown,
    version_looping,
    system_prerequisites_required,
};

inline constexpr std::array<BehaviorClass, 15> kAllBehaviorClasses = {
    BehaviorClass::successfully_installed,     BehaviorClass::no_metadata,
    BehaviorClass::missing_setup_files,        BehaviorClass::failed_build_wheels,
    BehaviorClass::mismatch_distribution,      BehaviorClass::requires_different_version,
    BehaviorClass::missing_package_version,    BehaviorClass::unexpected_auth_request,
    BehaviorClass::missing_install_module,     BehaviorClass::unicode_file_naming,
    BehaviorClass::system_freezing,            BehaviorClass::infinite_waiting,
    BehaviorClass::system_shutdown,            BehaviorClass::version_looping,
    BehaviorClass::system_prerequisites_required,
};

BehaviorGroup group_of(BehaviorClass c);

enum class TcpState { attempted, established, failed };

enum class LogKind { filetop, opensnoop, tcpconnect, syscall, install };

inline constexpr std::array<LogKind, 5> kAllLogKinds = {
    LogKind::filetop, LogKind::opensnoop, LogKind::tcpconnect, LogKind::syscall,
    LogKind::install};

std::string_view to_string(ArchiveKind v);
std::string_view to_string(Label v);
std::string_view to_string(BehaviorGroup v);
std::string_view to_string(BehaviorClass v);
std::string_view to_string(TcpState v);
std::string_view to_string(LogKind v);

std::optional<ArchiveKind> archive_kind_from_string(std::string_view s);
std::optional<Label> label_from_string(std::string_view s);
std::optional<BehaviorGroup> behavior_group_from_string(std::string_view s);
std::optional<BehaviorClass> behavior_class_from_string(std::string_view s);
std::optional<TcpState> tcp_state_from_string(std::string_view s);
std::optional<LogKind> log_kind_from_string(std::string_view s);

/// File suffix used for each log in a trace directory, e.g. "_opens.log".
std::string_view log_suffix(LogKind kind);

struct PackageRef {
    std::string name;
    std::string version;
    ArchiveKind archive_kind = ArchiveKind::tar_gz;
    Label label = Label::unknown;

    bool operator==(const PackageRef&) const = default;
};

struct InstallOutcome {
    BehaviorClass behavior_class = BehaviorClass::no_metadata;
    BehaviorGroup behavior_group = BehaviorGroup::normal;
    bool success = false;
    std::int64_t duration_ms = 0;

    /// Builds a consistent outcome: group and success follow from the class.
    static InstallOutcome of(BehaviorClass c, std::int64_t duration_ms = 0);

    bool operator==(const InstallOutcome&) const = default;
};

struct FiletopRecord {
    std::int64_t timestamp_ms = 0;
    std::string process;
    std::int64_t reads = 0;
    std::int64_t writes = 0;
    double read_kb = 0;
    double write_kb = 0;
    std::string file_path;

    bool operator==(const FiletopRecord&) const = default;
};

struct OpenRecord {
    std::int64_t timestamp_ms = 0;
    std::string process;
    std::int64_t fd = 0;  // -1 on failure
    std::string errno_name;
    std::string path;

    bool operator==(const OpenRecord&) const = default;
};

struct TcpRecord {
    std::int64_t timestamp_ms = 0;
    std::string process;
    std::string remote_ip;
    std::int64_t remote_port = 0;
    TcpState state = TcpState::attempted;

    bool operator==(const TcpRecord&) const = default;
};

struct SyscallEvent {
    std::int64_t timestamp_ms = 0;
    std::string name;
    std::string errno_name;  // "" on success
    std::string fd_note;     // "", "no-fd" or "fd=<n>"

    bool operator==(const SyscallEvent&) const = default;
};

inline constexpr int kDefaultCaptureWindowS = 120;

struct TraceBundle {
    PackageRef package;
    InstallOutcome outcome;
    std::vector<FiletopRecord> filetop;
    std::vector<OpenRecord> opens;
    std::vector<TcpRecord> tcp;
    std::vector<SyscallEvent> syscalls;
    std::int64_t direct_deps = 0;
    std::int64_t indirect_deps = 0;
    int capture_window_s = kDefaultCaptureWindowS;
    // Logs that were never captured (as opposed to captured but empty).
    // Serialized by omitting the corresponding JSON key.
    std::vector<LogKind> missing_logs;

    bool operator==(const TraceBundle&) const = default;
};

/// Checks every type invariant. Returns one "<field> <rule>" string per
/// violation; an empty result means the bundle is well formed.
std::vector<std::string> validate_bundle(const TraceBundle& bundle);

/// Registry-style normalization: lowercase, runs of '-', '_' and '.' become
/// a single '-'. "reverse_shell" and "Reverse.Shell" both map to
/// "reverse-shell".
std::string normalize_package_name(std::string_view name);

bool is_valid_ip_literal(std::string_view s);
bool is_valid_syscall_name(std::string_view s);
bool is_valid_fd_note(std::string_view s);

/// Stable-sorts syscalls by timestamp and drops every record stamped after
/// the capture window.
void trim_to_window(TraceBundle& bundle);

/// FNV-1a digest over the trace content, ignoring the package identity.
std::uint64_t trace_digest(const TraceBundle& bundle);

// Canonical JSON interchange.
nlohmann::json to_json(const TraceBundle& bundle);
TraceBundle bundle_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PackageRef& p);
PackageRef package_from_json(const nlohmann::json& j);

}  // namespace instrace
