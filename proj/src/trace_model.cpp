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

#include "instrace/trace_model.hpp"

#include <algorithm>
#include <arpa/inet.h>
#include <cctype>
#include <cmath>
#include <limits>

namespace instrace {
namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view s) {
    for (const auto& [value, name] : table) {
        if (name == s) return value;
    }
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
    for (const auto& [value, name] : table) {
        if (value == v) return name;
    }
    return "?";
}

constexpr std::array<std::pair<ArchiveKind, std::string_view>, 2> kArchiveNames{{
    {ArchiveKind::zip, "zip"},
    {ArchiveKind::tar_gz, "tar_gz"},
}};

constexpr std::array<std::pair<Label, std::string_view>, 3> kLabelNames{{
    {Label::malicious, "malicious"},
    {Label::benign, "benign"},
    {Label::unknown, "unknown"},
}};

constexpr std::array<std::pair<BehaviorGroup, std::string_view>, 3> kGroupNames{{
    {BehaviorGroup::normal, "normal"},
    {BehaviorGroup::compatibility, "compatibility"},
    {BehaviorGroup::system, "system"},
}};

constexpr std::array<std::pair<BehaviorClass, std::string_view>, 15> kClassNames{{
    {BehaviorClass::successfully_installed, "successfully_installed"},
    {BehaviorClass::no_metadata, "no_metadata"},
    {BehaviorClass::missing_setup_files, "missing_setup_files"},
    {BehaviorClass::failed_build_wheels, "failed_build_wheels"},
    {BehaviorClass::mismatch_distribution, "mismatch_distribution"},
    {BehaviorClass::requires_different_version, "requires_different_version"},
    {BehaviorClass::missing_package_version, "missing_package_version"},
    {BehaviorClass::unexpected_auth_request, "unexpected_auth_request"},
    {BehaviorClass::missing_install_module, "missing_install_module"},
    {BehaviorClass::unicode_file_naming, "unicode_file_naming"},
    {BehaviorClass::system_freezing, "system_freezing"},
    {BehaviorClass::infinite_waiting, "infinite_waiting"},
    {BehaviorClass::system_shutdown, "system_shutdown"},
    {BehaviorClass::version_looping, "version_looping"},
    {BehaviorClass::system_prerequisites_required, "system_prerequisites_required"},
}};

constexpr std::array<std::pair<TcpState, std::string_view>, 3> kTcpStateNames{{
    {TcpState::attempted, "attempted"},
    {TcpState::established, "established"},
    {TcpState::failed, "failed"},
}};

constexpr std::array<std::pair<LogKind, std::string_view>, 5> kLogKindNames{{
    {LogKind::filetop, "filetop"},
    {LogKind::opensnoop, "opensnoop"},
    {LogKind::tcpconnect, "tcpconnect"},
    {LogKind::syscall, "syscall"},
    {LogKind::install, "install"},
}};

std::string idx(std::string_view field, std::size_t i) {
    return std::string(field) + "[" + std::to_string(i) + "]";
}

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0; }

template <typename T>
T required(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing key: ") + key);
    return j.at(key).get<T>();
}

double json_double(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

template <typename E>
E parse_enum(std::optional<E> v, std::string_view what, const std::string& raw) {
    if (!v) throw std::invalid_argument(std::string(what) + ": unknown value '" + raw + "'");
    return *v;
}

}  // namespace

BehaviorGroup group_of(BehaviorClass c) {
    switch (c) {
        case BehaviorClass::successfully_installed:
        case BehaviorClass::no_metadata:
        case BehaviorClass::missing_setup_files:
        case BehaviorClass::failed_build_wheels:
            return BehaviorGroup::normal;
        case BehaviorClass::mismatch_distribution:
        case BehaviorClass::requires_different_version:
        case BehaviorClass::missing_package_version:
        case BehaviorClass::unexpected_auth_request:
        case BehaviorClass::missing_install_module:
        case BehaviorClass::unicode_file_naming:
            return BehaviorGroup::compatibility;
        case BehaviorClass::system_freezing:
        case BehaviorClass::infinite_waiting:
        case BehaviorClass::system_shutdown:
        case BehaviorClass::version_looping:
        case BehaviorClass::system_prerequisites_required:
            return BehaviorGroup::system;
    }
    return BehaviorGroup::normal;
}

std::string_view to_string(ArchiveKind v) { return name_of(kArchiveNames, v); }
std::string_view to_string(Label v) { return name_of(kLabelNames, v); }
std::string_view to_string(BehaviorGroup v) { return name_of(kGroupNames, v); }
std::string_view to_string(BehaviorClass v) { return name_of(kClassNames, v); }
std::string_view to_string(TcpState v) { return name_of(kTcpStateNames, v); }
std::string_view to_string(LogKind v) { return name_of(kLogKindNames, v); }

std::optional<ArchiveKind> archive_kind_from_string(std::string_view s) {
    return lookup(kArchiveNames, s);
}
std::optional<Label> label_from_string(std::string_view s) { return lookup(kLabelNames, s); }
std::optional<BehaviorGroup> behavior_group_from_string(std::string_view s) {
    return lookup(kGroupNames, s);
}
std::optional<BehaviorClass> behavior_class_from_string(std::string_view s) {
    return lookup(kClassNames, s);
}
std::optional<TcpState> tcp_state_from_string(std::string_view s) {
    return lookup(kTcpStateNames, s);
}
std::optional<LogKind> log_kind_from_string(std::string_view s) {
    return lookup(kLogKindNames, s);
}

std::string_view log_suffix(LogKind kind) {
    switch (kind) {
        case LogKind::filetop: return "_filetop.log";
        case LogKind::opensnoop: return "_opens.log";
        case LogKind::tcpconnect: return "_tcps.log";
        case LogKind::syscall: return "_syscall.log";
        case LogKind::install: return "_inst.log";
    }
    return ".log";
}

InstallOutcome InstallOutcome::of(BehaviorClass c, std::int64_t duration_ms) {
    InstallOutcome o;
    o.behavior_class = c;
    o.behavior_group = group_of(c);
    o.success = c == BehaviorClass::successfully_installed;
    o.duration_ms = duration_ms;
    return o;
}

std::string normalize_package_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    bool in_sep = false;
    for (char c : name) {
        if (c == '-' || c == '_' || c == '.') {
            if (!in_sep) out.push_back('-');
            in_sep = true;
        } else {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            in_sep = false;
        }
    }
    return out;
}

bool is_valid_ip_literal(std::string_view s) {
    std::string tmp(s);
    unsigned char buf[sizeof(struct in6_addr)];
    return inet_pton(AF_INET, tmp.c_str(), buf) == 1 || inet_pton(AF_INET6, tmp.c_str(), buf) == 1;
}

bool is_valid_syscall_name(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

bool is_valid_fd_note(std::string_view s) {
    if (s.empty() || s == "no-fd") return true;
    if (s.size() < 4 || s.substr(0, 3) != "fd=") return false;
    auto digits = s.substr(3);
    if (digits.front() == '-') digits.remove_prefix(1);
    return !digits.empty() &&
           std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::vector<std::string> validate_bundle(const TraceBundle& b) {
    std::vector<std::string> v;
    if (b.package.name.empty()) v.emplace_back("package.name empty");

    const auto& o = b.outcome;
    if (o.behavior_group != group_of(o.behavior_class))
        v.emplace_back("outcome.behavior_group does not contain behavior_class");
    if (o.success != (o.behavior_class == BehaviorClass::successfully_installed))
        v.emplace_back("outcome.success inconsistent with behavior_class");
    if (o.duration_ms < 0) v.emplace_back("outcome.duration_ms negative");

    for (std::size_t i = 0; i < b.filetop.size(); ++i) {
        const auto& r = b.filetop[i];
        if (r.reads < 0) v.push_back(idx("filetop", i) + ".reads negative");
        if (r.writes < 0) v.push_back(idx("filetop", i) + ".writes negative");
        if (!finite_non_negative(r.read_kb)) v.push_back(idx("filetop", i) + ".read_kb not finite and non-negative");
        if (!finite_non_negative(r.write_kb)) v.push_back(idx("filetop", i) + ".write_kb not finite and non-negative");
    }
    for (std::size_t i = 0; i < b.opens.size(); ++i) {
        const auto& r = b.opens[i];
        if (r.fd < -1) v.push_back(idx("opens", i) + ".fd below -1");
        if ((r.fd == -1) != !r.errno_name.empty())
            v.push_back(idx("opens", i) + ".fd must be -1 exactly when errno_name is set");
    }
    for (std::size_t i = 0; i < b.tcp.size(); ++i) {
        const auto& r = b.tcp[i];
        if (r.remote_port < 0 || r.remote_port > 65535)
            v.push_back(idx("tcp", i) + ".remote_port out of range");
        if (!is_valid_ip_literal(r.remote_ip))
            v.push_back(idx("tcp", i) + ".remote_ip not an IP literal");
    }
    for (std::size_t i = 0; i < b.syscalls.size(); ++i) {
        const auto& e = b.syscalls[i];
        if (!is_valid_syscall_name(e.name)) v.push_back(idx("syscalls", i) + ".name not [a-z0-9_]+");
        if (!is_valid_fd_note(e.fd_note)) v.push_back(idx("syscalls", i) + ".fd_note malformed");
        if (i > 0 && e.timestamp_ms < b.syscalls[i - 1].timestamp_ms)
            v.push_back(idx("syscalls", i) + ".timestamp_ms out of order");
    }
    if (b.direct_deps < 0) v.emplace_back("deps.direct negative");
    if (b.indirect_deps < 0) v.emplace_back("deps.indirect negative");
    if (b.capture_window_s <= 0) v.emplace_back("capture_window_s not positive");
    return v;
}

void trim_to_window(TraceBundle& b) {
    const std::int64_t limit = static_cast<std::int64_t>(b.capture_window_s) * 1000;
    auto outside = [limit](const auto& r) { return r.timestamp_ms > limit; };
    std::erase_if(b.filetop, outside);
    std::erase_if(b.opens, outside);
    std::erase_if(b.tcp, outside);
    std::erase_if(b.syscalls, outside);
    std::stable_sort(b.syscalls.begin(), b.syscalls.end(),
                     [](const SyscallEvent& a, const SyscallEvent& c) {
                         return a.timestamp_ms < c.timestamp_ms;
                     });
}

nlohmann::json to_json(const PackageRef& p) {
    return {{"name", p.name},
            {"version", p.version},
            {"archive_kind", to_string(p.archive_kind)},
            {"label", to_string(p.label)}};
}

PackageRef package_from_json(const nlohmann::json& j) {
    PackageRef p;
    p.name = required<std::string>(j, "name");
    p.version = j.value("version", std::string{});
    auto ak = j.value("archive_kind", std::string("tar_gz"));
    p.archive_kind = parse_enum(archive_kind_from_string(ak), "archive_kind", ak);
    auto lb = j.value("label", std::string("unknown"));
    p.label = parse_enum(label_from_string(lb), "label", lb);
    return p;
}

namespace {

bool is_missing(const TraceBundle& b, LogKind k) {
    return std::find(b.missing_logs.begin(), b.missing_logs.end(), k) != b.missing_logs.end();
}

nlohmann::json content_json(const TraceBundle& b) {
    using nlohmann::json;
    json j;
    if (!is_missing(b, LogKind::install)) {
        j["outcome"] = {{"behavior_class", to_string(b.outcome.behavior_class)},
                        {"behavior_group", to_string(b.outcome.behavior_group)},
                        {"success", b.outcome.success},
                        {"duration_ms", b.outcome.duration_ms}};
    }
    if (!is_missing(b, LogKind::filetop)) {
        json arr = json::array();
        for (const auto& r : b.filetop) {
            arr.push_back({{"timestamp_ms", r.timestamp_ms}, {"process", r.process},
                           {"reads", r.reads}, {"writes", r.writes}, {"read_kb", r.read_kb},
                           {"write_kb", r.write_kb}, {"file_path", r.file_path}});
        }
        j["filetop"] = std::move(arr);
    }
    if (!is_missing(b, LogKind::opensnoop)) {
        json arr = json::array();
        for (const auto& r : b.opens) {
            arr.push_back({{"timestamp_ms", r.timestamp_ms}, {"process", r.process},
                           {"fd", r.fd}, {"errno_name", r.errno_name}, {"path", r.path}});
        }
        j["opens"] = std::move(arr);
    }
    if (!is_missing(b, LogKind::tcpconnect)) {
        json arr = json::array();
        for (const auto& r : b.tcp) {
            arr.push_back({{"timestamp_ms", r.timestamp_ms}, {"process", r.process},
                           {"remote_ip", r.remote_ip}, {"remote_port", r.remote_port},
                           {"state", to_string(r.state)}});
        }
        j["tcp"] = std::move(arr);
    }
    if (!is_missing(b, LogKind::syscall)) {
        json arr = json::array();
        for (const auto& e : b.syscalls) {
            arr.push_back({{"timestamp_ms", e.timestamp_ms}, {"name", e.name},
                           {"errno_name", e.errno_name}, {"fd_note", e.fd_note}});
        }
        j["syscalls"] = std::move(arr);
    }
    j["deps"] = {{"direct", b.direct_deps}, {"indirect", b.indirect_deps}};
    j["capture_window_s"] = b.capture_window_s;
    return j;
}

}  // namespace

std::uint64_t trace_digest(const TraceBundle& b) {
    const std::string text = content_json(b).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

nlohmann::json to_json(const TraceBundle& b) {
    auto j = content_json(b);
    j["package"] = to_json(b.package);
    return j;
}

TraceBundle bundle_from_json(const nlohmann::json& j) {
    TraceBundle b;
    b.package = package_from_json(required<nlohmann::json>(j, "package"));

    if (j.contains("outcome")) {
        const auto& o = j.at("outcome");
        auto cls = required<std::string>(o, "behavior_class");
        b.outcome.behavior_class = parse_enum(behavior_class_from_string(cls), "behavior_class", cls);
        auto grp = o.value("behavior_group", std::string(to_string(group_of(b.outcome.behavior_class))));
        b.outcome.behavior_group = parse_enum(behavior_group_from_string(grp), "behavior_group", grp);
        b.outcome.success = o.value("success", false);
        b.outcome.duration_ms = o.value("duration_ms", std::int64_t{0});
    } else {
        b.missing_logs.push_back(LogKind::install);
    }

    if (j.contains("filetop")) {
        for (const auto& r : j.at("filetop")) {
            FiletopRecord f;
            f.timestamp_ms = required<std::int64_t>(r, "timestamp_ms");
            f.process = r.value("process", std::string{});
            f.reads = r.value("reads", std::int64_t{0});
            f.writes = r.value("writes", std::int64_t{0});
            f.read_kb = r.contains("read_kb") ? json_double(r.at("read_kb")) : 0.0;
            f.write_kb = r.contains("write_kb") ? json_double(r.at("write_kb")) : 0.0;
            f.file_path = r.value("file_path", std::string{});
            b.filetop.push_back(std::move(f));
        }
    } else {
        b.missing_logs.push_back(LogKind::filetop);
    }

    if (j.contains("opens")) {
        for (const auto& r : j.at("opens")) {
            OpenRecord o;
            o.timestamp_ms = required<std::int64_t>(r, "timestamp_ms");
            o.process = r.value("process", std::string{});
            o.fd = r.value("fd", std::int64_t{0});
            o.errno_name = r.value("errno_name", std::string{});
            o.path = r.value("path", std::string{});
            b.opens.push_back(std::move(o));
        }
    } else {
        b.missing_logs.push_back(LogKind::opensnoop);
    }

    if (j.contains("tcp")) {
        for (const auto& r : j.at("tcp")) {
            TcpRecord t;
            t.timestamp_ms = required<std::int64_t>(r, "timestamp_ms");
            t.process = r.value("process", std::string{});
            t.remote_ip = r.value("remote_ip", std::string{});
            t.remote_port = r.value("remote_port", std::int64_t{0});
            auto st = r.value("state", std::string("attempted"));
            t.state = parse_enum(tcp_state_from_string(st), "tcp state", st);
            b.tcp.push_back(std::move(t));
        }
    } else {
        b.missing_logs.push_back(LogKind::tcpconnect);
    }

    if (j.contains("syscalls")) {
        for (const auto& r : j.at("syscalls")) {
            SyscallEvent e;
            e.timestamp_ms = required<std::int64_t>(r, "timestamp_ms");
            e.name = required<std::string>(r, "name");
            e.errno_name = r.value("errno_name", std::string{});
            e.fd_note = r.value("fd_note", std::string{});
            b.syscalls.push_back(std::move(e));
        }
    } else {
        b.missing_logs.push_back(LogKind::syscall);
    }

    if (j.contains("deps")) {
        b.direct_deps = j.at("deps").value("direct", std::int64_t{0});
        b.indirect_deps = j.at("deps").value("indirect", std::int64_t{0});
    }
    b.capture_window_s = j.value("capture_window_s", kDefaultCaptureWindowS);
    // Keep a canonical order so equality survives a round trip.
    std::sort(b.missing_logs.begin(), b.missing_logs.end());
    return b;
}

}  // namespace instrace
