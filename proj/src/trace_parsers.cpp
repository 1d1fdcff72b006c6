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

#include "instrace/trace_parsers.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "instrace/errors.hpp"

namespace instrace {
namespace {

constexpr std::string_view kSpaces = " \t";

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Splits off the next whitespace-delimited token; `rest` keeps the remainder.
std::optional<std::string_view> next_token(std::string_view& rest) {
    auto b = rest.find_first_not_of(kSpaces);
    if (b == std::string_view::npos) {
        rest = {};
        return std::nullopt;
    }
    rest.remove_prefix(b);
    auto e = rest.find_first_of(kSpaces);
    auto tok = rest.substr(0, e);
    rest = e == std::string_view::npos ? std::string_view{} : rest.substr(e);
    return tok;
}

std::optional<std::int64_t> to_int(std::string_view s) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<double> to_double(std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

bool is_errno_token(std::string_view s) {
    if (s.size() < 2 || s.front() != 'E') return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    });
}

struct LineError {
    std::string reason;
};

// Runs `parse_line` over every data line, collecting failures, and enforces
// the majority-malformed rule.
template <typename Record, typename F>
ParseResult<Record> parse_lines(std::string_view text, std::string_view what, F parse_line) {
    ParseResult<Record> out;
    std::size_t data_lines = 0;
    std::size_t line_no = 0;
    while (!text.empty() || line_no == 0) {
        auto nl = text.find('\n');
        std::string_view raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') {
            if (text.empty()) break;
            continue;
        }
        ++data_lines;
        Record rec;
        if (auto err = parse_line(line, rec)) {
            out.malformed.push_back({line_no, std::string(raw), err->reason});
        } else {
            out.records.push_back(std::move(rec));
        }
        if (text.empty()) break;
    }
    if (data_lines > 0 && out.malformed.size() * 2 > data_lines) {
        throw FormatError(std::string(what) + ": " + std::to_string(out.malformed.size()) + " of " +
                          std::to_string(data_lines) + " data lines malformed");
    }
    return out;
}

std::optional<LineError> parse_filetop_line(std::string_view line, FiletopRecord& r) {
    std::string_view rest = line;
    auto ts = next_token(rest);
    auto proc = next_token(rest);
    auto reads = next_token(rest);
    auto writes = next_token(rest);
    auto rkb = next_token(rest);
    auto wkb = next_token(rest);
    auto path = trim(rest);
    if (!wkb || path.empty()) return LineError{"expected 7 columns"};
    auto t = to_int(*ts);
    auto rd = to_int(*reads);
    auto wr = to_int(*writes);
    auto rk = to_double(*rkb);
    auto wk = to_double(*wkb);
    if (!t) return LineError{"bad timestamp"};
    if (!rd || *rd < 0 || !wr || *wr < 0) return LineError{"bad read/write count"};
    if (!rk || !std::isfinite(*rk) || *rk < 0 || !wk || !std::isfinite(*wk) || *wk < 0)
        return LineError{"bad kb value"};
    r = {*t, std::string(*proc), *rd, *wr, *rk, *wk, std::string(path)};
    return std::nullopt;
}

std::optional<LineError> parse_open_line(std::string_view line, OpenRecord& r) {
    std::string_view rest = line;
    auto ts = next_token(rest);
    auto proc = next_token(rest);
    auto fd = next_token(rest);
    if (!fd) return LineError{"expected at least 4 columns"};
    auto t = to_int(*ts);
    auto f = to_int(*fd);
    if (!t) return LineError{"bad timestamp"};
    if (!f || *f < -1) return LineError{"bad fd"};

    std::string errno_name;
    std::string_view after = rest;
    auto maybe_errno = next_token(after);
    if (maybe_errno && (*maybe_errno == "-" || is_errno_token(*maybe_errno)) && !trim(after).empty()) {
        if (*maybe_errno != "-") errno_name = std::string(*maybe_errno);
        rest = after;
    }
    auto path = trim(rest);
    if (path.empty()) return LineError{"missing path"};
    if ((*f == -1) != !errno_name.empty()) return LineError{"fd must be -1 exactly when errno is set"};
    r = {*t, std::string(*proc), *f, std::move(errno_name), std::string(path)};
    return std::nullopt;
}

std::optional<LineError> parse_tcp_line(std::string_view line, TcpRecord& r) {
    std::string_view rest = line;
    auto ts = next_token(rest);
    auto proc = next_token(rest);
    auto ip = next_token(rest);
    auto port = next_token(rest);
    auto state = next_token(rest);
    if (!state || !trim(rest).empty()) return LineError{"expected 5 columns"};
    auto t = to_int(*ts);
    auto p = to_int(*port);
    auto st = tcp_state_from_string(*state);
    if (!t) return LineError{"bad timestamp"};
    if (!is_valid_ip_literal(*ip)) return LineError{"bad ip literal"};
    if (!p || *p < 0 || *p > 65535) return LineError{"port out of range"};
    if (!st) return LineError{"unknown connection state"};
    r = {*t, std::string(*proc), std::string(*ip), *p, *st};
    return std::nullopt;
}

std::optional<LineError> parse_syscall_line(std::string_view line, SyscallEvent& e) {
    std::string_view rest = line;
    auto ts = next_token(rest);
    auto name = next_token(rest);
    auto err = next_token(rest);
    auto note = next_token(rest);
    if (!name) return LineError{"expected at least 2 columns"};
    if (!trim(rest).empty()) return LineError{"too many columns"};
    auto t = to_int(*ts);
    if (!t) return LineError{"bad timestamp"};
    if (!is_valid_syscall_name(*name)) return LineError{"bad syscall name"};
    std::string errno_name;
    if (err && *err != "-") {
        if (!is_errno_token(*err)) return LineError{"bad errno"};
        errno_name = std::string(*err);
    }
    std::string fd_note;
    if (note && *note != "-") {
        if (!is_valid_fd_note(*note)) return LineError{"bad fd note"};
        fd_note = std::string(*note);
    }
    e = {*t, std::string(*name), std::move(errno_name), std::move(fd_note)};
    return std::nullopt;
}

std::string dash_if_empty(const std::string& s) { return s.empty() ? "-" : s; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

constexpr PhraseRule kPhraseRules[] = {
    // system
    {"system is going down", BehaviorClass::system_shutdown},
    {"system shutdown", BehaviorClass::system_shutdown},
    {"kernel panic", BehaviorClass::system_shutdown},
    {"system freezing", BehaviorClass::system_freezing},
    {"soft lockup", BehaviorClass::system_freezing},
    {"blocked for more than", BehaviorClass::system_freezing},
    {"infinite wait", BehaviorClass::infinite_waiting},
    {"timed out waiting", BehaviorClass::infinite_waiting},
    {"pip is looking at multiple versions", BehaviorClass::version_looping},
    {"version loop", BehaviorClass::version_looping},
    {"microsoft visual c++ 14.0 or greater is required", BehaviorClass::system_prerequisites_required},
    {"command 'gcc' failed", BehaviorClass::system_prerequisites_required},
    {"unable to execute 'gcc'", BehaviorClass::system_prerequisites_required},
    {"system prerequisites required", BehaviorClass::system_prerequisites_required},
    // compatibility
    {"no matching distribution found", BehaviorClass::mismatch_distribution},
    {"no match distribution", BehaviorClass::mismatch_distribution},
    {"requires a different python", BehaviorClass::requires_different_version},
    {"requires-python", BehaviorClass::requires_different_version},
    {"could not find a version that satisfies", BehaviorClass::missing_package_version},
    {"invalid version", BehaviorClass::missing_package_version},
    {"authentication required", BehaviorClass::unexpected_auth_request},
    {"401 client error", BehaviorClass::unexpected_auth_request},
    {"user for ", BehaviorClass::unexpected_auth_request},
    {"password:", BehaviorClass::unexpected_auth_request},
    {"modulenotfounderror", BehaviorClass::missing_install_module},
    {"no module named", BehaviorClass::missing_install_module},
    {"unicodedecodeerror", BehaviorClass::unicode_file_naming},
    {"unicodeencodeerror", BehaviorClass::unicode_file_naming},
    // normal
    {"neither 'setup.py' nor 'pyproject.toml' found", BehaviorClass::missing_setup_files},
    {"does not appear to be a python project", BehaviorClass::missing_setup_files},
    {"setup.py not found", BehaviorClass::missing_setup_files},
    {"failed building wheel", BehaviorClass::failed_build_wheels},
    {"failed to build installable wheels", BehaviorClass::failed_build_wheels},
    {"could not build wheels", BehaviorClass::failed_build_wheels},
    {"metadata-generation-failed", BehaviorClass::no_metadata},
    {"encountered error while generating package metadata", BehaviorClass::no_metadata},
    {"successfully installed", BehaviorClass::successfully_installed},
};

// Extracts a requirement name at the start of `s` (stops at specifiers).
std::string_view requirement_name(std::string_view s) {
    s = trim(s);
    auto end = s.find_first_of(" \t<>=!~[;,()");
    return s.substr(0, end);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

const LogGrammar& grammar_for(LogKind kind) {
    static const LogGrammar kFiletop{LogKind::filetop,
                                     {"ts", "process", "reads", "writes", "read_kb", "write_kb", "path"}};
    static const LogGrammar kOpens{LogKind::opensnoop, {"ts", "process", "fd", "errno", "path"}};
    static const LogGrammar kTcp{LogKind::tcpconnect, {"ts", "process", "ip", "port", "state"}};
    static const LogGrammar kSyscall{LogKind::syscall, {"ts", "name", "errno", "fdnote"}};
    static const LogGrammar kInstall{LogKind::install, {"text"}};
    switch (kind) {
        case LogKind::filetop: return kFiletop;
        case LogKind::opensnoop: return kOpens;
        case LogKind::tcpconnect: return kTcp;
        case LogKind::syscall: return kSyscall;
        case LogKind::install: return kInstall;
    }
    return kInstall;
}

ParseResult<FiletopRecord> parse_filetop(std::string_view text) {
    return parse_lines<FiletopRecord>(text, "filetop", parse_filetop_line);
}

ParseResult<OpenRecord> parse_opensnoop(std::string_view text) {
    return parse_lines<OpenRecord>(text, "opensnoop", parse_open_line);
}

ParseResult<TcpRecord> parse_tcpconnect(std::string_view text) {
    return parse_lines<TcpRecord>(text, "tcpconnect", parse_tcp_line);
}

ParseResult<SyscallEvent> parse_syscalls(std::string_view text) {
    return parse_lines<SyscallEvent>(text, "syscall", parse_syscall_line);
}

std::string format_filetop(std::span<const FiletopRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += std::to_string(r.timestamp_ms) + ' ' + r.process + ' ' + std::to_string(r.reads) + ' ' +
               std::to_string(r.writes) + ' ' + fmt_double(r.read_kb) + ' ' + fmt_double(r.write_kb) +
               ' ' + r.file_path + '\n';
    }
    return out;
}

std::string format_opensnoop(std::span<const OpenRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += std::to_string(r.timestamp_ms) + ' ' + r.process + ' ' + std::to_string(r.fd) + ' ' +
               dash_if_empty(r.errno_name) + ' ' + r.path + '\n';
    }
    return out;
}

std::string format_tcpconnect(std::span<const TcpRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += std::to_string(r.timestamp_ms) + ' ' + r.process + ' ' + r.remote_ip + ' ' +
               std::to_string(r.remote_port) + ' ' + std::string(to_string(r.state)) + '\n';
    }
    return out;
}

std::string format_syscalls(std::span<const SyscallEvent> events) {
    std::string out;
    for (const auto& e : events) {
        out += std::to_string(e.timestamp_ms) + ' ' + e.name + ' ' + dash_if_empty(e.errno_name) + ' ' +
               dash_if_empty(e.fd_note) + '\n';
    }
    return out;
}

std::span<const PhraseRule> install_phrase_rules() { return kPhraseRules; }

InstallOutcome classify_install_log(std::string_view text, std::int64_t duration_ms) {
    const std::string haystack = lower(text);
    for (const auto& rule : kPhraseRules) {
        if (haystack.find(rule.phrase) != std::string::npos) {
            return InstallOutcome::of(rule.behavior, duration_ms);
        }
    }
    return InstallOutcome::of(BehaviorClass::no_metadata, duration_ms);
}

DependencyCounts count_dependencies(std::string_view log, std::string_view package_name) {
    const std::string self = normalize_package_name(package_name);
    DependencyCounts counts;
    while (!log.empty()) {
        auto nl = log.find('\n');
        auto line = trim(log.substr(0, nl));
        log = nl == std::string_view::npos ? std::string_view{} : log.substr(nl + 1);

        std::string_view body;
        for (std::string_view prefix : {std::string_view("Collecting "),
                                        std::string_view("Requirement already satisfied: ")}) {
            if (line.substr(0, prefix.size()) == prefix) body = line.substr(prefix.size());
        }
        if (body.empty()) continue;
        auto from = body.find("(from ");
        if (from == std::string_view::npos) continue;
        auto parent = normalize_package_name(requirement_name(body.substr(from + 6)));
        auto dep = normalize_package_name(requirement_name(body));
        if (dep.empty() || dep == self) continue;
        if (parent == self) {
            ++counts.direct;
        } else {
            ++counts.indirect;
        }
    }
    return counts;
}

std::filesystem::path log_path(const std::filesystem::path& dir, std::string_view name, LogKind kind) {
    return dir / (std::string(name) + std::string(log_suffix(kind)));
}

TraceBundle load_trace_directory(const std::filesystem::path& dir, const PackageRef& package,
                                 int window_s, std::int64_t install_duration_ms) {
    TraceBundle b;
    b.package = package;
    b.capture_window_s = window_s;
    auto load = [&](LogKind kind) -> std::optional<std::string> {
        auto p = log_path(dir, package.name, kind);
        if (!std::filesystem::exists(p)) {
            b.missing_logs.push_back(kind);
            return std::nullopt;
        }
        return read_file(p);
    };
    if (auto text = load(LogKind::filetop)) b.filetop = parse_filetop(*text).records;
    if (auto text = load(LogKind::opensnoop)) b.opens = parse_opensnoop(*text).records;
    if (auto text = load(LogKind::tcpconnect)) b.tcp = parse_tcpconnect(*text).records;
    if (auto text = load(LogKind::syscall)) b.syscalls = parse_syscalls(*text).records;
    if (auto text = load(LogKind::install)) {
        b.outcome = classify_install_log(*text, install_duration_ms);
        auto deps = count_dependencies(*text, package.name);
        b.direct_deps = deps.direct;
        b.indirect_deps = deps.indirect;
    }
    std::sort(b.missing_logs.begin(), b.missing_logs.end());
    trim_to_window(b);
    return b;
}

}  // namespace instrace
