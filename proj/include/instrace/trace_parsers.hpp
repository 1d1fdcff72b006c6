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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "instrace/trace_model.hpp"

namespace instrace {

// Line grammars for the textual layer of each tracing subsystem. Every log is
// UTF-8, LF terminated, whitespace delimited; blank lines and lines starting
// with '#' are comments. The last column of filetop and opensnoop lines is a
// path and may itself contain spaces.
//
//   filetop     ts process reads writes read_kb write_kb path
//   opensnoop   ts process fd errno path        (errno "-" or omitted if none)
//   tcpconnect  ts process ip port state
//   syscall     ts name [errno [fdnote]]        ("-" for an empty column)
struct LogGrammar {
    LogKind kind;
    std::vector<std::string> column_spec;
};

const LogGrammar& grammar_for(LogKind kind);

struct MalformedLine {
    std::size_t line_number = 0;  // 1-based
    std::string text;
    std::string reason;
};

template <typename Record>
struct ParseResult {
    std::vector<Record> records;
    std::vector<MalformedLine> malformed;
};

// Parsers never drop a line silently: it becomes a record or a malformed
// entry. They throw FormatError only if more than half of the data lines are
// malformed, which usually means the wrong grammar.
ParseResult<FiletopRecord> parse_filetop(std::string_view text);
ParseResult<OpenRecord> parse_opensnoop(std::string_view text);
ParseResult<TcpRecord> parse_tcpconnect(std::string_view text);
ParseResult<SyscallEvent> parse_syscalls(std::string_view text);

std::string format_filetop(std::span<const FiletopRecord> records);
std::string format_opensnoop(std::span<const OpenRecord> records);
std::string format_tcpconnect(std::span<const TcpRecord> records);
std::string format_syscalls(std::span<const SyscallEvent> events);

/// One row of the install-transcript phrase table. Matching is a
/// case-insensitive substring search.
struct PhraseRule {
    std::string_view phrase;
    BehaviorClass behavior;
};

/// Ordered by priority: system rules, then compatibility, then normal.
std::span<const PhraseRule> install_phrase_rules();

/// First matching phrase rule wins; a transcript with no match maps to
/// no_metadata (the install finished without the success phrase).
InstallOutcome classify_install_log(std::string_view text, std::int64_t duration_ms = 0);

struct DependencyCounts {
    std::int64_t direct = 0;
    std::int64_t indirect = 0;
};

/// Counts "Collecting X (from Y)" / "Requirement already satisfied: X ... (from Y)"
/// lines. A dependency is direct when Y is the installed package itself.
DependencyCounts count_dependencies(std::string_view install_log, std::string_view package_name);

/// Reads `<dir>/<name><suffix>` for every log kind and assembles a bundle.
/// Missing files are recorded in `missing_logs`; events past the capture
/// window are discarded. Parse failures propagate as FormatError.
TraceBundle load_trace_directory(const std::filesystem::path& dir, const PackageRef& package,
                                 int window_s = kDefaultCaptureWindowS,
                                 std::int64_t install_duration_ms = 0);

std::filesystem::path log_path(const std::filesystem::path& dir, std::string_view name, LogKind kind);

}  // namespace instrace
