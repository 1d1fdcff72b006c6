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

#include "instrace/features.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <stdexcept>

#include "instrace/errors.hpp"

namespace instrace {
namespace {

constexpr std::array<std::string_view, kPatternCategories> kCategoryNames = {
    "File Metadata Retrieval", "Reading data from file",  "Writing data to file",
    "Network Socket Creation", "Creating a New Process",  "Memory Mapping",
    "File Descriptor Management", "Network data transfer", "File Locking",
    "Error Handling",
};

struct BuiltinEntry {
    const char* id;
    int category;
    std::vector<const char*> tokens;
    bool malicious;
};

std::vector<PatternEntry> builtin_entries() {
    // Pattern_3 and Pattern_8 templates are local additions; the others are
    // the published top patterns and high-impact motifs.
    const std::vector<BuiltinEntry> raw = {
        {"p10_stat_open_enoent", 10, {"newfstatat", "openat", "fstat|errno=ENOENT"}, true},
        {"p1_stat_open_lseek_ioctl", 1, {"newfstatat", "openat", "fstat", "lseek", "ioctl"}, false},
        {"p2_read_read_read_stat", 2, {"read", "read", "read", "newfstatat"}, false},
        {"p4_socket_bind_listen_accept_execve", 4, {"socket", "bind", "listen", "accept", "execve"}, true},
        {"p6_open_mmap_ioctl_prctl", 6, {"openat", "mmap", "ioctl", "prctl|no-fd"}, false},
        {"p7_fcntl_fcntl_close_fd1", 7, {"fcntl", "fcntl", "close|no-error|fd=1"}, true},
        {"p1_open_fstat_ioctl", 1, {"openat", "fstat", "ioctl"}, false},
        {"p1_close_stat", 1, {"close", "newfstatat|no-fd"}, false},
        {"p5_ioctl_setresuid_setresgid_execve", 5, {"ioctl", "setresuid", "setresgid", "execve"}, true},
        {"p9_open_fstat_fcntl", 9, {"openat", "fstat", "fcntl|no-fd"}, true},
        {"p5_mmap_fork_ptrace_execve", 5, {"mmap", "fork", "ptrace", "execve"}, true},
        {"p3_open_read_encrypt_write_rename", 3, {"openat", "read", "encrypt", "write", "rename"}, true},
        {"p2_read_read_read_stat_stat", 2, {"read", "read", "read", "newfstatat", "newfstatat"}, false},
        {"p2_read_read_ok", 2, {"read", "read|no-error"}, false},
        {"p1_fstat_ioctl_lseek", 1, {"fstat", "ioctl", "lseek"}, false},
        {"p3_open_write_fsync_close", 3, {"openat", "write", "fsync", "close"}, false},
        {"p8_socket_connect_sendto_recvfrom", 8, {"socket", "connect", "sendto", "recvfrom"}, false},
    };
    std::vector<PatternEntry> out;
    for (const auto& r : raw) {
        PatternEntry e;
        e.id = r.id;
        e.category = r.category;
        e.malicious_indicator = r.malicious;
        for (const char* t : r.tokens) e.sequence.push_back(PatternToken::parse(t));
        out.push_back(std::move(e));
    }
    return out;
}

bool under(std::string_view path, std::string_view dir) {
    if (path.substr(0, dir.size()) != dir) return false;
    return path.size() == dir.size() || path[dir.size()] == '/';
}

bool has_hidden_component(std::string_view path) {
    std::size_t pos = 0;
    while (pos < path.size()) {
        auto next = path.find('/', pos);
        auto part = path.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
        if (part.size() > 1 && part.front() == '.' && part != "..") return true;
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return false;
}

using NameSet = std::set<std::string_view>;

const NameSet kFileIo = {"read",    "write",    "openat",   "open",      "close",    "fstat",
                         "newfstatat", "lseek", "pread64",  "pwrite64",  "readv",    "writev",
                         "stat",    "lstat",    "statx",    "getdents64", "rename",  "renameat",
                         "renameat2", "unlink", "unlinkat", "mkdir",     "mkdirat",  "fcntl",
                         "ioctl",   "dup",      "dup2",     "dup3",      "access",   "faccessat",
                         "readlink", "readlinkat", "chmod", "fchmod",    "fchmodat", "fsync",
                         "fdatasync", "ftruncate", "flock", "sendfile",  "copy_file_range"};
const NameSet kNetwork = {"socket",  "connect", "bind",    "listen",    "accept",     "accept4",
                          "sendto",  "recvfrom", "sendmsg", "recvmsg",  "getsockopt", "setsockopt",
                          "shutdown", "getsockname", "getpeername", "socketpair"};
const NameSet kProcess = {"fork",  "vfork",   "clone",   "clone3", "execve", "execveat", "exit",
                          "exit_group", "wait4", "waitid", "kill", "tgkill", "getpid", "getppid",
                          "prctl", "set_tid_address", "setsid", "setpgid"};
const NameSet kSecurity = {"setuid",  "setgid",   "setresuid", "setresgid", "setreuid", "setregid",
                           "setfsuid", "setfsgid", "capset",   "capget",    "ptrace",   "seccomp",
                           "chroot",  "setns",    "unshare",   "keyctl",    "add_key",  "request_key"};
const NameSet kMemory = {"mmap", "munmap", "mprotect", "brk", "mremap", "madvise", "mlock", "munlock"};
const NameSet kIpc = {"pipe", "pipe2", "futex", "eventfd2", "shmget", "shmat", "shmdt", "msgget",
                      "msgsnd", "msgrcv", "semget", "semop", "mq_open", "mq_send", "mq_receive"};
const NameSet kTime = {"clock_gettime", "gettimeofday", "nanosleep", "clock_nanosleep", "time",
                       "clock_getres", "timer_create", "timerfd_create"};
const NameSet kForks = {"fork", "vfork", "clone", "clone3"};
const NameSet kSetuid = {"setuid", "setgid", "setresuid", "setresgid", "setreuid", "setregid",
                         "setfsuid", "setfsgid"};

std::vector<FeatureSpec> standard_features() {
    using C = FeatureCategory;
    using K = FeatureKind;
    std::vector<FeatureSpec> f;
    auto add = [&](std::string name, C c, K k) { f.push_back({std::move(name), c, k}); };

    // Read_Processes and Write_Data_Transfer live here as read_process_count
    // and total_write_kb.
    for (const char* n : {"read_process_count", "write_process_count", "total_read_kb", "total_write_kb",
                          "distinct_files", "max_read_kb_one_file", "max_write_kb_one_file",
                          "read_write_kb_ratio", "mean_kb_per_process"})
        add(n, C::filetop, K::numerical);

    add("direct_deps", C::install, K::numerical);
    add("indirect_deps", C::install, K::numerical);
    add("install_success", C::install, K::categorical_derived);
    add("behavior_group_code", C::install, K::categorical_derived);
    add("duration_ms", C::install, K::numerical);
    add("auth_request_flag", C::install, K::categorical_derived);

    for (const char* n : {"root_dir_access", "usr_dir_access", "tmp_dir_access", "sys_dir_access",
                          "etc_dir_access", "home_dir_access", "proc_dir_access", "var_dir_access",
                          "failed_open_count", "enoent_open_count", "distinct_paths", "hidden_path_access"})
        add(n, C::opensnoop, K::numerical);

    // distinct_remote_ports plays the Remote_Port_Access role.
    for (const char* n : {"distinct_remote_ips", "distinct_remote_ports", "total_connections",
                          "established_connections", "failed_connections", "non_standard_port_connections",
                          "max_connections_per_ip", "outbound_rate_per_s"})
        add(n, C::tcp, K::numerical);

    for (const char* n : {"file_io_calls", "network_calls", "process_mgmt_calls", "security_calls",
                          "memory_calls", "ipc_calls", "time_calls", "error_total", "total_syscalls",
                          "distinct_syscalls", "error_ratio", "execve_count", "fork_count", "ptrace_count",
                          "setuid_family_count", "socket_count", "mmap_count"})
        add(n, C::syscall, K::categorical_derived);

    for (int c = 1; c <= kPatternCategories; ++c) add("pattern_" + std::to_string(c), C::pattern, K::categorical_derived);
    return f;
}

}  // namespace

std::string_view pattern_category_name(int category) {
    if (category < 1 || category > kPatternCategories) return "?";
    return kCategoryNames[static_cast<std::size_t>(category - 1)];
}

PatternToken PatternToken::parse(std::string_view text) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '|') {
            parts.push_back(text.substr(start, i - start));
            start = i + 1;
        }
    }
    PatternToken t;
    t.name = std::string(parts.front());
    for (std::size_t i = 1; i < parts.size(); ++i) {
        auto q = parts[i];
        if (q == "no-fd") {
            t.fd_note = "no-fd";
        } else if (q == "no-error") {
            t.errno_name = "";
        } else if (q.starts_with("errno=")) {
            t.errno_name = std::string(q.substr(6));
        } else if (q.starts_with("fd=")) {
            t.fd_note = std::string(q);
        } else {
            throw std::invalid_argument("unknown pattern qualifier: " + std::string(q));
        }
    }
    if (!is_valid_syscall_name(t.name)) throw std::invalid_argument("bad syscall name in pattern: " + t.name);
    return t;
}

std::string PatternToken::to_string() const {
    std::string s = name;
    if (errno_name) s += errno_name->empty() ? "|no-error" : "|errno=" + *errno_name;
    if (fd_note) s += "|" + *fd_note;
    return s;
}

bool PatternToken::matches(const SyscallEvent& e) const {
    if (e.name != name) return false;
    if (errno_name && e.errno_name != *errno_name) return false;
    if (fd_note && e.fd_note != *fd_note) return false;
    return true;
}

SyscallEvent PatternToken::instantiate(std::int64_t timestamp_ms) const {
    return {timestamp_ms, name, errno_name.value_or(""), fd_note.value_or("")};
}

PatternCatalog::PatternCatalog(std::vector<PatternEntry> entries) : entries_(std::move(entries)) {}

const PatternCatalog& PatternCatalog::builtin() {
    static const PatternCatalog catalog(builtin_entries());
    return catalog;
}

const PatternEntry* PatternCatalog::find(std::string_view id) const {
    for (const auto& e : entries_)
        if (e.id == id) return &e;
    return nullptr;
}

std::vector<std::string> PatternCatalog::validate() const {
    std::vector<std::string> problems;
    std::set<std::string> ids;
    for (const auto& e : entries_) {
        if (e.sequence.empty()) problems.push_back(e.id + ": empty template");
        if (e.category < 1 || e.category > kPatternCategories) problems.push_back(e.id + ": category out of range");
        if (!ids.insert(e.id).second) problems.push_back(e.id + ": duplicate id");
    }
    return problems;
}

nlohmann::json PatternCatalog::to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& e : entries_) {
        auto seq = nlohmann::json::array();
        for (const auto& t : e.sequence) seq.push_back(t.to_string());
        arr.push_back({{"id", e.id},
                       {"category", "Pattern_" + std::to_string(e.category)},
                       {"sequence", seq},
                       {"malicious", e.malicious_indicator}});
    }
    return arr;
}

PatternCatalog PatternCatalog::from_json(const nlohmann::json& j) {
    std::vector<PatternEntry> entries;
    for (const auto& item : j) {
        PatternEntry e;
        e.id = item.at("id").get<std::string>();
        const auto& cat = item.at("category");
        if (cat.is_number_integer()) {
            e.category = cat.get<int>();
        } else {
            auto s = cat.get<std::string>();
            if (s.rfind("Pattern_", 0) != 0) throw std::invalid_argument("bad category: " + s);
            e.category = std::stoi(s.substr(8));
        }
        for (const auto& tok : item.at("sequence")) e.sequence.push_back(PatternToken::parse(tok.get<std::string>()));
        e.malicious_indicator = item.value("malicious", false);
        entries.push_back(std::move(e));
    }
    PatternCatalog catalog(std::move(entries));
    if (auto problems = catalog.validate(); !problems.empty())
        throw std::invalid_argument("invalid pattern catalog: " + problems.front());
    return catalog;
}

PatternCatalog PatternCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pattern catalog " + path.string());
    return from_json(nlohmann::json::parse(in));
}

std::size_t count_template(std::span<const SyscallEvent> events, std::span<const PatternToken> seq) {
    if (seq.empty() || events.size() < seq.size()) return 0;
    std::size_t count = 0;
    std::size_t i = 0;
    while (i + seq.size() <= events.size()) {
        bool hit = true;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (!seq[k].matches(events[i + k])) {
                hit = false;
                break;
            }
        }
        if (hit) {
            ++count;
            i += seq.size();
        } else {
            ++i;
        }
    }
    return count;
}

std::vector<std::size_t> match_pattern_entries(std::span<const SyscallEvent> events, const PatternCatalog& catalog) {
    std::vector<std::size_t> out;
    out.reserve(catalog.entries().size());
    for (const auto& e : catalog.entries()) out.push_back(count_template(events, e.sequence));
    return out;
}

PatternCounts match_patterns(std::span<const SyscallEvent> events, const PatternCatalog& catalog) {
    PatternCounts counts{};
    const auto per_entry = match_pattern_entries(events, catalog);
    for (std::size_t i = 0; i < per_entry.size(); ++i)
        counts[static_cast<std::size_t>(catalog.entries()[i].category - 1)] += per_entry[i];
    return counts;
}

std::string event_token(const SyscallEvent& e) {
    std::string s = e.name;
    if (!e.errno_name.empty()) s += "|errno=" + e.errno_name;
    if (!e.fd_note.empty()) s += "|" + e.fd_note;
    return s;
}

std::size_t NGramProfile::total_for(int n) const {
    std::size_t total = 0;
    for (const auto& [gram, c] : counts) {
        std::size_t tokens = 1;
        for (std::size_t p = gram.find(kGramSeparator); p != std::string::npos;
             p = gram.find(kGramSeparator, p + kGramSeparator.size()))
            ++tokens;
        if (tokens == static_cast<std::size_t>(n)) total += c;
    }
    return total;
}

NGramProfile extract_ngrams(std::span<const SyscallEvent> events, std::span<const int> n_range) {
    NGramProfile profile;
    profile.n_range.assign(n_range.begin(), n_range.end());
    std::vector<std::string> tokens;
    tokens.reserve(events.size());
    for (const auto& e : events) tokens.push_back(event_token(e));
    for (int n : n_range) {
        if (n < 2 || n > 6) throw std::invalid_argument("n-gram size must be within 2..6");
        const auto len = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
            std::string gram = tokens[i];
            for (std::size_t k = 1; k < len; ++k) {
                gram += kGramSeparator;
                gram += tokens[i + k];
            }
            ++profile.counts[gram];
        }
    }
    return profile;
}

std::string_view to_string(FeatureCategory c) {
    switch (c) {
        case FeatureCategory::filetop: return "filetop";
        case FeatureCategory::install: return "install";
        case FeatureCategory::opensnoop: return "opensnoop";
        case FeatureCategory::tcp: return "tcp";
        case FeatureCategory::syscall: return "syscall";
        case FeatureCategory::pattern: return "pattern";
    }
    return "?";
}

const FeatureCatalog& FeatureCatalog::standard() {
    static const FeatureCatalog catalog(standard_features());
    return catalog;
}

std::vector<std::string> FeatureCatalog::names() const {
    std::vector<std::string> out;
    out.reserve(features_.size());
    for (const auto& f : features_) out.push_back(f.name);
    return out;
}

std::optional<std::size_t> FeatureCatalog::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return i;
    return std::nullopt;
}

std::size_t FeatureCatalog::count(FeatureCategory c) const {
    std::size_t n = 0;
    for (const auto& f : features_) n += f.category == c ? 1 : 0;
    return n;
}

double FeatureVector::at(std::string_view name) const {
    auto i = FeatureCatalog::standard().index_of(name);
    if (!i) throw std::out_of_range("unknown feature: " + std::string(name));
    return values.at(*i);
}

FeatureVector extract_candidates(const TraceBundle& b, const PatternCatalog& catalog, const FeatureConfig& config) {
    if (auto problems = validate_bundle(b); !problems.empty())
        throw ExtractionError("bundle " + b.package.name + " violates invariants: " + problems.front());

    std::vector<double> v;
    v.reserve(62);

    // Filetop
    {
        std::set<std::string> readers, writers, processes;
        std::map<std::string, std::pair<double, double>> per_file;
        double total_read = 0, total_write = 0;
        for (const auto& r : b.filetop) {
            processes.insert(r.process);
            if (r.reads > 0) readers.insert(r.process);
            if (r.writes > 0) writers.insert(r.process);
            total_read += r.read_kb;
            total_write += r.write_kb;
            auto& f = per_file[r.file_path];
            f.first += r.read_kb;
            f.second += r.write_kb;
        }
        double max_read = 0, max_write = 0;
        for (const auto& [path, kb] : per_file) {
            max_read = std::max(max_read, kb.first);
            max_write = std::max(max_write, kb.second);
        }
        const double moved = total_read + total_write;
        v.push_back(static_cast<double>(readers.size()));
        v.push_back(static_cast<double>(writers.size()));
        v.push_back(total_read);
        v.push_back(total_write);
        v.push_back(static_cast<double>(per_file.size()));
        v.push_back(max_read);
        v.push_back(max_write);
        v.push_back(moved > 0 ? total_read / moved : 0.0);
        v.push_back(processes.empty() ? 0.0 : moved / static_cast<double>(processes.size()));
    }

    // Install
    {
        const bool captured = std::find(b.missing_logs.begin(), b.missing_logs.end(), LogKind::install) ==
                              b.missing_logs.end();
        v.push_back(static_cast<double>(b.direct_deps));
        v.push_back(static_cast<double>(b.indirect_deps));
        v.push_back(captured && b.outcome.success ? 1.0 : 0.0);
        v.push_back(static_cast<double>(static_cast<int>(b.outcome.behavior_group)));
        v.push_back(static_cast<double>(b.outcome.duration_ms));
        v.push_back(b.outcome.behavior_class == BehaviorClass::unexpected_auth_request ? 1.0 : 0.0);
    }

    // Opensnoop
    {
        constexpr std::array<std::string_view, 8> dirs = {"/root", "/usr", "/tmp", "/sys",
                                                          "/etc",  "/home", "/proc", "/var"};
        std::array<double, 8> dir_counts{};
        double failed = 0, enoent = 0, hidden = 0;
        std::set<std::string> paths;
        for (const auto& r : b.opens) {
            for (std::size_t d = 0; d < dirs.size(); ++d)
                if (under(r.path, dirs[d])) dir_counts[d] += 1;
            if (r.fd == -1) failed += 1;
            if (r.errno_name == "ENOENT") enoent += 1;
            if (has_hidden_component(r.path)) hidden += 1;
            paths.insert(r.path);
        }
        v.insert(v.end(), dir_counts.begin(), dir_counts.end());
        v.push_back(failed);
        v.push_back(enoent);
        v.push_back(static_cast<double>(paths.size()));
        v.push_back(hidden);
    }

    // TCP
    {
        std::map<std::string, std::size_t> per_ip;
        std::set<std::int64_t> ports;
        double established = 0, failed = 0, nonstandard = 0;
        for (const auto& r : b.tcp) {
            ++per_ip[r.remote_ip];
            ports.insert(r.remote_port);
            if (r.state == TcpState::established) established += 1;
            if (r.state == TcpState::failed) failed += 1;
            if (!config.standard_ports.contains(r.remote_port)) nonstandard += 1;
        }
        std::size_t max_per_ip = 0;
        for (const auto& [ip, n] : per_ip) max_per_ip = std::max(max_per_ip, n);
        const double total = static_cast<double>(b.tcp.size());
        v.push_back(static_cast<double>(per_ip.size()));
        v.push_back(static_cast<double>(ports.size()));
        v.push_back(total);
        v.push_back(established);
        v.push_back(failed);
        v.push_back(nonstandard);
        v.push_back(static_cast<double>(max_per_ip));
        v.push_back(total / static_cast<double>(b.capture_window_s));
    }

    // Syscalls
    {
        double file_io = 0, network = 0, process = 0, security = 0, memory = 0, ipc = 0, time = 0;
        double errors = 0, execve = 0, forks = 0, ptrace = 0, setuid = 0, sockets = 0, mmaps = 0;
        std::set<std::string_view> distinct;
        for (const auto& e : b.syscalls) {
            std::string_view n = e.name;
            distinct.insert(n);
            file_io += kFileIo.contains(n);
            network += kNetwork.contains(n);
            process += kProcess.contains(n);
            security += kSecurity.contains(n);
            memory += kMemory.contains(n);
            ipc += kIpc.contains(n);
            time += kTime.contains(n);
            errors += !e.errno_name.empty();
            execve += n == "execve" || n == "execveat";
            forks += kForks.contains(n);
            ptrace += n == "ptrace";
            setuid += kSetuid.contains(n);
            sockets += n == "socket";
            mmaps += n == "mmap";
        }
        const double total = static_cast<double>(b.syscalls.size());
        for (double x : {file_io, network, process, security, memory, ipc, time, errors}) v.push_back(x);
        v.push_back(total);
        v.push_back(static_cast<double>(distinct.size()));
        v.push_back(total > 0 ? errors / total : 0.0);
        for (double x : {execve, forks, ptrace, setuid, sockets, mmaps}) v.push_back(x);
    }

    // Patterns
    for (std::size_t c : match_patterns(b.syscalls, catalog)) v.push_back(static_cast<double>(c));

    if (v.size() != FeatureCatalog::standard().size())
        throw std::logic_error("feature extraction produced " + std::to_string(v.size()) + " values");
    return {b.package, b.package.label, std::move(v)};
}

Matrix to_matrix(std::span<const FeatureVector> vectors) {
    Matrix m;
    for (const auto& fv : vectors) m.append_row(fv.values);
    return m;
}

std::string feature_matrix_csv(std::span<const FeatureVector> vectors) {
    std::string out;
    for (const auto& name : FeatureCatalog::standard().names()) out += name + ",";
    out += "label\n";
    char buf[64];
    for (const auto& fv : vectors) {
        for (double x : fv.values) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
            out.append(buf, p);
            out += ',';
        }
        out += std::string(to_string(fv.label)) + "\n";
    }
    return out;
}

MinMaxScaler MinMaxScaler::fit(const Matrix& m) {
    if (m.empty()) throw std::invalid_argument("minmax: need at least one row");
    MinMaxScaler s;
    s.min.assign(m.cols(), 0.0);
    s.max.assign(m.cols(), 0.0);
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double lo = m(0, c), hi = m(0, c);
        for (std::size_t r = 1; r < m.rows(); ++r) {
            lo = std::min(lo, m(r, c));
            hi = std::max(hi, m(r, c));
        }
        s.min[c] = lo;
        s.max[c] = hi;
    }
    return s;
}

std::vector<double> MinMaxScaler::apply(std::span<const double> row) const {
    if (row.size() != min.size()) throw std::invalid_argument("minmax: width mismatch");
    std::vector<double> out(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
        const double span = max[c] - min[c];
        out[c] = span > 0 ? (row[c] - min[c]) / span : 0.0;
    }
    return out;
}

Matrix MinMaxScaler::transform(const Matrix& m) const {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = apply(m.row(r));
        std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
}

nlohmann::json MinMaxScaler::to_json() const { return {{"min", min}, {"max", max}}; }

MinMaxScaler MinMaxScaler::from_json(const nlohmann::json& j) {
    MinMaxScaler s;
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    if (s.min.size() != s.max.size()) throw std::invalid_argument("minmax: min/max length mismatch");
    return s;
}

NormalizedMatrix minmax_normalize(const Matrix& m) {
    auto scaler = MinMaxScaler::fit(m);
    auto values = scaler.transform(m);
    return {std::move(values), std::move(scaler)};
}

nlohmann::json CleaningReport::to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& d : dropped) arr.push_back({{"package", d.package}, {"reason", d.reason}, {"kept", d.kept}});
    return {{"dropped", arr}, {"rewritten_paths", rewritten_paths}};
}

std::string standardize_path(std::string_view path, std::string_view root) {
    if (!under(path, "/home") || path.size() <= 6) return std::string(path);
    auto user_end = path.find('/', 6);
    if (user_end == std::string_view::npos) return std::string(root);
    return std::string(root) + std::string(path.substr(user_end));
}

CleanedCorpus clean_corpus(std::vector<TraceBundle> bundles, std::string_view root) {
    CleanedCorpus out;
    std::map<std::pair<std::string, std::uint64_t>, std::string> seen;
    for (auto& b : bundles) {
        if (!b.missing_logs.empty()) {
            out.report.dropped.push_back({b.package.name, "incomplete", ""});
            continue;
        }
        auto rewrite = [&](std::string& p) {
            auto s = standardize_path(p, root);
            if (s != p) {
                p = std::move(s);
                ++out.report.rewritten_paths;
            }
        };
        for (auto& r : b.opens) rewrite(r.path);
        for (auto& r : b.filetop) rewrite(r.file_path);

        auto key = std::make_pair(normalize_package_name(b.package.name), trace_digest(b));
        auto [it, inserted] = seen.emplace(key, b.package.name);
        if (!inserted) {
            out.report.dropped.push_back({b.package.name, "duplicate", it->second});
            continue;
        }
        out.bundles.push_back(std::move(b));
    }
    return out;
}

}  // namespace instrace
