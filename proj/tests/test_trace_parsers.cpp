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

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "instrace/errors.hpp"
#include "instrace/trace_parsers.hpp"

using namespace instrace;
namespace fs = std::filesystem;

TEST_CASE("filetop line grammar") {
    auto r = parse_filetop("1200 pip 12 3 340.0 16.5 /tmp/pkg/setup.py\n");
    REQUIRE(r.records.size() == 1);
    CHECK(r.malformed.empty());
    const auto& f = r.records[0];
    CHECK(f.timestamp_ms == 1200);
    CHECK(f.process == "pip");
    CHECK(f.reads == 12);
    CHECK(f.writes == 3);
    CHECK(f.read_kb == 340.0);
    CHECK(f.write_kb == 16.5);
    CHECK(f.file_path == "/tmp/pkg/setup.py");
}

TEST_CASE("comment-only input yields nothing") {
    for (auto text : {"", "# TIME COMM READS WRITES R_Kb W_Kb FILE\n", "\n\n  \n# x\n"}) {
        CHECK(parse_filetop(text).records.empty());
        CHECK(parse_filetop(text).malformed.empty());
        CHECK(parse_tcpconnect(text).records.empty());
    }
}

TEST_CASE("corrupted lines are collected, not dropped") {
    std::string text = "# header\n";
    std::set<std::size_t> bad_lines{37, 81};
    for (std::size_t i = 1; i <= 100; ++i) {
        if (bad_lines.count(i)) text += "garbage ### line\n";
        else text += std::to_string(i * 10) + " pip 1 0 4.0 0 /usr/lib/f" + std::to_string(i) + ".py\n";
    }
    auto r = parse_filetop(text);
    CHECK(r.records.size() == 98);
    REQUIRE(r.malformed.size() == 2);
    // Line numbers count the header comment.
    CHECK(r.malformed[0].line_number == 38);
    CHECK(r.malformed[1].line_number == 82);
    CHECK(r.malformed[0].text == "garbage ### line");
    CHECK_FALSE(r.malformed[0].reason.empty());
}

TEST_CASE("mostly malformed input signals the wrong grammar") {
    std::string tcp = "1 pip 10.0.0.1 443 established\n2 pip 10.0.0.2 80 established\n";
    CHECK_THROWS_AS(parse_filetop(tcp), FormatError);
    // Exactly half malformed is tolerated.
    CHECK(parse_filetop("1 p 1 1 1 1 /a\nbad\n").records.size() == 1);
}

TEST_CASE("opensnoop failure and success lines") {
    auto r = parse_opensnoop("1500 python3 -1 ENOENT /root/.ssh/id_rsa\n10 pip 3  /usr/lib/python3/os.py\n"
                             "11 pip 4 - /tmp/a b.txt\n");
    REQUIRE(r.records.size() == 3);
    CHECK(r.records[0].fd == -1);
    CHECK(r.records[0].errno_name == "ENOENT");
    CHECK(r.records[0].path == "/root/.ssh/id_rsa");
    CHECK(r.records[1].fd == 3);
    CHECK(r.records[1].errno_name.empty());
    CHECK(r.records[1].path == "/usr/lib/python3/os.py");
    CHECK(r.records[2].path == "/tmp/a b.txt");
    // fd -1 without errno violates the record invariant.
    CHECK(parse_opensnoop("1 p -1 /x\n2 p 3 /y\n3 p 4 /z\n").malformed.size() == 1);
}

TEST_CASE("ENOENT count matches a grep-style tally") {
    std::mt19937 gen(5);
    const char* errs[] = {"ENOENT", "EACCES", "-", "ENOENT", "-", "EPERM"};
    std::string text;
    std::size_t expected = 0;
    for (int i = 0; i < 300; ++i) {
        std::string e = errs[gen() % 6];
        std::string fd = e == "-" ? std::to_string(3 + i % 5) : "-1";
        text += std::to_string(i) + " python3 " + fd + " " + e + " /etc/f" + std::to_string(i) + "\n";
    }
    for (std::size_t pos = 0; (pos = text.find(" ENOENT ", pos)) != std::string::npos; ++pos) ++expected;
    auto r = parse_opensnoop(text);
    CHECK(r.malformed.empty());
    std::size_t enoent = 0;
    for (const auto& o : r.records) enoent += o.errno_name == "ENOENT";
    CHECK(enoent == expected);
    CHECK(expected > 0);
}

TEST_CASE("tcpconnect grammar and distinct ips") {
    auto one = parse_tcpconnect("2000 python3 203.0.113.9 6667 established\n");
    REQUIRE(one.records.size() == 1);
    CHECK(one.records[0].remote_port == 6667);
    CHECK(one.records[0].state == TcpState::established);

    std::string text;
    const char* ips[] = {"10.0.0.1", "10.0.0.2", "10.0.0.3", "2001:db8::5", "192.0.2.4", "198.51.100.7",
                         "203.0.113.1"};
    for (int i = 0; i < 40; ++i)
        text += std::to_string(i) + " pip " + ips[(i * 3) % 7] + " 443 attempted\n";
    std::set<std::string> seen;
    for (const auto& t : parse_tcpconnect(text).records) seen.insert(t.remote_ip);
    CHECK(seen.size() == 7);
    CHECK(parse_tcpconnect("1 p 999.1.1.1 80 established\n2 p 10.0.0.1 80 established\n3 p 10.0.0.1 80 established\n")
              .malformed.size() == 1);
    CHECK(parse_tcpconnect("1 p 10.0.0.1 65536 established\n2 p 10.0.0.1 80 up\n3 p 10.0.0.1 80 failed\n4 p 10.0.0.1 81 failed\n")
              .malformed.size() == 2);
}

TEST_CASE("syscall grammar keeps input order") {
    auto r = parse_syscalls("5 newfstatat ENOENT -\n");
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].name == "newfstatat");
    CHECK(r.records[0].errno_name == "ENOENT");
    CHECK(r.records[0].fd_note.empty());

    auto seq = parse_syscalls("1 openat\n2 fstat\n3 ioctl\n");
    REQUIRE(seq.records.size() == 3);
    CHECK(seq.records[0].name == "openat");
    CHECK(seq.records[1].name == "fstat");
    CHECK(seq.records[2].name == "ioctl");

    auto shuffled = parse_syscalls("30 c\n10 a\n20 b - no-fd\n15 d - fd=3\n");
    REQUIRE(shuffled.records.size() == 4);
    std::vector<std::string> names;
    for (const auto& e : shuffled.records) names.push_back(e.name);
    CHECK(names == std::vector<std::string>{"c", "a", "b", "d"});
    CHECK(shuffled.records[2].fd_note == "no-fd");
    CHECK(shuffled.records[3].fd_note == "fd=3");
}

TEST_CASE("format then parse is the identity") {
    std::mt19937_64 gen(11);
    for (int round = 0; round < 50; ++round) {
        std::vector<FiletopRecord> ft;
        std::vector<OpenRecord> op;
        std::vector<TcpRecord> tc;
        std::vector<SyscallEvent> sy;
        for (int i = 0; i < 20; ++i) {
            ft.push_back({static_cast<std::int64_t>(gen() % 100000), "proc" + std::to_string(i % 3),
                          static_cast<std::int64_t>(gen() % 50), static_cast<std::int64_t>(gen() % 50),
                          static_cast<double>(gen() % 100000) / 7.0, static_cast<double>(gen() % 1000) / 3.0,
                          "/tmp/dir " + std::to_string(i) + "/file.py"});
            bool fail = gen() % 2;
            op.push_back({static_cast<std::int64_t>(i), "python3", fail ? -1 : static_cast<std::int64_t>(gen() % 30),
                          fail ? "ENOENT" : "", "/usr/x" + std::to_string(i)});
            tc.push_back({static_cast<std::int64_t>(i), "pip", i % 2 ? "10.1.2.3" : "fe80::1",
                          static_cast<std::int64_t>(gen() % 65536), static_cast<TcpState>(gen() % 3)});
            std::string fd = gen() % 3 == 0 ? "no-fd" : (gen() % 2 ? "fd=" + std::to_string(gen() % 9) : "");
            sy.push_back({static_cast<std::int64_t>(gen() % 1000), "sys_" + std::to_string(gen() % 9),
                          gen() % 4 == 0 ? "EAGAIN" : "", fd});
        }
        auto pf = parse_filetop(format_filetop(ft));
        auto po = parse_opensnoop(format_opensnoop(op));
        auto pt = parse_tcpconnect(format_tcpconnect(tc));
        auto ps = parse_syscalls(format_syscalls(sy));
        CHECK(pf.records == ft);
        CHECK(po.records == op);
        CHECK(pt.records == tc);
        CHECK(ps.records == sy);
        CHECK(pf.malformed.empty());
    }
}

TEST_CASE("parsers are total on arbitrary bytes") {
    std::mt19937 gen(3);
    for (int round = 0; round < 300; ++round) {
        std::string text;
        auto len = gen() % 400;
        for (unsigned i = 0; i < len; ++i) text += static_cast<char>(gen() % 4 == 0 ? '\n' : gen() % 256);
        auto attempt = [&](auto parse) {
            try {
                auto r = parse(text);
                (void)r;
            } catch (const FormatError&) {
            }
        };
        attempt(parse_filetop);
        attempt(parse_opensnoop);
        attempt(parse_tcpconnect);
        attempt(parse_syscalls);
        (void)classify_install_log(text);
    }
    CHECK(true);
}

TEST_CASE("install transcripts map to the outcome taxonomy") {
    auto ok = classify_install_log("Collecting demo\nSuccessfully installed demo-1.0\n", 900);
    CHECK(ok.behavior_class == BehaviorClass::successfully_installed);
    CHECK(ok.behavior_group == BehaviorGroup::normal);
    CHECK(ok.success);
    CHECK(ok.duration_ms == 900);

    auto mm = classify_install_log("ERROR: No matching distribution found for demo==9\n");
    CHECK(mm.behavior_class == BehaviorClass::mismatch_distribution);
    CHECK(mm.behavior_group == BehaviorGroup::compatibility);
    CHECK_FALSE(mm.success);

    CHECK(classify_install_log("  Failed building wheel for demo\n").behavior_class ==
          BehaviorClass::failed_build_wheels);
    CHECK(classify_install_log("pip finished\n").behavior_class == BehaviorClass::no_metadata);
    CHECK(classify_install_log("User for pypi.example.org: ").behavior_class ==
          BehaviorClass::unexpected_auth_request);
}

TEST_CASE("rule priority is system over compatibility over normal") {
    auto o = classify_install_log(
        "Successfully installed demo-1.0\nNo matching distribution found for x\nkernel panic - not syncing\n");
    CHECK(o.behavior_class == BehaviorClass::system_shutdown);
    auto c = classify_install_log("Successfully installed a\nModuleNotFoundError: No module named 'b'\n");
    CHECK(c.behavior_class == BehaviorClass::missing_install_module);

    // Line order of rule-disjoint phrases does not matter.
    CHECK(classify_install_log("Failed building wheel for a\nrequires a different Python: 3.6\n").behavior_class ==
          classify_install_log("requires a different Python: 3.6\nFailed building wheel for a\n").behavior_class);

    // The table itself is sorted by group priority.
    int last = -1;
    for (const auto& rule : install_phrase_rules()) {
        int rank = 2 - static_cast<int>(group_of(rule.behavior));
        CHECK(rank >= last);
        last = rank;
    }
}

TEST_CASE("dependency lines are split direct and indirect") {
    std::string log =
        "Collecting Demo_Pkg\n"
        "Collecting requests>=2 (from demo-pkg==1.0)\n"
        "Collecting urllib3<3 (from requests>=2->demo-pkg==1.0)\n"
        "Requirement already satisfied: six in /usr/lib (from demo.pkg)\n"
        "Requirement already satisfied: idna in /usr/lib (from requests)\n";
    auto d = count_dependencies(log, "demo_pkg");
    CHECK(d.direct == 2);
    CHECK(d.indirect == 2);
}

TEST_CASE("trace directory loading") {
    fs::path dir = fs::temp_directory_path() / "instrace_parser_dir";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto put = [&](LogKind k, const std::string& text) { std::ofstream(log_path(dir, "demo", k)) << text; };
    put(LogKind::filetop, "10 pip 1 0 4.0 0 /tmp/x\n");
    put(LogKind::opensnoop, "# h\n");
    put(LogKind::syscall, "200000 late\n5 b\n1 a\n");
    put(LogKind::install, "Collecting x (from demo)\nSuccessfully installed demo-1.0\n");
    PackageRef pkg{"demo", "1.0", ArchiveKind::zip, Label::benign};
    auto b = load_trace_directory(dir, pkg, 120, 3000);
    CHECK(b.missing_logs == std::vector<LogKind>{LogKind::tcpconnect});
    CHECK(b.filetop.size() == 1);
    REQUIRE(b.syscalls.size() == 2);
    CHECK(b.syscalls[0].name == "a");
    CHECK(b.outcome.success);
    CHECK(b.outcome.duration_ms == 3000);
    CHECK(b.direct_deps == 1);
    CHECK(log_path(dir, "demo", LogKind::tcpconnect).filename() == "demo_tcps.log");
    fs::remove_all(dir);
}

TEST_CASE("grammars cover every log kind") {
    for (auto k : kAllLogKinds) {
        CHECK(grammar_for(k).kind == k);
        CHECK_FALSE(grammar_for(k).column_spec.empty());
    }
}
