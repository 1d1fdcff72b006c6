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

#include <set>

#include "fixtures.hpp"
#include "instrace/trace_model.hpp"

using namespace instrace;
using instrace::testing::make_bundle;
using instrace::testing::sc;

TEST_CASE("well-formed bundle has no violations") {
    auto b = make_bundle();
    b.filetop.push_back({10, "pip", 3, 1, 12.5, 0.5, "/tmp/demo/setup.py"});
    b.opens.push_back({20, "python3", 3, "", "/usr/lib/python3/os.py"});
    b.opens.push_back({21, "python3", -1, "ENOENT", "/root/.ssh/id_rsa"});
    b.tcp.push_back({30, "pip", "151.101.0.223", 443, TcpState::established});
    b.tcp.push_back({31, "pip", "2001:db8::1", 80, TcpState::attempted});
    b.syscalls = {sc(1, "openat"), sc(2, "fstat", "", "fd=3"), sc(2, "ioctl", "ENOTTY", "no-fd")};
    CHECK(validate_bundle(b).empty());
}

TEST_CASE("port out of range names the record") {
    auto b = make_bundle();
    b.tcp.push_back({30, "pip", "203.0.113.9", 70000, TcpState::attempted});
    auto v = validate_bundle(b);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "tcp[0].remote_port out of range");
}

TEST_CASE("success flag must agree with the behavior class") {
    auto b = make_bundle();
    b.outcome.behavior_class = BehaviorClass::system_shutdown;
    b.outcome.behavior_group = BehaviorGroup::system;
    b.outcome.success = true;
    CHECK(validate_bundle(b).size() == 1);
}

TEST_CASE("other invariant violations are reported, never thrown") {
    auto b = make_bundle();
    b.package.name.clear();
    b.opens.push_back({1, "x", -1, "", "/a"});
    b.opens.push_back({1, "x", 4, "EACCES", "/b"});
    b.tcp.push_back({1, "x", "not-an-ip", 80, TcpState::failed});
    b.syscalls = {sc(5, "Open"), sc(4, "read", "", "fd=x")};
    b.filetop.push_back({1, "x", -1, 0, -2.0, 0, "/f"});
    b.capture_window_s = 0;
    auto v = validate_bundle(b);
    std::set<std::string> got(v.begin(), v.end());
    CHECK(got.count("package.name empty"));
    CHECK(got.count("tcp[0].remote_ip not an IP literal"));
    CHECK(got.count("syscalls[0].name not [a-z0-9_]+"));
    CHECK(got.count("syscalls[1].fd_note malformed"));
    CHECK(got.count("syscalls[1].timestamp_ms out of order"));
    CHECK(got.count("filetop[0].reads negative"));
    CHECK(got.count("capture_window_s not positive"));
    CHECK(v.size() == 10);
}

TEST_CASE("every behavior class maps to exactly one group") {
    std::size_t normal = 0, compat = 0, sys = 0;
    for (auto c : kAllBehaviorClasses) {
        switch (group_of(c)) {
            case BehaviorGroup::normal: ++normal; break;
            case BehaviorGroup::compatibility: ++compat; break;
            case BehaviorGroup::system: ++sys; break;
        }
        auto o = InstallOutcome::of(c);
        CHECK(o.behavior_group == group_of(c));
        CHECK(o.success == (c == BehaviorClass::successfully_installed));
        CHECK(behavior_class_from_string(to_string(c)) == c);
    }
    CHECK(normal == 4);
    CHECK(compat == 6);
    CHECK(sys == 5);
    CHECK(group_of(BehaviorClass::mismatch_distribution) == BehaviorGroup::compatibility);
    CHECK(group_of(BehaviorClass::version_looping) == BehaviorGroup::system);
}

TEST_CASE("package names normalize registry style") {
    CHECK(normalize_package_name("reverse_shell") == "reverse-shell");
    CHECK(normalize_package_name("Reverse.Shell") == "reverse-shell");
    CHECK(normalize_package_name("a-_.b") == "a-b");
    CHECK(normalize_package_name("Requests") == "requests");
}

TEST_CASE("window trimming drops late records and orders syscalls stably") {
    auto b = make_bundle();
    b.capture_window_s = 1;
    b.syscalls = {sc(500, "b"), sc(100, "a"), sc(500, "c"), sc(1001, "late"), sc(1000, "edge")};
    b.tcp.push_back({1500, "x", "10.0.0.1", 1, TcpState::failed});
    trim_to_window(b);
    REQUIRE(b.syscalls.size() == 4);
    CHECK(b.syscalls[0].name == "a");
    CHECK(b.syscalls[1].name == "b");
    CHECK(b.syscalls[2].name == "c");
    CHECK(b.syscalls[3].name == "edge");
    CHECK(b.tcp.empty());
}

TEST_CASE("JSON round trip preserves bundle and validation result") {
    auto b = make_bundle("Some_Pkg", Label::malicious);
    b.package.archive_kind = ArchiveKind::zip;
    b.filetop.push_back({10, "pip", 3, 1, 12.25, 0.5, "/tmp/with space/x.py"});
    b.opens.push_back({21, "python3", -1, "ENOENT", "/root/.ssh/id_rsa"});
    b.syscalls = {sc(1, "newfstatat"), sc(2, "openat"), sc(3, "fstat", "ENOENT")};
    b.direct_deps = 2;
    b.indirect_deps = 5;
    // A log that was never captured has no records and no JSON key.
    b.missing_logs = {LogKind::tcpconnect};
    auto j = to_json(b);
    CHECK(j.contains("deps"));
    CHECK_FALSE(j.contains("tcp"));
    for (const char* key : {"package", "outcome", "filetop", "opens", "syscalls", "capture_window_s"})
        CHECK(j.contains(key));
    auto back = bundle_from_json(j);
    CHECK(back == b);
    CHECK(validate_bundle(back) == validate_bundle(b));

    auto bad = b;
    bad.missing_logs.clear();
    bad.tcp.push_back({30, "pip", "203.0.113.9", -3, TcpState::established});
    CHECK(validate_bundle(bundle_from_json(to_json(bad))) == validate_bundle(bad));
}

TEST_CASE("digest ignores package identity but not content") {
    auto a = make_bundle("reverse-shell");
    auto b = make_bundle("reverse_shell");
    a.syscalls = b.syscalls = {sc(1, "socket"), sc(2, "connect")};
    CHECK(trace_digest(a) == trace_digest(b));
    b.syscalls.push_back(sc(3, "close"));
    CHECK(trace_digest(a) != trace_digest(b));
}

TEST_CASE("enum string tables are inverse") {
    for (auto k : kAllLogKinds) CHECK(log_kind_from_string(to_string(k)) == k);
    CHECK(log_suffix(LogKind::opensnoop) == "_opens.log");
    CHECK(log_suffix(LogKind::tcpconnect) == "_tcps.log");
    CHECK(label_from_string("malicious") == Label::malicious);
    CHECK_FALSE(label_from_string("evil").has_value());
    CHECK(tcp_state_from_string("failed") == TcpState::failed);
    CHECK(archive_kind_from_string("tar_gz") == ArchiveKind::tar_gz);
}
