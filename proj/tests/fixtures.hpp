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

// Small builders shared by the unit tests.

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "instrace/trace_model.hpp"

namespace instrace::testing {

inline TraceBundle make_bundle(std::string name = "demo", Label label = Label::benign) {
    TraceBundle b;
    b.package = PackageRef{std::move(name), "1.0", ArchiveKind::tar_gz, label};
    b.outcome = InstallOutcome::of(BehaviorClass::successfully_installed, 4200);
    return b;
}

inline SyscallEvent sc(std::int64_t ts, std::string name, std::string err = "",
                       std::string fd = "") {
    return SyscallEvent{ts, std::move(name), std::move(err), std::move(fd)};
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("instrace-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace instrace::testing
