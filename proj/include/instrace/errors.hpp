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

#include <stdexcept>
#include <string>

namespace instrace {

// Raised by the log parsers when a file is mostly unparseable, which usually
// means the wrong grammar was applied to it.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ExtractionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidProfile : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class LengthMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DegenerateData : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InsufficientClass : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SingleClass : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UntrainedModel : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class TargetUnreachable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CaptureIncomplete : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace instrace
