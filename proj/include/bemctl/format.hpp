// Copyright 2026 The bemctl Authors.
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

#include <string>
#include <string_view>
#include <vector>

namespace bemctl {

/// Shortest decimal that round-trips to the same double. Used for every
/// number written to report files so output is byte-stable.
std::string format_double(double v);

/// Strict parse of a whole field; throws IoError on junk.
double parse_double(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace bemctl
