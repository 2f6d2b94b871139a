// Copyright 2026 The Adora Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ADORA_CLI_H_
#define ADORA_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace adora {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Default parent directory for run outputs when --out is not given.
constexpr const char* kOutputRootEnv = "ADORA_OUTPUT_ROOT";

// The `adora` command line. args[0] is the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adora

#endif  // ADORA_CLI_H_
