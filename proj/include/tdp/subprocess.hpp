// Copyright (c) the tdp authors.
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
#include <vector>

namespace tdp {

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr, interleaved
  bool ok() const { return exit_code == 0; }
};

// Single-arg shell quoting (POSIX sh single-quote style).
std::string shell_quote(const std::string& arg);

// Runs `argv` through the shell, capturing combined stdout/stderr via a
// temporary file. Throws ProbeError if the shell itself cannot be spawned;
// a non-zero exit from the child is reported through `exit_code`, not thrown.
CommandResult run_command(const std::vector<std::string>& argv);

// True if `name` resolves to an executable on PATH.
bool command_exists(const std::string& name);

}  // namespace tdp
