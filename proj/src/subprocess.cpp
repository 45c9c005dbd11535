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

#include "tdp/subprocess.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tdp/error.hpp"

namespace tdp {

namespace {

std::filesystem::path unique_tmp(const char* tag) {
  static std::atomic<unsigned> counter{0};
  std::ostringstream name;
  name << "tdp_" << tag << "_" << ::getpid() << "_"
       << counter.fetch_add(1) << ".tmp";
  return std::filesystem::temp_directory_path() / name.str();
}

}  // namespace

std::string shell_quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

CommandResult run_command(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ProbeError("run_command: empty argv");
  const auto capture = unique_tmp("cmd");
  std::string cmd;
  for (const auto& a : argv) {
    if (!cmd.empty()) cmd += ' ';
    cmd += shell_quote(a);
  }
  cmd += " > " + shell_quote(capture.string()) + " 2>&1";

  const int raw = std::system(cmd.c_str());
  CommandResult res;
  if (raw == -1) {
    std::filesystem::remove(capture);
    throw ProbeError("run_command: failed to spawn shell for " + argv[0]);
  }
#ifdef WIFEXITED
  if (WIFEXITED(raw)) {
    res.exit_code = WEXITSTATUS(raw);
  } else {
    res.exit_code = 128;  // killed by signal or similar
  }
#else
  res.exit_code = raw;
#endif

  std::ifstream is(capture, std::ios::binary);
  if (is) {
    std::ostringstream buf;
    buf << is.rdbuf();
    res.output = buf.str();
  }
  std::filesystem::remove(capture);
  return res;
}

bool command_exists(const std::string& name) {
  if (name.empty() || name.find('\'') != std::string::npos) return false;
  const std::string cmd =
      "command -v " + shell_quote(name) + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
#ifdef WIFEXITED
  return raw != -1 && WIFEXITED(raw) && WEXITSTATUS(raw) == 0;
#else
  return raw == 0;
#endif
}

}  // namespace tdp
