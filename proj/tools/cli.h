// Copyright 2026 The ldmric Authors
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

#ifndef LDMRIC_TOOLS_CLI_H_
#define LDMRIC_TOOLS_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ldmric/config.h"
#include "ldmric/data.h"

namespace ldmric::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

// Entry point shared by the executable and the tests. Never throws.
int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

// Relative paths in a config resolve against the config file's directory.
std::filesystem::path ResolvePath(const std::filesystem::path& base,
                                  const std::string& path);

// Training pairs as configured: precomputed triples, or originals passed
// through the configured codec at codec.quality.
PairedDataset LoadPairs(const RunConfig& config,
                        const std::filesystem::path& base,
                        const std::string& manifest, int workers);

}  // namespace ldmric::cli

#endif  // LDMRIC_TOOLS_CLI_H_
