// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace saeforge {

// Subcommands: ingest, train, metrics, label, families, match, steer-eval,
// serve. Common flags: --config (JSON file), --seed, --out, --summary-json.
// Returns 0 on success, 1 on a usage error, 2 on a runtime failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace saeforge
