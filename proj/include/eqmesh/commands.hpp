#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace eqmesh {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the eqmesh tool. `args` excludes the program name.
///
///     eqmesh <gen-data|train|eval|audit-equivariance|predict>
///            [--config FILE] [--out PATH] [--key value | --key=value | key=value]...
///
/// Keys are dotted config paths (model.baseline, train.epochs, seed, ...).
/// Returns 0 on success, 1 for usage/config errors, 2 for runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eqmesh
