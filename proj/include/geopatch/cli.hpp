#pragma once

namespace geopatch {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitIo = 4,
};

/// Entry point of the `geopatch` tool. Subcommands: tile, label, split,
/// encode, stats, bench. Every subcommand writes manifest_<name>.json into
/// the output directory.
int run_cli(int argc, const char* const* argv);

}  // namespace geopatch
