#pragma once

#include <optional>
#include <string>

#include "beamlab/config.hpp"

namespace beamlab::runner {

struct RunArgs {
    std::string subcommand;
    std::string config_path;  // empty -> defaults
    std::string out_dir = ".";
    int workers = 1;
    std::optional<std::uint64_t> seed_override;
};

/// Executes one subcommand; writes CSV/JSON artifacts plus a manifest into
/// out_dir. Returns the process exit status (nonzero on validation failures).
int run(const RunArgs& args);

/// Deterministic parallel map: results land by index regardless of scheduling.
void parallel_for(long count, int workers, const std::function<void(long)>& fn);

}  // namespace beamlab::runner
