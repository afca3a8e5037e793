#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace trident {

using Rng = std::mt19937_64;

// Named substreams: every random consumer derives its own seed from the run
// seed and a stable name ("corpus", "init/aq", "batch/phase2", ...), so the
// consumers stay reproducible independently of each other.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

inline Rng make_rng(std::uint64_t base, std::string_view stream) {
  return Rng(derive_seed(base, stream));
}

// Uniform draw in the open interval (0, 1).
double open_uniform(Rng& rng);

}  // namespace trident
