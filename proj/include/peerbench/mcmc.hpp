#pragma once

#include <cstddef>
#include <cstdint>

#include "peerbench/error.hpp"

namespace peerbench {

struct McmcSchedule {
  std::size_t iterations = 20000;  // total, including burn-in
  std::size_t burn_in = 5000;
  std::size_t thin = 5;
  std::uint64_t seed = 20240101;

  void validate() const {
    if (iterations <= burn_in) throw ConfigError("iterations must exceed burn-in");
    if (thin < 1) throw ConfigError("thin must be >= 1");
  }

  bool retains(std::size_t t) const noexcept { return t >= burn_in && (t - burn_in) % thin == 0; }
  std::size_t retained() const noexcept { return (iterations - burn_in + thin - 1) / thin; }
};

}  // namespace peerbench
