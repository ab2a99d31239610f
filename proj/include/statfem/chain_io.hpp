#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "statfem/samplers.hpp"

namespace statfem {

inline constexpr std::uint32_t kChainFileVersion = 1;
inline constexpr std::uint32_t kDtypeFloat64 = 1;

struct ChainFileData {
  ChainRecord record;
  nlohmann::json metadata;
};

/// Layout (little-endian): "SFEM" | version u32 | K u64 | d u64 | dtype u32 |
/// K*d f64 row-major payload | JSON metadata text to EOF. The metadata gets
/// the chain diagnostics (acceptance, stepsize trace, theta keys, wall clock)
/// merged in on write.
void write_chain(const std::filesystem::path& path, const ChainRecord& record,
                 nlohmann::json metadata = nlohmann::json::object());

/// Throws on magic/version/dtype mismatch, truncation, or unparseable
/// metadata — never returns partial data.
ChainFileData read_chain(const std::filesystem::path& path);

}  // namespace statfem
