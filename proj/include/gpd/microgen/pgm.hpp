#pragma once

#include <filesystem>

#include "gpd/microgen/inclusion.hpp"

namespace gpd::microgen {

/// Square binary PGM (P5 or P2). Gray levels at or above half the maximum
/// are inclusion. FormatError on anything else.
RVEImage read_pgm(const std::filesystem::path& path);

/// P5, inclusion white (255).
void write_pgm(const RVEImage& img, const std::filesystem::path& path);

}  // namespace gpd::microgen
