#pragma once

#include <filesystem>
#include <string>

#include "cpnav/world.hpp"

namespace cpnav {

// Text world format:
//   CPWORLD v1 theme=<t> layout=<name> seed=<n>
//   <width> <height>
//   <height rows of width chars, row y=0 first; '.' free, '0'-'7' wall texture>
//   T <kind> <x> <y>        (one per target)
//   S <x> <y> <heading_deg>
// Reals are written with 17 significant digits so parsing is bit-exact.
std::string world_to_text(const FloorPlan& plan);
FloorPlan world_from_text(const std::string& text);

void save_world(const FloorPlan& plan, const std::filesystem::path& path);
FloorPlan load_world(const std::filesystem::path& path);

}  // namespace cpnav
