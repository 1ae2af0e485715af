#pragma once

// Plain-text map files.
//
//   vpmap <dx> <dy> <kind> <seed>
//   <dy rows of dx characters: # wall, . free, A agent, G goal,
//    N noop entity, D directional entity, E adversarial entity>
//   entity row=<r> col=<c> kind=<kind> eps=<epsilon> dir=<direction>
//
// One `entity` line per entity, in list order. Wall-block entities are
// drawn as '#' and recovered from their entity line.

#include <filesystem>
#include <string>
#include <string_view>

#include "vprop/envworld.hpp"

namespace vprop {

std::string format_map(const GridWorld& world);
GridWorld parse_map(std::string_view text);

void write_map(const std::filesystem::path& path, const GridWorld& world);
GridWorld read_map(const std::filesystem::path& path);

}  // namespace vprop
