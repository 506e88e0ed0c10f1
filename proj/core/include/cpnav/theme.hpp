#pragma once

#include <array>
#include <string_view>

namespace cpnav {

using Rgb = std::array<float, 3>;

// Wall texture ids stored in FloorPlan cells.
enum WallTexture : int {
    kTexPainted = 0,
    kTexPanel = 1,
    kTexBrick = 2,
    kTexGlass = 3,
    kTexDoor = 4,
    kTexWainscot = 5,
    kTexTile = 6,
    kTexStripes = 7,
};
inline constexpr int kNumWallTextures = 8;

/// Appearance of one location: palette, lighting and which textures the
/// generator paints onto walls. side_texture goes on every wall whose free
/// neighbour lies below it in the canonical frame (one side of the
/// corridor); accent_texture is sprinkled onto exposed wall cells.
struct Theme {
    std::string_view name;
    Rgb wall;       // base wall colour
    Rgb wall_alt;   // secondary colour used by patterned textures
    Rgb floor_a, floor_b;
    Rgb ceiling;
    float light = 1.0f;
    int primary_texture = kTexPainted;
    int side_texture = -1;
    int accent_texture = -1;
};

const Theme& theme(int id);  // throws DomainError outside [0, kNumThemes)

// Colour of `texture` at wall coordinates u (along the face) and v (height
// fraction, 0 = floor), both in [0, 1).
Rgb wall_texel(const Theme& theme, int texture, double u, double v);

}  // namespace cpnav
