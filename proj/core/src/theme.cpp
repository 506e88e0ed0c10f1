#include "cpnav/theme.hpp"

#include <cmath>
#include <string>

#include "cpnav/error.hpp"
#include "cpnav/world.hpp"

namespace cpnav {

namespace {

// Seven locations; theme 3 is the glass-wall hallway with dim lighting.
const std::array<Theme, kNumThemes> kThemes = {{
    {"bright_corridor", {0.86f, 0.84f, 0.76f}, {0.45f, 0.32f, 0.20f}, {0.62f, 0.62f, 0.60f}, {0.50f, 0.50f, 0.49f},
     {0.95f, 0.95f, 0.92f}, 1.00f, kTexPainted, -1, kTexDoor},
    {"corner_hall", {0.70f, 0.74f, 0.80f}, {0.30f, 0.34f, 0.42f}, {0.55f, 0.40f, 0.26f}, {0.47f, 0.33f, 0.21f},
     {0.88f, 0.88f, 0.90f}, 0.90f, kTexPanel, -1, kTexDoor},
    {"narrow_hall", {0.72f, 0.46f, 0.36f}, {0.82f, 0.78f, 0.70f}, {0.40f, 0.40f, 0.42f}, {0.34f, 0.34f, 0.36f},
     {0.80f, 0.78f, 0.74f}, 0.85f, kTexBrick, -1, -1},
    {"glass_hall", {0.78f, 0.78f, 0.74f}, {0.55f, 0.70f, 0.78f}, {0.48f, 0.46f, 0.44f}, {0.40f, 0.38f, 0.37f},
     {0.70f, 0.70f, 0.72f}, 0.45f, kTexPainted, kTexGlass, kTexDoor},
    {"office", {0.88f, 0.86f, 0.80f}, {0.42f, 0.26f, 0.16f}, {0.36f, 0.42f, 0.50f}, {0.31f, 0.36f, 0.44f},
     {0.92f, 0.92f, 0.92f}, 0.95f, kTexWainscot, -1, kTexDoor},
    {"lobby", {0.80f, 0.80f, 0.82f}, {0.60f, 0.62f, 0.66f}, {0.75f, 0.72f, 0.64f}, {0.64f, 0.61f, 0.54f},
     {0.96f, 0.96f, 0.94f}, 1.00f, kTexTile, -1, kTexStripes},
    {"lab", {0.74f, 0.80f, 0.72f}, {0.20f, 0.36f, 0.30f}, {0.58f, 0.58f, 0.56f}, {0.66f, 0.66f, 0.64f},
     {0.86f, 0.90f, 0.86f}, 0.80f, kTexStripes, -1, kTexPanel},
}};

Rgb scale(const Rgb& c, float s) { return {c[0] * s, c[1] * s, c[2] * s}; }

double frac(double x) { return x - std::floor(x); }

}  // namespace

const Theme& theme(int id) {
    if (id < 0 || id >= kNumThemes) throw DomainError("theme id " + std::to_string(id) + " out of range 0..6");
    return kThemes[static_cast<std::size_t>(id)];
}

Rgb wall_texel(const Theme& th, int texture, double u, double v) {
    // baseboard
    if (v < 0.05 && texture != kTexGlass) return scale(th.wall_alt, 0.6f);
    switch (texture) {
        case kTexPainted:
            return th.wall;
        case kTexPanel:
            return (u < 0.05 || u > 0.95) ? scale(th.wall_alt, 0.9f) : th.wall;
        case kTexBrick: {
            const double rows = v * 14.0;
            const double shift = (static_cast<int>(rows) % 2) * 0.5;
            if (frac(rows) < 0.14 || frac(u * 2.0 + shift) < 0.07) return th.wall_alt;
            return th.wall;
        }
        case kTexGlass:
            if (u < 0.06 || v < 0.08 || v > 0.92) return {0.25f, 0.27f, 0.30f};
            return {th.wall_alt[0] * 0.9f, th.wall_alt[1], th.wall_alt[2] * 1.1f};
        case kTexDoor:
            if (u > 0.15 && u < 0.85 && v < 0.82) {
                if (u > 0.72 && u < 0.78 && v > 0.38 && v < 0.44) return {0.85f, 0.80f, 0.40f};
                return th.wall_alt;
            }
            return th.wall;
        case kTexWainscot:
            if (v < 0.40) return (v > 0.37) ? scale(th.wall_alt, 0.7f) : th.wall_alt;
            return th.wall;
        case kTexTile:
            return ((static_cast<int>(u * 4.0) + static_cast<int>(v * 10.0)) % 2 == 0) ? th.wall : th.wall_alt;
        case kTexStripes:
            if (v > 0.42 && v < 0.52) return th.wall_alt;
            return th.wall;
        default:
            throw DomainError("unknown wall texture id " + std::to_string(texture));
    }
}

}  // namespace cpnav
