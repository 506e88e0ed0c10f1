#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cpnav/network.hpp"
#include "cpnav/world.hpp"

namespace cpnav::gateway {

inline constexpr std::string_view kWorldExtension = ".cpworld";
inline constexpr std::string_view kModelExtension = ".cpnv";

// Thrown for an unknown world, model or session id.
class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Worlds are <id>.cpworld files in one directory. Loaded plans are cached
/// and shared read-only between sessions.
class WorldRegistry {
public:
    explicit WorldRegistry(std::filesystem::path dir);

    std::vector<std::string> ids() const;
    std::shared_ptr<const FloorPlan> get(const std::string& id) const;

    // Generates and saves the world; the id is derived from the arguments,
    // so repeating a request returns the existing world.
    std::string create(std::uint64_t seed, Layout layout, int theme_id);
    static std::string make_id(std::uint64_t seed, Layout layout, int theme_id);

private:
    std::filesystem::path path_of(const std::string& id) const;

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::shared_ptr<const FloorPlan>> cache_;
};

struct ModelInfo {
    std::string id;
    std::size_t parameters = 0;
    std::vector<std::string> classes;
};

/// Checkpoints are <id>.cpnv files in one directory.
class ModelRegistry {
public:
    explicit ModelRegistry(std::filesystem::path dir);

    std::vector<ModelInfo> list() const;
    Network load(const std::string& id) const;

private:
    std::filesystem::path dir_;
};

// Ids are plain file stems: letters, digits, '_', '-' and '.', not starting with '.'.
bool valid_id(const std::string& id) noexcept;

}  // namespace cpnav::gateway
