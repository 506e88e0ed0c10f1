#include "cpnav/gateway/registry.hpp"

#include <algorithm>

#include "cpnav/checkpoint.hpp"
#include "cpnav/error.hpp"
#include "cpnav/world_io.hpp"

namespace fs = std::filesystem;

namespace cpnav::gateway {

namespace {

std::vector<std::string> stems_with(const fs::path& dir, std::string_view ext) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

void require_dir(const fs::path& dir, const char* what) {
    if (!fs::is_directory(dir)) throw IoError(std::string(what) + " directory " + dir.string() + " does not exist");
}

}  // namespace

bool valid_id(const std::string& id) noexcept {
    if (id.empty() || id.size() > 128 || id.front() == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               c == '.';
    });
}

WorldRegistry::WorldRegistry(fs::path dir) : dir_(std::move(dir)) { require_dir(dir_, "worlds"); }

std::vector<std::string> WorldRegistry::ids() const {
    std::lock_guard lock(mu_);
    return stems_with(dir_, kWorldExtension);
}

fs::path WorldRegistry::path_of(const std::string& id) const {
    if (!valid_id(id)) throw NotFound("no world \"" + id + "\"");
    return dir_ / (id + std::string(kWorldExtension));
}

std::shared_ptr<const FloorPlan> WorldRegistry::get(const std::string& id) const {
    const fs::path p = path_of(id);
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(id); it != cache_.end()) return it->second;
    if (!fs::exists(p)) throw NotFound("no world \"" + id + "\"");
    auto plan = std::make_shared<const FloorPlan>(load_world(p));
    cache_.emplace(id, plan);
    return plan;
}

std::string WorldRegistry::make_id(std::uint64_t seed, Layout layout, int theme_id) {
    return std::string(layout_name(layout)) + "-t" + std::to_string(theme_id) + "-s" + std::to_string(seed);
}

std::string WorldRegistry::create(std::uint64_t seed, Layout layout, int theme_id) {
    const std::string id = make_id(seed, layout, theme_id);
    const fs::path p = path_of(id);
    std::lock_guard lock(mu_);
    if (!fs::exists(p)) save_world(generate_world(seed, layout, theme_id), p);
    return id;
}

ModelRegistry::ModelRegistry(fs::path dir) : dir_(std::move(dir)) { require_dir(dir_, "models"); }

std::vector<ModelInfo> ModelRegistry::list() const {
    std::vector<ModelInfo> out;
    for (const std::string& id : stems_with(dir_, kModelExtension)) {
        try {
            const Network n = load(id);
            out.push_back({id, n.parameter_count(), n.class_names()});
        } catch (const FormatError&) {
            // unreadable checkpoints are not offered
        }
    }
    return out;
}

Network ModelRegistry::load(const std::string& id) const {
    if (!valid_id(id)) throw NotFound("no model \"" + id + "\"");
    const fs::path p = dir_ / (id + std::string(kModelExtension));
    if (!fs::exists(p)) throw NotFound("no model \"" + id + "\"");
    return load_checkpoint(p);
}

}  // namespace cpnav::gateway
