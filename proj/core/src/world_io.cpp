#include "cpnav/world_io.hpp"

#include <cstdio>
#include <sstream>

#include "cpnav/checkpoint.hpp"
#include "cpnav/error.hpp"

namespace cpnav {

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_real(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw FormatError("bad number '" + s + "' in world file");
    }
    if (used != s.size()) throw FormatError("bad number '" + s + "' in world file");
    return v;
}

std::string after_prefix(const std::string& token, const std::string& prefix) {
    if (token.rfind(prefix, 0) != 0) throw FormatError("expected '" + prefix + "...' in world header");
    return token.substr(prefix.size());
}

}  // namespace

std::string world_to_text(const FloorPlan& plan) {
    std::string out = "CPWORLD v1 theme=" + std::to_string(plan.theme) + " layout=" + std::string(layout_name(plan.layout)) +
                      " seed=" + std::to_string(plan.seed) + "\n";
    out += std::to_string(plan.width) + " " + std::to_string(plan.height) + "\n";
    for (int y = 0; y < plan.height; ++y) {
        for (int x = 0; x < plan.width; ++x) {
            const int c = plan.cell(x, y);
            out += c == kFreeCell ? '.' : static_cast<char>('0' + c);
        }
        out += '\n';
    }
    for (const TargetSpec& t : plan.targets)
        out += "T " + std::string(target_kind_name(t.kind)) + " " + fmt_real(t.x) + " " + fmt_real(t.y) + "\n";
    out += "S " + fmt_real(plan.spawn.x) + " " + fmt_real(plan.spawn.y) + " " + fmt_real(plan.spawn.heading_deg) + "\n";
    return out;
}

FloorPlan world_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty world file");
    std::istringstream head(line);
    std::string magic, version, th, lay, sd;
    head >> magic >> version >> th >> lay >> sd;
    if (magic != "CPWORLD" || version != "v1") throw FormatError("not a CPWORLD v1 file");

    FloorPlan plan;
    try {
        plan.theme = std::stoi(after_prefix(th, "theme="));
        plan.seed = std::stoull(after_prefix(sd, "seed="));
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception&) {
        throw FormatError("malformed world header");
    }
    auto layout = parse_layout(after_prefix(lay, "layout="));
    if (!layout) throw FormatError("unknown layout in world header");
    plan.layout = *layout;

    if (!std::getline(in, line)) throw FormatError("missing grid dimensions");
    std::istringstream dims(line);
    if (!(dims >> plan.width >> plan.height) || plan.width <= 0 || plan.height <= 0)
        throw FormatError("bad grid dimensions");
    plan.cells.reserve(static_cast<std::size_t>(plan.width) * plan.height);
    for (int y = 0; y < plan.height; ++y) {
        if (!std::getline(in, line) || static_cast<int>(line.size()) != plan.width)
            throw FormatError("grid row " + std::to_string(y) + " missing or wrong length");
        for (char ch : line) {
            if (ch == '.') plan.cells.push_back(static_cast<std::int8_t>(kFreeCell));
            else if (ch >= '0' && ch <= '9') plan.cells.push_back(static_cast<std::int8_t>(ch - '0'));
            else throw FormatError(std::string("bad cell code '") + ch + "'");
        }
    }
    bool have_spawn = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "T") {
            std::string kind, x, y;
            ls >> kind >> x >> y;
            auto k = parse_target_kind(kind);
            if (!k) throw FormatError("unknown target kind '" + kind + "'");
            plan.targets.push_back({*k, parse_real(x), parse_real(y)});
        } else if (tag == "S") {
            std::string x, y, h;
            ls >> x >> y >> h;
            plan.spawn = {parse_real(x), parse_real(y), parse_real(h)};
            have_spawn = true;
        } else {
            throw FormatError("unexpected line in world file: " + line);
        }
    }
    if (!have_spawn) throw FormatError("world file has no spawn line");
    return plan;
}

void save_world(const FloorPlan& plan, const std::filesystem::path& path) { write_file_atomic(path, world_to_text(plan)); }

FloorPlan load_world(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return world_from_text(std::string(bytes.begin(), bytes.end()));
}

}  // namespace cpnav
