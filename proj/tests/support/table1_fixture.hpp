#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cpnav/dataset.hpp"

#ifndef CPNAV_FIXTURE_DIR
#error "CPNAV_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace cpnav::fixtures {

// Expands the per-location class count fixture into a manifest with one
// record per image; location k becomes theme k.
inline Manifest table1_manifest() {
    std::ifstream in(std::string(CPNAV_FIXTURE_DIR) + "/table1_counts.csv");
    if (!in) throw std::runtime_error("table1_counts.csv not found");
    Manifest m;
    std::string line;
    std::getline(in, line);  // header
    std::int64_t id = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string name, cell;
        std::getline(row, name, ',');
        const auto label = parse_command(name);
        if (!label) throw std::runtime_error("bad fixture label " + name);
        for (int loc = 0; std::getline(row, cell, ','); ++loc) {
            const long n = std::stol(cell);
            for (long i = 0; i < n; ++i) {
                SampleRecord r;
                r.id = id++;
                r.file = "fixture";
                r.label = *label;
                r.world_id = loc;
                r.theme = loc;
                m.samples.push_back(std::move(r));
            }
        }
    }
    return m;
}

}  // namespace cpnav::fixtures
