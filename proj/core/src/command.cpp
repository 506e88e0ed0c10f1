#include "cpnav/command.hpp"

#include <string>

#include "cpnav/error.hpp"

namespace cpnav {

namespace {
constexpr std::array<std::string_view, kNumCommands> kNames = {"move_forward", "move_right", "move_left",
                                                              "spin_right",   "spin_left",  "stop"};
constexpr std::array<std::string_view, kNumCommands> kLabels = {"Move Forward", "Move Right", "Move Left",
                                                               "Spin Right",   "Spin Left",  "Stop"};
}  // namespace

FlightCommand command_from_index(int index) {
    if (index < 0 || index >= kNumCommands) throw DomainError("flight command index out of range: " + std::to_string(index));
    return static_cast<FlightCommand>(index);
}

std::string_view command_name(FlightCommand c) noexcept { return kNames[static_cast<std::size_t>(to_index(c))]; }

std::string_view command_label(FlightCommand c) noexcept { return kLabels[static_cast<std::size_t>(to_index(c))]; }

std::optional<FlightCommand> parse_command(std::string_view name) noexcept {
    for (int i = 0; i < kNumCommands; ++i)
        if (kNames[static_cast<std::size_t>(i)] == name || kLabels[static_cast<std::size_t>(i)] == name)
            return static_cast<FlightCommand>(i);
    return std::nullopt;
}

}  // namespace cpnav
