#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cpnav {

// Order fixes the classifier's output index for each command.
enum class FlightCommand : int {
    MoveForward = 0,
    MoveRight = 1,
    MoveLeft = 2,
    SpinRight = 3,
    SpinLeft = 4,
    Stop = 5,
};

inline constexpr int kNumCommands = 6;

inline constexpr std::array<FlightCommand, kNumCommands> kAllCommands = {
    FlightCommand::MoveForward, FlightCommand::MoveRight, FlightCommand::MoveLeft,
    FlightCommand::SpinRight,   FlightCommand::SpinLeft,  FlightCommand::Stop};

constexpr int to_index(FlightCommand c) noexcept { return static_cast<int>(c); }

FlightCommand command_from_index(int index);

// snake_case identifier used in files and on the wire ("move_forward").
std::string_view command_name(FlightCommand c) noexcept;

// Human-readable label ("Move Forward").
std::string_view command_label(FlightCommand c) noexcept;

std::optional<FlightCommand> parse_command(std::string_view name) noexcept;

constexpr bool is_translation(FlightCommand c) noexcept {
    return c == FlightCommand::MoveForward || c == FlightCommand::MoveRight || c == FlightCommand::MoveLeft;
}

constexpr bool is_spin(FlightCommand c) noexcept {
    return c == FlightCommand::SpinRight || c == FlightCommand::SpinLeft;
}

}  // namespace cpnav
