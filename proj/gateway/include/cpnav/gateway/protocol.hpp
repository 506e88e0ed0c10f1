#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "cpnav/controller.hpp"
#include "cpnav/tensor.hpp"
#include "cpnav/world.hpp"

namespace cpnav::gateway {

using Json = nlohmann::ordered_json;

// Every message in either direction carries {"v": kProtocolVersion}.
inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Base64 of the binary PPM of the frame.
std::string frame_payload(const Tensor& frame);
Tensor frame_from_payload(std::string_view payload);

Json pose_json(const Pose& pose);
Json prediction_json(const Prediction& prediction);
Json log_entry_json(const LogEntry& entry);

Json message(std::string_view type);  // {"v":1,"type":type}
Json error_message(std::string_view text);

enum class InboundType { Command, Record, Reset, Override, Pause, Resume, Step, Abort };

struct Inbound {
    InboundType type = InboundType::Command;
    std::optional<FlightCommand> command;  // command / override
    bool on = false;                       // record
};

// Throws FormatError on malformed JSON, a missing or unsupported "v", an
// unknown type or an unknown command name.
Inbound parse_inbound(std::string_view text);

}  // namespace cpnav::gateway
