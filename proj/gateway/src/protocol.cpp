#include "cpnav/gateway/protocol.hpp"

#include <algorithm>
#include <cctype>

#include <boost/beast/core/detail/base64.hpp>

#include "cpnav/error.hpp"
#include "cpnav/image.hpp"

namespace cpnav::gateway {

namespace b64 = boost::beast::detail::base64;

std::string base64_encode(std::string_view bytes) {
    std::string out(b64::encoded_size(bytes.size()), '\0');
    out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
    return out;
}

std::string base64_decode(std::string_view text) {
    // The decoder stops quietly at the first bad character, so check first.
    const auto body = text.substr(0, text.find_last_not_of('=') + 1);
    const bool ok = text.size() % 4 == 0 && text.size() - body.size() <= 2 &&
                    std::all_of(body.begin(), body.end(), [](char c) {
                        return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/';
                    });
    if (!ok) throw FormatError("invalid base64 payload");
    std::string out(b64::decoded_size(text.size()), '\0');
    out.resize(b64::decode(out.data(), text.data(), text.size()).first);
    return out;
}

std::string frame_payload(const Tensor& frame) { return base64_encode(encode_ppm(frame)); }

Tensor frame_from_payload(std::string_view payload) { return decode_ppm(base64_decode(payload)); }

Json pose_json(const Pose& pose) { return {{"x", pose.x}, {"y", pose.y}, {"heading_deg", pose.heading_deg}}; }

Json prediction_json(const Prediction& p) {
    return {{"command", command_name(p.command)}, {"confidence", p.confidence}, {"distribution", p.distribution}};
}

Json log_entry_json(const LogEntry& e) {
    return {{"step", e.step},
            {"pose", pose_json(e.pose)},
            {"command", command_name(e.command)},
            {"confidence", e.confidence},
            {"action", action_name(e.action)},
            {"source", e.source == CommandSource::Human ? "human" : "controller"}};
}

Json message(std::string_view type) { return {{"v", kProtocolVersion}, {"type", type}}; }

Json error_message(std::string_view text) {
    Json j = message("error");
    j["message"] = text;
    return j;
}

namespace {

FlightCommand command_field(const Json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw FormatError(std::string("missing \"") + key + "\" field");
    const std::string name = j[key].get<std::string>();
    const auto c = parse_command(name);
    if (!c) throw FormatError("unknown command \"" + name + "\"");
    return *c;
}

}  // namespace

Inbound parse_inbound(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("malformed message: ") + e.what());
    }
    if (!j.is_object()) throw FormatError("message must be a JSON object");
    if (!j.contains("v") || !j["v"].is_number_integer()) throw FormatError("message has no \"v\" field");
    if (j["v"].get<int>() != kProtocolVersion)
        throw FormatError("unsupported protocol version " + j["v"].dump());
    if (!j.contains("type") || !j["type"].is_string()) throw FormatError("message has no \"type\" field");

    const std::string type = j["type"].get<std::string>();
    Inbound in;
    if (type == "command") {
        in.type = InboundType::Command;
        in.command = command_field(j, "cmd");
    } else if (type == "override") {
        in.type = InboundType::Override;
        in.command = command_field(j, "cmd");
    } else if (type == "record") {
        in.type = InboundType::Record;
        if (!j.contains("on") || !j["on"].is_boolean()) throw FormatError("record needs a boolean \"on\"");
        in.on = j["on"].get<bool>();
    } else if (type == "reset") {
        in.type = InboundType::Reset;
    } else if (type == "pause") {
        in.type = InboundType::Pause;
    } else if (type == "resume") {
        in.type = InboundType::Resume;
    } else if (type == "step") {
        in.type = InboundType::Step;
    } else if (type == "abort") {
        in.type = InboundType::Abort;
    } else {
        throw FormatError("unknown message type \"" + type + "\"");
    }
    return in;
}

}  // namespace cpnav::gateway
