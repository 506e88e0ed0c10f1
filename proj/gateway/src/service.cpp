#include "cpnav/gateway/service.hpp"

#include <limits>

#include "cpnav/error.hpp"
#include "cpnav/theme.hpp"

namespace cpnav::gateway {

#ifndef CPNAV_VERSION
#define CPNAV_VERSION "0.0.0"
#endif

std::string_view version() noexcept { return CPNAV_VERSION; }

namespace {

HttpReply json_reply(int status, const Json& j) { return {status, j.dump()}; }

HttpReply error_reply(int status, std::string_view text) {
    return json_reply(status, Json{{"error", text}, {"status", status}});
}

Json parse_body(std::string_view body) {
    if (body.empty()) return Json::object();
    try {
        Json j = Json::parse(body);
        if (!j.is_object()) throw FormatError("request body must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("malformed request body: ") + e.what());
    }
}

int theme_field(const Json& j) {
    if (!j.contains("theme")) throw FormatError("missing \"theme\"");
    const Json& t = j["theme"];
    if (t.is_number_integer()) {
        const int id = t.get<int>();
        if (id < 0 || id >= kNumThemes) throw DomainError("theme must be in [0, " + std::to_string(kNumThemes) + ")");
        return id;
    }
    if (t.is_string()) {
        const std::string name = t.get<std::string>();
        for (int i = 0; i < kNumThemes; ++i)
            if (theme(i).name == name) return i;
        throw DomainError("unknown theme \"" + name + "\"");
    }
    throw FormatError("\"theme\" must be an index or a name");
}

std::string string_field(const Json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw FormatError(std::string("missing string \"") + key + "\"");
    return j[key].get<std::string>();
}

template <class T>
T number_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw FormatError(std::string("\"") + key + "\" must be a number");
    return j[key].get<T>();
}

Json world_json(const std::string& id, const FloorPlan& p) {
    return {{"id", id},
            {"layout", layout_name(p.layout)},
            {"theme", p.theme},
            {"theme_name", theme(p.theme).name},
            {"seed", p.seed},
            {"width", p.width},
            {"height", p.height},
            {"targets", p.targets.size()}};
}

// Splits "/a/b?x" into {"a", "b"}.
std::vector<std::string> path_parts(std::string_view target) {
    target = target.substr(0, target.find('?'));
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < target.size()) {
        while (i < target.size() && target[i] == '/') ++i;
        const std::size_t j = target.find('/', i);
        const std::size_t end = j == std::string_view::npos ? target.size() : j;
        if (end > i) parts.emplace_back(target.substr(i, end - i));
        i = end;
    }
    return parts;
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)), worlds_(config_.worlds_dir), models_(config_.models_dir) {
    if (config_.queue_capacity == 0) throw DomainError("queue capacity must be positive");
    if (config_.step_interval.count() < 0) throw DomainError("step interval must be non-negative");
    if (!config_.dataset_dir.empty()) writer_ = std::make_unique<ManifestWriter>(config_.dataset_dir);
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
    std::map<std::string, std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mu_);
        sessions.swap(sessions_);
    }
    for (auto& [id, s] : sessions) s->shutdown();
}

std::shared_ptr<Session> Service::session(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<Subscriber> Service::make_subscriber() const {
    return std::make_shared<Subscriber>(config_.queue_capacity);
}

HttpReply Service::handle(std::string_view method, std::string_view target, std::string_view body) {
    const std::vector<std::string> p = path_parts(target);
    const auto route = [&](std::initializer_list<std::string_view> want) {
        if (p.size() != want.size()) return false;
        std::size_t i = 0;
        for (std::string_view w : want) {
            if (w != "*" && p[i] != w) return false;
            ++i;
        }
        return true;
    };
    const auto allow = [&](std::initializer_list<std::string_view> methods) {
        for (std::string_view m : methods)
            if (m == method) return true;
        return false;
    };

    try {
        if (route({"health"})) {
            if (!allow({"GET"})) return error_reply(405, "method not allowed");
            return json_reply(200, Json{{"status", "ok"}, {"version", version()}, {"v", kProtocolVersion}});
        }
        if (route({"worlds"})) {
            if (method == "GET") return list_worlds();
            if (method == "POST") return create_world(parse_body(body));
            return error_reply(405, "method not allowed");
        }
        if (route({"worlds", "*"})) {
            if (!allow({"GET"})) return error_reply(405, "method not allowed");
            return json_reply(200, world_json(p[1], *worlds_.get(p[1])));
        }
        if (route({"models"})) {
            if (!allow({"GET"})) return error_reply(405, "method not allowed");
            return list_models();
        }
        if (route({"sessions"})) {
            if (method == "GET") return list_sessions();
            if (method == "POST") return create_session(parse_body(body));
            return error_reply(405, "method not allowed");
        }
        if (route({"sessions", "*"})) {
            std::shared_ptr<Session> s = session(p[1]);
            if (!s) return error_reply(404, "no session \"" + p[1] + "\"");
            if (method == "GET") return json_reply(200, s->status());
            if (method == "DELETE") {
                {
                    std::lock_guard lock(mu_);
                    sessions_.erase(p[1]);
                }
                s->shutdown();
                return json_reply(200, Json{{"id", p[1]}, {"deleted", true}});
            }
            return error_reply(405, "method not allowed");
        }
        if (route({"dataset", "stats"})) {
            if (!allow({"GET"})) return error_reply(405, "method not allowed");
            return dataset_stats();
        }
        return error_reply(404, "no route for " + std::string(target));
    } catch (const NotFound& e) {
        return error_reply(404, e.what());
    } catch (const FormatError& e) {
        return error_reply(400, e.what());
    } catch (const DomainError& e) {
        return error_reply(400, e.what());
    } catch (const DimensionError& e) {
        return error_reply(400, e.what());
    } catch (const StateError& e) {
        return error_reply(409, e.what());
    } catch (const std::exception& e) {
        return error_reply(500, e.what());
    }
}

HttpReply Service::list_worlds() const {
    Json list = Json::array();
    for (const std::string& id : worlds_.ids()) {
        try {
            list.push_back(world_json(id, *worlds_.get(id)));
        } catch (const FormatError&) {
            // skip files that do not parse
        }
    }
    return json_reply(200, Json{{"worlds", list}});
}

HttpReply Service::create_world(const Json& body) {
    const auto layout = parse_layout(string_field(body, "layout"));
    if (!layout) throw DomainError("unknown layout \"" + body["layout"].get<std::string>() + "\"");
    if (!body.contains("seed") || !body["seed"].is_number_unsigned())
        throw FormatError("\"seed\" must be a non-negative integer");
    const std::string id = worlds_.create(body["seed"].get<std::uint64_t>(), *layout, theme_field(body));
    return json_reply(201, world_json(id, *worlds_.get(id)));
}

HttpReply Service::list_models() const {
    Json list = Json::array();
    for (const ModelInfo& m : models_.list())
        list.push_back({{"id", m.id}, {"parameters", m.parameters}, {"classes", m.classes}});
    return json_reply(200, Json{{"models", list}});
}

HttpReply Service::list_sessions() const {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    Json list = Json::array();
    for (const auto& s : all) list.push_back(s->status());
    return json_reply(200, Json{{"sessions", list}});
}

HttpReply Service::dataset_stats() const {
    if (!writer_) return error_reply(404, "recording is disabled: the service has no dataset directory");
    const Manifest m = writer_->snapshot();
    const ClassCountTable t = class_counts(m);
    Json counts = Json::object();
    for (int k = 0; k < kNumCommands; ++k) counts[std::string(command_name(command_from_index(k)))] = t.totals[static_cast<std::size_t>(k)];
    std::int64_t human = 0;
    for (const SampleRecord& r : m.samples) human += r.source == SampleSource::Human;
    return json_reply(200, Json{{"samples", m.samples.size()},
                                {"human_samples", human},
                                {"class_counts", counts},
                                {"table", t.format()}});
}

HttpReply Service::create_session(const Json& body) {
    const std::string mode = string_field(body, "mode");
    const std::string world_id = string_field(body, "world_id");
    std::shared_ptr<const FloorPlan> plan = worlds_.get(world_id);

    std::shared_ptr<Session> s;
    std::string id;
    {
        std::lock_guard lock(mu_);
        id = "s" + std::to_string(next_session_++);
    }
    if (mode == "teleop") {
        TeleopOptions o;
        o.record = body.value("record", false);
        s = std::make_shared<TeleopSession>(id, world_id, std::move(plan), writer_.get(), o);
    } else if (mode == "autonomous") {
        const std::string model_id = string_field(body, "model_id");
        Network net = models_.load(model_id);
        AutonomousOptions o;
        o.trial.threshold = number_or(body, "threshold", o.trial.threshold);
        o.trial.sensor_noise_seed = number_or<std::uint64_t>(body, "noise_seed", o.trial.sensor_noise_seed);
        o.trial.max_steps = number_or(body, "max_steps", o.trial.max_steps);
        o.trial.hover_stall = number_or(body, "hover_stall", o.trial.hover_stall);
        const auto interval = number_or<std::int64_t>(body, "step_interval_ms", config_.step_interval.count());
        if (interval < 0 || interval > 60000) throw DomainError("step_interval_ms must be in [0, 60000]");
        o.step_interval = std::chrono::milliseconds(interval);
        o.autostart = body.value("autostart", false);
        s = std::make_shared<AutonomousSession>(id, world_id, std::move(plan), model_id, std::move(net), o);
    } else {
        throw DomainError("mode must be \"teleop\" or \"autonomous\"");
    }
    {
        std::lock_guard lock(mu_);
        sessions_.emplace(id, s);
    }
    Json j = s->status();
    j["ws"] = "/ws/session/" + id;
    return json_reply(201, j);
}

}  // namespace cpnav::gateway
