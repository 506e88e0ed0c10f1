// Kills a live `cpnav serve` mid-recording and checks what it left on disk.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <map>
#include <thread>

#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "cpnav/dataset.hpp"
#include "cpnav/image.hpp"
#include "support/gateway_client.hpp"

using namespace cpnav;
namespace fs = std::filesystem;
using cpnav::fixtures::http_post;
using cpnav::fixtures::Json;
using cpnav::fixtures::WsClient;
using namespace std::chrono_literals;

namespace {

struct Child {
    pid_t pid = -1;
    unsigned short port = 0;
};

// Starts the server on an ephemeral port and reads the port back from its
// "listening on HOST:PORT" line.
Child spawn_server(const fs::path& root) {
    int out[2];
    if (::pipe(out) != 0) throw std::runtime_error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
        ::dup2(out[1], STDOUT_FILENO);
        ::close(out[0]);
        ::close(out[1]);
        const std::string worlds = (root / "worlds").string(), models = (root / "models").string(),
                          dataset = (root / "dataset").string();
        ::execl(CPNAV_CLI, CPNAV_CLI, "serve", "--port", "0", "--worlds", worlds.c_str(), "--models",
                models.c_str(), "--dataset", dataset.c_str(), "--step-interval-ms", "0", static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(out[1]);
    std::string line;
    pollfd p{out[0], POLLIN, 0};
    char ch = 0;
    while (line.find('\n') == std::string::npos) {
        if (::poll(&p, 1, 10000) <= 0 || ::read(out[0], &ch, 1) != 1) break;
        line += ch;
    }
    ::close(out[0]);
    const auto colon = line.rfind(':');
    if (line.rfind("listening on ", 0) != 0 || colon == std::string::npos) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
        throw std::runtime_error("server did not start: \"" + line + "\"");
    }
    return {pid, static_cast<unsigned short>(std::stoi(line.substr(colon + 1)))};
}

void check_dataset(const fs::path& dir) {
    const Manifest m = load_manifest(dir);
    std::map<std::int64_t, std::vector<int>> steps;
    for (const SampleRecord& s : m.samples) {
        ASSERT_EQ(s.source, SampleSource::Human);
        const Tensor img = read_ppm(dir / s.file);
        ASSERT_EQ(img.shape(), (Shape{3, 64, 64})) << s.file;
        steps[s.world_id].push_back(s.step_index);
    }
    for (const auto& [world, idx] : steps)
        for (std::size_t i = 0; i < idx.size(); ++i) ASSERT_EQ(idx[i], static_cast<int>(i)) << "world " << world;
}

}  // namespace

TEST(GatewayCrash, KilledMidRecordingLeavesConsistentDataset) {
    std::signal(SIGPIPE, SIG_IGN);
    const fs::path root = fs::path(::testing::TempDir()) / ("cpnav_crash_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root / "worlds");
    fs::create_directories(root / "models");

    std::size_t before = 0;
    for (int delay_ms : {30, 120, 300, 700}) {
        const Child c = spawn_server(root);
        const auto w = http_post(c.port, "/worlds", {{"seed", 4}, {"layout", "loop"}, {"theme", 1}});
        ASSERT_TRUE(w.status == 201 || w.status == 200) << w.body.dump();
        const auto s = http_post(c.port, "/sessions",
                                 {{"mode", "teleop"}, {"world_id", w.body["id"]}, {"record", true}});
        ASSERT_EQ(s.status, 201) << s.body.dump();

        std::atomic<bool> stop{false};
        std::thread blaster([&, port = c.port, path = s.body["ws"].get<std::string>()] {
            try {
                WsClient ws(port, path);
                for (int i = 0; !stop; ++i)
                    ws.send({{"v", 1}, {"type", "command"}, {"cmd", i % 3 ? "spin_left" : "spin_right"}});
            } catch (const std::exception&) {
                // the server vanished under us
            }
        });
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        ::kill(c.pid, SIGKILL);
        int status = 0;
        ::waitpid(c.pid, &status, 0);
        stop = true;
        blaster.join();
        ASSERT_TRUE(WIFSIGNALED(status));

        SCOPED_TRACE("killed after " + std::to_string(delay_ms) + " ms");
        check_dataset(root / "dataset");
        const std::size_t now = load_manifest(root / "dataset").samples.size();
        EXPECT_GE(now, before);
        before = now;
    }
    EXPECT_GT(before, 0u);

    // the lock died with the process; a new writer can take over and append
    ManifestWriter writer(root / "dataset");
    ManifestWriter::PendingSample p;
    p.record.label = FlightCommand::Stop;
    p.record.source = SampleSource::Human;
    p.record.world_id = writer.reserve_world_id();
    p.image = Tensor({3, 64, 64});
    writer.append({p});
    EXPECT_EQ(load_manifest(root / "dataset").samples.size(), before + 1);
    fs::remove_all(root);
}
