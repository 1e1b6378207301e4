#include <atomic>
#include <cstdlib>
#include <thread>
#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "gpvls/adapters/remote.hpp"
#include "gpvls/adapters/replay.hpp"
#include "gpvls/adapters/scripted.hpp"
#include "gpvls/adapters/toy.hpp"
#include "gpvls/core/checkpoint.hpp"
#include "gpvls/core/vision.hpp"
#include "gpvls/data/record.hpp"
#include "httplib.h"
#include "json.hpp"
#include "support/mock_server.hpp"

using namespace gpvls;
using namespace gpvls::adapters;

namespace {

using gpvls::test_support::MockServer;

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("gpvls_adapters_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string completion(const std::string& text) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                          {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}}
        .dump();
}

RemoteConfig remote_config(const std::string& url) {
    RemoteConfig c;
    c.name = "mock";
    c.base_url = url;
    c.model = "mock-model";
    c.api_key_env = "GPVLS_TEST_API_KEY";
    c.timeout_ms = 2000;
    return c;
}

constexpr const char* kSecret = "sk-test-0123456789abcdef";

core::ImageInput gradient_image(std::size_t size) {
    core::ImageInput img;
    img.id = "img";
    img.height = size;
    img.width = size;
    img.channels = 3;
    for (std::size_t i = 0; i < size * size * 3; ++i) img.pixels.push_back(static_cast<double>(i % 251) / 250.0);
    return img;
}

}  // namespace

TEST(Replay, ReturnsRecordedText) {
    const auto dir = temp_dir("replay");
    ReplayStore store(dir);
    Query q{"sys", "What is the surgical phase?", "a.ppm", 64, 0.0};
    store.record(q, "The surgical phase is preparation.");
    ReplayAdapter replay("r", dir);
    EXPECT_EQ(replay.query(q).text, "The surgical phase is preparation.");
    EXPECT_TRUE(replay.probe().ok);
    q.image_ref = "b.ppm";
    EXPECT_THROW(replay.query(q), ReplayMissError);
}

TEST(Replay, KeyCoversEveryReplyInput) {
    const Query base{"sys", "p", std::nullopt, 64, 0.0};
    Query other = base;
    other.max_tokens = 65;
    EXPECT_NE(query_key(base), query_key(other));
    other = base;
    other.image_ref = "";
    EXPECT_NE(query_key(base), query_key(other));
    EXPECT_EQ(query_key(base), query_key(Query{"sys", "p", std::nullopt, 64, 0.0}));
}

TEST(Replay, RecordingAdapterWritesReplayableStore) {
    const auto dir = temp_dir("recording");
    ConstantAdapter constant("c", "fixed");
    RecordingAdapter recording(constant, dir);
    const Query q{"", "hello", std::nullopt, 8, 0.0};
    EXPECT_EQ(recording.query(q).text, "fixed");
    EXPECT_EQ(ReplayAdapter("c", dir).query(q).text, "fixed");
}

TEST(Toy, DeterministicAcrossCalls) {
    const auto dir = temp_dir("toy");
    core::Checkpoint ckpt;
    ckpt.params = core::init_params(core::ModelConfig{}, 3);
    core::save_checkpoint(dir / "model.ckpt", ckpt);
    core::write_netpbm(dir / "frame.ppm", gradient_image(32));
    ToyAdapter toy("toy", dir / "model.ckpt", dir);
    ASSERT_TRUE(toy.probe().ok);
    const Query q{"", "What is the surgical phase?", "frame.ppm", 12, 0.0};
    const Reply a = toy.query(q);
    const Reply b = toy.query(q);
    EXPECT_EQ(a.text, b.text);
    EXPECT_LE(a.text.size(), 12u);
    ToyAdapter fresh("toy", dir / "model.ckpt", dir);
    EXPECT_EQ(fresh.query(q).text, a.text);
}

TEST(Toy, CorruptCheckpointProbesUnhealthy) {
    const auto dir = temp_dir("toy_corrupt");
    core::Checkpoint ckpt;
    ckpt.params = core::init_params(core::ModelConfig{}, 3);
    const std::string bytes = core::serialize_checkpoint(ckpt);
    data::write_file(dir / "model.ckpt", bytes.substr(0, bytes.size() / 2));
    ToyAdapter toy("toy", dir / "model.ckpt", dir);
    const Health h = toy.probe();
    EXPECT_FALSE(h.ok);
    EXPECT_EQ(h.failure, FailureKind::Load);
    EXPECT_THROW(toy.query(Query{"", "x", std::nullopt, 4, 0.0}), AdapterError);
}

TEST(Remote, CannedBodyBecomesReplyText) {
    setenv("GPVLS_TEST_API_KEY", kSecret, 1);
    std::string seen_auth, seen_body;
    MockServer mock([&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(completion("The surgical phase is preparation."), "application/json");
    });
    const auto dir = temp_dir("remote_img");
    core::write_netpbm(dir / "f.ppm", gradient_image(16));
    auto config = remote_config(mock.url());
    config.image_root = dir;
    RemoteAdapter remote(config);
    const Reply r = remote.query(Query{"Be brief.", "What is the surgical phase?", "f.ppm", 32, 0.0});
    EXPECT_EQ(r.text, "The surgical phase is preparation.");
    ASSERT_TRUE(r.token_usage);
    EXPECT_EQ(r.token_usage->completion_tokens, 3);
    EXPECT_EQ(seen_auth, std::string("Bearer ") + kSecret);
    const auto body = nlohmann::json::parse(seen_body);
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    const std::string url = body["messages"][1]["content"][1]["image_url"]["url"];
    EXPECT_EQ(url.rfind("data:image/x-portable-pixmap;base64,", 0), 0u);
}

TEST(Remote, RateLimitThenSuccessRetriesOnce) {
    std::atomic<int> hits{0};
    MockServer mock([&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        res.set_content(completion("ok"), "application/json");
    });
    RemoteAdapter remote(remote_config(mock.url()));
    int sleeps = 0;
    const Reply r = query_with_retry(remote, Query{"", "q", std::nullopt, 8, 0.0}, RetryPolicy{},
                                     [&](std::chrono::milliseconds) { ++sleeps; });
    EXPECT_EQ(r.text, "ok");
    EXPECT_EQ(hits.load(), 2);
    EXPECT_EQ(sleeps, 1);
}

TEST(Remote, StatusCodesMapToTypedErrors) {
    std::atomic<int> status{401};
    MockServer mock([&](const httplib::Request&, httplib::Response& res) {
        res.status = status.load();
        res.set_content("{}", "application/json");
    });
    RemoteAdapter remote(remote_config(mock.url()));
    const Query q{"", "q", std::nullopt, 8, 0.0};
    EXPECT_THROW(remote.query(q), AuthError);
    status = 429;
    EXPECT_THROW(remote.query(q), RateLimitError);
    status = 503;
    EXPECT_THROW(remote.query(q), ServerError);
    status = 200;  // "{}" has no choices
    try {
        remote.query(q);
        FAIL();
    } catch (const AdapterError& e) {
        EXPECT_EQ(e.kind(), FailureKind::BadResponse);
        EXPECT_FALSE(e.retryable());
    }
}

TEST(Remote, AuthErrorsAreNotRetried) {
    std::atomic<int> hits{0};
    MockServer mock([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
    });
    RemoteAdapter remote(remote_config(mock.url()));
    EXPECT_THROW(query_with_retry(remote, Query{"", "q", std::nullopt, 8, 0.0}, RetryPolicy{},
                                  [](std::chrono::milliseconds) {}),
                 AuthError);
    EXPECT_EQ(hits.load(), 1);
}

TEST(Remote, SecretNeverAppearsInErrors) {
    setenv("GPVLS_TEST_API_KEY", kSecret, 1);
    MockServer mock([&](const httplib::Request& req, httplib::Response& res) {
        res.status = 400;
        res.set_content("bad request from " + req.get_header_value("Authorization"), "text/plain");
    });
    RemoteAdapter remote(remote_config(mock.url()));
    try {
        remote.query(Query{"", "q", std::nullopt, 8, 0.0});
        FAIL();
    } catch (const AdapterError& e) {
        EXPECT_EQ(std::string(e.what()).find(kSecret), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("[redacted]"), std::string::npos);
    }
}

TEST(Remote, TimeoutIsTyped) {
    MockServer mock([&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(800));
        res.set_content(completion("late"), "application/json");
    });
    auto config = remote_config(mock.url());
    config.timeout_ms = 150;
    RemoteAdapter remote(config);
    EXPECT_THROW(remote.query(Query{"", "q", std::nullopt, 8, 0.0}), TimeoutError);
}

static int closed_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

TEST(Remote, ProbeReportsHealth) {
    MockServer mock([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(completion("OK"), "application/json");
    });
    EXPECT_TRUE(RemoteAdapter(remote_config(mock.url())).probe().ok);

    const int port = closed_port();
    auto config = remote_config("http://127.0.0.1:" + std::to_string(port));
    config.timeout_ms = 500;
    const Health h = RemoteAdapter(config).probe();
    EXPECT_FALSE(h.ok);
    EXPECT_EQ(h.failure, FailureKind::Connection);
}

TEST(Remote, ImageSizeCap) {
    const auto dir = temp_dir("remote_cap");
    core::write_netpbm(dir / "f.ppm", gradient_image(32));
    auto config = remote_config("http://127.0.0.1:9");
    config.image_root = dir;
    config.max_image_bytes = 100;
    RemoteAdapter remote(config);
    try {
        remote.request_body(Query{"", "q", "f.ppm", 8, 0.0});
        FAIL();
    } catch (const AdapterError& e) {
        EXPECT_EQ(e.kind(), FailureKind::Input);
    }
}
