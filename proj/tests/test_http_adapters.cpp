#include <adkit/http_adapters.hpp>

#include <thread>

#include <catch2/catch_amalgamated.hpp>

using namespace adkit;

namespace {

/// Minimal in-process service covering both live protocols.
class LocalService {
public:
    LocalService() {
        server_.Post("/v1/complete", [](const httplib::Request& req,
                                        httplib::Response& res) {
            json body = json::parse(req.body);
            std::string prompt = body.at("prompt").get<std::string>();
            if (prompt.find("forbidden") != std::string::npos) {
                res.set_content(json{{"content_filtered", true}}.dump(),
                                "application/json");
                return;
            }
            res.set_content(json{{"text", "echo: " + prompt}}.dump(),
                            "application/json");
        });
        server_.Post("/observe", [](const httplib::Request& req,
                                    httplib::Response& res) {
            json body = json::parse(req.body);
            std::string frame_id = body.at("frame_id").get<std::string>();
            if (frame_id == "missing") {
                res.status = 404;
                return;
            }
            res.set_content(json{{"embedding", {1.0, 0.0}},
                                 {"caption", "caption of " + frame_id},
                                 {"person_count", 1}}
                                .dump(),
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~LocalService() {
        server_.stop();
        thread_.join();
    }

    std::string host() const {
        return "http://127.0.0.1:" + std::to_string(port_);
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("http chat backend speaks the documented protocol") {
    LocalService service;
    llm::HttpChatBackend::Settings settings;
    settings.host = service.host();
    llm::HttpChatBackend backend(settings);

    llm::ChatRequest req;
    req.prompt = "hello";
    llm::ChatOutcome outcome = backend.complete(req);
    REQUIRE(outcome.is_text());
    CHECK(outcome.payload == "echo: hello");

    req.prompt = "forbidden words";
    CHECK(backend.complete(req).is_filtered());

    llm::HttpChatBackend::Settings dead = settings;
    dead.host = "http://127.0.0.1:1";
    dead.timeout_seconds = 1;
    llm::HttpChatBackend unreachable(dead);
    CHECK(unreachable.complete(req).is_error());
}

TEST_CASE("http experts resolve frames or fail loudly") {
    LocalService service;
    perception::HttpExperts experts(service.host());

    perception::FrameObservation obs = experts.observe("f42");
    CHECK(obs.frame_id == "f42");
    CHECK(obs.caption == "caption of f42");
    CHECK(obs.embedding == std::vector<float>{1.0f, 0.0f});
    CHECK(obs.person_count == 1);

    CHECK_THROWS_AS(experts.observe("missing"), perception::PerceptionError);
}
