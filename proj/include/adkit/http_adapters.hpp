#pragma once

// Live-service backends for the expert and chat boundaries. Kept in their
// own header so fixture-only builds never pull in the HTTP client.

#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>

#include <httplib.h>

#include <adkit/llm_gateway.hpp>
#include <adkit/perception.hpp>

namespace adkit::llm {

/// Chat backend over HTTP: POSTs {prompt, temperature, max_output, tag} as
/// JSON and expects {"text": ...} or {"content_filtered": true}. Credentials
/// come from the environment and are never written into transcripts. A
/// counting semaphore caps in-flight requests for rate limiting.
class HttpChatBackend : public ChatBackend {
public:
    struct Settings {
        std::string host;  // e.g. "http://localhost:8089"
        std::string path = "/v1/complete";
        std::string api_key_env = "ADKIT_LLM_API_KEY";
        int max_in_flight = 4;
        int timeout_seconds = 120;
    };

    explicit HttpChatBackend(Settings settings)
        : settings_(std::move(settings)),
          in_flight_(settings_.max_in_flight > 0 ? settings_.max_in_flight : 1) {}

    ChatOutcome complete(const ChatRequest& request) override {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& sem;
            ~Release() { sem.release(); }
        } release{in_flight_};

        httplib::Client client(settings_.host);
        client.set_read_timeout(settings_.timeout_seconds, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(settings_.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        json body{{"prompt", request.prompt},
                  {"temperature", request.temperature},
                  {"max_output", request.max_output},
                  {"tag", to_string(request.tag)}};
        auto result = client.Post(settings_.path, headers, body.dump(),
                                  "application/json");
        if (!result) {
            return ChatOutcome::error("http transport failure: " +
                                      httplib::to_string(result.error()));
        }
        if (result->status != 200) {
            return ChatOutcome::error("http status " + std::to_string(result->status));
        }
        json doc = json::parse(result->body, nullptr, false);
        if (doc.is_discarded()) {
            return ChatOutcome::error("malformed response body");
        }
        if (doc.value("content_filtered", false)) {
            return ChatOutcome::filtered();
        }
        if (!doc.contains("text")) {
            return ChatOutcome::error("response missing text field");
        }
        return ChatOutcome::from_text(doc.at("text").get<std::string>());
    }

private:
    Settings settings_;
    std::counting_semaphore<> in_flight_;
};

}  // namespace adkit::llm

namespace adkit::perception {

/// Expert adapters over HTTP: POSTs {"frame_id"} to /observe and expects
/// {"embedding", "caption", "person_count"}.
class HttpExperts : public ExpertAdapters {
public:
    explicit HttpExperts(std::string host, std::string path = "/observe",
                         int timeout_seconds = 60)
        : host_(std::move(host)), path_(std::move(path)),
          timeout_seconds_(timeout_seconds) {}

    FrameObservation observe(const std::string& frame_id) override {
        httplib::Client client(host_);
        client.set_read_timeout(timeout_seconds_, 0);
        json body{{"frame_id", frame_id}};
        auto result = client.Post(path_, body.dump(), "application/json");
        if (!result || result->status != 200) {
            throw PerceptionError("expert service failed for frame " + frame_id +
                                  (result ? " (status " + std::to_string(result->status) + ")"
                                          : " (transport error)"));
        }
        json doc = json::parse(result->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("embedding")) {
            throw PerceptionError("malformed expert response for frame " + frame_id);
        }
        FrameObservation obs;
        obs.frame_id = frame_id;
        obs.embedding = doc.at("embedding").get<std::vector<float>>();
        obs.caption = doc.at("caption").get<std::string>();
        obs.person_count = doc.at("person_count").get<int>();
        return obs;
    }

private:
    std::string host_;
    std::string path_;
    int timeout_seconds_;
};

}  // namespace adkit::perception
