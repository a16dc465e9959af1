#pragma once

// Deterministic stand-in for an OpenAI-compatible chat-completions server.
//
// Script format (JSON):
//   {
//     "api_key": "optional; when set, requests must send it as a Bearer token",
//     "latency_ms": 0,
//     "models": { "<model id>": { "error_rate": 0.2, "style": "direct|justify" } },
//     "gold": [ { "text": "...", "label": 0 }, ... ],
//     "rules": [ { "model": "*", "contains": "...", "times": 2, "status": 429,
//                  "retry_after": "0", "content": "...", "tokens": [...] } ]
//   }
//
// Answers are a pure function of (model, sample text): the mock finds the
// gold entry whose text occurs in the last user message and answers the
// gold label unless a hash of (model, text) falls under the model's
// error_rate. Rules are checked first, in order; a rule with "times" only
// fires for its first N matching requests.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "xspeech/error.hpp"
#include "xspeech/hashing.hpp"
#include "xspeech/labels.hpp"

namespace xspeech {

struct MockStats {
  long requests = 0;
  long max_in_flight = 0;
  std::map<std::string, long> per_model;
};

struct MockReply {
  int status = 200;
  std::string body;
  std::optional<std::string> retry_after;
};

class MockLlm {
 public:
  explicit MockLlm(nlohmann::json script) : script_(std::move(script)) {
    if (script_.contains("rules")) rule_hits_.assign(script_["rules"].size(), 0);
    if (script_.contains("gold")) {
      for (const auto& g : script_["gold"]) {
        gold_.emplace_back(g.at("text").get<std::string>(), g.at("label").get<int>());
      }
    }
  }

  /// Handles one request body. Thread-safe.
  MockReply handle(const std::string& body, const std::string& authorization) {
    const int now = ++in_flight_;
    {
      std::lock_guard lock(mutex_);
      stats_.max_in_flight = std::max<long>(stats_.max_in_flight, now);
      ++stats_.requests;
    }
    if (auto latency = script_.value("latency_ms", 0); latency > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(latency));
    }
    MockReply reply = respond(body, authorization);
    --in_flight_;
    return reply;
  }

  MockStats stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
  }

  void reset_stats() {
    std::lock_guard lock(mutex_);
    stats_ = MockStats{};
  }

  static nlohmann::ordered_json stats_json(const MockStats& s) {
    nlohmann::ordered_json j;
    j["requests"] = s.requests;
    j["max_in_flight"] = s.max_in_flight;
    j["per_model"] = s.per_model;
    return j;
  }

 private:
  static MockReply error_reply(int status, const std::string& message) {
    nlohmann::ordered_json j{{"error", {{"message", message}, {"code", status}}}};
    return MockReply{status, j.dump(), std::nullopt};
  }

  static std::uint64_t hash64(const std::string& hex, std::size_t word) {
    return std::stoull(hex.substr(word * 16, 16), nullptr, 16);
  }

  static double unit(std::uint64_t v) { return static_cast<double>(v >> 11) * 0x1.0p-53; }

  MockReply respond(const std::string& body, const std::string& authorization) {
    nlohmann::json request;
    try {
      request = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error_reply(400, "request body is not JSON");
    }
    if (script_.contains("api_key")) {
      if (authorization != "Bearer " + script_["api_key"].get<std::string>()) {
        return error_reply(401, "invalid API key");
      }
    }
    if (!request.contains("model") || !request.contains("messages")) {
      return error_reply(400, "model and messages are required");
    }
    const auto model = request["model"].get<std::string>();
    {
      std::lock_guard lock(mutex_);
      ++stats_.per_model[model];
    }
    std::string user;
    for (const auto& m : request["messages"]) {
      if (m.value("role", "") == "user") user = m.value("content", "");
    }

    if (script_.contains("rules")) {
      const auto& rules = script_["rules"];
      for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto& rule = rules[i];
        const auto rule_model = rule.value("model", std::string("*"));
        if (rule_model != "*" && rule_model != model) continue;
        if (rule.contains("contains") && user.find(rule["contains"].get<std::string>()) == std::string::npos) continue;
        {
          std::lock_guard lock(mutex_);
          if (rule.contains("times") && rule_hits_[i] >= rule["times"].get<long>()) continue;
          ++rule_hits_[i];
        }
        const int status = rule.value("status", 200);
        if (status != 200) {
          auto reply = error_reply(status, rule.value("message", std::string("scripted failure")));
          if (rule.contains("retry_after")) reply.retry_after = rule["retry_after"].get<std::string>();
          return reply;
        }
        if (rule.contains("content")) return scripted_content(request, rule);
      }
    }

    if (!script_.contains("models") || !script_["models"].contains(model)) {
      return error_reply(404, "model '" + model + "' not found");
    }
    return synthetic(request, model, user);
  }

  MockReply scripted_content(const nlohmann::json& request, const nlohmann::json& rule) {
    const auto content = rule["content"].get<std::string>();
    nlohmann::ordered_json tokens = nlohmann::ordered_json::array();
    if (rule.contains("tokens")) {
      tokens = rule["tokens"];
    } else {
      tokens.push_back({{"token", content},
                        {"logprob", 0.0},
                        {"top_logprobs", nlohmann::ordered_json::array({{{"token", content}, {"logprob", 0.0}}})}});
    }
    return completion(request, content, tokens);
  }

  MockReply synthetic(const nlohmann::json& request, const std::string& model, const std::string& user) {
    const auto& cfg = script_["models"][model];
    std::optional<std::pair<std::string, int>> gold;
    for (const auto& g : gold_) {
      if (user.find(g.first) != std::string::npos && (!gold || g.first.size() > gold->first.size())) gold = g;
    }
    const std::string key = gold ? gold->first : user;
    const auto digest = sha256_hex(model + '\x1f' + key);
    const auto u1 = hash64(digest, 0), u2 = hash64(digest, 1), u3 = hash64(digest, 2), u4 = hash64(digest, 3);

    int predicted;
    if (gold) {
      predicted = gold->second;
      if (unit(u1) < cfg.value("error_rate", 0.0)) predicted = (gold->second + 1 + static_cast<int>(u2 & 1)) % 3;
    } else {
      predicted = static_cast<int>(u2 % 3);
    }
    std::array<double, 3> p{};
    p[predicted] = 0.55 + 0.4 * unit(u3);
    const double rest = 1.0 - p[predicted];
    p[(predicted + 1) % 3] = rest * (0.25 + 0.5 * unit(u4));
    p[(predicted + 2) % 3] = rest - p[(predicted + 1) % 3];

    std::string style = cfg.value("style", std::string{});
    if (style.empty()) style = request.value("max_tokens", 4) > 4 ? "justify" : "direct";

    const int top_k = request.value("logprobs", false) ? request.value("top_logprobs", 0) : 0;
    auto alternatives = [&](const std::string& prefix) {
      std::vector<std::pair<std::string, double>> alts;
      for (int c = 0; c < 3; ++c) alts.emplace_back(prefix + std::to_string(c), std::log(p[c]));
      std::stable_sort(alts.begin(), alts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      nlohmann::ordered_json out = nlohmann::ordered_json::array();
      for (int k = 0; k < std::min<int>(top_k, 3); ++k) {
        out.push_back({{"token", alts[k].first}, {"logprob", alts[k].second}});
      }
      return out;
    };
    auto plain = [&](const std::string& tok) {
      nlohmann::ordered_json alts = nlohmann::ordered_json::array();
      if (top_k > 0) alts.push_back({{"token", tok}, {"logprob", 0.0}});
      return nlohmann::ordered_json{{"token", tok}, {"logprob", 0.0}, {"top_logprobs", alts}};
    };

    const std::string digit(1, static_cast<char>('0' + predicted));
    nlohmann::ordered_json tokens = nlohmann::ordered_json::array();
    std::string content;
    if (style == "justify") {
      static const std::vector<std::vector<std::string>> kReasons = {
          {"The", " text", " insults", " its", " target", " without", " calling", " for", " exclusion", "."},
          {"The", " text", " pushes", " to", " keep", " a", " group", " out", "."},
          {"The", " text", " could", " encourage", " violence", " against", " its", " target", "."}};
      for (const auto& tok : kReasons[predicted]) {
        tokens.push_back(plain(tok));
        content += tok;
      }
      for (const std::string tok : {"\n", "Label", ":"}) {
        tokens.push_back(plain(tok));
        content += tok;
      }
      tokens.push_back({{"token", " " + digit}, {"logprob", std::log(p[predicted])}, {"top_logprobs", alternatives(" ")}});
      content += " " + digit;
    } else {
      tokens.push_back({{"token", digit}, {"logprob", std::log(p[predicted])}, {"top_logprobs", alternatives("")}});
      content = digit;
    }
    return completion(request, content, tokens);
  }

  static MockReply completion(const nlohmann::json& request, const std::string& content,
                              const nlohmann::ordered_json& tokens) {
    nlohmann::ordered_json choice;
    choice["index"] = 0;
    choice["message"] = {{"role", "assistant"}, {"content", content}};
    if (request.value("logprobs", false)) {
      choice["logprobs"] = {{"content", tokens}};
    } else {
      choice["logprobs"] = nullptr;
    }
    choice["finish_reason"] = "stop";
    std::size_t prompt_chars = 0;
    for (const auto& m : request["messages"]) prompt_chars += m.value("content", "").size();
    nlohmann::ordered_json j;
    j["id"] = "mock-" + sha256_hex(request.dump()).substr(0, 12);
    j["object"] = "chat.completion";
    j["model"] = request["model"];
    j["choices"] = nlohmann::ordered_json::array({choice});
    j["usage"] = {{"prompt_tokens", prompt_chars / 4},
                  {"completion_tokens", tokens.size()},
                  {"total_tokens", prompt_chars / 4 + tokens.size()}};
    return MockReply{200, j.dump(), std::nullopt};
  }

  nlohmann::json script_;
  std::vector<std::pair<std::string, int>> gold_;
  mutable std::mutex mutex_;
  MockStats stats_;
  std::vector<long> rule_hits_;
  std::atomic<int> in_flight_{0};
};

/// HTTP front end for MockLlm: POST /v1/chat/completions, GET /stats,
/// POST /reset.
class MockLlmServer {
 public:
  explicit MockLlmServer(nlohmann::json script) : mock_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto reply = mock_.handle(req.body, req.get_header_value("Authorization"));
      res.status = reply.status;
      if (reply.retry_after) res.set_header("Retry-After", *reply.retry_after);
      res.set_content(reply.body, "application/json");
    });
    server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(MockLlm::stats_json(mock_.stats()).dump(), "application/json");
    });
    server_.Post("/reset", [this](const httplib::Request&, httplib::Response& res) {
      mock_.reset_stats();
      res.set_content("{}", "application/json");
    });
  }

  ~MockLlmServer() { stop(); }

  MockLlmServer(const MockLlmServer&) = delete;
  MockLlmServer& operator=(const MockLlmServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("mock server cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void serve(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error("mock server cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  MockLlm& mock() { return mock_; }

 private:
  MockLlm mock_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace xspeech
