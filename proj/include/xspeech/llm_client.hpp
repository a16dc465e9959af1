#pragma once

// Chat-completion client for OpenAI-compatible endpoints: retries with
// backoff, a file-per-request response cache, and bounded batch execution.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "xspeech/corpus.hpp"
#include "xspeech/error.hpp"
#include "xspeech/hashing.hpp"
#include "xspeech/log.hpp"
#include "xspeech/logprobs.hpp"
#include "xspeech/probability.hpp"
#include "xspeech/promptkit.hpp"
#include "xspeech/records.hpp"

namespace xspeech {

inline constexpr const char* kApiKeyEnv = "XSPEECH_API_KEY";

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 4;
  bool logprobs = true;
  int top_logprobs = 20;

  friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

/// Decoding defaults per style: room for a justification, or just the digit.
inline DecodingParams default_params(PromptStyle style) {
  DecodingParams p;
  p.max_tokens = style == PromptStyle::JustifyThenLabel ? 256 : 4;
  return p;
}

struct ModelEndpoint {
  std::string model_id;
  std::string base_url;
  /// Bearer token; empty means resolve from XSPEECH_API_KEY.
  std::string api_key;
  DecodingParams params;
  std::chrono::seconds timeout{120};

  void validate(bool need_distributions) const {
    if (model_id.empty()) throw DataError("endpoint has no model id");
    if (base_url.empty()) throw DataError("endpoint for " + model_id + " has no base URL");
    if (need_distributions && (!params.logprobs || params.top_logprobs < 3)) {
      throw DataError("class distributions need logprobs with top_logprobs >= 3");
    }
  }

  std::string resolved_api_key() const {
    if (!api_key.empty()) return api_key;
    const char* env = std::getenv(kApiKeyEnv);
    return env ? std::string(env) : std::string{};
  }
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;

  friend bool operator==(const Usage&, const Usage&) = default;
};

struct RawResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  Usage usage;
  std::string fingerprint;
  /// Upstream attempts spent producing this value; 0 for cache hits. Not
  /// persisted.
  int attempts = 0;

  bool same_content(const RawResponse& o) const {
    return text == o.text && token_logprobs == o.token_logprobs && usage == o.usage && fingerprint == o.fingerprint;
  }
};

/// Non-retryable HTTP failure (4xx other than 429).
class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, std::string body)
      : Error("HTTP " + std::to_string(status) + ": " + body), status_(status), body_(std::move(body)) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

/// Retries exhausted on transient failures.
class TransportError : public Error {
 public:
  TransportError(int attempts, const std::string& last)
      : Error("giving up after " + std::to_string(attempts) + " attempt(s): " + last), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Successful HTTP exchange, or a connection-level failure when status == 0.
struct HttpResult {
  int status = 0;
  std::string body;
  std::optional<double> retry_after_seconds;
  std::string transport_error;
};

/// Minimal POST interface so tests can substitute the network.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& base_url, const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& headers, const std::string& body,
                          std::chrono::seconds timeout) = 0;
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline ParsedUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw DataError("base URL needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = base_url.substr(0, path_start);
  if (path_start != std::string::npos) out.path_prefix = base_url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

inline std::optional<double> parse_retry_after(const std::string& value) {
  if (value.empty()) return std::nullopt;
  char* end = nullptr;
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return seconds;
}

class HttplibTransport : public HttpTransport {
 public:
  HttpResult post(const std::string& base_url, const std::string& path,
                  const std::vector<std::pair<std::string, std::string>>& headers, const std::string& body,
                  std::chrono::seconds timeout) override {
    const auto url = split_base_url(base_url);
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(url.path_prefix + path, h, body, "application/json");
    HttpResult out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) out.retry_after_seconds = parse_retry_after(res->get_header_value("Retry-After"));
    return out;
  }
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  std::chrono::milliseconds max_delay{60000};
  bool jitter = true;

  /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped,
  /// scaled into [0.5, 1.0) when jittered. Retry-After replaces the backoff.
  std::chrono::milliseconds delay(int retry, std::optional<double> retry_after, double jitter_unit) const {
    double ms;
    if (retry_after) {
      ms = *retry_after * 1000.0;
    } else {
      ms = static_cast<double>(base_delay.count()) * std::ldexp(1.0, std::min(retry - 1, 30));
      if (jitter) ms *= 0.5 + 0.5 * jitter_unit;
    }
    ms = std::min(ms, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<long long>(ms));
  }
};

inline bool is_transient_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

/// Canonical request body. Field order is fixed so the fingerprint is
/// stable.
inline nlohmann::ordered_json request_body(const std::string& model_id, const std::vector<Message>& messages,
                                           const DecodingParams& params) {
  nlohmann::ordered_json body;
  body["model"] = model_id;
  body["messages"] = to_json(messages);
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;
  body["logprobs"] = params.logprobs;
  if (params.logprobs) body["top_logprobs"] = params.top_logprobs;
  return body;
}

/// SHA-256 of the canonical request body; covers model, messages and every
/// decoding parameter.
inline std::string request_fingerprint(const std::string& model_id, const std::vector<Message>& messages,
                                       const DecodingParams& params) {
  return sha256_hex(request_body(model_id, messages, params).dump());
}

/// Reads choices[0].message.content and choices[0].logprobs.content.
inline RawResponse parse_completion_body(const std::string& body) {
  RawResponse out;
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
    if (choice.contains("logprobs") && !choice["logprobs"].is_null() && choice["logprobs"].contains("content") &&
        !choice["logprobs"]["content"].is_null()) {
      std::vector<TokenLogprob> tokens;
      for (const auto& t : choice["logprobs"]["content"]) {
        TokenLogprob tl;
        tl.token = t.at("token").get<std::string>();
        tl.logprob = t.at("logprob").get<double>();
        if (t.contains("top_logprobs")) {
          for (const auto& alt : t["top_logprobs"]) {
            tl.alternatives.emplace_back(alt.at("token").get<std::string>(), alt.at("logprob").get<double>());
          }
        }
        std::stable_sort(tl.alternatives.begin(), tl.alternatives.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        tokens.push_back(std::move(tl));
      }
      out.token_logprobs = std::move(tokens);
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
      out.usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed completion response: ") + e.what());
  }
  return out;
}

class LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit LlmClient(std::shared_ptr<HttpTransport> transport = std::make_shared<HttplibTransport>(),
                     RetryPolicy policy = {})
      : transport_(std::move(transport)), policy_(policy), sleep_([](auto d) { std::this_thread::sleep_for(d); }) {}

  void set_sleeper(Sleeper sleeper) { sleep_ = std::move(sleeper); }
  const RetryPolicy& policy() const { return policy_; }

  /// One chat completion. 429/5xx and connection failures are retried;
  /// other statuses fail at once.
  RawResponse complete(const ModelEndpoint& endpoint, const std::vector<Message>& messages) {
    const auto body = request_body(endpoint.model_id, messages, endpoint.params).dump();
    std::vector<std::pair<std::string, std::string>> headers;
    if (auto key = endpoint.resolved_api_key(); !key.empty()) headers.emplace_back("Authorization", "Bearer " + key);

    std::string last_error;
    for (int attempt = 1;; ++attempt) {
      const auto result = transport_->post(endpoint.base_url, "/v1/chat/completions", headers, body, endpoint.timeout);
      if (result.status == 200) {
        auto response = parse_completion_body(result.body);
        response.fingerprint = sha256_hex(body);
        response.attempts = attempt;
        return response;
      }
      if (result.status != 0 && !is_transient_status(result.status)) {
        throw HttpStatusError(result.status, result.body);
      }
      last_error = result.status == 0 ? result.transport_error : "HTTP " + std::to_string(result.status);
      if (attempt >= policy_.max_attempts) throw TransportError(attempt, last_error);
      const auto wait = policy_.delay(attempt, result.retry_after_seconds, jitter_unit());
      log().debug("{}: {} on attempt {}, retrying in {} ms", endpoint.model_id, last_error, attempt, wait.count());
      sleep_(wait);
    }
  }

 private:
  double jitter_unit() {
    std::lock_guard lock(rng_mutex_);
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  }

  std::shared_ptr<HttpTransport> transport_;
  RetryPolicy policy_;
  Sleeper sleep_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_{std::random_device{}()};
};

inline nlohmann::ordered_json to_json(const RawResponse& r) {
  nlohmann::ordered_json j;
  j["fingerprint"] = r.fingerprint;
  j["text"] = r.text;
  if (r.token_logprobs) {
    auto tokens = nlohmann::ordered_json::array();
    for (const auto& t : *r.token_logprobs) {
      auto alts = nlohmann::ordered_json::array();
      for (const auto& [tok, lp] : t.alternatives) alts.push_back({{"token", tok}, {"logprob", lp}});
      tokens.push_back({{"token", t.token}, {"logprob", t.logprob}, {"top_logprobs", alts}});
    }
    j["token_logprobs"] = tokens;
  } else {
    j["token_logprobs"] = nullptr;
  }
  j["usage"] = {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}};
  return j;
}

inline RawResponse raw_response_from_json(const nlohmann::json& j) {
  RawResponse r;
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.text = j.at("text").get<std::string>();
  if (!j.at("token_logprobs").is_null()) {
    std::vector<TokenLogprob> tokens;
    for (const auto& t : j.at("token_logprobs")) {
      TokenLogprob tl{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
      for (const auto& a : t.at("top_logprobs")) {
        tl.alternatives.emplace_back(a.at("token").get<std::string>(), a.at("logprob").get<double>());
      }
      tokens.push_back(std::move(tl));
    }
    r.token_logprobs = std::move(tokens);
  }
  r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<long>();
  r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<long>();
  return r;
}

/// One JSON file per fingerprint under a directory. Writes go to a unique
/// temp file that is then renamed into place.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_for(const std::string& fingerprint) const { return dir_ / (fingerprint + ".json"); }

  /// Stored response, or nullopt on a miss. Unreadable or mismatching
  /// entries count as misses and are logged.
  std::optional<RawResponse> load(const std::string& fingerprint) const {
    const auto path = path_for(fingerprint);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
      auto r = raw_response_from_json(nlohmann::json::parse(in));
      if (r.fingerprint != fingerprint) throw DataError("fingerprint mismatch");
      return r;
    } catch (const std::exception& e) {
      log().warn("corrupt cache entry {} ({}); treating as a miss", path.string(), e.what());
      return std::nullopt;
    }
  }

  void store(const RawResponse& response) const {
    static std::atomic<unsigned long> counter{0};
    const auto final_path = path_for(response.fingerprint);
    std::ostringstream tmp_name;
    tmp_name << "." << response.fingerprint << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
             << "." << counter++;
    const auto tmp = dir_ / tmp_name.str();
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << to_json(response).dump(2) << "\n";
      if (!out.flush()) throw Error("cannot write cache entry " + tmp.string());
    }
    std::filesystem::rename(tmp, final_path);
  }

 private:
  std::filesystem::path dir_;
};

/// Cache lookup by request fingerprint, falling back to `client.complete`
/// and persisting the result.
inline RawResponse cached_complete(const ResponseCache& cache, LlmClient& client, const ModelEndpoint& endpoint,
                                   const std::vector<Message>& messages) {
  const auto fingerprint = request_fingerprint(endpoint.model_id, messages, endpoint.params);
  if (auto hit = cache.load(fingerprint)) return *hit;
  auto response = client.complete(endpoint, messages);
  cache.store(response);
  return response;
}

/// Turns one response into a record: parse the answer, then pull the class
/// distribution at the label token when asked to.
inline InferenceRecord make_record(const std::string& sample_id, const RawResponse& response, PromptStyle style,
                                   bool want_distribution) {
  InferenceRecord record;
  record.sample_id = sample_id;
  record.raw_text = response.text;
  record.fingerprint = response.fingerprint;
  const auto parsed = parse_output(response.text, style);
  record.status = parsed.status;
  record.label = parsed.label;
  record.justification = parsed.justification;
  if (parsed.parsed() && want_distribution) {
    if (!response.token_logprobs || response.token_logprobs->empty()) {
      record.error = "no token logprobs in response";
    } else {
      try {
        record.distribution = extract_distribution(*response.token_logprobs, style);
      } catch (const ExtractionError& e) {
        record.error = std::string("distribution: ") + e.what();
      }
    }
  }
  return record;
}

struct BatchOptions {
  std::size_t limit = 4;
  bool want_distributions = false;
  /// Abort when more than this fraction of samples fail after retries.
  double max_failure_rate = 0.5;
};

class BatchAborted : public Error {
 public:
  using Error::Error;
};

/// Runs every sample through the endpoint with at most `limit` requests in
/// flight. Records come back in input order. Samples that still fail after
/// retries become Unparsed records carrying the error text.
inline std::vector<InferenceRecord> run_batch(LlmClient& client, const ResponseCache* cache,
                                              const ModelEndpoint& endpoint, const std::vector<Sample>& samples,
                                              PromptStyle style, const TemplateSet& templates,
                                              const BatchOptions& options) {
  if (options.limit < 1) throw DataError("in-flight limit must be at least 1");
  endpoint.validate(options.want_distributions);

  std::vector<InferenceRecord> records(samples.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  std::atomic<bool> aborted{false};
  const auto failure_budget =
      static_cast<std::size_t>(std::floor(options.max_failure_rate * static_cast<double>(samples.size())));
  std::mutex first_error_mutex;
  std::string first_error;

  auto worker = [&] {
    for (;;) {
      if (aborted.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= samples.size()) return;
      const auto& sample = samples[i];
      const auto messages = render_prompt(style, sample.text, templates);
      try {
        const auto response =
            cache ? cached_complete(*cache, client, endpoint, messages) : client.complete(endpoint, messages);
        records[i] = make_record(sample.id, response, style, options.want_distributions);
      } catch (const Error& e) {
        InferenceRecord failed;
        failed.sample_id = sample.id;
        failed.fingerprint = request_fingerprint(endpoint.model_id, messages, endpoint.params);
        failed.error = e.what();
        records[i] = std::move(failed);
        log().warn("{}: sample {} failed: {}", endpoint.model_id, sample.id, e.what());
        {
          std::lock_guard lock(first_error_mutex);
          if (first_error.empty()) first_error = e.what();
        }
        if (failures.fetch_add(1) + 1 > failure_budget) aborted.store(true);
      }
    }
  };

  const std::size_t workers = std::min(options.limit, std::max<std::size_t>(samples.size(), 1));
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  if (aborted.load()) {
    throw BatchAborted("batch aborted: " + std::to_string(failures.load()) + " of " +
                       std::to_string(samples.size()) + " samples failed (allowed " +
                       std::to_string(failure_budget) + "); first error: " + first_error);
  }
  return records;
}

}  // namespace xspeech
