#include "peripatos/llm_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <future>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "peripatos/common.hpp"
#include "peripatos/log.hpp"
#include "peripatos/scoring.hpp"

namespace peripatos {

using nlohmann::json;

LlmClient::LlmClient(LlmClientConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw Error(fmt::format("endpoint '{}' lacks a scheme", config_.endpoint));
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  base_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  if (config_.max_parallel == 0) config_.max_parallel = 1;
}

std::string LlmClient::request_body(const std::string& prompt) const {
  json body = {{"model", config_.model},
               {"temperature", 0},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  return body.dump();
}

std::string LlmClient::parse_response(const std::string& body) {
  try {
    const auto j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(fmt::format("malformed chat-completion response: {}", e.what()));
  }
}

std::string LlmClient::complete(const std::string& prompt) const {
  httplib::Client client(base_);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_write_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", fmt::format("Bearer {}", key));

  const std::string body = request_body(prompt);
  if (log::level() <= log::Level::debug) {
    log::debug(fmt::format("POST {}{} {}", base_, path_,
                           config_.redact_texts
                               ? fmt::format("<prompt redacted, {} bytes>", prompt.size())
                               : body));
  }
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res)
    throw Error(fmt::format("request to {} failed: {}", config_.endpoint,
                            httplib::to_string(res.error())));
  if (res->status < 200 || res->status >= 300)
    throw Error(fmt::format("endpoint returned HTTP {}", res->status));
  auto content = parse_response(res->body);
  if (log::level() <= log::Level::debug) {
    log::debug(config_.redact_texts
                   ? fmt::format("reply <redacted, {} bytes>", content.size())
                   : fmt::format("reply {}", content));
  }
  return content;
}

namespace {

// Runs fn(i) for i in [0, n) with at most `parallel` requests in flight.
template <typename T>
std::vector<T> bounded_map(std::size_t n, std::size_t parallel,
                           const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  for (std::size_t start = 0; start < n; start += parallel) {
    const std::size_t end = std::min(n, start + parallel);
    std::vector<std::future<T>> inflight;
    for (std::size_t i = start; i < end; ++i)
      inflight.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = start; i < end; ++i) out[i] = inflight[i - start].get();
  }
  return out;
}

}  // namespace

std::vector<std::optional<int>> LlmClient::count_batches(
    const std::vector<std::vector<std::string>>& batches, std::string_view bias_category,
    std::string_view hate_type) const {
  std::function<std::optional<int>(std::size_t)> one = [&](std::size_t i) -> std::optional<int> {
    const auto prompt = llm_count_prompt(batches[i], bias_category, hate_type);
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      try {
        return parse_count(complete(prompt));
      } catch (const Error& e) {
        log::warning(fmt::format("batch {} attempt {}: {}", i, attempt + 1, e.what()));
      }
    }
    return std::nullopt;
  };
  return bounded_map(batches.size(), config_.max_parallel, one);
}

std::vector<std::optional<bool>> LlmClient::classify_posts(const std::vector<std::string>& posts,
                                                           std::string_view bias_category,
                                                           std::string_view hate_type) const {
  std::function<std::optional<bool>(std::size_t)> one =
      [&](std::size_t i) -> std::optional<bool> {
    const auto prompt = llm_single_prompt(posts[i], bias_category, hate_type);
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      try {
        return parse_yesno(complete(prompt));
      } catch (const Error& e) {
        log::warning(fmt::format("post {} attempt {}: {}", i, attempt + 1, e.what()));
      }
    }
    return std::nullopt;
  };
  return bounded_map(posts.size(), config_.max_parallel, one);
}

}  // namespace peripatos
