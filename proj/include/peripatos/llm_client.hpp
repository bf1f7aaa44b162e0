#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peripatos {

struct LlmClientConfig {
  /// Chat-completion endpoint, "http(s)://host[:port]/path".
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  /// Environment variable holding the bearer token; unset means no auth header.
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 60;
  std::size_t max_parallel = 4;
  std::size_t max_retries = 2;
  /// Replace post texts with their length in debug logs.
  bool redact_texts = true;
};

/// Minimal client for OpenAI-style chat-completion endpoints.
class LlmClient {
 public:
  explicit LlmClient(LlmClientConfig config);

  /// Sends one user message and returns the first choice's content. Throws
  /// peripatos::Error on transport errors, non-2xx status, or malformed
  /// response bodies.
  std::string complete(const std::string& prompt) const;

  /// Counts hateful posts per batch of ten. Entries are nullopt when every
  /// attempt failed or returned an unparseable reply.
  std::vector<std::optional<int>> count_batches(
      const std::vector<std::vector<std::string>>& batches, std::string_view bias_category,
      std::string_view hate_type) const;

  /// Per-post Yes/No judgements; nullopt on failure.
  std::vector<std::optional<bool>> classify_posts(const std::vector<std::string>& posts,
                                                  std::string_view bias_category,
                                                  std::string_view hate_type) const;

  /// The JSON request body for `prompt`.
  std::string request_body(const std::string& prompt) const;
  /// Extracts choices[0].message.content; throws on malformed bodies.
  static std::string parse_response(const std::string& body);

 private:
  LlmClientConfig config_;
  std::string base_;
  std::string path_;
};

}  // namespace peripatos
