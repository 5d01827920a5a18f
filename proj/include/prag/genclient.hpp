#pragma once

#include <chrono>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace prag {

/// Prompt template with [context] and [question] placeholders. A template
/// without [context] ignores retrieved items (the no-retrieval style);
/// [question] is always required. Construction validates.
struct PromptTemplate {
  std::string name;
  std::string body;

  static PromptTemplate from_string(std::string name, std::string body);
  static PromptTemplate load(const std::filesystem::path& path);

  bool has_context_slot() const;
};

/// Replaces [context] with the items joined by single newlines (rank order)
/// and [question] with the question. The result contains no placeholders.
std::string assemble_prompt(const PromptTemplate& tmpl, std::string_view question,
                            std::span<const std::string> items);

/// Chat split of an assembled prompt: the leading instruction block becomes
/// the system message; everything from the first "Contexts:" (or, failing
/// that, "Query:") line on becomes the user message.
struct ChatMessages {
  std::string system;
  std::string user;
};

ChatMessages assemble_messages(const PromptTemplate& tmpl, std::string_view question,
                               std::span<const std::string> items);

struct GenConfig {
  std::string endpoint;  // full URL of a chat-completions style service
  std::string model;
  double temperature = 0.1;
  int max_output_tokens = 150;
  int seed = 100;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 0;  // retries are opt-in and preserve the seed

  void validate() const;
};

/// JSON-over-HTTP chat client. Request: {"model", "messages", "temperature",
/// "max_tokens", "seed"}; response: {"choices": [{"message": {"content"}}]}.
class GenClient {
 public:
  explicit GenClient(GenConfig cfg);

  std::string generate(const ChatMessages& messages) const;
  /// Sends the prompt as a single user message.
  std::string generate(std::string_view prompt) const;

  const GenConfig& config() const noexcept { return cfg_; }

 private:
  GenConfig cfg_;
};

}  // namespace prag
