#include "prag/genclient.hpp"

#include <optional>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "prag/detail/io.hpp"
#include "prag/errors.hpp"

namespace prag {

namespace {

constexpr std::string_view kContextSlot = "[context]";
constexpr std::string_view kQuestionSlot = "[question]";

void replace_all(std::string& text, std::string_view slot, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

/// Offset of the first line starting with prefix, or npos.
std::size_t find_line(std::string_view text, std::string_view prefix) {
  if (text.substr(0, prefix.size()) == prefix) return 0;
  const std::string marker = "\n" + std::string(prefix);
  const std::size_t pos = text.find(marker);
  return pos == std::string_view::npos ? std::string_view::npos : pos + 1;
}

}  // namespace

PromptTemplate PromptTemplate::from_string(std::string name, std::string body) {
  if (name.empty()) throw Error(ErrorCode::TemplateError, "template name is empty");
  if (body.find(kQuestionSlot) == std::string::npos)
    throw Error(ErrorCode::TemplateError,
                "template '" + name + "' lacks a [question] placeholder");
  return {std::move(name), std::move(body)};
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return from_string(path.stem().string(), detail::read_file(path));
}

bool PromptTemplate::has_context_slot() const {
  return body.find(kContextSlot) != std::string::npos;
}

std::string assemble_prompt(const PromptTemplate& tmpl, std::string_view question,
                            std::span<const std::string> items) {
  std::string prompt = tmpl.body;
  if (tmpl.has_context_slot()) {
    std::string context;
    for (const std::string& item : items) {
      if (!context.empty()) context.push_back('\n');
      context += item;
    }
    replace_all(prompt, kContextSlot, context);
  }
  replace_all(prompt, kQuestionSlot, question);
  return prompt;
}

ChatMessages assemble_messages(const PromptTemplate& tmpl, std::string_view question,
                               std::span<const std::string> items) {
  const std::string prompt = assemble_prompt(tmpl, question, items);
  std::size_t split = find_line(prompt, "Contexts:");
  if (split == std::string::npos) split = find_line(prompt, "Query:");
  if (split == std::string::npos) return {"", prompt};

  std::string system = prompt.substr(0, split);
  while (!system.empty() && (system.back() == '\n' || system.back() == ' ')) system.pop_back();
  return {std::move(system), prompt.substr(split)};
}

void GenConfig::validate() const {
  std::vector<std::string> problems;
  if (endpoint.empty()) {
    problems.push_back("endpoint is required");
  } else if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    problems.push_back("endpoint must start with http:// or https://, got '" + endpoint + "'");
  }
  if (model.empty()) problems.push_back("model is required");
  if (!(temperature >= 0.0))
    problems.push_back("temperature must be >= 0, got " + std::to_string(temperature));
  if (max_output_tokens < 1)
    problems.push_back("max-output-tokens must be >= 1, got " +
                       std::to_string(max_output_tokens));
  if (timeout.count() <= 0) problems.push_back("timeout must be positive");
  if (max_retries < 0)
    problems.push_back("max-retries must be >= 0, got " + std::to_string(max_retries));
  if (!problems.empty()) {
    std::string joined;
    for (const std::string& p : problems) {
      if (!joined.empty()) joined += "; ";
      joined += p;
    }
    throw Error(ErrorCode::ConfigError, joined);
  }
}

GenClient::GenClient(GenConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string GenClient::generate(const ChatMessages& messages) const {
  nlohmann::json chat = nlohmann::json::array();
  if (!messages.system.empty())
    chat.push_back({{"role", "system"}, {"content", messages.system}});
  chat.push_back({{"role", "user"}, {"content", messages.user}});
  const nlohmann::json body{
      {"model", cfg_.model},           {"messages", std::move(chat)},
      {"temperature", cfg_.temperature}, {"max_tokens", cfg_.max_output_tokens},
      {"seed", cfg_.seed},
  };
  const std::string payload = body.dump();

  const detail::Endpoint ep = detail::split_endpoint(cfg_.endpoint);
  const auto seconds = static_cast<time_t>(cfg_.timeout.count() / 1000);
  const auto micros = static_cast<time_t>(cfg_.timeout.count() % 1000 * 1000);

  std::optional<Error> last;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    httplib::Client client(ep.base);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    auto res = client.Post(ep.path, payload, "application/json");
    if (!res) {
      const httplib::Error err = res.error();
      const bool timed_out =
          err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      last = Error(timed_out ? ErrorCode::Timeout : ErrorCode::BackendError,
                   "generation request failed: " + httplib::to_string(err));
      continue;
    }
    if (res->status >= 500) {
      last = Error(ErrorCode::BackendError,
                   "generation service returned status " + std::to_string(res->status));
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::BackendError,
                  "generation service returned status " + std::to_string(res->status));

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ProtocolError,
                  std::string("generation response is not JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("choices") || !reply["choices"].is_array() ||
        reply["choices"].empty())
      throw Error(ErrorCode::ProtocolError, "generation response has no choices");
    const nlohmann::json& message = reply["choices"][0];
    if (!message.is_object() || !message.contains("message") ||
        !message["message"].is_object() || !message["message"].contains("content") ||
        !message["message"]["content"].is_string())
      throw Error(ErrorCode::ProtocolError, "generation response missing message content");
    return message["message"]["content"].get<std::string>();
  }
  throw *last;
}

std::string GenClient::generate(std::string_view prompt) const {
  return generate(ChatMessages{"", std::string(prompt)});
}

}  // namespace prag
