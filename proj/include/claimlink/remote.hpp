#pragma once

// HTTP adapters for the embedding, pair-scoring and generation contracts.
//
//   embed:    {"texts": [..], "role": "query"|"passage"} -> {"dim": n, "vectors": [[..]]}
//   score:    {"pairs": [[query, passage], ..]}           -> {"scores": [..]}
//   generate: {"prompt": "..", "max_tokens": n}          -> {"text": ".."}
//   chat:     {"messages": [{role, content}], "max_tokens": n}
//             -> {"choices": [{"message": {"content": ".."}}]}

#include <memory>
#include <string>
#include <vector>

#include "embed.hpp"
#include "http.hpp"
#include "rerank.hpp"

namespace claimlink {

class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
  explicit RemoteEmbeddingProvider(const std::string& url, int timeout_seconds = 60)
      : client_(url, timeout_seconds), tag_("remote:" + url) {}

  std::string tag() const override { return tag_; }

  ProviderResponse embed(const std::vector<EmbedItem>& batch, Role role) override {
    json texts = json::array();
    for (const auto& item : batch) texts.push_back(item.text);
    const json reply = client_.post({{"texts", std::move(texts)}, {"role", to_string(role)}});
    ProviderResponse r;
    try {
      r.dim = reply.at("dim").get<std::uint32_t>();
      r.vectors = reply.at("vectors").get<std::vector<std::vector<float>>>();
    } catch (const json::exception& e) {
      throw RemoteError(std::string("malformed embedding response: ") + e.what());
    }
    return r;
  }

private:
  JsonHttpClient client_;
  std::string tag_;
};

class HttpPairScorer final : public PairScorer {
public:
  explicit HttpPairScorer(const std::string& url, int timeout_seconds = 60) : client_(url, timeout_seconds) {}

  std::vector<double> score(const std::vector<std::pair<std::string, std::string>>& pairs) override {
    json body = json::array();
    for (const auto& [q, p] : pairs) body.push_back(json::array({q, p}));
    const json reply = client_.post({{"pairs", std::move(body)}});
    try {
      return reply.at("scores").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw RemoteError(std::string("malformed scorer response: ") + e.what());
    }
  }

private:
  JsonHttpClient client_;
};

class HttpGenerator final : public TextGenerator {
public:
  explicit HttpGenerator(const std::string& url, int timeout_seconds = 120) : client_(url, timeout_seconds) {}

  std::string generate(const std::string& prompt, std::size_t max_tokens) override {
    const json reply = client_.post({{"prompt", prompt}, {"max_tokens", max_tokens}});
    try {
      return reply.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw RemoteError(std::string("malformed generation response: ") + e.what());
    }
  }

private:
  JsonHttpClient client_;
};

// Chat-style endpoints: the prompt becomes the user message.
class ChatHttpGenerator final : public TextGenerator {
public:
  ChatHttpGenerator(const std::string& url, std::string system_message, std::string model = {},
                    int timeout_seconds = 120)
      : client_(url, timeout_seconds), system_(std::move(system_message)), model_(std::move(model)) {}

  std::string generate(const std::string& prompt, std::size_t max_tokens) override {
    json messages = json::array();
    if (!system_.empty()) messages.push_back({{"role", "system"}, {"content", system_}});
    messages.push_back({{"role", "user"}, {"content", prompt}});
    json body = {{"messages", std::move(messages)}, {"max_tokens", max_tokens}};
    if (!model_.empty()) body["model"] = model_;
    const json reply = client_.post(body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw RemoteError(std::string("malformed chat response: ") + e.what());
    }
  }

private:
  JsonHttpClient client_;
  std::string system_;
  std::string model_;
};

inline std::unique_ptr<EmbeddingProvider> make_provider(const ProviderSpec& spec) {
  spec.validate();
  if (spec.kind == ProviderKind::remote_service) {
    return std::make_unique<RemoteEmbeddingProvider>(spec.location, spec.timeout_seconds);
  }
  return std::make_unique<PrecomputedProvider>(spec.location);
}

}  // namespace claimlink
