#pragma once

// Building embedding stores from pluggable providers.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "embedstore.hpp"
#include "error.hpp"
#include "records.hpp"
#include "retry.hpp"
#include "text.hpp"

namespace claimlink {

enum class Role { query, passage };

inline const char* to_string(Role r) { return r == Role::query ? "query" : "passage"; }

inline Role parse_role(std::string_view s) {
  if (s == "query") return Role::query;
  if (s == "passage") return Role::passage;
  throw ValidationError("unknown role '" + std::string(s) + "' (expected query|passage)");
}

enum class ProviderKind { precomputed_file, remote_service };

struct ProviderSpec {
  ProviderKind kind = ProviderKind::precomputed_file;
  std::string location;  // file path or URL
  std::string query_template = "{text}";
  std::string passage_template = "{text}";
  std::size_t batch_size = 32;
  std::size_t max_parallel_requests = 4;
  std::size_t max_retries = 2;
  int timeout_seconds = 60;
  std::string tag;  // overrides the provider's own tag when set

  static ProviderSpec from_location(std::string location) {
    ProviderSpec s;
    s.kind = location.rfind("http://", 0) == 0 || location.rfind("https://", 0) == 0
                 ? ProviderKind::remote_service
                 : ProviderKind::precomputed_file;
    s.location = std::move(location);
    return s;
  }

  void validate() const {
    auto slot_once = [](const std::string& t) {
      auto first = t.find("{text}");
      return first != std::string::npos && t.find("{text}", first + 1) == std::string::npos;
    };
    if (!slot_once(query_template)) throw ValidationError("query_template must contain {text} exactly once");
    if (!slot_once(passage_template)) throw ValidationError("passage_template must contain {text} exactly once");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (max_parallel_requests < 1) throw ValidationError("max_parallel_requests must be >= 1");
    if (location.empty()) throw ValidationError("provider location is empty");
  }

  std::string render(const std::string& text, Role role) const {
    const auto& t = role == Role::query ? query_template : passage_template;
    auto pos = t.find("{text}");
    return t.substr(0, pos) + text + t.substr(pos + 6);
  }
};

struct EmbedItem {
  std::string id;
  std::string text;  // rendered through the role template before reaching a provider
  Role role = Role::passage;
};

struct ProviderResponse {
  std::uint32_t dim = 0;
  std::vector<std::vector<float>> vectors;  // one per input, input order
};

class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string tag() const = 0;
  // Throws RemoteError for retryable failures.
  virtual ProviderResponse embed(const std::vector<EmbedItem>& batch, Role role) = 0;
};

class CallbackProvider final : public EmbeddingProvider {
public:
  using Fn = std::function<ProviderResponse(const std::vector<EmbedItem>&, Role)>;
  CallbackProvider(std::string tag, Fn fn) : tag_(std::move(tag)), fn_(std::move(fn)) {}
  std::string tag() const override { return tag_; }
  ProviderResponse embed(const std::vector<EmbedItem>& batch, Role role) override { return fn_(batch, role); }

private:
  std::string tag_;
  Fn fn_;
};

// Vectors computed elsewhere, looked up by item id. Accepts a .clnk store or
// JSON-lines {"id": ..., "vector": [...]} with an optional "role" field; a
// role-tagged vector wins over an untagged one, so one file can hold posts
// and claims whose ids overlap.
class PrecomputedProvider final : public EmbeddingProvider {
public:
  explicit PrecomputedProvider(const std::filesystem::path& path)
      : tag_("file:" + path.filename().string()) {
    if (!std::filesystem::exists(path)) throw IoError("precomputed embeddings not found: " + path.string());
    if (ends_with(path.string(), ".clnk")) {
      auto store = load_store(path);
      dim_ = store.dim();
      if (!store.provider_tag().empty()) tag_ = store.provider_tag();
      for (std::size_t i = 0; i < store.size(); ++i) {
        auto r = store.row(i);
        vectors_.emplace(store.ids()[i], std::vector<float>(r.begin(), r.end()));
      }
    } else {
      auto in = open_input(path);
      for (auto& rec : parse_jsonl(in, path.string())) {
        auto id = field_as_id(rec, "id", path.string());
        auto v = rec.fields.at("vector").get<std::vector<float>>();
        if (auto role = rec.fields.find("role"); role != rec.fields.end() && role->is_string()) {
          id = std::string(to_string(parse_role(role->get<std::string>()))) + "\n" + id;
        }
        if (dim_ == 0) dim_ = static_cast<std::uint32_t>(v.size());
        if (v.size() != dim_) {
          throw FormatError(path.string() + ":" + std::to_string(rec.line) + ": vector dim " +
                            std::to_string(v.size()) + " differs from " + std::to_string(dim_));
        }
        if (!vectors_.emplace(id, std::move(v)).second) {
          throw FormatError(path.string() + ":" + std::to_string(rec.line) + ": duplicate vector for '" + id + "'");
        }
      }
    }
  }

  std::string tag() const override { return tag_; }

  ProviderResponse embed(const std::vector<EmbedItem>& batch, Role role) override {
    ProviderResponse r;
    r.dim = dim_;
    for (const auto& item : batch) {
      auto it = vectors_.find(std::string(to_string(role)) + "\n" + item.id);
      if (it == vectors_.end()) it = vectors_.find(item.id);
      if (it == vectors_.end()) throw ValidationError("no precomputed vector for id '" + item.id + "'");
      r.vectors.push_back(it->second);
    }
    return r;
  }

private:
  std::string tag_;
  std::uint32_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

struct EmbedFailure {
  std::string id;
  std::string message;
};

struct EmbedRun {
  EmbeddingStore store;
  std::vector<EmbedFailure> failures;
  std::size_t provider_calls = 0;
  std::size_t skipped = 0;  // already present in the existing store
};

// Renders, embeds, normalizes and stores every item not already present in
// `existing`. Batches run on up to max_parallel_requests threads; rows are
// stored in input order whatever the completion order. A dimension change
// between responses aborts the run; a batch that still fails after retries is
// reported in `failures` and the run continues.
inline EmbedRun embed_corpus(const std::vector<EmbedItem>& items, EmbeddingProvider& provider,
                             const ProviderSpec& spec, const EmbeddingStore* existing = nullptr) {
  spec.validate();
  const std::string tag = spec.tag.empty() ? provider.tag() : spec.tag;
  if (existing && !existing->empty() && existing->provider_tag() != tag) {
    throw ValidationError("existing store was built by '" + existing->provider_tag() +
                          "', not '" + tag + "'");
  }

  EmbedRun run;
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (trim(items[i].text).empty()) throw ValidationError("item '" + items[i].id + "' has empty text");
    if (!seen.insert(items[i].id).second) throw ValidationError("duplicate item id '" + items[i].id + "'");
    if (existing && existing->contains(items[i].id)) {
      ++run.skipped;
    } else {
      pending.push_back(i);
    }
  }

  struct Batch {
    Role role;
    std::vector<std::size_t> members;  // indices into items
    std::optional<ProviderResponse> response;
    std::string error;
  };
  std::vector<Batch> batches;
  for (Role role : {Role::query, Role::passage}) {
    Batch cur{role, {}, std::nullopt, {}};
    for (auto i : pending) {
      if (items[i].role != role) continue;
      cur.members.push_back(i);
      if (cur.members.size() == spec.batch_size) {
        batches.push_back(std::move(cur));
        cur = Batch{role, {}, std::nullopt, {}};
      }
    }
    if (!cur.members.empty()) batches.push_back(std::move(cur));
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::atomic<bool> abort{false};
  std::mutex mu;
  std::exception_ptr hard_error;
  std::uint32_t dim = existing && !existing->empty() ? existing->dim() : 0;

  auto worker = [&] {
    while (!abort) {
      const std::size_t b = next++;
      if (b >= batches.size()) return;
      auto& batch = batches[b];
      std::vector<EmbedItem> request;
      for (auto i : batch.members) {
        request.push_back({items[i].id, spec.render(items[i].text, batch.role), batch.role});
      }
      try {
        auto resp = with_retries(spec.max_retries, [&] {
          ++calls;
          return provider.embed(request, batch.role);
        });
        if (resp.vectors.size() != request.size()) {
          throw FormatError("provider returned " + std::to_string(resp.vectors.size()) +
                            " vectors for " + std::to_string(request.size()) + " texts");
        }
        {
          std::lock_guard lock(mu);
          if (dim == 0) dim = resp.dim;
          if (resp.dim != dim) {
            throw ValidationError("provider dimension drift: " + std::to_string(dim) + " then " +
                                  std::to_string(resp.dim));
          }
        }
        for (const auto& v : resp.vectors) {
          if (v.size() != resp.dim) throw FormatError("provider vector length differs from declared dim");
        }
        batch.response = std::move(resp);
      } catch (const RemoteError& e) {
        batch.error = e.what();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!hard_error) hard_error = std::current_exception();
        abort = true;
      }
    }
  };

  const std::size_t workers = std::min(spec.max_parallel_requests, std::max<std::size_t>(batches.size(), 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (hard_error) std::rethrow_exception(hard_error);
  run.provider_calls = calls;

  // Reassemble in input order.
  std::vector<const std::vector<float>*> vec_of(items.size(), nullptr);
  std::vector<const std::string*> err_of(items.size(), nullptr);
  for (const auto& b : batches) {
    for (std::size_t j = 0; j < b.members.size(); ++j) {
      if (b.response) {
        vec_of[b.members[j]] = &b.response->vectors[j];
      } else {
        err_of[b.members[j]] = &b.error;
      }
    }
  }

  run.store = EmbeddingStore(dim, tag);
  if (existing) {
    for (std::size_t i = 0; i < existing->size(); ++i) {
      run.store.add(existing->ids()[i], existing->row(i), /*normalize_row=*/false);
    }
  }
  for (auto i : pending) {
    if (vec_of[i]) {
      try {
        run.store.add(items[i].id, *vec_of[i]);
      } catch (const ValidationError& e) {
        run.failures.push_back({items[i].id, e.what()});
      }
    } else if (err_of[i]) {
      run.failures.push_back({items[i].id, *err_of[i]});
    }
  }
  return run;
}

}  // namespace claimlink
