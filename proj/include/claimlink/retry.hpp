#pragma once

#include <chrono>
#include <cstddef>
#include <thread>

#include "error.hpp"

namespace claimlink {

// Calls fn up to 1 + max_retries times, retrying when it throws `Retryable`.
template <typename Retryable = RemoteError, typename Fn>
auto with_retries(std::size_t max_retries, Fn&& fn,
                  std::chrono::milliseconds backoff = std::chrono::milliseconds(0)) {
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Retryable&) {
      if (attempt >= max_retries) throw;
      if (backoff.count() > 0) std::this_thread::sleep_for(backoff * static_cast<int>(attempt + 1));
    }
  }
}

}  // namespace claimlink
