#pragma once

#include <algorithm>
#include <array>
#include <string_view>

namespace claimlink {

inline constexpr std::string_view kUndetermined = "und";

// The 47 language codes covered by the fact-check corpus; `ur` occurs only
// on the post side.
inline constexpr std::array<std::string_view, 47> kLanguageRegistry = {
    "af", "ar", "as", "az", "bg", "bn", "bs", "ca", "cs", "da", "de", "el",
    "en", "es", "fa", "fi", "fr", "hi", "hr", "hu", "id", "it", "kk", "ko",
    "mk", "ml", "ms", "my", "ne", "nl", "no", "pa", "pl", "pt", "ro", "ru",
    "si", "sk", "sl", "sr", "te", "th", "tl", "tr", "uk", "ur", "zh"};

inline bool in_language_registry(std::string_view code) {
  return std::binary_search(kLanguageRegistry.begin(), kLanguageRegistry.end(), code);
}

// Shape check only: two or three lowercase ASCII letters.
inline bool is_language_code(std::string_view code) {
  if (code.size() < 2 || code.size() > 3) return false;
  return std::all_of(code.begin(), code.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

}  // namespace claimlink
