#include "bwsemo/emotion.hpp"

#include <cctype>

namespace bwsemo {

namespace {
constexpr std::array<std::string_view, kEmotionCount> kNames = {
    "Joy", "Sadness", "Anger", "Disgust", "Fear", "Surprise"};
}

std::string_view to_string(Emotion e) { return kNames[index_of(e)]; }

std::optional<Emotion> parse_emotion(std::string_view name) {
  for (Emotion e : kAllEmotions) {
    std::string_view canon = kNames[index_of(e)];
    if (canon.size() != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < name.size() && same; ++i) {
      same = std::tolower(static_cast<unsigned char>(name[i])) ==
             std::tolower(static_cast<unsigned char>(canon[i]));
    }
    if (same) return e;
  }
  return std::nullopt;
}

}  // namespace bwsemo
