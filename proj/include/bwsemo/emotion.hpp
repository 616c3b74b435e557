#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace bwsemo {

/// The six Ekman emotions. Declaration order is the canonical order used for
/// tie-breaking and for every per-emotion array in the library.
enum class Emotion : std::size_t { Joy = 0, Sadness, Anger, Disgust, Fear, Surprise };

inline constexpr std::size_t kEmotionCount = 6;

inline constexpr std::array<Emotion, kEmotionCount> kAllEmotions = {
    Emotion::Joy,  Emotion::Sadness, Emotion::Anger,
    Emotion::Disgust, Emotion::Fear, Emotion::Surprise};

template <typename T>
using PerEmotion = std::array<T, kEmotionCount>;

constexpr std::size_t index_of(Emotion e) { return static_cast<std::size_t>(e); }

std::string_view to_string(Emotion e);

/// Case-insensitive exact name match ("fear", "Fear", "FEAR").
std::optional<Emotion> parse_emotion(std::string_view name);

}  // namespace bwsemo
