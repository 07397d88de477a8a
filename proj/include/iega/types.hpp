#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace iega {

// Sentiment classes in index order; ties break toward the lower index.
enum class Polarity : std::size_t { kPositive = 0, kNegative = 1, kNeutral = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Polarity, kNumClasses> kAllPolarities = {
    Polarity::kPositive, Polarity::kNegative, Polarity::kNeutral};

inline std::size_t index_of(Polarity p) { return static_cast<std::size_t>(p); }

// "POS" / "NEG" / "NEU"
std::string_view to_string(Polarity p);
std::optional<Polarity> polarity_from_string(std::string_view s);

// Half-open token range [start, end).
struct AspectSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool contains(std::size_t i) const { return i >= start && i < end; }
  bool operator==(const AspectSpan&) const = default;
};

}  // namespace iega
