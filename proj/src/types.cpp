#include "iega/types.hpp"

namespace iega {

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::kPositive:
      return "POS";
    case Polarity::kNegative:
      return "NEG";
    case Polarity::kNeutral:
      return "NEU";
  }
  return "?";
}

std::optional<Polarity> polarity_from_string(std::string_view s) {
  if (s == "POS") return Polarity::kPositive;
  if (s == "NEG") return Polarity::kNegative;
  if (s == "NEU") return Polarity::kNeutral;
  return std::nullopt;
}

}  // namespace iega
