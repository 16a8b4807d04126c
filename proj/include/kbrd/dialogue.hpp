#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kbrd {

enum class Speaker { user, recommender };

inline std::string_view to_string(Speaker s) { return s == Speaker::user ? "user" : "recommender"; }

inline std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "user") return Speaker::user;
  if (s == "recommender") return Speaker::recommender;
  return std::nullopt;
}

struct Turn {
  Speaker speaker = Speaker::user;
  std::string text;
  /// Entity names of items explicitly annotated in this turn.
  std::vector<std::string> items;
};

struct Dialogue {
  std::string conversation_id;
  std::vector<Turn> turns;
};

}  // namespace kbrd
