#include "crd/sentinels.hpp"

#include <cctype>

namespace crd {

std::optional<std::string> last_sentinel(std::string_view text, std::string_view key) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
  std::size_t pos = text.rfind(key);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_word(text[pos - 1]);
    std::size_t i = pos + key.size();
    while (i < text.size() && text[i] == ' ') ++i;
    if (left_ok && i < text.size() && text[i] == ':') {
      ++i;
      while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
      std::string value;
      while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '+'))
        value.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++]))));
      if (!value.empty()) return value;
    }
    if (pos == 0) break;
    pos = text.rfind(key, pos - 1);
  }
  return std::nullopt;
}

}  // namespace crd
