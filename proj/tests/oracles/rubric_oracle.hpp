#pragma once

// Regex re-statement of the mock judge rubric, used to replay scores offline.

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <set>
#include <string>

namespace oracle {

inline std::optional<std::string> last_value(const std::string& text, const std::string& key) {
  const std::regex re("(^|[^A-Za-z0-9_])" + key + " *: *([A-Za-z0-9+]+)");
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    std::string v = (*it)[2];
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    last = v;
  }
  return last;
}

inline std::set<std::string> word_set(const std::string& text) {
  static const std::regex word("[A-Za-z0-9]+");
  std::set<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), word); it != std::sregex_iterator(); ++it) {
    std::string w = it->str();
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(w);
  }
  return out;
}

inline int rubric(const std::string& ref, const std::string& cand) {
  if (ref == cand) return 5;
  const auto rp = last_value(ref, "PRESENT"), cp = last_value(cand, "PRESENT");
  if (!rp || !cp) return 1;
  if (*rp != *cp) return 0;
  if (last_value(ref, "SEVERITY").value_or("none") != last_value(cand, "SEVERITY").value_or("none")) return 2;
  const auto a = word_set(ref), b = word_set(cand);
  std::set<std::string> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(both, both.begin()));
  const std::size_t uni = a.size() + b.size() - both.size();
  // Integer form of jaccard >= 0.5.
  return uni == 0 || 2 * both.size() >= uni ? 4 : 3;
}

}  // namespace oracle
