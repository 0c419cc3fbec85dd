#pragma once

// Regex word-boundary grep used to predict the rule-based mock's verdicts.

#include <map>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

namespace oracle {

struct Triggers {
  std::vector<std::string> mild, strong;
};

inline std::map<std::string, Triggers> load_keywords(const nlohmann::json& j) {
  std::map<std::string, Triggers> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    Triggers t;
    if (it->is_array()) {
      t.mild = it->get<std::vector<std::string>>();
    } else {
      t.mild = it->value("mild", std::vector<std::string>{});
      t.strong = it->value("strong", std::vector<std::string>{});
    }
    out[it.key()] = t;
  }
  return out;
}

inline std::string escape(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\-])");
  return std::regex_replace(s, special, R"(\$&)");
}

inline bool grep(const std::string& text, const std::string& keyword) {
  const std::regex re("(^|[^A-Za-z0-9])" + escape(keyword) + "([^A-Za-z0-9]|$)", std::regex::icase);
  return std::regex_search(text, re);
}

// 0 absent, 1 mild, 2 strong.
inline int grep_level(const std::string& text, const Triggers& t) {
  for (const auto& k : t.strong)
    if (grep(text, k)) return 2;
  for (const auto& k : t.mild)
    if (grep(text, k)) return 1;
  return 0;
}

}  // namespace oracle
