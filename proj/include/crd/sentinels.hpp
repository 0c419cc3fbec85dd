#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace crd {

// Value of the last `KEY: value` sentinel in `text`, lowercased. `key` is
// matched case-sensitively and must start a word; the value is the following
// run of letters, digits or '+'.
std::optional<std::string> last_sentinel(std::string_view text, std::string_view key);

}  // namespace crd
