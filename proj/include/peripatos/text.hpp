#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace peripatos {

/// Lowercased word tokens of at least two code points. Word characters are
/// ASCII letters, digits, underscore, and any non-ASCII letter-like code
/// point; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Bundled English stopword list used for topic representations.
bool is_stopword(std::string_view token);

}  // namespace peripatos
