#include "peripatos/text.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <unordered_set>

namespace peripatos {

namespace {

// Decodes one UTF-8 sequence starting at `i`; invalid bytes decode as
// U+FFFD and advance by one.
char32_t decode(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) {
      i += 2;
      return (static_cast<char32_t>(b0 & 0x1F) << 6) | c1;
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      i += 3;
      return (static_cast<char32_t>(b0 & 0x0F) << 12) | (c1 << 6) | c2;
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      i += 4;
      return (static_cast<char32_t>(b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3;
    }
  }
  i += 1;
  return 0xFFFD;
}

void encode(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_word(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
           (cp >= '0' && cp <= '9') || cp == '_';
  }
  if (cp == 0xFFFD) return false;
  if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;  // Latin-1 punctuation
  if (cp == 0xD7 || cp == 0xF7) return false;                    // x and division signs
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;                // punctuation, symbols, arrows
  if (cp >= 0x3000 && cp <= 0x303F) return false;                // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp >= 0x1F000) return false;  // emoji and pictographs
  return true;
}

char32_t lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
  if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x131 && cp != 0x138 &&
      cp != 0x149 && cp != 0x17F) {
    // Latin Extended-A alternates upper/lower, with a parity shift after U+0138.
    const bool shifted = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    const bool upper = shifted ? (cp % 2 == 1) : (cp % 2 == 0);
    return upper ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;  // Greek
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;                  // Cyrillic
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t current_len = 0;
  auto flush = [&] {
    if (current_len >= 2) tokens.push_back(current);
    current.clear();
    current_len = 0;
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode(text, i);
    if (is_word(cp)) {
      encode(lower(cp), current);
      ++current_len;
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

bool is_stopword(std::string_view token) {
  static const std::unordered_set<std::string_view> kStopwords = {
      "a", "about", "above", "after", "again", "against", "all", "am", "an",
      "and", "any", "are", "aren", "as", "at", "be", "because", "been", "before",
      "being", "below", "between", "both", "but", "by", "can", "cannot", "could",
      "couldn", "did", "didn", "do", "does", "doesn", "doing", "don", "down",
      "during", "each", "few", "for", "from", "further", "get", "got", "had",
      "hadn", "has", "hasn", "have", "haven", "having", "he", "her", "here",
      "hers", "herself", "him", "himself", "his", "how", "if", "in", "into",
      "is", "isn", "it", "its", "itself", "just", "ll", "me", "more", "most",
      "mustn", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
      "once", "only", "or", "other", "ought", "our", "ours", "ourselves", "out",
      "over", "own", "re", "same", "shan", "she", "should", "shouldn", "so",
      "some", "such", "than", "that", "the", "their", "theirs", "them",
      "themselves", "then", "there", "these", "they", "this", "those", "through",
      "to", "too", "under", "until", "up", "ve", "very", "was", "wasn", "we",
      "were", "weren", "what", "when", "where", "which", "while", "who", "whom",
      "why", "will", "with", "won", "would", "wouldn", "you", "your", "yours",
      "yourself", "yourselves", "also", "like", "one", "even", "really", "much",
      "many", "well", "still", "yes", "yeah", "lol", "im", "thats", "dont",
      "doesnt", "didnt", "cant", "ive", "youre", "theyre", "us", "let", "may",
      "might", "must", "shall", "every", "another", "something", "anything",
      "nothing", "everything", "someone", "anyone", "everyone", "thing", "things",
      "way", "make", "made", "go", "going", "know", "think", "say", "said", "see",
      "want"};
  return kStopwords.contains(token);
}

}  // namespace peripatos
