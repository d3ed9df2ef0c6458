#include "text.hpp"

#include <cctype>

namespace unionlm::text {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool is_space_char(unsigned char c) { return std::isspace(c) != 0; }

char lower_char(unsigned char c) { return static_cast<char>(std::tolower(c)); }

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(lower_char(c));
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && is_space_char(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space_char(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> word_tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : s) {
    if (is_word_char(c)) {
      cur.push_back(lower_char(c));
    } else {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
      if (!is_space_char(c)) {
        tokens.emplace_back(1, static_cast<char>(c));
      }
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

std::vector<std::string> metric_tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : s) {
    if (is_word_char(c)) {
      cur.push_back(lower_char(c));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

std::string canonical_join(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string normalize_statement(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (is_space_char(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(lower_char(c));
    }
  }
  while (!out.empty()) {
    unsigned char last = static_cast<unsigned char>(out.back());
    if (std::ispunct(last) != 0 || is_space_char(last)) {
      out.pop_back();
    } else {
      break;
    }
  }
  return out;
}

}  // namespace unionlm::text
