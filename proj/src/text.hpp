#pragma once

#include <string>
#include <vector>

namespace unionlm::text {

// Word-level tokenization used by the vocabulary and the n-gram/BLEU metrics:
// lowercase, runs of word characters (alnum or non-ASCII bytes) are one token,
// each punctuation character is its own token.
std::vector<std::string> word_tokenize(std::string_view s);

// Metric canonicalization for UNI/Length: lowercase, punctuation dropped.
std::vector<std::string> metric_tokenize(std::string_view s);

// Canonical surface form: lowercased tokens joined by single spaces.
std::string canonical_join(const std::vector<std::string>& tokens);

// Key used to match Task B and Task C rows sharing a false statement:
// lowercase, whitespace collapsed, terminal punctuation stripped.
std::string normalize_statement(std::string_view s);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

}  // namespace unionlm::text
