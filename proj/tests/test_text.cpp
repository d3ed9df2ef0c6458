#include "text.hpp"

#include <vector>

#include "doctest.h"

using namespace unionlm;

TEST_CASE("word_tokenize lowercases and splits punctuation into single tokens") {
  CHECK(text::word_tokenize("Book is not a timekeeping device.") ==
        std::vector<std::string>{"book", "is", "not", "a", "timekeeping", "device", "."});
  CHECK(text::word_tokenize("doesn't") == std::vector<std::string>{"doesn", "'", "t"});
  CHECK(text::word_tokenize("  A  B  ") == std::vector<std::string>{"a", "b"});
  CHECK(text::word_tokenize("a,b!!c") ==
        std::vector<std::string>{"a", ",", "b", "!", "!", "c"});
  CHECK(text::word_tokenize("") == std::vector<std::string>{});
  CHECK(text::word_tokenize("42 cats") == std::vector<std::string>{"42", "cats"});
}

TEST_CASE("word_tokenize keeps non-ascii bytes inside words") {
  CHECK(text::word_tokenize("caf\xc3\xa9 time") ==
        std::vector<std::string>{"caf\xc3\xa9", "time"});
}

TEST_CASE("metric_tokenize drops punctuation entirely") {
  CHECK(text::metric_tokenize("Sugar is used to make coffee sweet.") ==
        std::vector<std::string>{"sugar", "is", "used", "to", "make", "coffee", "sweet"});
  CHECK(text::metric_tokenize("a,b!!c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(text::metric_tokenize("!!!") == std::vector<std::string>{});
}

TEST_CASE("canonical_join") {
  CHECK(text::canonical_join({}) == "");
  CHECK(text::canonical_join({"one"}) == "one");
  CHECK(text::canonical_join({"one", "two", "."}) == "one two .");
}

TEST_CASE("normalize_statement collapses case, spacing and trailing punctuation") {
  CHECK(text::normalize_statement("He put an elephant into the fridge.") ==
        "he put an elephant into the fridge");
  CHECK(text::normalize_statement("he put an Elephant into the fridge") ==
        "he put an elephant into the fridge");
  CHECK(text::normalize_statement("  She  poured coffee into her shoes !  ") ==
        "she poured coffee into her shoes");
  CHECK(text::normalize_statement("What?!") == "what");
  // interior punctuation is part of the statement, only the tail is stripped
  CHECK(text::normalize_statement("don't stop") == "don't stop");
  CHECK(text::normalize_statement("...") == "");
  CHECK(text::normalize_statement("") == "");
}

TEST_CASE("trim and to_lower") {
  CHECK(text::trim("  x y\t\n") == "x y");
  CHECK(text::trim("") == "");
  CHECK(text::trim(" \t ") == "");
  CHECK(text::to_lower("MiXeD 42!") == "mixed 42!");
}
