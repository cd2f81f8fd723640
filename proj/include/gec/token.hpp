#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gec {

// Whitespace-free unicode tokens; one sentence per TokenSeq.
using TokenSeq = std::vector<std::string>;

// Splits a UTF-8 string into codepoint-sized chunks. Invalid bytes are
// passed through as single-byte chunks.
std::vector<std::string> utf8_chars(const std::string& s);

std::string join_tokens(const TokenSeq& tokens);
TokenSeq split_tokens(const std::string& line);

// Throws std::invalid_argument on empty tokens or tokens containing spaces.
void check_token_seq(const TokenSeq& tokens);

// One sentence per line, tokens separated by single spaces.
std::vector<TokenSeq> read_token_file(const std::string& path);
void write_token_file(const std::string& path, const std::vector<TokenSeq>& corpus);
std::vector<TokenSeq> read_token_stream(std::istream& in);

// Trivial truecasing pass: lowercase (or restore) the first character of
// the first token. ASCII letters only; anything else is left alone.
TokenSeq lowercase_first(TokenSeq s);
TokenSeq uppercase_first(TokenSeq s);

}  // namespace gec
