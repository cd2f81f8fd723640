#include "gec/token.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gec {

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((c & 0x80u) == 0x00u)
      len = 1;
    else if ((c & 0xE0u) == 0xC0u)
      len = 2;
    else if ((c & 0xF0u) == 0xE0u)
      len = 3;
    else if ((c & 0xF8u) == 0xF0u)
      len = 4;
    if (i + len > s.size()) len = 1;
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0u) != 0x80u) {
        len = 1;
        break;
      }
    }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

TokenSeq split_tokens(const std::string& line) {
  TokenSeq out;
  std::string cur;
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == '\r') {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void check_token_seq(const TokenSeq& tokens) {
  for (const auto& t : tokens) {
    if (t.empty()) throw std::invalid_argument("token sequence contains an empty token");
    if (t.find(' ') != std::string::npos)
      throw std::invalid_argument("token contains a space character: '" + t + "'");
  }
}

std::vector<TokenSeq> read_token_stream(std::istream& in) {
  std::vector<TokenSeq> corpus;
  std::string line;
  while (std::getline(in, line)) corpus.push_back(split_tokens(line));
  return corpus;
}

std::vector<TokenSeq> read_token_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_token_stream(in);
}

void write_token_file(const std::string& path, const std::vector<TokenSeq>& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& s : corpus) out << join_tokens(s) << '\n';
}

TokenSeq lowercase_first(TokenSeq s) {
  if (!s.empty() && !s[0].empty() && s[0][0] >= 'A' && s[0][0] <= 'Z')
    s[0][0] = static_cast<char>(s[0][0] - 'A' + 'a');
  return s;
}

TokenSeq uppercase_first(TokenSeq s) {
  if (!s.empty() && !s[0].empty() && s[0][0] >= 'a' && s[0][0] <= 'z')
    s[0][0] = static_cast<char>(s[0][0] - 'a' + 'A');
  return s;
}

}  // namespace gec
