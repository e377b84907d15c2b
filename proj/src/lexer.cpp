#include "confx/lang.hpp"

#include <array>
#include <cctype>

namespace confx {

namespace {

constexpr std::array kKeywords = {
    "shared", "int",    "bool",      "lock",   "cond",  "on",    "var",
    "if",     "else",   "while",     "bound",  "spawn", "join",  "wait",
    "notify", "notifyAll", "assert", "skip",   "true",  "false",
};

bool is_keyword(std::string_view word) {
  for (const char* kw : kKeywords) {
    if (word == kw) return true;
  }
  return false;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (is_space(c)) {
        advance();
        continue;
      }
      SourceSpan span{pos_, pos_, line_, column_};
      TokenKind kind;
      if (c == '/' && peek(1) == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        kind = TokenKind::Comment;
      } else if (c == '/' && peek(1) == '*') {
        advance();
        advance();
        bool closed = false;
        while (pos_ < text_.size()) {
          if (text_[pos_] == '*' && peek(1) == '/') {
            advance();
            advance();
            closed = true;
            break;
          }
          advance();
        }
        if (!closed) throw UnterminatedComment("unterminated block comment", span.line, span.column);
        kind = TokenKind::Comment;
      } else if (is_ident_start(c)) {
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) advance();
        kind = is_keyword(text_.substr(span.begin, pos_ - span.begin)) ? TokenKind::Keyword
                                                                      : TokenKind::Identifier;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
        kind = TokenKind::Literal;
      } else if (std::string_view("(){};,").find(c) != std::string_view::npos) {
        advance();
        kind = TokenKind::Punctuation;
      } else if (is_two_char_operator()) {
        advance();
        advance();
        kind = TokenKind::Operator;
      } else if (std::string_view("+-*/%<>!=").find(c) != std::string_view::npos) {
        advance();
        kind = TokenKind::Operator;
      } else {
        throw LexError(std::string("illegal character '") + c + "'", line_, column_);
      }
      span.end = pos_;
      out.push_back(Token{kind, std::string(text_.substr(span.begin, span.end - span.begin)), span});
    }
    return out;
  }

 private:
  char peek(std::size_t ahead) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  bool is_two_char_operator() const {
    char a = text_[pos_];
    char b = peek(1);
    return (b == '=' && (a == '=' || a == '!' || a == '<' || a == '>')) ||
           (a == '&' && b == '&') || (a == '|' && b == '|');
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

}  // namespace

std::vector<Token> lex(std::string_view text) { return Lexer(text).run(); }

TokenCounts lex_counts(std::string_view text) {
  TokenCounts counts;
  for (const Token& t : lex(text)) {
    if (t.kind == TokenKind::Comment) {
      ++counts.comments;
    } else {
      ++counts.tokens;
    }
  }
  return counts;
}

std::size_t count_tokens(std::string_view text) { return lex_counts(text).tokens; }

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t cursor = 0;
  for (const Token& t : lex(text)) {
    if (t.kind != TokenKind::Comment) continue;
    out.append(text.substr(cursor, t.span.begin - cursor));
    bool block = t.lexeme.starts_with("/*");
    bool glued_left = !out.empty() && !is_space(out.back());
    bool glued_right = t.span.end < text.size() && !is_space(text[t.span.end]);
    if (block && glued_left && glued_right) out.push_back(' ');
    cursor = t.span.end;
  }
  out.append(text.substr(cursor));
  return out;
}

}  // namespace confx
