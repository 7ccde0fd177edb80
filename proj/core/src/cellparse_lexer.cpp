#include <algorithm>
#include <array>
#include <cctype>

#include "nbmig/cellparse.hpp"

namespace nbmig::cell {

namespace {

constexpr std::array<std::string_view, 15> kLongOps = {
    "**=", "//=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "**", "//", "->", "..."};
constexpr std::string_view kShortOps = "+-*/%<>=()[]{},:.;";

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_ && depth_ == 0) {
        if (handle_indentation()) continue;
      }
      const char c = src_[pos_];
      if (c == '\n') {
        newline();
        continue;
      }
      if (c == '\r') {
        ++pos_;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\f') {
        advance();
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\\' && pos_ + 1 < src_.size() &&
          (src_[pos_ + 1] == '\n' || src_[pos_ + 1] == '\r')) {
        advance();
        if (src_[pos_] == '\r') advance();
        if (pos_ < src_.size() && src_[pos_] == '\n') {
          ++pos_;
          ++line_;
          col_ = 0;
        }
        continue;
      }
      if (is_name_start(c)) {
        lex_name();
      } else if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1]))) {
        lex_number();
      } else if (c == '"' || c == '\'') {
        lex_string();
      } else {
        lex_operator();
      }
    }
    if (line_has_tokens_) emit(TokenKind::Newline, "", here(), here());
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(TokenKind::Dedent, "", here(), here());
    }
    emit(TokenKind::End, "", here(), here());
    return std::move(tokens_);
  }

 private:
  Position here() const { return {line_, col_}; }

  void advance() {
    ++pos_;
    ++col_;
  }

  void emit(TokenKind kind, std::string text, Position begin, Position end) {
    tokens_.push_back(Token{kind, std::move(text), Span{begin, end}});
  }

  [[noreturn]] void fail(const std::string& message, std::vector<std::string> expected = {}) {
    throw SyntaxError(here(), std::move(expected), message);
  }

  void newline() {
    if (depth_ == 0 && line_has_tokens_) {
      emit(TokenKind::Newline, "", here(), Position{line_, col_ + 1});
      line_has_tokens_ = false;
    }
    ++pos_;
    ++line_;
    col_ = 0;
    at_line_start_ = depth_ == 0;
  }

  // Measures leading whitespace of a logical line. Returns true when the line turned
  // out to be blank or comment-only and was consumed.
  bool handle_indentation() {
    std::uint32_t width = 0;
    std::size_t p = pos_;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\f')) {
      width = src_[p] == '\t' ? (width / 8 + 1) * 8 : width + 1;
      ++p;
    }
    const bool blank = p >= src_.size() || src_[p] == '\n' || src_[p] == '\r' || src_[p] == '#';
    if (blank) {
      while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      if (pos_ < src_.size()) {
        ++pos_;
        ++line_;
        col_ = 0;
      }
      return true;
    }
    col_ += static_cast<std::uint32_t>(p - pos_);
    pos_ = p;
    at_line_start_ = false;

    if (width > indents_.back()) {
      indents_.push_back(width);
      emit(TokenKind::Indent, "", Position{line_, 0}, here());
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        emit(TokenKind::Dedent, "", here(), here());
      }
      if (width != indents_.back()) fail("unindent does not match any outer indentation level");
    }
    return false;
  }

  void lex_name() {
    const auto begin = here();
    const auto start = pos_;
    while (pos_ < src_.size() && is_name_char(src_[pos_])) advance();
    line_has_tokens_ = true;
    emit(TokenKind::Name, std::string(src_.substr(start, pos_ - start)), begin, here());
  }

  void lex_number() {
    const auto begin = here();
    const auto start = pos_;
    bool is_float = false;
    while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      is_float = true;
      advance();
      while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && is_digit(src_[p])) {
        is_float = true;
        while (pos_ < p) advance();
        while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
      }
    }
    if (pos_ < src_.size() && is_name_char(src_[pos_])) fail("invalid numeric literal");
    line_has_tokens_ = true;
    emit(is_float ? TokenKind::Float : TokenKind::Int, std::string(src_.substr(start, pos_ - start)),
         begin, here());
  }

  void lex_string() {
    const auto begin = here();
    const char quote = src_[pos_];
    advance();
    std::string value;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') fail("unterminated string literal");
      const char c = src_[pos_];
      if (c == quote) {
        advance();
        break;
      }
      if (c == '\\' && pos_ + 1 < src_.size()) {
        const char e = src_[pos_ + 1];
        switch (e) {
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          case 'r': value += '\r'; break;
          case '0': value += '\0'; break;
          case '\\': value += '\\'; break;
          case '\'': value += '\''; break;
          case '"': value += '"'; break;
          default:
            value += '\\';
            value += e;
        }
        advance();
        advance();
        continue;
      }
      value += c;
      advance();
    }
    line_has_tokens_ = true;
    emit(TokenKind::String, std::move(value), begin, here());
  }

  void lex_operator() {
    const auto begin = here();
    const auto rest = src_.substr(pos_);
    for (auto op : kLongOps) {
      if (rest.starts_with(op)) {
        for (std::size_t i = 0; i < op.size(); ++i) advance();
        line_has_tokens_ = true;
        emit(TokenKind::Op, std::string(op), begin, here());
        return;
      }
    }
    const char c = src_[pos_];
    if (kShortOps.find(c) == std::string_view::npos) {
      fail(std::string("unexpected character '") + c + "'");
    }
    if (c == '(' || c == '[' || c == '{') ++depth_;
    if (c == ')' || c == ']' || c == '}') {
      if (depth_ == 0) fail(std::string("unmatched '") + c + "'");
      --depth_;
    }
    advance();
    line_has_tokens_ = true;
    emit(TokenKind::Op, std::string(1, c), begin, here());
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::uint32_t line_ = 1;
  std::uint32_t col_ = 0;
  int depth_ = 0;
  bool at_line_start_ = true;
  bool line_has_tokens_ = false;
  std::vector<std::uint32_t> indents_;
  std::vector<Token> tokens_;
};

}  // namespace

SyntaxError::SyntaxError(Position where, std::vector<std::string> expected,
                         const std::string& message)
    : Error(ErrorCode::SyntaxError,
            [&] {
              std::string text = std::to_string(where.line) + ":" +
                                 std::to_string(where.column) + ": " + message;
              if (!expected.empty()) {
                text += " (expected ";
                for (std::size_t i = 0; i < expected.size(); ++i) {
                  if (i) text += ", ";
                  text += expected[i];
                }
                text += ")";
              }
              return text;
            }()),
      where_(where),
      expected_(std::move(expected)) {}

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

}  // namespace nbmig::cell
