#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nbmig/error.hpp"

namespace nbmig::cell {

// 1-based line, 0-based column. `end` is exclusive.
struct Position {
  std::uint32_t line = 1;
  std::uint32_t column = 0;

  auto operator<=>(const Position&) const = default;
};

struct Span {
  Position begin;
  Position end;

  bool operator==(const Span&) const = default;
};

enum class TokenKind : std::uint8_t {
  Name,
  Int,
  Float,
  String,
  Op,
  Newline,
  Indent,
  Dedent,
  End,
};

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;  // spelling; for String, the decoded value
  Span span;
};

// Python-style layout: NEWLINE/INDENT/DEDENT tokens, '#' comments, implicit line
// joining inside brackets. Throws SyntaxError.
std::vector<Token> tokenize(std::string_view source);

enum class NodeKind : std::uint8_t {
  // statements
  Assign,         // [target, value]
  AugAssign,      // text=op ("+=") [target, value]
  ExprStatement,  // [expr]
  FunctionDef,    // text=name [Parameters, Block]
  Return,         // [value?]
  Import,         // [Alias...]
  If,             // [test, Block, Block?]  (elif nests an If inside the else Block)
  For,            // [target Name(Store), iterable, Block]
  Pass,
  // structure
  Block,       // [statement...]
  Parameters,  // [Param...]
  Param,       // text=name [default?]
  Alias,       // text=dotted module name
  // expressions
  Call,         // [callee, positional args..., Keyword...]
  Keyword,      // text=name [value]
  Attribute,    // text=attribute [value]
  Subscript,    // [value, index]
  Name,         // text=identifier
  Literal,      // text=spelling
  ListDisplay,  // [element...]
  BinOp,        // text=op [lhs, rhs]
  UnaryOp,      // text=op [operand]
  BoolOp,       // text=and|or [lhs, rhs]
  Compare,      // text=op [lhs, rhs]
};

std::string_view to_string(NodeKind kind) noexcept;

enum class NameContext : std::uint8_t { None, Load, Store };
enum class LiteralKind : std::uint8_t { None, Int, Float, String, Bool, NoneValue };

struct Node {
  NodeKind kind = NodeKind::Pass;
  Span span;
  std::string text;
  NameContext ctx = NameContext::None;      // Name, Attribute, Subscript
  LiteralKind literal = LiteralKind::None;  // Literal
  std::vector<Node> children;

  bool operator==(const Node&) const = default;
};

struct CellAst {
  std::vector<Node> statements;

  bool operator==(const CellAst&) const = default;
};

class SyntaxError : public Error {
 public:
  SyntaxError(Position where, std::vector<std::string> expected, const std::string& message);

  Position where() const noexcept { return where_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  Position where_;
  std::vector<std::string> expected_;
};

CellAst parse_cell(std::string_view source);

// {"kind", "span": [line, col, end_line, end_col], "text"?, "ctx"?, "literal"?, "children"?}
std::string ast_json(const CellAst& ast, int indent = -1);

// A keyword argument value: an integer/float/string/bool/none literal, or a symbolic
// expression that cannot be evaluated statically.
struct KeywordValue {
  bool is_literal = false;
  LiteralKind literal = LiteralKind::None;
  std::string text;  // literal spelling or the symbolic expression's dotted name

  bool operator==(const KeywordValue&) const = default;
};

struct NameUsage {
  std::set<std::string> loads;
  std::set<std::string> stores;
  std::set<std::string> called;   // dotted call targets ("model.fit")
  std::set<std::string> imports;  // dotted module names
  std::map<std::string, std::map<std::string, KeywordValue>> kwargs;
  std::map<std::string, Node> defined_functions;

  bool operator==(const NameUsage&) const = default;

  // loads, called roots and import roots: the names a cell needs from the namespace.
  std::set<std::string> required_names() const;
};

NameUsage extract_usage(const CellAst& ast);

// Names a function body reads from the enclosing (global) namespace.
std::set<std::string> free_names(const Node& function_def);

// First segment of a dotted name.
std::string root_of(std::string_view dotted);

// Dotted rendering of a Name/Attribute chain, empty for anything else.
std::string dotted_name(const Node& expr);

// Copy of the node with every span zeroed, for structural comparison.
Node strip_spans(Node node);

std::string usage_json(const NameUsage& usage, int indent = -1);

}  // namespace nbmig::cell
