#include <algorithm>
#include <array>

#include <json.hpp>

#include "nbmig/cellparse.hpp"

namespace nbmig::cell {

namespace {

constexpr std::array<std::string_view, 17> kKeywords = {
    "def",  "return", "if",  "elif", "else", "for",   "in",    "import", "pass",
    "and",  "or",     "not", "True", "False", "None", "while", "class"};

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

constexpr std::array<std::string_view, 6> kCompareOps = {"==", "!=", "<", "<=", ">", ">="};
constexpr std::array<std::string_view, 7> kAugOps = {"+=", "-=", "*=", "/=", "//=", "%=", "**="};

template <std::size_t N>
bool one_of(std::string_view text, const std::array<std::string_view, N>& set) {
  return std::find(set.begin(), set.end(), text) != set.end();
}

std::string describe(const Token& tok) {
  switch (tok.kind) {
    case TokenKind::Name: return "'" + tok.text + "'";
    case TokenKind::Int:
    case TokenKind::Float: return "number " + tok.text;
    case TokenKind::String: return "string literal";
    case TokenKind::Op: return "'" + tok.text + "'";
    case TokenKind::Newline: return "end of line";
    case TokenKind::Indent: return "indent";
    case TokenKind::Dedent: return "dedent";
    case TokenKind::End: return "end of input";
  }
  return "token";
}

Node make(NodeKind kind, Span span, std::string text = {}) {
  Node n;
  n.kind = kind;
  n.span = span;
  n.text = std::move(text);
  return n;
}

Span cover(const Span& a, const Span& b) { return Span{a.begin, b.end}; }

// Recursive descent over the cell grammar documented in docs/grammar.md.
class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  CellAst parse() {
    CellAst ast;
    while (!at_kind(TokenKind::End)) {
      if (at_kind(TokenKind::Newline)) {
        ++pos_;
        continue;
      }
      if (at_kind(TokenKind::Indent)) fail({"statement"}, "unexpected indent");
      parse_statement(ast.statements);
    }
    return ast;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at_kind(TokenKind kind) const { return peek().kind == kind; }
  bool at_op(std::string_view op) const { return peek().kind == TokenKind::Op && peek().text == op; }
  bool at_word(std::string_view w) const { return peek().kind == TokenKind::Name && peek().text == w; }

  const Token& take() { return toks_[pos_++]; }

  [[noreturn]] void fail(std::vector<std::string> expected, const std::string& message = {}) {
    const Token& tok = peek();
    throw SyntaxError(tok.span.begin, std::move(expected),
                      message.empty() ? "unexpected " + describe(tok) : message);
  }

  const Token& expect_op(std::string_view op) {
    if (!at_op(op)) fail({"'" + std::string(op) + "'"});
    return take();
  }

  const Token& expect_word(std::string_view w) {
    if (!at_word(w)) fail({"'" + std::string(w) + "'"});
    return take();
  }

  const Token& expect_identifier() {
    if (!at_kind(TokenKind::Name) || is_keyword(peek().text)) fail({"identifier"});
    return take();
  }

  void expect_newline() {
    if (at_kind(TokenKind::Newline)) {
      ++pos_;
      return;
    }
    if (at_kind(TokenKind::End)) return;
    fail({"end of line", "';'"});
  }

  // statement := compound | simple (';' simple)* [';'] NEWLINE
  void parse_statement(std::vector<Node>& out) {
    if (at_word("def")) {
      out.push_back(parse_def());
    } else if (at_word("if")) {
      out.push_back(parse_if());
    } else if (at_word("for")) {
      out.push_back(parse_for());
    } else {
      parse_simple_line(out);
    }
  }

  void parse_simple_line(std::vector<Node>& out) {
    out.push_back(parse_simple());
    while (at_op(";")) {
      ++pos_;
      if (at_kind(TokenKind::Newline) || at_kind(TokenKind::End)) break;
      out.push_back(parse_simple());
    }
    expect_newline();
  }

  Node parse_simple() {
    const Token& first = peek();
    if (at_word("pass")) {
      take();
      return make(NodeKind::Pass, first.span);
    }
    if (at_word("return")) {
      take();
      Node ret = make(NodeKind::Return, first.span);
      if (!at_kind(TokenKind::Newline) && !at_kind(TokenKind::End) && !at_op(";")) {
        ret.children.push_back(parse_expr());
        ret.span = cover(first.span, ret.children.back().span);
      }
      return ret;
    }
    if (at_word("import")) return parse_import();
    if (at_kind(TokenKind::Name) && is_keyword(peek().text) && !at_word("not") &&
        !at_word("True") && !at_word("False") && !at_word("None")) {
      fail({"statement"}, "unsupported statement '" + peek().text + "'");
    }

    Node expr = parse_expr();
    if (at_op("=")) {
      take();
      mark_store(expr);
      Node value = parse_expr();
      if (at_op("=")) fail({"end of line"}, "chained assignment is not supported");
      Node assign = make(NodeKind::Assign, cover(expr.span, value.span));
      assign.children.push_back(std::move(expr));
      assign.children.push_back(std::move(value));
      return assign;
    }
    if (peek().kind == TokenKind::Op && one_of(peek().text, kAugOps)) {
      const std::string op = take().text;
      if (expr.kind != NodeKind::Name && expr.kind != NodeKind::Attribute &&
          expr.kind != NodeKind::Subscript) {
        fail({"assignable target"}, "cannot augment-assign to " + std::string(to_string(expr.kind)));
      }
      Node value = parse_expr();
      Node aug = make(NodeKind::AugAssign, cover(expr.span, value.span), op);
      expr.ctx = NameContext::Store;
      aug.children.push_back(std::move(expr));
      aug.children.push_back(std::move(value));
      return aug;
    }
    Node stmt = make(NodeKind::ExprStatement, expr.span);
    stmt.children.push_back(std::move(expr));
    return stmt;
  }

  void mark_store(Node& target) {
    switch (target.kind) {
      case NodeKind::Name:
      case NodeKind::Attribute:
      case NodeKind::Subscript:
        target.ctx = NameContext::Store;
        return;
      default:
        throw SyntaxError(target.span.begin, {"name", "attribute", "subscript"},
                          "cannot assign to " + std::string(to_string(target.kind)));
    }
  }

  Node parse_import() {
    const Token& kw = take();
    Node imp = make(NodeKind::Import, kw.span);
    do {
      if (!imp.children.empty()) take();  // ','
      const Token& head = expect_identifier();
      std::string dotted = head.text;
      Span span = head.span;
      while (at_op(".")) {
        take();
        const Token& part = expect_identifier();
        dotted += "." + part.text;
        span.end = part.span.end;
      }
      if (at_word("as")) fail({"',' or end of line"}, "'import ... as' is not supported");
      imp.children.push_back(make(NodeKind::Alias, span, std::move(dotted)));
      imp.span.end = span.end;
    } while (at_op(","));
    return imp;
  }

  // block := simple_line | NEWLINE INDENT statement+ DEDENT
  Node parse_block() {
    Node block = make(NodeKind::Block, peek().span);
    if (!at_kind(TokenKind::Newline)) {
      parse_simple_line(block.children);
    } else {
      take();
      if (!at_kind(TokenKind::Indent)) fail({"indented block"});
      take();
      while (!at_kind(TokenKind::Dedent) && !at_kind(TokenKind::End)) {
        if (at_kind(TokenKind::Newline)) {
          ++pos_;
          continue;
        }
        parse_statement(block.children);
      }
      if (at_kind(TokenKind::Dedent)) take();
    }
    if (!block.children.empty()) {
      block.span = cover(block.children.front().span, block.children.back().span);
    }
    return block;
  }

  Node parse_def() {
    const Token& kw = take();
    const Token& name = expect_identifier();
    Node fn = make(NodeKind::FunctionDef, kw.span, name.text);
    const Token& open = expect_op("(");
    Node params = make(NodeKind::Parameters, open.span);
    bool seen_default = false;
    while (!at_op(")")) {
      const Token& pname = expect_identifier();
      Node param = make(NodeKind::Param, pname.span, pname.text);
      if (at_op("=")) {
        take();
        param.children.push_back(parse_expr());
        param.span = cover(param.span, param.children.back().span);
        seen_default = true;
      } else if (seen_default) {
        throw SyntaxError(pname.span.begin, {"'='"},
                          "non-default parameter follows default parameter");
      }
      if (std::any_of(params.children.begin(), params.children.end(),
                      [&](const Node& p) { return p.text == pname.text; })) {
        throw SyntaxError(pname.span.begin, {}, "duplicate parameter '" + pname.text + "'");
      }
      params.children.push_back(std::move(param));
      if (!at_op(",")) break;
      take();
    }
    params.span.end = expect_op(")").span.end;
    expect_op(":");
    Node body = parse_block();
    fn.span = cover(kw.span, body.span);
    fn.children.push_back(std::move(params));
    fn.children.push_back(std::move(body));
    return fn;
  }

  Node parse_if() {
    const Token& kw = take();  // 'if' or 'elif'
    Node test = parse_expr();
    expect_op(":");
    Node then = parse_block();
    Node node = make(NodeKind::If, cover(kw.span, then.span));
    node.children.push_back(std::move(test));
    node.children.push_back(std::move(then));
    if (at_word("elif")) {
      Node nested = parse_if();
      Node orelse = make(NodeKind::Block, nested.span);
      node.span.end = nested.span.end;
      orelse.children.push_back(std::move(nested));
      node.children.push_back(std::move(orelse));
    } else if (at_word("else")) {
      take();
      expect_op(":");
      Node orelse = parse_block();
      node.span.end = orelse.span.end;
      node.children.push_back(std::move(orelse));
    }
    return node;
  }

  Node parse_for() {
    const Token& kw = take();
    const Token& var = expect_identifier();
    Node target = make(NodeKind::Name, var.span, var.text);
    target.ctx = NameContext::Store;
    expect_word("in");
    Node iterable = parse_expr();
    expect_op(":");
    Node body = parse_block();
    Node node = make(NodeKind::For, cover(kw.span, body.span));
    node.children.push_back(std::move(target));
    node.children.push_back(std::move(iterable));
    node.children.push_back(std::move(body));
    return node;
  }

  // expr := or_expr
  Node parse_expr() { return parse_or(); }

  Node binary(NodeKind kind, std::string op, Node lhs, Node rhs) {
    Node n = make(kind, cover(lhs.span, rhs.span), std::move(op));
    n.children.push_back(std::move(lhs));
    n.children.push_back(std::move(rhs));
    return n;
  }

  Node parse_or() {
    Node lhs = parse_and();
    while (at_word("or")) {
      take();
      lhs = binary(NodeKind::BoolOp, "or", std::move(lhs), parse_and());
    }
    return lhs;
  }

  Node parse_and() {
    Node lhs = parse_not();
    while (at_word("and")) {
      take();
      lhs = binary(NodeKind::BoolOp, "and", std::move(lhs), parse_not());
    }
    return lhs;
  }

  Node parse_not() {
    if (at_word("not")) {
      const Token& kw = take();
      Node operand = parse_not();
      Node n = make(NodeKind::UnaryOp, cover(kw.span, operand.span), "not");
      n.children.push_back(std::move(operand));
      return n;
    }
    return parse_comparison();
  }

  // Comparisons do not chain: "a < b < c" is rejected.
  Node parse_comparison() {
    Node lhs = parse_arith();
    if (peek().kind == TokenKind::Op && one_of(peek().text, kCompareOps)) {
      const std::string op = take().text;
      lhs = binary(NodeKind::Compare, op, std::move(lhs), parse_arith());
      if (peek().kind == TokenKind::Op && one_of(peek().text, kCompareOps)) {
        fail({"end of expression"}, "chained comparisons are not supported");
      }
    }
    return lhs;
  }

  Node parse_arith() {
    Node lhs = parse_term();
    while (at_op("+") || at_op("-")) {
      const std::string op = take().text;
      lhs = binary(NodeKind::BinOp, op, std::move(lhs), parse_term());
    }
    return lhs;
  }

  Node parse_term() {
    Node lhs = parse_factor();
    while (at_op("*") || at_op("/") || at_op("//") || at_op("%")) {
      const std::string op = take().text;
      lhs = binary(NodeKind::BinOp, op, std::move(lhs), parse_factor());
    }
    return lhs;
  }

  Node parse_factor() {
    if (at_op("-") || at_op("+")) {
      const Token& sign = take();
      Node operand = parse_factor();
      Node n = make(NodeKind::UnaryOp, cover(sign.span, operand.span), sign.text);
      n.children.push_back(std::move(operand));
      return n;
    }
    return parse_power();
  }

  // '**' binds tighter than unary minus on its left and is right-associative.
  Node parse_power() {
    Node base = parse_primary();
    if (at_op("**")) {
      take();
      return binary(NodeKind::BinOp, "**", std::move(base), parse_factor());
    }
    return base;
  }

  Node parse_primary() {
    Node expr = parse_atom();
    while (true) {
      if (at_op("(")) {
        expr = parse_call(std::move(expr));
      } else if (at_op(".")) {
        take();
        const Token& attr = expect_identifier();
        Node n = make(NodeKind::Attribute, cover(expr.span, attr.span), attr.text);
        n.ctx = NameContext::Load;
        n.children.push_back(std::move(expr));
        expr = std::move(n);
      } else if (at_op("[")) {
        take();
        Node index = parse_expr();
        const Token& close = expect_op("]");
        Node n = make(NodeKind::Subscript, cover(expr.span, close.span));
        n.ctx = NameContext::Load;
        n.children.push_back(std::move(expr));
        n.children.push_back(std::move(index));
        expr = std::move(n);
      } else {
        return expr;
      }
    }
  }

  Node parse_call(Node callee) {
    take();  // '('
    Node call = make(NodeKind::Call, callee.span);
    call.children.push_back(std::move(callee));
    bool seen_keyword = false;
    while (!at_op(")")) {
      if (at_kind(TokenKind::Name) && !is_keyword(peek().text) && peek(1).kind == TokenKind::Op &&
          peek(1).text == "=") {
        const Token& name = take();
        take();  // '='
        Node value = parse_expr();
        const bool duplicate = std::any_of(call.children.begin() + 1, call.children.end(), [&](const Node& c) {
          return c.kind == NodeKind::Keyword && c.text == name.text;
        });
        if (duplicate) {
          throw SyntaxError(name.span.begin, {}, "keyword argument repeated: '" + name.text + "'");
        }
        Node kw = make(NodeKind::Keyword, cover(name.span, value.span), name.text);
        kw.children.push_back(std::move(value));
        call.children.push_back(std::move(kw));
        seen_keyword = true;
      } else {
        const Token& start = peek();
        Node arg = parse_expr();
        if (seen_keyword) {
          throw SyntaxError(start.span.begin, {"keyword argument"},
                            "positional argument follows keyword argument");
        }
        call.children.push_back(std::move(arg));
      }
      if (!at_op(",")) break;
      take();
    }
    call.span.end = expect_op(")").span.end;
    return call;
  }

  Node parse_atom() {
    const Token& tok = peek();
    switch (tok.kind) {
      case TokenKind::Int:
      case TokenKind::Float: {
        take();
        Node lit = make(NodeKind::Literal, tok.span, tok.text);
        lit.literal = tok.kind == TokenKind::Int ? LiteralKind::Int : LiteralKind::Float;
        return lit;
      }
      case TokenKind::String: {
        take();
        Node lit = make(NodeKind::Literal, tok.span, tok.text);
        lit.literal = LiteralKind::String;
        return lit;
      }
      case TokenKind::Name: {
        if (tok.text == "True" || tok.text == "False" || tok.text == "None") {
          take();
          Node lit = make(NodeKind::Literal, tok.span, tok.text);
          lit.literal = tok.text == "None" ? LiteralKind::NoneValue : LiteralKind::Bool;
          return lit;
        }
        if (is_keyword(tok.text)) fail({"expression"});
        take();
        Node name = make(NodeKind::Name, tok.span, tok.text);
        name.ctx = NameContext::Load;
        return name;
      }
      case TokenKind::Op:
        if (tok.text == "(") {
          take();
          Node inner = parse_expr();
          expect_op(")");
          return inner;
        }
        if (tok.text == "[") {
          take();
          Node list = make(NodeKind::ListDisplay, tok.span);
          while (!at_op("]")) {
            list.children.push_back(parse_expr());
            if (!at_op(",")) break;
            take();
          }
          list.span.end = expect_op("]").span.end;
          return list;
        }
        break;
      default:
        break;
    }
    fail({"expression"});
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

const char* ctx_name(NameContext ctx) {
  switch (ctx) {
    case NameContext::Load: return "Load";
    case NameContext::Store: return "Store";
    case NameContext::None: break;
  }
  return "";
}

const char* literal_name(LiteralKind kind) {
  switch (kind) {
    case LiteralKind::Int: return "int";
    case LiteralKind::Float: return "float";
    case LiteralKind::String: return "string";
    case LiteralKind::Bool: return "bool";
    case LiteralKind::NoneValue: return "none";
    case LiteralKind::None: break;
  }
  return "";
}

nlohmann::ordered_json node_json(const Node& n) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(n.kind));
  j["span"] = {n.span.begin.line, n.span.begin.column, n.span.end.line, n.span.end.column};
  if (!n.text.empty() || n.kind == NodeKind::Literal) j["text"] = n.text;
  if (n.ctx != NameContext::None) j["ctx"] = ctx_name(n.ctx);
  if (n.literal != LiteralKind::None) j["literal"] = literal_name(n.literal);
  if (!n.children.empty()) {
    auto& arr = j["children"] = nlohmann::ordered_json::array();
    for (const auto& c : n.children) arr.push_back(node_json(c));
  }
  return j;
}

}  // namespace

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::Assign: return "Assign";
    case NodeKind::AugAssign: return "AugAssign";
    case NodeKind::ExprStatement: return "ExprStatement";
    case NodeKind::FunctionDef: return "FunctionDef";
    case NodeKind::Return: return "Return";
    case NodeKind::Import: return "Import";
    case NodeKind::If: return "If";
    case NodeKind::For: return "For";
    case NodeKind::Pass: return "Pass";
    case NodeKind::Block: return "Block";
    case NodeKind::Parameters: return "Parameters";
    case NodeKind::Param: return "Param";
    case NodeKind::Alias: return "Alias";
    case NodeKind::Call: return "Call";
    case NodeKind::Keyword: return "Keyword";
    case NodeKind::Attribute: return "Attribute";
    case NodeKind::Subscript: return "Subscript";
    case NodeKind::Name: return "Name";
    case NodeKind::Literal: return "Literal";
    case NodeKind::ListDisplay: return "ListDisplay";
    case NodeKind::BinOp: return "BinOp";
    case NodeKind::UnaryOp: return "UnaryOp";
    case NodeKind::BoolOp: return "BoolOp";
    case NodeKind::Compare: return "Compare";
  }
  return "Unknown";
}

CellAst parse_cell(std::string_view source) { return Parser(tokenize(source)).parse(); }

std::string ast_json(const CellAst& ast, int indent) {
  nlohmann::ordered_json j;
  j["kind"] = "Cell";
  auto& arr = j["statements"] = nlohmann::ordered_json::array();
  for (const auto& s : ast.statements) arr.push_back(node_json(s));
  return j.dump(indent);
}

Node strip_spans(Node node) {
  node.span = Span{};
  for (auto& c : node.children) c = strip_spans(std::move(c));
  return node;
}

}  // namespace nbmig::cell
