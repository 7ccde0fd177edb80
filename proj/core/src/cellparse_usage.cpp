#include <json.hpp>

#include "nbmig/cellparse.hpp"

namespace nbmig::cell {

namespace {

using Bound = std::set<std::string>;

// Walks statements in straight-line order. Stores inside if/for bodies never bind for
// the statements that follow the compound statement, since the body may not run.
class UsageWalker {
 public:
  UsageWalker(NameUsage& usage, bool top_level) : u_(usage), top_level_(top_level) {}

  void statements(const std::vector<Node>& stmts, Bound& bound) {
    for (const auto& s : stmts) statement(s, bound);
  }

 private:
  void store(const std::string& name, Bound& bound) {
    u_.stores.insert(name);
    bound.insert(name);
  }

  void target(const Node& t, Bound& bound) {
    if (t.kind == NodeKind::Name) {
      store(t.text, bound);
      return;
    }
    // Attribute/subscript stores read their base object.
    for (const auto& c : t.children) expr(c, bound);
  }

  void statement(const Node& s, Bound& bound) {
    switch (s.kind) {
      case NodeKind::Assign:
        expr(s.children[1], bound);
        target(s.children[0], bound);
        break;
      case NodeKind::AugAssign: {
        const Node& t = s.children[0];
        expr(s.children[1], bound);
        if (t.kind == NodeKind::Name) {
          load(t.text, bound);
          store(t.text, bound);
        } else {
          target(t, bound);
        }
        break;
      }
      case NodeKind::ExprStatement:
      case NodeKind::Return:
        for (const auto& c : s.children) expr(c, bound);
        break;
      case NodeKind::FunctionDef: {
        for (const auto& p : s.children[0].children) {
          for (const auto& d : p.children) expr(d, bound);
        }
        for (const auto& name : free_names(s)) load(name, bound);
        if (top_level_) u_.defined_functions.insert_or_assign(s.text, s);
        store(s.text, bound);
        break;
      }
      case NodeKind::Import:
        for (const auto& alias : s.children) {
          u_.imports.insert(alias.text);
          store(root_of(alias.text), bound);
        }
        break;
      case NodeKind::If: {
        expr(s.children[0], bound);
        for (std::size_t i = 1; i < s.children.size(); ++i) {
          Bound branch = bound;
          statements(s.children[i].children, branch);
        }
        break;
      }
      case NodeKind::For: {
        expr(s.children[1], bound);
        Bound body = bound;
        store(s.children[0].text, body);
        statements(s.children[2].children, body);
        break;
      }
      default:
        break;
    }
  }

  void load(const std::string& name, const Bound& bound) {
    if (!bound.contains(name)) u_.loads.insert(name);
  }

  void expr(const Node& e, const Bound& bound) {
    switch (e.kind) {
      case NodeKind::Name:
        if (e.ctx == NameContext::Load) load(e.text, bound);
        return;
      case NodeKind::Call:
        if (top_level_) record_call(e);
        break;
      default:
        break;
    }
    for (const auto& c : e.children) expr(c, bound);
  }

  void record_call(const Node& call) {
    const std::string callee = dotted_name(call.children[0]);
    if (callee.empty()) return;
    u_.called.insert(callee);
    for (std::size_t i = 1; i < call.children.size(); ++i) {
      const Node& arg = call.children[i];
      if (arg.kind != NodeKind::Keyword) continue;
      u_.kwargs[callee].insert_or_assign(arg.text, keyword_value(arg.children[0]));
    }
  }

  static KeywordValue keyword_value(const Node& v) {
    KeywordValue kv;
    if (v.kind == NodeKind::Literal) {
      kv.is_literal = true;
      kv.literal = v.literal;
      kv.text = v.text;
      return kv;
    }
    if (v.kind == NodeKind::UnaryOp && (v.text == "-" || v.text == "+") &&
        v.children[0].kind == NodeKind::Literal &&
        (v.children[0].literal == LiteralKind::Int || v.children[0].literal == LiteralKind::Float)) {
      kv.is_literal = true;
      kv.literal = v.children[0].literal;
      kv.text = (v.text == "-" ? "-" : "") + v.children[0].text;
      return kv;
    }
    kv.text = dotted_name(v);
    if (kv.text.empty()) kv.text = "<" + std::string(to_string(v.kind)) + ">";
    return kv;
  }

  NameUsage& u_;
  bool top_level_;
};

}  // namespace

std::string root_of(std::string_view dotted) {
  return std::string(dotted.substr(0, dotted.find('.')));
}

std::string dotted_name(const Node& expr) {
  if (expr.kind == NodeKind::Name) return expr.text;
  if (expr.kind == NodeKind::Attribute) {
    auto base = dotted_name(expr.children[0]);
    return base.empty() ? std::string{} : base + "." + expr.text;
  }
  return {};
}

std::set<std::string> free_names(const Node& function_def) {
  NameUsage scratch;
  Bound bound;
  for (const auto& p : function_def.children[0].children) bound.insert(p.text);
  UsageWalker walker(scratch, false);
  walker.statements(function_def.children[1].children, bound);
  return scratch.loads;
}

NameUsage extract_usage(const CellAst& ast) {
  NameUsage usage;
  Bound bound;
  UsageWalker(usage, true).statements(ast.statements, bound);
  return usage;
}

std::set<std::string> NameUsage::required_names() const {
  std::set<std::string> out = loads;
  for (const auto& c : called) out.insert(root_of(c));
  for (const auto& m : imports) out.insert(root_of(m));
  return out;
}

std::string usage_json(const NameUsage& usage, int indent) {
  nlohmann::ordered_json j;
  j["loads"] = usage.loads;
  j["stores"] = usage.stores;
  j["called"] = usage.called;
  j["imports"] = usage.imports;
  auto& kw = j["kwargs"] = nlohmann::ordered_json::object();
  for (const auto& [callee, args] : usage.kwargs) {
    auto& entry = kw[callee] = nlohmann::ordered_json::object();
    for (const auto& [name, value] : args) {
      entry[name] = {{"literal", value.is_literal}, {"value", value.text}};
    }
  }
  auto& fns = j["defined_functions"] = nlohmann::ordered_json::object();
  for (const auto& [name, node] : usage.defined_functions) fns[name] = free_names(node);
  return j.dump(indent);
}

}  // namespace nbmig::cell
