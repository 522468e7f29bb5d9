#include "itarray/expression.hpp"

#include <charconv>
#include <cmath>
#include <cctype>
#include <optional>

namespace itarray {

namespace {

using Node = Expression::Node;
using Op = Expression::Op;
using Cmp = Expression::Cmp;

[[noreturn]] void syntax(const std::string& msg) { throw Error(ErrorCode::ExpressionSyntaxError, msg); }
[[noreturn]] void type_error(const std::string& msg) { throw Error(ErrorCode::ExpressionTypeError, msg); }

// ---------------------------------------------------------------- lexer

enum class Tok { End, Number, Name, Sym };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::size_t pos = 0;
};

std::vector<Token> lex(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
          i = j;
          while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        }
      }
      out.push_back({Tok::Number, std::string(s.substr(start, i - start)), start});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      out.push_back({Tok::Name, std::string(s.substr(start, i - start)), start});
      continue;
    }
    static constexpr std::string_view two[] = {"<=", ">=", "==", "!=", "&&", "||"};
    bool matched = false;
    for (auto sym : two) {
      if (s.substr(i, 2) == sym) {
        out.push_back({Tok::Sym, std::string(sym), start});
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("+-*/<>()[],.?:!").find(c) != std::string_view::npos) {
      out.push_back({Tok::Sym, std::string(1, c), start});
      ++i;
      continue;
    }
    syntax("unexpected character '" + std::string(1, c) + "' at " + std::to_string(i));
  }
  out.push_back({Tok::End, "", s.size()});
  return out;
}

// ---------------------------------------------------------------- parser

bool is_function(std::string_view n) {
  return n == "sqrt" || n == "abs" || n == "min" || n == "max" || n == "isnull" || n == "float" ||
         n == "int";
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Node parse_all() {
    Node n = expr();
    if (peek().kind != Tok::End) syntax("unexpected '" + peek().text + "' at " + std::to_string(peek().pos));
    return n;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  bool is_sym(std::string_view s) const { return peek().kind == Tok::Sym && peek().text == s; }
  bool is_word(std::string_view s) const { return peek().kind == Tok::Name && peek().text == s; }
  Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  void expect(std::string_view s) {
    if (!is_sym(s)) syntax("expected '" + std::string(s) + "' at " + std::to_string(peek().pos));
    take();
  }

  Node expr() {
    Node c = or_expr();
    if (!is_sym("?")) return c;
    take();
    Node a = expr();
    expect(":");
    Node b = expr();
    Node n;
    n.op = Op::Cond;
    n.kids = {std::move(c), std::move(a), std::move(b)};
    return n;
  }

  Node or_expr() {
    Node l = and_expr();
    while (is_sym("||") || is_word("or")) {
      take();
      Node n;
      n.op = Op::Or;
      n.kids = {std::move(l), and_expr()};
      l = std::move(n);
    }
    return l;
  }

  Node and_expr() {
    Node l = not_expr();
    while (is_sym("&&") || is_word("and")) {
      take();
      Node n;
      n.op = Op::And;
      n.kids = {std::move(l), not_expr()};
      l = std::move(n);
    }
    return l;
  }

  Node not_expr() {
    if (is_sym("!") || is_word("not")) {
      take();
      Node n;
      n.op = Op::Not;
      n.kids = {not_expr()};
      return n;
    }
    return cmp_expr();
  }

  std::optional<Cmp> cmp_op() const {
    if (peek().kind != Tok::Sym) return std::nullopt;
    const auto& t = peek().text;
    if (t == "<") return Cmp::Lt;
    if (t == "<=") return Cmp::Le;
    if (t == ">") return Cmp::Gt;
    if (t == ">=") return Cmp::Ge;
    if (t == "==") return Cmp::Eq;
    if (t == "!=") return Cmp::Ne;
    return std::nullopt;
  }

  Node cmp_expr() {
    Node first = sum();
    if (!cmp_op()) return first;
    Node n;
    n.op = Op::Compare;
    n.kids.push_back(std::move(first));
    while (auto c = cmp_op()) {
      take();
      n.cmps.push_back(*c);
      n.kids.push_back(sum());
    }
    return n;
  }

  Node sum() {
    Node l = prod();
    while (is_sym("+") || is_sym("-")) {
      Op op = take().text == "+" ? Op::Add : Op::Sub;
      Node n;
      n.op = op;
      n.kids = {std::move(l), prod()};
      l = std::move(n);
    }
    return l;
  }

  Node prod() {
    Node l = unary();
    while (is_sym("*") || is_sym("/")) {
      Op op = take().text == "*" ? Op::Mul : Op::Div;
      Node n;
      n.op = op;
      n.kids = {std::move(l), unary()};
      l = std::move(n);
    }
    return l;
  }

  Node unary() {
    if (is_sym("-")) {
      take();
      Node inner = unary();
      if (inner.op == Op::Number && !inner.literal.is_null()) {
        bool negative = inner.literal.is_int() ? inner.literal.as_int() < 0
                                               : std::signbit(inner.literal.as_double());
        if (!negative) {
          inner.literal = inner.literal.is_int() ? Scalar(-inner.literal.as_int())
                                                 : Scalar(-inner.literal.as_double());
          return inner;
        }
      }
      Node n;
      n.op = Op::Neg;
      n.kids = {std::move(inner)};
      return n;
    }
    return primary();
  }

  Node primary() {
    const Token& t = peek();
    if (t.kind == Tok::Number) {
      std::string text = take().text;
      Node n;
      n.op = Op::Number;
      bool is_float = text.find_first_of(".eE") != std::string::npos;
      if (is_float) {
        double v = 0;
        auto r = std::from_chars(text.data(), text.data() + text.size(), v);
        if (r.ec != std::errc() || r.ptr != text.data() + text.size()) syntax("bad number '" + text + "'");
        n.literal = Scalar(v);
      } else {
        std::int64_t v = 0;
        auto r = std::from_chars(text.data(), text.data() + text.size(), v);
        if (r.ec != std::errc() || r.ptr != text.data() + text.size()) syntax("bad number '" + text + "'");
        n.literal = Scalar(v);
      }
      return n;
    }
    if (t.kind == Tok::Name) {
      std::string name = take().text;
      Node n;
      if (name == "null") {
        n.op = Op::Null;
        return n;
      }
      if (name == "inf" || name == "nan") {
        n.op = Op::Number;
        n.literal = Scalar(name == "inf" ? HUGE_VAL : std::nan(""));
        return n;
      }
      if ((name == "src" || name == "ext") && is_sym(".")) {
        take();
        if (peek().kind != Tok::Name) syntax("expected a name after '" + name + ".'");
        n.op = Op::Ref;
        n.side = name;
        n.name = take().text;
        return n;
      }
      if (name == "src" || name == "ext") {
        n.op = name == "src" ? Op::SrcTuple : Op::ExtTuple;
        return n;
      }
      if (is_function(name) && is_sym("(")) {
        take();
        n.op = Op::Call;
        n.name = name;
        n.kids.push_back(expr());
        while (is_sym(",")) {
          take();
          n.kids.push_back(expr());
        }
        expect(")");
        return n;
      }
      n.op = Op::Ref;
      n.name = name;
      return n;
    }
    if (is_sym("(")) {
      take();
      Node n = expr();
      expect(")");
      return n;
    }
    if (is_sym("[")) {
      take();
      Node n;
      n.op = Op::TupleLit;
      n.kids.push_back(expr());
      while (is_sym(",")) {
        take();
        n.kids.push_back(expr());
      }
      expect("]");
      return n;
    }
    syntax(t.kind == Tok::End ? std::string("unexpected end of expression")
                              : "unexpected '" + t.text + "' at " + std::to_string(t.pos));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------- printer

int precedence(const Node& n) {
  switch (n.op) {
    case Op::Cond: return 1;
    case Op::Or: return 2;
    case Op::And: return 3;
    case Op::Not: return 4;
    case Op::Compare: return 5;
    case Op::Add:
    case Op::Sub: return 6;
    case Op::Mul:
    case Op::Div: return 7;
    case Op::Neg: return 8;
    case Op::Number:
      if (n.literal.is_int() ? n.literal.as_int() < 0 : std::signbit(n.literal.as_double())) return 8;
      return 9;
    default: return 9;
  }
}

std::string number_text(const Scalar& s) {
  std::string t = format_scalar(s);
  if (s.is_float() && t.find_first_of(".en") == std::string::npos) t += ".0";
  return t;
}

std::string_view cmp_text(Cmp c) {
  switch (c) {
    case Cmp::Lt: return "<";
    case Cmp::Le: return "<=";
    case Cmp::Gt: return ">";
    case Cmp::Ge: return ">=";
    case Cmp::Eq: return "==";
    case Cmp::Ne: return "!=";
  }
  return "?";
}

std::string print(const Node& n, int min_prec);

std::string print_list(const std::vector<Node>& kids) {
  std::string s;
  for (std::size_t i = 0; i < kids.size(); ++i) s += (i ? ", " : "") + print(kids[i], 0);
  return s;
}

std::string print(const Node& n, int min_prec) {
  std::string s;
  int p = precedence(n);
  switch (n.op) {
    case Op::Number: s = number_text(n.literal); break;
    case Op::Null: s = "null"; break;
    case Op::Ref: s = n.side.empty() ? n.name : n.side + "." + n.name; break;
    case Op::SrcTuple: s = "src"; break;
    case Op::ExtTuple: s = "ext"; break;
    case Op::Neg: {
      std::string inner = print(n.kids[0], 8);
      s = inner.starts_with("-") ? "- " + inner : "-" + inner;
      break;
    }
    case Op::Not: s = "!" + print(n.kids[0], 4); break;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const char* sym = n.op == Op::Add ? " + " : n.op == Op::Sub ? " - " : n.op == Op::Mul ? " * " : " / ";
      s = print(n.kids[0], p) + sym + print(n.kids[1], p + 1);
      break;
    }
    case Op::Compare:
      s = print(n.kids[0], 6);
      for (std::size_t i = 0; i < n.cmps.size(); ++i)
        s += " " + std::string(cmp_text(n.cmps[i])) + " " + print(n.kids[i + 1], 6);
      break;
    case Op::And: s = print(n.kids[0], 3) + " && " + print(n.kids[1], 4); break;
    case Op::Or: s = print(n.kids[0], 2) + " || " + print(n.kids[1], 3); break;
    case Op::Cond: s = print(n.kids[0], 2) + " ? " + print(n.kids[1], 1) + " : " + print(n.kids[2], 1); break;
    case Op::Call: s = n.name + "(" + print_list(n.kids) + ")"; break;
    case Op::TupleLit: s = "[" + print_list(n.kids) + "]"; break;
  }
  return p < min_prec ? "(" + s + ")" : s;
}

}  // namespace

Expression Expression::parse(std::string_view text) { return Expression(Parser(lex(text)).parse_all()); }

std::string Expression::to_string() const { return root_ ? print(*root_, 0) : std::string(); }

// ---------------------------------------------------------------- binding

struct BoundExpression::Compiled {
  enum class RefKind { SrcAttr, ExtAttr, Dim };
  Op op = Op::Null;
  ExprType type = ExprType::Null;
  Scalar literal;
  RefKind ref = RefKind::SrcAttr;
  std::size_t index = 0;
  std::vector<Cmp> cmps;
  std::string fn;
  std::vector<ExprType> elems;  // element types when type == Tuple
  std::vector<Compiled> kids;
};

namespace {

using C = BoundExpression::Compiled;

ExprType kind_type(ScalarKind k) { return k == ScalarKind::Int64 ? ExprType::Int : ExprType::Float; }

bool numeric(ExprType t) { return t == ExprType::Int || t == ExprType::Float || t == ExprType::Null; }

std::string type_name(ExprType t) {
  switch (t) {
    case ExprType::Null: return "null";
    case ExprType::Bool: return "bool";
    case ExprType::Int: return "int64";
    case ExprType::Float: return "float64";
    case ExprType::Tuple: return "tuple";
  }
  return "?";
}

ExprType unify_scalar(ExprType a, ExprType b) {
  if (a == ExprType::Null) return b;
  if (b == ExprType::Null) return a;
  if (a == b) return a;
  if (numeric(a) && numeric(b)) return ExprType::Float;
  type_error("incompatible types " + type_name(a) + " and " + type_name(b));
}

struct Binder {
  const ArraySchema& src;
  const ArraySchema* ext;

  C ref(const Node& n) {
    C c;
    c.op = Op::Ref;
    auto try_src = [&]() -> bool {
      if (auto i = src.attr_index(n.name)) {
        c.ref = C::RefKind::SrcAttr;
        c.index = *i;
        c.type = kind_type(src.attrs()[*i].kind);
        return true;
      }
      return false;
    };
    auto try_ext = [&]() -> bool {
      if (!ext) return false;
      if (auto i = ext->attr_index(n.name)) {
        c.ref = C::RefKind::ExtAttr;
        c.index = *i;
        c.type = kind_type(ext->attrs()[*i].kind);
        return true;
      }
      return false;
    };
    auto try_dim = [&](const ArraySchema& s) -> bool {
      if (auto i = s.dim_index(n.name)) {
        auto si = src.dim_index(n.name);
        if (!si) return false;
        c.ref = C::RefKind::Dim;
        c.index = *si;
        c.type = ExprType::Int;
        return true;
      }
      return false;
    };
    bool ok = false;
    if (n.side == "src")
      ok = try_src() || try_dim(src);
    else if (n.side == "ext")
      ok = try_ext() || (ext && try_dim(*ext));
    else
      ok = try_src() || try_ext() || try_dim(src);
    if (!ok)
      type_error("unknown name '" + (n.side.empty() ? n.name : n.side + "." + n.name) + "'");
    return c;
  }

  C tuple_of(const ArraySchema& s, Op op) {
    C c;
    c.op = op;
    c.type = ExprType::Tuple;
    for (const auto& a : s.attrs()) c.elems.push_back(kind_type(a.kind));
    return c;
  }

  C bind(const Node& n) {
    C c;
    c.op = n.op;
    for (const auto& k : n.kids) c.kids.push_back(bind(k));
    auto kid_type = [&](std::size_t i) { return c.kids[i].type; };
    switch (n.op) {
      case Op::Number:
        c.literal = n.literal;
        c.type = n.literal.is_int() ? ExprType::Int : ExprType::Float;
        break;
      case Op::Null: c.type = ExprType::Null; break;
      case Op::Ref: return ref(n);
      case Op::SrcTuple: return tuple_of(src, Op::SrcTuple);
      case Op::ExtTuple:
        if (!ext) type_error("'ext' used without an extrusion array");
        return tuple_of(*ext, Op::ExtTuple);
      case Op::Neg:
        if (!numeric(kid_type(0))) type_error("'-' needs a number");
        c.type = kid_type(0);
        break;
      case Op::Not:
        if (kid_type(0) != ExprType::Bool && kid_type(0) != ExprType::Null) type_error("'!' needs a bool");
        c.type = ExprType::Bool;
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        if (!numeric(kid_type(0)) || !numeric(kid_type(1)))
          type_error("arithmetic needs numbers, got " + type_name(kid_type(0)) + " and " +
                     type_name(kid_type(1)));
        c.type = unify_scalar(kid_type(0), kid_type(1));
        break;
      case Op::Div:
        if (!numeric(kid_type(0)) || !numeric(kid_type(1))) type_error("'/' needs numbers");
        c.type = ExprType::Float;
        break;
      case Op::Compare:
        for (std::size_t i = 0; i < c.kids.size(); ++i)
          if (!numeric(kid_type(i))) type_error("comparison needs numbers, got " + type_name(kid_type(i)));
        c.cmps = n.cmps;
        c.type = ExprType::Bool;
        break;
      case Op::And:
      case Op::Or:
        for (std::size_t i = 0; i < 2; ++i)
          if (kid_type(i) != ExprType::Bool && kid_type(i) != ExprType::Null)
            type_error("logical operator needs bools");
        c.type = ExprType::Bool;
        break;
      case Op::Cond: {
        if (kid_type(0) != ExprType::Bool && kid_type(0) != ExprType::Null)
          type_error("condition must be a bool, got " + type_name(kid_type(0)));
        const C& a = c.kids[1];
        const C& b = c.kids[2];
        if (a.type == ExprType::Tuple || b.type == ExprType::Tuple) {
          if (a.type == ExprType::Tuple && b.type == ExprType::Tuple) {
            if (a.elems.size() != b.elems.size()) type_error("tuple branches differ in arity");
            for (std::size_t i = 0; i < a.elems.size(); ++i)
              c.elems.push_back(unify_scalar(a.elems[i], b.elems[i]));
          } else {
            const C& t = a.type == ExprType::Tuple ? a : b;
            const C& o = a.type == ExprType::Tuple ? b : a;
            if (o.type != ExprType::Null) type_error("a tuple branch can only pair with a tuple or null");
            c.elems = t.elems;
          }
          c.type = ExprType::Tuple;
        } else {
          c.type = unify_scalar(a.type, b.type);
        }
        break;
      }
      case Op::Call: {
        c.fn = n.name;
        std::size_t want = (n.name == "min" || n.name == "max") ? 2 : 1;
        if (c.kids.size() != want)
          type_error(n.name + "() takes " + std::to_string(want) + " argument(s)");
        for (const auto& k : c.kids)
          if (!numeric(k.type)) type_error(n.name + "() needs numbers");
        if (n.name == "isnull")
          c.type = ExprType::Bool;
        else if (n.name == "sqrt" || n.name == "float")
          c.type = ExprType::Float;
        else if (n.name == "int")
          c.type = ExprType::Int;
        else if (n.name == "abs")
          c.type = kid_type(0);
        else
          c.type = unify_scalar(kid_type(0), kid_type(1));
        break;
      }
      case Op::TupleLit:
        for (const auto& k : c.kids) {
          if (k.type == ExprType::Tuple) type_error("nested tuples are not supported");
          c.elems.push_back(k.type);
        }
        c.type = ExprType::Tuple;
        break;
    }
    return c;
  }
};

// ---------------------------------------------------------------- evaluation

bool truthy(const Scalar& s) { return !s.is_null() && s.as_int() != 0; }

Scalar to_type(const Scalar& s, ExprType t) {
  if (s.is_null()) return s;
  if (t == ExprType::Float && s.is_int()) return Scalar(s.as_double());
  return s;
}

bool compare(Cmp op, const Scalar& a, const Scalar& b, bool as_int) {
  if (as_int) {
    std::int64_t x = a.as_int(), y = b.as_int();
    switch (op) {
      case Cmp::Lt: return x < y;
      case Cmp::Le: return x <= y;
      case Cmp::Gt: return x > y;
      case Cmp::Ge: return x >= y;
      case Cmp::Eq: return x == y;
      case Cmp::Ne: return x != y;
    }
  }
  double x = a.as_double(), y = b.as_double();
  switch (op) {
    case Cmp::Lt: return x < y;
    case Cmp::Le: return x <= y;
    case Cmp::Gt: return x > y;
    case Cmp::Ge: return x >= y;
    case Cmp::Eq: return x == y;
    case Cmp::Ne: return x != y;
  }
  return false;
}

Scalar eval(const C& c, const EvalInput& in);

Scalar arith(const C& c, const EvalInput& in) {
  Scalar a = eval(c.kids[0], in);
  Scalar b = eval(c.kids[1], in);
  if (a.is_null() || b.is_null()) return Scalar::null();
  if (c.op == Op::Div) return Scalar(a.as_double() / b.as_double());
  if (c.type == ExprType::Int) {
    std::int64_t x = a.as_int(), y = b.as_int();
    switch (c.op) {
      case Op::Add: return Scalar(x + y);
      case Op::Sub: return Scalar(x - y);
      default: return Scalar(x * y);
    }
  }
  double x = a.as_double(), y = b.as_double();
  switch (c.op) {
    case Op::Add: return Scalar(x + y);
    case Op::Sub: return Scalar(x - y);
    default: return Scalar(x * y);
  }
}

Scalar eval(const C& c, const EvalInput& in) {
  switch (c.op) {
    case Op::Number: return c.literal;
    case Op::Null: return Scalar::null();
    case Op::Ref:
      switch (c.ref) {
        case C::RefKind::SrcAttr: return in.src ? (*in.src)[c.index] : Scalar::null();
        case C::RefKind::ExtAttr: return in.ext ? (*in.ext)[c.index] : Scalar::null();
        case C::RefKind::Dim: return Scalar(in.coord[c.index]);
      }
      return Scalar::null();
    case Op::Neg: {
      Scalar v = eval(c.kids[0], in);
      if (v.is_null()) return v;
      return v.is_int() ? Scalar(-v.as_int()) : Scalar(-v.as_double());
    }
    case Op::Not: return Scalar(static_cast<std::int64_t>(!truthy(eval(c.kids[0], in))));
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: return arith(c, in);
    case Op::Compare: {
      bool as_int = true;
      for (const auto& k : c.kids)
        if (k.type == ExprType::Float) as_int = false;
      Scalar left = eval(c.kids[0], in);
      if (left.is_null()) return Scalar::null();
      for (std::size_t i = 0; i < c.cmps.size(); ++i) {
        Scalar right = eval(c.kids[i + 1], in);
        if (right.is_null()) return Scalar::null();
        if (!compare(c.cmps[i], left, right, as_int)) return Scalar(std::int64_t{0});
        left = right;
      }
      return Scalar(std::int64_t{1});
    }
    case Op::And:
      return Scalar(static_cast<std::int64_t>(truthy(eval(c.kids[0], in)) && truthy(eval(c.kids[1], in))));
    case Op::Or:
      return Scalar(static_cast<std::int64_t>(truthy(eval(c.kids[0], in)) || truthy(eval(c.kids[1], in))));
    case Op::Cond:
      return to_type(truthy(eval(c.kids[0], in)) ? eval(c.kids[1], in) : eval(c.kids[2], in), c.type);
    case Op::Call: {
      Scalar a = eval(c.kids[0], in);
      if (c.fn == "isnull") return Scalar(static_cast<std::int64_t>(a.is_null()));
      if (a.is_null()) return a;
      if (c.fn == "sqrt") return Scalar(std::sqrt(a.as_double()));
      if (c.fn == "float") return Scalar(a.as_double());
      if (c.fn == "int") return Scalar(a.as_int());
      if (c.fn == "abs") return a.is_int() ? Scalar(a.as_int() < 0 ? -a.as_int() : a.as_int())
                                           : Scalar(std::fabs(a.as_double()));
      Scalar b = eval(c.kids[1], in);
      if (b.is_null()) return b;
      bool pick_a;
      if (c.type == ExprType::Int)
        pick_a = c.fn == "min" ? a.as_int() <= b.as_int() : a.as_int() >= b.as_int();
      else
        pick_a = c.fn == "min" ? a.as_double() <= b.as_double() : a.as_double() >= b.as_double();
      return to_type(pick_a ? a : b, c.type);
    }
    default: return Scalar::null();
  }
}

CellTuple eval_tuple_node(const C& c, const EvalInput& in, std::size_t arity) {
  switch (c.op) {
    case Op::SrcTuple: return in.src ? *in.src : null_tuple(arity);
    case Op::ExtTuple: return in.ext ? *in.ext : null_tuple(arity);
    case Op::TupleLit: {
      CellTuple t;
      t.reserve(c.kids.size());
      for (const auto& k : c.kids) t.push_back(eval(k, in));
      return t;
    }
    case Op::Cond: {
      const C& branch = truthy(eval(c.kids[0], in)) ? c.kids[1] : c.kids[2];
      if (branch.type != ExprType::Tuple) return null_tuple(arity);
      return eval_tuple_node(branch, in, arity);
    }
    default: return null_tuple(arity);
  }
}

}  // namespace

BoundExpression BoundExpression::bind(const Expression& e, const ArraySchema& src, const ArraySchema* ext) {
  if (!e.valid()) type_error("empty expression");
  Binder binder{src, ext};
  BoundExpression out;
  auto code = std::make_shared<Compiled>(binder.bind(e.root()));
  out.type_ = code->type;
  out.code_ = std::move(code);
  return out;
}

Scalar BoundExpression::eval_scalar(const EvalInput& in) const { return eval(*code_, in); }

bool BoundExpression::eval_predicate(const EvalInput& in) const { return truthy(eval(*code_, in)); }

void BoundExpression::check_assignable(const std::vector<Attribute>& target) {
  auto fits = [](ExprType t, ScalarKind k) {
    if (t == ExprType::Null) return true;
    if (k == ScalarKind::Float64) return t == ExprType::Int || t == ExprType::Float;
    return t == ExprType::Int;
  };
  target_.clear();
  for (const auto& a : target) target_.push_back(a.kind);
  if (type_ == ExprType::Tuple) {
    if (code_->elems.size() != target.size())
      type_error("expression yields " + std::to_string(code_->elems.size()) + " values for " +
                 std::to_string(target.size()) + " attributes");
    for (std::size_t i = 0; i < target.size(); ++i)
      if (!fits(code_->elems[i], target[i].kind))
        type_error("cannot store " + type_name(code_->elems[i]) + " into '" + target[i].name + "'");
    return;
  }
  if (type_ == ExprType::Null) return;
  if (target.size() != 1)
    type_error("a scalar expression can only populate a single-attribute tuple");
  if (!fits(type_, target[0].kind))
    type_error("cannot store " + type_name(type_) + " into '" + target[0].name + "'");
}

CellTuple BoundExpression::eval_tuple(const EvalInput& in) const {
  const std::size_t arity = target_.size();
  CellTuple t;
  if (type_ == ExprType::Tuple) {
    t = eval_tuple_node(*code_, in, arity);
  } else if (type_ == ExprType::Null) {
    return null_tuple(arity);
  } else {
    t.push_back(eval(*code_, in));
  }
  for (std::size_t i = 0; i < t.size() && i < arity; ++i)
    if (target_[i] == ScalarKind::Float64 && t[i].is_int()) t[i] = Scalar(t[i].as_double());
  return t;
}

}  // namespace itarray
