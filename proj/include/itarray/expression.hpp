#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "itarray/array.hpp"

namespace itarray {

// Scalar expressions over the cells of two bound arrays: a source array
// (`src.<name>`) and an optional extrusion/aggregate array (`ext.<name>`).
//
// Grammar (lowest precedence first):
//
//   expr    := or ( '?' expr ':' expr )?
//   or      := and ( ('||' | 'or') and )*
//   and     := not ( ('&&' | 'and') not )*
//   not     := ('!' | 'not') not | cmp
//   cmp     := sum ( ('<' | '<=' | '>' | '>=' | '==' | '!=') sum )*
//   sum     := prod ( ('+' | '-') prod )*
//   prod    := unary ( ('*' | '/') unary )*
//   unary   := '-' unary | primary
//   primary := number | 'null' | ref | 'src' | 'ext'
//            | func '(' expr (',' expr)* ')' | '(' expr ')' | '[' expr (',' expr)* ']'
//   ref     := name | ('src' | 'ext') '.' name
//   func    := sqrt | abs | min | max | isnull | float | int
//
// Comparisons chain: `a <= b <= c` means `a <= b and b <= c`. A bare name
// resolves to a source attribute, then an extrusion attribute, then a source
// dimension. `src` / `ext` alone denote the whole tuple; `[a, b]` builds one.
// Arithmetic and comparisons involving null yield null; null conditions are
// false. `/` always produces float64.
class Expression {
 public:
  enum class Op {
    Number, Null, Ref, SrcTuple, ExtTuple, Neg, Not, Add, Sub, Mul, Div,
    Compare, And, Or, Cond, Call, TupleLit,
  };
  enum class Cmp { Lt, Le, Gt, Ge, Eq, Ne };

  struct Node {
    Op op = Op::Null;
    Scalar literal;            // Number
    std::string side;          // Ref: "src", "ext" or "" (unqualified)
    std::string name;          // Ref: name; Call: function
    std::vector<Cmp> cmps;     // Compare: one per adjacent operand pair
    std::vector<Node> kids;

    friend bool operator==(const Node&, const Node&) = default;
  };

  Expression() = default;
  explicit Expression(Node root) : root_(std::make_shared<Node>(std::move(root))) {}

  // Throws ExpressionSyntaxError.
  static Expression parse(std::string_view text);

  const Node& root() const { return *root_; }
  bool valid() const noexcept { return root_ != nullptr; }
  std::string to_string() const;

  friend bool operator==(const Expression& a, const Expression& b) {
    if (!a.root_ || !b.root_) return a.root_ == b.root_;
    return *a.root_ == *b.root_;
  }

 private:
  std::shared_ptr<const Node> root_;
};

enum class ExprType { Null, Bool, Int, Float, Tuple };

struct EvalInput {
  const CellTuple* src = nullptr;
  const CellTuple* ext = nullptr;
  std::span<const std::int64_t> coord;  // source cell coordinate
};

// An expression resolved against concrete schemas and type-checked.
class BoundExpression {
 public:
  BoundExpression() = default;

  // Throws ExpressionTypeError.
  static BoundExpression bind(const Expression& e, const ArraySchema& src, const ArraySchema* ext = nullptr);

  ExprType type() const noexcept { return type_; }

  // Value of a scalar-typed expression; booleans are int64 0/1.
  Scalar eval_scalar(const EvalInput& in) const;
  // True iff a Bool expression evaluates to true (null counts as false).
  bool eval_predicate(const EvalInput& in) const;

  // Checks that the result can populate a tuple of `target` attributes.
  // Throws ExpressionTypeError.
  void check_assignable(const std::vector<Attribute>& target);
  // Evaluates into a tuple of the checked target kinds. All-null results
  // signal deletion to callers.
  CellTuple eval_tuple(const EvalInput& in) const;

  struct Compiled;

 private:
  std::shared_ptr<const Compiled> code_;
  ExprType type_ = ExprType::Null;
  std::vector<ScalarKind> target_;
};

}  // namespace itarray
