#pragma once

#include <cctype>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opportune/errors.hpp"
#include "opportune/ops.hpp"

namespace opportune {

// Expression tree for one statement. Leaves are variable references, literal
// numbers/strings, or read_csv calls; interior nodes are operator applications.
struct Expr {
  enum class Tag { Var, Op };
  Tag tag = Tag::Op;
  std::string var;                            // Tag::Var
  OpKind op = OpKind::Literal;                // Tag::Op
  std::vector<std::unique_ptr<Expr>> children;  // data-flow inputs
  std::vector<Arg> args;                      // literal configuration

  static std::unique_ptr<Expr> variable(std::string name) {
    auto e = std::make_unique<Expr>();
    e->tag = Tag::Var;
    e->var = std::move(name);
    return e;
  }
  static std::unique_ptr<Expr> operation(OpKind kind) {
    auto e = std::make_unique<Expr>();
    e->tag = Tag::Op;
    e->op = kind;
    return e;
  }
};

struct Statement {
  std::optional<std::string> target;
  std::unique_ptr<Expr> expr;
  std::string source_text;
};

inline std::string canonical_expr(const Expr& e) {
  if (e.tag == Expr::Tag::Var) return e.var;
  std::vector<std::string> inputs;
  inputs.reserve(e.children.size());
  for (const auto& c : e.children) inputs.push_back(canonical_expr(*c));
  return canonical_fragment(e.op, e.args, inputs);
}

inline std::string canonical_statement(const Statement& s) {
  std::string out;
  if (s.target) out = *s.target + " = ";
  return out + canonical_expr(*s.expr);
}

namespace detail {

enum class Tok { End, Ident, Number, String, Assign, Dot, Comma, LParen, RParen,
                 LBracket, RBracket, Cmp };

struct Token {
  Tok type = Tok::End;
  std::string text;
  double number = 0;
  CmpOp cmp = CmpOp::Lt;
  std::size_t column = 0;
};

class Lexer {
public:
  Lexer(const std::string& src, std::size_t line) : src_(src), line_(line) {}

  Token next() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    Token t;
    t.column = pos_ + 1;
    if (pos_ >= src_.size()) return t;
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      t.type = Tok::Ident;
      t.text = src_.substr(start, pos_ - start);
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < src_.size() &&
         (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '.')) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      std::size_t start = pos_;
      if (src_[pos_] == '-') ++pos_;
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
              src_[pos_] == 'e' || src_[pos_] == 'E' ||
              ((src_[pos_] == '+' || src_[pos_] == '-') &&
               (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))))
        ++pos_;
      std::string text = src_.substr(start, pos_ - start);
      char* end = nullptr;
      t.number = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size())
        throw SyntaxError(line_, t.column, "malformed number: " + text);
      t.type = Tok::Number;
      t.text = std::move(text);
      return t;
    }
    if (c == '\'') {
      ++pos_;
      std::string text;
      while (pos_ < src_.size() && src_[pos_] != '\'') text += src_[pos_++];
      if (pos_ >= src_.size())
        throw SyntaxError(line_, t.column, "unterminated string literal");
      ++pos_;
      t.type = Tok::String;
      t.text = std::move(text);
      return t;
    }
    auto two = [&](char a, char b) {
      return c == a && pos_ + 1 < src_.size() && src_[pos_ + 1] == b;
    };
    if (two('=', '=')) { pos_ += 2; t.type = Tok::Cmp; t.cmp = CmpOp::Eq; return t; }
    if (two('!', '=')) { pos_ += 2; t.type = Tok::Cmp; t.cmp = CmpOp::Ne; return t; }
    if (two('<', '=')) { pos_ += 2; t.type = Tok::Cmp; t.cmp = CmpOp::Le; return t; }
    if (two('>', '=')) { pos_ += 2; t.type = Tok::Cmp; t.cmp = CmpOp::Ge; return t; }
    switch (c) {
      case '<': ++pos_; t.type = Tok::Cmp; t.cmp = CmpOp::Lt; return t;
      case '>': ++pos_; t.type = Tok::Cmp; t.cmp = CmpOp::Gt; return t;
      case '=': ++pos_; t.type = Tok::Assign; return t;
      case '.': ++pos_; t.type = Tok::Dot; return t;
      case ',': ++pos_; t.type = Tok::Comma; return t;
      case '(': ++pos_; t.type = Tok::LParen; return t;
      case ')': ++pos_; t.type = Tok::RParen; return t;
      case '[': ++pos_; t.type = Tok::LBracket; return t;
      case ']': ++pos_; t.type = Tok::RBracket; return t;
      default:
        throw SyntaxError(line_, t.column, std::string("unexpected character '") + c + "'");
    }
  }

private:
  const std::string& src_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

class LineParser {
public:
  LineParser(const std::string& src, std::size_t line)
      : src_(src), line_(line), lex_(src, line) {
    advance();
  }

  Statement parse_statement() {
    Statement st;
    st.source_text = src_;
    if (tok_.type == Tok::Ident) {
      // Lookahead for "ident =": save and re-lex if it is not an assignment.
      Token ident = tok_;
      advance();
      if (tok_.type == Tok::Assign) {
        st.target = ident.text;
        advance();
        st.expr = parse_expr();
      } else {
        st.expr = parse_postfix(Expr::variable(ident.text));
      }
    } else {
      st.expr = parse_expr();
    }
    if (tok_.type != Tok::End)
      throw SyntaxError(line_, tok_.column, "trailing input after expression");
    return st;
  }

private:
  void advance() { tok_ = lex_.next(); }

  void expect(Tok t, const char* what) {
    if (tok_.type != t)
      throw SyntaxError(line_, tok_.column, std::string("expected ") + what);
    advance();
  }

  std::unique_ptr<Expr> parse_expr() { return parse_postfix(parse_primary()); }

  std::unique_ptr<Expr> parse_primary() {
    if (tok_.type == Tok::Ident) {
      std::string name = tok_.text;
      advance();
      if (name == "read_csv") {
        expect(Tok::LParen, "'(' after read_csv");
        if (tok_.type != Tok::String)
          throw SyntaxError(line_, tok_.column, "read_csv expects a quoted path");
        auto e = Expr::operation(OpKind::ReadCsv);
        e->args.emplace_back(tok_.text);
        advance();
        expect(Tok::RParen, "')'");
        return e;
      }
      return Expr::variable(name);
    }
    throw SyntaxError(line_, tok_.column, "expected a variable or read_csv(...)");
  }

  std::unique_ptr<Expr> parse_postfix(std::unique_ptr<Expr> base) {
    for (;;) {
      if (tok_.type == Tok::LBracket) {
        advance();
        if (tok_.type == Tok::String) {
          auto e = Expr::operation(OpKind::SelectColumn);
          e->args.emplace_back(tok_.text);
          e->children.push_back(std::move(base));
          advance();
          expect(Tok::RBracket, "']'");
          base = std::move(e);
        } else {
          auto pred = parse_expr();
          if (tok_.type != Tok::Cmp)
            throw SyntaxError(line_, tok_.column, "expected comparison in filter");
          CmpOp op = tok_.cmp;
          advance();
          auto e = Expr::operation(OpKind::Filter);
          e->args.emplace_back(op);
          if (tok_.type == Tok::Number) e->args.emplace_back(tok_.number);
          else if (tok_.type == Tok::String) e->args.emplace_back(tok_.text);
          else throw SyntaxError(line_, tok_.column, "filter expects a literal operand");
          advance();
          e->children.push_back(std::move(base));
          e->children.push_back(std::move(pred));
          expect(Tok::RBracket, "']'");
          base = std::move(e);
        }
      } else if (tok_.type == Tok::Dot) {
        advance();
        if (tok_.type != Tok::Ident)
          throw SyntaxError(line_, tok_.column, "expected method name after '.'");
        std::string name = tok_.text;
        std::optional<OpKind> kind = method_op(name);
        if (!kind) throw UnknownMethod(name);
        advance();
        expect(Tok::LParen, "'(' after method name");
        base = parse_call(*kind, std::move(base));
      } else {
        return base;
      }
    }
  }

  std::unique_ptr<Expr> parse_call(OpKind kind, std::unique_ptr<Expr> base) {
    auto e = Expr::operation(kind);
    e->children.push_back(std::move(base));
    switch (kind) {
      case OpKind::Mean:
      case OpKind::Sum:
      case OpKind::ValueCounts:
      case OpKind::Columns:
        expect(Tok::RParen, "')' (no arguments expected)");
        return e;
      case OpKind::Head:
      case OpKind::Tail:
        if (tok_.type == Tok::Number) {
          if (tok_.number < 1)
            throw SyntaxError(line_, tok_.column, "row count must be >= 1");
          e->args.emplace_back(tok_.number);
          advance();
        } else {
          e->args.emplace_back(5.0);  // pandas-style default
        }
        expect(Tok::RParen, "')'");
        return e;
      case OpKind::SortValues:
        if (tok_.type == Tok::String) {
          e->args.emplace_back(tok_.text);
          advance();
        }
        expect(Tok::RParen, "')'");
        return e;
      case OpKind::GroupbyMean:
        if (tok_.type != Tok::String)
          throw SyntaxError(line_, tok_.column, "groupby_mean expects a column name");
        e->args.emplace_back(tok_.text);
        advance();
        expect(Tok::RParen, "')'");
        return e;
      case OpKind::DropColumnsBelowThreshold:
        if (tok_.type != Tok::Number)
          throw SyntaxError(line_, tok_.column,
                            "drop_columns_below_threshold expects a fraction");
        e->args.emplace_back(tok_.number);
        advance();
        expect(Tok::RParen, "')'");
        return e;
      case OpKind::Fillna: {
        if (tok_.type == Tok::Number) {
          auto lit = Expr::operation(OpKind::Literal);
          lit->args.emplace_back(tok_.number);
          e->children.push_back(std::move(lit));
          advance();
        } else if (tok_.type == Tok::String) {
          auto lit = Expr::operation(OpKind::Literal);
          lit->args.emplace_back(tok_.text);
          e->children.push_back(std::move(lit));
          advance();
        } else {
          e->children.push_back(parse_expr());
        }
        expect(Tok::RParen, "')'");
        return e;
      }
      default:
        throw SyntaxError(line_, tok_.column, "method not callable here");
    }
  }

  const std::string& src_;
  std::size_t line_;
  Lexer lex_;
  Token tok_;
};

}  // namespace detail

// Parses one cell (possibly multi-line) into statements, one per non-blank
// line. Any grammar violation aborts the whole cell.
inline std::vector<Statement> parse_cell(const std::string& source) {
  std::vector<Statement> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= source.size()) {
    std::size_t nl = source.find('\n', start);
    std::string line = nl == std::string::npos ? source.substr(start)
                                               : source.substr(start, nl - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = true;
    for (char c : line)
      if (c != ' ' && c != '\t') { blank = false; break; }
    if (!blank) {
      detail::LineParser p(line, line_no);
      out.push_back(p.parse_statement());
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

}  // namespace opportune
