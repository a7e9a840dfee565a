#include "switchsynth/mtl_parser.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <utility>

namespace switchsynth {

namespace {

enum class Tok { Num, Ident, LParen, RParen, LBracket, RBracket, Comma, And, Or, Not,
                 Lt, Le, Gt, Ge, Plus, Minus, Star, End };

struct Token {
  Tok kind;
  std::string text;
  double value = 0.0;
  int line = 1;
  int col = 1;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t k) {
    for (std::size_t j = 0; j < k; ++j) {
      if (s[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::ParseError,
                std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  };
  while (i < s.size()) {
    const char ch = s[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      advance(1);
      continue;
    }
    if (ch == '#') {
      while (i < s.size() && s[i] != '\n') advance(1);
      continue;
    }
    Token t{Tok::End, {}, 0.0, line, col};
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
      std::string buf(s.substr(i));
      char* end = nullptr;
      t.value = std::strtod(buf.c_str(), &end);
      const auto len = static_cast<std::size_t>(end - buf.c_str());
      if (len == 0 || !std::isfinite(t.value)) fail("malformed number");
      t.kind = Tok::Num;
      t.text = buf.substr(0, len);
      advance(len);
      out.push_back(t);
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(s.substr(i, j - i));
      advance(j - i);
      out.push_back(t);
      continue;
    }
    std::size_t len = 1;
    switch (ch) {
      case '(': t.kind = Tok::LParen; break;
      case ')': t.kind = Tok::RParen; break;
      case '[': t.kind = Tok::LBracket; break;
      case ']': t.kind = Tok::RBracket; break;
      case ',': t.kind = Tok::Comma; break;
      case '&': t.kind = Tok::And; break;
      case '|': t.kind = Tok::Or; break;
      case '!': t.kind = Tok::Not; break;
      case '+': t.kind = Tok::Plus; break;
      case '-': t.kind = Tok::Minus; break;
      case '*': t.kind = Tok::Star; break;
      case '<':
        t.kind = Tok::Lt;
        if (i + 1 < s.size() && s[i + 1] == '=') t.kind = Tok::Le, len = 2;
        break;
      case '>':
        t.kind = Tok::Gt;
        if (i + 1 < s.size() && s[i + 1] == '=') t.kind = Tok::Ge, len = 2;
        break;
      default:
        fail(std::string("unexpected character '") + ch + "'");
    }
    t.text = std::string(s.substr(i, len));
    advance(len);
    out.push_back(t);
  }
  out.push_back({Tok::End, "<end>", 0.0, line, col});
  return out;
}

struct Linear {
  std::vector<std::pair<std::string, double>> terms;  // order of first appearance
  double constant = 0.0;

  void add(const std::string& name, double k) {
    for (auto& [n, v] : terms)
      if (n == name) {
        v += k;
        return;
      }
    terms.emplace_back(name, k);
  }
};

std::string num_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

class Parser {
 public:
  Parser(std::string_view text, const SymbolTable& sym) : toks_(tokenize(text)), sym_(sym) {}

  FormulaPtr parse() {
    auto f = disj();
    if (peek().kind != Tok::End) fail(peek(), "unexpected '" + peek().text + "'");
    return f;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const SymbolTable& sym_;

  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw Error(ErrorCode::ParseError,
                std::to_string(t.line) + ":" + std::to_string(t.col) + ": " + msg);
  }

  const Token& expect(Tok k, const char* what) {
    if (peek().kind != k) fail(peek(), std::string("expected ") + what);
    return next();
  }

  bool is_op(const char* name) const {
    return peek().kind == Tok::Ident && peek().text == name && peek(1).kind == Tok::LBracket;
  }

  Interval interval() {
    expect(Tok::LBracket, "'['");
    const double lo = expect(Tok::Num, "interval start").value;
    expect(Tok::Comma, "','");
    const double hi = expect(Tok::Num, "interval end").value;
    const Token& close = expect(Tok::RBracket, "']'");
    if (!(lo >= 0.0 && hi >= lo)) fail(close, "interval must satisfy 0 <= lo <= hi");
    return {lo, hi};
  }

  FormulaPtr disj() {
    std::vector<FormulaPtr> parts{conj()};
    while (peek().kind == Tok::Or) {
      next();
      parts.push_back(conj());
    }
    return Formula::disjunction(std::move(parts));
  }

  FormulaPtr conj() {
    std::vector<FormulaPtr> parts{until()};
    while (peek().kind == Tok::And) {
      next();
      parts.push_back(until());
    }
    return Formula::conjunction(std::move(parts));
  }

  FormulaPtr until() {
    auto lhs = unary();
    if (is_op("until")) {
      next();
      const Interval i = interval();
      auto rhs = unary();
      return Formula::until(std::move(lhs), i, std::move(rhs));
    }
    return lhs;
  }

  FormulaPtr unary() {
    const Token& t = peek();
    if (t.kind == Tok::Not) {
      next();
      return Formula::negation(unary());
    }
    if (is_op("always") || is_op("G")) {
      next();
      const Interval i = interval();
      return Formula::always(i, unary());
    }
    if (is_op("ev") || is_op("eventually") || is_op("F")) {
      next();
      const Interval i = interval();
      return Formula::eventually(i, unary());
    }
    if (t.kind == Tok::LParen) {
      next();
      auto f = disj();
      expect(Tok::RParen, "')'");
      return f;
    }
    if (t.kind == Tok::Ident && t.text == "true") {
      next();
      return Formula::truth();
    }
    return atom();
  }

  Linear linear() {
    Linear lin;
    bool first = true;
    while (true) {
      double sign = 1.0;
      if (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
        sign = next().kind == Tok::Minus ? -1.0 : 1.0;
      } else if (!first) {
        break;
      }
      first = false;
      const Token& t = next();
      if (t.kind == Tok::Num) {
        if (peek().kind == Tok::Star) {
          next();
          const Token& name = expect(Tok::Ident, "symbol after '*'");
          lin.add(resolve(name), sign * t.value);
        } else {
          lin.constant += sign * t.value;
        }
      } else if (t.kind == Tok::Ident) {
        lin.add(resolve(t), sign);
      } else {
        fail(t, "expected a number or symbol");
      }
    }
    return lin;
  }

  const std::string& resolve(const Token& t) const {
    for (const auto& s : sym_.states)
      if (s == t.text) return t.text;
    for (const auto& s : sym_.inputs)
      if (s == t.text) return t.text;
    for (const auto& o : sym_.outputs)
      if (o.name == t.text) return t.text;
    fail(t, "unknown symbol '" + t.text + "'");
  }

  FormulaPtr atom() {
    const Token start = peek();
    Linear lhs = linear();
    const Token& op = next();
    if (op.kind != Tok::Lt && op.kind != Tok::Le && op.kind != Tok::Gt && op.kind != Tok::Ge)
      fail(op, "expected a comparison operator");
    Linear rhs = linear();
    // lhs - rhs < 0, flipped for '>'.
    const double flip = (op.kind == Tok::Gt || op.kind == Tok::Ge) ? -1.0 : 1.0;
    Linear diff;
    for (const auto& [n, k] : lhs.terms) diff.add(n, flip * k);
    for (const auto& [n, k] : rhs.terms) diff.add(n, -flip * k);
    const double bound = -flip * (lhs.constant - rhs.constant);

    const auto n = static_cast<Eigen::Index>(sym_.states.size());
    const auto p = static_cast<Eigen::Index>(sym_.inputs.size());
    Vector a = Vector::Zero(n), c = Vector::Zero(p);
    std::string label;
    for (const auto& [name, k] : diff.terms) {
      if (k == 0.0) continue;
      if (label.empty()) {
        if (k < 0) label += "-";
      } else {
        label += k < 0 ? " - " : " + ";
      }
      if (std::abs(k) != 1.0) label += num_text(std::abs(k)) + "*";
      label += name;
      bool found = false;
      for (Eigen::Index i = 0; i < n && !found; ++i)
        if (sym_.states[i] == name) a[i] += k, found = true;
      for (Eigen::Index i = 0; i < p && !found; ++i)
        if (sym_.inputs[i] == name) c[i] += k, found = true;
      for (const auto& o : sym_.outputs) {
        if (found || o.name != name) continue;
        if (o.c_row.size() != n || (o.d_row.size() != 0 && o.d_row.size() != p))
          fail(start, "output '" + name + "' has rows of the wrong size");
        a += k * o.c_row;
        if (o.d_row.size()) c += k * o.d_row;
        found = true;
      }
    }
    const double norm = a.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      fail(start, "atom does not depend on the state");
    Atom at;
    at.a = a / norm;
    at.c = c / norm;
    at.b = bound / norm;
    at.scale = norm;
    at.label = label;
    return Formula::make_atom(std::move(at));
  }
};

}  // namespace

FormulaPtr parse_formula(std::string_view text, const SymbolTable& symbols) {
  return Parser(text, symbols).parse();
}

}  // namespace switchsynth
