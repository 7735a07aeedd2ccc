#include "taintperf/parser.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace taintperf::dsl {
namespace {

enum class Tok {
  Ident,
  Number,
  String,
  LParen,
  RParen,
  LBrace,
  RBrace,
  LBracket,
  RBracket,
  Comma,
  Semi,
  Assign,
  Eq,
  Ne,
  Lt,
  Le,
  Gt,
  Ge,
  Plus,
  Minus,
  Star,
  Slash,
  Percent,
  DotDot,
  AndAnd,
  OrOr,
  Bang,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  SourcePos pos;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.pos = {line_, col_};
      if (at_end()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      char c = peek();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) t.text += get();
        t.kind = Tok::Ident;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) t.text += get();
        if (!at_end() && peek() == '.' && pos_ + 1 < src_.size() &&
            std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
          t.text += get();
          while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) t.text += get();
        }
        if (!at_end() && (peek() == 'e' || peek() == 'E')) {
          std::size_t save = pos_;
          int save_col = col_;
          std::string exp{get()};
          if (!at_end() && (peek() == '+' || peek() == '-')) exp += get();
          if (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
            while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) exp += get();
            t.text += exp;
          } else {
            pos_ = save;
            col_ = save_col;
          }
        }
        t.kind = Tok::Number;
      } else if (c == '"') {
        get();
        while (!at_end() && peek() != '"') {
          if (peek() == '\n') throw ParseError("unterminated string literal", t.pos);
          t.text += get();
        }
        if (at_end()) throw ParseError("unterminated string literal", t.pos);
        get();
        t.kind = Tok::String;
      } else {
        t.kind = punct(t.pos);
      }
      out.push_back(std::move(t));
    }
  }

private:
  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }
  char get() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  bool match(char c) {
    if (!at_end() && peek() == c) {
      get();
      return true;
    }
    return false;
  }

  void skip_space() {
    for (;;) {
      while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) get();
      if (pos_ + 1 < src_.size() && src_[pos_] == '/' && src_[pos_ + 1] == '/') {
        while (!at_end() && peek() != '\n') get();
        continue;
      }
      return;
    }
  }

  Tok punct(SourcePos pos) {
    char c = get();
    switch (c) {
      case '(': return Tok::LParen;
      case ')': return Tok::RParen;
      case '{': return Tok::LBrace;
      case '}': return Tok::RBrace;
      case '[': return Tok::LBracket;
      case ']': return Tok::RBracket;
      case ',': return Tok::Comma;
      case ';': return Tok::Semi;
      case '+': return Tok::Plus;
      case '-': return Tok::Minus;
      case '*': return Tok::Star;
      case '/': return Tok::Slash;
      case '%': return Tok::Percent;
      case '=': return match('=') ? Tok::Eq : Tok::Assign;
      case '!': return match('=') ? Tok::Ne : Tok::Bang;
      case '<': return match('=') ? Tok::Le : Tok::Lt;
      case '>': return match('=') ? Tok::Ge : Tok::Gt;
      case '.':
        if (match('.')) return Tok::DotDot;
        break;
      case '&':
        if (match('&')) return Tok::AndAnd;
        break;
      case '|':
        if (match('|')) return Tok::OrOr;
        break;
      default: break;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

const std::unordered_set<std::string> kKeywords = {"fn",     "let",    "if",     "else",     "while", "for",
                                                   "in",     "step",   "return", "param",    "implicit",
                                                   "source", "extern"};

class Parser {
public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program program() {
    Program prog;
    std::unordered_set<std::string> fn_names;
    std::unordered_set<std::string> param_names;
    while (cur().kind != Tok::End) {
      if (is_kw("param") || is_kw("implicit")) {
        ParamDecl decl;
        decl.pos = cur().pos;
        if (is_kw("implicit")) {
          advance();
          decl.kind = ParamKind::Implicit;
        }
        expect_kw("param");
        decl.name = ident("parameter name");
        expect(Tok::Semi, "';'");
        if (!param_names.insert(decl.name).second) throw ParseError("duplicate parameter '" + decl.name + "'", decl.pos);
        prog.param_decls.push_back(std::move(decl));
      } else if (is_kw("fn")) {
        Function fn = function();
        if (!fn_names.insert(fn.name).second) throw ParseError("duplicate function name '" + fn.name + "'", fn.pos);
        prog.functions.push_back(std::move(fn));
      } else {
        throw ParseError("expected 'fn' or 'param' at top level, found '" + describe(cur()) + "'", cur().pos);
      }
    }
    renumber(prog);
    return prog;
  }

private:
  const Token& cur() const { return toks_[idx_]; }
  const Token& ahead(std::size_t n = 1) const { return toks_[std::min(idx_ + n, toks_.size() - 1)]; }
  Token advance() { return toks_[idx_ < toks_.size() - 1 ? idx_++ : idx_]; }
  bool is(Tok k) const { return cur().kind == k; }
  bool is_kw(const char* kw) const { return cur().kind == Tok::Ident && cur().text == kw; }

  static std::string describe(const Token& t) {
    if (t.kind == Tok::End) return "end of input";
    if (!t.text.empty()) return t.text;
    return "punctuation";
  }

  Token expect(Tok k, const char* what) {
    if (!is(k)) throw ParseError(std::string("expected ") + what + ", found '" + describe(cur()) + "'", cur().pos);
    return advance();
  }
  void expect_kw(const char* kw) {
    if (!is_kw(kw)) throw ParseError(std::string("expected '") + kw + "'", cur().pos);
    advance();
  }
  std::string ident(const char* what) {
    if (!is(Tok::Ident) || kKeywords.count(cur().text))
      throw ParseError(std::string("expected ") + what + ", found '" + describe(cur()) + "'", cur().pos);
    return advance().text;
  }

  Function function() {
    Function fn;
    fn.pos = cur().pos;
    expect_kw("fn");
    fn.name = ident("function name");
    expect(Tok::LParen, "'('");
    if (!is(Tok::RParen)) {
      fn.params.push_back(ident("parameter"));
      while (is(Tok::Comma)) {
        advance();
        fn.params.push_back(ident("parameter"));
      }
    }
    expect(Tok::RParen, "')'");
    fn.body = block();
    return fn;
  }

  Block block() {
    expect(Tok::LBrace, "'{'");
    Block b;
    while (!is(Tok::RBrace)) {
      if (is(Tok::End)) throw ParseError("unterminated block", cur().pos);
      b.push_back(statement());
    }
    advance();
    return b;
  }

  Stmt statement() {
    Stmt s;
    s.pos = cur().pos;
    if (is_kw("let")) {
      advance();
      LetStmt n;
      n.name = ident("variable name");
      expect(Tok::Assign, "'='");
      n.value = expression();
      expect(Tok::Semi, "';'");
      s.node = std::move(n);
    } else if (is_kw("if")) {
      s.node = if_stmt();
    } else if (is_kw("while")) {
      advance();
      WhileStmt n;
      n.cond = expression();
      n.body = block();
      s.node = std::move(n);
    } else if (is_kw("for")) {
      advance();
      ForStmt n;
      n.var = ident("loop variable");
      expect_kw("in");
      n.lo = expression();
      expect(Tok::DotDot, "'..'");
      n.hi = expression();
      if (is_kw("step")) {
        advance();
        n.step = expression();
      }
      n.body = block();
      s.node = std::move(n);
    } else if (is_kw("return")) {
      advance();
      ReturnStmt n;
      if (!is(Tok::Semi)) n.value = expression();
      expect(Tok::Semi, "';'");
      s.node = std::move(n);
    } else if (is_kw("source")) {
      advance();
      SourceStmt n;
      expect(Tok::LParen, "'('");
      n.var = ident("variable name");
      expect(Tok::Comma, "','");
      n.label = expect(Tok::String, "label string").text;
      expect(Tok::RParen, "')'");
      expect(Tok::Semi, "';'");
      s.node = std::move(n);
    } else if (is(Tok::Ident) && !kKeywords.count(cur().text) && ahead().kind == Tok::Assign) {
      AssignStmt n;
      n.name = advance().text;
      advance();
      n.value = expression();
      expect(Tok::Semi, "';'");
      s.node = std::move(n);
    } else if (is(Tok::Ident) && !kKeywords.count(cur().text) && ahead().kind == Tok::LBracket) {
      IndexAssignStmt n;
      n.array = advance().text;
      advance();
      n.index = expression();
      expect(Tok::RBracket, "']'");
      expect(Tok::Assign, "'=' (array element assignment)");
      n.value = expression();
      expect(Tok::Semi, "';'");
      s.node = std::move(n);
    } else {
      SourcePos p = cur().pos;
      ExprStmt n;
      n.expr = expression();
      if (!std::holds_alternative<Call>(n.expr->node) && !std::holds_alternative<ExternCall>(n.expr->node))
        throw ParseError("unknown statement form (only calls may be used as statements)", p);
      expect(Tok::Semi, "';'");
      s.node = std::move(n);
    }
    return s;
  }

  IfStmt if_stmt() {
    expect_kw("if");
    IfStmt n;
    n.cond = expression();
    n.then_body = block();
    if (is_kw("else")) {
      advance();
      n.has_else = true;
      if (is_kw("if")) {
        Stmt nested;
        nested.pos = cur().pos;
        nested.node = if_stmt();
        n.else_body.push_back(std::move(nested));
      } else {
        n.else_body = block();
      }
    }
    return n;
  }

  ExprPtr make(SourcePos pos, auto node) {
    auto e = std::make_unique<Expr>();
    e->pos = pos;
    e->node = std::move(node);
    return e;
  }

  ExprPtr expression() { return or_expr(); }

  ExprPtr or_expr() {
    auto lhs = and_expr();
    while (is(Tok::OrOr)) {
      SourcePos p = advance().pos;
      lhs = make(p, Binary{BinaryOp::Or, std::move(lhs), and_expr()});
    }
    return lhs;
  }
  ExprPtr and_expr() {
    auto lhs = cmp_expr();
    while (is(Tok::AndAnd)) {
      SourcePos p = advance().pos;
      lhs = make(p, Binary{BinaryOp::And, std::move(lhs), cmp_expr()});
    }
    return lhs;
  }
  ExprPtr cmp_expr() {
    auto lhs = add_expr();
    for (;;) {
      BinaryOp op;
      switch (cur().kind) {
        case Tok::Lt: op = BinaryOp::Lt; break;
        case Tok::Le: op = BinaryOp::Le; break;
        case Tok::Gt: op = BinaryOp::Gt; break;
        case Tok::Ge: op = BinaryOp::Ge; break;
        case Tok::Eq: op = BinaryOp::Eq; break;
        case Tok::Ne: op = BinaryOp::Ne; break;
        default: return lhs;
      }
      SourcePos p = advance().pos;
      lhs = make(p, Binary{op, std::move(lhs), add_expr()});
    }
  }
  ExprPtr add_expr() {
    auto lhs = mul_expr();
    while (is(Tok::Plus) || is(Tok::Minus)) {
      BinaryOp op = is(Tok::Plus) ? BinaryOp::Add : BinaryOp::Sub;
      SourcePos p = advance().pos;
      lhs = make(p, Binary{op, std::move(lhs), mul_expr()});
    }
    return lhs;
  }
  ExprPtr mul_expr() {
    auto lhs = unary_expr();
    while (is(Tok::Star) || is(Tok::Slash) || is(Tok::Percent)) {
      BinaryOp op = is(Tok::Star) ? BinaryOp::Mul : is(Tok::Slash) ? BinaryOp::Div : BinaryOp::Mod;
      SourcePos p = advance().pos;
      lhs = make(p, Binary{op, std::move(lhs), unary_expr()});
    }
    return lhs;
  }
  ExprPtr unary_expr() {
    if (is(Tok::Minus) || is(Tok::Bang)) {
      UnaryOp op = is(Tok::Minus) ? UnaryOp::Neg : UnaryOp::Not;
      SourcePos p = advance().pos;
      return make(p, Unary{op, unary_expr()});
    }
    return primary();
  }

  std::vector<ExprPtr> call_args() {
    std::vector<ExprPtr> args;
    expect(Tok::LParen, "'('");
    if (!is(Tok::RParen)) {
      args.push_back(expression());
      while (is(Tok::Comma)) {
        advance();
        args.push_back(expression());
      }
    }
    expect(Tok::RParen, "')'");
    return args;
  }

  ExprPtr primary() {
    SourcePos p = cur().pos;
    if (is(Tok::Number)) {
      std::string text = advance().text;
      NumberLit lit;
      lit.is_int = text.find_first_of(".eE") == std::string::npos;
      if (lit.is_int) {
        long long v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{}) throw ParseError("integer literal out of range: " + text, p);
        lit.value = static_cast<double>(v);
      } else {
        lit.value = std::stod(text);
      }
      return make(p, lit);
    }
    if (is(Tok::LParen)) {
      advance();
      auto e = expression();
      expect(Tok::RParen, "')'");
      return e;
    }
    if (is_kw("extern")) {
      advance();
      expect(Tok::LParen, "'('");
      ExternCall call;
      call.routine = expect(Tok::String, "routine name string").text;
      while (is(Tok::Comma)) {
        advance();
        call.args.push_back(expression());
      }
      expect(Tok::RParen, "')'");
      return make(p, std::move(call));
    }
    if (is(Tok::Ident) && !kKeywords.count(cur().text)) {
      std::string name = advance().text;
      if (is(Tok::LParen)) return make(p, Call{name, call_args()});
      if (is(Tok::LBracket)) {
        advance();
        auto idx = expression();
        expect(Tok::RBracket, "']'");
        return make(p, IndexRead{name, std::move(idx)});
      }
      return make(p, VarRef{name});
    }
    throw ParseError("expected expression, found '" + describe(cur()) + "'", p);
  }

  // Preorder renumbering so ids follow source order regardless of parse order.
  void renumber(Program& prog) {
    NodeId next = 1;
    for (auto& fn : prog.functions) {
      fn.id = next++;
      number_block(fn.body, next);
    }
    prog.node_count = next - 1;
  }
  static void number_expr(Expr& e, NodeId& next) {
    e.id = next++;
    std::visit(
        [&](auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Unary>) {
            number_expr(*n.operand, next);
          } else if constexpr (std::is_same_v<T, Binary>) {
            number_expr(*n.lhs, next);
            number_expr(*n.rhs, next);
          } else if constexpr (std::is_same_v<T, IndexRead>) {
            number_expr(*n.index, next);
          } else if constexpr (std::is_same_v<T, Call> || std::is_same_v<T, ExternCall>) {
            for (auto& a : n.args) number_expr(*a, next);
          }
        },
        e.node);
  }
  static void number_block(Block& b, NodeId& next) {
    for (auto& s : b) {
      s.id = next++;
      std::visit(
          [&](auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
              number_expr(*n.value, next);
            } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
              number_expr(*n.index, next);
              number_expr(*n.value, next);
            } else if constexpr (std::is_same_v<T, IfStmt>) {
              number_expr(*n.cond, next);
              number_block(n.then_body, next);
              number_block(n.else_body, next);
            } else if constexpr (std::is_same_v<T, WhileStmt>) {
              number_expr(*n.cond, next);
              number_block(n.body, next);
            } else if constexpr (std::is_same_v<T, ForStmt>) {
              number_expr(*n.lo, next);
              number_expr(*n.hi, next);
              if (n.step) number_expr(*n.step, next);
              number_block(n.body, next);
            } else if constexpr (std::is_same_v<T, ReturnStmt>) {
              if (n.value) number_expr(*n.value, next);
            } else if constexpr (std::is_same_v<T, ExprStmt>) {
              number_expr(*n.expr, next);
            }
          },
          s.node);
    }
  }

  std::vector<Token> toks_;
  std::size_t idx_ = 0;
};

}  // namespace

Program parse(std::string_view source) {
  Lexer lexer(source);
  Parser parser(lexer.run());
  return parser.program();
}

Program parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open program file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace taintperf::dsl
