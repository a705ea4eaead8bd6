#include <cctype>
#include <sstream>

#include "arrad/errors.hpp"
#include "arrad/expr.hpp"

namespace arrad {

std::string shape_sexpr(const Shape& s) {
  if (s.is_leaf()) return std::to_string(s.extent());
  return "(* " + shape_sexpr(s.left()) + " " + shape_sexpr(s.right()) + ")";
}

namespace {

void emit(const Expr& e, std::string& out) {
  auto kids = [&](std::size_t from) {
    for (std::size_t k = from; k < e.arity(); ++k) {
      out += ' ';
      emit(e.child(k), out);
    }
  };
  out += '(';
  out += op_name(e.op());
  switch (e.op()) {
    case Op::Var:
      out += ' ' + std::to_string(e.var());
      break;
    case Op::Zero:
    case Op::One:
      out += ' ' + shape_sexpr(e.shape());
      break;
    case Op::ImapS:
    case Op::Imap:
    case Op::Imapb:
    case Op::Sum:
      out += ' ' + shape_sexpr(e.body().ctx().last().shape);
      kids(0);
      break;
    case Op::Bin:
      out += e.bin_op() == BinOp::Plus ? " plus" : " mul";
      kids(0);
      break;
    case Op::Scaledown:
      out += ' ' + std::to_string(e.nat());
      kids(0);
      break;
    case Op::Div:
    case Op::Mod:
      out += ' ' + shape_sexpr(e.times_fact().p);
      kids(0);
      break;
    default:
      kids(0);
  }
  out += ')';
}

// Minimal s-expression reader.
struct Sx {
  bool atom = false;
  std::string text;
  std::vector<Sx> items;
  std::size_t at = 0;  // byte offset in the source text
};

// A ParseError already tagged with the offset of the offending form.
class LocatedParseError : public ParseError {
 public:
  using ParseError::ParseError;
};

struct Reader {
  const std::string& t;
  std::size_t i = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("s-expression: " + what + " at offset " + std::to_string(i));
  }
  void skip() {
    while (i < t.size()) {
      if (std::isspace(static_cast<unsigned char>(t[i]))) {
        ++i;
      } else if (t[i] == ';') {
        while (i < t.size() && t[i] != '\n') ++i;
      } else {
        break;
      }
    }
  }
  Sx read(int depth = 0) {
    if (depth > 10000) fail("nesting too deep");
    skip();
    if (i >= t.size()) fail("unexpected end of input");
    if (t[i] == ')') fail("unexpected ')'");
    if (t[i] == '(') {
      Sx s;
      s.at = i++;
      for (;;) {
        skip();
        if (i >= t.size()) fail("unterminated list");
        if (t[i] == ')') {
          ++i;
          return s;
        }
        s.items.push_back(read(depth + 1));
      }
    }
    std::size_t start = i;
    while (i < t.size() && !std::isspace(static_cast<unsigned char>(t[i])) && t[i] != '(' && t[i] != ')' && t[i] != ';') ++i;
    return Sx{true, t.substr(start, i - start), {}, start};
  }
};

Sx read_all(const std::string& text) {
  Reader r{text};
  Sx s = r.read();
  r.skip();
  if (r.i != text.size()) r.fail("trailing input");
  return s;
}

std::size_t to_nat(const Sx& s) {
  if (!s.atom || s.text.empty()) throw ParseError("expected a natural number");
  std::size_t v = 0;
  for (char c : s.text) {
    if (!std::isdigit(static_cast<unsigned char>(c))) throw ParseError("expected a natural number, got '" + s.text + "'");
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

Shape to_shape(const Sx& s) {
  if (s.atom) return Shape::leaf(to_nat(s));
  if (s.items.size() != 3 || !s.items[0].atom || s.items[0].text != "*") throw ParseError("malformed shape");
  return Shape::prod(to_shape(s.items[1]), to_shape(s.items[2]));
}

const std::string& head(const Sx& s) {
  if (s.atom || s.items.empty() || !s.items[0].atom) throw ParseError("expected a tagged list");
  return s.items[0].text;
}

void arity(const Sx& s, std::size_t n) {
  if (s.items.size() != n + 1)
    throw ParseError("'" + head(s) + "' expects " + std::to_string(n) + " arguments, got " + std::to_string(s.items.size() - 1));
}

Shape leaf_diff(const Shape& a, const Shape& b) {
  if (!a.same_structure(b)) throw ParseError("index shapes have different structure");
  for (std::size_t k = 0; k < a.leaf_count(); ++k)
    if (a.leaves()[k] < b.leaves()[k]) throw ParseError("inferred negative extent");
  return zip_shapes(a, b, [](std::size_t x, std::size_t y) { return x - y; });
}

Shape minus_one(const Shape& u) {
  for (auto x : u.leaves())
    if (x == 0) throw ParseError("inferred negative extent");
  return zip_shapes(u, u, [](std::size_t x, std::size_t) { return x - 1; });
}

Expr build_node(const Ctx& ctx, const Sx& s);

Expr build(const Ctx& ctx, const Sx& s) {
  try {
    return build_node(ctx, s);
  } catch (const LocatedParseError&) {
    throw;
  } catch (const ParseError& err) {
    throw LocatedParseError(std::string(err.what()) + " at offset " + std::to_string(s.at));
  } catch (const Error& err) {
    throw LocatedParseError(std::string("ill-formed term: ") + err.what() + " at offset " + std::to_string(s.at));
  }
}

Expr build_node(const Ctx& ctx, const Sx& s) {
  const std::string& h = head(s);
  auto sub = [&](std::size_t k) { return build(ctx, s.items[k]); };
  auto binder = [&](const Shape& b, std::size_t k) { return build(ctx.extend(Kind::ix(b)), s.items[k]); };
  if (h == "var") {
    arity(s, 1);
    return var(ctx, to_nat(s.items[1]));
  }
  if (h == "zero" || h == "one") {
    arity(s, 1);
    Shape sh = to_shape(s.items[1]);
    return h == "zero" ? zero(ctx, sh) : one(ctx, sh);
  }
  if (h == "imaps" || h == "imap" || h == "sum" || h == "imapb") {
    arity(s, 2);
    Shape b = to_shape(s.items[1]);
    Expr body = binder(b, 2);
    if (h == "imaps") return imap_s(body);
    if (h == "imap") return imap(body);
    if (h == "sum") return sum(body);
    return imapb(TimesFact::infer(b, body.shape()), body);
  }
  if (h == "sels" || h == "sel") {
    arity(s, 2);
    return h == "sels" ? sel_s(sub(1), sub(2)) : sel(sub(1), sub(2));
  }
  if (h == "selb") {
    arity(s, 2);
    Expr a = sub(1), i = sub(2);
    const Shape& q = a.shape();
    const Shape& bs = i.shape();
    if (!q.same_structure(bs)) throw ParseError("selb: block structure mismatch");
    std::vector<std::size_t> p;
    for (std::size_t k = 0; k < q.leaf_count(); ++k) {
      if (bs.leaves()[k] == 0 || q.leaves()[k] % bs.leaves()[k] != 0) throw ParseError("selb: extents do not divide");
      p.push_back(q.leaves()[k] / bs.leaves()[k]);
    }
    std::size_t at = 0;
    std::function<Shape(const Shape&)> rebuild_p = [&](const Shape& t) -> Shape {
      if (t.is_leaf()) return Shape::leaf(p[at++]);
      Shape l = rebuild_p(t.left());
      return Shape::prod(l, rebuild_p(t.right()));
    };
    return selb(TimesFact::make(bs, rebuild_p(q), q), a, i);
  }
  if (h == "zero-but") {
    arity(s, 3);
    return zero_but(sub(1), sub(2), sub(3));
  }
  if (h == "slide") {
    arity(s, 2);
    Expr i = sub(1), e = sub(2);
    Shape p = leaf_diff(e.shape(), i.shape());
    return slide(i, PlusFact::make(i.shape(), p, e.shape()), e, SucFact::infer(p));
  }
  if (h == "backslide") {
    arity(s, 2);
    Expr i = sub(1), e = sub(2);
    Shape p = minus_one(e.shape());
    return backslide(i, e, SucFact::make(p, e.shape()), PlusFact::infer(i.shape(), p));
  }
  if (h == "logistic" || h == "minus") {
    arity(s, 1);
    return h == "logistic" ? logistic(sub(1)) : minus(sub(1));
  }
  if (h == "bin") {
    arity(s, 3);
    if (!s.items[1].atom) throw ParseError("bin: expected operator");
    const std::string& o = s.items[1].text;
    if (o != "plus" && o != "mul") throw ParseError("bin: unknown operator '" + o + "'");
    return bin(o == "plus" ? BinOp::Plus : BinOp::Mul, sub(2), sub(3));
  }
  if (h == "scaledown") {
    arity(s, 2);
    return scaledown(to_nat(s.items[1]), sub(2));
  }
  if (h == "div" || h == "mod") {
    arity(s, 2);
    Shape p = to_shape(s.items[1]);
    Expr i = sub(2);
    const Shape& q = i.shape();
    if (!q.same_structure(p)) throw ParseError(h + ": block structure mismatch");
    std::vector<std::size_t> sv;
    for (std::size_t k = 0; k < q.leaf_count(); ++k) {
      if (p.leaves()[k] == 0 || q.leaves()[k] % p.leaves()[k] != 0) throw ParseError(h + ": extents do not divide");
      sv.push_back(q.leaves()[k] / p.leaves()[k]);
    }
    std::size_t at = 0;
    std::function<Shape(const Shape&)> rb = [&](const Shape& t) -> Shape {
      if (t.is_leaf()) return Shape::leaf(sv[at++]);
      Shape l = rb(t.left());
      return Shape::prod(l, rb(t.right()));
    };
    TimesFact m = TimesFact::make(rb(q), p, q);
    return h == "div" ? ix_div(m, i) : ix_mod(m, i);
  }
  if (h == "ix-plus") {
    arity(s, 2);
    Expr i = sub(1), j = sub(2);
    Shape p = minus_one(j.shape());
    return ix_plus(i, j, SucFact::make(p, j.shape()), PlusFact::infer(i.shape(), p));
  }
  if (h == "ix-minus") {
    arity(s, 3);
    Expr i = sub(1), j = sub(2);
    Shape p = leaf_diff(i.shape(), j.shape());
    SucFact su = SucFact::infer(p);
    return ix_minus(i, j, PlusFact::make(j.shape(), p, i.shape()), su, binder(su.u, 3));
  }
  if (h == "ix-minus-r") {
    arity(s, 3);
    Expr i = sub(1), j = sub(2);
    Shape p = minus_one(j.shape());
    Shape sh = leaf_diff(i.shape(), p);
    return ix_minus_r(i, j, PlusFact::make(sh, p, i.shape()), SucFact::make(p, j.shape()), binder(sh, 3));
  }
  throw ParseError("unknown form '" + h + "'");
}

Ctx build_ctx(const Sx& s) {
  if (head(s) != "ctx") throw ParseError("expected (ctx ...)");
  Ctx c;
  for (std::size_t k = 1; k < s.items.size(); ++k) {
    const Sx& it = s.items[k];
    arity(it, 1);
    const std::string& h = head(it);
    if (h != "ar" && h != "ix") throw ParseError("context entry must be (ar SHAPE) or (ix SHAPE)");
    c = c.extend(h == "ar" ? Kind::ar(to_shape(it.items[1])) : Kind::ix(to_shape(it.items[1])));
  }
  return c;
}

}  // namespace

std::string to_sexpr(const Expr& e) {
  std::string out;
  emit(e, out);
  return out;
}

std::string ctx_to_sexpr(const Ctx& ctx) {
  std::string out = "(ctx";
  for (const auto& k : ctx.kinds()) out += std::string(" (") + (k.is_ix ? "ix " : "ar ") + shape_sexpr(k.shape) + ")";
  return out + ")";
}

Expr parse_sexpr(const Ctx& ctx, const std::string& text) {
  try {
    return build(ctx, read_all(text));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& err) {
    throw ParseError(std::string("ill-formed term: ") + err.what());
  }
}

Ctx parse_ctx_sexpr(const std::string& text) { return build_ctx(read_all(text)); }

std::string expr_file_text(const Expr& e) { return "(expr " + ctx_to_sexpr(e.ctx()) + "\n  " + to_sexpr(e) + ")\n"; }

Expr parse_expr_file(const std::string& text) {
  Sx s = read_all(text);
  if (head(s) != "expr") throw ParseError("expected (expr (ctx ...) TERM)");
  arity(s, 2);
  Ctx c = build_ctx(s.items[1]);
  try {
    return build(c, s.items[2]);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& err) {
    throw ParseError(std::string("ill-formed term: ") + err.what());
  }
}

// -------------------------------------------------------------------- infix

namespace {

struct Infix {
  std::vector<std::string> names;  // oldest first, grows with binders
  int fresh = 0;

  std::string name_of(std::size_t v) const {
    if (v >= names.size()) return "v" + std::to_string(v);
    return names[names.size() - 1 - v];
  }

  std::string bind(const Expr& e, const std::string& label, const std::string& ix) {
    const Expr& b = e.body();
    std::string x = "x" + std::to_string(++fresh);
    names.push_back(x);
    std::string body = go(b);
    names.pop_back();
    return label + "[" + x + (ix.empty() ? " < " + b.ctx().last().shape.leaves_str() : " = " + ix) + "] (" + body + ")";
  }

  std::string go(const Expr& e) {
    switch (e.op()) {
      case Op::Var: return name_of(e.var());
      case Op::Zero: return "zero";
      case Op::One: return "one";
      case Op::Bin:
        return "(" + go(e.child(0)) + ") " + (e.bin_op() == BinOp::Plus ? "+" : "*") + " (" + go(e.child(1)) + ")";
      case Op::Minus: return "-(" + go(e.child(0)) + ")";
      case Op::Scaledown: return "(" + go(e.child(0)) + ") / " + std::to_string(e.nat());
      case Op::Logistic: return "logistic(" + go(e.child(0)) + ")";
      case Op::ImapS: return bind(e, "imaps", "");
      case Op::Imap: return bind(e, "imap", "");
      case Op::Imapb: return bind(e, "imapb", "");
      case Op::Sum: return bind(e, "sum", "");
      case Op::SelS: return "sels(" + go(e.child(0)) + ", " + go(e.child(1)) + ")";
      case Op::Sel: return "sel(" + go(e.child(0)) + ", " + go(e.child(1)) + ")";
      case Op::Selb: return "selb(" + go(e.child(0)) + ", " + go(e.child(1)) + ")";
      case Op::ZeroBut:
        return "zero-but(" + go(e.child(0)) + " == " + go(e.child(1)) + ", " + go(e.child(2)) + ")";
      case Op::Slide: return "slide(" + go(e.child(0)) + ", " + go(e.child(1)) + ")";
      case Op::Backslide: return "backslide(" + go(e.child(0)) + ", " + go(e.child(1)) + ")";
      case Op::Div: return "(" + go(e.child(0)) + " / " + e.times_fact().p.leaves_str() + ")";
      case Op::Mod: return "(" + go(e.child(0)) + " % " + e.times_fact().p.leaves_str() + ")";
      case Op::IxPlus: return "(" + go(e.child(0)) + " + " + go(e.child(1)) + ")";
      case Op::IxMinus: return bind(e, "ix-minus", go(e.child(0)) + " - " + go(e.child(1)));
      case Op::IxMinusR: return bind(e, "ix-minus-r", go(e.child(0)) + " - " + go(e.child(1)));
    }
    return "?";
  }
};

}  // namespace

std::string to_infix(const Expr& e, const std::vector<std::string>& names) {
  Infix p{names};
  return p.go(e);
}

}  // namespace arrad
