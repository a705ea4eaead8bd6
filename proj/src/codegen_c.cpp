#include "arrad/codegen_c.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <sys/wait.h>

#include "arrad/errors.hpp"
#include "arrad/optimizer.hpp"

namespace arrad {

const char* const kCFlags = "-O2 -fno-signed-zeros -fno-math-errno -fno-trapping-math -fassociative-math";

std::string c_dims(const Shape& s) {
  std::string out;
  for (auto x : s.leaves()) out += "[" + std::to_string(x) + "]";
  return out;
}

bool selectable(const Expr& e) {
  switch (e.op()) {
    case Op::Var:
    case Op::Zero:
    case Op::One:
    case Op::Div:
    case Op::Mod:
    case Op::IxPlus:
      return true;
    case Op::SelS:
    case Op::Sel:
    case Op::Selb:
      return selectable(e.child(0));
    case Op::ImapS:
    case Op::Imap:
    case Op::Imapb:
    case Op::IxMinus:
    case Op::IxMinusR:
      return selectable(e.body());
    case Op::ZeroBut:
      return selectable(e.child(2));
    case Op::Logistic:
    case Op::Minus:
    case Op::Scaledown:
      return selectable(e.child(0));
    case Op::Bin:
      return selectable(e.child(0)) && selectable(e.child(1));
    case Op::Sum:
    case Op::Slide:
    case Op::Backslide:
      return false;
  }
  return false;
}

namespace {

using Idx = std::vector<std::string>;
using LValue = std::function<std::string(const Idx&)>;

std::string subterm_text(const Expr& e) {
  std::string s = to_sexpr(e);
  if (s.size() > 400) s = s.substr(0, 400) + " ...";
  return s;
}

[[noreturn]] void fail(const std::string& why, const Expr& e) { throw ExtractionFailure(why, subterm_text(e)); }

// Per-slot meaning of a context during emission, oldest first.
struct Entry {
  bool is_ix = false;
  std::string array;
  Idx idx;
};

struct Emitter {
  std::vector<Entry> scope;
  unsigned& counter;
  std::ostringstream out;
  int depth;

  Emitter(std::vector<Entry> sc, unsigned& c, int indent) : scope(std::move(sc)), counter(c), depth(indent) {}

  const Entry& lookup(std::size_t v) const { return scope.at(scope.size() - 1 - v); }

  struct Bind {
    Emitter& em;
    Bind(Emitter& e, Idx idx) : em(e) { em.scope.push_back({true, "", std::move(idx)}); }
    ~Bind() { em.scope.pop_back(); }
  };

  std::string pad() const { return std::string(static_cast<std::size_t>(depth) * 2, ' '); }
  void line(const std::string& s) { out << pad() << s << "\n"; }

  // ---------------------------------------------------------- scalars

  Idx index(const Expr& i) {
    switch (i.op()) {
      case Op::Var: {
        const Entry& en = lookup(i.var());
        if (!en.is_ix) fail("array variable used as an index", i);
        return en.idx;
      }
      case Op::Div:
      case Op::Mod: {
        Idx a = index(i.child(0));
        const auto& p = i.times_fact().p.leaves();
        for (std::size_t l = 0; l < a.size(); ++l)
          a[l] = "(" + a[l] + (i.op() == Op::Div ? " / " : " % ") + std::to_string(p[l]) + ")";
        return a;
      }
      case Op::IxPlus: {
        Idx a = index(i.child(0)), b = index(i.child(1));
        for (std::size_t l = 0; l < a.size(); ++l) a[l] = "(" + a[l] + " + " + b[l] + ")";
        return a;
      }
      default:
        fail("not an index term", i);
    }
  }

  static std::string equal_cond(const Idx& a, const Idx& b) {
    std::string c;
    for (std::size_t l = 0; l < a.size(); ++l) c += (l ? " && " : "") + a[l] + " == " + b[l];
    return c;
  }

  // Guard and binder indices for i ⊝ j with binder extents `ext`.
  static void minus_parts(const Idx& a, const Idx& b, const std::vector<std::size_t>& ext, std::string& cond, Idx& k) {
    cond.clear();
    k.clear();
    for (std::size_t l = 0; l < a.size(); ++l) {
      cond += (l ? " && " : "") + a[l] + " >= " + b[l] + " && " + a[l] + " - " + b[l] + " < " + std::to_string(ext[l]);
      k.push_back("(" + a[l] + " - " + b[l] + ")");
    }
  }

  static std::vector<std::size_t> minus_extents(const Expr& e) {
    return e.op() == Op::IxMinus ? e.suc_fact().u.leaves() : e.plus_fact().s.leaves();
  }

  static Idx zeros(const Shape& s) { return Idx(s.leaf_count(), "0"); }

  std::string element(const std::string& array, const Idx& pos) {
    std::string s = "(*" + array + ")";
    for (const auto& p : pos) s += "[" + p + "]";
    return s;
  }

  std::string render(const Expr& e, const Idx& pos) {
    switch (e.op()) {
      case Op::Var: {
        const Entry& en = lookup(e.var());
        if (en.is_ix) fail("index variable used as an array", e);
        return element(en.array, pos);
      }
      case Op::Zero:
        return "0.0f";
      case Op::One:
        return "1.0f";
      case Op::SelS: {
        Idx ip = index(e.child(1));
        const Expr& a = e.child(0);
        if (a.op() == Op::Var && !lookup(a.var()).is_ix) return "(&" + element(lookup(a.var()).array, ip) + ")[" + pos.at(0) + "]";
        return render(a, ip);
      }
      case Op::Sel: {
        Idx ip = index(e.child(1));
        ip.insert(ip.end(), pos.begin(), pos.end());
        return render(e.child(0), ip);
      }
      case Op::Selb: {
        Idx ip = index(e.child(1));
        const auto& p = e.times_fact().p.leaves();
        for (std::size_t l = 0; l < ip.size(); ++l) ip[l] = "(" + ip[l] + " * " + std::to_string(p[l]) + " + " + pos[l] + ")";
        return render(e.child(0), ip);
      }
      case Op::ImapS: {
        Bind b(*this, pos);
        return render(e.body(), zeros(e.body().shape()));
      }
      case Op::Imap: {
        std::size_t n = e.body().ctx().last().shape.leaf_count();
        Bind b(*this, Idx(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n)));
        return render(e.body(), Idx(pos.begin() + static_cast<std::ptrdiff_t>(n), pos.end()));
      }
      case Op::Imapb: {
        const auto& p = e.times_fact().p.leaves();
        Idx outer, inner;
        for (std::size_t l = 0; l < pos.size(); ++l) {
          outer.push_back("(" + pos[l] + " / " + std::to_string(p[l]) + ")");
          inner.push_back("(" + pos[l] + " % " + std::to_string(p[l]) + ")");
        }
        Bind b(*this, outer);
        return render(e.body(), inner);
      }
      case Op::ZeroBut:
        return "((" + equal_cond(index(e.child(0)), index(e.child(1))) + ") ? " + render(e.child(2), pos) + " : 0.0f)";
      case Op::IxMinus:
      case Op::IxMinusR: {
        std::string cond;
        Idx k;
        minus_parts(index(e.child(0)), index(e.child(1)), minus_extents(e), cond, k);
        Bind b(*this, k);
        return "((" + cond + ") ? " + render(e.body(), pos) + " : 0.0f)";
      }
      case Op::Logistic:
        return "(1.0f / (1.0f + expf(-" + render(e.child(0), pos) + ")))";
      case Op::Minus:
        return "(-" + render(e.child(0), pos) + ")";
      case Op::Scaledown:
        return "(" + render(e.child(0), pos) + " / " + std::to_string(e.nat()) + ".0f)";
      case Op::Bin:
        return "(" + render(e.child(0), pos) + (e.bin_op() == BinOp::Plus ? " + " : " * ") + render(e.child(1), pos) + ")";
      default:
        fail("term needs a loop or a temporary in scalar position", e);
    }
  }

  // ------------------------------------------------------- statements

  // Opens a loop nest over s; returns the loop variables. Caller closes.
  Idx open_nest(const Shape& s) {
    unsigned c = ++counter;
    Idx vars;
    const auto& ext = s.leaves();
    for (std::size_t l = 0; l < ext.size(); ++l) {
      std::string v = "x" + std::to_string(c) + "_" + std::to_string(l + 1);
      line("for (size_t " + v + " = 0; " + v + " < " + std::to_string(ext[l]) + "; " + v + "++) {");
      ++depth;
      vars.push_back(v);
    }
    return vars;
  }

  void close_nest(const Shape& s) {
    for (std::size_t l = 0; l < s.leaf_count(); ++l) {
      --depth;
      line("}");
    }
  }

  void fill_zero(const Shape& s, const LValue& dst) {
    Idx v = open_nest(s);
    line(dst(v) + " = 0.0f;");
    close_nest(s);
  }

  // f ⊠ x with f selectable, pushed inside the loop structure of x.
  Expr push_mul(const Expr& f, const Expr& x) {
    auto up = [](const Expr& t, const Expr& body) { return lift(t, body.ctx().last()); };
    auto v0 = [](const Expr& body) { return var(body.ctx(), 0); };
    switch (x.op()) {
      case Op::Sum:
        return sum(mul(up(f, x.body()), x.body()));
      case Op::Imap:
        return imap(mul(sel(up(f, x.body()), v0(x.body())), x.body()));
      case Op::ImapS:
        return imap_s(mul(sel_s(up(f, x.body()), v0(x.body())), x.body()));
      case Op::Imapb:
        return imapb(x.times_fact(), mul(selb(x.times_fact(), up(f, x.body()), v0(x.body())), x.body()));
      case Op::ZeroBut:
        return zero_but(x.child(0), x.child(1), mul(f, x.child(2)));
      case Op::IxMinus:
        return ix_minus(x.child(0), x.child(1), x.plus_fact(), x.suc_fact(), mul(up(f, x.body()), x.body()));
      case Op::IxMinusR:
        return ix_minus_r(x.child(0), x.child(1), x.plus_fact(), x.suc_fact(), mul(up(f, x.body()), x.body()));
      case Op::Bin:
        if (x.bin_op() == BinOp::Plus) return plus(mul(f, x.child(0)), mul(f, x.child(1)));
        if (selectable(x.child(0))) return mul(mul(f, x.child(0)), x.child(1));
        if (selectable(x.child(1))) return mul(mul(f, x.child(1)), x.child(0));
        fail("product of two loop-requiring terms needs a temporary", x);
      case Op::Minus:
        return mul(minus(f), x.child(0));
      case Op::Scaledown:
        return mul(scaledown(x.nat(), f), x.child(0));
      default:
        fail("cannot distribute a factor into this term", x);
    }
  }

  // wrap(x) for a linear unary wrap (minus, scaledown), pushed inside x.
  Expr push_unary(const std::function<Expr(const Expr&)>& wrap, const Expr& x) {
    switch (x.op()) {
      case Op::Sum:
        return sum(wrap(x.body()));
      case Op::Imap:
        return imap(wrap(x.body()));
      case Op::ImapS:
        return imap_s(wrap(x.body()));
      case Op::Imapb:
        return imapb(x.times_fact(), wrap(x.body()));
      case Op::ZeroBut:
        return zero_but(x.child(0), x.child(1), wrap(x.child(2)));
      case Op::IxMinus:
        return ix_minus(x.child(0), x.child(1), x.plus_fact(), x.suc_fact(), wrap(x.body()));
      case Op::IxMinusR:
        return ix_minus_r(x.child(0), x.child(1), x.plus_fact(), x.suc_fact(), wrap(x.body()));
      case Op::Bin:
        if (x.bin_op() == BinOp::Plus) return plus(wrap(x.child(0)), wrap(x.child(1)));
        if (selectable(x.child(0))) return mul(wrap(x.child(0)), x.child(1));
        if (selectable(x.child(1))) return mul(x.child(0), wrap(x.child(1)));
        fail("product of two loop-requiring terms needs a temporary", x);
      case Op::Minus:
        return push_unary([&](const Expr& y) { return wrap(minus(y)); }, x.child(0));
      case Op::Scaledown: {
        std::size_t n = x.nat();
        return push_unary([&, n](const Expr& y) { return wrap(scaledown(n, y)); }, x.child(0));
      }
      default:
        fail("cannot push an operator into this term", x);
    }
  }

  // Selection from a loop-requiring array, pushed inside it.
  Expr push_sel(const Expr& e) {
    const Expr& a = e.child(0);
    const Expr& i = e.child(1);
    auto again = [&](const Expr& arr, const Expr& ix) {
      switch (e.op()) {
        case Op::SelS: return sel_s(arr, ix);
        case Op::Sel: return sel(arr, ix);
        default: return selb(e.times_fact(), arr, ix);
      }
    };
    switch (a.op()) {
      case Op::Sum:
        return sum(again(a.body(), lift(i, a.body().ctx().last())));
      case Op::Bin:
        return bin(a.bin_op(), again(a.child(0), i), again(a.child(1), i));
      case Op::ZeroBut:
        return zero_but(a.child(0), a.child(1), again(a.child(2), i));
      case Op::Minus:
        return minus(again(a.child(0), i));
      case Op::Scaledown:
        return scaledown(a.nat(), again(a.child(0), i));
      case Op::ImapS:
        if (e.op() == Op::SelS) return substitute(0, a.body(), i);
        break;
      case Op::Imap:
        if (e.op() == Op::Sel) return substitute(0, a.body(), i);
        break;
      default:
        break;
    }
    fail("selection from a term that needs a temporary", e);
  }

  void emit(const Expr& e, const LValue& dst, EmitMode mode) {
    if (selectable(e)) {
      Idx v = open_nest(e.shape());
      line(dst(v) + (mode == EmitMode::Assign ? " = " : " += ") + render(e, v) + ";");
      close_nest(e.shape());
      return;
    }
    switch (e.op()) {
      case Op::Sum: {
        if (mode == EmitMode::Assign) fill_zero(e.shape(), dst);
        const Shape& s = e.body().ctx().last().shape;
        Idx v = open_nest(s);
        {
          Bind b(*this, v);
          emit(e.body(), dst, EmitMode::Accumulate);
        }
        close_nest(s);
        return;
      }
      case Op::Imap:
      case Op::ImapS:
      case Op::Imapb: {
        const Shape& s = e.body().ctx().last().shape;
        Idx v = open_nest(s);
        LValue inner;
        if (e.op() == Op::Imap) {
          inner = [&, v](const Idx& pos) {
            Idx full = v;
            full.insert(full.end(), pos.begin(), pos.end());
            return dst(full);
          };
        } else if (e.op() == Op::ImapS) {
          inner = [&, v](const Idx&) { return dst(v); };
        } else {
          auto p = e.times_fact().p.leaves();
          inner = [&, v, p](const Idx& pos) {
            Idx full;
            for (std::size_t l = 0; l < v.size(); ++l) full.push_back(v[l] + " * " + std::to_string(p[l]) + " + " + pos[l]);
            return dst(full);
          };
        }
        {
          Bind b(*this, v);
          emit(e.body(), inner, mode);
        }
        close_nest(s);
        return;
      }
      case Op::ZeroBut: {
        line("if (" + equal_cond(index(e.child(0)), index(e.child(1))) + ") {");
        ++depth;
        emit(e.child(2), dst, mode);
        --depth;
        close_guard(e.shape(), dst, mode);
        return;
      }
      case Op::IxMinus:
      case Op::IxMinusR: {
        std::string cond;
        Idx k;
        minus_parts(index(e.child(0)), index(e.child(1)), minus_extents(e), cond, k);
        line("if (" + cond + ") {");
        ++depth;
        {
          Bind b(*this, k);
          emit(e.body(), dst, mode);
        }
        --depth;
        close_guard(e.shape(), dst, mode);
        return;
      }
      case Op::Bin: {
        const Expr& a = e.child(0);
        const Expr& b = e.child(1);
        if (e.bin_op() == BinOp::Plus) {
          emit(a, dst, mode);
          emit(b, dst, EmitMode::Accumulate);
          return;
        }
        if (selectable(a)) return emit(push_mul(a, b), dst, mode);
        if (selectable(b)) return emit(push_mul(b, a), dst, mode);
        fail("product of two loop-requiring terms needs a temporary", e);
      }
      case Op::Minus:
        return emit(push_unary([](const Expr& x) { return minus(x); }, e.child(0)), dst, mode);
      case Op::Scaledown: {
        std::size_t n = e.nat();
        return emit(push_unary([n](const Expr& x) { return scaledown(n, x); }, e.child(0)), dst, mode);
      }
      case Op::SelS:
      case Op::Sel:
      case Op::Selb:
        return emit(push_sel(e), dst, mode);
      case Op::Logistic:
        fail("logistic of a loop-requiring term needs a temporary", e);
      case Op::Slide:
        fail("slide is not selectable", e);
      case Op::Backslide:
        fail("backslide is not selectable", e);
      default:
        fail("no loop-nest translation", e);
    }
  }

  void close_guard(const Shape& s, const LValue& dst, EmitMode mode) {
    if (mode == EmitMode::Assign) {
      line("} else {");
      ++depth;
      fill_zero(s, dst);
      --depth;
    }
    line("}");
  }
};

std::vector<Entry> array_scope(const Ctx& ctx, const std::vector<std::string>& names) {
  auto kinds = ctx.kinds();
  if (names.size() != kinds.size()) throw KindMismatch("emit: one name per context slot is required");
  std::vector<Entry> sc;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    if (kinds[k].is_ix) throw KindMismatch("emit: index slots are not allowed in a top-level context");
    sc.push_back({false, names[k], {}});
  }
  return sc;
}

std::string emit_into(const Expr& e, const std::vector<std::string>& names, const std::string& dst, EmitMode mode,
                      unsigned& counter, int indent) {
  Emitter em(array_scope(e.ctx(), names), counter, indent);
  LValue lv = [dst](const Idx& pos) {
    std::string s = "(*" + dst + ")";
    for (const auto& p : pos) s += "[" + p + "]";
    return s;
  };
  em.emit(e, lv, mode);
  return em.out.str();
}

std::string param(const std::string& name, const Shape& s) { return "float (*restrict " + name + ")" + c_dims(s); }

struct StepLayout {
  std::vector<std::string> params;       // declarations
  std::vector<std::string> slot_names;   // full context, oldest first
  std::vector<std::pair<std::string, Shape>> slots;  // name, shape for every parameter
};

StepLayout step_layout(const Chain& c, const std::vector<std::size_t>& grad_slots) {
  StepLayout l;
  l.slot_names = c.names();
  auto kinds = c.full_ctx().kinds();
  for (std::size_t k = 0; k < kinds.size(); ++k) l.slots.emplace_back(l.slot_names[k], kinds[k].shape);
  for (auto b : grad_slots) l.slots.emplace_back("dd" + l.slot_names.at(b), kinds.at(b).shape);
  for (const auto& [n, s] : l.slots) l.params.push_back(param(n, s));
  return l;
}

std::string join(const std::vector<std::string>& xs, const std::string& sep) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? sep : "") + xs[k];
  return s;
}

// Byte initializer of the dump-format shape header.
std::string shape_header_bytes(const Shape& s) {
  std::vector<unsigned> bytes;
  std::function<void(const Shape&)> go = [&](const Shape& t) {
    if (t.is_leaf()) {
      bytes.push_back(0);
      auto x = static_cast<std::uint32_t>(t.extent());
      for (int k = 0; k < 4; ++k) bytes.push_back((x >> (8 * k)) & 0xffu);
    } else {
      bytes.push_back(1);
      go(t.left());
      go(t.right());
    }
  };
  go(s);
  std::string out;
  for (std::size_t k = 0; k < bytes.size(); ++k) out += (k ? "," : "") + std::to_string(bytes[k]);
  return out;
}

const char* kDumpIo = R"(static int arrad_read_shape(FILE* f, size_t* n) {
  int tag = fgetc(f);
  if (tag == 0) {
    unsigned char b[4];
    if (fread(b, 1, 4, f) != 4) return 0;
    *n = (size_t)b[0] | ((size_t)b[1] << 8) | ((size_t)b[2] << 16) | ((size_t)b[3] << 24);
    return 1;
  }
  if (tag == 1) {
    size_t a, c;
    if (!arrad_read_shape(f, &a) || !arrad_read_shape(f, &c)) return 0;
    *n = a * c;
    return 1;
  }
  return 0;
}

static int arrad_read_dump(FILE* f, float* dst, size_t n) {
  size_t m;
  if (!arrad_read_shape(f, &m) || m != n) return 0;
  for (size_t k = 0; k < n; k++) {
    unsigned char b[8];
    uint64_t u = 0;
    double d;
    if (fread(b, 1, 8, f) != 8) return 0;
    for (int j = 7; j >= 0; j--) u = (u << 8) | b[j];
    memcpy(&d, &u, sizeof d);
    dst[k] = (float)d;
  }
  return 1;
}

static void arrad_write_dump(FILE* f, const unsigned char* hdr, size_t hlen, const float* src, size_t n) {
  fwrite(hdr, 1, hlen, f);
  for (size_t k = 0; k < n; k++) {
    double d = src[k];
    uint64_t u;
    unsigned char b[8];
    memcpy(&u, &d, sizeof u);
    for (int j = 0; j < 8; j++) b[j] = (unsigned char)(u >> (8 * j));
    fwrite(b, 1, 8, f);
  }
}

static void arrad_write_dump_d(FILE* f, const unsigned char* hdr, size_t hlen, const double* src, size_t n) {
  fwrite(hdr, 1, hlen, f);
  for (size_t k = 0; k < n; k++) {
    uint64_t u;
    unsigned char b[8];
    memcpy(&u, &src[k], sizeof u);
    for (int j = 0; j < 8; j++) b[j] = (unsigned char)(u >> (8 * j));
    fwrite(b, 1, 8, f);
  }
}
)";

const char* kPrelude = "#include <math.h>\n#include <stdint.h>\n#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n\n";

}  // namespace

std::string emit_stmt(const Expr& e, const std::vector<std::string>& names, const CStorage& dst, EmitMode mode,
                      unsigned& counter, int indent) {
  if (e.is_ix()) throw KindMismatch("emit_stmt: index terms have no storage");
  if (!(e.shape() == dst.shape)) throw ShapeError("emit_stmt: destination shape " + dst.shape.str() + " differs from " + e.shape().str());
  return emit_into(e, names, dst.name, mode, counter, indent);
}

std::string emit_chain_step(const Chain& c, const GradEnv& g, const CStepOptions& opt) {
  if (!(g.delta() == c.full_ctx())) throw KindMismatch("emit_chain_step: adjoints do not belong to this chain");
  StepLayout l = step_layout(c, opt.grad_slots);
  std::ostringstream os;
  auto forward = [&](std::ostringstream& body, unsigned& counter) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      const auto& b = c.bindings()[k];
      std::vector<std::string> names = c.names_before(k);
      body << "  /* " << l.slot_names[c.value_slot(k)] << " */\n";
      body << emit_into(optimize(b.body, opt.opt_passes), names, l.slot_names[c.value_slot(k)], EmitMode::Assign, counter, 1);
    }
  };
  {
    unsigned counter = 0;
    std::ostringstream body;
    forward(body, counter);
    std::vector<std::string> fwd(l.params.begin(), l.params.begin() + static_cast<std::ptrdiff_t>(l.slot_names.size()));
    os << "void " << opt.prefix << "_forward(" << join(fwd, ", ") << ") {\n" << body.str() << "}\n\n";
  }
  unsigned counter = 0;
  std::ostringstream body;
  forward(body, counter);
  for (std::size_t k = c.size(); k-- > 0;) {
    const std::string& ph = l.slot_names[c.placeholder_slot(k)];
    body << "  /* " << ph << " */\n";
    body << emit_into(*g.slot(c.value_slot(k)), l.slot_names, ph, EmitMode::Assign, counter, 1);
  }
  for (auto b : opt.grad_slots) {
    std::string dd = "dd" + l.slot_names.at(b);
    body << "  /* " << dd << " */\n";
    body << emit_into(*g.slot(b), l.slot_names, dd, EmitMode::Assign, counter, 1);
  }
  os << "void " << opt.prefix << "_step(" << join(l.params, ", ") << ") {\n" << body.str() << "}\n";
  return os.str();
}

std::string emit_expr_program(const Expr& e, const std::vector<std::string>& names) {
  if (e.is_ix()) throw KindMismatch("emit_expr_program: index terms have no storage");
  auto kinds = e.ctx().kinds();
  std::ostringstream os;
  os << kPrelude << kDumpIo << "\n";
  std::vector<std::string> params;
  for (std::size_t k = 0; k < kinds.size(); ++k) params.push_back(param(names.at(k), kinds[k].shape));
  params.push_back(param("arrad_out", e.shape()));
  unsigned counter = 0;
  os << "void arrad_eval(" << join(params, ", ") << ") {\n"
     << emit_into(e, names, "arrad_out", EmitMode::Assign, counter, 1) << "}\n\n";
  os << "int main(int argc, char** argv) {\n"
     << "  if (argc != 3) return 2;\n"
     << "  FILE* in = fopen(argv[1], \"rb\");\n"
     << "  if (!in) return 3;\n";
  std::vector<std::string> args;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::string& n = names[k];
    os << "  float (*" << n << ")" << c_dims(kinds[k].shape) << " = malloc(sizeof(*" << n << "));\n"
       << "  if (!arrad_read_dump(in, (float*)" << n << ", " << kinds[k].shape.size() << ")) return 4;\n";
    args.push_back(n);
  }
  os << "  fclose(in);\n"
     << "  float (*arrad_out)" << c_dims(e.shape()) << " = malloc(sizeof(*arrad_out));\n";
  args.push_back("arrad_out");
  os << "  arrad_eval(" << join(args, ", ") << ");\n"
     << "  static const unsigned char hdr[] = {" << shape_header_bytes(e.shape()) << "};\n"
     << "  FILE* out = fopen(argv[2], \"wb\");\n"
     << "  if (!out) return 5;\n"
     << "  arrad_write_dump(out, hdr, sizeof hdr, (const float*)arrad_out, " << e.shape().size() << ");\n"
     << "  fclose(out);\n"
     << "  return 0;\n}\n";
  return os.str();
}

std::string emit_chain_program(const Chain& c, const GradEnv& g, std::size_t opt_passes) {
  CStepOptions opt;
  opt.opt_passes = opt_passes;
  for (std::size_t b = 0; b < c.base().size(); ++b) opt.grad_slots.push_back(b);
  StepLayout l = step_layout(c, opt.grad_slots);
  std::ostringstream os;
  os << kPrelude << kDumpIo << "\n" << emit_chain_step(c, g, opt) << "\n";
  os << "int main(int argc, char** argv) {\n"
     << "  if (argc != 3) return 2;\n"
     << "  FILE* in = fopen(argv[1], \"rb\");\n"
     << "  if (!in) return 3;\n";
  std::vector<std::string> args;
  for (std::size_t k = 0; k < l.slots.size(); ++k) {
    const auto& [n, s] = l.slots[k];
    os << "  float (*" << n << ")" << c_dims(s) << " = calloc(1, sizeof(*" << n << "));\n";
    if (k < c.base().size()) os << "  if (!arrad_read_dump(in, (float*)" << n << ", " << s.size() << ")) return 4;\n";
    args.push_back(n);
  }
  os << "  fclose(in);\n"
     << "  arrad_step(" << join(args, ", ") << ");\n"
     << "  FILE* out = fopen(argv[2], \"wb\");\n"
     << "  if (!out) return 5;\n";
  std::vector<std::size_t> outs{c.full_ctx().size() - 1};
  for (std::size_t b = 0; b < c.base().size(); ++b) outs.push_back(l.slots.size() - c.base().size() + b);
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const auto& [n, s] = l.slots[outs[k]];
    os << "  {\n    static const unsigned char hdr[] = {" << shape_header_bytes(s) << "};\n"
       << "    arrad_write_dump(out, hdr, sizeof hdr, (const float*)" << n << ", " << s.size() << ");\n  }\n";
  }
  os << "  fclose(out);\n  return 0;\n}\n";
  return os.str();
}

std::string emit_training_program(const Chain& c, const GradEnv& g, std::size_t opt_passes) {
  if (c.base().size() < 3 || c.size() == 0) throw ChainError("training program needs target, image, weights and bindings");
  auto kinds = c.full_ctx().kinds();
  if (kinds[1].shape.size() != 784) throw ChainError("base slot 1 must be a 28x28 image");
  const Shape& out_shape = kinds.back().shape;
  if (!(out_shape == kinds[0].shape) || out_shape.size() != 10) throw ChainError("prediction must match the 10-class target");
  CStepOptions opt;
  opt.opt_passes = opt_passes;
  for (std::size_t b = 2; b < c.base().size(); ++b) opt.grad_slots.push_back(b);
  StepLayout l = step_layout(c, opt.grad_slots);
  const std::size_t nbase = c.base().size();
  const std::string& tgt = l.slot_names[0];
  const std::string& img = l.slot_names[1];
  const std::string& pred = l.slot_names.back();

  std::ostringstream os;
  os << kPrelude << kDumpIo << "\n" << emit_chain_step(c, g, opt) << "\n";
  // Per-image workspace: data slots, every binding slot and the adjoints.
  os << "typedef struct {\n";
  for (std::size_t k = 0; k < l.slots.size(); ++k) {
    if (k >= 2 && k < nbase) continue;
    os << "  float " << l.slots[k].first << c_dims(l.slots[k].second) << ";\n";
  }
  os << "} arrad_ws;\n\n";
  os << R"(static unsigned char* arrad_slurp(const char* path, size_t* len) {
  FILE* f = fopen(path, "rb");
  if (!f) return NULL;
  fseek(f, 0, SEEK_END);
  long n = ftell(f);
  fseek(f, 0, SEEK_SET);
  unsigned char* buf = malloc(n > 0 ? (size_t)n : 1);
  if (n > 0 && fread(buf, 1, (size_t)n, f) != (size_t)n) {
    fclose(f);
    free(buf);
    return NULL;
  }
  fclose(f);
  *len = (size_t)n;
  return buf;
}

static unsigned arrad_be32(const unsigned char* b) {
  return ((unsigned)b[0] << 24) | ((unsigned)b[1] << 16) | ((unsigned)b[2] << 8) | (unsigned)b[3];
}

static int arrad_load_idx(const char* ipath, const char* lpath, int count, float** px, unsigned char** lb) {
  size_t il, ll;
  unsigned char* ib = arrad_slurp(ipath, &il);
  unsigned char* lbuf = arrad_slurp(lpath, &ll);
  if (!ib || !lbuf || il < 16 || ll < 8) return 0;
  if (arrad_be32(ib) != 0x803 || arrad_be32(lbuf) != 0x801) return 0;
  if ((int)arrad_be32(ib + 4) < count || (int)arrad_be32(lbuf + 4) < count) return 0;
  if (arrad_be32(ib + 8) != 28 || arrad_be32(ib + 12) != 28) return 0;
  if (il < 16 + (size_t)count * 784 || ll < 8 + (size_t)count) return 0;
  *px = malloc(sizeof(float) * 784 * (size_t)(count > 0 ? count : 1));
  *lb = malloc((size_t)(count > 0 ? count : 1));
  for (size_t k = 0; k < (size_t)count * 784; k++) (*px)[k] = ib[16 + k] / 255.0f;
  for (int k = 0; k < count; k++) (*lb)[k] = lbuf[8 + k];
  free(ib);
  free(lbuf);
  return 1;
}

static int arrad_argmax(const float* r, int n) {
  int best = 0;
  for (int k = 1; k < n; k++)
    if (r[k] > r[best]) best = k;
  return best;
}

)";
  auto step_args = [&](bool with_grads) {
    std::vector<std::string> a;
    for (std::size_t k = 0; k < l.slots.size(); ++k) {
      if (!with_grads && k >= kinds.size()) continue;
      if (k >= 2 && k < nbase)
        a.push_back(l.slots[k].first);
      else
        a.push_back("&w->" + l.slots[k].first);
    }
    return join(a, ", ");
  };
  os << "int main(int argc, char** argv) {\n"
     << "  if (argc < 11) {\n"
     << "    fprintf(stderr, \"usage: %s TRAIN_IMG TRAIN_LBL TEST_IMG TEST_LBL WEIGHTS EPOCHS BATCH NTRAIN NTEST LR [GRAD_DUMP|-] "
        "[WEIGHTS_OUT|-]\\n\", argv[0]);\n"
     << "    return 2;\n  }\n"
     << "  int epochs = atoi(argv[6]), batch = atoi(argv[7]), ntrain = atoi(argv[8]), ntest = atoi(argv[9]);\n"
     << "  float lr = (float)atof(argv[10]);\n"
     << "  const char* gdump = argc > 11 && strcmp(argv[11], \"-\") ? argv[11] : NULL;\n"
     << "  const char* wout = argc > 12 && strcmp(argv[12], \"-\") ? argv[12] : NULL;\n"
     << "  if (batch <= 0 || ntrain % batch) return 2;\n"
     << "  float *train_px, *test_px;\n"
     << "  unsigned char *train_lb, *test_lb;\n"
     << "  if (!arrad_load_idx(argv[1], argv[2], ntrain, &train_px, &train_lb)) return 4;\n"
     << "  if (!arrad_load_idx(argv[3], argv[4], ntest, &test_px, &test_lb)) return 4;\n"
     << "  FILE* wf = fopen(argv[5], \"rb\");\n"
     << "  if (!wf) return 4;\n";
  for (std::size_t b = 2; b < nbase; ++b) {
    const auto& [n, s] = l.slots[b];
    os << "  float (*" << n << ")" << c_dims(s) << " = malloc(sizeof(*" << n << "));\n"
       << "  if (!arrad_read_dump(wf, (float*)" << n << ", " << s.size() << ")) return 4;\n";
  }
  os << "  fclose(wf);\n"
     << "  arrad_ws* ws = malloc(sizeof(arrad_ws) * (size_t)batch);\n";
  // Averaged gradients, kept in double for the first-batch dump.
  for (std::size_t b = 2; b < nbase; ++b)
    os << "  double* avg_" << l.slot_names[b] << " = malloc(sizeof(double) * " << kinds[b].shape.size() << ");\n";
  os << "  for (int ep = 1; ep <= epochs; ep++) {\n"
     << "    double loss_sum = 0.0;\n"
     << "    long correct = 0;\n"
     << "    for (int start = 0; start < ntrain; start += batch) {\n"
     << "#pragma omp parallel for reduction(+ : loss_sum, correct) schedule(dynamic, 1)\n"
     << "      for (int bi = 0; bi < batch; bi++) {\n"
     << "        arrad_ws* w = &ws[bi];\n"
     << "        int label = train_lb[start + bi];\n"
     << "        memset(w->" << tgt << ", 0, sizeof w->" << tgt << ");\n"
     << "        ((float*)w->" << tgt << ")[label] = 1.0f;\n"
     << "        memcpy(w->" << img << ", train_px + (size_t)(start + bi) * 784, sizeof w->" << img << ");\n"
     << "        arrad_step(" << step_args(true) << ");\n"
     << "        const float* r = (const float*)w->" << pred << ";\n"
     << "        const float* t = (const float*)w->" << tgt << ";\n"
     << "        double l = 0.0;\n"
     << "        for (int k = 0; k < 10; k++) l += 0.5 * ((double)r[k] - t[k]) * ((double)r[k] - t[k]);\n"
     << "        loss_sum += l;\n"
     << "        correct += arrad_argmax(r, 10) == label;\n"
     << "      }\n";
  // Reduction after the parallel region, in image order.
  for (std::size_t b = 2; b < nbase; ++b) {
    const std::string& n = l.slot_names[b];
    std::size_t sz = kinds[b].shape.size();
    os << "      for (size_t e = 0; e < " << sz << "; e++) {\n"
       << "        double acc = 0.0;\n"
       << "        for (int bi = 0; bi < batch; bi++) acc += ((const float*)ws[bi].dd" << n << ")[e];\n"
       << "        avg_" << n << "[e] = acc / batch;\n"
       << "        ((float*)" << n << ")[e] -= lr * (float)avg_" << n << "[e];\n"
       << "      }\n";
  }
  os << "      if (ep == 1 && start == 0 && gdump) {\n"
     << "        FILE* gf = fopen(gdump, \"wb\");\n"
     << "        if (!gf) return 5;\n";
  for (std::size_t b = 2; b < nbase; ++b) {
    os << "        {\n          static const unsigned char hdr[] = {" << shape_header_bytes(kinds[b].shape) << "};\n"
       << "          arrad_write_dump_d(gf, hdr, sizeof hdr, avg_" << l.slot_names[b] << ", " << kinds[b].shape.size()
       << ");\n        }\n";
  }
  os << "        fclose(gf);\n"
     << "      }\n"
     << "    }\n"
     << "    printf(\"epoch %d loss %.6f acc %.4f\\n\", ep, loss_sum / ntrain, (double)correct / ntrain);\n"
     << "    fflush(stdout);\n"
     << "  }\n"
     << "  long test_correct = 0;\n"
     << "#pragma omp parallel for reduction(+ : test_correct) schedule(dynamic, 4)\n"
     << "  for (int k = 0; k < ntest; k++) {\n"
     << "    arrad_ws* w = malloc(sizeof(arrad_ws));\n"
     << "    memcpy(w->" << img << ", test_px + (size_t)k * 784, sizeof w->" << img << ");\n"
     << "    memset(w->" << tgt << ", 0, sizeof w->" << tgt << ");\n"
     << "    arrad_forward(" << step_args(false) << ");\n"
     << "    test_correct += arrad_argmax((const float*)w->" << pred << ", 10) == test_lb[k];\n"
     << "    free(w);\n"
     << "  }\n"
     << "  printf(\"test acc %.4f\\n\", ntest ? (double)test_correct / ntest : 0.0);\n"
     << "  if (wout) {\n"
     << "    FILE* of = fopen(wout, \"wb\");\n"
     << "    if (!of) return 5;\n";
  for (std::size_t b = 2; b < nbase; ++b) {
    os << "    {\n      static const unsigned char hdr[] = {" << shape_header_bytes(kinds[b].shape) << "};\n"
       << "      arrad_write_dump(of, hdr, sizeof hdr, (const float*)" << l.slot_names[b] << ", " << kinds[b].shape.size()
       << ");\n    }\n";
  }
  os << "    fclose(of);\n"
     << "  }\n"
     << "  return 0;\n}\n";
  return os.str();
}

// ------------------------------------------------------------------ runner

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'')
      out += "'\\''";
    else
      out += ch;
  }
  return out + "'";
}

std::string resolve_cc(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("CC"); env && *env) return env;
  return "cc";
}

int run_command(const std::string& cmd, std::string* out) {
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw EnvironmentError("cannot run: " + cmd);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0)
    if (out) out->append(buf.data(), n);
  int status = pclose(p);
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

void check_cc(const std::string& cc) {
  if (run_command(cc + " --version >/dev/null 2>&1", nullptr) != 0)
    throw EnvironmentError("C compiler '" + cc + "' is not usable");
}

std::filesystem::path compile_c(const CToolchain& tc, const std::string& source, const std::filesystem::path& dir,
                                const std::string& stem, std::string* diagnostics) {
  check_cc(tc.cc);
  std::filesystem::create_directories(dir);
  auto src = dir / (stem + ".c");
  auto exe = dir / stem;
  {
    std::ofstream f(src);
    if (!f) throw IoError("cannot write " + src.string());
    f << source;
  }
  std::string cmd = tc.cc + " " + kCFlags + (tc.wall ? " -Wall" : "") + (tc.openmp ? " -fopenmp" : "") + " -o " +
                    shell_quote(exe.string()) + " " + shell_quote(src.string()) + " -lm 2>&1";
  std::string diag;
  int rc = run_command(cmd, &diag);
  if (diagnostics) *diagnostics = diag;
  if (rc != 0) throw Error("C compilation failed (" + src.string() + "):\n" + diag);
  return exe;
}

}  // namespace arrad
