#include "arrad/chain.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "arrad/errors.hpp"
#include "arrad/optimizer.hpp"

namespace arrad {

std::string mangle_name(const std::string& name) {
  std::string out;
  bool in_sub = false;
  for (std::size_t i = 0; i < name.size();) {
    auto c = static_cast<unsigned char>(name[i]);
    // U+2080..U+2089 are E2 82 80..89 in UTF-8.
    if (c == 0xE2 && i + 2 < name.size() && static_cast<unsigned char>(name[i + 1]) == 0x82) {
      auto d = static_cast<unsigned char>(name[i + 2]);
      if (d >= 0x80 && d <= 0x89) {
        if (!in_sub) out += '_';
        out += static_cast<char>('0' + (d - 0x80));
        in_sub = true;
        i += 3;
        continue;
      }
    }
    in_sub = false;
    out += name[i];
    ++i;
  }
  bool ok = !out.empty() && (std::isalpha(static_cast<unsigned char>(out[0])) || out[0] == '_');
  for (char ch : out) ok = ok && (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_');
  if (!ok) throw ChainError("name '" + name + "' has no C identifier transliteration");
  return out;
}

namespace {

std::size_t dbi(const Ctx& ctx, std::size_t slot) { return ctx.size() - 1 - slot; }

}  // namespace

Chain::Chain(ChainCtx base) : base_(std::move(base)) {
  for (const auto& [name, shape] : base_) {
    std::string m = mangle_name(name);
    for (const std::string& n : {m, "dd" + m}) {
      if (std::find(taken_.begin(), taken_.end(), n) != taken_.end()) throw ChainError("duplicate name '" + n + "'");
      taken_.push_back(n);
    }
    mangled_base_.push_back(m);
  }
}

Ctx Chain::base_ctx() const {
  Ctx c;
  for (const auto& b : base_) c = c.extend(Kind::ar(b.second));
  return c;
}

Ctx Chain::ctx_before(std::size_t k) const {
  if (k > bindings_.size()) throw ChainError("binding index out of range");
  Ctx c = base_ctx();
  for (std::size_t j = 0; j < k; ++j) {
    Kind kd = bindings_[j].body.kind();
    c = c.extend(kd).extend(kd);
  }
  return c;
}

bool Chain::is_placeholder_slot(std::size_t slot) const {
  return slot >= base_.size() && (slot - base_.size()) % 2 == 0;
}

void Chain::add(const std::string& name, const Expr& body) {
  Ctx c = ctx_before(size());
  if (!(body.ctx() == c)) throw ChainError("binding '" + name + "': body lives in the wrong context");
  if (body.is_ix()) throw ChainError("binding '" + name + "': body must be an array");
  for (std::size_t j = 0; j < size(); ++j)
    if (mentions(body, dbi(c, placeholder_slot(j))))
      throw ChainError("binding '" + name + "' mentions the adjoint placeholder of '" + bindings_[j].name + "'");
  std::string m = mangle_name(name);
  for (const std::string& n : {m, "dd" + m})
    if (std::find(taken_.begin(), taken_.end(), n) != taken_.end()) throw ChainError("duplicate name '" + n + "'");
  taken_.push_back(m);
  taken_.push_back("dd" + m);
  bindings_.push_back({name, body});
}

std::vector<std::string> Chain::names() const { return names_before(size()); }

std::vector<std::string> Chain::names_before(std::size_t k) const {
  std::vector<std::string> out = mangled_base_;
  for (std::size_t j = 0; j < k; ++j) {
    std::string m = mangle_name(bindings_[j].name);
    out.push_back("dd" + m);
    out.push_back(m);
  }
  return out;
}

std::size_t Chain::slot_of(const std::string& name) const {
  for (std::size_t k = 0; k < base_.size(); ++k)
    if (base_[k].first == name) return k;
  for (std::size_t k = 0; k < bindings_.size(); ++k)
    if (bindings_[k].name == name) return value_slot(k);
  throw ChainError("no slot named '" + name + "'");
}

Expr Chain::ref(const std::string& name, const Ctx& ctx) const {
  std::size_t slot = slot_of(name);
  if (slot >= ctx.size()) throw ChainError("'" + name + "' is not visible in this context");
  return var(ctx, dbi(ctx, slot));
}

std::vector<std::string> Chain::unused_bindings() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k + 1 < size(); ++k) {
    bool used = false;
    for (std::size_t j = k + 1; j < size() && !used; ++j) {
      const Expr& b = bindings_[j].body;
      used = mentions(b, dbi(b.ctx(), value_slot(k)));
    }
    if (!used) out.push_back(bindings_[k].name);
  }
  return out;
}

std::vector<std::string> chain_names(const Chain& c) { return c.names(); }

ValueEnv chain_eval_forward(const Chain& c, const ValueEnv& inputs, bool parallel) {
  if (!(inputs.ctx() == c.base_ctx())) throw KindMismatch("chain inputs do not match the base context");
  ValueEnv env = inputs;
  for (const auto& b : c.bindings()) {
    Tensor t = evaluate_fast(b.body, env, parallel);
    env.push(b.body.kind(), Tensor::konst(b.body.shape(), 0.0));
    env.push(b.body.kind(), std::move(t));
  }
  return env;
}

ChainGrad chain_grad(const Chain& c, const Expr& seed, std::size_t body_passes, std::size_t final_passes) {
  Ctx full = c.full_ctx();
  if (full.size() == 0) throw ChainError("chain_grad on an empty context");
  if (!(seed.ctx() == full)) throw KindMismatch("chain_grad: seed must live in the full chain context");
  if (!(seed.kind() == full.last())) throw KindMismatch("chain_grad: seed kind does not match the final slot");
  GradEnv d = GradEnv::zero(full, full);
  d.set_slot(full.size() - 1, seed);
  std::vector<std::size_t> writes(c.size(), 0);
  for (std::size_t k = c.size(); k-- > 0;) {
    std::size_t ph = c.placeholder_slot(k);
    d.set_slot(ph, *d.slot(c.value_slot(k)));
    ++writes[k];
    Expr body = lift_to(optimize(c.bindings()[k].body, body_passes), full);
    d = grad(body, var(full, dbi(full, ph)), std::move(d));
  }
  d = d.map([&](const Expr& e) { return optimize(e, final_passes); });
  return {std::move(d), std::move(writes)};
}

bool topologically_ordered(const Chain& c, const GradEnv& g) {
  const Ctx& full = g.delta();
  for (std::size_t k = 0; k < c.size(); ++k) {
    const Expr& e = *g.slot(c.value_slot(k));
    for (std::size_t j = 0; j <= k; ++j)
      if (mentions(e, dbi(full, c.placeholder_slot(j)))) return false;
  }
  return true;
}

std::vector<Tensor> chain_eval_grads(const Chain& c, const GradEnv& g, ValueEnv env, bool parallel) {
  if (!(env.ctx() == g.delta())) throw KindMismatch("chain_eval_grads: environment does not match the chain");
  std::vector<Tensor> out(env.size());
  for (std::size_t k = c.size(); k-- > 0;) {
    Tensor t = evaluate_fast(*g.slot(c.value_slot(k)), env, parallel);
    env.set_slot(c.placeholder_slot(k), t);
    out[c.placeholder_slot(k)] = t;
    out[c.value_slot(k)] = std::move(t);
  }
  for (std::size_t b = 0; b < c.base().size(); ++b) out[b] = evaluate_fast(*g.slot(b), env, parallel);
  return out;
}

std::string chain_listing(const Chain& c, const GradEnv& g, std::size_t opt_passes) {
  std::ostringstream os;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const auto& b = c.bindings()[k];
    os << mangle_name(b.name) << " = " << to_infix(optimize(b.body, opt_passes), c.names_before(k)) << ";\n";
  }
  auto names = c.names();
  for (std::size_t k = c.size(); k-- > 0;)
    os << "dd" << mangle_name(c.bindings()[k].name) << " = " << to_infix(*g.slot(c.value_slot(k)), names) << ";\n";
  for (std::size_t b = c.base().size(); b-- > 0;)
    os << "dd" << names[b] << " = " << to_infix(*g.slot(b), names) << ";\n";
  return os.str();
}

std::string chain_dump(const Chain& c) {
  std::ostringstream os;
  for (const auto& [name, shape] : c.base()) os << "input " << name << " " << shape_sexpr(shape) << "\n";
  for (const auto& b : c.bindings()) os << "bind " << b.name << " " << to_sexpr(b.body) << "\n";
  return os.str();
}

Chain parse_chain(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  ChainCtx base;
  std::vector<std::pair<std::string, std::string>> binds;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto semi = line.find(';'); semi != std::string::npos) line.erase(semi);
    std::istringstream ls(line);
    std::string tag, name;
    if (!(ls >> tag)) continue;
    if (!(ls >> name)) throw ParseError("line " + std::to_string(lineno) + ": missing name");
    std::string rest;
    std::getline(ls, rest);
    try {
      if (tag == "input") {
        if (!binds.empty()) throw ParseError("inputs must precede bindings");
        base.emplace_back(name, parse_ctx_sexpr("(ctx (ar " + rest + "))").last().shape);
      } else if (tag == "bind") {
        binds.emplace_back(name, rest);
      } else {
        throw ParseError("unknown directive '" + tag + "'");
      }
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  Chain c(std::move(base));
  for (const auto& [name, body] : binds) c.add(name, parse_sexpr(c.ctx_before(c.size()), body));
  return c;
}

}  // namespace arrad
