#ifndef CSIVA_BIFIO_HPP
#define CSIVA_BIFIO_HPP

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "csiva/cpdgen.hpp"

namespace csiva {

// Discrete Bayesian-network interchange format, the subset emitted by the
// usual reference repositories: network / variable / probability blocks,
// `table` rows, `(label, ...)` conditional rows, `property` lines and
// `//` comments.

struct BifVariable {
  std::string name;
  std::vector<std::string> labels;
  std::vector<std::string> properties;  // opaque payloads, whitespace-collapsed
  int card() const { return static_cast<int>(labels.size()); }
};

struct BifDistribution {
  bool present = false;
  std::vector<int> parents;  // variable indices, in written order
  // combos x child-card, child category fastest; the combo index is mixed
  // radix over the written parent order, first parent most significant.
  std::vector<double> p;
  std::vector<uint8_t> filled;  // per-combo coverage while parsing
  std::vector<std::string> properties;
};

struct BifNetwork {
  std::string name;
  std::vector<BifVariable> vars;
  std::vector<BifDistribution> dists;  // aligned with vars
  std::vector<std::string> properties;

  int index_of(const std::string& var) const {
    for (size_t i = 0; i < vars.size(); ++i)
      if (vars[i].name == var) return static_cast<int>(i);
    return -1;
  }
};

struct BifParseResult {
  BifNetwork net;
  std::vector<std::string> warnings;
};

namespace bif_detail {

struct Token {
  enum Kind { word, punct, end };
  Kind kind = end;
  std::string text;
  int line = 0, col = 0;
};

inline bool is_punct(char c) {
  return c == '{' || c == '}' || c == '(' || c == ')' || c == '[' || c == ']' ||
         c == '|' || c == ',' || c == ';';
}

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    if (has_peek_) {
      has_peek_ = false;
      return peeked_;
    }
    skip_space();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= text_.size()) return t;
    char c = text_[pos_];
    if (is_punct(c)) {
      t.kind = Token::punct;
      t.text = c;
      advance();
      return t;
    }
    t.kind = Token::word;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           !is_punct(text_[pos_])) {
      t.text += text_[pos_];
      advance();
    }
    return t;
  }

  const Token& peek() {
    if (!has_peek_) {
      peeked_ = next();
      has_peek_ = true;
    }
    return peeked_;
  }

  // Everything up to the next ';' (property payloads), kept as an opaque
  // string with runs of whitespace collapsed so round trips are stable.
  std::string read_to_semicolon() {
    has_peek_ = false;
    std::string raw;
    while (pos_ < text_.size() && text_[pos_] != ';') {
      raw += text_[pos_];
      advance();
    }
    if (pos_ >= text_.size()) throw ParseError("unterminated property line", line_, col_);
    advance();
    std::string out;
    for (char c : raw) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!out.empty() && out.back() != ' ') out += ' ';
      } else {
        out += c;
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_space() {
    for (;;) {
      while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
        advance();
      if (pos_ + 1 < text_.size() && text_[pos_] == '/' && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        continue;
      }
      return;
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  bool has_peek_ = false;
  Token peeked_;
};

[[noreturn]] inline void fail(const Token& t, const std::string& msg) {
  throw ParseError(msg + (t.kind == Token::end ? " (at end of input)" : " near '" + t.text + "'"),
                   t.line, t.col);
}

inline Token expect_punct(Lexer& lex, char c) {
  Token t = lex.next();
  if (t.kind != Token::punct || t.text[0] != c)
    fail(t, std::string("expected '") + c + "'");
  return t;
}

inline Token expect_word(Lexer& lex, const std::string& what) {
  Token t = lex.next();
  if (t.kind != Token::word) fail(t, "expected " + what);
  return t;
}

inline double expect_number(Lexer& lex) {
  Token t = expect_word(lex, "a number");
  char* endp = nullptr;
  double v = std::strtod(t.text.c_str(), &endp);
  if (endp != t.text.c_str() + t.text.size()) fail(t, "expected a number");
  return v;
}

inline int expect_int(Lexer& lex) {
  Token t = expect_word(lex, "an integer");
  char* endp = nullptr;
  long v = std::strtol(t.text.c_str(), &endp, 10);
  if (endp != t.text.c_str() + t.text.size()) fail(t, "expected an integer");
  return static_cast<int>(v);
}

// Shortest decimal form that parses back to the same double.
inline std::string shortest_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace bif_detail

inline BifParseResult parse_bif(const std::string& text) {
  using namespace bif_detail;
  Lexer lex(text);
  BifParseResult out;
  BifNetwork& net = out.net;

  Token t = lex.next();
  if (t.kind != Token::word || t.text != "network") fail(t, "expected 'network'");
  net.name = expect_word(lex, "a network name").text;
  expect_punct(lex, '{');
  while (true) {
    Token inner = lex.next();
    if (inner.kind == Token::punct && inner.text == "}") break;
    if (inner.kind == Token::word && inner.text == "property") {
      net.properties.push_back(lex.read_to_semicolon());
      continue;
    }
    fail(inner, "unexpected content in network block");
  }

  for (;;) {
    Token top = lex.next();
    if (top.kind == Token::end) break;
    if (top.kind != Token::word) fail(top, "expected 'variable' or 'probability'");

    if (top.text == "variable") {
      Token name = expect_word(lex, "a variable name");
      if (net.index_of(name.text) >= 0) fail(name, "variable redeclared");
      BifVariable var;
      var.name = name.text;
      expect_punct(lex, '{');
      bool have_type = false;
      for (;;) {
        Token inner = lex.next();
        if (inner.kind == Token::punct && inner.text == "}") break;
        if (inner.kind == Token::word && inner.text == "property") {
          var.properties.push_back(lex.read_to_semicolon());
          continue;
        }
        if (inner.kind != Token::word || inner.text != "type")
          fail(inner, "expected 'type' or 'property'");
        Token kind = expect_word(lex, "'discrete'");
        if (kind.text != "discrete") fail(kind, "only discrete variables are supported");
        expect_punct(lex, '[');
        int declared = expect_int(lex);
        expect_punct(lex, ']');
        Token open = expect_punct(lex, '{');
        for (;;) {
          Token label = lex.next();
          if (label.kind != Token::word) fail(label, "expected a category label");
          var.labels.push_back(label.text);
          Token sep = lex.next();
          if (sep.kind == Token::punct && sep.text == ",") continue;
          if (sep.kind == Token::punct && sep.text == "}") break;
          fail(sep, "expected ',' or '}' in the label list");
        }
        expect_punct(lex, ';');
        if (declared != var.card())
          fail(open, "declared cardinality " + std::to_string(declared) + " but " +
                         std::to_string(var.card()) + " labels");
        have_type = true;
      }
      if (!have_type) fail(name, "variable has no type clause");
      net.vars.push_back(var);
      net.dists.emplace_back();
      continue;
    }

    if (top.text == "probability") {
      expect_punct(lex, '(');
      Token child_tok = expect_word(lex, "a variable name");
      int child = net.index_of(child_tok.text);
      if (child < 0) fail(child_tok, "undeclared variable");
      BifDistribution dist;
      dist.present = true;
      Token sep = lex.next();
      if (sep.kind == Token::punct && sep.text == "|") {
        for (;;) {
          Token par = expect_word(lex, "a parent name");
          int pi = net.index_of(par.text);
          if (pi < 0) fail(par, "undeclared parent");
          if (pi == child) fail(par, "a variable cannot be its own parent");
          for (int existing : dist.parents)
            if (existing == pi) fail(par, "duplicate parent");
          dist.parents.push_back(pi);
          Token nxt = lex.next();
          if (nxt.kind == Token::punct && nxt.text == ",") continue;
          if (nxt.kind == Token::punct && nxt.text == ")") break;
          fail(nxt, "expected ',' or ')' in the parent list");
        }
      } else if (!(sep.kind == Token::punct && sep.text == ")")) {
        fail(sep, "expected '|' or ')'");
      }
      if (net.dists[child].present) fail(child_tok, "duplicate probability block");

      int k = net.vars[child].card();
      size_t combos = 1;
      for (int pi : dist.parents) combos *= static_cast<size_t>(net.vars[pi].card());
      dist.p.assign(combos * k, 0.0);
      dist.filled.assign(combos, 0);

      expect_punct(lex, '{');
      for (;;) {
        Token row = lex.next();
        if (row.kind == Token::punct && row.text == "}") break;
        if (row.kind == Token::word && row.text == "property") {
          dist.properties.push_back(lex.read_to_semicolon());
          continue;
        }
        if (row.kind == Token::word && row.text == "table") {
          // Flat list: child category fastest, parent combos in order.
          for (size_t i = 0; i < combos * static_cast<size_t>(k); ++i) {
            if (i) expect_punct(lex, ',');
            dist.p[i] = expect_number(lex);
          }
          expect_punct(lex, ';');
          for (size_t c = 0; c < combos; ++c) dist.filled[c] = 1;
          continue;
        }
        if (row.kind == Token::punct && row.text == "(") {
          size_t combo = 0;
          for (size_t slot = 0; slot < dist.parents.size(); ++slot) {
            Token label = expect_word(lex, "a category label");
            const BifVariable& pv = net.vars[dist.parents[slot]];
            int li = -1;
            for (int j = 0; j < pv.card(); ++j)
              if (pv.labels[j] == label.text) li = j;
            if (li < 0) fail(label, "label is not a category of " + pv.name);
            combo = combo * static_cast<size_t>(pv.card()) + static_cast<size_t>(li);
            Token nxt = lex.next();
            bool last = slot + 1 == dist.parents.size();
            if (!last && nxt.kind == Token::punct && nxt.text == ",") continue;
            if (last && nxt.kind == Token::punct && nxt.text == ")") break;
            fail(nxt, "label count does not match the parent list");
          }
          if (dist.parents.empty()) fail(row, "labeled row in a parentless block");
          if (dist.filled[combo])
            out.warnings.push_back("duplicate row for " + net.vars[child].name +
                                   " at line " + std::to_string(row.line) +
                                   "; the later row wins");
          for (int j = 0; j < k; ++j) {
            if (j) expect_punct(lex, ',');
            dist.p[combo * k + j] = expect_number(lex);
          }
          expect_punct(lex, ';');
          dist.filled[combo] = 1;
          continue;
        }
        fail(row, "expected 'table', '(', or '}'");
      }
      net.dists[child] = std::move(dist);
      continue;
    }

    fail(top, "expected 'variable' or 'probability'");
  }
  return out;
}

// Structural and numeric checks beyond syntax. Throws ValidationError with
// the offending variable named; cycles are spelled out node by node.
inline void validate_bif(const BifNetwork& net) {
  if (net.vars.empty()) throw ValidationError("network has no variables");
  for (size_t i = 0; i < net.vars.size(); ++i) {
    const BifDistribution& d = net.dists[i];
    if (!d.present)
      throw ValidationError("no probability block for " + net.vars[i].name);
    int k = net.vars[i].card();
    size_t combos = d.filled.size();
    for (size_t c = 0; c < combos; ++c) {
      if (!d.filled[c])
        throw ValidationError("missing parent combination " + std::to_string(c) + " for " +
                              net.vars[i].name);
      double sum = 0;
      for (int j = 0; j < k; ++j) sum += d.p[c * k + j];
      if (std::abs(sum - 1.0) > 1e-6)
        throw ValidationError("row " + std::to_string(c) + " of " + net.vars[i].name +
                              " sums to " + format_double(sum));
      for (int j = 0; j < k; ++j)
        if (d.p[c * k + j] < 0)
          throw ValidationError("negative probability in " + net.vars[i].name);
    }
  }
  // Cycle check over parent -> child edges, with the cycle spelled out.
  int n = static_cast<int>(net.vars.size());
  std::vector<int> color(static_cast<size_t>(n), 0);  // 0 new, 1 open, 2 done
  std::vector<int> stack, pos_in_stack(static_cast<size_t>(n), -1);
  auto dfs = [&](auto&& self, int v) -> void {
    color[v] = 1;
    pos_in_stack[v] = static_cast<int>(stack.size());
    stack.push_back(v);
    for (int p : net.dists[v].parents) {
      if (color[p] == 1) {
        std::string msg = "cycle detected: ";
        for (size_t j = static_cast<size_t>(pos_in_stack[p]); j < stack.size(); ++j)
          msg += net.vars[stack[j]].name + " -> ";
        msg += net.vars[p].name;
        throw ValidationError(msg);
      }
      if (color[p] == 0) self(self, p);
    }
    stack.pop_back();
    pos_in_stack[v] = -1;
    color[v] = 2;
  };
  for (int v = 0; v < n; ++v)
    if (color[v] == 0) dfs(dfs, v);
}

// Canonical text form; parse(serialize(net)) reproduces net exactly, and
// serialize is a fixpoint over parse round trips.
inline std::string serialize_bif(const BifNetwork& net) {
  using bif_detail::shortest_double;
  auto emit_properties = [](std::string& dst, const std::vector<std::string>& props) {
    for (const std::string& p : props) dst += "  property " + p + ";\n";
  };
  std::string s = "network " + (net.name.empty() ? std::string("unknown") : net.name) + " {\n";
  emit_properties(s, net.properties);
  s += "}\n";
  for (const BifVariable& v : net.vars) {
    s += "variable " + v.name + " {\n  type discrete [ " + std::to_string(v.card()) +
         " ] { ";
    for (int j = 0; j < v.card(); ++j) s += (j ? ", " : "") + v.labels[j];
    s += " };\n";
    emit_properties(s, v.properties);
    s += "}\n";
  }
  for (size_t i = 0; i < net.vars.size(); ++i) {
    const BifDistribution& d = net.dists[i];
    if (!d.present) continue;
    int k = net.vars[i].card();
    s += "probability ( " + net.vars[i].name;
    if (!d.parents.empty()) {
      s += " | ";
      for (size_t j = 0; j < d.parents.size(); ++j)
        s += (j ? ", " : "") + net.vars[d.parents[j]].name;
    }
    s += " ) {\n";
    emit_properties(s, d.properties);
    if (d.parents.empty()) {
      s += "  table ";
      for (int j = 0; j < k; ++j) s += (j ? ", " : "") + shortest_double(d.p[j]);
      s += ";\n";
    } else {
      size_t combos = d.filled.size();
      std::vector<size_t> radix(d.parents.size());
      for (size_t c = 0; c < combos; ++c) {
        size_t rem = c;
        for (size_t slot = d.parents.size(); slot-- > 0;) {
          size_t card = static_cast<size_t>(net.vars[d.parents[slot]].card());
          radix[slot] = rem % card;
          rem /= card;
        }
        s += "  (";
        for (size_t slot = 0; slot < d.parents.size(); ++slot)
          s += (slot ? ", " : "") + net.vars[d.parents[slot]].labels[radix[slot]];
        s += ") ";
        for (int j = 0; j < k; ++j)
          s += (j ? ", " : "") + shortest_double(d.p[c * static_cast<size_t>(k) + j]);
        s += ";\n";
      }
    }
    s += "}\n";
  }
  return s;
}

// Table CBN over the declared variables, in declaration order. Parent lists
// are reindexed to ascending node order and the CPT rows remapped to match;
// rows are renormalized exactly.
inline CbnSpec bif_to_cbn(const BifNetwork& net) {
  validate_bif(net);
  int n = static_cast<int>(net.vars.size());
  AdjacencyMatrix graph(n);
  for (int child = 0; child < n; ++child)
    for (int par : net.dists[child].parents)
      graph.bits[static_cast<size_t>(child) * n + par] = 1;
  CbnSpec cbn;
  cbn.graph = graph;
  cbn.family = Family::dirichlet;
  cbn.topo = topo_order(graph);
  cbn.card.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) cbn.card[i] = net.vars[i].card();
  cbn.parents.resize(static_cast<size_t>(n));
  cbn.table.resize(static_cast<size_t>(n));
  for (int child = 0; child < n; ++child) {
    cbn.parents[child] = graph.parents(child);  // ascending
    const BifDistribution& d = net.dists[child];
    const std::vector<int>& asc = cbn.parents[child];
    int k = net.vars[child].card();
    size_t combos = d.filled.size();
    cbn.table[child].p.resize(combos * static_cast<size_t>(k));
    // Position of each ascending parent in the written parent order.
    std::vector<size_t> slot_of(asc.size());
    for (size_t a = 0; a < asc.size(); ++a)
      for (size_t w = 0; w < d.parents.size(); ++w)
        if (d.parents[w] == asc[a]) slot_of[a] = w;
    std::vector<size_t> cat(asc.size());
    for (size_t r = 0; r < combos; ++r) {
      size_t rem = r;
      for (size_t a = asc.size(); a-- > 0;) {
        cat[a] = rem % static_cast<size_t>(cbn.card[asc[a]]);
        rem /= static_cast<size_t>(cbn.card[asc[a]]);
      }
      size_t src = 0;
      for (size_t w = 0; w < d.parents.size(); ++w) {
        size_t a = 0;
        while (slot_of[a] != w) ++a;
        src = src * static_cast<size_t>(net.vars[d.parents[w]].card()) + cat[a];
      }
      double sum = 0;
      for (int j = 0; j < k; ++j) sum += d.p[src * static_cast<size_t>(k) + j];
      for (int j = 0; j < k; ++j)
        cbn.table[child].p[r * static_cast<size_t>(k) + j] =
            d.p[src * static_cast<size_t>(k) + j] / sum;
    }
  }
  return cbn;
}

inline BifParseResult parse_bif_file(const std::filesystem::path& path) {
  return parse_bif(read_file(path));
}

}  // namespace csiva

#endif  // CSIVA_BIFIO_HPP
