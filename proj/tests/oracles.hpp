#pragma once

// Brute-force reference computations for tests. Everything here enumerates
// explicitly (parse trees, frame labelings, sentences) and shares no code
// with the library beyond the grammar data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pigram/pigram.hpp"

namespace oracle {

using pigram::Nonterminal;
using pigram::NodeType;
using pigram::Pcfg;
using pigram::Rule;
using pigram::Sentence;
using pigram::SymbolRef;

/// Probabilities of every parse tree of `s` under `g`. Requires a grammar
/// without unit cycles; throws if more than `limit` trees exist.
class TreeEnumerator {
 public:
  TreeEnumerator(const Pcfg& g, const Sentence& s, std::size_t limit = 2'000'000) : g_(g), s_(s), limit_(limit) {}

  std::vector<double> all() { return trees(SymbolRef::n(g_.start()), 0, s_.size(), 0); }

 private:
  std::vector<double> trees(SymbolRef sym, std::size_t i, std::size_t j, std::size_t depth) {
    if (sym.is_terminal()) return (j == i + 1 && s_[i] == sym.id) ? std::vector<double>{1.0} : std::vector<double>{};
    if (depth > 64) throw std::runtime_error("tree enumeration: unit cycle or runaway recursion");
    std::vector<double> out;
    for (auto r : g_.rules_of(sym.id)) {
      const auto& rule = g_.rules()[r];
      for (double p : spread(rule.rhs, 0, i, j, depth)) out.push_back(rule.prob * p);
      if (out.size() > limit_) throw std::runtime_error("tree enumeration: too many trees");
    }
    return out;
  }

  // products over every way of splitting [i, j) among rhs[k..]
  std::vector<double> spread(const std::vector<SymbolRef>& rhs, std::size_t k, std::size_t i, std::size_t j,
                             std::size_t depth) {
    const std::size_t left = rhs.size() - k;
    if (left == 1) return trees(rhs[k], i, j, depth + 1);
    std::vector<double> out;
    for (std::size_t m = i + 1; m + (left - 1) <= j; ++m) {
      auto head = trees(rhs[k], i, m, depth + 1);
      if (head.empty()) continue;
      auto tail = spread(rhs, k + 1, m, j, depth);
      for (double a : head)
        for (double b : tail) out.push_back(a * b);
      if (out.size() > limit_) throw std::runtime_error("tree enumeration: too many trees");
    }
    return out;
  }

  const Pcfg& g_;
  const Sentence& s_;
  std::size_t limit_;
};

inline double tree_sum(const Pcfg& g, const Sentence& s) {
  double total = 0.0;
  for (double p : TreeEnumerator(g, s).all()) total += p;
  return total;
}

inline double tree_max(const Pcfg& g, const Sentence& s) {
  double best = 0.0;
  for (double p : TreeEnumerator(g, s).all()) best = std::max(best, p);
  return best;
}

/// Every sentence of a grammar with a finite language, with its probability,
/// by exhaustive top-down expansion of leftmost derivations.
inline std::map<Sentence, double> finite_language(const Pcfg& g, std::size_t max_steps = 200000) {
  std::map<Sentence, double> out;
  struct Form {
    std::vector<SymbolRef> symbols;
    double prob;
  };
  std::vector<Form> stack{{{SymbolRef::n(g.start())}, 1.0}};
  std::size_t steps = 0;
  while (!stack.empty()) {
    if (++steps > max_steps) throw std::runtime_error("finite_language: language too large or infinite");
    auto form = std::move(stack.back());
    stack.pop_back();
    auto it = std::find_if(form.symbols.begin(), form.symbols.end(), [](SymbolRef s) { return !s.is_terminal(); });
    if (it == form.symbols.end()) {
      Sentence s;
      for (auto sym : form.symbols) s.push_back(sym.id);
      out[s] += form.prob;
      continue;
    }
    const auto pos = static_cast<std::size_t>(it - form.symbols.begin());
    for (auto r : g.rules_of(it->id)) {
      const auto& rule = g.rules()[r];
      Form next;
      next.symbols.assign(form.symbols.begin(), form.symbols.begin() + static_cast<std::ptrdiff_t>(pos));
      next.symbols.insert(next.symbols.end(), rule.rhs.begin(), rule.rhs.end());
      next.symbols.insert(next.symbols.end(), form.symbols.begin() + static_cast<std::ptrdiff_t>(pos) + 1,
                          form.symbols.end());
      next.prob = form.prob * rule.prob;
      stack.push_back(std::move(next));
    }
  }
  return out;
}

inline std::vector<std::uint32_t> collapse(const std::vector<std::uint32_t>& frames) {
  std::vector<std::uint32_t> out;
  for (auto v : frames)
    if (out.empty() || out.back() != v) out.push_back(v);
  return out;
}

/// f(l, t) and g(l) by enumerating all K^t labelings of the first t frames.
struct LabelingTables {
  std::size_t frames = 0;
  /// f[l][t], t = 0..T (t = 0 only for the empty sentence)
  std::map<std::vector<std::uint32_t>, std::vector<double>> f;
  std::map<std::vector<std::uint32_t>, double> g;
};

inline LabelingTables enumerate_labelings(const pigram::ProbMatrix& m) {
  LabelingTables out;
  const std::size_t T = m.rows(), K = m.cols();
  out.frames = T;
  auto row_for = [&](const std::vector<std::uint32_t>& l) -> std::vector<double>& {
    auto& row = out.f[l];
    if (row.empty()) row.assign(T + 1, 0.0);
    return row;
  };
  row_for({})[0] = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    std::vector<std::uint32_t> labels(t, 0);
    while (true) {
      double p = 1.0;
      for (std::size_t i = 0; i < t; ++i) p *= m(i, labels[i]);
      const auto l = collapse(labels);
      row_for(l)[t] += p;
      if (t == T)
        for (std::size_t len = 1; len <= l.size(); ++len) out.g[std::vector<std::uint32_t>(l.begin(), l.begin() + len)] += p;
      std::size_t pos = 0;
      while (pos < t && ++labels[pos] == K) labels[pos++] = 0;
      if (pos == t) break;
    }
  }
  return out;
}

/// The SIL-wrapped sentence of class ids, encoded for `g` (class k is the
/// terminal named names[k]); empty when a class has no terminal.
inline std::optional<Sentence> encode_classes(const Pcfg& g, const std::vector<std::uint32_t>& l,
                                              const std::vector<std::string>& names) {
  Sentence s;
  auto sil = g.terminal_id(pigram::kSil);
  if (sil) s.push_back(*sil);
  for (auto k : l) {
    auto t = g.terminal_id(names[k]);
    if (!t) return std::nullopt;
    s.push_back(*t);
  }
  if (sil) s.push_back(*sil);
  return s;
}

struct BestSentence {
  std::vector<std::uint32_t> sentence;
  double score = -std::numeric_limits<double>::infinity();
  bool found = false;
};

/// argmax over grammatical l of log f(l,T) + w log P(l), ties to the
/// lexicographically smaller l. P(l) by tree enumeration.
inline BestSentence best_sentence(const Pcfg& g, const pigram::ProbMatrix& m, const LabelingTables& tables,
                                  double w) {
  BestSentence best;
  for (const auto& [l, row] : tables.f) {
    if (l.empty() || row[tables.frames] <= 0.0) continue;
    auto s = encode_classes(g, l, m.class_names());
    if (!s) continue;
    const double p = tree_sum(g, *s);
    if (p <= 0.0) continue;
    const double score = std::log(row[tables.frames]) + w * std::log(p);
    const double tol = 1e-12 * std::max(1.0, std::abs(score));
    if (!best.found || score > best.score + tol || (score >= best.score - tol && l < best.sentence)) {
      best = {l, score, true};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Random grammars.

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += x = u(rng);
  for (auto& x : v) x /= s;
  return v;
}

inline Pcfg assemble(std::vector<std::string> terminals, std::size_t num_nts,
                     const std::vector<std::pair<std::uint32_t, std::vector<SymbolRef>>>& shapes, std::mt19937_64& rng,
                     const std::string& name) {
  std::vector<Rule> rules;
  std::vector<Nonterminal> nts;
  for (std::uint32_t a = 0; a < num_nts; ++a) {
    std::vector<std::vector<SymbolRef>> mine;
    for (const auto& [lhs, rhs] : shapes)
      if (lhs == a) mine.push_back(rhs);
    auto probs = random_simplex(rng, mine.size());
    for (std::size_t k = 0; k < mine.size(); ++k) rules.push_back({a, mine[k], mine.size() == 1 ? 1.0 : probs[k]});
    nts.push_back({"N" + std::to_string(a), mine.size() == 1 ? NodeType::and_node : NodeType::or_node});
  }
  return Pcfg(name, std::move(terminals), std::move(nts), std::move(rules), 0);
}

/// Random valid CNF grammar over `num_terminals` terminals named a, b, ...
inline Pcfg random_cnf_grammar(std::mt19937_64& rng, std::size_t num_terminals, std::size_t num_nts,
                               std::size_t max_rules_per_nt = 3) {
  std::vector<std::string> terms;
  for (std::size_t t = 0; t < num_terminals; ++t) terms.push_back(std::string(1, static_cast<char>('a' + t)));
  std::uniform_int_distribution<std::uint32_t> pick_t(0, static_cast<std::uint32_t>(num_terminals - 1));
  std::uniform_int_distribution<std::uint32_t> pick_n(0, static_cast<std::uint32_t>(num_nts - 1));
  std::uniform_int_distribution<std::size_t> count(1, max_rules_per_nt);
  while (true) {
    std::vector<std::pair<std::uint32_t, std::vector<SymbolRef>>> shapes;
    for (std::uint32_t a = 0; a < num_nts; ++a) {
      std::set<std::vector<SymbolRef>> seen;
      const std::size_t n = count(rng);
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<SymbolRef> rhs;
        if (rng() % 2)
          rhs = {SymbolRef::t(pick_t(rng))};
        else
          rhs = {SymbolRef::n(pick_n(rng)), SymbolRef::n(pick_n(rng))};
        if (seen.insert(rhs).second) shapes.emplace_back(a, rhs);
      }
    }
    Pcfg g = assemble(terms, num_nts, shapes, rng, "random-cnf");
    if (pigram::validate(g).empty() && pigram::is_cnf(g)) return g;
  }
}

/// Random valid epsilon-free grammar with at most `max_rules` rules over the
/// given terminals. Unit rules only point to higher-numbered nonterminals,
/// so there are no unit cycles; recursion through longer rules is allowed.
inline Pcfg random_grammar(std::mt19937_64& rng, const std::vector<std::string>& terminals, std::size_t max_rules,
                           std::size_t max_rhs = 3) {
  while (true) {
    const std::size_t num_nts = 1 + rng() % 3;
    std::vector<std::pair<std::uint32_t, std::vector<SymbolRef>>> shapes;
    std::set<std::pair<std::uint32_t, std::vector<SymbolRef>>> seen;
    const std::size_t n_rules = num_nts + rng() % (max_rules - num_nts + 1);
    for (std::size_t k = 0; k < n_rules; ++k) {
      const auto lhs = static_cast<std::uint32_t>(k < num_nts ? k : rng() % num_nts);
      const std::size_t len = 1 + rng() % max_rhs;
      std::vector<SymbolRef> rhs;
      for (std::size_t i = 0; i < len; ++i) {
        if (rng() % 3 == 0) {
          const auto b = static_cast<std::uint32_t>(rng() % num_nts);
          if (len == 1 && b <= lhs) {
            rhs.push_back(SymbolRef::t(static_cast<std::uint32_t>(rng() % terminals.size())));
          } else {
            rhs.push_back(SymbolRef::n(b));
          }
        } else {
          rhs.push_back(SymbolRef::t(static_cast<std::uint32_t>(rng() % terminals.size())));
        }
      }
      if (seen.emplace(lhs, rhs).second) shapes.emplace_back(lhs, rhs);
    }
    Pcfg g = assemble(terminals, num_nts, shapes, rng, "random");
    if (!pigram::validate(g).empty()) continue;
    // reject grammars whose sentences are almost all very long
    bool has_short = false;
    for (int s = 0; s < 20 && !has_short; ++s) {
      try {
        has_short = pigram::sample(g, rng(), 32).size() <= 6;
      } catch (const pigram::Error&) {
      }
    }
    if (has_short) return g;
  }
}

/// Wraps `body` (its own start symbol) as S -> SIL body SIL.
inline Pcfg with_sil(const Pcfg& body) {
  auto terminals = body.terminals();
  terminals.push_back(std::string(pigram::kSil));
  const auto sil = static_cast<std::uint32_t>(terminals.size() - 1);
  std::vector<Nonterminal> nts{{"S", NodeType::and_node}};
  for (const auto& n : body.nonterminals()) nts.push_back(n);
  std::vector<Rule> rules{{0, {SymbolRef::t(sil), SymbolRef::n(body.start() + 1), SymbolRef::t(sil)}, 1.0}};
  for (auto r : body.rules()) {
    r.lhs += 1;
    for (auto& s : r.rhs)
      if (!s.is_terminal()) s.id += 1;
    rules.push_back(std::move(r));
  }
  return Pcfg(body.name() + "-sil", std::move(terminals), std::move(nts), std::move(rules), 0);
}

inline pigram::ProbMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::vector<std::vector<double>> data(rows);
  for (auto& r : data) r = random_simplex(rng, cols);
  return pigram::ProbMatrix::from_rows(data);
}

/// Encodes whitespace-separated terminal names.
inline Sentence words(const Pcfg& g, std::string_view text) {
  std::vector<std::string> toks;
  for (auto t : pigram::split_ws(text)) toks.emplace_back(t);
  return g.encode(toks);
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({1e-300, std::abs(a), std::abs(b)});
}

}  // namespace oracle
