#pragma once

// Chart parsing of a single sentence: inside probability (sum over parse
// trees) and Viterbi parse (max over parse trees), both in log space.
//
// The chart works on the grammar as written. Rules longer than two symbols
// are handled through dotted-prefix items, and unit productions through a
// per-span closure: in sum mode (I - U)^-1 over the unit relation, in max
// mode a relaxation (rule probabilities are at most one, so cycles never
// improve a Viterbi score). On a CNF grammar this is plain CKY.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "pigram/cnf.hpp"
#include "pigram/detail/closure.hpp"
#include "pigram/grammar.hpp"

namespace pigram {

struct ParseNode {
  SymbolRef symbol;
  std::int32_t rule = -1;  // index into Pcfg::rules(); -1 for terminal leaves
  std::vector<std::uint32_t> children;
};

/// A derivation tree; nodes[0] is the root.
struct ParseTree {
  std::vector<ParseNode> nodes;
  double probability = 0.0;
  double log_probability = kNegInf;

  /// Leaves read left to right.
  Sentence frontier() const {
    Sentence out;
    if (nodes.empty()) return out;
    std::vector<std::uint32_t> stack{0};
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      const auto& node = nodes[i];
      if (node.symbol.is_terminal()) {
        out.push_back(node.symbol.id);
        continue;
      }
      for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) stack.push_back(*it);
    }
    return out;
  }

  /// Indices of the applied rules, one per nonterminal node.
  std::vector<std::uint32_t> applied_rules() const {
    std::vector<std::uint32_t> out;
    for (const auto& n : nodes)
      if (n.rule >= 0) out.push_back(static_cast<std::uint32_t>(n.rule));
    return out;
  }
};

/// Product of the applied rule probabilities, recomputed from `g`, in log space.
inline double tree_log_probability(const Pcfg& g, const ParseTree& tree) {
  double lp = 0.0;
  for (auto r : tree.applied_rules()) lp += std::log(g.rules().at(r).prob);
  return lp;
}

namespace detail {

class Chart {
 public:
  enum class Mode { sum, max };

  Chart(const Pcfg& g, std::span<const std::uint32_t> s, Mode mode)
      : g_(g), s_(s.begin(), s.end()), n_(s.size()), mode_(mode) {
    if (s.empty()) throw Error("sentence is empty");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= g.num_terminals()) throw Error(concat("unknown terminal id ", s[i], " at position ", i));
    if (g.start() >= g.num_nonterminals()) throw Error("grammar has no valid start symbol");
    for (const auto& r : g.rules())
      if (r.rhs.empty()) throw Error("chart parsing requires an epsilon-free grammar");

    nn_ = g.num_nonterminals();
    const auto reachable = reachable_nonterminals(g);
    for (std::uint32_t r = 0; r < g.rules().size(); ++r) {
      const auto& rule = g.rules()[r];
      log_prob_.push_back(std::log(rule.prob));
      prefix_offset_.push_back(items_);
      if (!reachable[rule.lhs]) continue;  // cannot contribute to the root
      if (rule.rhs.size() >= 2) {
        long_rules_.push_back(r);
        items_ += rule.rhs.size() - 1;
      } else if (!rule.rhs[0].is_terminal()) {
        unit_rules_.push_back(r);
      } else {
        lexical_rules_.push_back(r);
      }
    }
    stride_ = nn_ + items_;
    cells_.assign(n_ * (n_ + 1) / 2 * stride_, kNegInf);
    if (mode_ == Mode::max) back_.assign(cells_.size(), Back{});
    if (mode_ == Mode::sum && !unit_rules_.empty()) build_unit_closure();
    fill();
  }

  double root_log() const { return at(0, n_)[g_.start()]; }

  ParseTree build_tree() const {
    ParseTree tree;
    struct Task {
      std::size_t i, j;
      std::uint32_t node;
    };
    tree.nodes.push_back({SymbolRef::n(g_.start()), -1, {}});
    std::vector<Task> stack{{0, n_, 0}};
    while (!stack.empty()) {
      auto task = stack.back();
      stack.pop_back();
      const auto nt = tree.nodes[task.node].symbol.id;
      const Back& b = back_[index(task.i, task.j) + nt];
      const auto& rule = g_.rules()[b.rule];
      tree.nodes[task.node].rule = static_cast<std::int32_t>(b.rule);

      // Spans of the rule's children, recovered right to left.
      std::vector<std::pair<std::size_t, std::size_t>> spans(rule.rhs.size());
      if (rule.rhs.size() == 1) {
        spans[0] = {task.i, task.j};
      } else {
        std::size_t end = task.j;
        std::size_t split = b.split;
        for (std::size_t d = rule.rhs.size() - 1; d >= 1; --d) {
          spans[d] = {split, end};
          end = split;
          // the prefix item covering rhs[0..d) sits at offset d - 1
          if (d >= 2) split = back_[index(task.i, end) + nn_ + prefix_offset_[b.rule] + d - 1].split;
        }
        spans[0] = {task.i, end};
      }
      std::vector<Task> children;
      for (std::size_t k = 0; k < rule.rhs.size(); ++k) {
        auto idx = static_cast<std::uint32_t>(tree.nodes.size());
        tree.nodes[task.node].children.push_back(idx);
        tree.nodes.push_back({rule.rhs[k], -1, {}});
        if (!rule.rhs[k].is_terminal()) children.push_back({spans[k].first, spans[k].second, idx});
      }
      for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(*it);
    }
    return tree;
  }

 private:
  struct Back {
    std::uint32_t rule = 0;
    std::uint32_t split = 0;
  };

  std::size_t index(std::size_t i, std::size_t j) const {
    const std::size_t row = i * n_ - (i == 0 ? 0 : i * (i - 1) / 2);
    return (row + (j - i - 1)) * stride_;
  }
  double* at(std::size_t i, std::size_t j) { return &cells_[index(i, j)]; }
  const double* at(std::size_t i, std::size_t j) const { return &cells_[index(i, j)]; }

  // log-probability that symbol `sym` derives s[i..j)
  double symbol_score(SymbolRef sym, std::size_t i, std::size_t j) const {
    if (sym.is_terminal()) return (j == i + 1 && s_[i] == sym.id) ? 0.0 : kNegInf;
    return at(i, j)[sym.id];
  }

  // Combines `value` into slot `pos`; in max mode earlier candidates win ties.
  void offer(std::size_t pos, double value, Back b) {
    if (value == kNegInf) return;
    double& slot = cells_[pos];
    if (mode_ == Mode::sum) {
      slot = log_add(slot, value);
    } else if (slot == kNegInf || value > slot + 1e-12 * std::abs(slot)) {
      slot = value;
      back_[pos] = b;
    }
  }

  void build_unit_closure() {
    for (auto r : unit_rules_) {
      for (auto nt : {g_.rules()[r].lhs, g_.rules()[r].rhs[0].id}) {
        if (unit_member_.emplace(nt, unit_nts_.size()).second) unit_nts_.push_back(nt);
      }
    }
    DenseMatrix u(unit_nts_.size());
    for (auto r : unit_rules_)
      u(unit_member_[g_.rules()[r].lhs], unit_member_[g_.rules()[r].rhs[0].id]) += g_.rules()[r].prob;
    auto c = closure(u);
    unit_log_closure_.assign(c.a.size(), kNegInf);
    for (std::size_t k = 0; k < c.a.size(); ++k)
      if (c.a[k] > 0.0) unit_log_closure_[k] = std::log(c.a[k]);
  }

  void fill() {
    for (std::size_t len = 1; len <= n_; ++len) {
      for (std::size_t i = 0; i + len <= n_; ++i) {
        const std::size_t j = i + len;
        const std::size_t base = index(i, j);
        if (len == 1) {
          for (auto r : lexical_rules_) {
            if (g_.rules()[r].rhs[0].id == s_[i]) offer(base + g_.rules()[r].lhs, log_prob_[r], {r, 0});
          }
        }
        for (auto r : long_rules_) {
          const auto& rule = g_.rules()[r];
          const std::size_t len_r = rule.rhs.size();
          // items (r, d) for d = 2..len_r; d == len_r completes the rule
          for (std::size_t d = 2; d <= len_r && d <= len; ++d) {
            const std::size_t prev_item = nn_ + prefix_offset_[r] + (d - 1) - 1;
            const std::size_t target = d == len_r ? base + rule.lhs : base + nn_ + prefix_offset_[r] + d - 1;
            const double extra = d == len_r ? log_prob_[r] : 0.0;
            for (std::size_t k = i + d - 1; k < j; ++k) {
              const double left = cells_[index(i, k) + prev_item];
              if (left == kNegInf) continue;
              const double right = symbol_score(rule.rhs[d - 1], k, j);
              if (right == kNegInf) continue;
              offer(target, left + right + extra, {r, static_cast<std::uint32_t>(k)});
            }
          }
        }
        apply_units(base);
        for (auto r : long_rules_) {
          const double v = symbol_score(g_.rules()[r].rhs[0], i, j);
          if (v != kNegInf) cells_[base + nn_ + prefix_offset_[r]] = v;
        }
      }
    }
  }

  void apply_units(std::size_t base) {
    if (unit_rules_.empty()) return;
    if (mode_ == Mode::sum) {
      std::vector<double> direct(unit_nts_.size());
      for (std::size_t a = 0; a < unit_nts_.size(); ++a) direct[a] = cells_[base + unit_nts_[a]];
      const std::size_t m = unit_nts_.size();
      for (std::size_t a = 0; a < m; ++a) {
        double total = kNegInf;
        for (std::size_t b = 0; b < m; ++b) {
          const double c = unit_log_closure_[a * m + b];
          if (c != kNegInf && direct[b] != kNegInf) total = log_add(total, c + direct[b]);
        }
        cells_[base + unit_nts_[a]] = total;
      }
      return;
    }
    for (std::size_t pass = 0; pass <= nn_; ++pass) {
      bool changed = false;
      for (auto r : unit_rules_) {
        const auto& rule = g_.rules()[r];
        const double child = cells_[base + rule.rhs[0].id];
        if (child == kNegInf) continue;
        const double before = cells_[base + rule.lhs];
        offer(base + rule.lhs, child + log_prob_[r], {r, 0});
        if (cells_[base + rule.lhs] != before) changed = true;
      }
      if (!changed) break;
    }
  }

  const Pcfg& g_;
  std::vector<std::uint32_t> s_;
  std::size_t n_;
  Mode mode_;
  std::size_t nn_ = 0;
  std::size_t items_ = 0;
  std::size_t stride_ = 0;
  std::vector<double> log_prob_;
  std::vector<std::size_t> prefix_offset_;
  std::vector<std::uint32_t> long_rules_, unit_rules_, lexical_rules_;
  std::vector<double> cells_;
  std::vector<Back> back_;
  std::map<std::uint32_t, std::size_t> unit_member_;
  std::vector<std::uint32_t> unit_nts_;
  std::vector<double> unit_log_closure_;
};

}  // namespace detail

/// log P(s | g), summed over all parse trees.
inline double inside_log(const Pcfg& g, std::span<const std::uint32_t> s) {
  return detail::Chart(g, s, detail::Chart::Mode::sum).root_log();
}

/// P(s | g), summed over all parse trees; 0 when s is outside the language.
inline double inside(const Pcfg& g, std::span<const std::uint32_t> s) { return std::exp(inside_log(g, s)); }

struct ViterbiParse {
  ParseTree tree;
  double probability = 0.0;
};

/// Most probable parse tree of `s`. Ties prefer the smaller split point,
/// then the lower rule index. Throws NoParseError when `s` is outside the
/// language.
inline ViterbiParse viterbi(const Pcfg& g, std::span<const std::uint32_t> s) {
  detail::Chart chart(g, s, detail::Chart::Mode::max);
  const double lp = chart.root_log();
  if (lp == kNegInf) throw NoParseError("no parse: sentence is not in the language of the grammar");
  ViterbiParse out;
  out.tree = chart.build_tree();
  out.tree.log_probability = lp;
  out.tree.probability = std::exp(lp);
  out.probability = out.tree.probability;
  return out;
}

struct CorpusLikelihood {
  /// Sum of per-sentence log probabilities; -infinity if any sentence has
  /// probability zero.
  double total = 0.0;
  std::vector<double> per_sentence;
  /// Indices of sentences outside the language.
  std::vector<std::size_t> out_of_language;

  bool finite() const { return out_of_language.empty(); }
};

/// Corpus log-likelihood, evaluated on the CNF form of `g`.
inline CorpusLikelihood log_likelihood(const Pcfg& g, const std::vector<Sentence>& corpus) {
  if (corpus.empty()) throw Error("log_likelihood: corpus is empty");
  const Pcfg cnf = is_cnf(g) ? g : to_cnf(g);
  CorpusLikelihood out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double lp = inside_log(cnf, corpus[i]);
    out.per_sentence.push_back(lp);
    if (lp == kNegInf) out.out_of_language.push_back(i);
    out.total += lp;
  }
  if (!out.finite()) out.total = kNegInf;
  return out;
}

}  // namespace pigram
