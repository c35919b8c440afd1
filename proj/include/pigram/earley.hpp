#pragma once

// Probabilistic Earley recognizer over a general (non-CNF, epsilon-free)
// grammar. Each state carries a forward probability (alpha: total
// probability of derivations of the prefix that pass through the state) and
// an inner probability (gamma: probability of the state's own span).
// Left-recursive prediction and unit-production completion are collapsed
// with the closures of the left-corner and unit relations, so recursion and
// unit cycles are handled exactly.
//
// Charts are persistent: advancing by a terminal returns a new chart that
// shares all earlier columns, which lets a prefix-tree search keep one chart
// per open prefix cheaply.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "pigram/detail/closure.hpp"
#include "pigram/grammar.hpp"

namespace pigram {

struct EarleyItem {
  std::uint32_t rule = 0;  // == num rules for the virtual start rule
  std::uint32_t dot = 0;
  std::uint32_t origin = 0;
  double alpha = 0.0;
  double gamma = 0.0;
};

class EarleyColumn {
 public:
  const std::vector<EarleyItem>& items() const { return items_; }
  /// Total probability of all sentences that begin with the scanned prefix.
  double prefix_probability() const { return prefix_probability_; }
  /// Probability of the scanned prefix as a complete sentence.
  double sentence_probability() const { return sentence_probability_; }
  /// Terminals that may follow the scanned prefix, ascending.
  const std::vector<std::uint32_t>& next_terminals() const { return next_terminals_; }
  bool allows(std::uint32_t terminal) const {
    return std::binary_search(next_terminals_.begin(), next_terminals_.end(), terminal);
  }
  bool dead() const { return items_.empty(); }

 private:
  friend class EarleyParser;
  std::vector<EarleyItem> items_;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> waiting_;  // next nonterminal -> items
  std::vector<std::uint32_t> next_terminals_;
  double prefix_probability_ = 0.0;
  double sentence_probability_ = 0.0;
};

struct EarleyChart {
  std::vector<std::shared_ptr<const EarleyColumn>> columns;

  const EarleyColumn& last() const { return *columns.back(); }
  std::size_t length() const { return columns.size() - 1; }
};

class EarleyParser {
 public:
  explicit EarleyParser(Pcfg g) : g_(std::move(g)) {
    require_valid(g_);
    for (const auto& r : g_.rules())
      if (r.rhs.empty()) throw Error("Earley parser: epsilon rules are not supported");
    start_rule_ = static_cast<std::uint32_t>(g_.rules().size());
    const std::size_t n = g_.num_nonterminals();

    // unreachable nonterminals are never predicted and may be non-productive
    // (e.g. N -> N a with probability one), so they stay out of the closures
    const auto reachable = detail::reachable_nonterminals(g_);
    detail::DenseMatrix left_corner(n), unit(n);
    for (const auto& r : g_.rules()) {
      if (!reachable[r.lhs]) continue;
      if (!r.rhs[0].is_terminal()) left_corner(r.lhs, r.rhs[0].id) += r.prob;
      if (r.rhs.size() == 1 && !r.rhs[0].is_terminal()) unit(r.lhs, r.rhs[0].id) += r.prob;
    }
    auto lc = detail::closure(left_corner);
    auto uc = detail::closure(unit);
    left_closure_.resize(n);
    unit_into_.resize(n);
    for (std::uint32_t z = 0; z < n; ++z) {
      for (std::uint32_t y = 0; y < n; ++y) {
        if (lc(z, y) > 0.0) left_closure_[z].push_back({y, lc(z, y)});
        if (uc(z, y) > 0.0) unit_into_[y].push_back({z, uc(z, y)});
      }
    }
  }

  const Pcfg& grammar() const { return g_; }

  /// Chart before any token has been read.
  EarleyChart start() const {
    auto col = std::make_shared<EarleyColumn>();
    Builder b(*col);
    b.add(start_rule_, 0, 0, 1.0, 1.0);
    predict(*col, b, 0);
    finish(*col);
    return EarleyChart{{std::move(col)}};
  }

  /// Chart after additionally reading `terminal`.
  EarleyChart advance(const EarleyChart& chart, std::uint32_t terminal) const {
    const auto position = static_cast<std::uint32_t>(chart.columns.size());
    auto col = std::make_shared<EarleyColumn>();
    Builder b(*col);
    const EarleyColumn& prev = chart.last();

    for (const auto& item : prev.items_) {
      auto next = next_symbol(item);
      if (!next || !next->is_terminal() || next->id != terminal) continue;
      b.add(item.rule, item.dot + 1, item.origin, item.alpha, item.gamma);
    }
    for (const auto& item : col->items_) col->prefix_probability_ += item.alpha;

    // Completion, latest origins first: a completed state with origin k only
    // advances states whose own origin is smaller than k.
    std::vector<std::vector<std::uint32_t>> pending(position);
    for (std::uint32_t i = 0; i < col->items_.size(); ++i) enqueue_if_complete(*col, i, pending);
    for (std::uint32_t k = position; k-- > 0;) {
      for (std::size_t p = 0; p < pending[k].size(); ++p) {
        const EarleyItem done = col->items_[pending[k][p]];
        if (done.rule == start_rule_) continue;
        const auto lhs = g_.rules()[done.rule].lhs;
        const EarleyColumn& from = *chart.columns[k];
        for (const auto& [z, weight] : unit_into_[lhs]) {
          auto wit = from.waiting_.find(z);
          if (wit == from.waiting_.end()) continue;
          for (auto idx : wit->second) {
            const auto& w = from.items_[idx];
            if (is_unit_rule(w.rule)) continue;
            bool created = false;
            auto pos = b.add(w.rule, w.dot + 1, w.origin, w.alpha * weight * done.gamma,
                             w.gamma * weight * done.gamma, &created);
            if (created) enqueue_if_complete(*col, pos, pending);
          }
        }
      }
    }
    for (const auto& item : col->items_)
      if (item.rule == start_rule_ && item.dot == 1) col->sentence_probability_ = item.gamma;

    predict(*col, b, position);
    finish(*col);
    EarleyChart out = chart;
    out.columns.push_back(std::move(col));
    return out;
  }

  EarleyChart parse(std::span<const std::uint32_t> tokens) const {
    auto chart = start();
    for (auto t : tokens) {
      chart = advance(chart, t);
      if (chart.last().dead()) break;
    }
    return chart;
  }

  double sentence_probability(std::span<const std::uint32_t> tokens) const {
    auto chart = parse(tokens);
    return chart.length() == tokens.size() ? chart.last().sentence_probability() : 0.0;
  }

  double prefix_probability(std::span<const std::uint32_t> tokens) const {
    if (tokens.empty()) return 1.0;
    auto chart = parse(tokens);
    return chart.length() == tokens.size() ? chart.last().prefix_probability() : 0.0;
  }

 private:
  struct Builder {
    EarleyColumn& col;
    std::unordered_map<std::uint64_t, std::uint32_t> index;

    explicit Builder(EarleyColumn& c) : col(c) {}

    std::uint32_t add(std::uint32_t rule, std::uint32_t dot, std::uint32_t origin, double alpha, double gamma,
                      bool* created = nullptr) {
      const std::uint64_t key = (static_cast<std::uint64_t>(rule) << 40) |
                                (static_cast<std::uint64_t>(dot) << 24) | origin;
      auto [it, inserted] = index.emplace(key, static_cast<std::uint32_t>(col.items_.size()));
      if (inserted) {
        col.items_.push_back({rule, dot, origin, alpha, gamma});
      } else {
        col.items_[it->second].alpha += alpha;
        col.items_[it->second].gamma += gamma;
      }
      if (created) *created = inserted;
      return it->second;
    }
  };

  struct Weighted {
    std::uint32_t symbol;
    double weight;
  };

  std::optional<SymbolRef> next_symbol(const EarleyItem& item) const {
    if (item.rule == start_rule_) {
      if (item.dot == 0) return SymbolRef::n(g_.start());
      return std::nullopt;
    }
    const auto& rhs = g_.rules()[item.rule].rhs;
    if (item.dot < rhs.size()) return rhs[item.dot];
    return std::nullopt;
  }

  bool is_unit_rule(std::uint32_t rule) const {
    if (rule == start_rule_) return false;
    const auto& rhs = g_.rules()[rule].rhs;
    return rhs.size() == 1 && !rhs[0].is_terminal();
  }

  void enqueue_if_complete(const EarleyColumn& col, std::uint32_t idx,
                           std::vector<std::vector<std::uint32_t>>& pending) const {
    const auto& item = col.items_[idx];
    if (next_symbol(item) || is_unit_rule(item.rule)) return;
    pending[item.origin].push_back(idx);
  }

  // Items present on entry are scanned or completed (or the virtual start
  // state); the left-corner closure covers everything they transitively
  // predict, so predicted items are never used as prediction sources.
  void predict(EarleyColumn& col, Builder& b, std::uint32_t position) const {
    const std::size_t sources = col.items_.size();
    for (std::size_t i = 0; i < sources; ++i) {
      const EarleyItem src = col.items_[i];
      auto next = next_symbol(src);
      if (!next || next->is_terminal() || src.alpha <= 0.0) continue;
      for (const auto& [y, weight] : left_closure_[next->id]) {
        for (auto r : g_.rules_of(y)) {
          const double p = g_.rules()[r].prob;
          bool created = false;
          auto pos = b.add(r, 0, position, src.alpha * weight * p, 0.0, &created);
          if (created) col.items_[pos].gamma = p;
        }
      }
    }
  }

  void finish(EarleyColumn& col) const {
    std::vector<std::uint32_t> terms;
    for (std::uint32_t i = 0; i < col.items_.size(); ++i) {
      auto next = next_symbol(col.items_[i]);
      if (!next) continue;
      if (next->is_terminal()) {
        if (col.items_[i].alpha > 0.0) terms.push_back(next->id);
      } else {
        col.waiting_[next->id].push_back(i);
      }
    }
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    col.next_terminals_ = std::move(terms);
  }

  Pcfg g_;
  std::uint32_t start_rule_ = 0;
  std::vector<std::vector<Weighted>> left_closure_;  // Z -> (Y, R_L(Z,Y))
  std::vector<std::vector<Weighted>> unit_into_;     // Y -> (Z, R_U(Z,Y))
};

}  // namespace pigram
