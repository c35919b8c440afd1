#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pigram/common.hpp"

namespace pigram {

enum class SymbolKind : std::uint8_t { terminal, nonterminal };

/// And-nodes decompose into all children in order; Or-nodes pick one branch.
enum class NodeType : std::uint8_t { and_node, or_node };

struct SymbolRef {
  SymbolKind kind = SymbolKind::terminal;
  std::uint32_t id = 0;

  static constexpr SymbolRef t(std::uint32_t id) { return {SymbolKind::terminal, id}; }
  static constexpr SymbolRef n(std::uint32_t id) { return {SymbolKind::nonterminal, id}; }
  constexpr bool is_terminal() const { return kind == SymbolKind::terminal; }

  auto operator<=>(const SymbolRef&) const = default;
};

struct Nonterminal {
  std::string name;
  NodeType type = NodeType::or_node;
};

struct Rule {
  std::uint32_t lhs = 0;
  std::vector<SymbolRef> rhs;
  double prob = 1.0;
};

/// A sentence of terminal ids of one particular grammar.
using Sentence = std::vector<std::uint32_t>;

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Name of the reserved silence terminal that delimits corpus sentences.
inline constexpr std::string_view kSil = "SIL";

/// Probabilistic context-free grammar with And/Or typed nonterminals.
///
/// Immutable after construction; all analyses are free functions taking a
/// const reference. The constructor does not validate: call validate() to
/// obtain the list of violated invariants.
class Pcfg {
 public:
  Pcfg() = default;

  Pcfg(std::string name, std::vector<std::string> terminals,
       std::vector<Nonterminal> nonterminals, std::vector<Rule> rules,
       std::uint32_t start, Metadata metadata = {})
      : name_(std::move(name)),
        terminals_(std::move(terminals)),
        nonterminals_(std::move(nonterminals)),
        rules_(std::move(rules)),
        start_(start),
        metadata_(std::move(metadata)) {
    rules_by_lhs_.assign(nonterminals_.size(), {});
    for (std::uint32_t r = 0; r < rules_.size(); ++r) {
      if (rules_[r].lhs < nonterminals_.size()) rules_by_lhs_[rules_[r].lhs].push_back(r);
    }
    for (std::uint32_t i = 0; i < terminals_.size(); ++i) terminal_index_.emplace(terminals_[i], i);
    for (std::uint32_t i = 0; i < nonterminals_.size(); ++i)
      nonterminal_index_.emplace(nonterminals_[i].name, i);
  }

  const std::string& name() const { return name_; }
  const std::vector<std::string>& terminals() const { return terminals_; }
  const std::vector<Nonterminal>& nonterminals() const { return nonterminals_; }
  const std::vector<Rule>& rules() const { return rules_; }
  std::uint32_t start() const { return start_; }
  const Metadata& metadata() const { return metadata_; }

  std::size_t num_terminals() const { return terminals_.size(); }
  std::size_t num_nonterminals() const { return nonterminals_.size(); }

  /// Indices into rules() of the productions of nonterminal `nt`.
  std::span<const std::uint32_t> rules_of(std::uint32_t nt) const {
    if (nt >= rules_by_lhs_.size()) return {};
    return rules_by_lhs_[nt];
  }

  std::optional<std::uint32_t> terminal_id(std::string_view name) const {
    auto it = terminal_index_.find(std::string(name));
    if (it == terminal_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> nonterminal_id(std::string_view name) const {
    auto it = nonterminal_index_.find(std::string(name));
    if (it == nonterminal_index_.end()) return std::nullopt;
    return it->second;
  }

  std::string symbol_name(SymbolRef s) const {
    if (s.is_terminal()) return s.id < terminals_.size() ? terminals_[s.id] : "?t" + std::to_string(s.id);
    return s.id < nonterminals_.size() ? nonterminals_[s.id].name : "?n" + std::to_string(s.id);
  }

  /// Maps token names to terminal ids; throws on an unknown name.
  Sentence encode(std::span<const std::string> tokens) const {
    Sentence out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto id = terminal_id(tokens[i]);
      if (!id) throw Error(detail::concat("unknown terminal '", tokens[i], "' at position ", i));
      out.push_back(*id);
    }
    return out;
  }

  std::vector<std::string> decode(const Sentence& s) const {
    std::vector<std::string> out;
    out.reserve(s.size());
    for (auto id : s) out.push_back(symbol_name(SymbolRef::t(id)));
    return out;
  }

  /// Copy of this grammar with a replacement rule list (same symbols).
  Pcfg with_rules(std::vector<Rule> rules) const {
    return Pcfg(name_, terminals_, nonterminals_, std::move(rules), start_, metadata_);
  }

  Pcfg with_metadata(Metadata metadata) const {
    return Pcfg(name_, terminals_, nonterminals_, rules_, start_, std::move(metadata));
  }

 private:
  std::string name_;
  std::vector<std::string> terminals_;
  std::vector<Nonterminal> nonterminals_;
  std::vector<Rule> rules_;
  std::uint32_t start_ = 0;
  Metadata metadata_;
  std::vector<std::vector<std::uint32_t>> rules_by_lhs_;
  std::unordered_map<std::string, std::uint32_t> terminal_index_;
  std::unordered_map<std::string, std::uint32_t> nonterminal_index_;
};

/// Tolerance on Or-branch sums and And-rule probabilities.
inline constexpr double kProbSumTolerance = 1e-9;

namespace detail {

// Nonterminals that derive at least one terminal string.
inline std::vector<bool> productive_nonterminals(const Pcfg& g) {
  std::vector<bool> productive(g.num_nonterminals(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& rule : g.rules()) {
      if (rule.lhs >= productive.size() || productive[rule.lhs] || rule.rhs.empty()) continue;
      bool ok = true;
      for (auto s : rule.rhs) {
        if (s.is_terminal()) {
          if (s.id >= g.num_terminals()) ok = false;
        } else if (s.id >= productive.size() || !productive[s.id]) {
          ok = false;
        }
        if (!ok) break;
      }
      if (ok) {
        productive[rule.lhs] = true;
        changed = true;
      }
    }
  }
  return productive;
}

inline std::vector<bool> reachable_nonterminals(const Pcfg& g) {
  std::vector<bool> seen(g.num_nonterminals(), false);
  if (g.start() >= g.num_nonterminals()) return seen;
  std::vector<std::uint32_t> stack{g.start()};
  seen[g.start()] = true;
  while (!stack.empty()) {
    auto nt = stack.back();
    stack.pop_back();
    for (auto r : g.rules_of(nt)) {
      for (auto s : g.rules()[r].rhs) {
        if (!s.is_terminal() && s.id < seen.size() && !seen[s.id]) {
          seen[s.id] = true;
          stack.push_back(s.id);
        }
      }
    }
  }
  return seen;
}

}  // namespace detail

/// Lists every violated grammar invariant; an empty result means valid.
inline std::vector<std::string> validate(const Pcfg& g) {
  using detail::concat;
  std::vector<std::string> out;
  if (g.num_nonterminals() == 0) {
    out.push_back("grammar has no nonterminals");
    return out;
  }
  if (g.start() >= g.num_nonterminals()) {
    out.push_back(concat("start symbol id ", g.start(), " out of range"));
    return out;
  }
  {
    std::map<std::string, int> seen;
    for (const auto& t : g.terminals())
      if (++seen[t] == 2) out.push_back(concat("duplicate terminal name '", t, "'"));
    seen.clear();
    for (const auto& n : g.nonterminals())
      if (++seen[n.name] == 2) out.push_back(concat("duplicate nonterminal name '", n.name, "'"));
  }

  for (std::size_t r = 0; r < g.rules().size(); ++r) {
    const auto& rule = g.rules()[r];
    if (rule.lhs >= g.num_nonterminals()) {
      out.push_back(concat("rule ", r, ": lhs id ", rule.lhs, " out of range"));
      continue;
    }
    const auto& lhs = g.nonterminals()[rule.lhs].name;
    if (rule.rhs.empty()) out.push_back(concat("rule ", r, " (", lhs, "): empty right-hand side"));
    for (auto s : rule.rhs) {
      std::size_t limit = s.is_terminal() ? g.num_terminals() : g.num_nonterminals();
      if (s.id >= limit)
        out.push_back(concat("rule ", r, " (", lhs, "): ", s.is_terminal() ? "terminal" : "nonterminal",
                             " id ", s.id, " out of range"));
    }
    if (!(rule.prob > 0.0 && rule.prob <= 1.0 + kProbSumTolerance))
      out.push_back(concat("rule ", r, " (", lhs, "): probability ", rule.prob, " outside (0,1]"));
  }

  for (std::uint32_t nt = 0; nt < g.num_nonterminals(); ++nt) {
    const auto& node = g.nonterminals()[nt];
    auto rules = g.rules_of(nt);
    if (rules.empty()) continue;  // reported as non-productive when reachable
    if (node.type == NodeType::and_node) {
      if (rules.size() != 1) {
        out.push_back(concat("and-node ", node.name, " has ", rules.size(), " rules"));
      } else if (std::abs(g.rules()[rules[0]].prob - 1.0) > kProbSumTolerance) {
        out.push_back(concat("and-node ", node.name, " rule prob ", g.rules()[rules[0]].prob, " != 1"));
      }
    } else {
      double sum = 0.0;
      for (auto r : rules) sum += g.rules()[r].prob;
      if (std::abs(sum - 1.0) > kProbSumTolerance)
        out.push_back(concat("or-node ", node.name, ": branch probs sum ", sum));
    }
  }

  auto reachable = detail::reachable_nonterminals(g);
  auto productive = detail::productive_nonterminals(g);
  // one violation for the whole set: a single rule-less nonterminal makes
  // every ancestor non-productive too
  std::string dead;
  for (std::uint32_t nt = 0; nt < g.num_nonterminals(); ++nt) {
    if (reachable[nt] && !productive[nt]) dead += (dead.empty() ? "" : ", ") + g.nonterminals()[nt].name;
  }
  if (!dead.empty()) out.push_back(concat("non-productive nonterminals: ", dead));
  return out;
}

inline void require_valid(const Pcfg& g) {
  auto problems = validate(g);
  if (problems.empty()) return;
  std::string msg = "invalid grammar: " + problems.front();
  if (problems.size() > 1) msg += detail::concat(" (and ", problems.size() - 1, " more)");
  throw Error(msg);
}

/// Builds a grammar from compact rule text, e.g.
///
///     S -> SIL Body SIL
///     Body -> a b [0.7] | c [0.3]
///
/// Lines (or `;`-separated clauses) hold one left-hand side each; the first
/// one is the start symbol. Every left-hand side is a nonterminal and all
/// other names are terminals. Omitted probabilities split the mass left by
/// the explicit ones uniformly. A nonterminal with a single rule of probability
/// one becomes an And-node, anything else an Or-node.
inline Pcfg parse_rules(std::string_view text, std::string name = "g") {
  struct Alt {
    std::vector<std::string> rhs;
    std::optional<double> prob;
  };
  std::vector<std::pair<std::string, Alt>> alts;
  std::vector<std::string> lhs_order;

  std::string normalized(text);
  std::replace(normalized.begin(), normalized.end(), ';', '\n');
  std::istringstream in(normalized);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = strip_comment(line);
    auto tokens = split_ws(body);
    if (tokens.empty()) continue;
    if (tokens.size() < 3 || tokens[1] != "->")
      throw Error(detail::concat("rule text line ", line_no, ": expected 'LHS -> ...'"));
    std::string lhs(tokens[0]);
    if (std::find(lhs_order.begin(), lhs_order.end(), lhs) == lhs_order.end()) lhs_order.push_back(lhs);
    Alt cur;
    auto flush = [&] {
      if (cur.rhs.empty()) throw Error(detail::concat("rule text line ", line_no, ": empty alternative"));
      alts.emplace_back(lhs, std::move(cur));
      cur = Alt{};
    };
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      auto tok = tokens[i];
      if (tok == "|") {
        flush();
      } else if (tok.size() >= 2 && tok.front() == '[' && tok.back() == ']') {
        double p = 0.0;
        if (!parse_double(tok.substr(1, tok.size() - 2), p))
          throw Error(detail::concat("rule text line ", line_no, ": bad probability ", tok));
        cur.prob = p;
      } else {
        cur.rhs.emplace_back(tok);
      }
    }
    flush();
  }
  if (lhs_order.empty()) throw Error("rule text defines no rules");

  std::map<std::string, std::uint32_t> nt_index;
  for (std::uint32_t i = 0; i < lhs_order.size(); ++i) nt_index[lhs_order[i]] = i;
  std::vector<std::string> terminals;
  std::map<std::string, std::uint32_t> t_index;
  std::vector<std::size_t> count(lhs_order.size(), 0), omitted(lhs_order.size(), 0);
  std::vector<double> explicit_mass(lhs_order.size(), 0.0);
  for (const auto& [lhs, alt] : alts) {
    const auto i = nt_index[lhs];
    ++count[i];
    if (alt.prob) explicit_mass[i] += *alt.prob;
    else ++omitted[i];
  }

  std::vector<Rule> rules;
  for (const auto& [lhs, alt] : alts) {
    Rule rule;
    rule.lhs = nt_index[lhs];
    rule.prob = alt.prob.value_or((1.0 - explicit_mass[rule.lhs]) / static_cast<double>(omitted[rule.lhs]));
    for (const auto& sym : alt.rhs) {
      if (auto it = nt_index.find(sym); it != nt_index.end()) {
        rule.rhs.push_back(SymbolRef::n(it->second));
      } else {
        auto [tit, inserted] = t_index.emplace(sym, static_cast<std::uint32_t>(terminals.size()));
        if (inserted) terminals.push_back(sym);
        rule.rhs.push_back(SymbolRef::t(tit->second));
      }
    }
    rules.push_back(std::move(rule));
  }

  std::vector<Nonterminal> nts;
  for (std::uint32_t i = 0; i < lhs_order.size(); ++i) {
    NodeType type = NodeType::or_node;
    if (count[i] == 1) {
      for (const auto& r : rules)
        if (r.lhs == i && std::abs(r.prob - 1.0) <= kProbSumTolerance) type = NodeType::and_node;
    }
    nts.push_back({lhs_order[i], type});
  }
  return Pcfg(std::move(name), std::move(terminals), std::move(nts), std::move(rules), 0);
}

}  // namespace pigram
