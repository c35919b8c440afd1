#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pigram/detail/closure.hpp"
#include "pigram/grammar.hpp"

namespace pigram {

/// True when every rule is A -> B C over nonterminals or A -> a.
inline bool is_cnf(const Pcfg& g) {
  for (const auto& r : g.rules()) {
    if (r.rhs.size() == 1 && r.rhs[0].is_terminal()) continue;
    if (r.rhs.size() == 2 && !r.rhs[0].is_terminal() && !r.rhs[1].is_terminal()) continue;
    return false;
  }
  return true;
}

namespace detail {

inline NodeType infer_node_type(const std::vector<Rule>& rules_of_lhs) {
  if (rules_of_lhs.size() == 1 && std::abs(rules_of_lhs[0].prob - 1.0) <= kProbSumTolerance)
    return NodeType::and_node;
  return NodeType::or_node;
}

// Drops nonterminals that are unreachable or non-productive and renumbers the
// rest in their original order. Terminal ids are left untouched.
inline Pcfg prune_useless(const Pcfg& g) {
  auto productive = productive_nonterminals(g);
  std::vector<Rule> kept;
  for (const auto& r : g.rules()) {
    bool ok = productive[r.lhs];
    for (auto s : r.rhs)
      if (!s.is_terminal() && !productive[s.id]) ok = false;
    if (ok) kept.push_back(r);
  }
  Pcfg tmp = g.with_rules(kept);
  auto reachable = reachable_nonterminals(tmp);

  std::vector<std::uint32_t> remap(g.num_nonterminals(), UINT32_MAX);
  std::vector<Nonterminal> nts;
  for (std::uint32_t i = 0; i < g.num_nonterminals(); ++i) {
    if (reachable[i] && productive[i]) {
      remap[i] = static_cast<std::uint32_t>(nts.size());
      nts.push_back(g.nonterminals()[i]);
    }
  }
  if (remap[g.start()] == UINT32_MAX) throw Error("grammar generates the empty language");
  std::vector<Rule> rules;
  for (auto r : kept) {
    if (remap[r.lhs] == UINT32_MAX) continue;
    r.lhs = remap[r.lhs];
    for (auto& s : r.rhs)
      if (!s.is_terminal()) s.id = remap[s.id];
    rules.push_back(std::move(r));
  }
  return Pcfg(g.name(), g.terminals(), std::move(nts), std::move(rules), remap[g.start()], g.metadata());
}

}  // namespace detail

/// Converts a valid, epsilon-free grammar to Chomsky normal form preserving
/// the probability of every sentence.
///
/// Terminals inside longer rules get one shared preterminal each, long rules
/// are binarized left-branching with shared prefixes, and unit productions
/// are folded away through the closure (I - U)^-1 of the unit relation, which
/// also accounts for unit cycles. Generated nonterminals are named X<n>
/// in creation order. Terminal ids are preserved so sentences encoded for
/// `g` are valid for the result.
inline Pcfg to_cnf(const Pcfg& g) {
  for (const auto& r : g.rules())
    if (r.rhs.empty()) throw Error("to_cnf: epsilon rules are not supported");
  require_valid(g);

  std::vector<Nonterminal> nts = g.nonterminals();
  std::set<std::string> names;
  for (const auto& n : nts) names.insert(n.name);
  std::size_t counter = 0;
  auto fresh = [&]() {
    std::string name;
    do {
      name = "X" + std::to_string(++counter);
    } while (names.count(name));
    names.insert(name);
    nts.push_back({name, NodeType::and_node});
    return static_cast<std::uint32_t>(nts.size() - 1);
  };

  std::vector<Rule> rules;
  std::map<std::uint32_t, std::uint32_t> preterminal;  // terminal -> nonterminal
  std::map<std::vector<SymbolRef>, std::uint32_t> prefix_symbol;

  for (const auto& src : g.rules()) {
    Rule rule = src;
    if (rule.rhs.size() >= 2) {
      for (auto& s : rule.rhs) {
        if (!s.is_terminal()) continue;
        auto it = preterminal.find(s.id);
        if (it == preterminal.end()) {
          auto nt = fresh();
          rules.push_back({nt, {s}, 1.0});
          it = preterminal.emplace(s.id, nt).first;
        }
        s = SymbolRef::n(it->second);
      }
    }
    while (rule.rhs.size() > 2) {
      std::vector<SymbolRef> head(rule.rhs.begin(), rule.rhs.begin() + 2);
      auto it = prefix_symbol.find(head);
      if (it == prefix_symbol.end()) {
        auto nt = fresh();
        rules.push_back({nt, head, 1.0});
        it = prefix_symbol.emplace(head, nt).first;
      }
      std::vector<SymbolRef> rest{SymbolRef::n(it->second)};
      rest.insert(rest.end(), rule.rhs.begin() + 2, rule.rhs.end());
      // Longer prefixes are keyed on the already-reduced symbol sequence.
      rule.rhs = std::move(rest);
    }
    rules.push_back(std::move(rule));
  }

  // Unit-production elimination.
  std::vector<std::uint32_t> unit_members;
  std::map<std::uint32_t, std::size_t> member_index;
  auto member = [&](std::uint32_t nt) {
    auto [it, inserted] = member_index.emplace(nt, unit_members.size());
    if (inserted) unit_members.push_back(nt);
    return it->second;
  };
  bool has_units = false;
  for (const auto& r : rules) {
    if (r.rhs.size() == 1 && !r.rhs[0].is_terminal()) {
      member(r.lhs);
      member(r.rhs[0].id);
      has_units = true;
    }
  }
  if (has_units) {
    detail::DenseMatrix unit(unit_members.size());
    for (const auto& r : rules)
      if (r.rhs.size() == 1 && !r.rhs[0].is_terminal())
        unit(member_index[r.lhs], member_index[r.rhs[0].id]) += r.prob;
    auto closure = detail::closure(unit);

    std::vector<std::vector<std::size_t>> proper_rules(nts.size());
    for (std::size_t i = 0; i < rules.size(); ++i) {
      const auto& r = rules[i];
      if (!(r.rhs.size() == 1 && !r.rhs[0].is_terminal())) proper_rules[r.lhs].push_back(i);
    }
    std::vector<Rule> folded;
    std::vector<bool> emitted(nts.size(), false);
    for (const auto& r : rules) {
      if (emitted[r.lhs]) continue;
      emitted[r.lhs] = true;
      auto mit = member_index.find(r.lhs);
      if (mit == member_index.end()) {
        for (auto idx : proper_rules[r.lhs]) folded.push_back(rules[idx]);
        continue;
      }
      std::map<std::vector<SymbolRef>, std::size_t> slot;
      std::vector<Rule> merged;
      for (std::size_t b = 0; b < unit_members.size(); ++b) {
        double weight = closure(mit->second, b);
        if (weight <= 0.0) continue;
        for (auto idx : proper_rules[unit_members[b]]) {
          const auto& pr = rules[idx];
          auto [sit, inserted] = slot.emplace(pr.rhs, merged.size());
          if (inserted) merged.push_back({r.lhs, pr.rhs, 0.0});
          merged[sit->second].prob += weight * pr.prob;
        }
      }
      for (auto& m : merged) folded.push_back(std::move(m));
    }
    rules = std::move(folded);
  }

  std::vector<std::vector<Rule>> by_lhs(nts.size());
  for (const auto& r : rules) by_lhs[r.lhs].push_back(r);
  for (std::size_t i = 0; i < nts.size(); ++i)
    if (!by_lhs[i].empty()) nts[i].type = detail::infer_node_type(by_lhs[i]);

  Pcfg out(g.name(), g.terminals(), std::move(nts), std::move(rules), g.start(), g.metadata());
  return detail::prune_useless(out);
}

}  // namespace pigram
