#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pigram/grammar.hpp"

namespace pigram {

namespace detail {

/// Uniform double in [0, 1) from a 64-bit engine, identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Draws one sentence top-down from the start symbol. Or-nodes pick a branch
/// with its probability; And-nodes expand all children in order. Throws when
/// a nonterminal would be expanded deeper than `max_depth` (the root is at
/// depth 0).
inline Sentence sample(const Pcfg& g, std::uint64_t seed, std::size_t max_depth = 64) {
  std::mt19937_64 rng(seed);
  Sentence out;
  struct Item {
    SymbolRef symbol;
    std::size_t depth;
  };
  std::vector<Item> stack{{SymbolRef::n(g.start()), 0}};
  while (!stack.empty()) {
    auto item = stack.back();
    stack.pop_back();
    if (item.symbol.is_terminal()) {
      out.push_back(item.symbol.id);
      continue;
    }
    if (item.depth > max_depth)
      throw Error(detail::concat("sample: derivation depth exceeds max_depth ", max_depth));
    auto rules = g.rules_of(item.symbol.id);
    if (rules.empty()) throw Error("sample: nonterminal " + g.symbol_name(item.symbol) + " has no rules");
    std::uint32_t chosen = rules.back();
    if (rules.size() > 1) {
      double u = detail::unit_uniform(rng);
      double acc = 0.0;
      for (auto r : rules) {
        acc += g.rules()[r].prob;
        if (u < acc) {
          chosen = r;
          break;
        }
      }
    }
    const auto& rhs = g.rules()[chosen].rhs;
    for (auto it = rhs.rbegin(); it != rhs.rend(); ++it) stack.push_back({*it, item.depth + 1});
  }
  return out;
}

}  // namespace pigram
