#pragma once

#include <cstdio>
#include <string>

#include "pigram/grammar.hpp"

namespace pigram {

/// Graphviz rendering of the And-Or graph.
///
/// And-nodes are filled boxes, Or-nodes filled ellipses, terminals plain
/// text. Or-node edges carry the branch probability ("%.3f"); And-node edges
/// carry the bracketed expansion order. An Or branch with several symbols
/// gets an anonymous And box. Output depends only on the grammar.
inline std::string to_dot(const Pcfg& g) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  auto node_id = [](SymbolRef s) { return (s.is_terminal() ? "t" : "n") + std::to_string(s.id); };
  auto prob_label = [](double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", p);
    return std::string(buf);
  };

  std::string out = "digraph " + quote(g.name().empty() ? "pcfg" : g.name()) + " {\n";
  out += "  rankdir=TB;\n";
  for (std::uint32_t i = 0; i < g.num_nonterminals(); ++i) {
    const auto& n = g.nonterminals()[i];
    bool is_and = n.type == NodeType::and_node;
    out += "  n" + std::to_string(i) + " [label=" + quote(n.name) +
           (is_and ? ", shape=box, style=filled, fillcolor=pink" : ", shape=ellipse, style=filled, fillcolor=plum") +
           (i == g.start() ? ", peripheries=2" : "") + "];\n";
  }
  for (std::uint32_t i = 0; i < g.num_terminals(); ++i)
    out += "  t" + std::to_string(i) + " [label=" + quote(g.terminals()[i]) + ", shape=plaintext];\n";

  for (std::uint32_t r = 0; r < g.rules().size(); ++r) {
    const auto& rule = g.rules()[r];
    const std::string from = "n" + std::to_string(rule.lhs);
    auto and_edges = [&](const std::string& src) {
      for (std::size_t k = 0; k < rule.rhs.size(); ++k)
        out += "  " + src + " -> " + node_id(rule.rhs[k]) + " [label=\"[" + std::to_string(k + 1) + "]\"];\n";
    };
    if (g.nonterminals()[rule.lhs].type == NodeType::and_node) {
      and_edges(from);
    } else if (rule.rhs.size() == 1) {
      out += "  " + from + " -> " + node_id(rule.rhs[0]) + " [label=\"" + prob_label(rule.prob) + "\"];\n";
    } else {
      const std::string seq = "r" + std::to_string(r);
      out += "  " + seq + " [label=\"\", shape=box, style=filled, fillcolor=pink, width=0.2, height=0.2];\n";
      out += "  " + from + " -> " + seq + " [label=\"" + prob_label(rule.prob) + "\"];\n";
      and_edges(seq);
    }
  }
  out += "}\n";
  return out;
}

}  // namespace pigram
