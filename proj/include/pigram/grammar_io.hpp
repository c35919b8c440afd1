#pragma once

// Line-oriented grammar text format:
//
//   pcfg <name>
//   #@ <key>=<value>                 metadata (a comment to other readers)
//   T <id> <name>                    terminal
//   N <id> <name> <and|or>           nonterminal
//   R <lhs-id> <prob> <rhs>...       rule; rhs symbols are t<id> or n<id>
//   S <id>                           start nonterminal
//
// Any other text after '#' is a comment. serialize() writes the canonical
// form (symbols by id, rules in order, shortest round-trip probabilities),
// which parse_grammar() reads back to an identical grammar.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "pigram/grammar.hpp"

namespace pigram {

inline std::string serialize(const Pcfg& g) {
  std::string out;
  out += "pcfg " + (g.name().empty() ? std::string("unnamed") : g.name()) + "\n";
  for (const auto& [key, value] : g.metadata()) out += "#@ " + key + "=" + value + "\n";
  for (std::size_t i = 0; i < g.num_terminals(); ++i)
    out += "T " + std::to_string(i) + " " + g.terminals()[i] + "\n";
  for (std::size_t i = 0; i < g.num_nonterminals(); ++i) {
    const auto& n = g.nonterminals()[i];
    out += "N " + std::to_string(i) + " " + n.name + (n.type == NodeType::and_node ? " and\n" : " or\n");
  }
  for (const auto& rule : g.rules()) {
    out += "R " + std::to_string(rule.lhs) + " " + format_double(rule.prob);
    for (auto s : rule.rhs) out += (s.is_terminal() ? " t" : " n") + std::to_string(s.id);
    out += "\n";
  }
  out += "S " + std::to_string(g.start()) + "\n";
  return out;
}

inline Pcfg parse_grammar(std::string_view text) {
  using detail::concat;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::string name;
  Metadata metadata;
  std::map<std::uint32_t, std::string> terms;
  std::map<std::uint32_t, Nonterminal> nts;
  std::vector<Rule> rules;
  std::optional<std::uint32_t> start;

  auto fail = [&](const std::string& what) -> Error {
    return Error(concat("grammar line ", line_no, ": ", what));
  };
  auto parse_id = [&](std::string_view tok) {
    std::uint32_t v = 0;
    if (!parse_int(tok, v)) throw fail(concat("bad id '", tok, "'"));
    return v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (view.rfind("#@", 0) == 0) {
      auto kv = view.substr(2);
      while (!kv.empty() && kv.front() == ' ') kv.remove_prefix(1);
      while (!kv.empty() && (kv.back() == '\r' || kv.back() == ' ')) kv.remove_suffix(1);
      auto eq = kv.find('=');
      if (eq == std::string_view::npos) throw fail("metadata line without '='");
      metadata.emplace_back(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
      continue;
    }
    auto tok = split_ws(strip_comment(view));
    if (tok.empty()) continue;
    if (!have_header) {
      if (tok[0] != "pcfg" || tok.size() != 2) throw fail("expected header 'pcfg <name>'");
      name = std::string(tok[1]);
      have_header = true;
      continue;
    }
    if (tok[0] == "T") {
      if (tok.size() != 3) throw fail("expected 'T <id> <name>'");
      auto id = parse_id(tok[1]);
      if (!terms.emplace(id, std::string(tok[2])).second) throw fail(concat("duplicate terminal id ", id));
    } else if (tok[0] == "N") {
      if (tok.size() != 4) throw fail("expected 'N <id> <name> <and|or>'");
      auto id = parse_id(tok[1]);
      NodeType type;
      if (tok[3] == "and") {
        type = NodeType::and_node;
      } else if (tok[3] == "or") {
        type = NodeType::or_node;
      } else {
        throw fail(concat("node type must be 'and' or 'or', got '", tok[3], "'"));
      }
      if (!nts.emplace(id, Nonterminal{std::string(tok[2]), type}).second)
        throw fail(concat("duplicate nonterminal id ", id));
    } else if (tok[0] == "R") {
      if (tok.size() < 4) throw fail("expected 'R <lhs> <prob> <rhs>...'");
      Rule rule;
      rule.lhs = parse_id(tok[1]);
      if (!parse_double(tok[2], rule.prob)) throw fail(concat("bad probability '", tok[2], "'"));
      for (std::size_t i = 3; i < tok.size(); ++i) {
        auto s = tok[i];
        if (s.size() < 2 || (s[0] != 't' && s[0] != 'n')) throw fail(concat("bad rhs symbol '", s, "'"));
        auto id = parse_id(s.substr(1));
        rule.rhs.push_back(s[0] == 't' ? SymbolRef::t(id) : SymbolRef::n(id));
      }
      rules.push_back(std::move(rule));
    } else if (tok[0] == "S") {
      if (tok.size() != 2) throw fail("expected 'S <id>'");
      if (start) throw fail("duplicate start line");
      start = parse_id(tok[1]);
    } else {
      throw fail(concat("unknown line type '", tok[0], "'"));
    }
  }
  if (!have_header) throw Error("grammar text is empty");
  if (!start) throw Error("grammar has no start line");

  std::vector<std::string> terminals;
  for (const auto& [id, n] : terms) {
    if (id != terminals.size()) throw Error(concat("terminal ids are not dense (missing ", terminals.size(), ")"));
    terminals.push_back(n);
  }
  std::vector<Nonterminal> nonterminals;
  for (const auto& [id, n] : nts) {
    if (id != nonterminals.size())
      throw Error(concat("nonterminal ids are not dense (missing ", nonterminals.size(), ")"));
    nonterminals.push_back(n);
  }
  for (const auto& r : rules) {
    if (r.lhs >= nonterminals.size()) throw Error(concat("rule lhs ", r.lhs, " is not a declared nonterminal"));
    for (auto s : r.rhs) {
      if (s.id >= (s.is_terminal() ? terminals.size() : nonterminals.size()))
        throw Error(concat("rule references undeclared symbol id ", s.id));
    }
  }
  return Pcfg(std::move(name), std::move(terminals), std::move(nonterminals), std::move(rules), *start,
              std::move(metadata));
}

inline Pcfg load_grammar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grammar file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_grammar(ss.str());
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void save_grammar(const Pcfg& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write grammar file: " + path);
  out << serialize(g);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace pigram
