#pragma once

// Unsupervised grammar induction over token sentences.
//
// The corpus is loaded into an RDS graph: a lexicon of units (terminals,
// patterns, equivalence classes) plus one path per sentence, bracketed by
// BEGIN and END markers. Each iteration
//   1. bootstraps equivalence classes: units that fill the same slot between
//      identical flanks and whose context sets overlap enough are grouped, and
//      the group replaces its members in its anchoring contexts;
//   2. runs the motif-extraction scan and adopts the best significant pattern,
//      replacing every non-overlapping occurrence with a single unit.
// A unit's context set holds (offset, neighbour) features from every window
// in which it fills the slot; overlap is Jaccard over these sets.
// It stops when neither step changes the graph or after max_iterations.
// The grammar has a root Or over the distinct distilled paths, one And-node
// per pattern and one Or-node per equivalence class.
//
// Motif extraction on a search path e_1..e_m with sub-path counts l(.):
//   P_R(i;j) = l(e_i..e_j) / l(e_i..e_{j-1})
//   P_L(j;i) = l(e_i..e_j) / l(e_{i+1}..e_j)
//   D_R(i;j) = P_R(i;j+1) / P_R(i;j),   D_L(j;i) = P_L(j;i-1) / P_L(j;i)
// Moving onto a BEGIN/END marker counts as zero continuation, tested over the
// occurrences adjacent to that marker. A sub-path
// e_i..e_j (length >= 2) is a candidate when D_R < eta and D_L < eta and a
// one-sided binomial test rejects "no drop" at level alpha on both sides:
//   P(X <= l(e_i..e_{j+1}) | n = l(e_i..e_j), p = eta * P_R(i;j)) < alpha
// and symmetrically on the left. Counts are occurrence counts. With
// `familywise` set (the default) the level is alpha divided by the number of
// distinct sub-paths tested, so chance drops at sentence borders in an
// unstructured corpus do not pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pigram/corpus.hpp"
#include "pigram/grammar.hpp"
#include "pigram/inside.hpp"

namespace pigram {

struct AdiosParams {
  double eta = 0.9;
  double alpha = 0.08;
  /// Window length for equivalence-class bootstrapping; the slot is at index window/2.
  std::size_t context_window = 3;
  /// Minimum pairwise Jaccard overlap of context sets inside one class.
  double bootstrap_threshold = 0.65;
  std::size_t max_iterations = 100;
  /// When set, alpha bounds the family-wise error of one scan: each test runs
  /// at alpha / (number of distinct sub-paths of length >= 2 in the graph).
  bool familywise = true;

  void validate() const {
    if (!(eta > 0.0 && eta < 1.0)) throw Error("eta must be in (0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must be in (0, 1)");
    if (context_window < 2) throw Error("context_window must be at least 2");
    if (!(bootstrap_threshold >= 0.0 && bootstrap_threshold <= 1.0))
      throw Error("bootstrap_threshold must be in [0, 1]");
  }
};

/// Reads `key = value` lines ('#' comments). Keys: eta, alpha, window,
/// bootstrap, max_iterations.
inline AdiosParams parse_adios_params(std::string_view text, AdiosParams base = {}) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = strip_comment(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    if (eq == std::string_view::npos) throw Error(detail::concat("params line ", line_no, ": expected key = value"));
    auto key_parts = split_ws(line.substr(0, eq));
    auto val_parts = split_ws(line.substr(eq + 1));
    if (key_parts.size() != 1 || val_parts.size() != 1)
      throw Error(detail::concat("params line ", line_no, ": expected key = value"));
    const std::string key(key_parts[0]);
    const auto val = val_parts[0];
    bool ok = true;
    if (key == "eta") {
      ok = parse_double(val, base.eta);
    } else if (key == "alpha") {
      ok = parse_double(val, base.alpha);
    } else if (key == "bootstrap") {
      ok = parse_double(val, base.bootstrap_threshold);
    } else if (key == "window") {
      ok = parse_int(val, base.context_window);
    } else if (key == "max_iterations") {
      ok = parse_int(val, base.max_iterations);
    } else {
      throw Error(detail::concat("params line ", line_no, ": unknown key '", key, "'"));
    }
    if (!ok) throw Error(detail::concat("params line ", line_no, ": bad value for ", key));
  }
  base.validate();
  return base;
}

using UnitId = std::uint32_t;

enum class UnitKind { begin, end, terminal, pattern, equivalence };

struct Unit {
  UnitKind kind = UnitKind::terminal;
  std::string token;            // terminals only
  std::vector<UnitId> members;  // pattern: sequence; equivalence: sorted set
};

/// Lexicon plus one path per sentence. Paths start with kBegin and end with kEnd.
class RdsGraph {
 public:
  static constexpr UnitId kBegin = 0;
  static constexpr UnitId kEnd = 1;

  RdsGraph() {
    units_.push_back({UnitKind::begin, "", {}});
    units_.push_back({UnitKind::end, "", {}});
  }

  const std::vector<Unit>& units() const { return units_; }
  const Unit& unit(UnitId u) const { return units_.at(u); }
  const std::vector<std::vector<UnitId>>& paths() const { return paths_; }

  static bool is_marker(UnitId u) { return u == kBegin || u == kEnd; }

  std::optional<UnitId> terminal(const std::string& token) const {
    auto it = terminals_.find(token);
    if (it == terminals_.end()) return std::nullopt;
    return it->second;
  }

  UnitId add_terminal(const std::string& token) {
    auto [it, inserted] = terminals_.emplace(token, static_cast<UnitId>(units_.size()));
    if (inserted) units_.push_back({UnitKind::terminal, token, {}});
    return it->second;
  }

  /// Returns the existing unit when an identical one is already present.
  UnitId add_composite(UnitKind kind, std::vector<UnitId> members) {
    if (kind == UnitKind::equivalence) std::sort(members.begin(), members.end());
    auto key = std::make_pair(kind == UnitKind::pattern, members);
    auto [it, inserted] = composites_.emplace(key, static_cast<UnitId>(units_.size()));
    if (inserted) units_.push_back({kind, "", std::move(members)});
    return it->second;
  }

  void add_path(const TokenSentence& s) {
    if (s.empty()) throw Error("induction: empty sentence in corpus");
    std::vector<UnitId> path{kBegin};
    for (const auto& tok : s) path.push_back(add_terminal(tok));
    path.push_back(kEnd);
    paths_.push_back(std::move(path));
  }

  std::vector<std::vector<UnitId>>& mutable_paths() { return paths_; }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& p : paths_) n += p.size() - 2;
    return n;
  }

 private:
  std::vector<Unit> units_;
  std::vector<std::vector<UnitId>> paths_;
  std::map<std::string, UnitId> terminals_;
  std::map<std::pair<bool, std::vector<UnitId>>, UnitId> composites_;
};

inline RdsGraph build_rds(const std::vector<TokenSentence>& corpus) {
  if (corpus.empty()) throw Error("induction: corpus is empty");
  RdsGraph g;
  for (const auto& s : corpus) g.add_path(s);
  return g;
}

struct PatternCandidate {
  std::vector<UnitId> units;
  double right_ratio = 0.0;  // D_R
  double left_ratio = 0.0;   // D_L
  double p_right = 1.0;
  double p_left = 1.0;
  /// max(p_right, p_left); smaller is more significant.
  double significance = 1.0;
  std::size_t support = 0;
  std::size_t path = 0;      // first search path that produced it
  std::size_t position = 0;  // index of its first unit in that path
};

namespace detail {

/// P(X <= k) for X ~ Binomial(n, p).
inline double binomial_cdf(std::size_t k, std::size_t n, double p) {
  if (k >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  const double ln = std::lgamma(static_cast<double>(n) + 1.0);
  double mx = kNegInf;
  std::vector<double> terms(k + 1);
  for (std::size_t x = 0; x <= k; ++x) {
    terms[x] = ln - std::lgamma(static_cast<double>(x) + 1.0) - std::lgamma(static_cast<double>(n - x) + 1.0) +
               static_cast<double>(x) * lp + static_cast<double>(n - x) * lq;
    mx = std::max(mx, terms[x]);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - mx);
  return std::min(1.0, std::exp(mx) * sum);
}

/// Occurrence positions of every unit, as (path, index).
inline std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> occurrence_index(const RdsGraph& g) {
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> idx(g.units().size());
  for (std::uint32_t p = 0; p < g.paths().size(); ++p)
    for (std::uint32_t i = 0; i < g.paths()[p].size(); ++i) idx[g.paths()[p][i]].push_back({p, i});
  return idx;
}

}  // namespace detail

/// Significant patterns over all search paths, most significant first
/// (ties: larger support, then leftmost first occurrence). One entry per
/// distinct unit sequence.
inline std::vector<PatternCandidate> mex_scan(const RdsGraph& g, const AdiosParams& params) {
  params.validate();
  const auto occ = detail::occurrence_index(g);
  std::map<std::vector<UnitId>, PatternCandidate> best;
  std::set<std::vector<UnitId>> tested;

  for (std::size_t p = 0; p < g.paths().size(); ++p) {
    const auto& path = g.paths()[p];
    const std::size_t last = path.size() - 2;  // e_1..e_last are real units
    if (last < 2) continue;
    // cnt[a][b] = l(e_a..e_b), markers included (e_0 = BEGIN, e_{last+1} = END)
    std::vector<std::vector<double>> cnt(path.size(), std::vector<double>(path.size(), 0.0));
    for (std::size_t a = 0; a < path.size(); ++a) {
      auto live = occ[path[a]];
      for (std::size_t b = a; b < path.size() && !live.empty(); ++b) {
        if (b > a) {
          std::vector<std::pair<std::uint32_t, std::uint32_t>> next;
          for (auto [q, i] : live) {
            const auto& other = g.paths()[q];
            if (i + 1 < other.size() && other[i + 1] == path[b]) next.push_back({q, i + 1});
          }
          live = std::move(next);
        }
        cnt[a][b] = static_cast<double>(live.size());
      }
    }
    for (std::size_t i = 1; i <= last; ++i) {
      for (std::size_t j = i + 1; j <= last; ++j) {
        if (params.familywise)
          tested.emplace(path.begin() + static_cast<std::ptrdiff_t>(i), path.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        const double here = cnt[i][j];
        const double pr = here / cnt[i][j - 1];
        const double pl = here / cnt[i + 1][j];
        // Against a marker nothing continues; the test then runs over the
        // occurrences that sit at that border.
        const bool right_border = j == last, left_border = i == 1;
        const double right_n = right_border ? cnt[i][j + 1] : here;
        const double right_x = right_border ? 0.0 : cnt[i][j + 1];
        const double left_n = left_border ? cnt[i - 1][j] : here;
        const double left_x = left_border ? 0.0 : cnt[i - 1][j];
        const double dr = (right_x / right_n) / pr, dl = (left_x / left_n) / pl;
        if (!(dr < params.eta && dl < params.eta)) continue;
        const double p_right = detail::binomial_cdf(static_cast<std::size_t>(right_x),
                                                    static_cast<std::size_t>(right_n), params.eta * pr);
        const double p_left = detail::binomial_cdf(static_cast<std::size_t>(left_x),
                                                   static_cast<std::size_t>(left_n), params.eta * pl);
        const auto n = static_cast<std::size_t>(here);
        if (!(p_right < params.alpha && p_left < params.alpha)) continue;
        PatternCandidate c;
        c.units.assign(path.begin() + static_cast<std::ptrdiff_t>(i), path.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        c.right_ratio = dr;
        c.left_ratio = dl;
        c.p_right = p_right;
        c.p_left = p_left;
        c.significance = std::max(p_right, p_left);
        c.support = n;
        c.path = p;
        c.position = i;
        auto it = best.find(c.units);
        if (it == best.end()) {
          best.emplace(c.units, std::move(c));
        } else if (c.significance < it->second.significance) {
          c.path = it->second.path;
          c.position = it->second.position;
          it->second = std::move(c);
        }
      }
    }
  }
  const double level = params.familywise && !tested.empty() ? params.alpha / static_cast<double>(tested.size())
                                                             : params.alpha;
  std::vector<PatternCandidate> out;
  for (auto& [k, c] : best)
    if (c.significance < level) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const PatternCandidate& a, const PatternCandidate& b) {
    if (a.significance != b.significance) return a.significance < b.significance;
    if (a.support != b.support) return a.support > b.support;
    if (a.path != b.path) return a.path < b.path;
    if (a.position != b.position) return a.position < b.position;
    return a.units < b.units;
  });
  return out;
}

/// Replaces every non-overlapping occurrence (left to right) of the
/// candidate's units with one pattern unit. Returns the unit id.
inline UnitId adopt_pattern(RdsGraph& g, const std::vector<UnitId>& units) {
  if (units.size() < 2) throw Error("adopt_pattern: a pattern needs at least two units");
  const UnitId pu = g.add_composite(UnitKind::pattern, units);
  for (auto& path : g.mutable_paths()) {
    std::vector<UnitId> out;
    out.reserve(path.size());
    for (std::size_t i = 0; i < path.size();) {
      if (i + units.size() <= path.size() && std::equal(units.begin(), units.end(), path.begin() + i)) {
        out.push_back(pu);
        i += units.size();
      } else {
        out.push_back(path[i++]);
      }
    }
    path = std::move(out);
  }
  return pu;
}

struct EquivalenceClass {
  std::vector<UnitId> members;  // ascending
  /// Anchoring contexts in first-seen order: flank units of a window
  /// (window-1 entries, slot removed) in which the members were grouped.
  std::vector<std::vector<UnitId>> contexts;
  /// Minimum pairwise Jaccard overlap of the members' context sets.
  double overlap = 1.0;
};

/// Groups units that fill the centre slot of the same window context.
/// Classes are listed in order of first occurrence of their anchoring context.
inline std::vector<EquivalenceClass> bootstrap_generalize(const RdsGraph& g, const AdiosParams& params) {
  params.validate();
  const std::size_t w = params.context_window, slot = w / 2;
  // context features of a unit: (offset from the slot, neighbouring unit)
  std::map<UnitId, std::set<std::pair<int, UnitId>>> contexts;
  std::map<std::vector<UnitId>, std::vector<UnitId>> fillers;  // context -> fillers in first-seen order
  std::map<std::vector<UnitId>, std::size_t> first_seen;
  std::map<UnitId, std::size_t> freq;
  std::size_t order = 0;
  for (const auto& path : g.paths()) {
    for (std::size_t s = 0; s + w <= path.size(); ++s) {
      const UnitId u = path[s + slot];
      if (RdsGraph::is_marker(u)) continue;
      std::vector<UnitId> ctx;
      for (std::size_t k = 0; k < w; ++k)
        if (k != slot) ctx.push_back(path[s + k]);
      for (std::size_t k = 0; k < w; ++k)
        if (k != slot) contexts[u].insert({static_cast<int>(k) - static_cast<int>(slot), path[s + k]});
      auto& f = fillers[ctx];
      if (std::find(f.begin(), f.end(), u) == f.end()) f.push_back(u);
      first_seen.emplace(ctx, order++);
      ++freq[u];
    }
  }
  auto jaccard = [&](UnitId a, UnitId b) {
    const auto& x = contexts[a];
    const auto& y = contexts[b];
    std::size_t inter = 0;
    for (const auto& c : x) inter += y.count(c);
    return static_cast<double>(inter) / static_cast<double>(x.size() + y.size() - inter);
  };

  std::vector<std::pair<std::size_t, std::vector<UnitId>>> ordered;
  for (const auto& [ctx, f] : fillers)
    if (f.size() >= 2) ordered.push_back({first_seen[ctx], ctx});
  std::sort(ordered.begin(), ordered.end());

  std::vector<EquivalenceClass> out;
  std::map<std::vector<UnitId>, std::size_t> seen;
  for (const auto& [pos, ctx] : ordered) {
    auto members = fillers[ctx];
    std::stable_sort(members.begin(), members.end(), [&](UnitId a, UnitId b) {
      if (freq[a] != freq[b]) return freq[a] > freq[b];
      return a < b;
    });
    EquivalenceClass ec;
    ec.contexts.push_back(ctx);
    for (auto m : members) {
      double worst = 1.0;
      bool ok = true;
      for (auto x : ec.members) {
        const double j = jaccard(m, x);
        worst = std::min(worst, j);
        if (j < params.bootstrap_threshold) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      ec.members.push_back(m);
      ec.overlap = std::min(ec.overlap, worst);
    }
    if (ec.members.size() < 2) continue;
    std::sort(ec.members.begin(), ec.members.end());
    auto [it, fresh] = seen.emplace(ec.members, out.size());
    if (!fresh) {
      out[it->second].contexts.push_back(ctx);
      out[it->second].overlap = std::min(out[it->second].overlap, ec.overlap);
      continue;
    }
    out.push_back(std::move(ec));
  }
  return out;
}

/// Rewires each class into the paths: a member in the centre slot of a
/// window whose flanks equal one of the class contexts becomes the class unit.
/// Positions are decided on the graph as it was before the call; the first
/// class claiming a position wins. Returns the number of replacements.
inline std::size_t apply_classes(RdsGraph& g, const std::vector<EquivalenceClass>& classes,
                                 const AdiosParams& params) {
  const std::size_t w = params.context_window, slot = w / 2;
  std::map<std::pair<std::size_t, std::size_t>, UnitId> claims;
  for (const auto& ec : classes) {
    const UnitId eu = g.add_composite(UnitKind::equivalence, ec.members);
    for (std::size_t p = 0; p < g.paths().size(); ++p) {
      const auto& path = g.paths()[p];
      for (std::size_t s = 0; s + w <= path.size(); ++s) {
        const UnitId u = path[s + slot];
        if (!std::binary_search(ec.members.begin(), ec.members.end(), u)) continue;
        std::vector<UnitId> flanks;
        for (std::size_t k = 0; k < w; ++k)
          if (k != slot) flanks.push_back(path[s + k]);
        const bool match = std::find(ec.contexts.begin(), ec.contexts.end(), flanks) != ec.contexts.end();
        if (match) claims.emplace(std::make_pair(p, s + slot), eu);
      }
    }
  }
  for (const auto& [pos, eu] : claims) g.mutable_paths()[pos.first][pos.second] = eu;
  return claims.size();
}

struct InductionTrace {
  std::size_t iterations = 0;
  std::size_t patterns = 0;
  std::size_t classes = 0;
  std::size_t replacements = 0;
};

namespace detail {

/// Root Or over the distinct paths; one And per pattern, one Or per class.
inline Pcfg rds_to_grammar(const RdsGraph& g, std::string name) {
  std::vector<std::string> terminals{std::string(kSil)};
  std::map<UnitId, std::uint32_t> term_id;
  for (UnitId u = 0; u < g.units().size(); ++u) {
    const auto& x = g.units()[u];
    if (x.kind != UnitKind::terminal) continue;
    if (x.token == kSil) {
      term_id[u] = 0;
    } else {
      term_id[u] = static_cast<std::uint32_t>(terminals.size());
      terminals.push_back(x.token);
    }
  }

  // distinct path bodies in first-seen order with their multiplicities
  std::vector<std::vector<UnitId>> forms;
  std::map<std::vector<UnitId>, std::size_t> form_count;
  for (const auto& p : g.paths()) {
    std::vector<UnitId> body(p.begin() + 1, p.end() - 1);
    if (form_count[body]++ == 0) forms.push_back(body);
  }

  // reachable composite units, numbered in creation order
  std::set<UnitId> reachable;
  std::vector<UnitId> stack;
  for (const auto& f : forms) stack.insert(stack.end(), f.begin(), f.end());
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    if (!reachable.insert(u).second) continue;
    for (auto m : g.units()[u].members) stack.push_back(m);
  }
  std::vector<Nonterminal> nts{{"S", NodeType::or_node}};
  std::map<UnitId, std::uint32_t> nt_id;
  std::size_t np = 0, ne = 0;
  for (auto u : reachable) {
    const auto& x = g.units()[u];
    if (x.kind == UnitKind::pattern) {
      nt_id[u] = static_cast<std::uint32_t>(nts.size());
      nts.push_back({"P" + std::to_string(++np), NodeType::and_node});
    } else if (x.kind == UnitKind::equivalence) {
      nt_id[u] = static_cast<std::uint32_t>(nts.size());
      nts.push_back({"E" + std::to_string(++ne), NodeType::or_node});
    }
  }
  auto sym = [&](UnitId u) {
    auto t = term_id.find(u);
    if (t != term_id.end()) return SymbolRef::t(t->second);
    return SymbolRef::n(nt_id.at(u));
  };

  std::vector<Rule> rules;
  const double total = static_cast<double>(g.paths().size());
  for (const auto& f : forms) {
    Rule r{0, {}, static_cast<double>(form_count[f]) / total};
    for (auto u : f) r.rhs.push_back(sym(u));
    rules.push_back(std::move(r));
  }
  for (auto u : reachable) {
    const auto& x = g.units()[u];
    if (x.kind == UnitKind::pattern) {
      Rule r{nt_id[u], {}, 1.0};
      for (auto m : x.members) r.rhs.push_back(sym(m));
      rules.push_back(std::move(r));
    } else if (x.kind == UnitKind::equivalence) {
      for (auto m : x.members)
        rules.push_back({nt_id[u], {sym(m)}, 1.0 / static_cast<double>(x.members.size())});
    }
  }
  return Pcfg(std::move(name), std::move(terminals), std::move(nts), std::move(rules), 0, {});
}

}  // namespace detail

/// Induces a grammar from SIL-wrapped token sentences. Root branch
/// probabilities are the relative frequencies of the distilled paths and
/// equivalence-class branches are uniform; see estimate_probs.
inline Pcfg induce(const std::vector<TokenSentence>& corpus, const AdiosParams& params = {},
                   InductionTrace* trace = nullptr, std::string name = "induced") {
  params.validate();
  RdsGraph g = build_rds(corpus);
  InductionTrace t;
  for (; t.iterations < params.max_iterations; ++t.iterations) {
    bool changed = false;
    auto classes = bootstrap_generalize(g, params);
    if (!classes.empty()) {
      const std::size_t before = g.units().size();
      const std::size_t n = apply_classes(g, classes, params);
      if (n > 0) {
        changed = true;
        t.replacements += n;
        t.classes += g.units().size() - before;
      }
    }
    auto candidates = mex_scan(g, params);
    if (!candidates.empty()) {
      const std::size_t before = g.units().size();
      adopt_pattern(g, candidates.front().units);
      t.patterns += g.units().size() - before;
      changed = true;
    }
    if (!changed) break;
  }
  if (trace) *trace = t;
  Pcfg out = detail::rds_to_grammar(g, std::move(name));
  require_valid(out);
  return out;
}

/// Re-estimates Or-branch probabilities from Viterbi parses of `corpus`
/// with add-one smoothing: P(branch) = (uses + 1) / sum over siblings of
/// (uses + 1). Throws when a sentence has no parse.
inline Pcfg estimate_probs(const Pcfg& g, const std::vector<TokenSentence>& corpus) {
  require_valid(g);
  if (corpus.empty()) throw Error("estimate_probs: corpus is empty");
  std::vector<double> uses(g.rules().size(), 0.0);
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Sentence s;
    try {
      s = g.encode(corpus[i]);
    } catch (const Error&) {
      failed.push_back(i);
      continue;
    }
    try {
      for (auto r : viterbi(g, s).tree.applied_rules()) uses[r] += 1.0;
    } catch (const NoParseError&) {
      failed.push_back(i);
    }
  }
  if (!failed.empty()) {
    std::string list;
    for (std::size_t k = 0; k < failed.size() && k < 10; ++k) list += (k ? ", " : "") + std::to_string(failed[k]);
    if (failed.size() > 10) list += ", ...";
    throw Error(detail::concat("estimate_probs: ", failed.size(), " sentence(s) have no parse (indices ", list, ")"));
  }
  std::vector<Rule> rules = g.rules();
  for (std::uint32_t nt = 0; nt < g.num_nonterminals(); ++nt) {
    auto rs = g.rules_of(nt);
    double denom = 0.0;
    for (auto r : rs) denom += uses[r] + 1.0;
    for (auto r : rs) rules[r].prob = (uses[r] + 1.0) / denom;
  }
  return g.with_rules(std::move(rules));
}

}  // namespace pigram
