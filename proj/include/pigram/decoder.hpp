#pragma once

// Grammar-constrained decoding of a frame-wise class-probability matrix.
//
// For a label sentence l and frames 1..T:
//   f(l, t)  probability mass of labelings of frames 1..t that collapse to l
//   g(l)     probability mass of labelings of all T frames whose collapse
//            starts with l
// with f(e,0) = 1, f(l,t) = y_t[k] * (f(l,t-1) + f(l-,t-1)) and
// g(l) = sum_t f(l-,t-1) * y_t[k], where k = last(l). All values are kept as
// logarithms; matrix entries are floored at kProbFloor first.
//
// The search is best-first over label prefixes. An open prefix l scores
// g(l) * P_prefix(SIL l)^w and a complete sentence f(l,T) * P(SIL l SIL)^w.
// Both factors only shrink under extension, so the first candidate that beats
// every open prefix is the exact argmax.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "pigram/corpus.hpp"
#include "pigram/earley.hpp"
#include "pigram/grammar.hpp"

namespace pigram {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kRowSumTolerance = 1e-6;

/// Row-stochastic T x K matrix of per-frame class probabilities.
class ProbMatrix {
 public:
  ProbMatrix() = default;

  /// `data` is row-major. Empty `class_names` defaults to PI0..PI{K-1}.
  ProbMatrix(std::size_t rows, std::size_t cols, std::vector<double> data, std::vector<std::string> class_names = {})
      : rows_(rows), cols_(cols), data_(std::move(data)), names_(std::move(class_names)) {
    if (names_.empty())
      for (std::size_t k = 0; k < cols_; ++k) names_.push_back("PI" + std::to_string(k));
    auto problems = check();
    if (!problems.empty()) throw Error("invalid probability matrix: " + problems.front());
  }

  static ProbMatrix from_rows(const std::vector<std::vector<double>>& rows, std::vector<std::string> class_names = {}) {
    if (rows.empty()) throw Error("invalid probability matrix: no rows");
    std::vector<double> data;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != rows[0].size())
        throw Error(detail::concat("invalid probability matrix: row ", t, " has ", rows[t].size(), " entries, expected ",
                                   rows[0].size()));
      data.insert(data.end(), rows[t].begin(), rows[t].end());
    }
    return ProbMatrix(rows.size(), rows[0].size(), std::move(data), std::move(class_names));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t t, std::size_t k) const { return data_[t * cols_ + k]; }
  std::span<const double> row(std::size_t t) const { return {data_.data() + t * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }
  const std::vector<std::string>& class_names() const { return names_; }

  ProbMatrix with_class_names(std::vector<std::string> names) const {
    return ProbMatrix(rows_, cols_, data_, std::move(names));
  }

  /// Per-frame argmax; ties go to the lower class id.
  std::vector<std::uint32_t> argmax_labels() const {
    std::vector<std::uint32_t> out(rows_);
    for (std::size_t t = 0; t < rows_; ++t) {
      auto r = row(t);
      out[t] = static_cast<std::uint32_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
  }

 private:
  std::vector<std::string> check() const {
    std::vector<std::string> out;
    if (rows_ < 1) out.push_back("T must be at least 1");
    if (cols_ < 2) out.push_back("K must be at least 2");
    if (data_.size() != rows_ * cols_)
      out.push_back(detail::concat("expected ", rows_ * cols_, " entries, got ", data_.size()));
    if (names_.size() != cols_) out.push_back(detail::concat("expected ", cols_, " class names, got ", names_.size()));
    if (!out.empty()) return out;
    std::set<std::string> seen;
    for (const auto& n : names_)
      if (!seen.insert(n).second) out.push_back("duplicate class name " + n);
    for (std::size_t t = 0; t < rows_; ++t) {
      double sum = 0.0;
      for (std::size_t k = 0; k < cols_; ++k) {
        const double v = (*this)(t, k);
        if (!(v >= 0.0 && v <= 1.0)) {
          out.push_back(detail::concat("entry (", t, ", ", k, ") = ", v, " is outside [0, 1]"));
          return out;
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        out.push_back(detail::concat("row ", t, " sums to ", format_double(sum)));
        return out;
      }
    }
    return out;
  }

  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
  std::vector<std::string> names_;
};

/// Numerically stable softmax. Throws on non-finite input.
inline std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw Error("softmax: empty input");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error("softmax: input must be finite");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) sum += out[k] = std::exp(scores[k] - mx);
  for (auto& v : out) v /= sum;
  return out;
}

namespace detail {

/// log(max(y, kProbFloor)) for every entry, row-major.
inline std::vector<double> floored_log(const ProbMatrix& m) {
  std::vector<double> out(m.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(m.data()[i], kProbFloor));
  return out;
}

/// log f(e, t) for t = 0..T.
inline std::vector<double> empty_row(std::size_t frames) {
  std::vector<double> row(frames + 1, kNegInf);
  row[0] = 0.0;
  return row;
}

/// log f(l.k, .) from log f(l, .).
inline std::vector<double> extend_row(const std::vector<double>& parent, const std::vector<double>& logy,
                                      std::size_t cols, std::uint32_t k) {
  const std::size_t frames = parent.size() - 1;
  std::vector<double> row(frames + 1, kNegInf);
  for (std::size_t t = 1; t <= frames; ++t) {
    const double into = log_add(row[t - 1], parent[t - 1]);
    if (into != kNegInf) row[t] = logy[(t - 1) * cols + k] + into;
  }
  return row;
}

/// log g(l.k) from log f(l, .).
inline double extension_log_g(const std::vector<double>& parent, const std::vector<double>& logy, std::size_t cols,
                              std::uint32_t k) {
  const std::size_t frames = parent.size() - 1;
  double mx = kNegInf;
  for (std::size_t t = 1; t <= frames; ++t)
    if (parent[t - 1] != kNegInf) mx = std::max(mx, parent[t - 1] + logy[(t - 1) * cols + k]);
  if (mx == kNegInf) return kNegInf;
  double sum = 0.0;
  for (std::size_t t = 1; t <= frames; ++t)
    if (parent[t - 1] != kNegInf) sum += std::exp(parent[t - 1] + logy[(t - 1) * cols + k] - mx);
  return mx + std::log(sum);
}

/// log g(l.k) for every k at once. `y` holds the floored linear entries.
/// Terms are scaled by the largest log f(l, t); since every y >= kProbFloor
/// the largest term never underflows.
inline std::vector<double> extension_log_g_all(const std::vector<double>& parent, const std::vector<double>& y,
                                               std::size_t cols) {
  const std::size_t frames = parent.size() - 1;
  double mx = kNegInf;
  for (std::size_t t = 0; t < frames; ++t) mx = std::max(mx, parent[t]);
  std::vector<double> out(cols, kNegInf);
  if (mx == kNegInf) return out;
  std::vector<double> sum(cols, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    if (parent[t] == kNegInf) continue;
    const double w = std::exp(parent[t] - mx);
    if (w == 0.0) continue;
    const double* yt = &y[t * cols];
    for (std::size_t k = 0; k < cols; ++k) sum[k] += w * yt[k];
  }
  for (std::size_t k = 0; k < cols; ++k) out[k] = mx + std::log(sum[k]);
  return out;
}

inline void check_label_sentence(std::span<const std::uint32_t> l, std::size_t cols, const char* what) {
  if (l.empty()) throw Error(std::string(what) + ": sentence is empty");
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] >= cols) throw Error(concat(what, ": class id ", l[i], " at position ", i, " exceeds K = ", cols));
    if (i > 0 && l[i] == l[i - 1])
      throw Error(concat(what, ": adjacent tokens at positions ", i - 1, " and ", i, " are equal"));
  }
}

}  // namespace detail

struct PrefixScore {
  std::vector<std::uint32_t> prefix;
  /// f(l, t) for t = 0..T; may underflow to 0 for long matrices (see log_f_row).
  std::vector<double> f_row;
  std::vector<double> log_f_row;
  double g = 0.0;
  double log_g = kNegInf;
};

/// f(l, .) and g(l) for a class-id sentence `l`.
inline PrefixScore prefix_probabilities(const ProbMatrix& m, std::span<const std::uint32_t> l) {
  detail::check_label_sentence(l, m.cols(), "prefix_probabilities");
  const auto logy = detail::floored_log(m);
  auto row = detail::empty_row(m.rows());
  PrefixScore out;
  out.prefix.assign(l.begin(), l.end());
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (i + 1 == l.size()) out.log_g = detail::extension_log_g(row, logy, m.cols(), l[i]);
    row = detail::extend_row(row, logy, m.cols(), l[i]);
  }
  out.g = std::exp(out.log_g);
  out.log_f_row = row;
  out.f_row.resize(row.size());
  for (std::size_t t = 0; t < row.size(); ++t) out.f_row[t] = std::exp(row[t]);
  return out;
}

/// Most probable frame labeling whose collapse equals `l`. Ties go to the
/// labeling with the latest segment boundaries.
inline std::vector<std::uint32_t> align_frames(std::span<const std::uint32_t> l, const ProbMatrix& m) {
  detail::check_label_sentence(l, m.cols(), "align_frames");
  const std::size_t frames = m.rows(), segs = l.size();
  if (segs > frames)
    throw Error(detail::concat("align_frames: sentence has ", segs, " segments but the matrix has only ", frames,
                               " frames"));
  const auto logy = detail::floored_log(m);
  // v[t][j]: best log score with frame t inside segment j.
  std::vector<double> v(frames * segs, kNegInf);
  std::vector<char> advanced(frames * segs, 0);
  v[0] = logy[l[0]];
  for (std::size_t t = 1; t < frames; ++t) {
    const std::size_t jmax = std::min(segs - 1, t);
    for (std::size_t j = 0; j <= jmax; ++j) {
      const double stay = v[(t - 1) * segs + j];
      const double adv = j > 0 ? v[(t - 1) * segs + j - 1] : kNegInf;
      // on a tie the boundary moves as late as possible: prefer advancing here
      const bool take_adv = adv != kNegInf && adv >= stay;
      const double best = take_adv ? adv : stay;
      if (best == kNegInf) continue;
      v[t * segs + j] = best + logy[t * m.cols() + l[j]];
      advanced[t * segs + j] = take_adv;
    }
  }
  std::vector<std::uint32_t> labels(frames);
  std::size_t j = segs - 1;
  for (std::size_t t = frames; t-- > 0;) {
    labels[t] = l[j];
    if (t > 0 && advanced[t * segs + j]) --j;
  }
  return labels;
}

struct GepConfig {
  bool use_grammar_prior = true;
  /// Exponent on the grammar sentence probability; 0 keeps only the constraint.
  double prior_weight = 1.0;
  std::size_t max_queue = 100000;
  /// Prefix expansions before the search stops and returns the best complete
  /// sentence seen so far (result marked pruned).
  std::size_t max_expansions = 5000;
  bool fallback_on_failure = true;
  /// Bytes of f rows kept for expanded prefixes; rows beyond it are recomputed.
  std::size_t row_cache_bytes = std::size_t{256} << 20;

  void validate() const {
    if (!(prior_weight >= 0.0) || !std::isfinite(prior_weight)) throw Error("prior_weight must be finite and >= 0");
    if (max_queue < 1) throw Error("max_queue must be at least 1");
    if (max_expansions < 1) throw Error("max_expansions must be at least 1");
  }
  double effective_weight() const { return use_grammar_prior ? prior_weight : 0.0; }
};

struct ParseResult {
  /// Class ids of the best sentence (SIL stripped).
  std::vector<std::uint32_t> sentence;
  /// Class id per frame.
  std::vector<std::uint32_t> frame_labels;
  double data_prob = 0.0;
  double log_data_prob = kNegInf;
  /// P(SIL l SIL | G), or P(l | G) for grammars without SIL.
  double grammar_prob = 0.0;
  double log_grammar_prob = kNegInf;
  /// log f(l,T) + w * log P(l | G).
  double combined_score = kNegInf;
  bool fallback_used = false;
  /// The search was cut short by max_queue or max_expansions, so the
  /// sentence may not be the exact argmax.
  bool pruned = false;
  std::size_t expanded = 0;
};

/// Decoder bound to one grammar. Parsing is const and thread-safe.
class GepDecoder {
 public:
  explicit GepDecoder(const Pcfg& g) : parser_(g) {
    sil_ = g.terminal_id(kSil);
    root_chart_ = parser_.start();
    if (sil_) root_chart_ = parser_.advance(root_chart_, *sil_);
  }

  const Pcfg& grammar() const { return parser_.grammar(); }

  /// Best grammatical sentence for `m`; classes map to terminals by name.
  ParseResult parse(const ProbMatrix& m, const GepConfig& cfg = {}) const {
    cfg.validate();
    const auto term_of = class_terminals(m);
    const auto logy = detail::floored_log(m);
    std::vector<double> y(logy.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(logy[i]);
    const std::size_t frames = m.rows(), cols = m.cols();
    const double w = cfg.effective_weight();

    std::vector<std::optional<std::uint32_t>> class_of(grammar().num_terminals());
    for (std::uint32_t k = 0; k < cols; ++k)
      if (term_of[k]) class_of[*term_of[k]] = k;

    struct Node {
      std::shared_ptr<const Node> parent;
      std::uint32_t cls = 0;
      std::size_t depth = 0;
      EarleyChart chart;
      mutable std::shared_ptr<const std::vector<double>> row;
    };
    struct Entry {
      double score;
      std::vector<std::uint32_t> seq;
      std::shared_ptr<const Node> node;
      bool operator<(const Entry& o) const {
        if (score != o.score) return score > o.score;
        return seq < o.seq;
      }
    };

    std::size_t cached_bytes = 0;
    const std::size_t row_bytes = (frames + 1) * sizeof(double);
    auto row_of = [&](const std::shared_ptr<const Node>& node) {
      std::vector<const Node*> chain;
      for (const Node* n = node.get(); !n->row; n = n->parent.get()) chain.push_back(n);
      std::shared_ptr<const std::vector<double>> row = chain.empty() ? node->row : nullptr;
      const Node* base = chain.empty() ? nullptr : chain.back()->parent.get();
      std::vector<double> cur = base ? *base->row : std::vector<double>{};
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) cur = detail::extend_row(cur, logy, cols, (*it)->cls);
      if (!row) {
        row = std::make_shared<const std::vector<double>>(std::move(cur));
        if (cached_bytes + row_bytes <= cfg.row_cache_bytes) {
          node->row = row;
          cached_bytes += row_bytes;
        }
      }
      return row;
    };

    auto root = std::make_shared<Node>();
    root->chart = root_chart_;
    root->row = std::make_shared<const std::vector<double>>(detail::empty_row(frames));

    std::set<Entry> open;
    ParseResult result;
    if (!root_chart_.last().dead()) open.insert({0.0, {}, root});

    struct Best {
      double score;
      double log_f;
      double log_p;
      std::vector<std::uint32_t> seq;
    };
    std::optional<Best> best;
    auto tol = [](double s) { return 1e-12 * std::max(1.0, std::abs(s)); };

    while (!open.empty()) {
      const Entry top = *open.begin();
      if (best && best->score > top.score + tol(top.score)) break;
      if (result.expanded >= cfg.max_expansions) {
        result.pruned = true;
        break;
      }
      open.erase(open.begin());
      ++result.expanded;
      const auto row = row_of(top.node);
      const Node& node = *top.node;

      if (node.depth > 0 && (*row)[frames] != kNegInf) {
        const double p = sentence_probability(node.chart);
        if (p > 0.0) {
          const double lp = std::log(p);
          const double score = (*row)[frames] + w * lp;
          const bool better = !best || score > best->score + tol(score) ||
                              (score >= best->score - tol(score) && top.seq < best->seq);
          if (better) best = Best{score, (*row)[frames], lp, top.seq};
        }
      }
      if (node.depth >= frames) continue;

      const auto log_g = detail::extension_log_g_all(*row, y, cols);
      for (auto t : node.chart.last().next_terminals()) {
        if (!class_of[t]) continue;
        const std::uint32_t k = *class_of[t];
        if (node.depth > 0 && k == node.cls) continue;
        const double lg = log_g[k];
        if (lg == kNegInf) continue;
        auto chart = parser_.advance(node.chart, t);
        const double bound = chart.last().prefix_probability();
        if (!(bound > 0.0)) continue;
        const double score = lg + w * std::log(bound);
        if (best && score < best->score - tol(score)) continue;
        auto child = std::make_shared<Node>();
        child->parent = top.node;
        child->cls = k;
        child->depth = node.depth + 1;
        child->chart = std::move(chart);
        auto seq = top.seq;
        seq.push_back(k);
        open.insert({score, std::move(seq), std::move(child)});
        if (open.size() > cfg.max_queue) {
          open.erase(std::prev(open.end()));
          result.pruned = true;
        }
      }
    }

    if (!best) {
      if (!cfg.fallback_on_failure)
        throw NoParseError("no parse: no grammatical sentence fits the probability matrix");
      return fallback(m, logy, w, result);
    }
    result.sentence = best->seq;
    result.frame_labels = align_frames(result.sentence, m);
    result.log_data_prob = best->log_f;
    result.data_prob = std::exp(best->log_f);
    result.log_grammar_prob = best->log_p;
    result.grammar_prob = std::exp(best->log_p);
    result.combined_score = best->score;
    return result;
  }

  /// P(SIL l SIL | G) for a class-id sentence, 0 if any class has no terminal.
  double sentence_probability(const ProbMatrix& m, std::span<const std::uint32_t> l) const {
    const auto term_of = class_terminals(m);
    EarleyChart chart = root_chart_;
    for (auto k : l) {
      if (k >= term_of.size() || !term_of[k]) return 0.0;
      chart = parser_.advance(chart, *term_of[k]);
      if (chart.last().dead()) return 0.0;
    }
    return l.empty() ? 0.0 : sentence_probability(chart);
  }

 private:
  std::vector<std::optional<std::uint32_t>> class_terminals(const ProbMatrix& m) const {
    std::vector<std::optional<std::uint32_t>> out(m.cols());
    for (std::size_t k = 0; k < m.cols(); ++k) {
      if (m.class_names()[k] == kSil) throw Error("matrix class names must not include " + std::string(kSil));
      out[k] = grammar().terminal_id(m.class_names()[k]);
    }
    return out;
  }

  double sentence_probability(const EarleyChart& chart) const {
    if (!sil_) return chart.last().sentence_probability();
    return parser_.advance(chart, *sil_).last().sentence_probability();
  }

  ParseResult fallback(const ProbMatrix& m, const std::vector<double>& logy, double w, ParseResult result) const {
    result.fallback_used = true;
    result.frame_labels = m.argmax_labels();
    result.sentence = collapse_segments(result.frame_labels);
    double lf = 0.0;
    for (std::size_t t = 0; t < m.rows(); ++t) lf += logy[t * m.cols() + result.frame_labels[t]];
    result.log_data_prob = lf;
    result.data_prob = std::exp(lf);
    result.grammar_prob = sentence_probability(m, result.sentence);
    result.log_grammar_prob = result.grammar_prob > 0.0 ? std::log(result.grammar_prob) : kNegInf;
    result.combined_score = w > 0.0 ? lf + w * result.log_grammar_prob : lf;
    return result;
  }

  EarleyParser parser_;
  std::optional<std::uint32_t> sil_;
  EarleyChart root_chart_;
};

/// Best grammatical sentence and its frame alignment.
inline ParseResult gep_parse(const ProbMatrix& m, const Pcfg& g, const GepConfig& cfg = {}) {
  return GepDecoder(g).parse(m, cfg);
}

/// Top-level entry point: grammar-constrained relabeling of every frame.
inline ParseResult refine(const ProbMatrix& m, const Pcfg& g, const GepConfig& cfg = {}) { return gep_parse(m, g, cfg); }

struct BatchItem {
  std::optional<ParseResult> result;
  std::string error;
  bool no_parse = false;
};

/// Parses every matrix with up to `jobs` threads; output order follows input order.
inline std::vector<BatchItem> refine_batch(const std::vector<ProbMatrix>& matrices, const Pcfg& g,
                                           const GepConfig& cfg = {}, std::size_t jobs = 1) {
  cfg.validate();
  const GepDecoder decoder(g);
  std::vector<BatchItem> out(matrices.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < matrices.size();) {
      try {
        out[i].result = decoder.parse(matrices[i], cfg);
      } catch (const NoParseError& e) {
        out[i].error = e.what();
        out[i].no_parse = true;
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, matrices.size()));
  if (jobs == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace pigram
