#pragma once

// Synthetic episodes and the argmax-vs-refined benchmark.
//
// An episode samples a sentence from a ground-truth grammar, expands every
// class token into a geometric run of frames, and corrupts each frame into a
// probability row (1 - eps) * onehot(gt) + eps * Dirichlet(concentration).
// All randomness of one episode derives from (episode seed, noise seed), and
// the Dirichlet draws do not depend on eps, so accuracy is monotone in eps
// for fixed seeds.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pigram/corpus.hpp"
#include "pigram/decoder.hpp"
#include "pigram/grammar.hpp"
#include "pigram/metrics.hpp"
#include "pigram/sample.hpp"

namespace pigram {

struct NoiseModel {
  double epsilon = 0.0;
  /// Symmetric Dirichlet parameter of the off-class mass.
  double concentration = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("noise epsilon must be in [0, 1]");
    if (!(concentration > 0.0) || !std::isfinite(concentration)) throw Error("noise concentration must be > 0");
  }
};

/// Class table and mean segment length per class (geometric on 1, 2, ...).
struct DurationModel {
  std::vector<std::string> classes;
  std::vector<double> mean_frames;

  void validate() const {
    if (classes.size() < 2) throw Error("duration model needs at least two classes");
    if (mean_frames.size() != classes.size())
      throw Error(detail::concat("duration model: ", classes.size(), " classes but ", mean_frames.size(), " means"));
    for (std::size_t k = 0; k < mean_frames.size(); ++k)
      if (!(mean_frames[k] >= 1.0) || !std::isfinite(mean_frames[k]))
        throw Error(detail::concat("duration model: mean for ", classes[k], " must be >= 1"));
  }

  std::uint32_t class_id(const std::string& name) const {
    auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end()) throw Error("duration model has no class " + name);
    return static_cast<std::uint32_t>(it - classes.begin());
  }
};

/// Classes PI0..PI5 with means scale * (annotated frame share in percent).
inline DurationModel cholec_duration_model(double scale = 2.0) {
  DurationModel d;
  for (std::size_t k = 0; k < 6; ++k) {
    d.classes.push_back("PI" + std::to_string(k));
    d.mean_frames.push_back(std::max(1.0, scale * kCholecPiFramePercent[k]));
  }
  return d;
}

/// Six-class ground-truth phase grammar: three independent slots between
/// SIL delimiters, each choosing one of two classes.
inline Pcfg reference_grammar() {
  return parse_rules(
      "S -> SIL A B C SIL\n"
      "A -> PI5 [0.6] | PI1 [0.4]\n"
      "B -> PI0 [0.5] | PI3 [0.5]\n"
      "C -> PI2 [0.7] | PI4 [0.3]\n",
      "reference");
}

struct Episode {
  std::vector<std::uint32_t> gt_frames;
  ProbMatrix matrix;
  /// Sampled sentence in grammar terminal ids, SIL included.
  Sentence source_sentence;
  /// The same sentence as class ids, SIL stripped.
  std::vector<std::uint32_t> class_sentence;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t parts[2];
  seq.generate(parts, parts + 2);
  return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

}  // namespace detail

inline Episode make_episode(const Pcfg& g, const DurationModel& dur, const NoiseModel& noise, std::uint64_t seed) {
  dur.validate();
  noise.validate();
  Episode ep;
  ep.source_sentence = sample(g, seed);
  for (auto t : ep.source_sentence) {
    const auto& name = g.terminals()[t];
    if (name == kSil) continue;
    const auto k = dur.class_id(name);
    if (!ep.class_sentence.empty() && ep.class_sentence.back() == k)
      throw Error("make_episode: sampled sentence repeats " + name + " in adjacent positions");
    ep.class_sentence.push_back(k);
  }
  if (ep.class_sentence.empty()) throw Error("make_episode: sampled sentence has no class tokens");

  std::mt19937_64 rng(detail::mix_seed(seed, noise.seed));
  for (auto k : ep.class_sentence) {
    std::geometric_distribution<std::uint32_t> geo(1.0 / dur.mean_frames[k]);
    const std::uint32_t len = 1 + geo(rng);
    ep.gt_frames.insert(ep.gt_frames.end(), len, k);
  }
  const std::size_t cols = dur.classes.size();
  std::gamma_distribution<double> gamma(noise.concentration, 1.0);
  std::vector<double> data(ep.gt_frames.size() * cols);
  std::vector<double> draw(cols);
  for (std::size_t t = 0; t < ep.gt_frames.size(); ++t) {
    double sum = 0.0;
    for (auto& d : draw) sum += d = gamma(rng);
    if (!(sum > 0.0)) {  // all draws underflowed: fall back to the uniform point
      std::fill(draw.begin(), draw.end(), 1.0);
      sum = static_cast<double>(cols);
    }
    double row_sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) {
      double v = noise.epsilon * draw[k] / sum;
      if (k == ep.gt_frames[t]) v += 1.0 - noise.epsilon;
      data[t * cols + k] = v;
      row_sum += v;
    }
    for (std::size_t k = 0; k < cols; ++k) data[t * cols + k] /= row_sum;
  }
  ep.matrix = ProbMatrix(ep.gt_frames.size(), cols, std::move(data), dur.classes);
  return ep;
}

/// Fraction of frames where `pred` equals `gt`.
inline double frame_accuracy(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt) {
  if (pred.size() != gt.size() || gt.empty()) throw Error("frame_accuracy: length mismatch or empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hit += pred[i] == gt[i];
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

/// Mean argmax accuracy over episodes with seeds first_seed, first_seed+1, ...
inline double baseline_accuracy(const Pcfg& g, const DurationModel& dur, const NoiseModel& noise, std::size_t episodes,
                                std::uint64_t first_seed = 0) {
  double sum = 0.0;
  for (std::size_t i = 0; i < episodes; ++i) {
    auto ep = make_episode(g, dur, noise, first_seed + i);
    sum += frame_accuracy(ep.matrix.argmax_labels(), ep.gt_frames);
  }
  return sum / static_cast<double>(episodes);
}

/// Smallest noise epsilon whose mean baseline accuracy is <= target,
/// by bisection to `tolerance` in epsilon.
inline double calibrate_epsilon(const Pcfg& g, const DurationModel& dur, NoiseModel noise, double target,
                                std::size_t episodes, std::uint64_t first_seed = 0, double tolerance = 1e-4) {
  if (!(target > 0.0 && target < 1.0)) throw Error("calibrate_epsilon: target must be in (0, 1)");
  double lo = 0.0, hi = 1.0;
  noise.epsilon = hi;
  if (baseline_accuracy(g, dur, noise, episodes, first_seed) > target)
    throw Error("calibrate_epsilon: target accuracy is below the accuracy at epsilon = 1");
  while (hi - lo > tolerance) {
    noise.epsilon = 0.5 * (lo + hi);
    if (baseline_accuracy(g, dur, noise, episodes, first_seed) > target)
      lo = noise.epsilon;
    else
      hi = noise.epsilon;
  }
  return hi;
}

struct BenchmarkRow {
  double noise = 0.0;
  std::size_t n = 0;
  double baseline_micro = 0.0;
  double refined_micro = 0.0;
  double delta = 0.0;
  double ci95[2] = {0.0, 0.0};
  double mean_parse_ms = 0.0;
  std::size_t fallbacks = 0;
};

struct BenchmarkOptions {
  std::size_t episodes = 200;
  std::uint64_t first_seed = 0;
  std::size_t jobs = 1;
  std::size_t bootstrap_resamples = 2000;
  std::uint64_t bootstrap_seed = 12345;
};

/// For each epsilon: mean per-episode micro accuracy of argmax and of
/// grammar-refined labels, their mean difference with a percentile
/// bootstrap 95% interval, and mean parse time. Episodes come from `truth`;
/// refinement uses `model`.
inline std::vector<BenchmarkRow> run_benchmark(const Pcfg& truth, const Pcfg& model, const DurationModel& dur,
                                               const std::vector<double>& noise_grid, NoiseModel noise,
                                               const GepConfig& cfg, const BenchmarkOptions& opt = {}) {
  if (opt.episodes < 1) throw Error("run_benchmark: need at least one episode");
  cfg.validate();
  const GepDecoder decoder(model);
  std::vector<BenchmarkRow> rows;
  for (double eps : noise_grid) {
    noise.epsilon = eps;
    noise.validate();
    std::vector<double> base(opt.episodes), refined(opt.episodes), ms(opt.episodes);
    std::vector<char> fell(opt.episodes, 0);
    std::vector<std::string> errors(opt.episodes);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < opt.episodes;) {
        try {
          auto ep = make_episode(truth, dur, noise, opt.first_seed + i);
          base[i] = frame_accuracy(ep.matrix.argmax_labels(), ep.gt_frames);
          const auto t0 = std::chrono::steady_clock::now();
          auto res = decoder.parse(ep.matrix, cfg);
          ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
          refined[i] = frame_accuracy(res.frame_labels, ep.gt_frames);
          fell[i] = res.fallback_used;
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, opt.episodes));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
    for (std::size_t i = 0; i < opt.episodes; ++i)
      if (!errors[i].empty()) throw Error(detail::concat("run_benchmark: episode ", opt.first_seed + i, ": ", errors[i]));

    BenchmarkRow row;
    row.noise = eps;
    row.n = opt.episodes;
    std::vector<double> diff(opt.episodes);
    for (std::size_t i = 0; i < opt.episodes; ++i) {
      row.baseline_micro += base[i];
      row.refined_micro += refined[i];
      row.mean_parse_ms += ms[i];
      row.fallbacks += fell[i];
      diff[i] = refined[i] - base[i];
    }
    const double n = static_cast<double>(opt.episodes);
    row.baseline_micro /= n;
    row.refined_micro /= n;
    row.mean_parse_ms /= n;
    row.delta = row.refined_micro - row.baseline_micro;

    std::mt19937_64 rng(opt.bootstrap_seed);
    std::uniform_int_distribution<std::size_t> pick(0, opt.episodes - 1);
    std::vector<double> means(opt.bootstrap_resamples);
    for (auto& m : means) {
      double s = 0.0;
      for (std::size_t i = 0; i < opt.episodes; ++i) s += diff[pick(rng)];
      m = s / n;
    }
    std::sort(means.begin(), means.end());
    if (!means.empty()) {
      auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(means.size() - 1)));
        return means[idx];
      };
      row.ci95[0] = at(0.025);
      row.ci95[1] = at(0.975);
    }
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const std::vector<BenchmarkRow>& rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    out.push_back({{"noise", r.noise},
                   {"n", r.n},
                   {"baseline_micro", r.baseline_micro},
                   {"refined_micro", r.refined_micro},
                   {"delta", r.delta},
                   {"ci95", {r.ci95[0], r.ci95[1]}},
                   {"mean_parse_ms", r.mean_parse_ms}});
  return out;
}

inline std::string format_benchmark(const std::vector<BenchmarkRow>& rows) {
  std::string out = "   noise      n  baseline   refined     delta            ci95   parse_ms\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%8.4f %6zu %8.2f%% %8.2f%% %+8.2f  [%+6.2f, %+6.2f] %10.3f\n", r.noise, r.n,
                  100.0 * r.baseline_micro, 100.0 * r.refined_micro, 100.0 * r.delta, 100.0 * r.ci95[0],
                  100.0 * r.ci95[1], r.mean_parse_ms);
    out += buf;
  }
  return out;
}

}  // namespace pigram
