#pragma once

// Command-line front end. Exit codes: 0 success, 1 input/IO error,
// 2 no grammatical parse (fallback disabled).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pigram/pigram.hpp"

namespace pigram::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNoParse = 2;

namespace fs = std::filesystem;

/// Frame labels from text (whitespace-separated class ids or class names) or
/// from a parse result JSON (its "frame_labels").
inline std::vector<std::uint32_t> parse_labels(std::string_view text, const std::vector<std::string>& names,
                                               const std::string& origin) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(origin + ": " + e.what());
    }
    if (!doc.contains("frame_labels") || !doc["frame_labels"].is_array())
      throw Error(origin + ": JSON has no frame_labels array");
    std::vector<std::uint32_t> out;
    for (const auto& v : doc["frame_labels"]) {
      if (!v.is_number_unsigned()) throw Error(origin + ": frame_labels must hold non-negative integers");
      out.push_back(v.get<std::uint32_t>());
    }
    return out;
  }
  std::vector<std::uint32_t> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    for (auto tok : split_ws(strip_comment(line))) {
      std::uint32_t id = 0;
      if (!parse_int(tok, id)) {
        auto it = std::find(names.begin(), names.end(), tok);
        if (it == names.end())
          throw Error(detail::concat(origin, " line ", line_no, ": unknown label '", std::string(tok), "'"));
        id = static_cast<std::uint32_t>(it - names.begin());
      }
      out.push_back(id);
    }
  }
  if (out.empty()) throw Error(origin + ": no labels");
  return out;
}

inline std::string format_labels(std::span<const std::uint32_t> labels) {
  std::string out;
  for (auto v : labels) out += std::to_string(v) + "\n";
  return out;
}

inline nlohmann::ordered_json parse_result_json(const ParseResult& r, const std::vector<std::string>& names) {
  nlohmann::ordered_json j;
  j["sentence"] = class_tokens(r.sentence, names);
  j["frame_labels"] = r.frame_labels;
  j["data_prob"] = r.data_prob;
  j["grammar_prob"] = r.grammar_prob;
  j["fallback_used"] = r.fallback_used;
  // -inf is written as null
  j["log_data_prob"] = r.log_data_prob;
  j["log_grammar_prob"] = r.log_grammar_prob;
  j["pruned"] = r.pruned;
  return j;
}

inline std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto parts = split_ws(item);
    if (parts.size() != 1) throw Error("--classes: empty or blank class name in '" + csv + "'");
    out.emplace_back(parts[0]);
  }
  return out;
}

/// Parent directory of an output path must exist before work starts.
inline void check_output_path(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw IoError("output directory does not exist: " + parent.string());
}

/// Grammar from a file in the serialized format, or in rule notation when the
/// file does not start with the "pcfg" header.
inline Pcfg load_any_grammar(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    const auto first = split_ws(text.substr(0, text.find('\n')));
    Pcfg g = !first.empty() && first[0] == "pcfg" ? parse_grammar(text) : parse_rules(text, fs::path(path).stem().string());
    require_valid(g);
    return g;
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

struct Options {
  bool verbose = false;
  std::uint64_t seed = 0;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool json = false;

  // induce
  std::string corpus, config, name = "induced";
  std::optional<double> eta, alpha, bootstrap;
  std::optional<std::size_t> window, max_iterations;

  // parse
  std::string input, grammar, out, classes;
  bool batch = false, no_fallback = false, no_prior = false;
  double prior_weight = 1.0;
  std::size_t max_expansions = GepConfig{}.max_expansions;

  // eval
  std::string pred, gt;

  // synth / bench
  std::string truth;
  std::size_t episodes = 0, train = 10, calibration_episodes = 200;
  double epsilon = 0.5, concentration = 1.0, duration_scale = 2.0, target_baseline = 0.40;
  std::vector<double> noise;
};

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Grammar induction and grammar-constrained relabeling of frame-wise class probabilities", "pigram"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", o_.verbose, "Progress and diagnostics on stderr");

    auto* induce = app.add_subcommand("induce", "Induce a grammar from a corpus and estimate its probabilities");
    induce->add_option("corpus", o_.corpus, "Corpus file, one sentence per line")->required()->check(CLI::ExistingFile);
    induce->add_option("-o,--out", o_.out, "Output grammar file")->required();
    induce->add_option("--config", o_.config, "key = value parameter file")->check(CLI::ExistingFile);
    induce->add_option("--eta", o_.eta, "Pattern drop-ratio threshold");
    induce->add_option("--alpha", o_.alpha, "Pattern significance level");
    induce->add_option("--window", o_.window, "Bootstrap context window");
    induce->add_option("--bootstrap", o_.bootstrap, "Bootstrap context-overlap threshold");
    induce->add_option("--max-iterations", o_.max_iterations, "Iteration cap; 0 memorizes the corpus");
    induce->add_option("--name", o_.name, "Grammar name");

    auto* parse = app.add_subcommand("parse", "Relabel probability matrices with a grammar");
    parse->add_option("input", o_.input, "Matrix file (CSV or .pmat), or a directory with --batch")
        ->required()
        ->check(CLI::ExistingPath);
    parse->add_option("-g,--grammar", o_.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
    parse->add_option("-o,--out", o_.out, "Output JSON file, or output directory with --batch");
    parse->add_flag("--batch", o_.batch, "Parse every .csv/.pmat file in the input directory");
    parse->add_option("--classes", o_.classes, "Comma-separated class names of the matrix columns");
    parse->add_option("--prior-weight", o_.prior_weight, "Exponent on the grammar probability");
    parse->add_flag("--no-prior", o_.no_prior, "Use the grammar only as a constraint");
    parse->add_flag("--no-fallback", o_.no_fallback, "Fail with exit code 2 instead of falling back to argmax");
    parse->add_option("--max-expansions", o_.max_expansions, "Search budget in prefix expansions");
    parse->add_option("--jobs", o_.jobs, "Worker threads for --batch");

    auto* eval = app.add_subcommand("eval", "Frame-wise evaluation of predicted labels");
    eval->add_option("pred", o_.pred, "Predicted labels or parse JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("gt", o_.gt, "Ground-truth labels")->required()->check(CLI::ExistingFile);
    eval->add_option("--classes", o_.classes, "Comma-separated class names");
    eval->add_flag("--json", o_.json, "Emit JSON instead of a table");

    auto* synth = app.add_subcommand("synth", "Write synthetic episodes");
    synth->add_option("-o,--out", o_.out, "Output directory")->required();
    synth->add_option("-g,--grammar", o_.grammar, "Ground-truth grammar (default: built-in reference)")
        ->check(CLI::ExistingFile);
    synth->add_option("-n,--episodes", o_.episodes, "Number of episodes")->default_val(10);
    synth->add_option("--epsilon", o_.epsilon, "Noise mass per frame")->default_val(0.5);
    synth->add_option("--concentration", o_.concentration, "Dirichlet concentration of the noise");
    synth->add_option("--duration-scale", o_.duration_scale, "Mean frames per percent of class share");
    synth->add_option("--seed", o_.seed, "Random seed");

    auto* bench = app.add_subcommand("bench", "Argmax vs grammar-refined accuracy on synthetic episodes");
    bench->add_option("--truth", o_.truth, "Ground-truth grammar (default: built-in reference)")
        ->check(CLI::ExistingFile);
    bench->add_option("-g,--grammar", o_.grammar, "Refinement grammar (default: induced from --train samples)")
        ->check(CLI::ExistingFile);
    bench->add_option("--train", o_.train, "Training sentences for the default refinement grammar");
    bench->add_option("-n,--episodes", o_.episodes, "Episodes per noise level")->default_val(200);
    bench->add_option("--noise", o_.noise, "Noise levels (default: 0 and the calibrated level)")->delimiter(',');
    bench->add_option("--target-baseline", o_.target_baseline, "Argmax accuracy to calibrate the noise for");
    bench->add_option("--calibration-episodes", o_.calibration_episodes, "Episodes used for calibration");
    bench->add_option("--concentration", o_.concentration, "Dirichlet concentration of the noise");
    bench->add_option("--duration-scale", o_.duration_scale, "Mean frames per percent of class share");
    bench->add_option("--prior-weight", o_.prior_weight, "Exponent on the grammar probability");
    bench->add_option("--seed", o_.seed, "Random seed");
    bench->add_option("--jobs", o_.jobs, "Worker threads");
    bench->add_option("-o,--out", o_.out, "Write the report JSON here");
    bench->add_flag("--json", o_.json, "Print JSON instead of a table");

    auto* dot = app.add_subcommand("dot", "Export a grammar as Graphviz DOT");
    dot->add_option("grammar", o_.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
    dot->add_option("-o,--out", o_.out, "Output file (default: stdout)");

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out_, err_);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out_, err_);
    } catch (const CLI::ParseError& e) {
      app.exit(e, out_, err_);
      return kExitError;
    }

    try {
      if (induce->parsed()) return cmd_induce();
      if (parse->parsed()) return cmd_parse();
      if (eval->parsed()) return cmd_eval();
      if (synth->parsed()) return cmd_synth();
      if (bench->parsed()) return cmd_bench();
      if (dot->parsed()) return cmd_dot();
    } catch (const NoParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitNoParse;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitError;
    }
    return kExitError;
  }

 private:
  void log(const std::string& msg) {
    if (o_.verbose) err_ << msg << "\n";
  }

  void emit(const std::string& content) {
    if (o_.out.empty())
      out_ << content;
    else
      write_text_file(o_.out, content);
  }

  int cmd_induce() {
    check_output_path(o_.out);
    AdiosParams params;
    if (!o_.config.empty()) {
      try {
        params = parse_adios_params(read_text_file(o_.config));
      } catch (const IoError&) {
        throw;
      } catch (const Error& e) {
        throw Error(o_.config + ": " + e.what());
      }
    }
    if (o_.eta) params.eta = *o_.eta;
    if (o_.alpha) params.alpha = *o_.alpha;
    if (o_.window) params.context_window = *o_.window;
    if (o_.bootstrap) params.bootstrap_threshold = *o_.bootstrap;
    if (o_.max_iterations) params.max_iterations = *o_.max_iterations;
    params.validate();

    auto corpus = load_corpus(o_.corpus);
    if (corpus.empty()) throw Error(o_.corpus + ": corpus is empty");
    // sentences may omit the SIL delimiters; they are normalized to one on each side
    for (auto& s : corpus) {
      auto body = strip_sil(s);
      if (body.empty()) throw Error(o_.corpus + ": sentence without class tokens");
      s = wrap_sil(body);
    }
    InductionTrace trace;
    Pcfg g = estimate_probs(induce(corpus, params, &trace, o_.name), corpus);
    log(detail::concat("iterations ", trace.iterations, ", patterns ", trace.patterns, ", classes ", trace.classes,
                       ", replacements ", trace.replacements));
    std::vector<Sentence> encoded;
    for (const auto& s : corpus) encoded.push_back(g.encode(s));
    const auto ll = log_likelihood(g, encoded);
    write_text_file(o_.out, serialize(g));
    out_ << "sentences: " << corpus.size() << "\n";
    out_ << "nonterminals: " << g.num_nonterminals() << ", rules: " << g.rules().size() << "\n";
    out_ << "log-likelihood: " << format_double(ll.total) << "\n";
    return kExitOk;
  }

  GepConfig gep_config() const {
    GepConfig cfg;
    cfg.prior_weight = o_.prior_weight;
    cfg.use_grammar_prior = !o_.no_prior;
    cfg.fallback_on_failure = !o_.no_fallback;
    cfg.max_expansions = o_.max_expansions;
    cfg.validate();
    return cfg;
  }

  int cmd_parse() {
    const Pcfg g = load_any_grammar(o_.grammar);
    const auto cfg = gep_config();
    const std::vector<std::string> names = o_.classes.empty() ? std::vector<std::string>{} : split_names(o_.classes);

    if (!o_.batch) {
      if (fs::is_directory(o_.input)) throw Error(o_.input + " is a directory; use --batch");
      if (!o_.out.empty()) check_output_path(o_.out);
      const auto m = load_matrix(o_.input, names);
      const auto r = GepDecoder(g).parse(m, cfg);
      if (r.fallback_used) err_ << "warning: no grammatical sentence found; used argmax labels\n";
      emit(parse_result_json(r, m.class_names()).dump(2) + "\n");
      return kExitOk;
    }

    if (!fs::is_directory(o_.input)) throw IoError("--batch needs an input directory: " + o_.input);
    if (o_.out.empty()) throw Error("--batch needs --out DIR");
    if (fs::exists(o_.out) && !fs::is_directory(o_.out)) throw IoError("output is not a directory: " + o_.out);
    fs::create_directories(o_.out);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o_.input)) {
      const auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".csv" || ext == ".pmat")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("no .csv or .pmat files in " + o_.input);

    std::vector<ProbMatrix> matrices;
    for (const auto& f : files) matrices.push_back(load_matrix(f.string(), names));
    log(detail::concat("parsing ", matrices.size(), " matrices with ", o_.jobs, " jobs"));
    const auto items = refine_batch(matrices, g, cfg, o_.jobs);

    bool no_parse = false, failed = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto target = (fs::path(o_.out) / files[i].stem()).string() + ".json";
      if (!items[i].result) {
        err_ << "error: " << files[i].string() << ": " << items[i].error << "\n";
        (items[i].no_parse ? no_parse : failed) = true;
        continue;
      }
      if (items[i].result->fallback_used) err_ << "warning: " << files[i].string() << ": used argmax labels\n";
      write_text_file(target, parse_result_json(*items[i].result, matrices[i].class_names()).dump(2) + "\n");
    }
    return failed ? kExitError : no_parse ? kExitNoParse : kExitOk;
  }

  int cmd_eval() {
    std::vector<std::string> names = o_.classes.empty() ? std::vector<std::string>{} : split_names(o_.classes);
    const std::vector<std::string> default_names = [] {
      std::vector<std::string> v;
      for (std::size_t k = 0; k < 6; ++k) v.push_back("PI" + std::to_string(k));
      return v;
    }();
    const auto& lookup = names.empty() ? default_names : names;
    const auto pred = parse_labels(read_text_file(o_.pred), lookup, o_.pred);
    const auto gt = parse_labels(read_text_file(o_.gt), lookup, o_.gt);
    if (pred.size() != gt.size())
      throw Error(detail::concat("length mismatch: ", o_.pred, " has ", pred.size(), " frames, ", o_.gt, " has ",
                                 gt.size()));
    if (names.empty()) {
      std::uint32_t k = 1;
      for (auto v : pred) k = std::max(k, v);
      for (auto v : gt) k = std::max(k, v);
      for (std::uint32_t c = 0; c <= k; ++c) names.push_back("PI" + std::to_string(c));
    }
    const auto report = evaluate(confusion(pred, gt, names.size(), names));
    out_ << (o_.json ? to_json(report).dump(2) + "\n" : format_report(report));
    return kExitOk;
  }

  int cmd_synth() {
    if (fs::exists(o_.out) && !fs::is_directory(o_.out)) throw IoError("output is not a directory: " + o_.out);
    const Pcfg g = o_.grammar.empty() ? reference_grammar() : load_any_grammar(o_.grammar);
    const auto dur = cholec_duration_model(o_.duration_scale);
    NoiseModel noise{o_.epsilon, o_.concentration, o_.seed};
    noise.validate();
    fs::create_directories(o_.out);
    std::string sentences;
    for (std::size_t i = 0; i < o_.episodes; ++i) {
      const auto ep = make_episode(g, dur, noise, detail::mix_seed(o_.seed, i));
      char stem[32];
      std::snprintf(stem, sizeof(stem), "episode_%04zu", i);
      const auto base = fs::path(o_.out) / stem;
      write_text_file(base.string() + ".csv", format_matrix_csv(ep.matrix));
      write_text_file(base.string() + ".labels", format_labels(ep.gt_frames));
      sentences += format_corpus({g.decode(ep.source_sentence)});
    }
    write_text_file((fs::path(o_.out) / "sentences.txt").string(), sentences);
    out_ << "wrote " << o_.episodes << " episodes to " << o_.out << "\n";
    return kExitOk;
  }

  int cmd_bench() {
    if (!o_.out.empty()) check_output_path(o_.out);
    const Pcfg truth = o_.truth.empty() ? reference_grammar() : load_any_grammar(o_.truth);
    Pcfg model = truth;
    if (!o_.grammar.empty()) {
      model = load_any_grammar(o_.grammar);
    } else {
      if (o_.train < 1) throw Error("--train must be at least 1");
      std::vector<TokenSentence> corpus;
      for (std::size_t i = 0; i < o_.train; ++i)
        corpus.push_back(truth.decode(sample(truth, detail::mix_seed(o_.seed + 1, i))));
      model = estimate_probs(induce(corpus, {}, nullptr, "bench-model"), corpus);
      log(detail::concat("refinement grammar induced from ", o_.train, " sampled sentences"));
    }
    const auto dur = cholec_duration_model(o_.duration_scale);
    NoiseModel noise{0.0, o_.concentration, o_.seed};
    noise.validate();
    GepConfig cfg;
    cfg.prior_weight = o_.prior_weight;
    cfg.validate();

    auto grid = o_.noise;
    if (grid.empty()) {
      // calibration episodes are disjoint from the benchmark episodes
      const double eps = calibrate_epsilon(truth, dur, noise, o_.target_baseline, o_.calibration_episodes,
                                           (o_.seed << 32) + (std::uint64_t{1} << 31));
      log("calibrated noise epsilon " + format_double(eps));
      grid = {0.0, eps};
    }
    BenchmarkOptions opt;
    opt.episodes = o_.episodes;
    opt.first_seed = o_.seed << 32;
    opt.jobs = o_.jobs;
    opt.bootstrap_seed = o_.seed;
    const auto rows = run_benchmark(truth, model, dur, grid, noise, cfg, opt);
    const auto json = to_json(rows).dump(2) + "\n";
    if (!o_.out.empty()) write_text_file(o_.out, json);
    out_ << (o_.json ? json : format_benchmark(rows));
    return kExitOk;
  }

  int cmd_dot() {
    if (!o_.out.empty()) check_output_path(o_.out);
    emit(to_dot(load_any_grammar(o_.grammar)));
    return kExitOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  Options o_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return App(out, err).run(argc, argv);
}

}  // namespace pigram::cli
