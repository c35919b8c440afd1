#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pigram/common.hpp"
#include "pigram/grammar.hpp"

namespace pigram {

/// A corpus sentence as token names, e.g. {"SIL", "PI0", "PI2", "SIL"}.
using TokenSentence = std::vector<std::string>;

/// A primary intention class: a <verb, target> pair.
struct PiClass {
  std::uint32_t id = 0;
  std::string verb;
  std::string target;
  std::string name;  // corpus token, "PI<id>" by convention
};

/// One frame of a video's annotation. Empty verb or target marks a frame
/// without a primary intention (background or auxiliary action).
struct FrameAnnotation {
  std::uint64_t frame_index = 0;
  std::string verb;
  std::string target;

  bool has_pi() const { return !verb.empty() && !target.empty(); }
};

/// Maps annotated <verb, target> pairs to PI classes, many-to-one.
class ClassMap {
 public:
  ClassMap() = default;

  /// Registers class `id` (dense, in order) under its canonical pair.
  void add_class(std::uint32_t id, std::string verb, std::string target, std::string name = {}) {
    if (id != classes_.size()) throw Error(detail::concat("class ids must be dense; expected ", classes_.size()));
    if (name.empty()) name = "PI" + std::to_string(id);
    for (const auto& c : classes_) {
      if (c.verb == verb && c.target == target) throw Error("duplicate class pair <" + verb + ", " + target + ">");
      if (c.name == name) throw Error("duplicate class name " + name);
    }
    classes_.push_back({id, verb, target, name});
    entries_[{verb, target}] = id;
  }

  /// Routes an additional pair onto an existing class.
  void add_alias(const std::string& verb, const std::string& target, std::uint32_t id) {
    if (id >= classes_.size()) throw Error(detail::concat("alias onto unknown class id ", id));
    entries_[{verb, target}] = id;
  }

  std::optional<std::uint32_t> lookup(const std::string& verb, const std::string& target) const {
    auto it = entries_.find({verb, target});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<PiClass>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }

  std::vector<std::string> class_names() const {
    std::vector<std::string> out;
    for (const auto& c : classes_) out.push_back(c.name);
    return out;
  }

  const std::map<std::pair<std::string, std::string>, std::uint32_t>& entries() const { return entries_; }

 private:
  std::vector<PiClass> classes_;
  std::map<std::pair<std::string, std::string>, std::uint32_t> entries_;
};

/// The six Calot-triangle-dissection classes, with peritoneum/omentum
/// dissection and peritoneum cutting merged into <dissect, fat>.
inline ClassMap cholec_pi_class_map() {
  ClassMap m;
  m.add_class(0, "dissect", "cystic_duct");
  m.add_class(1, "aspirate", "fluid");
  m.add_class(2, "dissect", "gallbladder");
  m.add_class(3, "dissect", "cystic_artery");
  m.add_class(4, "dissect", "cystic_plate");
  m.add_class(5, "dissect", "fat");
  m.add_alias("dissect", "peritoneum", 5);
  m.add_alias("dissect", "omentum", 5);
  m.add_alias("cut", "peritoneum", 5);
  return m;
}

/// Share of frames per class in the annotated dataset, percent.
inline constexpr double kCholecPiFramePercent[6] = {30.25, 2.07, 41.21, 12.05, 11.44, 2.98};

/// Class ids of the frames carrying a PI, in order. Frames without a PI are
/// dropped; an unmapped pair is an error naming the pair and frame.
inline std::vector<std::uint32_t> map_classes(std::span<const FrameAnnotation> frames, const ClassMap& map) {
  std::vector<std::uint32_t> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.has_pi()) continue;
    auto id = map.lookup(f.verb, f.target);
    if (!id)
      throw Error(detail::concat("unmapped pair <", f.verb, ", ", f.target, "> at frame ", f.frame_index));
    out.push_back(*id);
  }
  return out;
}

/// Run-length collapse: one token per maximal run of equal labels.
template <typename T>
std::vector<T> collapse_segments(std::span<const T> frames) {
  std::vector<T> out;
  for (const auto& v : frames)
    if (out.empty() || !(out.back() == v)) out.push_back(v);
  return out;
}

template <typename T>
std::vector<T> collapse_segments(const std::vector<T>& frames) {
  return collapse_segments(std::span<const T>(frames));
}

inline TokenSentence wrap_sil(const TokenSentence& s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] == kSil) throw Error(detail::concat("wrap_sil: sentence already contains SIL at position ", i));
  TokenSentence out;
  out.reserve(s.size() + 2);
  out.emplace_back(kSil);
  out.insert(out.end(), s.begin(), s.end());
  out.emplace_back(kSil);
  return out;
}

/// Removes one leading and one trailing SIL when present.
inline TokenSentence strip_sil(const TokenSentence& s) {
  auto begin = s.begin();
  auto end = s.end();
  if (begin != end && *begin == kSil) ++begin;
  if (begin != end && *(end - 1) == kSil) --end;
  return TokenSentence(begin, end);
}

inline TokenSentence class_tokens(std::span<const std::uint32_t> ids, const std::vector<std::string>& names) {
  TokenSentence out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (id >= names.size()) throw Error(detail::concat("class id ", id, " has no name"));
    out.push_back(names[id]);
  }
  return out;
}

/// Frame annotations of one procedure to a SIL-wrapped corpus sentence.
inline TokenSentence sentence_from_frames(std::span<const FrameAnnotation> frames, const ClassMap& map) {
  auto ids = map_classes(frames, map);
  return wrap_sil(class_tokens(collapse_segments(std::span<const std::uint32_t>(ids)), map.class_names()));
}

// ---------------------------------------------------------------------------
// Corpus text: one sentence per line, whitespace-separated tokens, '#'
// starts a comment, blank lines are skipped.

inline std::vector<TokenSentence> parse_corpus(std::string_view text, const std::set<std::string>* vocabulary = nullptr,
                                               const std::string& origin = "corpus") {
  std::vector<TokenSentence> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(strip_comment(line));
    if (tokens.empty()) continue;
    TokenSentence s;
    for (auto t : tokens) {
      if (vocabulary && !vocabulary->count(std::string(t)) && t != kSil)
        throw Error(detail::concat(origin, " line ", line_no, ": unknown token '", t, "'"));
      s.emplace_back(t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string format_corpus(const std::vector<TokenSentence>& corpus) {
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) throw Error(detail::concat("cannot save empty sentence ", i));
    for (std::size_t k = 0; k < corpus[i].size(); ++k) {
      const auto& tok = corpus[i][k];
      if (tok.empty() || tok.find_first_of(" \t\r\n#") != std::string::npos)
        throw Error(detail::concat("sentence ", i, ": token '", tok, "' cannot be written"));
      if (k) out += ' ';
      out += tok;
    }
    out += '\n';
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary file and rename, so readers never see partial output.
inline void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename into place: " + path);
}

/// Loads a corpus; when `class_names` is given every token must be one of
/// them (or SIL).
inline std::vector<TokenSentence> load_corpus(const std::string& path,
                                              const std::vector<std::string>* class_names = nullptr) {
  auto text = read_text_file(path);
  if (!class_names) return parse_corpus(text, nullptr, path);
  std::set<std::string> vocab(class_names->begin(), class_names->end());
  return parse_corpus(text, &vocab, path);
}

inline void save_corpus(const std::vector<TokenSentence>& corpus, const std::string& path) {
  write_text_file(path, format_corpus(corpus));
}

// ---------------------------------------------------------------------------
// Frame annotations: JSON array of {"frame": int, "verb": str|null,
// "target": str|null}. Null or empty verb/target marks a frame without a PI.

inline std::vector<FrameAnnotation> parse_frame_annotations(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("frame annotations: ") + e.what());
  }
  if (!doc.is_array()) throw Error("frame annotations: top level must be an array");
  std::vector<FrameAnnotation> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    if (!rec.is_object()) throw Error(detail::concat("frame annotations: record ", i, " is not an object"));
    for (const char* key : {"frame", "verb", "target"})
      if (!rec.contains(key)) throw Error(detail::concat("frame annotations: record ", i, " missing field '", key, "'"));
    if (!rec["frame"].is_number_unsigned())
      throw Error(detail::concat("frame annotations: record ", i, " has a non-integer frame"));
    FrameAnnotation f;
    f.frame_index = rec["frame"].get<std::uint64_t>();
    for (auto [key, dst] : {std::pair{"verb", &f.verb}, std::pair{"target", &f.target}}) {
      const auto& v = rec[key];
      if (v.is_null()) continue;
      if (!v.is_string()) throw Error(detail::concat("frame annotations: record ", i, " field '", key, "' not a string"));
      *dst = v.get<std::string>();
    }
    out.push_back(std::move(f));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].frame_index == out[i - 1].frame_index)
      throw Error(detail::concat("frame annotations: duplicate frame ", out[i].frame_index));
  return out;
}

inline std::vector<FrameAnnotation> load_frame_annotations(const std::string& path) {
  auto text = read_text_file(path);
  try {
    return parse_frame_annotations(text);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Class-map CSV: header "verb,target,class_id,class_name", one row per pair.
// The first row of each class id defines the class; later rows are aliases.

inline ClassMap parse_class_map(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  struct Row {
    std::string verb, target, name;
    std::uint32_t id;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (split_ws(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header) {
      if (cells != std::vector<std::string>{"verb", "target", "class_id", "class_name"})
        throw Error("class map: header must be verb,target,class_id,class_name");
      header = true;
      continue;
    }
    if (cells.size() != 4) throw Error(detail::concat("class map line ", line_no, ": expected 4 columns"));
    Row r{cells[0], cells[1], cells[3], 0};
    if (!parse_int(cells[2], r.id)) throw Error(detail::concat("class map line ", line_no, ": bad class_id"));
    rows.push_back(std::move(r));
  }
  std::map<std::uint32_t, const Row*> canonical;
  for (const auto& r : rows) canonical.emplace(r.id, &r);
  ClassMap m;
  for (const auto& [id, row] : canonical) m.add_class(id, row->verb, row->target, row->name);
  for (const auto& r : rows) {
    if (m.classes()[r.id].name != r.name && !r.name.empty())
      throw Error(detail::concat("class map: class ", r.id, " has conflicting names"));
    m.add_alias(r.verb, r.target, r.id);
  }
  return m;
}

inline ClassMap load_class_map(const std::string& path) { return parse_class_map(read_text_file(path)); }

}  // namespace pigram
