#pragma once

// Frame-wise evaluation. Rows of the confusion matrix are ground truth,
// columns are predictions.
//
// Absent classes (zero row and zero column) are left out of macro averages.
// A class with an empty column has precision 0, one with an empty row has
// recall 0. macro_f1 is the harmonic mean of macro precision and macro
// recall; the mean of per-class F1 is reported separately as mean_class_f1.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pigram/common.hpp"

namespace pigram {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes, std::vector<std::string> names = {})
      : k_(classes), counts_(classes * classes, 0), names_(std::move(names)) {
    if (names_.empty())
      for (std::size_t c = 0; c < k_; ++c) names_.push_back("PI" + std::to_string(c));
    if (names_.size() != k_) throw Error(detail::concat("confusion matrix: ", k_, " classes but ", names_.size(), " names"));
  }

  std::size_t classes() const { return k_; }
  const std::vector<std::string>& names() const { return names_; }
  std::uint64_t operator()(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1) { counts_[gt * k_ + pred] += n; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  std::uint64_t row_sum(std::size_t gt) const {
    std::uint64_t t = 0;
    for (std::size_t p = 0; p < k_; ++p) t += (*this)(gt, p);
    return t;
  }
  std::uint64_t col_sum(std::size_t pred) const {
    std::uint64_t t = 0;
    for (std::size_t g = 0; g < k_; ++g) t += (*this)(g, pred);
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.k_ != k_) throw Error("confusion matrix: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::string> names_;
};

inline ConfusionMatrix confusion(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                                 std::size_t classes, std::vector<std::string> names = {}) {
  if (pred.size() != gt.size())
    throw Error(detail::concat("confusion: prediction has ", pred.size(), " frames, ground truth has ", gt.size()));
  ConfusionMatrix cm(classes, std::move(names));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= classes || gt[i] >= classes)
      throw Error(detail::concat("confusion: label at frame ", i, " is not below K = ", classes));
    cm.add(gt[i], pred[i]);
  }
  return cm;
}

struct ClassScore {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct EvalReport {
  double micro_pr = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  /// Unweighted mean of per-class F1 over present classes.
  double mean_class_f1 = 0.0;
  std::uint64_t frames = 0;
  std::vector<ClassScore> per_class;
};

namespace detail {
inline double harmonic(double a, double b) { return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0; }
}  // namespace detail

inline EvalReport evaluate(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error("evaluate: confusion matrix is empty");
  EvalReport r;
  r.frames = total;
  std::uint64_t trace = 0;
  std::size_t present = 0;
  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const auto diag = cm(k, k), row = cm.row_sum(k), col = cm.col_sum(k);
    trace += diag;
    ClassScore c;
    c.name = cm.names()[k];
    c.precision = col ? static_cast<double>(diag) / static_cast<double>(col) : 0.0;
    c.recall = row ? static_cast<double>(diag) / static_cast<double>(row) : 0.0;
    c.f1 = detail::harmonic(c.precision, c.recall);
    c.support = row;
    if (row || col) {
      ++present;
      sum_p += c.precision;
      sum_r += c.recall;
      sum_f += c.f1;
    }
    weighted += static_cast<double>(row) * c.f1;
    r.per_class.push_back(std::move(c));
  }
  r.micro_pr = static_cast<double>(trace) / static_cast<double>(total);
  r.macro_precision = sum_p / static_cast<double>(present);
  r.macro_recall = sum_r / static_cast<double>(present);
  r.macro_f1 = detail::harmonic(r.macro_precision, r.macro_recall);
  r.mean_class_f1 = sum_f / static_cast<double>(present);
  r.weighted_f1 = weighted / static_cast<double>(total);
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["micro_pr"] = r.micro_pr;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["weighted_f1"] = r.weighted_f1;
  j["mean_class_f1"] = r.mean_class_f1;
  j["frames"] = r.frames;
  j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class)
    j["per_class"].push_back(
        {{"class", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  return j;
}

/// Aligned text table, values as percentages with two decimals.
inline std::string format_report(const EvalReport& r) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * v);
    return std::string(buf);
  };
  std::size_t width = 5;
  for (const auto& c : r.per_class) width = std::max(width, c.name.size());
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  std::string out = pad("class") + "  precision  recall      f1  support\n";
  for (const auto& c : r.per_class) {
    char support[32];
    std::snprintf(support, sizeof(support), "%9llu", static_cast<unsigned long long>(c.support));
    out += pad(c.name) + "     " + pct(c.precision) + "  " + pct(c.recall) + "  " + pct(c.f1) + support + "\n";
  }
  out += "\n";
  out += "micro P/R        " + pct(r.micro_pr) + "\n";
  out += "macro precision  " + pct(r.macro_precision) + "\n";
  out += "macro recall     " + pct(r.macro_recall) + "\n";
  out += "macro F1         " + pct(r.macro_f1) + "\n";
  out += "weighted F1      " + pct(r.weighted_f1) + "\n";
  out += "frames           " + std::to_string(r.frames) + "\n";
  return out;
}

}  // namespace pigram
