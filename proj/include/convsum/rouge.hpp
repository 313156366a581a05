#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "convsum/error.hpp"

namespace convsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static RougeScore from(double p, double r) { return {p, r, p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0}; }
};

/// Clipped n-gram overlap between one candidate and one reference.
template <class T>
RougeScore rouge_n(std::span<const T> candidate, std::span<const T> reference, std::size_t n) {
  require(n >= 1, "rouge_n: n must be >= 1");
  auto grams = [n](std::span<const T> s) {
    std::map<std::vector<T>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[std::vector<T>(s.begin() + i, s.begin() + i + n)];
    return counts;
  };
  const auto c = grams(candidate), r = grams(reference);
  std::size_t match = 0, c_total = 0, r_total = 0;
  for (const auto& [g, k] : c) {
    c_total += k;
    if (auto it = r.find(g); it != r.end()) match += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) r_total += k;
  const double p = c_total ? static_cast<double>(match) / static_cast<double>(c_total) : 0.0;
  const double rec = r_total ? static_cast<double>(match) / static_cast<double>(r_total) : 0.0;
  return RougeScore::from(p, rec);
}

template <class T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <class T>
RougeScore rouge_l(std::span<const T> candidate, std::span<const T> reference) {
  const double l = static_cast<double>(lcs_length(candidate, reference));
  const double p = candidate.empty() ? 0.0 : l / static_cast<double>(candidate.size());
  const double r = reference.empty() ? 0.0 : l / static_cast<double>(reference.size());
  return RougeScore::from(p, r);
}

struct RougeReport {
  RougeScore rouge1, rouge2, rougeL;
  std::size_t documents = 0;
};

template <class T>
RougeReport rouge_all(std::span<const T> candidate, std::span<const T> reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference), 1};
}

/// Accumulates per-document scores in insertion order and reports means.
class RougeAccumulator {
 public:
  void add(const RougeReport& r) {
    acc(sum_.rouge1, r.rouge1);
    acc(sum_.rouge2, r.rouge2);
    acc(sum_.rougeL, r.rougeL);
    ++sum_.documents;
  }
  RougeReport mean() const {
    RougeReport m = sum_;
    if (m.documents == 0) return m;
    const double k = static_cast<double>(m.documents);
    for (RougeScore* s : {&m.rouge1, &m.rouge2, &m.rougeL}) {
      s->precision /= k;
      s->recall /= k;
      s->f1 /= k;
    }
    return m;
  }

 private:
  static void acc(RougeScore& into, const RougeScore& x) {
    into.precision += x.precision;
    into.recall += x.recall;
    into.f1 += x.f1;
  }
  RougeReport sum_;
};

enum class ReportFormat { text, kv };

/// rouge1/rouge2/rougeL x p/r/f1 at four decimals.
inline std::string format_report(const RougeReport& r, ReportFormat fmt) {
  std::string out;
  char buf[160];
  const std::pair<const char*, const RougeScore*> rows[] = {
      {"rouge1", &r.rouge1}, {"rouge2", &r.rouge2}, {"rougeL", &r.rougeL}};
  if (fmt == ReportFormat::kv) {
    std::snprintf(buf, sizeof buf, "documents=%zu\n", r.documents);
    out += buf;
    for (auto [name, s] : rows) {
      std::snprintf(buf, sizeof buf, "%s_p=%.4f\n%s_r=%.4f\n%s_f1=%.4f\n", name, s->precision, name, s->recall, name,
                    s->f1);
      out += buf;
    }
  } else {
    std::snprintf(buf, sizeof buf, "documents: %zu\n%-8s %9s %9s %9s\n", r.documents, "metric", "precision", "recall",
                  "f1");
    out += buf;
    for (auto [name, s] : rows) {
      std::snprintf(buf, sizeof buf, "%-8s %9.4f %9.4f %9.4f\n", name, s->precision, s->recall, s->f1);
      out += buf;
    }
  }
  return out;
}

/// A document as sentences of tokens, with its gold summary likewise.
struct SegmentedDocument {
  std::vector<std::vector<std::string>> source;
  std::vector<std::vector<std::string>> summary;
};

enum class Direction { head, tail };

/// Scores the first (head) or last (tail) n source sentences against the
/// gold summary, n being the summary's sentence count, and averages over
/// the corpus. Documents shorter than n use all their sentences.
inline RougeReport lead_tail_analysis(std::span<const SegmentedDocument> corpus, Direction direction) {
  RougeAccumulator acc;
  for (const auto& doc : corpus) {
    require(!doc.summary.empty(), "lead_tail_analysis: empty gold summary");
    const std::size_t n = std::min(doc.summary.size(), doc.source.size());
    const std::size_t first = direction == Direction::head ? 0 : doc.source.size() - n;
    std::vector<std::string> baseline, gold;
    for (std::size_t s = first; s < first + n; ++s)
      baseline.insert(baseline.end(), doc.source[s].begin(), doc.source[s].end());
    for (const auto& s : doc.summary) gold.insert(gold.end(), s.begin(), s.end());
    acc.add(rouge_all<std::string>(baseline, gold));
  }
  return acc.mean();
}

}  // namespace convsum
