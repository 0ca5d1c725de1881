#include "ctgpt/metrics/nlg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctgpt/errors.hpp"
#include "ctgpt/lm/vocab.hpp"

namespace ctgpt::metrics {
namespace {

std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (n == 0 || t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++counts[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::size_t clipped_overlap(const Tokens& cand, const Tokens& ref, std::size_t n) {
  const auto c = ngram_counts(cand, n);
  const auto r = ngram_counts(ref, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : c) {
    auto it = r.find(gram);
    if (it != r.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

double bleu(const Tokens& cand, const Tokens& ref, std::size_t max_n) {
  if (max_n == 0) throw ArgumentError("bleu: max_n must be >= 1");
  if (cand.empty()) return 0.0;
  const std::size_t orders = std::min(max_n, cand.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const double denom = static_cast<double>(cand.size() - n + 1);
    double p = static_cast<double>(clipped_overlap(cand, ref, n)) / denom;
    if (p == 0.0) p = 1.0 / (2.0 * denom);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

Prf rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n) {
  if (n == 0) throw ArgumentError("rouge_n: n must be >= 1");
  const double overlap = static_cast<double>(clipped_overlap(cand, ref, n));
  const double nc = cand.size() >= n ? static_cast<double>(cand.size() - n + 1) : 0.0;
  const double nr = ref.size() >= n ? static_cast<double>(ref.size() - n + 1) : 0.0;
  Prf out;
  out.precision = nc > 0.0 ? overlap / nc : 0.0;
  out.recall = nr > 0.0 ? overlap / nr : 0.0;
  out.f1 = f1_of(out.precision, out.recall);
  return out;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(cand, ref));
  return f1_of(l / static_cast<double>(cand.size()), l / static_cast<double>(ref.size()));
}

double meteor_lite(const Tokens& cand, const Tokens& ref) {
  std::vector<bool> used(ref.size(), false);
  std::vector<long> align(cand.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == cand[i]) {
        used[j] = true;
        align[i] = static_cast<long>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (align[i] < 0) continue;
    const bool continues = i > 0 && align[i - 1] >= 0 && align[i] == align[i - 1] + 1;
    if (!continues) ++chunks;
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

double distinct_n(const std::vector<Tokens>& samples, std::size_t n) {
  if (n == 0) throw ArgumentError("distinct_n: n must be >= 1");
  std::set<Tokens> unique;
  std::size_t total = 0;
  for (const auto& s : samples) {
    if (s.size() < n) continue;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      unique.emplace(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

EvalReport evaluate_pairs(std::vector<Generation> generations) {
  if (generations.empty()) throw ArgumentError("evaluate_pairs: no generations");
  std::stable_sort(generations.begin(), generations.end(),
                   [](const Generation& a, const Generation& b) { return a.id < b.id; });
  EvalReport report;
  std::vector<Tokens> cands;
  for (const auto& g : generations) {
    const Tokens c = lm::split_words(g.candidate);
    const Tokens r = lm::split_words(g.reference);
    PairScore s{g.id, g.candidate, g.reference};
    s.bleu = bleu(c, r);
    s.rouge1 = rouge_n(c, r, 1).f1;
    s.rouge2 = rouge_n(c, r, 2).f1;
    s.rouge_l = rouge_l(c, r);
    s.meteor = meteor_lite(c, r);
    report.pairs.push_back(std::move(s));
    cands.push_back(c);
  }
  const double n = static_cast<double>(report.pairs.size());
  auto& m = report.corpus;
  for (const auto& s : report.pairs) {
    m.bleu += s.bleu;
    m.rouge1 += s.rouge1;
    m.rouge2 += s.rouge2;
    m.rouge_l += s.rouge_l;
    m.meteor += s.meteor;
  }
  m.bleu /= n;
  m.rouge1 /= n;
  m.rouge2 /= n;
  m.rouge_l /= n;
  m.meteor /= n;
  m.distinct1 = distinct_n(cands, 1);
  m.distinct2 = distinct_n(cands, 2);
  return report;
}

EvalReport evaluate_pairs(const std::vector<std::string>& ids, const std::vector<std::string>& references,
                          const std::vector<std::string>& candidates) {
  if (ids.size() != references.size() || candidates.size() != references.size()) {
    throw ArgumentError("evaluate_pairs: " + std::to_string(candidates.size()) + " generations for " +
                        std::to_string(references.size()) + " references");
  }
  std::vector<Generation> gens;
  for (std::size_t i = 0; i < ids.size(); ++i) gens.push_back({ids[i], candidates[i], references[i]});
  return evaluate_pairs(std::move(gens));
}

std::string EvalReport::to_tsv() const {
  std::ostringstream os;
  os << "id\tBLEU\tROUGE-1\tROUGE-2\tROUGE-L\tMETEOR\n";
  for (const auto& s : pairs) {
    os << s.id << '\t' << fmt(s.bleu) << '\t' << fmt(s.rouge1) << '\t' << fmt(s.rouge2) << '\t'
       << fmt(s.rouge_l) << '\t' << fmt(s.meteor) << '\n';
  }
  os << "mean\t" << fmt(corpus.bleu) << '\t' << fmt(corpus.rouge1) << '\t' << fmt(corpus.rouge2) << '\t'
     << fmt(corpus.rouge_l) << '\t' << fmt(corpus.meteor) << '\n';
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["metadata"] = metadata;
  j["corpus"] = {{"BLEU", corpus.bleu},         {"ROUGE-1", corpus.rouge1},
                 {"ROUGE-2", corpus.rouge2},    {"ROUGE-L", corpus.rouge_l},
                 {"METEOR", corpus.meteor},     {"distinct-1", corpus.distinct1},
                 {"distinct-2", corpus.distinct2}};
  auto& arr = j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& s : pairs) {
    arr.push_back({{"id", s.id},
                   {"candidate", s.candidate},
                   {"reference", s.reference},
                   {"BLEU", s.bleu},
                   {"ROUGE-1", s.rouge1},
                   {"ROUGE-2", s.rouge2},
                   {"ROUGE-L", s.rouge_l},
                   {"METEOR", s.meteor}});
  }
  return j.dump(2) + "\n";
}

}  // namespace ctgpt::metrics
