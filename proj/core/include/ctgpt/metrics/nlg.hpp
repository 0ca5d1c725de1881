#pragma once

// Reference-based text metrics over pre-tokenized word lists.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace ctgpt::metrics {

using Tokens = std::vector<std::string>;

/// Sentence BLEU with n = 1..min(max_n, |cand|). Zero precisions are floored
/// at 1 / (2 * number of candidate n-grams). Empty candidate scores 0.
double bleu(const Tokens& cand, const Tokens& ref, std::size_t max_n = 4);

/// Clipped n-gram overlap count between cand and ref.
std::size_t clipped_overlap(const Tokens& cand, const Tokens& ref, std::size_t n);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// ROUGE-L F1.
double rouge_l(const Tokens& cand, const Tokens& ref);

/// Exact-match METEOR: greedy one-to-one unigram alignment,
/// F_mean = 10PR / (R + 9P), fragmentation penalty 0.5 * (chunks / matches)^3.
double meteor_lite(const Tokens& cand, const Tokens& ref);

/// Unique n-grams over total n-grams, pooled across samples.
double distinct_n(const std::vector<Tokens>& samples, std::size_t n);

struct PairScore {
  std::string id;
  std::string candidate;
  std::string reference;
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
};

struct CorpusScores {
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
};

struct EvalReport {
  std::vector<PairScore> pairs;  // sorted by id
  CorpusScores corpus;
  std::map<std::string, std::string> metadata;

  /// Header "id BLEU ROUGE-1 ROUGE-2 ROUGE-L METEOR", one row per pair, then a
  /// final "mean" row.
  std::string to_tsv() const;
  std::string to_json() const;
};

struct Generation {
  std::string id;
  std::string candidate;
  std::string reference;
};

/// Scores every pair (texts are tokenized with lm::split_words). Throws
/// ArgumentError on an empty list.
EvalReport evaluate_pairs(std::vector<Generation> generations);

/// Checked variant: one candidate per reference, matched by position.
EvalReport evaluate_pairs(const std::vector<std::string>& ids, const std::vector<std::string>& references,
                          const std::vector<std::string>& candidates);

}  // namespace ctgpt::metrics
