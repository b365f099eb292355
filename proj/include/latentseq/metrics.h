#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentseq/corpus.h"
#include "latentseq/lm.h"
#include "latentseq/model.h"
#include "latentseq/training.h"

namespace latentseq::metrics {

// Corpus-level BLEU: clipped n-gram precisions, geometric mean over orders
// 1..max_n, brevity penalty exp(1 - ref_len/hyp_len) when the hypothesis is
// shorter. A zero corpus-level count at any order gives 0. Returns [0,100].
double corpus_bleu(const std::vector<Sequence>& hyps,
                   const std::vector<Sequence>& refs, int max_n);

double bleu1(const std::vector<Sequence>& hyps,
             const std::vector<Sequence>& refs);

// corpus_bleu(outputs, sources, 4): content preservation vs. the input.
double self_bleu(const std::vector<Sequence>& outputs,
                 const std::vector<Sequence>& sources);

// Multinomial naive Bayes over unigram counts, add-1 smoothing, equal class
// priors; ties go to D1.
class NaiveBayesClassifier {
 public:
  NaiveBayesClassifier(const data::Corpus& train_d1,
                       const data::Corpus& train_d2);
  // 0 for D1, 1 for D2
  int classify(const Sequence& s) const;
  double log_likelihood_ratio(const Sequence& s) const;  // log p(s|D1)/p(s|D2)

 private:
  std::map<int, long> counts_d1_, counts_d2_;
  long total_d1_ = 0, total_d2_ = 0;
  long vocab_types_ = 0;
};

double classify_accuracy(const NaiveBayesClassifier& clf,
                         const std::vector<std::pair<Sequence, int>>& labeled);

// Per-word ELBO over a corpus pair, repeated n_repeats times; sample mode
// redraws latents per repeat, greedy mode is deterministic (std 0).
struct ElboReport {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> repeats;
};
ElboReport elbo_report(const nn::Model& model, const lm::LanguageModel& prior_d1,
                       const lm::LanguageModel& prior_d2,
                       const data::Corpus& corpus_x, const data::Corpus& corpus_y,
                       double lambda, int n_repeats, bool greedy, Rng& rng);

struct EvalReport {
  double accuracy = 0.0;       // NB-accuracy of transferred outputs
  double bleu_ref = -1.0;      // -1 when no references supplied
  double bleu_self = 0.0;
  double ppl_d1 = 0.0;         // outputs transferred into D1, under eval LM D1
  double ppl_d2 = 0.0;
  double ppl_test_d1 = 0.0;    // the test sets themselves, for comparison
  double ppl_test_d2 = 0.0;
  double elbo_per_word_mean = 0.0;
  double elbo_per_word_std = 0.0;
  int n_examples = 0;

  std::string to_key_value() const;
  std::string to_row() const;  // tab-separated, for aggregation
  static const char* row_header();
};

struct EvalInputs {
  const data::Corpus* test_d1 = nullptr;
  const data::Corpus* test_d2 = nullptr;
  const data::Corpus* refs_d1_to_d2 = nullptr;  // parallel refs, optional
  const data::Corpus* refs_d2_to_d1 = nullptr;
  const data::Corpus* nb_train_d1 = nullptr;
  const data::Corpus* nb_train_d2 = nullptr;
  const lm::LanguageModel* eval_lm_d1 = nullptr;
  const lm::LanguageModel* eval_lm_d2 = nullptr;
  int elbo_repeats = 10;
  double lambda = 0.03;
};

EvalReport full_eval(const nn::Model& model, const lm::LanguageModel& prior_d1,
                     const lm::LanguageModel& prior_d2, const EvalInputs& in,
                     Rng& rng);

// Decipherment probe: fraction of cipher types (seen in `ciphertext`) whose
// modal position-aligned transfer output equals the true plain token.
double token_mapping_accuracy(const std::vector<Sequence>& ciphertext,
                              const std::vector<Sequence>& outputs,
                              const data::CipherKey& key, int cipher_begin,
                              int cipher_count);

}  // namespace latentseq::metrics
