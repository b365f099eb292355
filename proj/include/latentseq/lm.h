#pragma once

#include <span>
#include <string>
#include <vector>

#include "latentseq/corpus.h"
#include "latentseq/model.h"
#include "latentseq/rng.h"
#include "latentseq/sequence.h"
#include "latentseq/tensor.h"

namespace latentseq::lm {

struct LmConfig {
  int vocab = 0;
  int embed = 32;
  int hidden = 64;
};

// Single-layer recurrent language model. Priors are pretrained on observed
// in-domain data and frozen before they are attached to the variational
// objective.
class LanguageModel {
 public:
  LanguageModel(const LmConfig& cfg, Rng& init_rng);

  struct Net {
    ad::Tensor embed;         // [V x E]
    ad::Tensor w, b;          // [4H x (E+H)], [4H]
    ad::Tensor out_w, out_b;  // [V x H], [V]
    int vocab = 0, embed_dim = 0, hidden = 0;
  };

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }
  const LmConfig& config() const { return cfg_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  // Frozen models always bind without gradient sinks.
  Net bind(ad::Tape& tape, bool with_grad = false);
  Net bind(ad::Tape& tape) const;

 private:
  LmConfig cfg_;
  nn::ParamStore store_;
  bool frozen_ = false;
};

// Sum over t of log p(token_t | prefix), including the terminal EOS; <= 0.
// include_eos=false scores the prefix only (for truncated samples).
ad::Tensor lm_log_prob(ad::Tape& tape, const LanguageModel& lm,
                       std::span<const int> ids, bool include_eos = true);
double lm_log_prob(const LanguageModel& lm, const Sequence& seq,
                   bool include_eos = true);

// Same scorer driven by relaxed one-hot rows so that gradients can flow
// into the one-hots (the LM parameters themselves stay frozen). The EOS
// term is included only when the final one-hot selects EOS.
ad::Tensor lm_log_prob_onehot(ad::Tape& tape, const LanguageModel& lm,
                              std::span<const ad::Tensor> onehots);

struct LmTrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double lr = 1e-3;
  double clip_norm = 5.0;
  uint64_t seed = 0;
};

struct LmTrainResult {
  LanguageModel model;
  std::vector<double> nll_per_token_trace;  // one entry per epoch
};

// NLL minimization with Adam; result is frozen.
LmTrainResult pretrain_lm(const data::Corpus& corpus, const LmConfig& cfg,
                          const LmTrainConfig& train_cfg);

// exp(total NLL / total predicted tokens); EOS counts as a predicted token.
double perplexity(const LanguageModel& lm, const data::Corpus& corpus);

Sequence lm_sample(const LanguageModel& lm, Rng& rng, int max_len);

}  // namespace latentseq::lm
