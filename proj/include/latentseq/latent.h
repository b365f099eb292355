#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "latentseq/lm.h"
#include "latentseq/model.h"
#include "latentseq/sequence.h"

namespace latentseq::latent {

// Observed halves of a partially observed parallel corpus plus the aligned
// latent slots completing it. x-block indices come first, y-block after, so
// the observed and latent index sets are disjoint by construction.
struct BitextState {
  std::vector<Sequence> observed_x;  // domain D1, aligned with latent_y
  std::vector<Sequence> latent_y;    // domain D2
  std::vector<Sequence> observed_y;  // domain D2, aligned with latent_x
  std::vector<Sequence> latent_x;    // domain D1
};

// Enumerated posterior over latent sequences of length 1..max_len.
struct LatentPosterior {
  std::vector<Sequence> latents;
  std::vector<double> log_joint;  // log p(obs | latent) + log prior(latent)
  std::vector<double> prob;       // normalized
  double log_marginal = 0.0;
};

// Streaming log-sum-exp with a running max; merges associatively.
struct LogSumExp {
  double max_term = -1e300;
  double sum = 0.0;
  void add(double x);
  void merge(const LogSumExp& other);
  double value() const;
};

// sum_i [log p(x_i | ybar_i) + log p_D2(ybar_i)]
//   + sum_j [log p(y_j | xbar_j) + log p_D1(xbar_j)]
double joint_complete_log_likelihood(const nn::Model& model,
                                     const lm::LanguageModel& prior_d1,
                                     const lm::LanguageModel& prior_d2,
                                     const BitextState& state);

// All latent sequences drawn from `alphabet` with lengths 1..max_len.
// Throws when the enumeration budget sum_L V^L exceeds 1e6.
std::vector<std::vector<int>> enumerate_latents(std::span<const int> alphabet,
                                                int max_len);

// log sum over enumerable latents of exp(log p(obs|latent) + log prior(latent)).
// `dir` is the latent -> observed transduction direction.
double exact_marginal_log_likelihood(const nn::Model& model,
                                     const lm::LanguageModel& prior,
                                     const Sequence& obs, nn::Dir dir,
                                     std::span<const int> alphabet, int max_len);

LatentPosterior exact_posterior(const nn::Model& model,
                                const lm::LanguageModel& prior,
                                const Sequence& obs, nn::Dir dir,
                                std::span<const int> alphabet, int max_len);

// The transduction distribution q(latent | obs) enumerated over the same
// support and renormalized; entries align with enumerate_latents order.
struct EnumeratedQ {
  std::vector<Sequence> latents;
  std::vector<double> log_q_raw;  // teacher-forced log q, before renorm
  std::vector<double> prob;       // renormalized over the support
  double log_mass = 0.0;          // log sum of raw q over the support
};
EnumeratedQ enumerate_q(const nn::Model& model, const Sequence& obs,
                        nn::Dir obs_to_latent,
                        std::span<const int> alphabet, int max_len);

// Greedy decoding through the inference network for the requested
// direction (the opposite-direction generative decoder under tying).
Sequence transfer(const nn::Model& model, const Sequence& input, nn::Dir dir,
                  int max_len);

// Debug table: latent tokens, log joint, posterior probability.
void write_posterior_table(std::ostream& os, const LatentPosterior& post,
                           const Vocab& vocab);

}  // namespace latentseq::latent
