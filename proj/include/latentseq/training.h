#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "latentseq/corpus.h"
#include "latentseq/lm.h"
#include "latentseq/model.h"
#include "latentseq/rng.h"
#include "latentseq/tensor.h"

namespace latentseq::train {

enum class Estimator { kStopGradient, kGumbelSt, kReinforce };
enum class Objective { kElbo, kBtNll, kUnmt };

Estimator parse_estimator(const std::string& s);
Objective parse_objective(const std::string& s);
std::string to_string(Estimator e);
std::string to_string(Objective o);

struct TrainConfig {
  double lambda = 0.03;          // KL weight
  int anneal_epochs = 2;         // k of the self-reconstruction decay
  Estimator estimator = Estimator::kStopGradient;
  Objective objective = Objective::kElbo;
  int pool_window = 1;
  double gumbel_temperature = 1.0;
  double noise_drop = 0.0;
  int noise_shuffle = 0;
  bool recon_sample = false;      // sample-based reconstruction latents
  bool share_latent_sample = false;  // reuse the KL sample as recon latent
  bool share_params = true;       // parameter tying across directions
  int embed_dim = 32;
  int hidden_dim = 64;
  double dropout = 0.3;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 5.0;
  uint64_t seed = 0;
  int epochs = 10;
  int batch_size = 32;
  int sort_buffer = 16;

  void validate() const;  // throws std::invalid_argument on bad ranges
};

// Per-batch record of the objective pieces. All sums are raw (not
// per-word); total = recon_x + recon_y - lambda * (kl_x + kl_y).
struct KlPart {
  double neg_entropy = 0.0;  // log q(sample) contribution, estimates -H_q
  double prior_xent = 0.0;   // -log p_D(sample)
  double value() const { return neg_entropy + prior_xent; }
};

struct ElboBreakdown {
  double reconstruction_x = 0.0;
  double reconstruction_y = 0.0;
  KlPart kl_x;
  KlPart kl_y;
  double lambda = 0.0;
  double total = 0.0;
  long tokens = 0;
  double self_recon = 0.0;  // alpha-weighted auxiliary loss, not part of total
};

// alpha = max(0, 1 - step / (k * steps_per_epoch)); k = 0 gives 0 always.
double alpha_schedule(long step, int steps_per_epoch, int k);

// Word drop + bounded local shuffle; every retained token moves at most
// shuffle_k positions, a trailing EOS stays in place.
Sequence noise_fn(const Sequence& seq, double drop_prob, int shuffle_k,
                  Rng& rng);

// H = -sum p ln p with 0 ln 0 = 0; input must sum to 1 (within 1e-6).
double entropy_exact(std::span<const double> probs);

// Single-sample KL estimate via a Gumbel-ST rollout from q:
//   log q(sample | input) - log p_D(sample),
// differentiable through q by both terms. include_entropy_term=false drops
// the log q term from the estimate (the BT+NLL objective).
struct KlSampleResult {
  ad::Tensor kl;
  Sequence sample;
  double log_q_value = 0.0;
  double neg_log_prior_value = 0.0;
};
KlSampleResult kl_single_sample(ad::Tape& tape, nn::Model& model,
                                const lm::LanguageModel& prior,
                                const Sequence& input, nn::Dir dir, Rng& rng,
                                double temperature,
                                bool include_entropy_term = true,
                                int max_len = -1);

// alpha * sum NLL(x | encode(noise(x)), c_domain) over both halves.
ad::Tensor self_reconstruction_loss(ad::Tape& tape, nn::Model& model,
                                    std::span<const Sequence* const> batch_x,
                                    std::span<const Sequence* const> batch_y,
                                    double alpha, const TrainConfig& cfg,
                                    Rng& rng, double* value_out = nullptr);

struct EmaBaseline {
  double value = 0.0;
  bool initialized = false;
  double decay = 0.95;
  void update(double reward) {
    if (!initialized) {
      value = reward;
      initialized = true;
    } else {
      value = decay * value + (1.0 - decay) * reward;
    }
  }
};

// Score-function surrogate -(reward - baseline) * log_q; minimizing it
// ascends E_q[reward] while treating the reward as constant w.r.t. q.
ad::Tensor reinforce_surrogate(const ad::Tensor& log_q, double reward,
                               double baseline);

struct StepLoss {
  ad::Tensor loss;  // minimization target, normalized per word
  ElboBreakdown breakdown;
};

// The negated-ELBO surrogate over one batch pair, with latents produced per
// cfg.estimator and the KL term estimated by kl_single_sample.
StepLoss elbo_step_loss(ad::Tape& tape, nn::Model& model,
                        const lm::LanguageModel& prior_d1,
                        const lm::LanguageModel& prior_d2,
                        std::span<const Sequence* const> batch_x,
                        std::span<const Sequence* const> batch_y,
                        const TrainConfig& cfg, double alpha, Rng& rng,
                        EmaBaseline* baseline = nullptr);

// Dispatch over cfg.objective: elbo, bt_nll (entropy term dropped from the
// KL estimate), or unmt (backtranslation + mandatory denoising loss, no
// prior term).
StepLoss objective_variant_loss(ad::Tape& tape, nn::Model& model,
                                const lm::LanguageModel& prior_d1,
                                const lm::LanguageModel& prior_d2,
                                std::span<const Sequence* const> batch_x,
                                std::span<const Sequence* const> batch_y,
                                const TrainConfig& cfg, double alpha, Rng& rng,
                                EmaBaseline* baseline = nullptr);

// Value-only per-word ELBO estimate over a corpus pair (used for
// validation and reporting). greedy=true is fully deterministic.
struct ElboEstimate {
  double per_word = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  long tokens = 0;
};
ElboEstimate elbo_estimate(const nn::Model& model,
                           const lm::LanguageModel& prior_d1,
                           const lm::LanguageModel& prior_d2,
                           const data::Corpus& corpus_x,
                           const data::Corpus& corpus_y, double lambda,
                           bool greedy, Rng& rng);

struct TrainState {
  int epoch = 0;  // next epoch to run
  long step = 0;
  nn::Adam adam;
  Rng rng;
  EmaBaseline baseline;
  double best_val_elbo = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  nn::ParamStore best_params;
};

struct EpochInfo {
  int epoch;
  double val_elbo_per_word;
  bool improved;
  const TrainState& state;
};
using EpochCallback = std::function<void(const EpochInfo&)>;

struct TrainResult {
  std::vector<std::string> trace_rows;  // tab-separated, one per step
  std::vector<double> val_elbo_per_epoch;
  double best_val_elbo = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  nn::ParamStore best_params;
};

extern const char* const kTraceHeader;

// Epoch loop over interleaved batch pairs from both domains; one optimizer
// update per step with gradient-norm clipping; per-epoch validation ELBO
// with model selection on it. Deterministic given cfg.seed. Pass `state`
// to resume from a checkpointed TrainState (model parameters must already
// be restored by the caller).
TrainResult train(nn::Model& model, const lm::LanguageModel& prior_d1,
                  const lm::LanguageModel& prior_d2,
                  const data::Corpus& train_x, const data::Corpus& train_y,
                  const data::Corpus& val_x, const data::Corpus& val_y,
                  const TrainConfig& cfg, TrainState* state = nullptr,
                  const EpochCallback& callback = {});

}  // namespace latentseq::train
