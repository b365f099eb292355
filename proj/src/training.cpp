#include "latentseq/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace latentseq::train {

using ad::Tape;
using ad::Tensor;
using data::Corpus;
using lm::LanguageModel;
using nn::Dir;
using nn::Model;

Estimator parse_estimator(const std::string& s) {
  if (s == "stop_gradient" || s == "stop-gradient") return Estimator::kStopGradient;
  if (s == "gumbel" || s == "gumbel_st" || s == "gumbel-st") return Estimator::kGumbelSt;
  if (s == "reinforce") return Estimator::kReinforce;
  throw std::invalid_argument("unknown estimator: " + s);
}

Objective parse_objective(const std::string& s) {
  if (s == "elbo") return Objective::kElbo;
  if (s == "bt_nll" || s == "bt-nll") return Objective::kBtNll;
  if (s == "unmt") return Objective::kUnmt;
  throw std::invalid_argument("unknown objective: " + s);
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::kStopGradient: return "stop_gradient";
    case Estimator::kGumbelSt: return "gumbel";
    case Estimator::kReinforce: return "reinforce";
  }
  return "?";
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kElbo: return "elbo";
    case Objective::kBtNll: return "bt_nll";
    case Objective::kUnmt: return "unmt";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
  if (anneal_epochs < 0)
    throw std::invalid_argument("config: anneal_epochs must be >= 0");
  if (noise_drop < 0.0 || noise_drop >= 1.0)
    throw std::invalid_argument("config: noise_drop must be in [0,1)");
  if (noise_shuffle < 0)
    throw std::invalid_argument("config: noise_shuffle must be >= 0");
  if (!(gumbel_temperature > 0.0))
    throw std::invalid_argument("config: gumbel_temperature must be > 0");
  if (embed_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("config: dimensions must be positive");
  if (pool_window < 1)
    throw std::invalid_argument("config: pool_window must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("config: dropout must be in [0,1)");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("config: batch_size must be >= 1");
  if (objective == Objective::kUnmt && noise_drop == 0.0 && noise_shuffle == 0)
    throw std::invalid_argument(
        "config: the unmt objective requires a noise function "
        "(noise_drop > 0 or noise_shuffle > 0)");
}

double alpha_schedule(long step, int steps_per_epoch, int k) {
  if (k < 0) throw std::invalid_argument("alpha_schedule: k < 0");
  if (k == 0) return 0.0;
  double denom = static_cast<double>(k) * static_cast<double>(steps_per_epoch);
  return std::max(0.0, 1.0 - static_cast<double>(step) / denom);
}

Sequence noise_fn(const Sequence& seq, double drop_prob, int shuffle_k,
                  Rng& rng) {
  if (drop_prob < 0.0 || drop_prob >= 1.0)
    throw std::invalid_argument("noise_fn: drop_prob outside [0,1)");
  if (shuffle_k < 0) throw std::invalid_argument("noise_fn: shuffle_k < 0");
  std::vector<int> content = seq.content();
  bool had_eos = seq.eos_terminated();

  std::vector<int> kept;
  kept.reserve(content.size());
  for (int tok : content)
    if (rng.uniform() >= drop_prob) kept.push_back(tok);
  if (kept.empty() && !content.empty())
    kept.push_back(content[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(content.size())))]);

  if (shuffle_k > 0 && kept.size() > 1) {
    // sort by i + U[0, k+1); guarantees |new - old| <= k
    std::vector<std::pair<double, int>> keyed(kept.size());
    for (size_t i = 0; i < kept.size(); ++i)
      keyed[i] = {static_cast<double>(i) +
                      rng.uniform() * (static_cast<double>(shuffle_k) + 1.0),
                  kept[i]};
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 0; i < kept.size(); ++i) kept[i] = keyed[i].second;
  }

  Sequence out;
  out.domain = seq.domain;
  out.ids = std::move(kept);
  if (had_eos) out.ids.push_back(Vocab::kEos);
  return out;
}

double entropy_exact(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("entropy_exact: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("entropy_exact: unnormalized input (sum=" +
                                std::to_string(total) + ")");
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

KlSampleResult kl_single_sample(Tape& tape, Model& model,
                                const LanguageModel& prior,
                                const Sequence& input, Dir dir, Rng& rng,
                                double temperature, bool include_entropy_term,
                                int max_len) {
  if (max_len < 1) max_len = nn::default_max_len(input.length());
  nn::RelaxedSample rs =
      nn::gumbel_decode(tape, model, input, dir, temperature, rng, max_len);
  Tensor log_prior = lm::lm_log_prob_onehot(tape, prior, rs.onehots);
  Tensor neg_log_prior = ad::scale(log_prior, -1.0);
  KlSampleResult out;
  out.sample = rs.seq;
  out.log_q_value = rs.log_q.scalar();
  out.neg_log_prior_value = neg_log_prior.scalar();
  out.kl = include_entropy_term ? ad::add(rs.log_q, neg_log_prior)
                                : neg_log_prior;
  return out;
}

namespace {
Tensor selfrec_example_fwd(Tape& tape, Model& model, const Sequence& obs,
                           Dir into, const TrainConfig& cfg, Rng& rng);
}

Tensor self_reconstruction_loss(Tape& tape, Model& model,
                                std::span<const Sequence* const> batch_x,
                                std::span<const Sequence* const> batch_y,
                                double alpha, const TrainConfig& cfg, Rng& rng,
                                double* value_out) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("self_reconstruction_loss: alpha outside [0,1]");
  if (value_out) *value_out = 0.0;
  if (alpha == 0.0 || (batch_x.empty() && batch_y.empty()))
    return tape.scalar_const(0.0);

  Tensor nll;
  auto accumulate = [&](std::span<const Sequence* const> batch, Dir into) {
    for (const Sequence* s : batch) {
      Tensor term = selfrec_example_fwd(tape, model, *s, into, cfg, rng);
      nll = nll.valid() ? ad::add(nll, term) : term;
    }
  };
  accumulate(batch_x, Dir::D2toD1);  // autoencode x with domain embedding c_x
  accumulate(batch_y, Dir::D1toD2);
  if (!nll.valid()) return tape.scalar_const(0.0);
  Tensor out = ad::scale(nll, alpha);
  if (value_out) *value_out = out.scalar();
  return out;
}

Tensor reinforce_surrogate(const Tensor& log_q, double reward,
                           double baseline) {
  return ad::scale(log_q, -(reward - baseline));
}

namespace {

struct ExampleTerms {
  Tensor contrib;  // per-example minimization terms, unnormalized
  double recon = 0.0;
  KlPart kl;
  bool has_reward = false;
  double reward = 0.0;
};

// Reconstruction + KL (+ score-function term) for one observed sentence.
ExampleTerms example_terms(Tape& tape, Model& model,
                           const LanguageModel& prior, const Sequence& obs,
                           Dir q_dir, const TrainConfig& cfg, Rng& rng,
                           const EmaBaseline* baseline) {
  ExampleTerms out;
  Dir recon_dir = nn::reverse(q_dir);
  nn::Model::Net net_recon = model.bind(tape, recon_dir, true);
  bool want_kl = cfg.objective != Objective::kUnmt && cfg.lambda > 0.0;
  bool entropy_term = cfg.objective != Objective::kBtNll;
  int max_len = nn::default_max_len(obs.length());

  KlSampleResult ks;
  bool have_kl = false;
  if (want_kl) {
    ks = kl_single_sample(tape, model, prior, obs, q_dir, rng,
                          cfg.gumbel_temperature, entropy_term, max_len);
    have_kl = true;
    out.kl.neg_entropy = entropy_term ? ks.log_q_value : 0.0;
    out.kl.prior_xent = ks.neg_log_prior_value;
    out.contrib = ad::scale(ks.kl, cfg.lambda);
  }

  // reconstruction latent per estimator
  Tensor recon;
  Sequence latent;
  bool shared = cfg.share_latent_sample && have_kl &&
                !ks.sample.content().empty();
  if (shared) {
    latent = ks.sample;
    Tensor enc = nn::encode(tape, net_recon, latent.content());
    recon = nn::decode_logprob(tape, net_recon, enc, obs.content(),
                               /*training=*/true, &rng);
  } else if (cfg.estimator == Estimator::kGumbelSt) {
    nn::RelaxedSample rs = nn::gumbel_decode(
        tape, model, obs, q_dir, cfg.gumbel_temperature, rng, max_len, 1);
    std::span<const Tensor> content(rs.onehots);
    if (rs.seq.eos_terminated()) content = content.first(content.size() - 1);
    Tensor enc = nn::encode_onehot(tape, net_recon, content);
    recon = nn::decode_logprob(tape, net_recon, enc, obs.content(),
                               /*training=*/true, &rng);
    latent = rs.seq;
  } else {
    latent = cfg.estimator == Estimator::kReinforce || cfg.recon_sample
                 ? nn::sample_decode(model, obs, q_dir, 1.0, rng, max_len, 1)
                 : nn::greedy_decode(model, obs, q_dir, max_len, 1);
    Tensor enc = nn::encode(tape, net_recon, latent.content());
    recon = nn::decode_logprob(tape, net_recon, enc, obs.content(),
                               /*training=*/true, &rng);
  }
  out.recon = recon.scalar();
  Tensor neg_recon = ad::scale(recon, -1.0);
  out.contrib = out.contrib.valid() ? ad::add(out.contrib, neg_recon) : neg_recon;

  if (cfg.estimator == Estimator::kReinforce && !shared) {
    if (baseline == nullptr)
      throw std::invalid_argument("reinforce estimator needs a baseline state");
    double kl_value = have_kl ? (entropy_term ? ks.log_q_value : 0.0) +
                                    ks.neg_log_prior_value
                              : 0.0;
    out.reward = out.recon - cfg.lambda * kl_value;
    out.has_reward = true;
    nn::Model::Net net_q = model.bind(tape, q_dir, true);
    Tensor log_q_path = nn::score_sequence(tape, net_q, obs, latent);
    Tensor sf = reinforce_surrogate(log_q_path, out.reward, baseline->value);
    out.contrib = ad::add(out.contrib, sf);
  }
  return out;
}

// Autoencoding term for one sentence, unweighted.
Tensor selfrec_example_fwd(Tape& tape, Model& model, const Sequence& obs,
                           Dir into, const TrainConfig& cfg, Rng& rng) {
  nn::Model::Net net = model.bind(tape, into, true);
  Sequence noisy = noise_fn(obs, cfg.noise_drop, cfg.noise_shuffle, rng);
  Tensor enc = nn::encode(tape, net, noisy.content());
  Tensor lp = nn::decode_logprob(tape, net, enc, obs.content(),
                                 /*training=*/true, &rng);
  return ad::scale(lp, -1.0);
}

struct SideResult {
  Tensor loss;  // sum over examples of the per-example minimization terms
  double recon = 0.0;
  KlPart kl;
  std::vector<double> rewards;  // reinforce only
};

// One observed half of the batch: reconstruction + KL for each sentence.
SideResult side_loss(Tape& tape, Model& model, const LanguageModel& prior,
                     std::span<const Sequence* const> batch, Dir q_dir,
                     const TrainConfig& cfg, Rng& rng, EmaBaseline* baseline) {
  SideResult out;
  for (const Sequence* obs : batch) {
    ExampleTerms ex =
        example_terms(tape, model, prior, *obs, q_dir, cfg, rng, baseline);
    out.recon += ex.recon;
    out.kl.neg_entropy += ex.kl.neg_entropy;
    out.kl.prior_xent += ex.kl.prior_xent;
    if (ex.has_reward) out.rewards.push_back(ex.reward);
    out.loss = out.loss.valid() ? ad::add(out.loss, ex.contrib) : ex.contrib;
  }
  return out;
}

}  // namespace

StepLoss objective_variant_loss(Tape& tape, Model& model,
                                const LanguageModel& prior_d1,
                                const LanguageModel& prior_d2,
                                std::span<const Sequence* const> batch_x,
                                std::span<const Sequence* const> batch_y,
                                const TrainConfig& cfg, double alpha, Rng& rng,
                                EmaBaseline* baseline) {
  double alpha_used = cfg.objective == Objective::kUnmt ? 1.0 : alpha;

  SideResult rx = side_loss(tape, model, prior_d2, batch_x, Dir::D1toD2, cfg,
                            rng, baseline);
  SideResult ry = side_loss(tape, model, prior_d1, batch_y, Dir::D2toD1, cfg,
                            rng, baseline);

  double self_value = 0.0;
  Tensor selfrec = self_reconstruction_loss(tape, model, batch_x, batch_y,
                                            alpha_used, cfg, rng, &self_value);

  long tokens = 0;
  for (const Sequence* s : batch_x) tokens += s->length() + 1;
  for (const Sequence* s : batch_y) tokens += s->length() + 1;
  if (tokens == 0) throw std::invalid_argument("step loss: empty batch pair");

  Tensor total = selfrec;
  if (rx.loss.valid()) total = ad::add(total, rx.loss);
  if (ry.loss.valid()) total = ad::add(total, ry.loss);
  Tensor loss = ad::scale(total, 1.0 / static_cast<double>(tokens));

  if (!rx.rewards.empty() || !ry.rewards.empty()) {
    double sum = std::accumulate(rx.rewards.begin(), rx.rewards.end(), 0.0) +
                 std::accumulate(ry.rewards.begin(), ry.rewards.end(), 0.0);
    baseline->update(sum / static_cast<double>(rx.rewards.size() + ry.rewards.size()));
  }

  StepLoss out;
  out.loss = loss;
  out.breakdown.reconstruction_x = rx.recon;
  out.breakdown.reconstruction_y = ry.recon;
  out.breakdown.kl_x = rx.kl;
  out.breakdown.kl_y = ry.kl;
  out.breakdown.lambda = cfg.lambda;
  out.breakdown.tokens = tokens;
  out.breakdown.self_recon = self_value;
  out.breakdown.total = rx.recon + ry.recon -
                        cfg.lambda * (rx.kl.value() + ry.kl.value());
  return out;
}

StepLoss elbo_step_loss(Tape& tape, Model& model, const LanguageModel& prior_d1,
                        const LanguageModel& prior_d2,
                        std::span<const Sequence* const> batch_x,
                        std::span<const Sequence* const> batch_y,
                        const TrainConfig& cfg, double alpha, Rng& rng,
                        EmaBaseline* baseline) {
  TrainConfig elbo_cfg = cfg;
  elbo_cfg.objective = Objective::kElbo;
  return objective_variant_loss(tape, model, prior_d1, prior_d2, batch_x,
                                batch_y, elbo_cfg, alpha, rng, baseline);
}

ElboEstimate elbo_estimate(const Model& model, const LanguageModel& prior_d1,
                           const LanguageModel& prior_d2,
                           const Corpus& corpus_x, const Corpus& corpus_y,
                           double lambda, bool greedy, Rng& rng) {
  ElboEstimate est;
  auto side = [&](const Corpus& corpus, Dir q_dir, const LanguageModel& prior) {
    for (const Sequence& obs : corpus.sentences) {
      int max_len = nn::default_max_len(obs.length());
      Sequence latent = greedy
                            ? nn::greedy_decode(model, obs, q_dir, max_len, 1)
                            : nn::sample_decode(model, obs, q_dir, 1.0, rng,
                                                max_len, 1);
      est.recon += nn::decode_logprob_value(model, latent, obs,
                                            nn::reverse(q_dir));
      Sequence sample = greedy
                            ? nn::greedy_decode(model, obs, q_dir, max_len, 0)
                            : nn::sample_decode(model, obs, q_dir, 1.0, rng,
                                                max_len, 0);
      double lq = nn::score_sequence_value(model, obs, sample, q_dir);
      double lp = lm::lm_log_prob(prior, sample, sample.eos_terminated());
      est.kl += lq - lp;
      est.tokens += obs.length() + 1;
    }
  };
  side(corpus_x, Dir::D1toD2, prior_d2);
  side(corpus_y, Dir::D2toD1, prior_d1);
  est.per_word = (est.recon - lambda * est.kl) / static_cast<double>(est.tokens);
  return est;
}

const char* const kTraceHeader =
    "step\tepoch\talpha\ttrain_loss\trecon_x\trecon_y\tkl_x\tkl_y\t"
    "neg_entropy_x\tneg_entropy_y\tval_elbo_per_word";

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_finite(const ElboBreakdown& b, double loss_value) {
  if (std::isfinite(loss_value)) return;
  const char* term = "loss";
  if (!std::isfinite(b.reconstruction_x)) term = "reconstruction_x";
  else if (!std::isfinite(b.reconstruction_y)) term = "reconstruction_y";
  else if (!std::isfinite(b.kl_x.value())) term = "kl_x";
  else if (!std::isfinite(b.kl_y.value())) term = "kl_y";
  else if (!std::isfinite(b.self_recon)) term = "self_reconstruction";
  throw std::runtime_error(std::string("train: non-finite ") + term +
                           " encountered; aborting");
}

// One optimizer step over a batch pair. Same terms as
// objective_variant_loss, but each example is built and differentiated on a
// reused tape so the backward sweep stays cache-resident; leaf gradients
// accumulate across examples in the parameter store.
struct FastStepResult {
  double loss_value = 0.0;
  ElboBreakdown breakdown;
};

FastStepResult train_step(Tape& tape, Model& model,
                          const LanguageModel& prior_d1,
                          const LanguageModel& prior_d2,
                          std::span<const Sequence* const> batch_x,
                          std::span<const Sequence* const> batch_y,
                          const TrainConfig& cfg, double alpha, Rng& rng,
                          EmaBaseline& baseline) {
  double alpha_used = cfg.objective == Objective::kUnmt ? 1.0 : alpha;
  long tokens = 0;
  for (const Sequence* s : batch_x) tokens += s->length() + 1;
  for (const Sequence* s : batch_y) tokens += s->length() + 1;
  if (tokens == 0) throw std::invalid_argument("step loss: empty batch pair");
  double inv_tokens = 1.0 / static_cast<double>(tokens);

  FastStepResult out;
  out.breakdown.lambda = cfg.lambda;
  out.breakdown.tokens = tokens;
  std::vector<double> rewards;

  auto run_side = [&](std::span<const Sequence* const> batch, Dir q_dir,
                      const LanguageModel& prior, double& recon_acc,
                      KlPart& kl_acc) {
    Dir selfrec_dir = nn::reverse(q_dir);  // decode back into the observed domain
    for (const Sequence* obs : batch) {
      tape.reset();
      ExampleTerms ex =
          example_terms(tape, model, prior, *obs, q_dir, cfg, rng, &baseline);
      recon_acc += ex.recon;
      kl_acc.neg_entropy += ex.kl.neg_entropy;
      kl_acc.prior_xent += ex.kl.prior_xent;
      if (ex.has_reward) rewards.push_back(ex.reward);
      Tensor contrib = ex.contrib;
      if (alpha_used > 0.0) {
        Tensor sr = selfrec_example_fwd(tape, model, *obs, selfrec_dir, cfg, rng);
        out.breakdown.self_recon += alpha_used * sr.scalar();
        contrib = ad::add(contrib, ad::scale(sr, alpha_used));
      }
      Tensor scaled = ad::scale(contrib, inv_tokens);
      out.loss_value += scaled.scalar();
      tape.backward(scaled);
    }
  };
  run_side(batch_x, Dir::D1toD2, prior_d2, out.breakdown.reconstruction_x,
           out.breakdown.kl_x);
  run_side(batch_y, Dir::D2toD1, prior_d1, out.breakdown.reconstruction_y,
           out.breakdown.kl_y);

  if (!rewards.empty())
    baseline.update(std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                    static_cast<double>(rewards.size()));

  out.breakdown.total =
      out.breakdown.reconstruction_x + out.breakdown.reconstruction_y -
      cfg.lambda * (out.breakdown.kl_x.value() + out.breakdown.kl_y.value());
  return out;
}

}  // namespace

TrainResult train(Model& model, const LanguageModel& prior_d1,
                  const LanguageModel& prior_d2, const Corpus& train_x,
                  const Corpus& train_y, const Corpus& val_x,
                  const Corpus& val_y, const TrainConfig& cfg,
                  TrainState* state, const EpochCallback& callback) {
  cfg.validate();
  if (!prior_d1.frozen() || !prior_d2.frozen())
    throw std::invalid_argument("train: priors must be pretrained and frozen");
  if (train_x.empty() || train_y.empty())
    throw std::invalid_argument("train: empty training corpus");

  TrainState local;
  TrainState& st = state ? *state : local;
  if (state == nullptr || (st.epoch == 0 && st.step == 0)) {
    st.rng = Rng(Rng::mix(cfg.seed, 0x7e57));
    st.adam.lr = cfg.lr;
    st.adam.beta1 = cfg.beta1;
    st.adam.beta2 = cfg.beta2;
    st.adam.clip_norm = cfg.clip_norm;
  }

  auto n_batches = [&](const Corpus& c) {
    return (c.size() + cfg.batch_size - 1) / cfg.batch_size;
  };
  int steps_per_epoch = std::max(n_batches(train_x), n_batches(train_y));

  TrainResult result;
  Tape tape;  // reused across examples and steps
  for (int epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    auto bx = data::batch_iter(train_x, cfg.batch_size, st.rng, cfg.sort_buffer);
    auto by = data::batch_iter(train_y, cfg.batch_size, st.rng, cfg.sort_buffer);
    size_t nsteps = std::max(bx.size(), by.size());
    std::string last_row;
    for (size_t s = 0; s < nsteps; ++s) {
      double alpha = alpha_schedule(st.step, steps_per_epoch, cfg.anneal_epochs);
      std::span<const Sequence* const> rows_x =
          s < bx.size() ? std::span<const Sequence* const>(bx[s].rows)
                        : std::span<const Sequence* const>();
      std::span<const Sequence* const> rows_y =
          s < by.size() ? std::span<const Sequence* const>(by[s].rows)
                        : std::span<const Sequence* const>();

      model.store().zero_grad();
      FastStepResult sl = train_step(tape, model, prior_d1, prior_d2, rows_x,
                                     rows_y, cfg, alpha, st.rng, st.baseline);
      double loss_value = sl.loss_value;
      check_finite(sl.breakdown, loss_value);
      st.adam.step(model.store());
      ++st.step;

      const ElboBreakdown& b = sl.breakdown;
      std::string row = std::to_string(st.step) + "\t" +
                        std::to_string(epoch) + "\t" + fmt(alpha) + "\t" +
                        fmt(loss_value) + "\t" + fmt(b.reconstruction_x) +
                        "\t" + fmt(b.reconstruction_y) + "\t" +
                        fmt(b.kl_x.value()) + "\t" + fmt(b.kl_y.value()) +
                        "\t" + fmt(b.kl_x.neg_entropy) + "\t" +
                        fmt(b.kl_y.neg_entropy);
      if (s + 1 < nsteps)
        result.trace_rows.push_back(row + "\t-");
      else
        last_row = row;
    }

    Rng val_rng(Rng::mix(cfg.seed, 0x9a110000ull + static_cast<uint64_t>(epoch)));
    double val = elbo_estimate(model, prior_d1, prior_d2, val_x, val_y,
                               cfg.lambda, /*greedy=*/false, val_rng)
                     .per_word;
    result.trace_rows.push_back(last_row + "\t" + fmt(val));
    result.val_elbo_per_epoch.push_back(val);

    bool improved = val > st.best_val_elbo;
    if (improved) {
      st.best_val_elbo = val;
      st.best_epoch = epoch;
      st.best_params = model.store();
    }
    st.epoch = epoch + 1;
    if (callback) callback(EpochInfo{epoch, val, improved, st});
  }

  result.best_val_elbo = st.best_val_elbo;
  result.best_epoch = st.best_epoch;
  result.best_params = st.best_params;
  return result;
}

}  // namespace latentseq::train
