#include "latentseq/latent.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>

namespace latentseq::latent {

void LogSumExp::add(double x) {
  if (x <= max_term) {
    sum += std::exp(x - max_term);
  } else {
    sum = sum * std::exp(max_term - x) + 1.0;
    max_term = x;
  }
}

void LogSumExp::merge(const LogSumExp& o) {
  if (o.sum == 0.0) return;
  if (sum == 0.0) {
    *this = o;
    return;
  }
  if (o.max_term <= max_term) {
    sum += o.sum * std::exp(o.max_term - max_term);
  } else {
    sum = sum * std::exp(max_term - o.max_term) + o.sum;
    max_term = o.max_term;
  }
}

double LogSumExp::value() const {
  if (sum == 0.0) return -1e300;
  return max_term + std::log(sum);
}

double joint_complete_log_likelihood(const nn::Model& model,
                                     const lm::LanguageModel& prior_d1,
                                     const lm::LanguageModel& prior_d2,
                                     const BitextState& state) {
  if (state.observed_x.size() != state.latent_y.size() ||
      state.observed_y.size() != state.latent_x.size())
    throw std::invalid_argument(
        "joint_complete_log_likelihood: misaligned observed/latent blocks");
  double total = 0.0;
  for (size_t i = 0; i < state.observed_x.size(); ++i) {
    total += nn::decode_logprob_value(model, state.latent_y[i],
                                      state.observed_x[i], nn::Dir::D2toD1);
    total += lm::lm_log_prob(prior_d2, state.latent_y[i]);
  }
  for (size_t j = 0; j < state.observed_y.size(); ++j) {
    total += nn::decode_logprob_value(model, state.latent_x[j],
                                      state.observed_y[j], nn::Dir::D1toD2);
    total += lm::lm_log_prob(prior_d1, state.latent_x[j]);
  }
  return total;
}

std::vector<std::vector<int>> enumerate_latents(std::span<const int> alphabet,
                                                int max_len) {
  if (alphabet.empty())
    throw std::invalid_argument("enumerate_latents: empty alphabet");
  if (max_len < 1) throw std::invalid_argument("enumerate_latents: max_len < 1");
  double budget = 0.0;
  double pw = 1.0;
  for (int l = 1; l <= max_len; ++l) {
    pw *= static_cast<double>(alphabet.size());
    budget += pw;
  }
  if (budget > 1e6)
    throw std::runtime_error(
        "enumeration budget " + std::to_string(static_cast<long>(budget)) +
        " exceeds the 1e6 bound (V=" + std::to_string(alphabet.size()) +
        ", max_len=" + std::to_string(max_len) + ")");

  std::vector<std::vector<int>> out;
  out.reserve(static_cast<size_t>(budget));
  std::vector<int> idx;
  for (int len = 1; len <= max_len; ++len) {
    idx.assign(static_cast<size_t>(len), 0);
    for (;;) {
      std::vector<int> seq(static_cast<size_t>(len));
      for (int i = 0; i < len; ++i)
        seq[static_cast<size_t>(i)] = alphabet[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      out.push_back(std::move(seq));
      int pos = len - 1;
      while (pos >= 0 &&
             ++idx[static_cast<size_t>(pos)] == static_cast<int>(alphabet.size())) {
        idx[static_cast<size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
  }
  return out;
}

namespace {

double joint_term(const nn::Model& model, const lm::LanguageModel& prior,
                  const Sequence& obs, nn::Dir dir, const Sequence& latent) {
  return nn::decode_logprob_value(model, latent, obs, dir) +
         lm::lm_log_prob(prior, latent);
}

}  // namespace

double exact_marginal_log_likelihood(const nn::Model& model,
                                     const lm::LanguageModel& prior,
                                     const Sequence& obs, nn::Dir dir,
                                     std::span<const int> alphabet,
                                     int max_len) {
  LogSumExp lse;
  for (const auto& ids : enumerate_latents(alphabet, max_len)) {
    Sequence latent{ids, static_cast<int>(nn::src_domain(dir))};
    lse.add(joint_term(model, prior, obs, dir, latent));
  }
  return lse.value();
}

LatentPosterior exact_posterior(const nn::Model& model,
                                const lm::LanguageModel& prior,
                                const Sequence& obs, nn::Dir dir,
                                std::span<const int> alphabet, int max_len) {
  LatentPosterior post;
  LogSumExp lse;
  for (const auto& ids : enumerate_latents(alphabet, max_len)) {
    Sequence latent{ids, static_cast<int>(nn::src_domain(dir))};
    double lj = joint_term(model, prior, obs, dir, latent);
    post.latents.push_back(std::move(latent));
    post.log_joint.push_back(lj);
    lse.add(lj);
  }
  post.log_marginal = lse.value();
  post.prob.resize(post.log_joint.size());
  for (size_t i = 0; i < post.log_joint.size(); ++i)
    post.prob[i] = std::exp(post.log_joint[i] - post.log_marginal);
  return post;
}

EnumeratedQ enumerate_q(const nn::Model& model, const Sequence& obs,
                        nn::Dir obs_to_latent, std::span<const int> alphabet,
                        int max_len) {
  EnumeratedQ q;
  LogSumExp lse;
  for (const auto& ids : enumerate_latents(alphabet, max_len)) {
    Sequence latent{ids, static_cast<int>(nn::tgt_domain(obs_to_latent))};
    double lq = nn::decode_logprob_value(model, obs, latent, obs_to_latent);
    q.latents.push_back(std::move(latent));
    q.log_q_raw.push_back(lq);
    lse.add(lq);
  }
  q.log_mass = lse.value();
  q.prob.resize(q.log_q_raw.size());
  for (size_t i = 0; i < q.log_q_raw.size(); ++i)
    q.prob[i] = std::exp(q.log_q_raw[i] - q.log_mass);
  return q;
}

Sequence transfer(const nn::Model& model, const Sequence& input, nn::Dir dir,
                  int max_len) {
  Sequence out = nn::greedy_decode(model, input, dir, max_len, 1);
  out.domain = static_cast<int>(nn::tgt_domain(dir));
  return out;
}

void write_posterior_table(std::ostream& os, const LatentPosterior& post,
                           const Vocab& vocab) {
  std::vector<size_t> order(post.latents.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return post.prob[a] > post.prob[b];
  });
  os << "latent\tlog_joint\tposterior\n";
  for (size_t i : order)
    os << vocab.decode(post.latents[i].content()) << '\t' << std::setprecision(12)
       << post.log_joint[i] << '\t' << post.prob[i] << '\n';
}

}  // namespace latentseq::latent
