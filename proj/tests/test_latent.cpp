#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "latentseq/latent.h"
#include "latentseq/training.h"
#include "test_util.h"

using namespace latentseq;
using namespace latentseq::latent;
using testutil::content_alphabet;
using testutil::rand_sequence;
using testutil::tiny_lm_config;
using testutil::tiny_model_config;

namespace {

struct Fixture {
  nn::Model model;
  lm::LanguageModel prior;
  std::vector<int> alphabet;

  explicit Fixture(uint64_t seed, int content = 3)
      : model(make_model(seed, content)),
        prior(make_prior(seed + 1, content)),
        alphabet(content_alphabet(content)) {}

  static nn::Model make_model(uint64_t seed, int content) {
    Rng rng(seed);
    nn::Model m(tiny_model_config(content, 3, 4), rng);
    return m;
  }
  static lm::LanguageModel make_prior(uint64_t seed, int content) {
    Rng rng(seed);
    lm::LanguageModel p(tiny_lm_config(content, 3, 4), rng);
    p.freeze();
    return p;
  }
};

double elbo_of_table(const LatentPosterior& post,
                     std::span<const double> q_prob) {
  double elbo = 0.0;
  for (size_t i = 0; i < q_prob.size(); ++i) {
    if (q_prob[i] <= 0.0) continue;
    elbo += q_prob[i] * (post.log_joint[i] - std::log(q_prob[i]));
  }
  return elbo;
}

double kl_to_posterior(const LatentPosterior& post,
                       std::span<const double> q_prob) {
  double kl = 0.0;
  for (size_t i = 0; i < q_prob.size(); ++i) {
    if (q_prob[i] <= 0.0) continue;
    kl += q_prob[i] * (std::log(q_prob[i]) - std::log(post.prob[i]));
  }
  return kl;
}

}  // namespace

TEST_CASE("joint likelihood recomposes from its parts") {
  Fixture fx(1);
  Rng rng(2);
  BitextState state;
  state.observed_x.push_back(rand_sequence(rng, 3, 2, 0));
  state.latent_y.push_back(rand_sequence(rng, 3, 2, 1));

  double joint =
      joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, state);
  ad::Tape tape;
  double cond = nn::decode_logprob(tape, fx.model.bind(tape, nn::Dir::D2toD1),
                                   state.latent_y[0], state.observed_x[0])
                    .scalar();
  double expect = cond + lm::lm_log_prob(fx.prior, state.latent_y[0]);
  CHECK(joint == doctest::Approx(expect).epsilon(1e-12));

  // additivity over disjoint pairs
  BitextState two = state;
  two.observed_y.push_back(rand_sequence(rng, 3, 3, 1));
  two.latent_x.push_back(rand_sequence(rng, 3, 2, 0));
  BitextState only_y;
  only_y.observed_y = two.observed_y;
  only_y.latent_x = two.latent_x;
  double a = joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, state);
  double b = joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, only_y);
  double ab = joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, two);
  CHECK(ab == doctest::Approx(a + b).epsilon(1e-10));

  BitextState bad;
  bad.observed_x.push_back(state.observed_x[0]);
  CHECK_THROWS_AS(
      joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, bad),
      std::invalid_argument);
}

TEST_CASE("enumeration budget is enforced with the bound in the message") {
  std::vector<int> alphabet(40);
  for (int i = 0; i < 40; ++i) alphabet[static_cast<size_t>(i)] = 4 + i;
  CHECK_THROWS_WITH_AS(enumerate_latents(alphabet, 4),
                       doctest::Contains("1e6"), std::runtime_error);
  CHECK(enumerate_latents(std::span<const int>(alphabet).first(2), 3).size() ==
        2 + 4 + 8);
}

TEST_CASE("exact marginal dominates every joint term and is order-independent") {
  Fixture fx(3);
  Rng rng(4);
  Sequence obs = rand_sequence(rng, 3, 2, 0);
  double marginal = exact_marginal_log_likelihood(fx.model, fx.prior, obs,
                                                  nn::Dir::D2toD1, fx.alphabet, 3);
  LatentPosterior post =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 3);
  CHECK(marginal == doctest::Approx(post.log_marginal).epsilon(1e-12));
  for (double lj : post.log_joint) CHECK(marginal >= lj - 1e-12);

  // reversed enumeration order through the same streaming accumulator
  LogSumExp rev;
  for (auto it = post.log_joint.rbegin(); it != post.log_joint.rend(); ++it)
    rev.add(*it);
  CHECK(rev.value() == doctest::Approx(marginal).epsilon(1e-10));

  // associative partition merge
  LogSumExp left, right;
  for (size_t i = 0; i < post.log_joint.size(); ++i)
    (i % 2 ? left : right).add(post.log_joint[i]);
  left.merge(right);
  CHECK(left.value() == doctest::Approx(marginal).epsilon(1e-12));
}

TEST_CASE("exact posterior normalizes and preserves joint ratios") {
  Fixture fx(5);
  Rng rng(6);
  Sequence obs = rand_sequence(rng, 3, 2, 0);
  LatentPosterior post =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 3);
  double total = 0.0;
  for (double p : post.prob) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-10);

  for (size_t i = 1; i < 8; ++i) {
    double ratio = post.prob[i] / post.prob[0];
    double joint_ratio = std::exp(post.log_joint[i] - post.log_joint[0]);
    CHECK(ratio == doctest::Approx(joint_ratio).epsilon(1e-9));
  }
}

TEST_CASE("posterior is invariant to a constant shift of decoder logits") {
  Fixture fx(7);
  Rng rng(8);
  Sequence obs = rand_sequence(rng, 3, 2, 0);
  LatentPosterior before =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 2);
  for (double& v : fx.model.store().at("out.b").value) v += 3.7;
  LatentPosterior after =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 2);
  for (size_t i = 0; i < before.prob.size(); ++i)
    CHECK(before.prob[i] == doctest::Approx(after.prob[i]).epsilon(1e-9));
}

TEST_CASE("log p(obs) = ELBO(q) + KL(q || posterior) for any enumerable q") {
  Fixture fx(9);
  Rng rng(10);
  Sequence obs = rand_sequence(rng, 3, 2, 0);
  LatentPosterior post =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 3);

  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> q(post.prob.size());
    double z = 0.0;
    for (double& v : q) {
      v = 0.05 + rng.uniform();
      z += v;
    }
    for (double& v : q) v /= z;
    double elbo = elbo_of_table(post, q);
    double kl = kl_to_posterior(post, q);
    CHECK(kl >= -1e-12);
    CHECK(post.log_marginal == doctest::Approx(elbo + kl).epsilon(1e-8));
    CHECK(elbo <= post.log_marginal + 1e-9);
  }

  // the model's own q, truncated and renormalized over the same support
  EnumeratedQ q = enumerate_q(fx.model, obs, nn::Dir::D1toD2, fx.alphabet, 3);
  REQUIRE(q.prob.size() == post.prob.size());
  double elbo = elbo_of_table(post, q.prob);
  double kl = kl_to_posterior(post, q.prob);
  CHECK(post.log_marginal == doctest::Approx(elbo + kl).epsilon(1e-8));
  CHECK(elbo <= post.log_marginal + 1e-9);
}

TEST_CASE("lower joint replacement lowers the complete likelihood") {
  Fixture fx(11);
  Rng rng(12);
  Sequence obs = rand_sequence(rng, 3, 2, 0);
  LatentPosterior post =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 2);
  size_t hi = 0, lo = 0;
  for (size_t i = 0; i < post.log_joint.size(); ++i) {
    if (post.log_joint[i] > post.log_joint[hi]) hi = i;
    if (post.log_joint[i] < post.log_joint[lo]) lo = i;
  }
  BitextState good, bad;
  good.observed_x.push_back(obs);
  good.latent_y.push_back(post.latents[hi]);
  bad.observed_x.push_back(obs);
  bad.latent_y.push_back(post.latents[lo]);
  CHECK(joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, good) >
        joint_complete_log_likelihood(fx.model, fx.prior, fx.prior, bad));
}

TEST_CASE("transfer is deterministic and tags the target domain") {
  Fixture fx(13);
  Rng rng(14);
  Sequence input = rand_sequence(rng, 3, 3, 0);
  Sequence a = transfer(fx.model, input, nn::Dir::D1toD2, 8);
  Sequence b = transfer(fx.model, input, nn::Dir::D1toD2, 8);
  CHECK(a.ids == b.ids);
  CHECK(a.domain == static_cast<int>(nn::Domain::D2));
  Sequence c = transfer(fx.model, input, nn::Dir::D2toD1, 8);
  CHECK(c.domain == static_cast<int>(nn::Domain::D1));
}

TEST_CASE("posterior table export is ordered by probability") {
  Fixture fx(15);
  Rng rng(16);
  Sequence obs = rand_sequence(rng, 3, 1, 0);
  LatentPosterior post =
      exact_posterior(fx.model, fx.prior, obs, nn::Dir::D2toD1, fx.alphabet, 2);
  Vocab v = Vocab::with_reserved();
  for (int i = 0; i < 3; ++i) v.add("w" + std::to_string(i));
  std::ostringstream os;
  write_posterior_table(os, post, v);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "latent\tlog_joint\tposterior");
  double prev = 2.0;
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    size_t tab2 = line.rfind('\t');
    double p = std::stod(line.substr(tab2 + 1));
    CHECK(p <= prev + 1e-15);
    prev = p;
    ++rows;
  }
  CHECK(rows == static_cast<int>(post.prob.size()));
}
