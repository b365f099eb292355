#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "latentseq/metrics.h"
#include "test_util.h"

using namespace latentseq;
using namespace latentseq::metrics;
using testutil::rand_corpus;
using testutil::rand_sequence;
using testutil::tiny_lm_config;
using testutil::tiny_model_config;

namespace {

Sequence seq(std::initializer_list<int> ids) {
  Sequence s;
  s.ids.assign(ids.begin(), ids.end());
  return s;
}

}  // namespace

TEST_CASE("corpus_bleu closed forms") {
  std::vector<Sequence> refs = {seq({4, 5, 6, 7}), seq({7, 8, 9, 4, 5})};
  CHECK(corpus_bleu(refs, refs, 4) == doctest::Approx(100.0));

  std::vector<Sequence> disjoint = {seq({10, 11, 12, 13}), seq({13, 12, 11, 10, 13})};
  CHECK(corpus_bleu(disjoint, refs, 4) == 0.0);

  // corpora whose sentences carry no 4-gram at all score 0 at order 4
  std::vector<Sequence> shorts = {seq({4, 5}), seq({6, 7})};
  CHECK(corpus_bleu(shorts, shorts, 4) == 0.0);
  CHECK(corpus_bleu(shorts, shorts, 2) == doctest::Approx(100.0));

  // p1 = 1, BP = exp(1 - 4/3)
  std::vector<Sequence> hyp = {seq({4, 5, 6})};
  std::vector<Sequence> ref = {seq({4, 5, 6, 7})};
  double expected = 100.0 * std::exp(1.0 - 4.0 / 3.0);
  CHECK(corpus_bleu(hyp, ref, 1) == doctest::Approx(expected).epsilon(1e-4));
  CHECK(std::abs(corpus_bleu(hyp, ref, 1) - 71.65) < 0.01);

  CHECK_THROWS_AS(corpus_bleu(hyp, refs, 1), std::invalid_argument);
  CHECK_THROWS_AS(corpus_bleu({}, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(corpus_bleu(hyp, ref, 0), std::invalid_argument);
  CHECK_THROWS_AS(corpus_bleu(hyp, ref, 5), std::invalid_argument);
}

TEST_CASE("corpus_bleu is permutation invariant and non-increasing in n") {
  Rng rng(1);
  std::vector<Sequence> hyps, refs;
  for (int i = 0; i < 12; ++i) {
    Sequence r = rand_sequence(rng, 6, 4 + rng.uniform_int(4));
    Sequence h = r;
    if (rng.uniform() < 0.6 && h.ids.size() > 1)
      h.ids[0] = Vocab::kReserved + rng.uniform_int(6);
    hyps.push_back(h);
    refs.push_back(r);
  }
  double base = corpus_bleu(hyps, refs, 4);
  std::vector<size_t> perm(hyps.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[static_cast<size_t>(rng.uniform_int(static_cast<int>(i) + 1))]);
  std::vector<Sequence> ph, pr;
  for (size_t i : perm) {
    ph.push_back(hyps[i]);
    pr.push_back(refs[i]);
  }
  CHECK(corpus_bleu(ph, pr, 4) == doctest::Approx(base).epsilon(1e-12));

  double prev = 1e9;
  for (int n = 1; n <= 4; ++n) {
    double b = corpus_bleu(hyps, refs, n);
    if (b == 0.0) break;  // zero count at some order
    CHECK(b <= prev + 1e-9);
    prev = b;
  }
}

TEST_CASE("bleu1 is corpus_bleu at order one and ignores word order") {
  Rng rng(2);
  std::vector<Sequence> refs;
  for (int i = 0; i < 8; ++i) refs.push_back(rand_sequence(rng, 8, 5));
  std::vector<Sequence> shuffled = refs;
  for (Sequence& s : shuffled)
    for (size_t i = s.ids.size() - 1; i > 0; --i)
      std::swap(s.ids[i], s.ids[static_cast<size_t>(rng.uniform_int(static_cast<int>(i) + 1))]);
  CHECK(bleu1(refs, refs) == doctest::Approx(100.0));
  CHECK(bleu1(shuffled, refs) == doctest::Approx(100.0));
  CHECK(bleu1(shuffled, refs) == corpus_bleu(shuffled, refs, 1));
}

TEST_CASE("self_bleu is corpus_bleu(outputs, sources, 4) and is directional") {
  Rng rng(3);
  std::vector<Sequence> src;
  for (int i = 0; i < 6; ++i) src.push_back(rand_sequence(rng, 6, 6));
  CHECK(self_bleu(src, src) == doctest::Approx(100.0));

  std::vector<Sequence> outputs;
  for (const Sequence& s : src) {
    Sequence o = s;
    o.ids.pop_back();
    o.ids.pop_back();
    outputs.push_back(o);
  }
  // prefix outputs: penalized by brevity in one role, by clipped precision
  // in the other; the two argument orders genuinely differ
  double a = self_bleu(outputs, src);
  double b = self_bleu(src, outputs);
  CHECK(a != b);
  CHECK(a == doctest::Approx(100.0 * std::exp(1.0 - 6.0 / 4.0)).epsilon(1e-9));
  CHECK(a == corpus_bleu(outputs, src, 4));
}

TEST_CASE("naive Bayes separates disjoint vocabularies perfectly") {
  Rng rng(4);
  data::Corpus d1 = rand_corpus(rng, 5, 60, 2, 8, 0);  // ids 4..8
  data::Corpus d2 = rand_corpus(rng, 5, 60, 2, 8, 1);
  for (Sequence& s : d2.sentences)
    for (int& t : s.ids) t += 5;  // ids 9..13, disjoint
  NaiveBayesClassifier clf(d1, d2);
  std::vector<std::pair<Sequence, int>> held;
  data::Corpus h1 = rand_corpus(rng, 5, 30, 2, 8, 0);
  data::Corpus h2 = rand_corpus(rng, 5, 30, 2, 8, 1);
  for (Sequence& s : h2.sentences)
    for (int& t : s.ids) t += 5;
  for (const Sequence& s : h1.sentences) held.push_back({s, 0});
  for (const Sequence& s : h2.sentences) held.push_back({s, 1});
  CHECK(classify_accuracy(clf, held) == doctest::Approx(1.0));
}

TEST_CASE("naive Bayes on identical distributions sits at chance") {
  auto gen = data::synth_bigram_corpus(5, 6, 400, 3, 8, 0);
  Rng rng(6);
  data::Corpus d1, d2;
  d1.domain = 0;
  d2.domain = 1;
  for (int i = 0; i < 200; ++i) d1.sentences.push_back(gen.corpus.sentences[static_cast<size_t>(i)]);
  for (int i = 200; i < 400; ++i) d2.sentences.push_back(gen.corpus.sentences[static_cast<size_t>(i)]);
  NaiveBayesClassifier clf(d1, d2);

  data::Corpus held = data::sample_from_generator(gen.generator, rng, 400, 3, 8, 0);
  std::vector<std::pair<Sequence, int>> labeled;
  for (int i = 0; i < 400; ++i)
    labeled.push_back({held.sentences[static_cast<size_t>(i)], i % 2});
  double acc = classify_accuracy(clf, labeled);
  double se = std::sqrt(0.25 / 400.0);
  CHECK(std::abs(acc - 0.5) <= 3.0 * se);
}

TEST_CASE("naive Bayes two-token toy follows the hand-computed likelihood ratio") {
  // D1 = {a a a, a b}; D2 = {b b, b a}. Unigram counts with add-1:
  //   D1: a=4, b=1, total=5; D2: a=1, b=3, total=4; 2 types.
  //   p(a|D1) = 5/7,  p(b|D1) = 2/7,  p(a|D2) = 2/6,  p(b|D2) = 4/6.
  data::Corpus d1, d2;
  d1.sentences = {seq({4, 4, 4}), seq({4, 5})};
  d2.sentences = {seq({5, 5}), seq({5, 4})};
  NaiveBayesClassifier clf(d1, d2);

  // single token a: llr = log(5/7) - log(2/6) > 0 -> D1
  CHECK(clf.classify(seq({4})) == 0);
  CHECK(clf.log_likelihood_ratio(seq({4})) ==
        doctest::Approx(std::log(5.0 / 7.0) - std::log(2.0 / 6.0)));
  // single token b: llr = log(2/7) - log(4/6) < 0 -> D2
  CHECK(clf.classify(seq({5})) == 1);
  // "a a b": 2 log(5/7) + log(2/7) vs 2 log(2/6) + log(4/6) -> D1
  double llr = 2 * (std::log(5.0 / 7.0) - std::log(2.0 / 6.0)) +
               (std::log(2.0 / 7.0) - std::log(4.0 / 6.0));
  CHECK(clf.log_likelihood_ratio(seq({4, 4, 5})) == doctest::Approx(llr));
  CHECK(clf.classify(seq({4, 4, 5})) == (llr >= 0 ? 0 : 1));
}

TEST_CASE("naive Bayes training accuracy beats held-out accuracy on average") {
  int wins = 0;
  for (uint64_t s = 0; s < 20; ++s) {
    auto g1 = data::synth_bigram_corpus(100 + s, 6, 80, 3, 7, 0);
    auto g2 = data::synth_bigram_corpus(200 + s, 6, 80, 3, 7, 1);
    NaiveBayesClassifier clf(g1.corpus, g2.corpus);
    std::vector<std::pair<Sequence, int>> train_set, held_set;
    for (const Sequence& q : g1.corpus.sentences) train_set.push_back({q, 0});
    for (const Sequence& q : g2.corpus.sentences) train_set.push_back({q, 1});
    Rng hrng(300 + s);
    data::Corpus h1 = data::sample_from_generator(g1.generator, hrng, 80, 3, 7, 0);
    data::Corpus h2 = data::sample_from_generator(g2.generator, hrng, 80, 3, 7, 1);
    for (const Sequence& q : h1.sentences) held_set.push_back({q, 0});
    for (const Sequence& q : h2.sentences) held_set.push_back({q, 1});
    if (classify_accuracy(clf, train_set) >= classify_accuracy(clf, held_set))
      ++wins;
  }
  CHECK(wins > 10);
}

TEST_CASE("elbo_report: greedy is deterministic with zero std") {
  Rng rng(7);
  nn::Model model(tiny_model_config(4, 3, 4), rng);
  lm::LanguageModel p1(tiny_lm_config(4, 3, 4), rng);
  lm::LanguageModel p2(tiny_lm_config(4, 3, 4), rng);
  p1.freeze();
  p2.freeze();
  data::Corpus cx = rand_corpus(rng, 4, 4, 2, 4, 0);
  data::Corpus cy = rand_corpus(rng, 4, 4, 2, 4, 1);

  Rng r1(9);
  ElboReport rep = elbo_report(model, p1, p2, cx, cy, 0.05, 5, true, r1);
  CHECK(rep.stddev == 0.0);
  for (double v : rep.repeats) CHECK(v == rep.repeats[0]);

  // identical seeds per repeat give identical estimates
  Rng ra(11), rb(11);
  double va = train::elbo_estimate(model, p1, p2, cx, cy, 0.05, false, ra).per_word;
  double vb = train::elbo_estimate(model, p1, p2, cx, cy, 0.05, false, rb).per_word;
  CHECK(va == vb);

  // sample mode with fresh randomness has spread
  Rng r2(13);
  ElboReport sampled = elbo_report(model, p1, p2, cx, cy, 0.05, 6, false, r2);
  CHECK(sampled.stddev > 0.0);
  CHECK_THROWS_AS(elbo_report(model, p1, p2, cx, cy, 0.05, 0, true, r2),
                  std::invalid_argument);
}

TEST_CASE("full_eval report satisfies the field invariants") {
  Rng rng(15);
  nn::Model model(tiny_model_config(6, 3, 4), rng);
  lm::LanguageModel p1(tiny_lm_config(6, 3, 4), rng);
  lm::LanguageModel p2(tiny_lm_config(6, 3, 4), rng);
  p1.freeze();
  p2.freeze();
  data::Corpus train_d1 = rand_corpus(rng, 3, 30, 2, 6, 0);  // ids 4..6
  data::Corpus train_d2 = rand_corpus(rng, 3, 30, 2, 6, 1);
  for (Sequence& s : train_d2.sentences)
    for (int& t : s.ids) t += 3;  // ids 7..9
  data::Corpus test_d1 = rand_corpus(rng, 3, 8, 2, 6, 0);
  data::Corpus test_d2 = rand_corpus(rng, 3, 8, 2, 6, 1);
  for (Sequence& s : test_d2.sentences)
    for (int& t : s.ids) t += 3;

  EvalInputs in;
  in.test_d1 = &test_d1;
  in.test_d2 = &test_d2;
  in.nb_train_d1 = &train_d1;
  in.nb_train_d2 = &train_d2;
  in.eval_lm_d1 = &p1;
  in.eval_lm_d2 = &p2;
  in.elbo_repeats = 2;
  in.lambda = 0.05;
  Rng erng(17);
  EvalReport rep = full_eval(model, p1, p2, in, erng);
  CHECK(rep.accuracy >= 0.0);
  CHECK(rep.accuracy <= 1.0);
  CHECK(rep.bleu_self >= 0.0);
  CHECK(rep.bleu_self <= 100.0);
  CHECK(rep.bleu_ref == -1.0);  // no references supplied
  CHECK(rep.ppl_test_d1 >= 1.0);
  CHECK(rep.ppl_test_d2 >= 1.0);
  CHECK(rep.n_examples == 16);

  std::string kv = rep.to_key_value();
  CHECK(kv.find("accuracy=") != std::string::npos);
  CHECK(kv.find("elbo_per_word_mean=") != std::string::npos);
  std::string row = rep.to_row();
  CHECK(std::count(row.begin(), row.end(), '\t') == 9);
}

TEST_CASE("token mapping accuracy: true decipherment scores 1, garbage scores low") {
  Rng rng(19);
  const int content = 6;
  int vocab_size = Vocab::kReserved + 2 * content;
  int cipher_begin = Vocab::kReserved + content;
  data::CipherKey key = data::make_cipher_key(rng, vocab_size, Vocab::kReserved,
                                              cipher_begin, content);
  data::Corpus plain = rand_corpus(rng, content, 40, 3, 8, 0);
  data::Corpus ciphered = data::apply_cipher(plain, key, 1);

  // perfect decipherment: outputs are the true plaintext
  CHECK(token_mapping_accuracy(ciphered.sentences, plain.sentences, key,
                               cipher_begin, content) == doctest::Approx(1.0));

  // constant outputs map every cipher type to one token: at most 1/content
  std::vector<Sequence> constant;
  for (const Sequence& s : ciphered.sentences) {
    Sequence o = s;
    for (int& t : o.ids) t = Vocab::kReserved;
    constant.push_back(o);
  }
  CHECK(token_mapping_accuracy(ciphered.sentences, constant, key, cipher_begin,
                               content) <= 1.0 / content + 1e-9);
}
