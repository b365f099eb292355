#include "latentseq/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "latentseq/latent.h"

namespace latentseq::metrics {

using data::Corpus;

namespace {

// n-gram key: tokens packed into a vector
using Ngram = std::vector<int>;

void count_ngrams(const std::vector<int>& toks, int n,
                  std::map<Ngram, long>& counts) {
  if (static_cast<int>(toks.size()) < n) return;
  for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i)
    ++counts[Ngram(toks.begin() + static_cast<long>(i),
                   toks.begin() + static_cast<long>(i) + n)];
}

}  // namespace

double corpus_bleu(const std::vector<Sequence>& hyps,
                   const std::vector<Sequence>& refs, int max_n) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("corpus_bleu: " + std::to_string(hyps.size()) +
                                " hypotheses vs " + std::to_string(refs.size()) +
                                " references");
  if (hyps.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (max_n < 1 || max_n > 4)
    throw std::invalid_argument("corpus_bleu: max_n must be in 1..4");

  long hyp_len = 0, ref_len = 0;
  std::vector<long> matched(static_cast<size_t>(max_n), 0);
  std::vector<long> total(static_cast<size_t>(max_n), 0);
  for (size_t i = 0; i < hyps.size(); ++i) {
    std::vector<int> h = hyps[i].content();
    std::vector<int> r = refs[i].content();
    hyp_len += static_cast<long>(h.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= max_n; ++n) {
      std::map<Ngram, long> hc, rc;
      count_ngrams(h, n, hc);
      count_ngrams(r, n, rc);
      for (const auto& [g, c] : hc) {
        total[static_cast<size_t>(n - 1)] += c;
        auto it = rc.find(g);
        if (it != rc.end())
          matched[static_cast<size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }

  double log_prec = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    if (matched[static_cast<size_t>(n - 1)] == 0) return 0.0;
    if (total[static_cast<size_t>(n - 1)] == 0) return 0.0;
    log_prec += std::log(static_cast<double>(matched[static_cast<size_t>(n - 1)]) /
                         static_cast<double>(total[static_cast<size_t>(n - 1)]));
  }
  log_prec /= max_n;
  double bp = 1.0;
  if (hyp_len < ref_len && hyp_len > 0)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  if (hyp_len == 0) return 0.0;
  return 100.0 * bp * std::exp(log_prec);
}

double bleu1(const std::vector<Sequence>& hyps,
             const std::vector<Sequence>& refs) {
  return corpus_bleu(hyps, refs, 1);
}

double self_bleu(const std::vector<Sequence>& outputs,
                 const std::vector<Sequence>& sources) {
  return corpus_bleu(outputs, sources, 4);
}

NaiveBayesClassifier::NaiveBayesClassifier(const Corpus& train_d1,
                                           const Corpus& train_d2) {
  if (train_d1.empty() || train_d2.empty())
    throw std::invalid_argument("naive bayes: empty training corpus");
  std::set<int> types;
  for (const Sequence& s : train_d1.sentences)
    for (int t : s.content()) {
      ++counts_d1_[t];
      ++total_d1_;
      types.insert(t);
    }
  for (const Sequence& s : train_d2.sentences)
    for (int t : s.content()) {
      ++counts_d2_[t];
      ++total_d2_;
      types.insert(t);
    }
  vocab_types_ = static_cast<long>(types.size());
}

double NaiveBayesClassifier::log_likelihood_ratio(const Sequence& s) const {
  double llr = 0.0;  // equal class priors contribute nothing
  double denom1 = static_cast<double>(total_d1_ + vocab_types_);
  double denom2 = static_cast<double>(total_d2_ + vocab_types_);
  for (int t : s.content()) {
    auto i1 = counts_d1_.find(t);
    auto i2 = counts_d2_.find(t);
    double c1 = 1.0 + (i1 == counts_d1_.end() ? 0.0 : static_cast<double>(i1->second));
    double c2 = 1.0 + (i2 == counts_d2_.end() ? 0.0 : static_cast<double>(i2->second));
    llr += std::log(c1 / denom1) - std::log(c2 / denom2);
  }
  return llr;
}

int NaiveBayesClassifier::classify(const Sequence& s) const {
  return log_likelihood_ratio(s) >= 0.0 ? 0 : 1;  // tie -> D1
}

double classify_accuracy(const NaiveBayesClassifier& clf,
                         const std::vector<std::pair<Sequence, int>>& labeled) {
  if (labeled.empty())
    throw std::invalid_argument("classify_accuracy: empty corpus");
  long correct = 0;
  for (const auto& [seq, label] : labeled)
    if (clf.classify(seq) == label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

ElboReport elbo_report(const nn::Model& model, const lm::LanguageModel& prior_d1,
                       const lm::LanguageModel& prior_d2, const Corpus& corpus_x,
                       const Corpus& corpus_y, double lambda, int n_repeats,
                       bool greedy, Rng& rng) {
  if (n_repeats < 1) throw std::invalid_argument("elbo_report: n_repeats < 1");
  ElboReport rep;
  for (int r = 0; r < n_repeats; ++r) {
    Rng repeat_rng(rng.next_u64());
    double v = train::elbo_estimate(model, prior_d1, prior_d2, corpus_x,
                                    corpus_y, lambda, greedy, repeat_rng)
                   .per_word;
    rep.repeats.push_back(v);
    rep.mean += v;
  }
  rep.mean /= n_repeats;
  double ss = 0.0;
  for (double v : rep.repeats) ss += (v - rep.mean) * (v - rep.mean);
  rep.stddev = rep.repeats.size() > 1
                   ? std::sqrt(ss / static_cast<double>(rep.repeats.size() - 1))
                   : 0.0;
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_key_value() const {
  std::ostringstream os;
  os << "accuracy=" << fmt(accuracy) << '\n'
     << "bleu_ref=" << fmt(bleu_ref) << '\n'
     << "bleu_self=" << fmt(bleu_self) << '\n'
     << "ppl_d1=" << fmt(ppl_d1) << '\n'
     << "ppl_d2=" << fmt(ppl_d2) << '\n'
     << "ppl_test_d1=" << fmt(ppl_test_d1) << '\n'
     << "ppl_test_d2=" << fmt(ppl_test_d2) << '\n'
     << "elbo_per_word_mean=" << fmt(elbo_per_word_mean) << '\n'
     << "elbo_per_word_std=" << fmt(elbo_per_word_std) << '\n'
     << "n_examples=" << n_examples << '\n';
  return os.str();
}

const char* EvalReport::row_header() {
  return "accuracy\tbleu_ref\tbleu_self\tppl_d1\tppl_d2\tppl_test_d1\t"
         "ppl_test_d2\telbo_per_word_mean\telbo_per_word_std\tn_examples";
}

std::string EvalReport::to_row() const {
  std::ostringstream os;
  os << fmt(accuracy) << '\t' << fmt(bleu_ref) << '\t' << fmt(bleu_self) << '\t'
     << fmt(ppl_d1) << '\t' << fmt(ppl_d2) << '\t' << fmt(ppl_test_d1) << '\t'
     << fmt(ppl_test_d2) << '\t' << fmt(elbo_per_word_mean) << '\t'
     << fmt(elbo_per_word_std) << '\t' << n_examples;
  return os.str();
}

EvalReport full_eval(const nn::Model& model, const lm::LanguageModel& prior_d1,
                     const lm::LanguageModel& prior_d2, const EvalInputs& in,
                     Rng& rng) {
  if (in.test_d1 == nullptr || in.test_d2 == nullptr)
    throw std::invalid_argument("full_eval: missing test corpora");
  if (in.nb_train_d1 == nullptr || in.nb_train_d2 == nullptr)
    throw std::invalid_argument("full_eval: missing classifier training corpora");
  if (in.eval_lm_d1 == nullptr || in.eval_lm_d2 == nullptr)
    throw std::invalid_argument("full_eval: missing external evaluation LMs");

  EvalReport rep;
  auto transfer_all = [&](const Corpus& src, nn::Dir dir) {
    std::vector<Sequence> out;
    out.reserve(src.sentences.size());
    for (const Sequence& s : src.sentences)
      out.push_back(latent::transfer(model, s, dir,
                                     nn::default_max_len(s.length())));
    return out;
  };
  std::vector<Sequence> out_d2 = transfer_all(*in.test_d1, nn::Dir::D1toD2);
  std::vector<Sequence> out_d1 = transfer_all(*in.test_d2, nn::Dir::D2toD1);
  rep.n_examples = static_cast<int>(out_d1.size() + out_d2.size());

  NaiveBayesClassifier clf(*in.nb_train_d1, *in.nb_train_d2);
  long correct = 0;
  for (const Sequence& s : out_d2)
    if (clf.classify(s) == 1) ++correct;
  for (const Sequence& s : out_d1)
    if (clf.classify(s) == 0) ++correct;
  rep.accuracy = static_cast<double>(correct) / rep.n_examples;

  std::vector<Sequence> all_out = out_d2;
  all_out.insert(all_out.end(), out_d1.begin(), out_d1.end());
  std::vector<Sequence> all_src = in.test_d1->sentences;
  all_src.insert(all_src.end(), in.test_d2->sentences.begin(),
                 in.test_d2->sentences.end());
  rep.bleu_self = self_bleu(all_out, all_src);

  if (in.refs_d1_to_d2 != nullptr && in.refs_d2_to_d1 != nullptr) {
    std::vector<Sequence> refs = in.refs_d1_to_d2->sentences;
    refs.insert(refs.end(), in.refs_d2_to_d1->sentences.begin(),
                in.refs_d2_to_d1->sentences.end());
    rep.bleu_ref = corpus_bleu(all_out, refs, 4);
  }

  auto output_corpus = [](const std::vector<Sequence>& seqs, int domain) {
    Corpus c;
    c.domain = domain;
    for (const Sequence& s : seqs) {
      Sequence t;
      t.domain = domain;
      t.ids = s.content();
      if (!t.ids.empty()) c.sentences.push_back(std::move(t));
    }
    return c;
  };
  Corpus oc1 = output_corpus(out_d1, 0);
  Corpus oc2 = output_corpus(out_d2, 1);
  rep.ppl_d1 = oc1.empty() ? -1.0 : lm::perplexity(*in.eval_lm_d1, oc1);
  rep.ppl_d2 = oc2.empty() ? -1.0 : lm::perplexity(*in.eval_lm_d2, oc2);
  rep.ppl_test_d1 = lm::perplexity(*in.eval_lm_d1, *in.test_d1);
  rep.ppl_test_d2 = lm::perplexity(*in.eval_lm_d2, *in.test_d2);

  ElboReport er = elbo_report(model, prior_d1, prior_d2, *in.test_d1,
                              *in.test_d2, in.lambda, in.elbo_repeats,
                              /*greedy=*/false, rng);
  rep.elbo_per_word_mean = er.mean;
  rep.elbo_per_word_std = er.stddev;
  return rep;
}

double token_mapping_accuracy(const std::vector<Sequence>& ciphertext,
                              const std::vector<Sequence>& outputs,
                              const data::CipherKey& key, int cipher_begin,
                              int cipher_count) {
  if (ciphertext.size() != outputs.size())
    throw std::invalid_argument("token_mapping_accuracy: size mismatch");
  data::CipherKey inv = key.inverse();
  // per cipher type, histogram of aligned output tokens
  std::map<int, std::map<int, long>> hist;
  for (size_t i = 0; i < ciphertext.size(); ++i) {
    std::vector<int> c = ciphertext[i].content();
    std::vector<int> o = outputs[i].content();
    size_t n = std::min(c.size(), o.size());
    for (size_t t = 0; t < n; ++t) ++hist[c[t]][o[t]];
  }
  long seen = 0, correct = 0;
  for (int ct = cipher_begin; ct < cipher_begin + cipher_count; ++ct) {
    auto it = hist.find(ct);
    if (it == hist.end()) continue;
    ++seen;
    int modal = -1;
    long best = -1;
    for (const auto& [tok, cnt] : it->second)
      if (cnt > best) {
        best = cnt;
        modal = tok;
      }
    if (modal == inv.map(ct)) ++correct;
  }
  if (seen == 0) return 0.0;
  return static_cast<double>(correct) / static_cast<double>(seen);
}

}  // namespace latentseq::metrics
