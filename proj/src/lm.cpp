#include "latentseq/lm.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "value_net.h"

namespace latentseq::lm {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

LanguageModel::LanguageModel(const LmConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  if (cfg.vocab < Vocab::kReserved + 1)
    throw std::invalid_argument("lm: vocab too small");
  int V = cfg.vocab, E = cfg.embed, H = cfg.hidden;
  store_.add("lm.embed", Shape::mat(V, E));
  store_.add("lm.w", Shape::mat(4 * H, E + H));
  store_.add("lm.b", Shape::vec(4 * H));
  store_.add("lm.out_w", Shape::mat(V, H));
  store_.add("lm.out_b", Shape::vec(V));
  store_.fill_uniform(init_rng, 0.1);
}

LanguageModel::Net LanguageModel::bind(Tape& tape, bool with_grad) {
  if (frozen_) with_grad = false;
  Net net;
  auto bindp = [&](const char* name) {
    nn::ParamStore::Param& p = store_.at(name);
    return tape.leaf_ref(p.shape, p.value.data(),
                         with_grad ? p.grad.data() : nullptr);
  };
  net.embed = bindp("lm.embed");
  net.w = bindp("lm.w");
  net.b = bindp("lm.b");
  net.out_w = bindp("lm.out_w");
  net.out_b = bindp("lm.out_b");
  net.vocab = cfg_.vocab;
  net.embed_dim = cfg_.embed;
  net.hidden = cfg_.hidden;
  return net;
}

LanguageModel::Net LanguageModel::bind(Tape& tape) const {
  return const_cast<LanguageModel*>(this)->bind(tape, false);
}

namespace {

Tensor embed_id(const LanguageModel::Net& net, int id) {
  int ids[1] = {id};
  return ad::row(ad::embedding_lookup(net.embed, ids), 0);
}

struct LmState {
  Tensor h, c;
};

Tensor lm_step(Tape& tape, const LanguageModel::Net& net, LmState& st,
               const Tensor& input) {
  auto [h2, c2] = nn::lstm_step(tape, net.w, net.b, input, st.h, st.c);
  st.h = h2;
  st.c = c2;
  return ad::add(ad::matmul(net.out_w, st.h), net.out_b);
}

}  // namespace

Tensor lm_log_prob(Tape& tape, const LanguageModel& lm,
                   std::span<const int> ids, bool include_eos) {
  LanguageModel::Net net = lm.bind(tape);
  for (int id : ids)
    if (id < 0 || id >= net.vocab)
      throw std::out_of_range("lm_log_prob: id " + std::to_string(id) +
                              " out of range");
  if (ids.empty() && !include_eos)
    throw std::invalid_argument("lm_log_prob: nothing to score");
  LmState st{tape.zeros(Shape::vec(net.hidden)),
             tape.zeros(Shape::vec(net.hidden))};
  Tensor nll;
  int prev = Vocab::kBos;
  size_t steps = ids.size() + (include_eos ? 1 : 0);
  for (size_t t = 0; t < steps; ++t) {
    Tensor logits = lm_step(tape, net, st, embed_id(net, prev));
    int tok = t < ids.size() ? ids[t] : Vocab::kEos;
    Tensor ce = ad::cross_entropy_logits(logits, tok);
    nll = nll.valid() ? ad::add(nll, ce) : ce;
    prev = tok;
  }
  return ad::scale(nll, -1.0);
}

namespace {

namespace vm = latentseq::valuemath;

struct LmValue {
  const double *embed, *w, *b, *out_w, *out_b;
  int V, E, H;
  std::vector<double> h, c, scratch, logits;

  explicit LmValue(const LanguageModel& lm)
      : embed(lm.store().at("lm.embed").value.data()),
        w(lm.store().at("lm.w").value.data()),
        b(lm.store().at("lm.b").value.data()),
        out_w(lm.store().at("lm.out_w").value.data()),
        out_b(lm.store().at("lm.out_b").value.data()),
        V(lm.config().vocab),
        E(lm.config().embed),
        H(lm.config().hidden) {
    h.assign(static_cast<size_t>(H), 0.0);
    c.assign(static_cast<size_t>(H), 0.0);
  }

  const double* step(int prev) {
    vm::lstm_step_value(w, b, embed + static_cast<size_t>(prev) * E, E,
                        h.data(), c.data(), H, scratch);
    logits.resize(static_cast<size_t>(V));
    vm::matvec_into(out_w, h.data(), logits.data(), V, H);
    for (int j = 0; j < V; ++j) logits[static_cast<size_t>(j)] += out_b[j];
    return logits.data();
  }
};

}  // namespace

double lm_log_prob(const LanguageModel& lm, const Sequence& seq,
                   bool include_eos) {
  std::vector<int> ids = seq.content();
  for (int id : ids)
    if (id < 0 || id >= lm.config().vocab)
      throw std::out_of_range("lm_log_prob: id " + std::to_string(id) +
                              " out of range");
  if (ids.empty() && !include_eos)
    throw std::invalid_argument("lm_log_prob: nothing to score");
  LmValue v(lm);
  double lp = 0.0;
  int prev = Vocab::kBos;
  size_t steps = ids.size() + (include_eos ? 1 : 0);
  for (size_t t = 0; t < steps; ++t) {
    const double* logits = v.step(prev);
    int tok = t < ids.size() ? ids[t] : Vocab::kEos;
    lp += vm::log_softmax_at(logits, v.V, tok);
    prev = tok;
  }
  return lp;
}

Tensor lm_log_prob_onehot(Tape& tape, const LanguageModel& lm,
                          std::span<const ad::Tensor> onehots) {
  if (onehots.empty())
    throw std::invalid_argument("lm_log_prob_onehot: empty sequence");
  LanguageModel::Net net = const_cast<LanguageModel&>(lm).bind(tape, false);
  LmState st{tape.zeros(Shape::vec(net.hidden)),
             tape.zeros(Shape::vec(net.hidden))};
  Tensor total;
  Tensor input = embed_id(net, Vocab::kBos);
  bool saw_eos = false;
  for (size_t t = 0; t < onehots.size(); ++t) {
    Tensor logits = lm_step(tape, net, st, input);
    Tensor term = ad::sum(ad::mul(onehots[t], ad::log_softmax(logits)));
    total = total.valid() ? ad::add(total, term) : term;
    auto hv = onehots[t].value();
    int tok = 0;
    for (int i = 1; i < net.vocab; ++i)
      if (hv[static_cast<size_t>(i)] > hv[static_cast<size_t>(tok)]) tok = i;
    if (tok == Vocab::kEos) {
      saw_eos = true;
      break;
    }
    input = ad::matmul(onehots[t], net.embed);
  }
  if (!saw_eos) return total;  // truncated sample: no terminal EOS term
  return total;
}

LmTrainResult pretrain_lm(const data::Corpus& corpus, const LmConfig& cfg,
                          const LmTrainConfig& train_cfg) {
  if (corpus.empty()) throw std::invalid_argument("pretrain_lm: empty corpus");
  Rng init_rng(Rng::mix(train_cfg.seed, 0x1a));
  LmTrainResult result{LanguageModel(cfg, init_rng), {}};
  LanguageModel& lm = result.model;

  nn::Adam adam;
  adam.lr = train_cfg.lr;
  adam.clip_norm = train_cfg.clip_norm;
  Rng data_rng(Rng::mix(train_cfg.seed, 0x2b));

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    double epoch_nll = 0.0;
    long epoch_tokens = 0;
    auto batches = data::batch_iter(corpus, train_cfg.batch_size, data_rng);
    for (const data::Batch& batch : batches) {
      lm.store().zero_grad();
      long tokens = 0;
      for (const Sequence* s : batch.rows) tokens += s->length() + 1;
      for (const Sequence* s : batch.rows) {
        Tape tape;
        LanguageModel::Net net = lm.bind(tape, true);
        LmState st{tape.zeros(Shape::vec(net.hidden)),
                   tape.zeros(Shape::vec(net.hidden))};
        Tensor nll;
        int prev = Vocab::kBos;
        for (size_t t = 0; t <= s->ids.size(); ++t) {
          Tensor logits = lm_step(tape, net, st, embed_id(net, prev));
          int tok = t < s->ids.size() ? s->ids[t] : Vocab::kEos;
          Tensor ce = ad::cross_entropy_logits(logits, tok);
          nll = nll.valid() ? ad::add(nll, ce) : ce;
          prev = tok;
        }
        Tensor loss = ad::scale(nll, 1.0 / static_cast<double>(tokens));
        epoch_nll += nll.scalar();
        tape.backward(loss);
      }
      epoch_tokens += tokens;
      adam.step(lm.store());
    }
    result.nll_per_token_trace.push_back(epoch_nll /
                                         static_cast<double>(epoch_tokens));
  }
  lm.freeze();
  return result;
}

double perplexity(const LanguageModel& lm, const data::Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  double total_nll = 0.0;
  long tokens = 0;
  for (const Sequence& s : corpus.sentences) {
    total_nll -= lm_log_prob(lm, s);
    tokens += s.length() + 1;
  }
  return std::exp(total_nll / static_cast<double>(tokens));
}

Sequence lm_sample(const LanguageModel& lm, Rng& rng, int max_len) {
  if (max_len < 1) throw std::invalid_argument("lm_sample: max_len < 1");
  LmValue v(lm);
  Sequence out;
  int prev = Vocab::kBos;
  for (int t = 0; t < max_len; ++t) {
    const double* logits = v.step(prev);
    std::vector<double> p(logits, logits + v.V);
    double m = *std::max_element(p.begin(), p.end());
    double s = 0.0;
    for (double& x : p) {
      x = std::exp(x - m);
      s += x;
    }
    double u = rng.uniform() * s;
    double acc = 0.0;
    int tok = v.V - 1;
    for (int i = 0; i < v.V; ++i) {
      acc += p[static_cast<size_t>(i)];
      if (u < acc) {
        tok = i;
        break;
      }
    }
    if (tok == Vocab::kEos) {
      out.ids.push_back(Vocab::kEos);
      return out;
    }
    out.ids.push_back(tok);
    prev = tok;
  }
  return out;
}

}  // namespace latentseq::lm
