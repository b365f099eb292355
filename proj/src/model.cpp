#include "latentseq/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "value_net.h"

namespace latentseq::nn {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

ParamStore::Param& ParamStore::add(const std::string& name, const Shape& shape) {
  if (has(name)) throw std::invalid_argument("param store: duplicate " + name);
  Param p;
  p.name = name;
  p.shape = shape;
  size_t n = static_cast<size_t>(shape.numel());
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.adam_m.assign(n, 0.0);
  p.adam_v.assign(n, 0.0);
  params_.push_back(std::move(p));
  return params_.back();
}

ParamStore::Param& ParamStore::at(const std::string& name) {
  for (Param& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("param store: no parameter named " + name);
}

const ParamStore::Param& ParamStore::at(const std::string& name) const {
  for (const Param& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("param store: no parameter named " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const Param& p : params_)
    if (p.name == name) return true;
  return false;
}

void ParamStore::zero_grad() {
  for (Param& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

double ParamStore::grad_sq_norm() const {
  double s = 0.0;
  for (const Param& p : params_)
    for (double g : p.grad) s += g * g;
  return s;
}

void ParamStore::scale_grads(double s) {
  for (Param& p : params_)
    for (double& g : p.grad) g *= s;
}

void ParamStore::fill_uniform(Rng& rng, double scale) {
  for (Param& p : params_)
    for (double& v : p.value) v = rng.uniform(-scale, scale);
}

uint64_t ParamStore::value_checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Param& p : params_) {
    for (double v : p.value) {
      uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

void Adam::step(ParamStore& store) {
  double norm = std::sqrt(store.grad_sq_norm());
  if (clip_norm > 0.0 && norm > clip_norm) store.scale_grads(clip_norm / norm);
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (ParamStore::Param& p : store.all()) {
    for (size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      p.adam_m[i] = beta1 * p.adam_m[i] + (1.0 - beta1) * g;
      p.adam_v[i] = beta2 * p.adam_v[i] + (1.0 - beta2) * g * g;
      double mhat = p.adam_m[i] / bc1;
      double vhat = p.adam_v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::string Model::pname(Dir dir, const std::string& base) const {
  if (cfg_.tied) return base;
  return (tgt_domain(dir) == Domain::D1 ? "s0." : "s1.") + base;
}

Model::Model(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  if (cfg.vocab < Vocab::kReserved + 1)
    throw std::invalid_argument("model: vocab too small");
  int V = cfg.vocab, E = cfg.embed, H = cfg.hidden;
  auto add_stack = [&](const std::string& prefix) {
    store_.add(prefix + "embed", Shape::mat(V, E));
    store_.add(prefix + "enc.w", Shape::mat(4 * H, E + H));
    store_.add(prefix + "enc.b", Shape::vec(4 * H));
    store_.add(prefix + "dec.w", Shape::mat(4 * H, 2 * E + H));
    store_.add(prefix + "dec.b", Shape::vec(4 * H));
    store_.add(prefix + "init.w", Shape::mat(H, H));
    store_.add(prefix + "init.b", Shape::vec(H));
    store_.add(prefix + "att.w", Shape::mat(H, H));
    store_.add(prefix + "out.w", Shape::mat(V, 2 * H));
    store_.add(prefix + "out.b", Shape::vec(V));
  };
  if (cfg.tied) {
    add_stack("");
    store_.add("dom.d1", Shape::vec(E));
    store_.add("dom.d2", Shape::vec(E));
  } else {
    add_stack("s0.");
    store_.add("s0.dom", Shape::vec(E));
    add_stack("s1.");
    store_.add("s1.dom", Shape::vec(E));
  }
  store_.fill_uniform(init_rng, 0.1);
}

std::vector<std::string> Model::param_names(Dir dir) const {
  std::vector<std::string> names;
  const char* bases[] = {"embed", "enc.w", "enc.b", "dec.w", "dec.b",
                         "init.w", "init.b", "att.w", "out.w", "out.b"};
  for (const char* b : bases) names.push_back(pname(dir, b));
  if (cfg_.tied)
    names.push_back(tgt_domain(dir) == Domain::D1 ? "dom.d1" : "dom.d2");
  else
    names.push_back(pname(dir, "dom"));
  return names;
}

Model::Net Model::bind(Tape& tape, Dir dir, bool with_grad) {
  Net net;
  auto bindp = [&](const std::string& base) {
    ParamStore::Param& p = store_.at(pname(dir, base));
    return tape.leaf_ref(p.shape, p.value.data(),
                         with_grad ? p.grad.data() : nullptr);
  };
  net.embed = bindp("embed");
  net.enc_w = bindp("enc.w");
  net.enc_b = bindp("enc.b");
  net.dec_w = bindp("dec.w");
  net.dec_b = bindp("dec.b");
  net.init_w = bindp("init.w");
  net.init_b = bindp("init.b");
  net.att_w = bindp("att.w");
  net.out_w = bindp("out.w");
  net.out_b = bindp("out.b");
  std::string dom_name =
      cfg_.tied ? (tgt_domain(dir) == Domain::D1 ? "dom.d1" : "dom.d2")
                : pname(dir, "dom");
  ParamStore::Param& dp = store_.at(dom_name);
  net.dom = tape.leaf_ref(dp.shape, dp.value.data(),
                          with_grad ? dp.grad.data() : nullptr);
  net.vocab = cfg_.vocab;
  net.embed_dim = cfg_.embed;
  net.hidden = cfg_.hidden;
  net.pool_window = cfg_.pool_window;
  net.dropout = cfg_.dropout;
  return net;
}

Model::Net Model::bind(Tape& tape, Dir dir) const {
  return const_cast<Model*>(this)->bind(tape, dir, false);
}

std::pair<Tensor, Tensor> lstm_step(Tape& tape, const Tensor& w,
                                    const Tensor& b, const Tensor& input,
                                    const Tensor& h, const Tensor& c) {
  (void)tape;
  int hidden = h.shape().d[0];
  Tensor gates = ad::add(ad::matmul(w, ad::concat(input, h)), b);
  Tensor hc = ad::lstm_cell(gates, c);
  return {ad::slice(hc, 0, hidden), ad::slice(hc, hidden, hidden)};
}

Tensor encode(Tape& tape, const Model::Net& net, std::span<const int> ids) {
  if (ids.empty()) throw std::invalid_argument("encode: empty sequence");
  Tensor embs = ad::embedding_lookup(net.embed, ids);
  Tensor h = tape.zeros(Shape::vec(net.hidden));
  Tensor c = tape.zeros(Shape::vec(net.hidden));
  std::vector<Tensor> states;
  states.reserve(ids.size());
  for (size_t t = 0; t < ids.size(); ++t) {
    auto [h2, c2] = lstm_step(tape, net.enc_w, net.enc_b,
                              ad::row(embs, static_cast<int>(t)), h, c);
    h = h2;
    c = c2;
    states.push_back(h);
  }
  return ad::stack_rows(states);
}

Tensor encode_onehot(Tape& tape, const Model::Net& net,
                     std::span<const Tensor> onehots) {
  if (onehots.empty()) throw std::invalid_argument("encode: empty sequence");
  Tensor h = tape.zeros(Shape::vec(net.hidden));
  Tensor c = tape.zeros(Shape::vec(net.hidden));
  std::vector<Tensor> states;
  states.reserve(onehots.size());
  for (const Tensor& oh : onehots) {
    Tensor x = ad::matmul(oh, net.embed);
    auto [h2, c2] = lstm_step(tape, net.enc_w, net.enc_b, x, h, c);
    h = h2;
    c = c2;
    states.push_back(h);
  }
  return ad::stack_rows(states);
}

Attention attention_context(Tape& tape, const Model::Net& net,
                            const Tensor& query, const Tensor& pooled) {
  (void)tape;
  Tensor scores = ad::matmul(pooled, ad::matmul(net.att_w, query));
  Tensor weights = ad::softmax(scores);
  Tensor context = ad::matmul(weights, pooled);
  return {context, weights};
}

namespace {

struct DecoderState {
  Tensor pooled;
  Tensor h, c;
};

DecoderState decoder_init(Tape& tape, const Model::Net& net,
                          const Tensor& enc_states) {
  DecoderState st;
  st.pooled = ad::max_pool_time(enc_states, net.pool_window);
  Tensor last = ad::row(enc_states, enc_states.shape().d[0] - 1);
  st.h = ad::tanh(ad::add(ad::matmul(net.init_w, last), net.init_b));
  st.c = tape.zeros(Shape::vec(net.hidden));
  return st;
}

// One decoder step from an already-embedded input token; returns logits.
Tensor decoder_step(Tape& tape, const Model::Net& net, DecoderState& st,
                    const Tensor& tok_embed, bool training, Rng* dropout_rng) {
  Tensor input = ad::concat(tok_embed, net.dom);
  auto [h2, c2] = lstm_step(tape, net.dec_w, net.dec_b, input, st.h, st.c);
  st.h = h2;
  st.c = c2;
  Attention att = attention_context(tape, net, st.h, st.pooled);
  Tensor readout = ad::concat(st.h, att.context);
  if (training && net.dropout > 0.0 && dropout_rng != nullptr)
    readout = ad::dropout(readout, net.dropout, *dropout_rng);
  return ad::add(ad::matmul(net.out_w, readout), net.out_b);
}

Tensor embed_id(const Model::Net& net, int id) {
  int ids[1] = {id};
  return ad::row(ad::embedding_lookup(net.embed, ids), 0);
}

}  // namespace

Tensor decode_logprob(Tape& tape, const Model::Net& net,
                      const Tensor& enc_states, std::span<const int> target,
                      bool training, Rng* dropout_rng) {
  if (target.empty()) throw std::invalid_argument("decode_logprob: empty target");
  DecoderState st = decoder_init(tape, net, enc_states);
  Tensor nll;
  int prev = Vocab::kBos;
  for (size_t t = 0; t <= target.size(); ++t) {
    Tensor logits = decoder_step(tape, net, st, embed_id(net, prev), training,
                                 dropout_rng);
    int tok = t < target.size() ? target[t] : Vocab::kEos;
    Tensor ce = ad::cross_entropy_logits(logits, tok);
    nll = nll.valid() ? ad::add(nll, ce) : ce;
    prev = tok;
  }
  return ad::scale(nll, -1.0);
}

Tensor decode_logprob(Tape& tape, const Model::Net& net, const Sequence& src,
                      const Sequence& tgt, bool training, Rng* dropout_rng) {
  if (src.ids.empty() || tgt.ids.empty())
    throw std::invalid_argument("decode_logprob: empty sequence");
  Tensor enc = encode(tape, net, src.content());
  std::vector<int> target = tgt.content();
  return decode_logprob(tape, net, enc, target, training, dropout_rng);
}

int default_max_len(int src_len) { return 2 * src_len + 5; }

namespace {

namespace vm = latentseq::valuemath;

// Raw parameter views plus scratch state for value-only decoding.
struct ValueDecoder {
  const double *embed, *enc_w, *enc_b, *dec_w, *dec_b, *init_w, *init_b,
      *att_w, *out_w, *out_b, *dom;
  int V = 0, E = 0, H = 0, pool = 1;

  std::vector<double> pooled;  // P x H
  int P = 0;
  std::vector<double> h, c, scratch, input, att_q, scores, readout, logits;

  ValueDecoder(const Model& model, Dir dir) {
    const ModelConfig& cfg = model.config();
    V = cfg.vocab;
    E = cfg.embed;
    H = cfg.hidden;
    pool = cfg.pool_window;
    auto names = model.param_names(dir);
    const double* ptrs[11];
    for (size_t i = 0; i < names.size(); ++i)
      ptrs[i] = model.store().at(names[i]).value.data();
    embed = ptrs[0];
    enc_w = ptrs[1];
    enc_b = ptrs[2];
    dec_w = ptrs[3];
    dec_b = ptrs[4];
    init_w = ptrs[5];
    init_b = ptrs[6];
    att_w = ptrs[7];
    out_w = ptrs[8];
    out_b = ptrs[9];
    dom = ptrs[10];
  }

  void start(std::span<const int> src) {
    if (src.empty()) throw std::invalid_argument("encode: empty sequence");
    h.assign(static_cast<size_t>(H), 0.0);
    c.assign(static_cast<size_t>(H), 0.0);
    std::vector<double> states(src.size() * static_cast<size_t>(H));
    for (size_t t = 0; t < src.size(); ++t) {
      vm::lstm_step_value(enc_w, enc_b, embed + static_cast<size_t>(src[t]) * E,
                          E, h.data(), c.data(), H, scratch);
      std::copy(h.begin(), h.end(), states.begin() + t * static_cast<size_t>(H));
    }
    int T = static_cast<int>(src.size());
    P = (T + pool - 1) / pool;
    pooled.assign(static_cast<size_t>(P) * H, 0.0);
    for (int r = 0; r < P; ++r) {
      int t0 = r * pool, t1 = std::min(T, t0 + pool);
      for (int j = 0; j < H; ++j) {
        double best = states[static_cast<size_t>(t0) * H + j];
        for (int t = t0 + 1; t < t1; ++t)
          best = std::max(best, states[static_cast<size_t>(t) * H + j]);
        pooled[static_cast<size_t>(r) * H + j] = best;
      }
    }
    // decoder init from the final encoder state
    std::vector<double> h0(static_cast<size_t>(H));
    vm::matvec_into(init_w, states.data() + static_cast<size_t>(T - 1) * H,
                    h0.data(), H, H);
    for (int j = 0; j < H; ++j) h.at(static_cast<size_t>(j)) = std::tanh(h0[static_cast<size_t>(j)] + init_b[j]);
    std::fill(c.begin(), c.end(), 0.0);
  }

  const double* step(int prev) {
    input.resize(static_cast<size_t>(2) * E);
    std::copy(embed + static_cast<size_t>(prev) * E,
              embed + static_cast<size_t>(prev + 1) * E, input.begin());
    std::copy(dom, dom + E, input.begin() + E);
    vm::lstm_step_value(dec_w, dec_b, input.data(), 2 * E, h.data(), c.data(),
                        H, scratch);
    att_q.resize(static_cast<size_t>(H));
    vm::matvec_into(att_w, h.data(), att_q.data(), H, H);
    scores.resize(static_cast<size_t>(P));
    vm::matvec_into(pooled.data(), att_q.data(), scores.data(), P, H);
    vm::softmax_inplace(scores.data(), P);
    readout.assign(static_cast<size_t>(2) * H, 0.0);
    std::copy(h.begin(), h.end(), readout.begin());
    for (int r = 0; r < P; ++r)
      for (int j = 0; j < H; ++j)
        readout[static_cast<size_t>(H + j)] +=
            scores[static_cast<size_t>(r)] * pooled[static_cast<size_t>(r) * H + j];
    logits.resize(static_cast<size_t>(V));
    vm::matvec_into(out_w, readout.data(), logits.data(), V, 2 * H);
    for (int j = 0; j < V; ++j) logits[static_cast<size_t>(j)] += out_b[j];
    return logits.data();
  }
};

// Shared greedy/sampling rollout; chooser maps per-step logits to a token.
Sequence rollout(const Model& model, const Sequence& src, Dir dir, int max_len,
                 int min_len,
                 const std::function<int(std::span<const double>, int)>& choose) {
  if (max_len < 1) throw std::invalid_argument("decode: max_len < 1");
  ValueDecoder dec(model, dir);
  dec.start(src.content());
  Sequence out;
  out.domain = static_cast<int>(tgt_domain(dir));
  int prev = Vocab::kBos;
  for (int t = 0; t < max_len; ++t) {
    const double* logits = dec.step(prev);
    int tok = choose(std::span<const double>(logits, static_cast<size_t>(dec.V)),
                     t < min_len ? 1 : 0);
    if (tok == Vocab::kEos) {
      out.ids.push_back(Vocab::kEos);
      return out;
    }
    out.ids.push_back(tok);
    prev = tok;
  }
  return out;
}

}  // namespace

double decode_logprob_value(const Model& model, const Sequence& src,
                            const Sequence& tgt, Dir dir) {
  if (src.ids.empty() || tgt.ids.empty())
    throw std::invalid_argument("decode_logprob: empty sequence");
  ValueDecoder dec(model, dir);
  dec.start(src.content());
  std::vector<int> toks = tgt.content();
  double lp = 0.0;
  int prev = Vocab::kBos;
  for (size_t t = 0; t <= toks.size(); ++t) {
    const double* logits = dec.step(prev);
    int tok = t < toks.size() ? toks[t] : Vocab::kEos;
    lp += vm::log_softmax_at(logits, dec.V, tok);
    prev = tok;
  }
  return lp;
}

double score_sequence_value(const Model& model, const Sequence& src,
                            const Sequence& seq, Dir dir) {
  if (src.ids.empty() || seq.ids.empty())
    throw std::invalid_argument("score_sequence: empty sequence");
  ValueDecoder dec(model, dir);
  dec.start(src.content());
  std::vector<int> toks = seq.content();
  bool with_eos = seq.eos_terminated();
  double lp = 0.0;
  int prev = Vocab::kBos;
  size_t steps = toks.size() + (with_eos ? 1 : 0);
  for (size_t t = 0; t < steps; ++t) {
    const double* logits = dec.step(prev);
    int tok = t < toks.size() ? toks[t] : Vocab::kEos;
    lp += vm::log_softmax_at(logits, dec.V, tok);
    prev = tok;
  }
  return lp;
}

Sequence greedy_decode(const Model& model, const Sequence& src, Dir dir,
                       int max_len, int min_len) {
  return rollout(model, src, dir, max_len, min_len,
                 [](std::span<const double> logits, int suppress_eos) {
                   int best = -1;
                   for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
                     if (suppress_eos && i == Vocab::kEos) continue;
                     if (best < 0 || logits[static_cast<size_t>(i)] >
                                         logits[static_cast<size_t>(best)])
                       best = i;
                   }
                   return best;
                 });
}

Sequence sample_decode(const Model& model, const Sequence& src, Dir dir,
                       double temperature, Rng& rng, int max_len, int min_len) {
  if (!(temperature > 0.0))
    throw std::domain_error("sample_decode: non-positive temperature");
  return rollout(
      model, src, dir, max_len, min_len,
      [&rng, temperature](std::span<const double> logits, int suppress_eos) {
        int n = static_cast<int>(logits.size());
        std::vector<double> p(logits.begin(), logits.end());
        if (suppress_eos) p[Vocab::kEos] = -1e300;
        double m = *std::max_element(p.begin(), p.end());
        double s = 0.0;
        for (double& v : p) {
          v = std::exp((v - m) / temperature);
          s += v;
        }
        double u = rng.uniform() * s;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += p[static_cast<size_t>(i)];
          if (u < acc) return i;
        }
        return n - 1;
      });
}

RelaxedSample gumbel_decode(Tape& tape, Model& model, const Sequence& src,
                            Dir dir, double temperature, Rng& rng, int max_len,
                            int min_len) {
  if (max_len < 1) throw std::invalid_argument("gumbel_decode: max_len < 1");
  Model::Net net = model.bind(tape, dir, true);
  Tensor enc = encode(tape, net, src.content());
  DecoderState st = decoder_init(tape, net, enc);

  std::vector<double> eos_mask(static_cast<size_t>(net.vocab), 0.0);
  eos_mask[Vocab::kEos] = -1e30;
  Tensor mask;

  RelaxedSample out;
  out.seq.domain = static_cast<int>(tgt_domain(dir));
  Tensor prev_embed = embed_id(net, Vocab::kBos);
  for (int t = 0; t < max_len; ++t) {
    Tensor logits = decoder_step(tape, net, st, prev_embed, false, nullptr);
    Tensor sample_logits = logits;
    if (t < min_len) {
      if (!mask.valid()) mask = tape.leaf(Shape::vec(net.vocab), eos_mask);
      sample_logits = ad::add(logits, mask);
    }
    Tensor onehot = ad::gumbel_softmax_st(sample_logits, temperature, rng);
    auto hv = onehot.value();
    int tok = 0;
    for (int i = 1; i < net.vocab; ++i)
      if (hv[static_cast<size_t>(i)] > hv[static_cast<size_t>(tok)]) tok = i;
    // log q of the chosen token under the untempered model distribution
    Tensor lq = ad::sum(ad::mul(onehot, ad::log_softmax(logits)));
    out.log_q = out.log_q.valid() ? ad::add(out.log_q, lq) : lq;
    out.onehots.push_back(onehot);
    out.seq.ids.push_back(tok);
    if (tok == Vocab::kEos) break;
    prev_embed = ad::matmul(onehot, net.embed);
  }
  return out;
}

Tensor score_sequence(Tape& tape, const Model::Net& net, const Sequence& src,
                      const Sequence& seq) {
  if (src.ids.empty() || seq.ids.empty())
    throw std::invalid_argument("score_sequence: empty sequence");
  Tensor enc = encode(tape, net, src.content());
  DecoderState st = decoder_init(tape, net, enc);
  std::vector<int> toks = seq.content();
  bool with_eos = seq.eos_terminated();
  Tensor nll;
  int prev = Vocab::kBos;
  size_t steps = toks.size() + (with_eos ? 1 : 0);
  for (size_t t = 0; t < steps; ++t) {
    Tensor logits =
        decoder_step(tape, net, st, embed_id(net, prev), false, nullptr);
    int tok = t < toks.size() ? toks[t] : Vocab::kEos;
    Tensor ce = ad::cross_entropy_logits(logits, tok);
    nll = nll.valid() ? ad::add(nll, ce) : ce;
    prev = tok;
  }
  return ad::scale(nll, -1.0);
}

}  // namespace latentseq::nn
