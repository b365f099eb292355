#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentseq/rng.h"
#include "latentseq/sequence.h"
#include "latentseq/tensor.h"

namespace latentseq::nn {

// Named parameter buffers with persistent gradient and Adam state.
class ParamStore {
 public:
  struct Param {
    std::string name;
    ad::Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
  };

  Param& add(const std::string& name, const ad::Shape& shape);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  void zero_grad();
  double grad_sq_norm() const;
  void scale_grads(double s);
  void fill_uniform(Rng& rng, double scale);  // every param, in insertion order
  uint64_t value_checksum() const;            // FNV-1a over raw value bytes

 private:
  std::vector<Param> params_;
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  long t = 0;

  void step(ParamStore& store);
};

enum class Domain : int { D1 = 0, D2 = 1 };
enum class Dir : int { D1toD2 = 0, D2toD1 = 1 };

inline Domain src_domain(Dir d) { return d == Dir::D1toD2 ? Domain::D1 : Domain::D2; }
inline Domain tgt_domain(Dir d) { return d == Dir::D1toD2 ? Domain::D2 : Domain::D1; }
inline Dir reverse(Dir d) { return d == Dir::D1toD2 ? Dir::D2toD1 : Dir::D1toD2; }

struct ModelConfig {
  int vocab = 0;
  int embed = 32;
  int hidden = 64;
  int pool_window = 1;
  double dropout = 0.3;
  bool tied = true;  // one shared encoder-decoder vs one per direction
};

// The two transduction networks. Under tying there is exactly one encoder
// and one decoder; the two directions differ only in the domain embedding
// handed to the decoder, and each inference network q is literally the
// generative decoder of the opposite direction.
class Model {
 public:
  Model(const ModelConfig& cfg, Rng& init_rng);

  // Tape-bound views of the parameters serving one transduction direction.
  struct Net {
    ad::Tensor embed;            // [V x E]
    ad::Tensor enc_w, enc_b;     // [4H x (E+H)], [4H]
    ad::Tensor dec_w, dec_b;     // [4H x (2E+H)], [4H]
    ad::Tensor init_w, init_b;   // [H x H], [H]
    ad::Tensor att_w;            // [H x H]
    ad::Tensor out_w, out_b;     // [V x 2H], [V]
    ad::Tensor dom;              // [E], embedding of the target domain
    int vocab = 0, embed_dim = 0, hidden = 0;
    int pool_window = 1;
    double dropout = 0.0;
  };

  // with_grad=false binds parameters as constants (greedy rollouts and
  // other evaluation paths skip all parameter-gradient work).
  Net bind(ad::Tape& tape, Dir dir, bool with_grad = true);
  Net bind(ad::Tape& tape, Dir dir) const;  // always without grad

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  // Parameter names backing a direction, e.g. for gradient inspection.
  std::vector<std::string> param_names(Dir dir) const;

 private:
  std::string pname(Dir dir, const std::string& base) const;
  ModelConfig cfg_;
  ParamStore store_;
};

// ---- building blocks ----

// Standard LSTM cell: gates = w * [input; h] + b, slice order i, f, g, o.
std::pair<ad::Tensor, ad::Tensor> lstm_step(ad::Tape& tape, const ad::Tensor& w,
                                            const ad::Tensor& b,
                                            const ad::Tensor& input,
                                            const ad::Tensor& h,
                                            const ad::Tensor& c);

// One hidden state per input token; domain-blind.
ad::Tensor encode(ad::Tape& tape, const Model::Net& net, std::span<const int> ids);
// Same encoder driven by relaxed one-hot rows (straight-through path).
ad::Tensor encode_onehot(ad::Tape& tape, const Model::Net& net,
                         std::span<const ad::Tensor> onehots);

// Dot-product attention over max-pooled encoder states.
struct Attention {
  ad::Tensor context;
  ad::Tensor weights;
};
Attention attention_context(ad::Tape& tape, const Model::Net& net,
                            const ad::Tensor& query, const ad::Tensor& pooled);

// Teacher-forced log p(target | enc_states, domain), summed over the target
// tokens plus the terminal EOS; always <= 0. Dropout applies to the readout
// only when training is set.
ad::Tensor decode_logprob(ad::Tape& tape, const Model::Net& net,
                          const ad::Tensor& enc_states,
                          std::span<const int> target, bool training = false,
                          Rng* dropout_rng = nullptr);

// Convenience: encode src and score tgt in one call.
ad::Tensor decode_logprob(ad::Tape& tape, const Model::Net& net,
                          const Sequence& src, const Sequence& tgt,
                          bool training = false, Rng* dropout_rng = nullptr);

int default_max_len(int src_len);  // 2 * src_len + 5

// Value-only scorers (no tape, no gradients); same arithmetic as the tape
// path. decode_logprob_value always includes the terminal EOS term;
// score_sequence_value includes it only when seq terminated with EOS.
double decode_logprob_value(const Model& model, const Sequence& src,
                            const Sequence& tgt, Dir dir);
double score_sequence_value(const Model& model, const Sequence& src,
                            const Sequence& seq, Dir dir);

// Deterministic argmax continuation from BOS until EOS or max_len; records
// no gradients. min_len > 0 suppresses EOS for the first min_len steps so
// latent sequences stay non-empty.
Sequence greedy_decode(const Model& model, const Sequence& src, Dir dir,
                       int max_len, int min_len = 0);

// Ancestral sampling from tempered per-step distributions.
Sequence sample_decode(const Model& model, const Sequence& src, Dir dir,
                       double temperature, Rng& rng, int max_len,
                       int min_len = 0);

// Per-step Gumbel-softmax straight-through rollout on the caller's tape.
// log_q is the sum over steps of log q(chosen token), differentiable both
// through the per-step logits and through the relaxed one-hots.
struct RelaxedSample {
  std::vector<ad::Tensor> onehots;  // one [V] one-hot per emitted token
  Sequence seq;                     // ids, trailing EOS when terminated
  ad::Tensor log_q;
};
RelaxedSample gumbel_decode(ad::Tape& tape, Model& model, const Sequence& src,
                            Dir dir, double temperature, Rng& rng, int max_len,
                            int min_len = 0);

// log q(seq | src) for a fixed sampled sequence (ids path, no relaxation).
// Includes the EOS term only when seq terminated with EOS.
ad::Tensor score_sequence(ad::Tape& tape, const Model::Net& net,
                          const Sequence& src, const Sequence& seq);

}  // namespace latentseq::nn
