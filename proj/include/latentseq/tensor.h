#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "latentseq/rng.h"

namespace latentseq::ad {

// Dense tensors of rank 1 or 2, row-major, double precision.
struct Shape {
  std::array<int, 2> d{0, 0};
  int rank = 0;

  static Shape vec(int n) { return Shape{{n, 0}, 1}; }
  static Shape mat(int r, int c) { return Shape{{r, c}, 2}; }
  static Shape scalar() { return vec(1); }

  int rows() const { return d[0]; }
  int cols() const { return rank == 2 ? d[1] : 1; }
  int numel() const { return rank == 2 ? d[0] * d[1] : d[0]; }
  bool operator==(const Shape& o) const { return rank == o.rank && d == o.d; }
  std::string str() const;
};

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kMatmul,
  kConcat,
  kSlice,
  kRow,
  kStackRows,
  kSum,
  kSoftmax,
  kLogSoftmax,
  kEmbedLookup,
  kMaxPoolTime,
  kCrossEntropyLogits,
  kGumbelSoftmaxSt,
  kDropout,
  kLstmCell,
};

class Tape;

// Handle into a tape. Values are written once at creation; the gradient
// buffer is the only thing backward() mutates.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;
  int gen = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  std::span<const double> value() const;
  std::span<const double> grad() const;  // empty until backward touches it
  double scalar() const;
  bool requires_grad() const;
};

class Tape {
 public:
  struct Node {
    Shape shape;
    Op op = Op::kLeaf;
    bool requires_grad = false;
    bool grad_external = false;
    int args_begin = 0, args_count = 0;
    int auxi_begin = 0, auxi_count = 0;
    int auxd_begin = 0, auxd_count = 0;
    double* val = nullptr;
    double* grad = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(const Shape& s, std::span<const double> values,
              bool requires_grad = false);
  // External parameter view: values are read in place and gradients are
  // accumulated into grad_sink (not zeroed here), so one parameter buffer
  // can collect gradients across many tapes within a batch.
  Tensor leaf_ref(const Shape& s, const double* values, double* grad_sink);
  Tensor zeros(const Shape& s);
  Tensor scalar_const(double v);

  // Populates gradients of every requires_grad leaf reachable from loss.
  // loss must be a one-element tensor recorded on this tape; a second call
  // without reset() is an error.
  void backward(const Tensor& loss);

  // Drops all nodes and invalidates handles; arena memory is retained so a
  // tape can be reused across many small graphs without reallocating.
  void reset();

  int size() const { return static_cast<int>(nodes_.size()); }
  int generation() const { return gen_; }
  bool backward_done() const { return backward_done_; }

  // Internal surface used by the op constructors and by tests.
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Tensor emit(Op op, const Shape& s, std::span<const int> args,
              std::span<const int> auxi = {}, std::span<const double> auxd = {});
  std::span<const int> args_of(const Node& n) const {
    return {args_.data() + n.args_begin, static_cast<size_t>(n.args_count)};
  }
  std::span<const int> auxi_of(const Node& n) const {
    return {auxi_.data() + n.auxi_begin, static_cast<size_t>(n.auxi_count)};
  }
  std::span<const double> auxd_of(const Node& n) const {
    return {auxd_.data() + n.auxd_begin, static_cast<size_t>(n.auxd_count)};
  }
  std::span<double> val_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    return {n.val, static_cast<size_t>(n.shape.numel())};
  }

 private:
  double* arena_alloc(int n);
  void ensure_grad(Node& n);
  void backprop_node(int id);

  struct Chunk {
    std::unique_ptr<double[]> data;
    size_t cap = 0;
  };

  std::vector<Node> nodes_;
  std::vector<int> args_;
  std::vector<int> auxi_;
  std::vector<double> auxd_;
  std::vector<Chunk> chunks_;
  size_t chunk_idx_ = 0;
  size_t chunk_used_ = 0;
  bool backward_done_ = false;
  int gen_ = 0;
};

// Elementwise and linear-algebra ops. Binary elementwise ops require equal
// shapes; the only implicit broadcast anywhere is scalar*tensor via scale().
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor a, double s);
Tensor tanh(Tensor a);
Tensor sigmoid(Tensor a);
Tensor exp(Tensor a);
Tensor log(Tensor a);

// matmul accepts [m x k]*[k x n] -> [m x n], and rank-1 forms:
// [k]*[k x n] -> [n] (row vector) and [m x k]*[k] -> [m] (column vector).
Tensor matmul(Tensor a, Tensor b);

Tensor concat(Tensor a, Tensor b);                  // rank-1
Tensor slice(Tensor a, int begin, int len);         // rank-1
Tensor row(Tensor a, int r);                        // rank-2 -> rank-1
Tensor stack_rows(std::span<const Tensor> rows);    // T x [d] -> [T x d]
Tensor sum(Tensor a);                               // all elements -> scalar

// Numerically stable (row max subtracted); rows sum to 1.
Tensor softmax(Tensor a, double temperature = 1.0);
Tensor log_softmax(Tensor a, double temperature = 1.0);

Tensor embedding_lookup(Tensor table, std::span<const int> ids);
Tensor max_pool_time(Tensor states, int window);
Tensor cross_entropy_logits(Tensor logits, int target);

// Forward value is the exact one-hot of argmax(logits + gumbel noise); the
// backward rule is that of softmax((logits + noise)/temperature).
Tensor gumbel_softmax_st(Tensor logits, double temperature, Rng& rng);

// Inverted dropout: kept entries scaled by 1/(1-rate).
Tensor dropout(Tensor a, double rate, Rng& rng);

// Fused LSTM cell: gates are pre-activations [4H] in i, f, g, o slice
// order, c_prev is [H]; the output packs [h; c_next] as [2H].
Tensor lstm_cell(Tensor gates, Tensor c_prev);

// ---- finite-difference oracle ----

// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)
double fd_max_rel_error(std::span<const double> analytic,
                        std::span<const double> numeric);

struct FdParam {
  Shape shape;
  std::vector<double> value;
};

// Central differences against the tape gradient. f must be deterministic:
// given the same leaf values it must build the same scalar (re-seed any rng
// it uses internally on every call).
double finite_difference_check(
    const std::function<Tensor(Tape&, std::span<const Tensor>)>& f,
    std::span<const FdParam> params, double epsilon);

}  // namespace latentseq::ad
