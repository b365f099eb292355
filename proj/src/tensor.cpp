#include "latentseq/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace latentseq::ad {

std::string Shape::str() const {
  if (rank == 1) return "[" + std::to_string(d[0]) + "]";
  return "[" + std::to_string(d[0]) + "x" + std::to_string(d[1]) + "]";
}

namespace {

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape != b.tape)
    throw std::runtime_error("operands recorded on different tapes");
}

void check_live(const Tensor& t) {
  if (!t.valid()) throw std::runtime_error("invalid tensor handle");
  if (t.gen != t.tape->generation())
    throw std::runtime_error("tensor belongs to a reset (detached) tape");
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              a.str() + " and " + b.str());
}

}  // namespace

const Shape& Tensor::shape() const {
  check_live(*this);
  return tape->node(id).shape;
}

std::span<const double> Tensor::value() const {
  check_live(*this);
  const auto& n = tape->node(id);
  return {n.val, static_cast<size_t>(n.shape.numel())};
}

std::span<const double> Tensor::grad() const {
  check_live(*this);
  const auto& n = tape->node(id);
  if (n.grad == nullptr) return {};
  return {n.grad, static_cast<size_t>(n.shape.numel())};
}

double Tensor::scalar() const {
  check_live(*this);
  const auto& n = tape->node(id);
  if (n.shape.numel() != 1)
    throw std::invalid_argument("scalar() on tensor of shape " + n.shape.str());
  return n.val[0];
}

bool Tensor::requires_grad() const {
  check_live(*this);
  return tape->node(id).requires_grad;
}

double* Tape::arena_alloc(int n) {
  size_t need = static_cast<size_t>(n);
  while (chunk_idx_ < chunks_.size() &&
         chunk_used_ + need > chunks_[chunk_idx_].cap) {
    ++chunk_idx_;
    chunk_used_ = 0;
  }
  if (chunk_idx_ == chunks_.size()) {
    size_t cap = std::max<size_t>(need, 1 << 15);
    chunks_.push_back(Chunk{std::make_unique<double[]>(cap), cap});
    chunk_used_ = 0;
  }
  double* p = chunks_[chunk_idx_].data.get() + chunk_used_;
  chunk_used_ += need;
  return p;
}

Tensor Tape::emit(Op op, const Shape& s, std::span<const int> args,
                  std::span<const int> auxi, std::span<const double> auxd) {
  Node n;
  n.shape = s;
  n.op = op;
  n.args_begin = static_cast<int>(args_.size());
  n.args_count = static_cast<int>(args.size());
  args_.insert(args_.end(), args.begin(), args.end());
  n.auxi_begin = static_cast<int>(auxi_.size());
  n.auxi_count = static_cast<int>(auxi.size());
  auxi_.insert(auxi_.end(), auxi.begin(), auxi.end());
  n.auxd_begin = static_cast<int>(auxd_.size());
  n.auxd_count = static_cast<int>(auxd.size());
  auxd_.insert(auxd_.end(), auxd.begin(), auxd.end());
  n.val = arena_alloc(s.numel());
  for (int a : args) n.requires_grad |= nodes_[static_cast<size_t>(a)].requires_grad;
  nodes_.push_back(n);
  return Tensor{this, static_cast<int>(nodes_.size()) - 1, gen_};
}

Tensor Tape::leaf(const Shape& s, std::span<const double> values,
                  bool requires_grad) {
  if (static_cast<int>(values.size()) != s.numel())
    throw std::invalid_argument("leaf: " + std::to_string(values.size()) +
                                " values for shape " + s.str());
  Tensor t = emit(Op::kLeaf, s, {});
  std::copy(values.begin(), values.end(), node(t.id).val);
  node(t.id).requires_grad = requires_grad;
  return t;
}

Tensor Tape::leaf_ref(const Shape& s, const double* values, double* grad_sink) {
  Node n;
  n.shape = s;
  n.op = Op::kLeaf;
  n.val = const_cast<double*>(values);
  n.grad = grad_sink;
  n.grad_external = true;
  n.requires_grad = grad_sink != nullptr;
  nodes_.push_back(n);
  return Tensor{this, static_cast<int>(nodes_.size()) - 1, gen_};
}

Tensor Tape::zeros(const Shape& s) {
  Tensor t = emit(Op::kLeaf, s, {});
  std::fill_n(node(t.id).val, s.numel(), 0.0);
  return t;
}

Tensor Tape::scalar_const(double v) {
  Tensor t = emit(Op::kLeaf, Shape::scalar(), {});
  node(t.id).val[0] = v;
  return t;
}

void Tape::ensure_grad(Node& n) {
  if (n.grad != nullptr) return;
  n.grad = arena_alloc(n.shape.numel());
  std::fill_n(n.grad, n.shape.numel(), 0.0);
}

void Tape::reset() {
  nodes_.clear();
  args_.clear();
  auxi_.clear();
  auxd_.clear();
  chunk_idx_ = 0;
  chunk_used_ = 0;
  backward_done_ = false;
  ++gen_;
}

void Tape::backward(const Tensor& loss) {
  check_live(loss);
  if (loss.tape != this)
    throw std::runtime_error("backward: loss recorded on a different tape");
  if (loss.shape().numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                loss.shape().str());
  if (backward_done_)
    throw std::runtime_error("backward: tape already differentiated; reset() first");
  backward_done_ = true;

  Node& ln = node(loss.id);
  ensure_grad(ln);
  ln.grad[0] += 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.grad == nullptr || n.op == Op::kLeaf) continue;
    backprop_node(id);
  }
}

namespace {

// Four independent accumulators break the FMA dependency chain; the
// summation order is fixed, so results stay deterministic run to run.
double dot4(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// dst[n] += s * src[n]
void axpy(double s, const double* src, double* dst, int n) {
  for (int i = 0; i < n; ++i) dst[i] += s * src[i];
}

// dst[m] += A[m x k] * v[k]
void matvec_acc(const double* A, const double* v, double* dst, int m, int k) {
  for (int i = 0; i < m; ++i)
    dst[i] += dot4(A + static_cast<size_t>(i) * k, v, k);
}

// C[m x n] += A[m x k] * B[k x n]
void matmul_acc(const double* A, const double* B, double* C, int m, int k,
                int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk)
      axpy(arow[kk], B + static_cast<size_t>(kk) * n, crow, n);
  }
}

// C[m x n] += A[m x k] * B^T[n x k]
void matmul_bt_acc(const double* A, const double* B, double* C, int m, int k,
                   int n) {
  if (k == 1) {  // outer product
    for (int i = 0; i < m; ++i) axpy(A[i], B, C + static_cast<size_t>(i) * n, n);
    return;
  }
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j)
      crow[j] += dot4(arow, B + static_cast<size_t>(j) * k, k);
  }
}

// C[m x n] += A^T given A[k x m], times B[k x n]
void matmul_at_acc(const double* A, const double* B, double* C, int k, int m,
                   int n) {
  if (n == 1) {  // C[m] += A^T[m x k] * B[k]
    for (int kk = 0; kk < k; ++kk)
      axpy(B[kk], A + static_cast<size_t>(kk) * m, C, m);
    return;
  }
  for (int kk = 0; kk < k; ++kk) {
    const double* arow = A + static_cast<size_t>(kk) * m;
    const double* brow = B + static_cast<size_t>(kk) * n;
    for (int i = 0; i < m; ++i)
      axpy(arow[i], brow, C + static_cast<size_t>(i) * n, n);
  }
}

void softmax_row(const double* x, double* y, int n, double inv_temp) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp((x[i] - m) * inv_temp);
    s += y[i];
  }
  double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) y[i] *= inv;
}

void log_softmax_row(const double* x, double* y, int n, double inv_temp) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp((x[i] - m) * inv_temp);
  double lse = std::log(s);
  for (int i = 0; i < n; ++i) y[i] = (x[i] - m) * inv_temp - lse;
}

int argmax_lowest(const double* x, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

}  // namespace

void Tape::backprop_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  auto args = args_of(n);
  const double* g = n.grad;
  int sz = n.shape.numel();

  auto in = [&](int i) -> Node& { return nodes_[static_cast<size_t>(args[i])]; };
  auto gbuf = [&](int i) -> double* {
    Node& m = in(i);
    if (!m.requires_grad) return nullptr;
    ensure_grad(m);
    return m.grad;
  };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i];
      if (double* gb = gbuf(1))
        for (int i = 0; i < sz; ++i) gb[i] += g[i];
      break;
    }
    case Op::kSub: {
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i];
      if (double* gb = gbuf(1))
        for (int i = 0; i < sz; ++i) gb[i] -= g[i];
      break;
    }
    case Op::kMul: {
      const double* a = in(0).val;
      const double* b = in(1).val;
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i] * b[i];
      if (double* gb = gbuf(1))
        for (int i = 0; i < sz; ++i) gb[i] += g[i] * a[i];
      break;
    }
    case Op::kScale: {
      double s = auxd_of(n)[0];
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += s * g[i];
      break;
    }
    case Op::kTanh: {
      const double* y = n.val;
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::kSigmoid: {
      const double* y = n.val;
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::kExp: {
      const double* y = n.val;
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i] * y[i];
      break;
    }
    case Op::kLog: {
      const double* a = in(0).val;
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i] / a[i];
      break;
    }
    case Op::kMatmul: {
      // effective dims saved at emit time: m, k, n plus rank pattern
      auto aux = auxi_of(n);
      int m = aux[0], k = aux[1], nn = aux[2];
      const double* A = in(0).val;
      const double* B = in(1).val;
      if (double* ga = gbuf(0)) matmul_bt_acc(g, B, ga, m, nn, k);
      if (double* gb = gbuf(1)) matmul_at_acc(A, g, gb, m, k, nn);
      break;
    }
    case Op::kConcat: {
      int na = in(0).shape.numel();
      if (double* ga = gbuf(0))
        for (int i = 0; i < na; ++i) ga[i] += g[i];
      if (double* gb = gbuf(1))
        for (int i = na; i < sz; ++i) gb[i - na] += g[i];
      break;
    }
    case Op::kSlice: {
      int begin = auxi_of(n)[0];
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[begin + i] += g[i];
      break;
    }
    case Op::kRow: {
      int r = auxi_of(n)[0];
      if (double* ga = gbuf(0)) {
        double* dst = ga + static_cast<size_t>(r) * sz;
        for (int i = 0; i < sz; ++i) dst[i] += g[i];
      }
      break;
    }
    case Op::kStackRows: {
      int d = n.shape.d[1];
      for (int t = 0; t < n.args_count; ++t) {
        if (double* gt = gbuf(t)) {
          const double* src = g + static_cast<size_t>(t) * d;
          for (int i = 0; i < d; ++i) gt[i] += src[i];
        }
      }
      break;
    }
    case Op::kSum: {
      double g0 = g[0];
      if (double* ga = gbuf(0)) {
        int na = in(0).shape.numel();
        for (int i = 0; i < na; ++i) ga[i] += g0;
      }
      break;
    }
    case Op::kSoftmax: {
      double inv_temp = 1.0 / auxd_of(n)[0];
      const double* y = n.val;
      if (double* ga = gbuf(0)) {
        int rows = n.shape.rank == 2 ? n.shape.d[0] : 1;
        int cols = n.shape.rank == 2 ? n.shape.d[1] : n.shape.d[0];
        for (int r = 0; r < rows; ++r) {
          const double* yr = y + static_cast<size_t>(r) * cols;
          const double* gr = g + static_cast<size_t>(r) * cols;
          double* gar = ga + static_cast<size_t>(r) * cols;
          double dot = 0.0;
          for (int i = 0; i < cols; ++i) dot += gr[i] * yr[i];
          for (int i = 0; i < cols; ++i)
            gar[i] += inv_temp * yr[i] * (gr[i] - dot);
        }
      }
      break;
    }
    case Op::kLogSoftmax: {
      double inv_temp = 1.0 / auxd_of(n)[0];
      const double* y = n.val;  // log-probabilities
      if (double* ga = gbuf(0)) {
        int rows = n.shape.rank == 2 ? n.shape.d[0] : 1;
        int cols = n.shape.rank == 2 ? n.shape.d[1] : n.shape.d[0];
        for (int r = 0; r < rows; ++r) {
          const double* yr = y + static_cast<size_t>(r) * cols;
          const double* gr = g + static_cast<size_t>(r) * cols;
          double* gar = ga + static_cast<size_t>(r) * cols;
          double gsum = 0.0;
          for (int i = 0; i < cols; ++i) gsum += gr[i];
          for (int i = 0; i < cols; ++i)
            gar[i] += inv_temp * (gr[i] - std::exp(yr[i]) * gsum);
        }
      }
      break;
    }
    case Op::kEmbedLookup: {
      auto ids = auxi_of(n);
      int d = n.shape.d[1];
      if (double* ga = gbuf(0)) {
        for (size_t t = 0; t < ids.size(); ++t) {
          double* dst = ga + static_cast<size_t>(ids[t]) * d;
          const double* src = g + t * d;
          for (int i = 0; i < d; ++i) dst[i] += src[i];
        }
      }
      break;
    }
    case Op::kMaxPoolTime: {
      auto arg = auxi_of(n);  // argmax time index per (pooled row, dim)
      int d = n.shape.d[1];
      if (double* ga = gbuf(0)) {
        for (int r = 0; r < n.shape.d[0]; ++r)
          for (int j = 0; j < d; ++j)
            ga[static_cast<size_t>(arg[static_cast<size_t>(r) * d + j]) * d + j] +=
                g[static_cast<size_t>(r) * d + j];
      }
      break;
    }
    case Op::kCrossEntropyLogits: {
      auto probs = auxd_of(n);
      int target = auxi_of(n)[0];
      double g0 = g[0];
      if (double* ga = gbuf(0)) {
        int nn = in(0).shape.numel();
        for (int i = 0; i < nn; ++i) ga[i] += g0 * probs[i];
        ga[target] -= g0;
      }
      break;
    }
    case Op::kGumbelSoftmaxSt: {
      // straight-through: gradient of the tempered soft relaxation
      auto soft = auxd_of(n).subspan(1);  // auxd[0] = temperature
      double inv_temp = 1.0 / auxd_of(n)[0];
      if (double* ga = gbuf(0)) {
        double dot = 0.0;
        for (int i = 0; i < sz; ++i) dot += g[i] * soft[static_cast<size_t>(i)];
        for (int i = 0; i < sz; ++i)
          ga[i] += inv_temp * soft[static_cast<size_t>(i)] * (g[i] - dot);
      }
      break;
    }
    case Op::kDropout: {
      auto mask = auxd_of(n);
      if (double* ga = gbuf(0))
        for (int i = 0; i < sz; ++i) ga[i] += g[i] * mask[static_cast<size_t>(i)];
      break;
    }
    case Op::kLstmCell: {
      int H = n.shape.d[0] / 2;
      // activations saved at forward: i, f, g, o, tanh(c_next), each [H]
      auto act = auxd_of(n);
      const double* iv = act.data();
      const double* fv = iv + H;
      const double* gv = fv + H;
      const double* ov = gv + H;
      const double* tc = ov + H;
      const double* cp = in(1).val;
      double* ggate = gbuf(0);
      double* gcprev = gbuf(1);
      for (int j = 0; j < H; ++j) {
        double dh = g[j];
        double dc = g[H + j] + dh * ov[j] * (1.0 - tc[j] * tc[j]);
        if (ggate != nullptr) {
          double di = dc * gv[j];
          double df = dc * cp[j];
          double dg = dc * iv[j];
          double dout = dh * tc[j];
          ggate[j] += di * iv[j] * (1.0 - iv[j]);
          ggate[H + j] += df * fv[j] * (1.0 - fv[j]);
          ggate[2 * H + j] += dg * (1.0 - gv[j] * gv[j]);
          ggate[3 * H + j] += dout * ov[j] * (1.0 - ov[j]);
        }
        if (gcprev != nullptr) gcprev[j] += dc * fv[j];
      }
      break;
    }
  }
}

namespace {

Tensor binary_same_shape(const char* name, Op op, Tensor a, Tensor b) {
  check_live(a);
  check_live(b);
  check_same_tape(a, b);
  if (!(a.shape() == b.shape())) shape_error(name, a.shape(), b.shape());
  int args[2] = {a.id, b.id};
  return a.tape->emit(op, a.shape(), args);
}

Tensor unary(Op op, Tensor a) {
  check_live(a);
  int args[1] = {a.id};
  return a.tape->emit(op, a.shape(), args);
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
  Tensor out = binary_same_shape("add", Op::kAdd, a, b);
  auto va = a.value();
  auto vb = b.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = va[i] + vb[i];
  return out;
}

Tensor sub(Tensor a, Tensor b) {
  Tensor out = binary_same_shape("sub", Op::kSub, a, b);
  auto va = a.value();
  auto vb = b.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = va[i] - vb[i];
  return out;
}

Tensor mul(Tensor a, Tensor b) {
  Tensor out = binary_same_shape("mul", Op::kMul, a, b);
  auto va = a.value();
  auto vb = b.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = va[i] * vb[i];
  return out;
}

Tensor scale(Tensor a, double s) {
  check_live(a);
  int args[1] = {a.id};
  double aux[1] = {s};
  Tensor out = a.tape->emit(Op::kScale, a.shape(), args, {}, aux);
  auto va = a.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = s * va[i];
  return out;
}

Tensor tanh(Tensor a) {
  Tensor out = unary(Op::kTanh, a);
  auto va = a.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(va[i]);
  return out;
}

Tensor sigmoid(Tensor a) {
  Tensor out = unary(Op::kSigmoid, a);
  auto va = a.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-va[i]));
  return out;
}

Tensor exp(Tensor a) {
  Tensor out = unary(Op::kExp, a);
  auto va = a.value();
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = std::exp(va[i]);
  return out;
}

Tensor log(Tensor a) {
  check_live(a);
  auto va = a.value();
  for (double v : va)
    if (!(v > 0.0))
      throw std::domain_error("log: non-positive input " + std::to_string(v));
  Tensor out = unary(Op::kLog, a);
  auto o = out.tape->val_of(out.id);
  for (size_t i = 0; i < o.size(); ++i) o[i] = std::log(va[i]);
  return out;
}

Tensor matmul(Tensor a, Tensor b) {
  check_live(a);
  check_live(b);
  check_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank == 1 && sb.rank == 1) shape_error("matmul", sa, sb);

  int m, k, n;
  Shape out_shape;
  if (sa.rank == 1) {  // [k] * [k x n] -> [n]
    m = 1;
    k = sa.d[0];
    n = sb.d[1];
    if (sb.d[0] != k) shape_error("matmul", sa, sb);
    out_shape = Shape::vec(n);
  } else if (sb.rank == 1) {  // [m x k] * [k] -> [m]
    m = sa.d[0];
    k = sa.d[1];
    n = 1;
    if (sb.d[0] != k) shape_error("matmul", sa, sb);
    out_shape = Shape::vec(m);
  } else {
    m = sa.d[0];
    k = sa.d[1];
    n = sb.d[1];
    if (sb.d[0] != k) shape_error("matmul", sa, sb);
    out_shape = Shape::mat(m, n);
  }
  int args[2] = {a.id, b.id};
  int aux[3] = {m, k, n};
  Tensor out = a.tape->emit(Op::kMatmul, out_shape, args, aux);
  auto o = out.tape->val_of(out.id);
  std::fill(o.begin(), o.end(), 0.0);
  if (n == 1)
    matvec_acc(a.value().data(), b.value().data(), o.data(), m, k);
  else
    matmul_acc(a.value().data(), b.value().data(), o.data(), m, k, n);
  return out;
}

Tensor concat(Tensor a, Tensor b) {
  check_live(a);
  check_live(b);
  check_same_tape(a, b);
  if (a.shape().rank != 1 || b.shape().rank != 1)
    shape_error("concat", a.shape(), b.shape());
  int args[2] = {a.id, b.id};
  Tensor out =
      a.tape->emit(Op::kConcat, Shape::vec(a.shape().d[0] + b.shape().d[0]), args);
  auto o = out.tape->val_of(out.id);
  auto va = a.value();
  auto vb = b.value();
  std::copy(va.begin(), va.end(), o.begin());
  std::copy(vb.begin(), vb.end(), o.begin() + va.size());
  return out;
}

Tensor slice(Tensor a, int begin, int len) {
  check_live(a);
  if (a.shape().rank != 1 || begin < 0 || len < 1 ||
      begin + len > a.shape().d[0])
    throw std::invalid_argument("slice: [" + std::to_string(begin) + "," +
                                std::to_string(begin + len) + ") of " +
                                a.shape().str());
  int args[1] = {a.id};
  int aux[1] = {begin};
  Tensor out = a.tape->emit(Op::kSlice, Shape::vec(len), args, aux);
  auto o = out.tape->val_of(out.id);
  auto va = a.value();
  std::copy(va.begin() + begin, va.begin() + begin + len, o.begin());
  return out;
}

Tensor row(Tensor a, int r) {
  check_live(a);
  if (a.shape().rank != 2 || r < 0 || r >= a.shape().d[0])
    throw std::out_of_range("row " + std::to_string(r) + " of " +
                            a.shape().str());
  int args[1] = {a.id};
  int aux[1] = {r};
  int d = a.shape().d[1];
  Tensor out = a.tape->emit(Op::kRow, Shape::vec(d), args, aux);
  auto o = out.tape->val_of(out.id);
  auto va = a.value();
  std::copy(va.begin() + static_cast<size_t>(r) * d,
            va.begin() + static_cast<size_t>(r + 1) * d, o.begin());
  return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  check_live(rows[0]);
  Tape* tape = rows[0].tape;
  int d = rows[0].shape().d[0];
  std::vector<int> args;
  args.reserve(rows.size());
  for (const Tensor& t : rows) {
    check_live(t);
    if (t.tape != tape) throw std::runtime_error("stack_rows: mixed tapes");
    if (t.shape().rank != 1 || t.shape().d[0] != d)
      shape_error("stack_rows", rows[0].shape(), t.shape());
    args.push_back(t.id);
  }
  Tensor out = tape->emit(Op::kStackRows,
                          Shape::mat(static_cast<int>(rows.size()), d), args);
  auto o = out.tape->val_of(out.id);
  for (size_t t = 0; t < rows.size(); ++t) {
    auto v = rows[t].value();
    std::copy(v.begin(), v.end(), o.begin() + t * static_cast<size_t>(d));
  }
  return out;
}

Tensor sum(Tensor a) {
  check_live(a);
  int args[1] = {a.id};
  Tensor out = a.tape->emit(Op::kSum, Shape::scalar(), args);
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  out.tape->val_of(out.id)[0] = acc;
  return out;
}

namespace {

Tensor softmax_family(Op op, Tensor a, double temperature) {
  check_live(a);
  if (!(temperature > 0.0))
    throw std::domain_error("softmax: non-positive temperature " +
                            std::to_string(temperature));
  int args[1] = {a.id};
  double aux[1] = {temperature};
  Tensor out = a.tape->emit(op, a.shape(), args, {}, aux);
  auto o = out.tape->val_of(out.id);
  auto va = a.value();
  int rows = a.shape().rank == 2 ? a.shape().d[0] : 1;
  int cols = a.shape().rank == 2 ? a.shape().d[1] : a.shape().d[0];
  double inv_temp = 1.0 / temperature;
  for (int r = 0; r < rows; ++r) {
    const double* x = va.data() + static_cast<size_t>(r) * cols;
    double* y = o.data() + static_cast<size_t>(r) * cols;
    if (op == Op::kSoftmax)
      softmax_row(x, y, cols, inv_temp);
    else
      log_softmax_row(x, y, cols, inv_temp);
  }
  return out;
}

}  // namespace

Tensor softmax(Tensor a, double temperature) {
  return softmax_family(Op::kSoftmax, a, temperature);
}

Tensor log_softmax(Tensor a, double temperature) {
  return softmax_family(Op::kLogSoftmax, a, temperature);
}

Tensor embedding_lookup(Tensor table, std::span<const int> ids) {
  check_live(table);
  if (table.shape().rank != 2)
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " +
                                table.shape().str());
  int V = table.shape().d[0];
  int d = table.shape().d[1];
  for (int id : ids)
    if (id < 0 || id >= V)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " out of range for table " + table.shape().str());
  if (ids.empty())
    throw std::invalid_argument("embedding_lookup: empty id list");
  int args[1] = {table.id};
  Tensor out = table.tape->emit(Op::kEmbedLookup,
                                Shape::mat(static_cast<int>(ids.size()), d),
                                args, ids);
  auto o = out.tape->val_of(out.id);
  auto tv = table.value();
  for (size_t t = 0; t < ids.size(); ++t)
    std::copy(tv.begin() + static_cast<size_t>(ids[t]) * d,
              tv.begin() + static_cast<size_t>(ids[t] + 1) * d,
              o.begin() + t * static_cast<size_t>(d));
  return out;
}

Tensor max_pool_time(Tensor states, int window) {
  check_live(states);
  if (states.shape().rank != 2)
    throw std::invalid_argument("max_pool_time: states must be rank 2, got " +
                                states.shape().str());
  if (window < 1)
    throw std::invalid_argument("max_pool_time: window " +
                                std::to_string(window) + " < 1");
  int T = states.shape().d[0];
  int d = states.shape().d[1];
  int out_t = (T + window - 1) / window;
  auto sv = states.value();
  std::vector<int> arg(static_cast<size_t>(out_t) * d);
  std::vector<double> val(static_cast<size_t>(out_t) * d);
  for (int r = 0; r < out_t; ++r) {
    int t0 = r * window;
    int t1 = std::min(T, t0 + window);
    for (int j = 0; j < d; ++j) {
      int best = t0;
      double bv = sv[static_cast<size_t>(t0) * d + j];
      for (int t = t0 + 1; t < t1; ++t) {
        double v = sv[static_cast<size_t>(t) * d + j];
        if (v > bv) {
          bv = v;
          best = t;
        }
      }
      arg[static_cast<size_t>(r) * d + j] = best;
      val[static_cast<size_t>(r) * d + j] = bv;
    }
  }
  int args[1] = {states.id};
  Tensor out =
      states.tape->emit(Op::kMaxPoolTime, Shape::mat(out_t, d), args, arg);
  auto o = out.tape->val_of(out.id);
  std::copy(val.begin(), val.end(), o.begin());
  return out;
}

Tensor cross_entropy_logits(Tensor logits, int target) {
  check_live(logits);
  if (logits.shape().rank != 1)
    throw std::invalid_argument("cross_entropy_logits: logits must be rank 1");
  int n = logits.shape().d[0];
  if (target < 0 || target >= n)
    throw std::out_of_range("cross_entropy_logits: target " +
                            std::to_string(target) + " out of range [0," +
                            std::to_string(n) + ")");
  auto lv = logits.value();
  std::vector<double> probs(static_cast<size_t>(n));
  softmax_row(lv.data(), probs.data(), n, 1.0);
  std::vector<double> ls(static_cast<size_t>(n));
  log_softmax_row(lv.data(), ls.data(), n, 1.0);
  int args[1] = {logits.id};
  int auxi[1] = {target};
  Tensor out = logits.tape->emit(Op::kCrossEntropyLogits, Shape::scalar(), args,
                                 auxi, probs);
  out.tape->val_of(out.id)[0] = -ls[static_cast<size_t>(target)];
  return out;
}

Tensor gumbel_softmax_st(Tensor logits, double temperature, Rng& rng) {
  check_live(logits);
  if (logits.shape().rank != 1)
    throw std::invalid_argument("gumbel_softmax_st: logits must be rank 1");
  if (!(temperature > 0.0))
    throw std::domain_error("gumbel_softmax_st: non-positive temperature " +
                            std::to_string(temperature));
  int n = logits.shape().d[0];
  auto lv = logits.value();
  std::vector<double> z(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<size_t>(i)] = lv[i] + rng.gumbel();
  int hard = argmax_lowest(z.data(), n);
  std::vector<double> aux(static_cast<size_t>(n) + 1);
  aux[0] = temperature;
  softmax_row(z.data(), aux.data() + 1, n, 1.0 / temperature);
  int args[1] = {logits.id};
  int auxi[1] = {hard};
  Tensor out = logits.tape->emit(Op::kGumbelSoftmaxSt, logits.shape(), args,
                                 auxi, aux);
  auto o = out.tape->val_of(out.id);
  std::fill(o.begin(), o.end(), 0.0);
  o[static_cast<size_t>(hard)] = 1.0;
  return out;
}

Tensor dropout(Tensor a, double rate, Rng& rng) {
  check_live(a);
  if (rate < 0.0 || rate >= 1.0)
    throw std::domain_error("dropout: rate " + std::to_string(rate) +
                            " outside [0,1)");
  int n = a.shape().numel();
  std::vector<double> mask(static_cast<size_t>(n));
  double keep_scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < n; ++i)
    mask[static_cast<size_t>(i)] = rng.uniform() >= rate ? keep_scale : 0.0;
  int args[1] = {a.id};
  Tensor out = a.tape->emit(Op::kDropout, a.shape(), args, {}, mask);
  auto o = out.tape->val_of(out.id);
  auto va = a.value();
  for (int i = 0; i < n; ++i) o[static_cast<size_t>(i)] = va[i] * mask[static_cast<size_t>(i)];
  return out;
}

Tensor lstm_cell(Tensor gates, Tensor c_prev) {
  check_live(gates);
  check_live(c_prev);
  check_same_tape(gates, c_prev);
  if (gates.shape().rank != 1 || c_prev.shape().rank != 1 ||
      gates.shape().d[0] != 4 * c_prev.shape().d[0])
    shape_error("lstm_cell", gates.shape(), c_prev.shape());
  int H = c_prev.shape().d[0];
  auto gv = gates.value();
  auto cp = c_prev.value();
  std::vector<double> act(static_cast<size_t>(5) * H);
  std::vector<double> out(static_cast<size_t>(2) * H);
  for (int j = 0; j < H; ++j) {
    double ig = 1.0 / (1.0 + std::exp(-gv[static_cast<size_t>(j)]));
    double fg = 1.0 / (1.0 + std::exp(-gv[static_cast<size_t>(H + j)]));
    double gg = std::tanh(gv[static_cast<size_t>(2 * H + j)]);
    double og = 1.0 / (1.0 + std::exp(-gv[static_cast<size_t>(3 * H + j)]));
    double c = fg * cp[static_cast<size_t>(j)] + ig * gg;
    double tc = std::tanh(c);
    act[static_cast<size_t>(j)] = ig;
    act[static_cast<size_t>(H + j)] = fg;
    act[static_cast<size_t>(2 * H + j)] = gg;
    act[static_cast<size_t>(3 * H + j)] = og;
    act[static_cast<size_t>(4 * H + j)] = tc;
    out[static_cast<size_t>(j)] = og * tc;
    out[static_cast<size_t>(H + j)] = c;
  }
  int args[2] = {gates.id, c_prev.id};
  Tensor t = gates.tape->emit(Op::kLstmCell, Shape::vec(2 * H), args, {}, act);
  auto o = t.tape->val_of(t.id);
  std::copy(out.begin(), out.end(), o.begin());
  return t;
}

double fd_max_rel_error(std::span<const double> analytic,
                        std::span<const double> numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double finite_difference_check(
    const std::function<Tensor(Tape&, std::span<const Tensor>)>& f,
    std::span<const FdParam> params, double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("finite_difference_check: epsilon must be > 0");

  auto eval = [&](std::span<const FdParam> p, bool want_grad,
                  std::vector<std::vector<double>>* grads) -> double {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(p.size());
    for (const FdParam& fp : p)
      leaves.push_back(tape.leaf(fp.shape, fp.value, want_grad));
    Tensor loss = f(tape, leaves);
    double v = loss.scalar();
    if (want_grad) {
      tape.backward(loss);
      grads->clear();
      for (const Tensor& l : leaves) {
        auto g = l.grad();
        grads->emplace_back(g.begin(), g.end());
        if (grads->back().empty())
          grads->back().assign(static_cast<size_t>(l.shape().numel()), 0.0);
      }
    }
    return v;
  };

  std::vector<std::vector<double>> analytic;
  eval(params, true, &analytic);

  std::vector<FdParam> work(params.begin(), params.end());
  double worst = 0.0;
  for (size_t p = 0; p < work.size(); ++p) {
    for (size_t c = 0; c < work[p].value.size(); ++c) {
      double orig = work[p].value[c];
      work[p].value[c] = orig + epsilon;
      double fp = eval(work, false, nullptr);
      work[p].value[c] = orig - epsilon;
      double fm = eval(work, false, nullptr);
      work[p].value[c] = orig;
      double numeric = (fp - fm) / (2.0 * epsilon);
      double a = analytic[p][c];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace latentseq::ad
