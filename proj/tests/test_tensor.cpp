#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "latentseq/tensor.h"
#include "test_util.h"

using namespace latentseq;
using namespace latentseq::ad;
using testutil::rand_vec;

TEST_CASE("matmul identity and hand product") {
  Tape tape;
  std::vector<double> eye = {1, 0, 0, 1};
  std::vector<double> b = {5, 6, 7, 8};
  Tensor I = tape.leaf(Shape::mat(2, 2), eye);
  Tensor B = tape.leaf(Shape::mat(2, 2), b);
  Tensor out = matmul(I, B);
  for (int i = 0; i < 4; ++i) CHECK(out.value()[static_cast<size_t>(i)] == b[static_cast<size_t>(i)]);

  std::vector<double> a = {1, 2, 3, 4};
  Tensor A = tape.leaf(Shape::mat(2, 2), a);
  Tensor C = matmul(A, B);
  CHECK(C.value()[0] == doctest::Approx(19));
  CHECK(C.value()[1] == doctest::Approx(22));
  CHECK(C.value()[2] == doctest::Approx(43));
  CHECK(C.value()[3] == doctest::Approx(50));
}

TEST_CASE("matmul shape error names both shapes") {
  Tape tape;
  Tensor a = tape.zeros(Shape::mat(2, 3));
  Tensor b = tape.zeros(Shape::mat(4, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"),
                       std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  std::vector<FdParam> params = {{Shape::mat(2, 3), rand_vec(rng, 6)},
                                 {Shape::mat(3, 2), rand_vec(rng, 6)}};
  double err = finite_difference_check(
      [](Tape& t, std::span<const Tensor> p) {
        return sum(matmul(p[0], p[1]));
      },
      params, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise fixed points") {
  Tape tape;
  Tensor z = tape.zeros(Shape::vec(3));
  CHECK(tanh(z).value()[0] == 0.0);
  CHECK(sigmoid(z).value()[1] == doctest::Approx(0.5));

  Rng rng(3);
  std::vector<double> xv = rand_vec(rng, 3);
  Tensor x = tape.leaf(Shape::vec(3), xv);
  Tensor s = add(x, z);
  for (int i = 0; i < 3; ++i)
    CHECK(s.value()[static_cast<size_t>(i)] == xv[static_cast<size_t>(i)]);
}

TEST_CASE("elementwise shape mismatch rejected") {
  Tape tape;
  Tensor a = tape.zeros(Shape::vec(3));
  Tensor b = tape.zeros(Shape::vec(4));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  std::vector<double> v = {1.0, -0.5};
  Tensor x = tape.leaf(Shape::vec(2), v);
  CHECK_THROWS_AS(log(x), std::domain_error);
}

TEST_CASE("tanh derivative at 0.3 matches finite differences") {
  std::vector<FdParam> params = {{Shape::vec(1), {0.3}}};
  double err = finite_difference_check(
      [](Tape& t, std::span<const Tensor> p) { return sum(tanh(p[0])); },
      params, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("softmax closed forms") {
  Tape tape;
  Tensor u = tape.zeros(Shape::vec(4));
  auto su = softmax(u).value();
  for (double v : su) CHECK(v == doctest::Approx(0.25));

  std::vector<double> lv = {0.0, std::log(3.0)};
  Tensor l = tape.leaf(Shape::vec(2), lv);
  auto sl = softmax(l, 1.0).value();
  CHECK(sl[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sl[1] == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(l, 0.0), std::domain_error);
  CHECK_THROWS_AS(softmax(l, -1.0), std::domain_error);
}

TEST_CASE("softmax shift invariance and row normalization") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Tape tape;
    int n = 2 + rng.uniform_int(6);
    std::vector<double> xv = rand_vec(rng, n, 10.0);
    Tensor x = tape.leaf(Shape::vec(n), xv);
    double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = xv;
    for (double& v : shifted) v += c;
    Tensor xs = tape.leaf(Shape::vec(n), shifted);
    auto a = softmax(x).value();
    auto b = softmax(xs).value();
    double sum_a = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(a[static_cast<size_t>(i)] == doctest::Approx(b[static_cast<size_t>(i)]).epsilon(1e-9));
      sum_a += a[static_cast<size_t>(i)];
    }
    CHECK(std::abs(sum_a - 1.0) < 1e-12);
  }
}

TEST_CASE("log_softmax agrees with log of softmax") {
  Rng rng(7);
  Tape tape;
  std::vector<double> xv = rand_vec(rng, 5, 3.0);
  Tensor x = tape.leaf(Shape::vec(5), xv);
  auto ls = log_softmax(x).value();
  auto s = softmax(x).value();
  for (int i = 0; i < 5; ++i)
    CHECK(ls[static_cast<size_t>(i)] ==
          doctest::Approx(std::log(s[static_cast<size_t>(i)])).epsilon(1e-12));
}

TEST_CASE("embedding lookup gather and scatter-add gradient") {
  Rng rng(13);
  Tape tape;
  std::vector<double> tv = rand_vec(rng, 12);
  Tensor table = tape.leaf(Shape::mat(4, 3), tv, true);
  int ids0[1] = {0};
  Tensor r0 = embedding_lookup(table, ids0);
  for (int j = 0; j < 3; ++j)
    CHECK(r0.value()[static_cast<size_t>(j)] == tv[static_cast<size_t>(j)]);

  int ids[2] = {2, 2};
  Tensor out = embedding_lookup(table, ids);
  Tensor loss = sum(out);
  tape.backward(loss);
  auto g = table.grad();
  // repeated id accumulates both positions; unused rows stay zero
  for (int j = 0; j < 3; ++j) {
    CHECK(g[static_cast<size_t>(6 + j)] == doctest::Approx(2.0));
    CHECK(g[static_cast<size_t>(j)] == doctest::Approx(0.0));
    CHECK(g[static_cast<size_t>(3 + j)] == doctest::Approx(0.0));
    CHECK(g[static_cast<size_t>(9 + j)] == doctest::Approx(0.0));
  }

  int bad[1] = {4};
  CHECK_THROWS_AS(embedding_lookup(table, bad), std::out_of_range);
}

TEST_CASE("embedding lookup gradient matches finite differences") {
  Rng rng(17);
  std::vector<FdParam> params = {{Shape::mat(4, 3), rand_vec(rng, 12)}};
  double err = finite_difference_check(
      [](Tape& t, std::span<const Tensor> p) {
        int ids[3] = {2, 2, 1};
        return sum(tanh(embedding_lookup(p[0], ids)));
      },
      params, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("max_pool_time contract") {
  Rng rng(19);
  Tape tape;
  std::vector<double> sv = rand_vec(rng, 8);
  Tensor states = tape.leaf(Shape::mat(4, 2), sv);
  Tensor w1 = max_pool_time(states, 1);
  CHECK(w1.shape() == Shape::mat(4, 2));
  for (int i = 0; i < 8; ++i)
    CHECK(w1.value()[static_cast<size_t>(i)] == sv[static_cast<size_t>(i)]);

  Tensor whole = max_pool_time(states, 7);
  CHECK(whole.shape() == Shape::mat(1, 2));
  CHECK(whole.value()[0] ==
        std::max({sv[0], sv[2], sv[4], sv[6]}));

  std::vector<double> hv = {1, 5, 2, 4, 3, 0, 0, 9};
  Tensor hand = tape.leaf(Shape::mat(4, 2), hv);
  Tensor pooled = max_pool_time(hand, 2);
  CHECK(pooled.value()[0] == 2);
  CHECK(pooled.value()[1] == 5);
  CHECK(pooled.value()[2] == 3);
  CHECK(pooled.value()[3] == 9);

  CHECK_THROWS_AS(max_pool_time(states, 0), std::invalid_argument);
}

TEST_CASE("max_pool_time routes gradient to argmax") {
  Rng rng(23);
  std::vector<FdParam> params = {{Shape::mat(5, 3), rand_vec(rng, 15)}};
  double err = finite_difference_check(
      [](Tape& t, std::span<const Tensor> p) {
        return sum(max_pool_time(p[0], 2));
      },
      params, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("cross entropy closed forms and gradient") {
  Tape tape;
  Tensor u = tape.zeros(Shape::vec(5));
  CHECK(cross_entropy_logits(u, 3).scalar() == doctest::Approx(std::log(5.0)));

  std::vector<double> conf = {100.0, -100.0, -100.0};
  Tensor c = tape.leaf(Shape::vec(3), conf);
  CHECK(cross_entropy_logits(c, 0).scalar() == doctest::Approx(0.0));

  CHECK_THROWS_AS(cross_entropy_logits(u, 5), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy_logits(u, -1), std::out_of_range);

  // gradient = softmax(logits) - one_hot(target)
  Rng rng(29);
  Tape t2;
  std::vector<double> lv = rand_vec(rng, 4, 2.0);
  Tensor logits = t2.leaf(Shape::vec(4), lv, true);
  Tensor ce = cross_entropy_logits(logits, 2);
  t2.backward(ce);
  auto sm = softmax(t2.leaf(Shape::vec(4), lv)).value();
  auto g = logits.grad();
  for (int i = 0; i < 4; ++i) {
    double expected = sm[static_cast<size_t>(i)] - (i == 2 ? 1.0 : 0.0);
    CHECK(g[static_cast<size_t>(i)] == doctest::Approx(expected).epsilon(1e-10));
  }

  std::vector<FdParam> params = {{Shape::vec(4), rand_vec(rng, 4, 2.0)}};
  double err = finite_difference_check(
      [](Tape& t, std::span<const Tensor> p) {
        return cross_entropy_logits(p[0], 1);
      },
      params, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("gumbel softmax straight-through forward is exact one-hot") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    Tape tape;
    std::vector<double> lv = rand_vec(rng, 6, 3.0);
    Tensor logits = tape.leaf(Shape::vec(6), lv);
    Tensor out = gumbel_softmax_st(logits, 0.5 + rng.uniform(), rng);
    int ones = 0;
    for (double v : out.value()) {
      CHECK((v == 0.0 || v == 1.0));
      if (v == 1.0) ++ones;
    }
    CHECK(ones == 1);
  }
}

TEST_CASE("gumbel softmax: identical seed reproduces the one-hot") {
  std::vector<double> lv = {0.3, -0.2, 0.9, 0.1};
  auto draw = [&](uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    Tensor logits = tape.leaf(Shape::vec(4), lv);
    Tensor out = gumbel_softmax_st(logits, 1.0, rng);
    return std::vector<double>(out.value().begin(), out.value().end());
  };
  CHECK(draw(42) == draw(42));

  // replay the generator stream and recompute argmax independently
  Rng rng(42);
  std::vector<double> z = lv;
  for (double& v : z) v += rng.gumbel();
  int expect = 0;
  for (int i = 1; i < 4; ++i) if (z[static_cast<size_t>(i)] > z[static_cast<size_t>(expect)]) expect = i;
  auto oh = draw(42);
  CHECK(oh[static_cast<size_t>(expect)] == 1.0);
}

TEST_CASE("gumbel softmax: soft relaxation converges to the hard sample") {
  std::vector<double> lv = {0.4, 1.2, -0.3};
  Rng noise_rng(77);
  std::vector<double> g(3);
  for (double& v : g) v = noise_rng.gumbel();
  int hard = 0;
  for (int i = 1; i < 3; ++i)
    if (lv[static_cast<size_t>(i)] + g[static_cast<size_t>(i)] >
        lv[static_cast<size_t>(hard)] + g[static_cast<size_t>(hard)])
      hard = i;
  for (double temp : {1.0, 0.1, 0.01, 0.001}) {
    // soft = softmax((logits + g)/temp): mass concentrates on the argmax
    double m = -1e300;
    for (int i = 0; i < 3; ++i) m = std::max(m, (lv[static_cast<size_t>(i)] + g[static_cast<size_t>(i)]) / temp);
    double denom = 0.0, num = 0.0;
    for (int i = 0; i < 3; ++i) {
      double e = std::exp((lv[static_cast<size_t>(i)] + g[static_cast<size_t>(i)]) / temp - m);
      denom += e;
      if (i == hard) num = e;
    }
    if (temp <= 0.001) CHECK(num / denom > 1.0 - 1e-9);
  }
}

TEST_CASE("gumbel softmax ST backward equals gradient of the soft surrogate") {
  Rng value_rng(83);
  std::vector<double> lv = rand_vec(value_rng, 5, 2.0);
  std::vector<double> wv = rand_vec(value_rng, 5, 1.0);
  double temp = 0.7;
  uint64_t seed = 1234;

  // analytic grad through the ST op with fixed noise
  Tape tape;
  Tensor logits = tape.leaf(Shape::vec(5), lv, true);
  Rng op_rng(seed);
  Tensor onehot = gumbel_softmax_st(logits, temp, op_rng);
  Tensor w = tape.leaf(Shape::vec(5), wv);
  Tensor loss = sum(mul(w, onehot));
  tape.backward(loss);
  std::vector<double> analytic(logits.grad().begin(), logits.grad().end());

  // numeric grad of f(l) = dot(w, softmax((l + g)/temp)) with the same noise
  Rng noise_rng(seed);
  std::vector<double> g(5);
  for (double& v : g) v = noise_rng.gumbel();
  auto soft_value = [&](const std::vector<double>& l) {
    double m = -1e300;
    for (int i = 0; i < 5; ++i) m = std::max(m, (l[static_cast<size_t>(i)] + g[static_cast<size_t>(i)]) / temp);
    double denom = 0.0;
    std::vector<double> e(5);
    for (int i = 0; i < 5; ++i) {
      e[static_cast<size_t>(i)] = std::exp((l[static_cast<size_t>(i)] + g[static_cast<size_t>(i)]) / temp - m);
      denom += e[static_cast<size_t>(i)];
    }
    double out = 0.0;
    for (int i = 0; i < 5; ++i) out += wv[static_cast<size_t>(i)] * e[static_cast<size_t>(i)] / denom;
    return out;
  };
  std::vector<double> numeric(5);
  double eps = 1e-6;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> lp = lv, lm = lv;
    lp[static_cast<size_t>(i)] += eps;
    lm[static_cast<size_t>(i)] -= eps;
    numeric[static_cast<size_t>(i)] = (soft_value(lp) - soft_value(lm)) / (2 * eps);
  }
  CHECK(fd_max_rel_error(analytic, numeric) < 1e-4);
}

TEST_CASE("backward seed and linear chain") {
  Tape tape;
  std::vector<double> xv = {1.5};
  Tensor x = tape.leaf(Shape::vec(1), xv, true);
  Tensor loss = scale(x, 2.0);
  tape.backward(loss);
  CHECK(loss.grad()[0] == 1.0);  // d loss / d loss
  CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("backward errors") {
  Tape tape;
  Tensor v = tape.zeros(Shape::vec(3));
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);  // non-scalar

  Tensor s = tape.scalar_const(1.0);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), std::runtime_error);  // repeated backward

  Tape other;
  Tensor o = other.scalar_const(1.0);
  CHECK_THROWS_AS(tape.backward(o), std::runtime_error);  // foreign tape

  tape.reset();
  CHECK_THROWS_AS((void)s.value(), std::runtime_error);  // detached handle
}

TEST_CASE("random three-layer composition passes finite differences") {
  Rng rng(37);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<FdParam> params = {
        {Shape::mat(3, 4), rand_vec(rng, 12)},
        {Shape::mat(4, 3), rand_vec(rng, 12)},
        {Shape::vec(4), rand_vec(rng, 4)},
    };
    double err = finite_difference_check(
        [](Tape& t, std::span<const Tensor> p) {
          Tensor h1 = tanh(matmul(p[0], p[2]));               // [3]
          Tensor h2 = sigmoid(matmul(p[1], h1));              // [4]
          Tensor h3 = softmax(concat(h2, slice(h1, 0, 2)));   // [6]
          return cross_entropy_logits(h3, 1);
        },
        params, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite_difference_check calibration") {
  // exact for quadratics up to rounding
  Rng rng(41);
  std::vector<FdParam> q = {{Shape::vec(4), rand_vec(rng, 4)}};
  double err = finite_difference_check(
      [](Tape& t, std::span<const Tensor> p) { return sum(mul(p[0], p[0])); },
      q, 1e-5);
  CHECK(err < 1e-8);

  // a corrupted analytic gradient must be flagged
  std::vector<double> analytic = {1.0, 2.0, 3.0};
  std::vector<double> numeric = analytic;
  analytic[1] *= 1.05;
  CHECK(fd_max_rel_error(analytic, numeric) > 1e-2);

  CHECK_THROWS_AS(finite_difference_check(
                      [](Tape& t, std::span<const Tensor> p) {
                        return sum(p[0]);
                      },
                      q, 0.0),
                  std::invalid_argument);
}

TEST_CASE("every registered op passes a finite-difference check") {
  Rng rng(43);
  using F = std::function<Tensor(Tape&, std::span<const Tensor>)>;
  struct OpCase {
    const char* name;
    std::vector<FdParam> params;
    F f;
  };
  std::vector<OpCase> cases;
  cases.push_back({"add", {{Shape::vec(4), rand_vec(rng, 4)}, {Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(add(p[0], p[1])); }});
  cases.push_back({"sub", {{Shape::vec(4), rand_vec(rng, 4)}, {Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(tanh(sub(p[0], p[1]))); }});
  cases.push_back({"mul", {{Shape::vec(4), rand_vec(rng, 4)}, {Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(mul(p[0], p[1])); }});
  cases.push_back({"scale", {{Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(scale(p[0], -2.5)); }});
  cases.push_back({"tanh", {{Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(tanh(p[0])); }});
  cases.push_back({"sigmoid", {{Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(sigmoid(p[0])); }});
  cases.push_back({"exp", {{Shape::vec(4), rand_vec(rng, 4)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(exp(p[0])); }});
  {
    std::vector<double> pos = rand_vec(rng, 4);
    for (double& v : pos) v = 0.5 + std::abs(v);
    cases.push_back({"log", {{Shape::vec(4), pos}},
                     [](Tape&, std::span<const Tensor> p) { return sum(log(p[0])); }});
  }
  cases.push_back({"matmul", {{Shape::mat(3, 2), rand_vec(rng, 6)}, {Shape::mat(2, 4), rand_vec(rng, 8)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(tanh(matmul(p[0], p[1]))); }});
  cases.push_back({"matvec", {{Shape::mat(3, 2), rand_vec(rng, 6)}, {Shape::vec(2), rand_vec(rng, 2)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(matmul(p[0], p[1])); }});
  cases.push_back({"vecmat", {{Shape::vec(3), rand_vec(rng, 3)}, {Shape::mat(3, 2), rand_vec(rng, 6)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(matmul(p[0], p[1])); }});
  cases.push_back({"concat", {{Shape::vec(3), rand_vec(rng, 3)}, {Shape::vec(2), rand_vec(rng, 2)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(tanh(concat(p[0], p[1]))); }});
  cases.push_back({"slice", {{Shape::vec(6), rand_vec(rng, 6)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(slice(p[0], 2, 3)); }});
  cases.push_back({"row", {{Shape::mat(3, 4), rand_vec(rng, 12)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(row(p[0], 1)); }});
  cases.push_back({"stack_rows", {{Shape::vec(3), rand_vec(rng, 3)}, {Shape::vec(3), rand_vec(rng, 3)}},
                   [](Tape&, std::span<const Tensor> p) {
                     std::vector<Tensor> rows = {p[0], p[1]};
                     return sum(max_pool_time(stack_rows(rows), 2));
                   }});
  cases.push_back({"sum", {{Shape::mat(2, 3), rand_vec(rng, 6)}},
                   [](Tape&, std::span<const Tensor> p) { return sum(p[0]); }});
  cases.push_back({"softmax", {{Shape::vec(5), rand_vec(rng, 5)}},
                   [](Tape&, std::span<const Tensor> p) {
                     Tensor s = softmax(p[0], 0.8);
                     return sum(mul(s, s));
                   }});
  cases.push_back({"log_softmax", {{Shape::vec(5), rand_vec(rng, 5)}},
                   [](Tape&, std::span<const Tensor> p) {
                     return sum(log_softmax(p[0], 1.3));
                   }});
  cases.push_back({"embedding_lookup", {{Shape::mat(5, 3), rand_vec(rng, 15)}},
                   [](Tape&, std::span<const Tensor> p) {
                     int ids[4] = {0, 3, 3, 1};
                     return sum(tanh(embedding_lookup(p[0], ids)));
                   }});
  cases.push_back({"max_pool_time", {{Shape::mat(5, 2), rand_vec(rng, 10)}},
                   [](Tape&, std::span<const Tensor> p) {
                     return sum(max_pool_time(p[0], 2));
                   }});
  cases.push_back({"cross_entropy_logits", {{Shape::vec(5), rand_vec(rng, 5)}},
                   [](Tape&, std::span<const Tensor> p) {
                     return cross_entropy_logits(p[0], 2);
                   }});
  cases.push_back({"dropout", {{Shape::vec(6), rand_vec(rng, 6)}},
                   [](Tape&, std::span<const Tensor> p) {
                     Rng r(99);  // fixed mask for determinism
                     return sum(dropout(p[0], 0.4, r));
                   }});
  cases.push_back({"lstm_cell",
                   {{Shape::vec(12), rand_vec(rng, 12)}, {Shape::vec(3), rand_vec(rng, 3)}},
                   [](Tape&, std::span<const Tensor> p) {
                     return sum(lstm_cell(p[0], p[1]));
                   }});

  for (const auto& c : cases) {
    INFO(c.name);
    CHECK(finite_difference_check(c.f, c.params, 1e-5) < 1e-4);
  }
}

TEST_CASE("dropout semantics") {
  Rng rng(53);
  Tape tape;
  std::vector<double> xv = rand_vec(rng, 1000);
  Tensor x = tape.leaf(Shape::vec(1000), xv);
  Rng mask_rng(7);
  Tensor d = dropout(x, 0.3, mask_rng);
  int zeros = 0;
  for (int i = 0; i < 1000; ++i) {
    double v = d.value()[static_cast<size_t>(i)];
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(xv[static_cast<size_t>(i)] / 0.7));
  }
  CHECK(zeros > 200);
  CHECK(zeros < 400);
  CHECK_THROWS_AS(dropout(x, 1.0, mask_rng), std::domain_error);
}

TEST_CASE("leaf_ref accumulates into external buffers across tapes") {
  std::vector<double> value = {1.0, 2.0};
  std::vector<double> grad = {0.0, 0.0};
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Tensor p = tape.leaf_ref(Shape::vec(2), value.data(), grad.data());
    tape.backward(sum(p));
  }
  CHECK(grad[0] == 2.0);  // two backward passes, additive
  CHECK(grad[1] == 2.0);
}

TEST_CASE("tape replay determinism: bitwise-identical values and gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    Tensor a = tape.leaf(Shape::vec(6), rand_vec(rng, 6), true);
    Tensor oh = gumbel_softmax_st(a, 0.9, rng);
    Tensor d = dropout(tanh(a), 0.2, rng);
    Tensor loss = add(sum(mul(oh, d)), cross_entropy_logits(a, 3));
    tape.backward(loss);
    std::vector<double> out(a.grad().begin(), a.grad().end());
    out.push_back(loss.scalar());
    return out;
  };
  CHECK(run(2024) == run(2024));
}
