#include "latentseq/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace latentseq::data {

long Corpus::total_predicted_tokens() const {
  long n = 0;
  for (const Sequence& s : sentences) n += s.length() + 1;
  return n;
}

Vocab build_vocab(const std::vector<std::string>& paths, int min_count) {
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count < 1");
  std::map<std::string, long> counts;
  for (const std::string& path : paths) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("build_vocab: cannot read " + path);
    std::string line, tok;
    while (std::getline(f, line)) {
      std::istringstream is(line);
      while (is >> tok) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  // frequency descending, ties alphabetical (map iteration is already sorted)
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v = Vocab::with_reserved();
  for (const auto& [tok, cnt] : items)
    if (cnt >= min_count) v.add(tok);
  return v;
}

Corpus load_corpus(const std::string& path, const Vocab& vocab, int domain) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_corpus: cannot read " + path);
  Corpus c;
  c.domain = domain;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<int> ids = vocab.encode(line);
    if (ids.empty()) continue;
    c.sentences.push_back(Sequence{std::move(ids), domain});
  }
  return c;
}

void save_corpus(const std::string& path, const Corpus& corpus,
                 const Vocab& vocab) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_corpus: cannot write " + path);
  for (const Sequence& s : corpus.sentences) f << vocab.decode(s.content()) << '\n';
}

namespace {

std::vector<double> softmax_of_normals(Rng& rng, int n, double sigma) {
  std::vector<double> x(static_cast<size_t>(n));
  double m = -1e300;
  for (double& v : x) {
    v = sigma * rng.normal();
    m = std::max(m, v);
  }
  double s = 0.0;
  for (double& v : x) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : x) v /= s;
  return x;
}

int sample_categorical(const double* p, int n, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace

Corpus sample_from_generator(const BigramGenerator& gen, Rng& rng,
                             int n_sentences, int len_min, int len_max,
                             int domain) {
  if (len_min < 1 || len_max < len_min)
    throw std::invalid_argument("sample_from_generator: degenerate length range");
  Corpus c;
  c.domain = domain;
  int V = gen.vocab_size;
  for (int s = 0; s < n_sentences; ++s) {
    int len = len_min + rng.uniform_int(len_max - len_min + 1);
    std::vector<int> ids(static_cast<size_t>(len));
    int tok = sample_categorical(gen.initial.data(), V, rng);
    ids[0] = Vocab::kReserved + tok;
    for (int t = 1; t < len; ++t) {
      tok = sample_categorical(
          gen.transition.data() + static_cast<size_t>(tok) * V, V, rng);
      ids[static_cast<size_t>(t)] = Vocab::kReserved + tok;
    }
    c.sentences.push_back(Sequence{std::move(ids), domain});
  }
  return c;
}

SynthResult synth_bigram_corpus(uint64_t seed, int vocab_size, int n_sentences,
                                int len_min, int len_max, int domain) {
  if (vocab_size < 2)
    throw std::invalid_argument("synth_bigram_corpus: vocab_size < 2");
  if (n_sentences < 1)
    throw std::invalid_argument("synth_bigram_corpus: n_sentences < 1");
  Rng rng(seed);
  BigramGenerator gen;
  gen.vocab_size = vocab_size;
  constexpr double kSigma = 1.5;
  gen.initial = softmax_of_normals(rng, vocab_size, kSigma);
  gen.transition.reserve(static_cast<size_t>(vocab_size) * vocab_size);
  for (int i = 0; i < vocab_size; ++i) {
    auto row = softmax_of_normals(rng, vocab_size, kSigma);
    gen.transition.insert(gen.transition.end(), row.begin(), row.end());
  }
  SynthResult r;
  r.corpus = sample_from_generator(gen, rng, n_sentences, len_min, len_max, domain);
  r.generator = std::move(gen);
  return r;
}

CipherKey CipherKey::inverse() const {
  CipherKey inv;
  inv.forward.assign(forward.size(), 0);
  for (size_t i = 0; i < forward.size(); ++i)
    inv.forward[static_cast<size_t>(forward[i])] = static_cast<int>(i);
  return inv;
}

void CipherKey::save(const std::string& path, const Vocab& vocab) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cipher key: cannot write " + path);
  // one line per plain->cipher pair; plain ids precede cipher ids
  for (size_t i = 0; i < forward.size(); ++i) {
    int from = static_cast<int>(i);
    if (forward[i] > from && from >= Vocab::kReserved)
      f << vocab.token(from) << ' ' << vocab.token(forward[i]) << '\n';
  }
}

CipherKey CipherKey::load(const std::string& path, const Vocab& vocab) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cipher key: cannot read " + path);
  CipherKey key;
  key.forward.resize(static_cast<size_t>(vocab.size()));
  std::iota(key.forward.begin(), key.forward.end(), 0);
  std::string plain, cipher;
  while (f >> plain >> cipher) {
    int from = vocab.id(plain);
    int to = vocab.id(cipher);
    if (from == Vocab::kUnk || to == Vocab::kUnk)
      throw std::runtime_error("cipher key: token not in vocab: " + plain +
                                " / " + cipher);
    key.forward[static_cast<size_t>(from)] = to;
    key.forward[static_cast<size_t>(to)] = from;
  }
  return key;
}

CipherKey make_cipher_key(Rng& rng, int vocab_size, int plain_begin,
                          int cipher_begin, int n) {
  if (plain_begin + n > vocab_size || cipher_begin + n > vocab_size)
    throw std::invalid_argument("make_cipher_key: blocks exceed vocab");
  CipherKey key;
  key.forward.resize(static_cast<size_t>(vocab_size));
  std::iota(key.forward.begin(), key.forward.end(), 0);
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)],
              perm[static_cast<size_t>(rng.uniform_int(i + 1))]);
  // involution over the two blocks keeps the full table bijective
  for (int i = 0; i < n; ++i) {
    key.forward[static_cast<size_t>(plain_begin + i)] =
        cipher_begin + perm[static_cast<size_t>(i)];
    key.forward[static_cast<size_t>(cipher_begin + perm[static_cast<size_t>(i)])] =
        plain_begin + i;
  }
  return key;
}

Corpus apply_cipher(const Corpus& corpus, const CipherKey& key,
                    int out_domain) {
  Corpus out;
  out.domain = out_domain;
  out.sentences.reserve(corpus.sentences.size());
  for (const Sequence& s : corpus.sentences) {
    Sequence t;
    t.domain = out_domain;
    t.ids.reserve(s.ids.size());
    for (int id : s.ids) {
      if (id < 0 || id >= static_cast<int>(key.forward.size()))
        throw std::out_of_range("apply_cipher: token id " + std::to_string(id) +
                                " not covered by key");
      t.ids.push_back(key.map(id));
    }
    out.sentences.push_back(std::move(t));
  }
  return out;
}

std::vector<Batch> batch_iter(const Corpus& corpus, int batch_size, Rng& rng,
                              int sort_buffer) {
  if (batch_size < 1) throw std::invalid_argument("batch_iter: batch_size < 1");
  if (sort_buffer < 1) sort_buffer = 1;
  std::vector<int> order(static_cast<size_t>(corpus.size()));
  std::iota(order.begin(), order.end(), 0);
  for (int i = corpus.size() - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)],
              order[static_cast<size_t>(rng.uniform_int(i + 1))]);

  // local length sort within windows of sort_buffer * batch_size sentences
  int window = sort_buffer * batch_size;
  for (size_t w = 0; w < order.size(); w += static_cast<size_t>(window)) {
    auto b = order.begin() + static_cast<long>(w);
    auto e = order.begin() +
             static_cast<long>(std::min(w + static_cast<size_t>(window), order.size()));
    std::stable_sort(b, e, [&](int x, int y) {
      return corpus.sentences[static_cast<size_t>(x)].length() <
             corpus.sentences[static_cast<size_t>(y)].length();
    });
  }

  std::vector<Batch> batches;
  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
    Batch b;
    size_t end = std::min(at + static_cast<size_t>(batch_size), order.size());
    for (size_t i = at; i < end; ++i) {
      const Sequence& s = corpus.sentences[static_cast<size_t>(order[i])];
      b.rows.push_back(&s);
      b.max_len = std::max(b.max_len, s.length());
    }
    int rows = static_cast<int>(b.rows.size());
    b.padded.assign(static_cast<size_t>(rows) * b.max_len, Vocab::kPad);
    b.mask.assign(static_cast<size_t>(rows) * (b.max_len + 1), 0);
    for (int r = 0; r < rows; ++r) {
      const Sequence& s = *b.rows[static_cast<size_t>(r)];
      for (int t = 0; t < s.length(); ++t) {
        b.padded[static_cast<size_t>(r) * b.max_len + t] = s.ids[static_cast<size_t>(t)];
        b.mask[static_cast<size_t>(r) * (b.max_len + 1) + t] = 1;
      }
      b.mask[static_cast<size_t>(r) * (b.max_len + 1) + s.length()] = 1;  // EOS slot
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace latentseq::data
