#pragma once

#include <string>
#include <vector>

#include "latentseq/rng.h"
#include "latentseq/sequence.h"

namespace latentseq::data {

struct Corpus {
  std::vector<Sequence> sentences;
  int domain = -1;

  int size() const { return static_cast<int>(sentences.size()); }
  bool empty() const { return sentences.empty(); }
  // content tokens + one EOS per sentence
  long total_predicted_tokens() const;
};

// Tokens with count >= min_count get ids in frequency order (ties broken
// alphabetically) after the reserved block; everything else maps to UNK.
Vocab build_vocab(const std::vector<std::string>& paths, int min_count);

Corpus load_corpus(const std::string& path, const Vocab& vocab, int domain);
void save_corpus(const std::string& path, const Corpus& corpus,
                 const Vocab& vocab);

// Random row-stochastic bigram language. Rows and the initial distribution
// are softmaxes of N(0, sigma^2) logits, which keeps token statistics far
// from uniform and the cipher identifiable from co-occurrence alone.
struct BigramGenerator {
  int vocab_size = 0;           // content types, ids 0..vocab_size-1
  std::vector<double> initial;  // [V]
  std::vector<double> transition;  // [V x V], row-major
};

struct SynthResult {
  Corpus corpus;
  BigramGenerator generator;
};

SynthResult synth_bigram_corpus(uint64_t seed, int vocab_size, int n_sentences,
                                int len_min, int len_max, int domain = 0);
// Continue sampling more sentences from an existing generator.
Corpus sample_from_generator(const BigramGenerator& gen, Rng& rng,
                             int n_sentences, int len_min, int len_max,
                             int domain);

// Bijection over non-reserved token ids; reserved ids map to themselves.
// For decipherment the cipher ids occupy a block disjoint from the plain ids
// so the two domains share no vocabulary.
struct CipherKey {
  std::vector<int> forward;  // forward[plain_id] = cipher_id; identity elsewhere

  int map(int id) const { return forward[static_cast<size_t>(id)]; }
  CipherKey inverse() const;
  void save(const std::string& path, const Vocab& vocab) const;
  static CipherKey load(const std::string& path, const Vocab& vocab);
};

// Random bijection from [plain_begin, plain_begin+n) onto
// [cipher_begin, cipher_begin+n); all other ids map to themselves.
CipherKey make_cipher_key(Rng& rng, int vocab_size, int plain_begin,
                          int cipher_begin, int n);

Corpus apply_cipher(const Corpus& corpus, const CipherKey& key,
                    int out_domain);

// One shuffled epoch of padded batches. Sentences are shuffled, locally
// length-sorted within a window of sort_buffer batches, then cut into
// batches padded with PAD; mask marks content tokens plus the EOS slot.
struct Batch {
  std::vector<const Sequence*> rows;
  int max_len = 0;                // content length of longest row
  std::vector<int> padded;        // rows x (max_len), PAD-filled
  std::vector<uint8_t> mask;      // rows x (max_len + 1): content + EOS slot
};

std::vector<Batch> batch_iter(const Corpus& corpus, int batch_size, Rng& rng,
                              int sort_buffer = 16);

}  // namespace latentseq::data
