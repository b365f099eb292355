#pragma once

#include <string>
#include <vector>

#include "latentseq/config.h"
#include "latentseq/model.h"
#include "latentseq/tensor.h"

namespace latentseq::io {

// Text manifest (name, shape, byte offset) followed by little-endian
// double payload and a trailing FNV-1a checksum. Writes go through a temp
// file and an atomic rename; loads verify the checksum before returning.
struct Checkpoint {
  static constexpr const char* kMagic = "latentseq-checkpoint v1";

  std::string kind;  // "model" | "lm"
  std::vector<std::pair<std::string, std::string>> meta;
  ConfigMap config;
  std::string rng_state;

  struct TensorEntry {
    std::string name;
    ad::Shape shape;
    std::vector<double> data;
  };
  std::vector<TensorEntry> tensors;

  void set_meta(const std::string& key, const std::string& value);
  const std::string* find_meta(const std::string& key) const;
  double meta_double(const std::string& key, double fallback) const;
  long meta_long(const std::string& key, long fallback) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Store <-> checkpoint tensor helpers. with_opt_state also carries the Adam
// moments as "<name>#m" / "<name>#v" entries.
void pack_store(Checkpoint& ckpt, const nn::ParamStore& store,
                bool with_opt_state);
void unpack_store(const Checkpoint& ckpt, nn::ParamStore& store,
                  bool with_opt_state);

}  // namespace latentseq::io
