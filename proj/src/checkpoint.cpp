#include "latentseq/checkpoint.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace latentseq::io {

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta)
    if (k == key) {
      v = value;
      return;
    }
  meta.emplace_back(key, value);
}

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

double Checkpoint::meta_double(const std::string& key, double fallback) const {
  const std::string* v = find_meta(key);
  return v == nullptr ? fallback : std::stod(*v);
}

long Checkpoint::meta_long(const std::string& key, long fallback) const {
  const std::string* v = find_meta(key);
  return v == nullptr ? fallback : std::stol(*v);
}

namespace {

uint64_t fnv1a(const char* data, size_t n) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream header;
  header << Checkpoint::kMagic << '\n';
  header << "kind " << ckpt.kind << '\n';
  for (const auto& [k, v] : ckpt.meta) header << "meta " << k << ' ' << v << '\n';
  for (const auto& [k, v] : ckpt.config.items)
    header << "config " << k << ' ' << v << '\n';
  if (!ckpt.rng_state.empty()) header << "rng " << ckpt.rng_state << '\n';

  size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    header << "tensor " << t.name << ' ' << t.shape.rank;
    for (int i = 0; i < t.shape.rank; ++i) header << ' ' << t.shape.d[static_cast<size_t>(i)];
    header << ' ' << offset << '\n';
    offset += t.data.size() * sizeof(double);
  }
  header << "payload " << offset << '\n';

  std::string payload;
  payload.reserve(offset);
  for (const auto& t : ckpt.tensors) {
    size_t at = payload.size();
    payload.resize(at + t.data.size() * sizeof(double));
    std::memcpy(payload.data() + at, t.data.data(),
                t.data.size() * sizeof(double));
  }

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp);
    f << header.str();
    f.write(payload.data(), static_cast<long>(payload.size()));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(payload.data(), payload.size())));
    f << "\nchecksum " << buf << '\n';
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);

  Checkpoint ckpt;
  std::string line;
  if (!std::getline(f, line) || line != Checkpoint::kMagic)
    throw std::runtime_error("checkpoint: version mismatch in " + path +
                             " (expected '" + Checkpoint::kMagic + "')");

  struct PendingTensor {
    std::string name;
    ad::Shape shape;
    size_t offset;
  };
  std::vector<PendingTensor> pending;
  size_t payload_bytes = 0;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "kind") {
      is >> ckpt.kind;
    } else if (tag == "meta") {
      std::string k, v;
      is >> k;
      std::getline(is, v);
      if (!v.empty() && v.front() == ' ') v.erase(0, 1);
      ckpt.meta.emplace_back(k, v);
    } else if (tag == "config") {
      std::string k, v;
      is >> k;
      std::getline(is, v);
      if (!v.empty() && v.front() == ' ') v.erase(0, 1);
      ckpt.config.set(k, v);
    } else if (tag == "rng") {
      std::getline(is, ckpt.rng_state);
      if (!ckpt.rng_state.empty() && ckpt.rng_state.front() == ' ')
        ckpt.rng_state.erase(0, 1);
    } else if (tag == "tensor") {
      PendingTensor t;
      int rank;
      is >> t.name >> rank;
      if (rank < 1 || rank > 2)
        throw std::runtime_error("checkpoint: bad tensor rank in " + path);
      t.shape.rank = rank;
      for (int i = 0; i < rank; ++i) is >> t.shape.d[static_cast<size_t>(i)];
      is >> t.offset;
      if (!is) throw std::runtime_error("checkpoint: bad tensor line in " + path);
      pending.push_back(std::move(t));
    } else if (tag == "payload") {
      is >> payload_bytes;
      break;
    } else {
      throw std::runtime_error("checkpoint: unexpected header line '" + line +
                               "' in " + path);
    }
  }

  std::string payload(payload_bytes, '\0');
  f.read(payload.data(), static_cast<long>(payload_bytes));
  if (static_cast<size_t>(f.gcount()) != payload_bytes)
    throw std::runtime_error("checkpoint: truncated payload in " + path);

  std::getline(f, line);  // newline before checksum
  if (!std::getline(f, line) || line.rfind("checksum ", 0) != 0)
    throw std::runtime_error("checkpoint: missing checksum in " + path);
  unsigned long long stated = std::stoull(line.substr(9), nullptr, 16);
  if (stated != fnv1a(payload.data(), payload.size()))
    throw std::runtime_error("checkpoint: checksum failure in " + path +
                             " (corrupted file)");

  for (const PendingTensor& p : pending) {
    Checkpoint::TensorEntry t;
    t.name = p.name;
    t.shape = p.shape;
    size_t n = static_cast<size_t>(p.shape.numel());
    if (p.offset + n * sizeof(double) > payload.size())
      throw std::runtime_error("checkpoint: tensor " + p.name +
                               " overruns payload in " + path);
    t.data.resize(n);
    std::memcpy(t.data.data(), payload.data() + p.offset, n * sizeof(double));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void pack_store(Checkpoint& ckpt, const nn::ParamStore& store,
                bool with_opt_state) {
  for (const auto& p : store.all()) {
    ckpt.tensors.push_back({p.name, p.shape, p.value});
    if (with_opt_state) {
      ckpt.tensors.push_back({p.name + "#m", p.shape, p.adam_m});
      ckpt.tensors.push_back({p.name + "#v", p.shape, p.adam_v});
    }
  }
}

void unpack_store(const Checkpoint& ckpt, nn::ParamStore& store,
                  bool with_opt_state) {
  auto find = [&](const std::string& name) -> const Checkpoint::TensorEntry* {
    for (const auto& t : ckpt.tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  for (auto& p : store.all()) {
    const Checkpoint::TensorEntry* t = find(p.name);
    if (t == nullptr)
      throw std::runtime_error("checkpoint: missing tensor " + p.name);
    if (!(t->shape == p.shape))
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name +
                               ": " + t->shape.str() + " vs " + p.shape.str());
    p.value = t->data;
    if (with_opt_state) {
      const Checkpoint::TensorEntry* m = find(p.name + "#m");
      const Checkpoint::TensorEntry* v = find(p.name + "#v");
      if (m == nullptr || v == nullptr)
        throw std::runtime_error("checkpoint: missing optimizer state for " +
                                 p.name);
      p.adam_m = m->data;
      p.adam_v = v->data;
    }
  }
}

}  // namespace latentseq::io
