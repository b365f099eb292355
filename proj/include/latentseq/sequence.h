#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace latentseq {

// Token ids are dense 0..V-1 with the reserved block first.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocab with_reserved();

  int size() const { return static_cast<int>(tokens.size()); }
  int add(const std::string& tok);
  int id(const std::string& tok) const;  // kUnk when absent
  const std::string& token(int id) const;

  std::vector<int> encode(const std::string& line) const;
  std::string decode(const std::vector<int>& ids) const;

  // One token per line, line index = id - 4; reserved ids implicit.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
};

// A token-id sequence. Corpus sentences hold content ids only (no PAD, no
// BOS); decoded sequences carry a trailing EOS when they terminated.
struct Sequence {
  std::vector<int> ids;
  int domain = -1;

  int length() const { return static_cast<int>(ids.size()); }
  bool eos_terminated() const {
    return !ids.empty() && ids.back() == Vocab::kEos;
  }
  // Content ids with any trailing EOS removed.
  std::vector<int> content() const {
    std::vector<int> c = ids;
    if (eos_terminated()) c.pop_back();
    return c;
  }
};

}  // namespace latentseq
