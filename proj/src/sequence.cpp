#include "latentseq/sequence.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace latentseq {

Vocab Vocab::with_reserved() {
  Vocab v;
  v.tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < kReserved; ++i) v.index[v.tokens[static_cast<size_t>(i)]] = i;
  return v;
}

int Vocab::add(const std::string& tok) {
  auto it = index.find(tok);
  if (it != index.end()) return it->second;
  int id = size();
  tokens.push_back(tok);
  index[tok] = id;
  return id;
}

int Vocab::id(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocab: id " + std::to_string(id) +
                            " out of range [0," + std::to_string(size()) + ")");
  return tokens[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const std::string& line) const {
  std::vector<int> ids;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot write " + path);
  for (int i = kReserved; i < size(); ++i) f << tokens[static_cast<size_t>(i)] << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot read " + path);
  Vocab v = with_reserved();
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) v.add(line);
  }
  return v;
}

}  // namespace latentseq
