#pragma once

#include <string>
#include <utility>
#include <vector>

#include "latentseq/training.h"

namespace latentseq::io {

// Ordered key=value pairs; later entries override earlier ones.
struct ConfigMap {
  std::vector<std::pair<std::string, std::string>> items;

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;  // last wins
};

// key=value lines; '#' starts a comment, blank lines ignored.
ConfigMap parse_config_file(const std::string& path);

// Builds a TrainConfig from file entries plus flag overrides (overrides
// win). Unknown keys and unparsable or out-of-range values are rejected.
train::TrainConfig make_train_config(const ConfigMap& file,
                                     const ConfigMap& overrides);

// Canonical snapshot of every config key.
ConfigMap config_snapshot(const train::TrainConfig& cfg);

}  // namespace latentseq::io
