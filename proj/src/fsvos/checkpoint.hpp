#pragma once

#include "fsvos/nn.hpp"
#include "fsvos/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsvos {

// Versioned binary container for weights, optimizer state, config snapshot
// and rng states. Writing the same data twice yields identical bytes.
struct CheckpointData {
  struct TensorEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  struct Group {
    std::string name;  // "model", "iounet"
    std::vector<TensorEntry> tensors;
    int64_t adam_t = 0;
    std::vector<std::vector<double>> adam_m, adam_v;  // per tensor; may be empty
  };

  std::string config_text;
  int64_t epoch = 0;
  std::vector<Group> groups;
  std::vector<std::pair<std::string, std::string>> rng_states;

  const Group* find_group(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointData& d);
CheckpointData load_checkpoint(const std::string& path);

CheckpointData::Group pack_group(const std::string& name, const ParamStore& ps,
                                 const Adam* opt);
// loads values into an already-constructed store; names and shapes must match
void unpack_group(const CheckpointData::Group& g, ParamStore& ps, Adam* opt);

}  // namespace fsvos
