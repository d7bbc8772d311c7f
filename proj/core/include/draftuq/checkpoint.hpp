#pragma once

// Model checkpoint files: a single JSON document with fixed field order
// {format_version, backend, V, n, H, bos_id, eos_id, params, provenance,
// seed_lineage}. Doubles are written with 17 significant digits so load(save(m))
// is value-exact for every finite double, including denormals and -0.0.

#include <cstdint>
#include <string>
#include <vector>

#include "draftuq/models.hpp"

namespace draftuq {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  AutoregressiveModel model;
  Provenance provenance = Provenance::TargetFamily;
  std::vector<std::uint64_t> seed_lineage;
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace draftuq
