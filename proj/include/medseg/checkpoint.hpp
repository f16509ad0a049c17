#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medseg/nets.hpp"

namespace medseg {

// Checkpoint archive: magic + JSON manifest (ordered names, shapes, meta) +
// raw float64 payload + content digest. Name-stable across versions;
// lossless round-trip.
void save_checkpoint(const NetworkWeights& w, const std::filesystem::path& path);
NetworkWeights load_checkpoint(const std::filesystem::path& path);

// Digest of the canonical serialized bytes (recomputable from file content).
uint64_t checkpoint_digest(const NetworkWeights& w);

std::vector<unsigned char> serialize_weights(const NetworkWeights& w);
NetworkWeights deserialize_weights(const std::vector<unsigned char>& bytes,
                                   const std::string& context);

}  // namespace medseg
