#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "tabby/model.hpp"
#include "tabby/schema.hpp"
#include "tabby/vocab.hpp"

namespace tabby {

// Layout: "TABBYCK\0", u32 version, u64 manifest length, manifest JSON,
// then every tensor as little-endian float32 in manifest order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model<float> model;
  Vocabulary vocab;
  Schema schema;
  std::string rng_state;
  std::uint64_t step = 0;
  // Free-form metadata: encoding, code book, training mode.
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

// Refuses to load when expected_fingerprint is given and differs from the stored schema's.
Checkpoint load_checkpoint(const std::string& path, const std::optional<std::string>& expected_fingerprint = {});

nlohmann::json read_checkpoint_manifest(const std::string& path);

}  // namespace tabby
