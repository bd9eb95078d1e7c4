#pragma once

// Checkpoint envelope: JSON with every tensor stored as
// {"shape": [...], "data_b64": base64(little-endian float64)}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdaqa/mask_module.hpp"
#include "mdaqa/model.hpp"
#include "mdaqa/training.hpp"

namespace mdaqa {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  ModelConfig model;
  ToyEncoderParams<double> encoder;
  MaskParams<double> mask;
  std::optional<MaskSnapshot> snapshot;
  OptimizerConfig optimizer;
  // Seeds of the random streams that produced this state, keyed by role.
  std::map<std::string, std::uint64_t> rng_streams;

  static Checkpoint capture(const QaModel& model, std::optional<MaskSnapshot> snapshot,
                            const OptimizerConfig& optimizer);
  QaModel restore() const;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws VersionError for an unknown format_version, ParseError otherwise.
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mdaqa
