#pragma once

#include <string>

#include "geoclr/nn.hpp"
#include "json.hpp"

namespace geoclr {

/// On-disk container shared by encoder checkpoints and classifier models.
///
/// Layout (little-endian):
///   "GEOCLRCK"              8-byte magic
///   u8  version             kContainerVersion
///   u32 config length, then that many bytes of UTF-8 JSON
///   u32 tensor count
///   per tensor: u32 name length, name bytes, u32 rank, rank x u64 dims,
///               prod(dims) x f64 values
struct Container {
  nlohmann::json config = nlohmann::json::object();
  Parameters tensors;
};

constexpr std::uint8_t kContainerVersion = 1;

void write_container(const std::string& path, const Container& container);
/// Throws DataError on bad magic, version mismatch, truncation or trailing
/// bytes.
Container read_container(const std::string& path);

/// Encoder config under config["encoder"], optimizer settings and step under
/// config["optimizer"], moments as "adam.m.<name>" / "adam.v.<name>".
void save_checkpoint(const std::string& path, const TrainedEncoder& encoder);
TrainedEncoder load_checkpoint(const std::string& path);

/// Builds a TrainedEncoder from an already-read container; validates the
/// encoder config and parameter shapes.
TrainedEncoder encoder_from_container(const Container& container);
Container encoder_to_container(const TrainedEncoder& encoder);

}  // namespace geoclr
