#pragma once

#include "gs4d/config.hpp"
#include "gs4d/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace gs4d {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    Model model;
    TrainState state;

    bool operator==(const Checkpoint&) const = default;
};

/// Little-endian container: 8-byte magic "G4DCKPT\0", u32 version, then
/// sections (u32 tag, u64 length, payload) CONF, GAUS, FILD, DNET, STAT,
/// then a CRC-32 of every preceding byte. Doubles are stored as their bit
/// patterns, so a round trip is exact.
std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws FormatError (bad magic), IntegrityError (CRC mismatch, truncated
/// or inconsistent payload) or UnsupportedVersion, checked in that order.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes through a temporary file and an atomic rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace gs4d
