#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mambatext/model.hpp"
#include "mambatext/quantize.hpp"

namespace mambatext {

// Checkpoint container, bit-exact:
//   magic "MSSM" | version u32 LE | config block (u64 LE length +
//   canonical key=value text) | tensor count u32 LE | per tensor:
//   (name length u32 LE, name bytes, dtype code u8, rank u32 LE,
//    dims u64 LE..., [f32 scale for int8], raw little-endian payload) |
//   CRC32 (IEEE) of everything prior, u32 LE.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t crc32_ieee(const void* data, std::size_t len, std::uint32_t seed = 0);

// Extra provenance strings (data seed, class names, ...) stored in the
// config block under "x." keys; they round-trip verbatim.
using MetaMap = std::map<std::string, std::string>;

void save_checkpoint(const MambaClassifier<float>& m, const std::string& path,
                     const MetaMap& meta = {});

struct LoadedModel {
    MambaClassifier<float> model;
    MetaMap meta;
    bool was_quantized = false;
};

// Accepts both f32 and int8 checkpoints; int8 weights are dequantized to
// f32 on load.
LoadedModel load_checkpoint(const std::string& path);

void save_quantized(const QuantizedModel& qm, const std::string& path, const MetaMap& meta = {});
QuantizedModel load_quantized(const std::string& path, MetaMap* meta = nullptr);

// Serialized ModelConfig + meta block used inside checkpoints.
std::string encode_config_block(const ModelConfig& cfg, const MetaMap& meta);
void decode_config_block(const std::string& text, ModelConfig& cfg, MetaMap& meta);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace mambatext
