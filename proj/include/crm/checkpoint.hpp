#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crm/model.hpp"

namespace crm {

// Checkpoint container: magic "CRMW", format version byte, 32-bit
// little-endian header length, JSON header (config, vocabulary, tensor
// manifest), then raw little-endian 32-bit reals in manifest order.
// Adapters persist as "<target>.lora.A"/"<target>.lora.B" manifest entries
// plus header fields {"alpha":..., "rank":...}.

struct CheckpointData {
    NamedWeights weights;
    std::optional<LoraSet> lora;
    std::vector<std::string> provenance;  // source payload digests, merged models only
};

void save_checkpoint(const std::string& path, const NamedWeights& w,
                     const LoraSet* lora = nullptr,
                     const std::vector<std::string>& provenance = {});

CheckpointData load_checkpoint(const std::string& path);

// The f32 payload bytes exactly as save_checkpoint would write them.
std::vector<uint8_t> tensor_payload(const NamedWeights& w, const LoraSet* lora = nullptr);

// SHA-256 of the tensor payload; the provenance/determinism identity of a model.
std::string payload_digest(const NamedWeights& w, const LoraSet* lora = nullptr);

// Write-to-temp plus atomic rename; failures leave the target path absent.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace crm
