#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crm/model.hpp"

namespace crm {

// Aggregated base weights plus low-rank adapters on the self-attention
// projection weights (Q, K, V, O) of every layer. The base is immutable
// after construction; training touches adapters and the head only.
struct MergedModel {
    NamedWeights base;
    LoraSet lora;
    std::vector<std::string> provenance;  // source payload digests
};

// Elementwise arithmetic mean per named tensor. Operands must share one
// canonical name scheme, architecture and vocabulary; summation order is
// fixed by sorting source digests so the result is permutation-invariant.
// Vocabulary/config come from the first model.
NamedWeights average_weights(const std::vector<const NamedWeights*>& models);

// One adapter per attention projection weight per layer. A is Gaussian
// (std 0.02, seeded), B starts at zero so the initial effective model equals
// the base exactly.
MergedModel attach_adapters(const NamedWeights& base, int rank, double alpha, uint64_t seed);

// base[name] + (alpha/rank) * A * B when adapted; base[name] otherwise.
Matrix2D effective_weight(const MergedModel& m, const std::string& name);

// Materializes every effective weight into a plain model; adapters discarded.
NamedWeights fold_adapters(const MergedModel& m);

// Sum over adapters of rank*(d+l), plus classification-head parameters when
// flagged.
int64_t trainable_param_count(const MergedModel& m, bool with_head);

int64_t total_param_count(const NamedWeights& w);

std::vector<std::string> adapted_tensor_names(const ModelConfig& c);

}  // namespace crm
