#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mambatext/model.hpp"

namespace mambatext {

// Symmetric per-tensor int8 encoding: q = round(w / scale) with
// scale = max|w| / 127 (1.0 for an all-zero tensor).
struct QuantizedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<std::int8_t> q;
    float scale = 1.0f;
};

struct QuantizedModel {
    ModelConfig cfg;
    std::vector<QuantizedTensor> weights;             // rank >= 2 tensors
    std::vector<std::pair<std::string, Tensor<float>>> biases;  // rank-1, kept f32

    std::uint64_t weight_param_count() const;
    std::uint64_t bias_param_count() const;
};

QuantizedModel quantize_int8(const MambaClassifier<float>& m);

// Rebuilds an f32 model; every dequantized weight is within scale/2 of the
// original.
MambaClassifier<float> dequantize(const QuantizedModel& qm);

float quantization_scale(const Tensor<float>& t);

}  // namespace mambatext
