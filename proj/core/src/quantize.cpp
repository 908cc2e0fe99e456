#include "mambatext/quantize.hpp"

#include <cmath>

namespace mambatext {

float quantization_scale(const Tensor<float>& t) {
    const float m = max_abs(t);
    return m == 0.0f ? 1.0f : m / 127.0f;
}

std::uint64_t QuantizedModel::weight_param_count() const {
    std::uint64_t n = 0;
    for (const auto& w : weights) n += w.q.size();
    return n;
}

std::uint64_t QuantizedModel::bias_param_count() const {
    std::uint64_t n = 0;
    for (const auto& [name, t] : biases) n += t.size();
    return n;
}

QuantizedModel quantize_int8(const MambaClassifier<float>& m) {
    QuantizedModel qm;
    qm.cfg = m.cfg;
    m.for_each_param([&qm](const std::string& name, const Tensor<float>& t) {
        if (!t.all_finite()) throw DivergedLoss("quantize_int8: tensor " + name + " not finite");
        if (t.rank() >= 2) {
            QuantizedTensor qt;
            qt.name = name;
            qt.shape = t.shape();
            qt.scale = quantization_scale(t);
            qt.q.resize(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) {
                long v = std::lround(t[i] / qt.scale);
                if (v > 127) v = 127;
                if (v < -127) v = -127;
                qt.q[i] = static_cast<std::int8_t>(v);
            }
            qm.weights.push_back(std::move(qt));
        } else {
            qm.biases.emplace_back(name, t);
        }
    });
    return qm;
}

MambaClassifier<float> dequantize(const QuantizedModel& qm) {
    MambaClassifier<float> m = MambaClassifier<float>::zeros(qm.cfg);
    std::size_t wi = 0, bi = 0;
    m.for_each_param([&](const std::string& name, Tensor<float>& t) {
        if (t.rank() >= 2) {
            if (wi >= qm.weights.size() || qm.weights[wi].name != name ||
                qm.weights[wi].shape != t.shape())
                throw ArtifactMismatch("dequantize: weight table does not match config at " +
                                       name);
            const QuantizedTensor& qt = qm.weights[wi++];
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] = static_cast<float>(qt.q[i]) * qt.scale;
        } else {
            if (bi >= qm.biases.size() || qm.biases[bi].first != name ||
                !qm.biases[bi].second.same_shape(t))
                throw ArtifactMismatch("dequantize: bias table does not match config at " + name);
            t = qm.biases[bi++].second;
        }
    });
    return m;
}

}  // namespace mambatext
