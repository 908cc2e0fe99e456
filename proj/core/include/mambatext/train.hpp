#pragma once

#include <cstdint>
#include <vector>

#include "mambatext/model.hpp"
#include "mambatext/optim.hpp"
#include "mambatext/text.hpp"

namespace mambatext {

struct TrainHyper {
    double lr = 1e-3;
    int batch_size = 16;
    int epochs = 20;
    int patience = 3;
    double weight_decay = 0.01;
    std::uint64_t seed = 42;
    int threads = 0;  // 0 = hardware concurrency
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

// Mini-batch AdamW on softmax cross-entropy over all parameters. Shuffling
// is seeded per epoch; batch gradients are averaged by an ordered reduction
// over batch items, so a fixed seed reproduces training bit for bit. Keeps
// the best-validation-loss snapshot and stops after `patience` epochs
// without improvement. Throws DivergedLoss as soon as a loss or parameter
// stops being finite.
TrainResult train(MambaClassifier<float>& m, const std::vector<EncodedDoc>& train_set,
                  const std::vector<EncodedDoc>& val_set, const TrainHyper& hyper);

// Softmax probabilities for one encoded document.
std::vector<float> predict_probs(const MambaClassifier<float>& m, const EncodedDoc& doc);

// Probability vectors for a document set, fanned out over read-only workers.
std::vector<std::vector<float>> batch_predict(const MambaClassifier<float>& m,
                                              const std::vector<EncodedDoc>& docs, int threads);

double mean_loss(const MambaClassifier<float>& m, const std::vector<EncodedDoc>& docs,
                 int threads);

}  // namespace mambatext
