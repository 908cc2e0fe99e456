#include "mambatext/train.hpp"

#include <algorithm>
#include <numeric>

#include "mambatext/parallel.hpp"
#include "mambatext/rng.hpp"

namespace mambatext {

namespace {

// Trailing PAD positions cannot influence a causal stack with masked
// pooling, so forward passes run on the unmasked prefix only.
EncodedDoc trimmed(const EncodedDoc& doc) {
    std::size_t last = 0;
    for (std::size_t i = doc.mask.size(); i-- > 0;) {
        if (doc.mask[i]) {
            last = i + 1;
            break;
        }
    }
    if (last == 0) throw AllMasked("document has no unmasked tokens");
    EncodedDoc out;
    out.ids.assign(doc.ids.begin(), doc.ids.begin() + static_cast<std::ptrdiff_t>(last));
    out.mask.assign(doc.mask.begin(), doc.mask.begin() + static_cast<std::ptrdiff_t>(last));
    out.label = doc.label;
    return out;
}

struct ItemGrads {
    double loss = 0.0;
    std::vector<Tensor<float>> grads;
};

ItemGrads item_backward(const MambaClassifier<float>& m, const EncodedDoc& doc) {
    const EncodedDoc d = trimmed(doc);
    Tape<float> tape;
    ModelVars<float> mv = register_params(tape, m);
    Var logits = model_forward(tape, mv, m.cfg, d.ids, d.mask);
    Var loss = softmax_cross_entropy(tape, logits, d.label);
    tape.backward(loss);
    ItemGrads out;
    out.loss = static_cast<double>(tape.val(loss)[0]);
    for (Var v : flatten_vars(mv)) out.grads.push_back(tape.grad(v));
    return out;
}

std::vector<Tensor<float>> snapshot_params(MambaClassifier<float>& m) {
    std::vector<Tensor<float>> out;
    m.for_each_param(
        [&out](const std::string&, const Tensor<float>& t) { out.push_back(t); });
    return out;
}

void restore_params(MambaClassifier<float>& m, const std::vector<Tensor<float>>& snap) {
    std::size_t i = 0;
    m.for_each_param([&](const std::string&, Tensor<float>& t) { t = snap[i++]; });
}

}  // namespace

std::vector<float> predict_probs(const MambaClassifier<float>& m, const EncodedDoc& doc) {
    const EncodedDoc d = trimmed(doc);
    Tensor<float> logits = model_forward(m, d.ids, d.mask);
    return softmax_probs(logits);
}

std::vector<std::vector<float>> batch_predict(const MambaClassifier<float>& m,
                                              const std::vector<EncodedDoc>& docs, int threads) {
    std::vector<std::vector<float>> out(docs.size());
    parallel_for(docs.size(), threads,
                 [&](std::size_t i) { out[i] = predict_probs(m, docs[i]); });
    return out;
}

double mean_loss(const MambaClassifier<float>& m, const std::vector<EncodedDoc>& docs,
                 int threads) {
    if (docs.empty()) throw EmptySplit("mean_loss: empty document set");
    std::vector<double> losses(docs.size());
    parallel_for(docs.size(), threads, [&](std::size_t i) {
        const EncodedDoc d = trimmed(docs[i]);
        Tensor<float> logits = model_forward(m, d.ids, d.mask);
        losses[i] = static_cast<double>(softmax_cross_entropy(logits, d.label));
    });
    double total = 0.0;  // ordered reduction
    for (double l : losses) total += l;
    return total / static_cast<double>(docs.size());
}

TrainResult train(MambaClassifier<float>& m, const std::vector<EncodedDoc>& train_set,
                  const std::vector<EncodedDoc>& val_set, const TrainHyper& hyper) {
    if (train_set.empty()) throw EmptySplit("train: training split is empty");
    if (val_set.empty()) throw EmptySplit("train: validation split is empty");
    const int threads = resolve_threads(hyper.threads);

    std::vector<Tensor<float>*> params;
    m.for_each_param([&params](const std::string&, Tensor<float>& t) { params.push_back(&t); });
    std::vector<const Tensor<float>*> cparams(params.begin(), params.end());
    AdamWConfig opt_cfg;
    opt_cfg.lr = hyper.lr;
    opt_cfg.weight_decay = hyper.weight_decay;
    AdamWState<float> state = AdamWState<float>::init(cparams, opt_cfg);

    TrainResult result;
    std::vector<Tensor<float>> best = snapshot_params(m);
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    const int batch = std::max(1, hyper.batch_size);
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        auto rng = make_rng(hyper.seed, "shuffle." + std::to_string(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
            const std::size_t n_items = stop - start;
            std::vector<ItemGrads> items(n_items);
            parallel_for(n_items, threads, [&](std::size_t j) {
                items[j] = item_backward(m, train_set[static_cast<std::size_t>(order[start + j])]);
            });
            std::vector<Tensor<float>> acc;
            acc.reserve(params.size());
            for (const Tensor<float>* p : params) acc.emplace_back(p->shape());
            const float inv = 1.0f / static_cast<float>(n_items);
            for (const ItemGrads& it : items) {  // ordered reduction over batch items
                if (!std::isfinite(it.loss))
                    throw DivergedLoss("train: non-finite loss at epoch " +
                                       std::to_string(epoch));
                epoch_loss += it.loss;
                for (std::size_t t = 0; t < acc.size(); ++t)
                    for (std::size_t k = 0; k < acc[t].size(); ++k)
                        acc[t][k] += it.grads[t][k] * inv;
            }
            adamw_step(params, acc, state);
            for (const Tensor<float>* p : params) {
                if (!p->all_finite())
                    throw DivergedLoss("train: parameters diverged at epoch " +
                                       std::to_string(epoch) + ", step " +
                                       std::to_string(state.step));
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
        stats.val_loss = mean_loss(m, val_set, threads);
        auto val_probs = batch_predict(m, val_set, threads);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < val_set.size(); ++i) {
            const auto& p = val_probs[i];
            const auto arg = std::distance(p.begin(), std::max_element(p.begin(), p.end()));
            correct += static_cast<int>(arg) == val_set[i].label ? 1 : 0;
        }
        stats.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_set.size());
        result.history.push_back(stats);

        if (stats.val_loss < best_val) {
            best_val = stats.val_loss;
            best = snapshot_params(m);
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= hyper.patience) break;
        }
    }

    restore_params(m, best);
    return result;
}

}  // namespace mambatext
