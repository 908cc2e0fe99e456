#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mambatext/train.hpp"

using namespace mambatext;

namespace {

// 20 documents over two disjoint keyword vocabularies; linearly separable.
Corpus separable_corpus() {
    const std::vector<std::string> neg{"flow normal patent compressible vein study",
                                       "normal compressible patent flow segments",
                                       "patent vein normal flow study segments",
                                       "compressible patent segments normal study",
                                       "study normal vein patent compressible flow",
                                       "flow study segments patent normal vein",
                                       "normal patent study flow vein segments",
                                       "segments compressible normal patent study",
                                       "vein flow patent study compressible normal",
                                       "patent compressible flow segments study"};
    const std::vector<std::string> pos{"clot thrombus occlusive echogenic acute defect",
                                       "acute occlusive clot defect thrombus echogenic",
                                       "thrombus acute echogenic occlusive defect clot",
                                       "defect clot acute thrombus occlusive echogenic",
                                       "echogenic defect thrombus clot acute occlusive",
                                       "occlusive acute defect echogenic clot thrombus",
                                       "clot echogenic acute occlusive thrombus defect",
                                       "thrombus defect occlusive acute echogenic clot",
                                       "acute clot thrombus defect occlusive echogenic",
                                       "echogenic occlusive defect acute clot thrombus"};
    Corpus c;
    c.class_names = {"neg", "pos"};
    for (std::size_t i = 0; i < neg.size(); ++i)
        c.docs.push_back({"n" + std::to_string(i), neg[i], 0});
    for (std::size_t i = 0; i < pos.size(); ++i)
        c.docs.push_back({"p" + std::to_string(i), pos[i], 1});
    return c;
}

struct ToySetup {
    MambaClassifier<float> model;
    std::vector<EncodedDoc> train_set;
    std::vector<EncodedDoc> val_set;
};

ToySetup make_setup(std::uint64_t seed) {
    Corpus c = separable_corpus();
    std::vector<const Document*> all;
    for (const auto& d : c.docs) all.push_back(&d);
    Vocab vocab = build_vocab(all, 1);
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.d_state = 4;
    cfg.d_conv = 4;
    cfg.expand = 2;
    cfg.vocab_size = vocab.size();
    cfg.n_classes = 2;
    cfg.max_seq_len = 16;
    std::vector<int> train_idx, val_idx;
    for (int i = 0; i < 20; ++i) (i % 5 == 0 ? val_idx : train_idx).push_back(i);
    ToySetup s{MambaClassifier<float>::random_init(cfg, seed),
               encode_docs(c, train_idx, vocab, cfg.max_seq_len),
               encode_docs(c, val_idx, vocab, cfg.max_seq_len)};
    return s;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched but reports history") {
    ToySetup s = make_setup(3);
    const MambaClassifier<float> before = s.model;
    TrainHyper hyper;
    hyper.lr = 0.0;
    hyper.weight_decay = 0.0;
    hyper.epochs = 3;
    hyper.patience = 10;
    hyper.threads = 1;
    TrainResult r = train(s.model, s.train_set, s.val_set, hyper);
    CHECK(r.history.size() == 3);
    CHECK(s.model.embedding == before.embedding);
    CHECK(s.model.head_w == before.head_w);
    CHECK(s.model.blocks[0].W_in == before.blocks[0].W_in);
    // Head is zero-initialized, so the first loss sits at ln(2).
    CHECK(r.history[0].train_loss == doctest::Approx(std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("a separable toy task reaches perfect validation accuracy within 10 epochs") {
    ToySetup s = make_setup(4);
    TrainHyper hyper;
    hyper.lr = 5e-3;
    hyper.batch_size = 4;
    hyper.epochs = 10;
    hyper.patience = 10;
    hyper.seed = 4;
    hyper.threads = 2;
    TrainResult r = train(s.model, s.train_set, s.val_set, hyper);
    REQUIRE_FALSE(r.history.empty());
    double best_acc = 0.0;
    for (const auto& e : r.history) best_acc = std::max(best_acc, e.val_accuracy);
    CHECK(best_acc == doctest::Approx(1.0));
}

TEST_CASE("fixed seeds reproduce training bit for bit") {
    TrainHyper hyper;
    hyper.lr = 1e-3;
    hyper.batch_size = 4;
    hyper.epochs = 3;
    hyper.patience = 10;
    hyper.seed = 11;
    hyper.threads = 2;

    ToySetup a = make_setup(11);
    TrainResult ra = train(a.model, a.train_set, a.val_set, hyper);
    ToySetup b = make_setup(11);
    TrainResult rb = train(b.model, b.train_set, b.val_set, hyper);

    REQUIRE(ra.history.size() == rb.history.size());
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
        CHECK(ra.history[i].val_loss == rb.history[i].val_loss);
        CHECK(ra.history[i].val_accuracy == rb.history[i].val_accuracy);
    }
    CHECK(a.model.embedding == b.model.embedding);
    CHECK(a.model.head_w == b.model.head_w);

    // Thread count must not change the ordered reduction.
    TrainHyper one_thread = hyper;
    one_thread.threads = 1;
    ToySetup c = make_setup(11);
    TrainResult rc = train(c.model, c.train_set, c.val_set, one_thread);
    CHECK(rc.history[0].train_loss == ra.history[0].train_loss);
    CHECK(c.model.head_w == a.model.head_w);
}

TEST_CASE("training keeps the best validation snapshot") {
    ToySetup s = make_setup(5);
    TrainHyper hyper;
    hyper.lr = 5e-3;
    hyper.batch_size = 4;
    hyper.epochs = 8;
    hyper.patience = 8;
    hyper.seed = 5;
    hyper.threads = 2;
    TrainResult r = train(s.model, s.train_set, s.val_set, hyper);
    REQUIRE(r.best_epoch >= 1);
    const double best_val = r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_loss;
    for (const auto& e : r.history) CHECK(best_val <= e.val_loss + 1e-12);
    // The returned model scores exactly the recorded best loss.
    CHECK(mean_loss(s.model, s.val_set, 1) == doctest::Approx(best_val).epsilon(1e-6));
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
    ToySetup s = make_setup(6);
    TrainHyper hyper;
    hyper.lr = 0.0;  // validation loss can never improve after epoch 1
    hyper.weight_decay = 0.0;
    hyper.epochs = 20;
    hyper.patience = 2;
    hyper.threads = 1;
    TrainResult r = train(s.model, s.train_set, s.val_set, hyper);
    CHECK(r.history.size() == 3);  // epoch 1 sets the best, two stale epochs follow
    CHECK(r.best_epoch == 1);
}

TEST_CASE("non-finite parameters raise DivergedLoss") {
    ToySetup s = make_setup(7);
    s.model.embedding[0] = std::numeric_limits<float>::quiet_NaN();
    TrainHyper hyper;
    hyper.epochs = 1;
    hyper.threads = 1;
    CHECK_THROWS_AS((void)train(s.model, s.train_set, s.val_set, hyper), DivergedLoss);
}

TEST_CASE("empty splits are rejected") {
    ToySetup s = make_setup(8);
    TrainHyper hyper;
    CHECK_THROWS_AS((void)train(s.model, {}, s.val_set, hyper), EmptySplit);
    CHECK_THROWS_AS((void)train(s.model, s.train_set, {}, hyper), EmptySplit);
}

TEST_CASE("probabilities from predict sum to one") {
    ToySetup s = make_setup(9);
    auto probs = batch_predict(s.model, s.val_set, 2);
    REQUIRE(probs.size() == s.val_set.size());
    for (const auto& p : probs) {
        double sum = 0;
        for (float v : p) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}
