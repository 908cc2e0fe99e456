// Command-line driver: corpus generation, training, evaluation, prediction,
// int8 quantization, and gradient checking.
//
// Exit codes: 0 success, 2 usage/config error, 3 I/O failure, 4 diverged
// loss, 5 artifact mismatch, 6 gradient-check failure.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mambatext/autodiff.hpp"
#include "mambatext/checkpoint.hpp"
#include "mambatext/metrics.hpp"
#include "mambatext/model.hpp"
#include "mambatext/quantize.hpp"
#include "mambatext/text.hpp"
#include "mambatext/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mambatext;

namespace {

struct RunConfig {
    ModelConfig model;  // vocab_size / n_classes are filled from the data
    TrainHyper hyper;
    std::string corpus_path;
    int max_seq_len = 512;
    int min_freq = 1;
    std::string out_dir = "runs/out";
};

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(known.begin(), known.end(),
                         [&key](const char* k) { return key == k; }) == known.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
}

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": not valid JSON: " + e.what());
    }
    reject_unknown(j, {"model", "train", "data", "out"}, path);
    if (j.contains("model")) {
        const json& m = j["model"];
        reject_unknown(m,
                       {"d_model", "n_layers", "d_state", "d_conv", "expand", "dt_rank",
                        "pooling", "exact_zoh_b"},
                       path + ":model");
        rc.model.d_model = m.value("d_model", rc.model.d_model);
        rc.model.n_layers = m.value("n_layers", rc.model.n_layers);
        rc.model.d_state = m.value("d_state", rc.model.d_state);
        rc.model.d_conv = m.value("d_conv", rc.model.d_conv);
        rc.model.expand = m.value("expand", rc.model.expand);
        rc.model.dt_rank = m.value("dt_rank", rc.model.dt_rank);
        if (m.contains("pooling")) rc.model.pooling = pooling_from_string(m["pooling"]);
        rc.model.exact_zoh_b = m.value("exact_zoh_b", rc.model.exact_zoh_b);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(
            t, {"lr", "batch_size", "epochs", "patience", "weight_decay", "seed", "threads"},
            path + ":train");
        rc.hyper.lr = t.value("lr", rc.hyper.lr);
        rc.hyper.batch_size = t.value("batch_size", rc.hyper.batch_size);
        rc.hyper.epochs = t.value("epochs", rc.hyper.epochs);
        rc.hyper.patience = t.value("patience", rc.hyper.patience);
        rc.hyper.weight_decay = t.value("weight_decay", rc.hyper.weight_decay);
        rc.hyper.seed = t.value("seed", rc.hyper.seed);
        rc.hyper.threads = t.value("threads", rc.hyper.threads);
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown(d, {"corpus", "max_seq_len", "min_freq"}, path + ":data");
        rc.corpus_path = d.value("corpus", rc.corpus_path);
        rc.max_seq_len = d.value("max_seq_len", rc.max_seq_len);
        rc.min_freq = d.value("min_freq", rc.min_freq);
    }
    if (j.contains("out")) rc.out_dir = j["out"].get<std::string>();
    return rc;
}

json config_echo(const RunConfig& rc, const ModelConfig& effective) {
    json j;
    j["model"] = {{"d_model", rc.model.d_model},     {"n_layers", rc.model.n_layers},
                  {"d_state", rc.model.d_state},     {"d_conv", rc.model.d_conv},
                  {"expand", rc.model.expand},       {"dt_rank", rc.model.dt_rank},
                  {"pooling", to_string(rc.model.pooling)},
                  {"exact_zoh_b", rc.model.exact_zoh_b}};
    j["train"] = {{"lr", rc.hyper.lr},
                  {"batch_size", rc.hyper.batch_size},
                  {"epochs", rc.hyper.epochs},
                  {"patience", rc.hyper.patience},
                  {"weight_decay", rc.hyper.weight_decay},
                  {"seed", rc.hyper.seed},
                  {"threads", rc.hyper.threads}};
    j["data"] = {{"corpus", rc.corpus_path},
                 {"max_seq_len", rc.max_seq_len},
                 {"min_freq", rc.min_freq}};
    j["out"] = rc.out_dir;
    j["derived"] = {{"vocab_size", effective.vocab_size},
                    {"n_classes", effective.n_classes},
                    {"dt_rank_effective", effective.dt_rank_effective()},
                    {"d_inner", effective.d_inner()},
                    {"parameters", count_params(effective)}};
    return j;
}

std::string out_dir_override(std::string configured) {
    if (const char* env = std::getenv("MAMBATEXT_OUT"); env && *env) return env;
    return configured;
}

void write_run_stamp(const fs::path& dir) {
    // The only line anywhere in the output directory that carries a
    // timestamp; determinism checks compare everything else.
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    atomic_write_file((dir / "run.txt").string(), std::string("run ") + buf + "\n");
}

std::vector<const Document*> docs_at(const Corpus& corpus, const std::vector<int>& idx) {
    std::vector<const Document*> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(&corpus.docs[static_cast<std::size_t>(i)]);
    return out;
}

MetaMap checkpoint_meta(const RunConfig& rc, const Corpus& corpus) {
    MetaMap meta;
    meta["seed"] = std::to_string(rc.hyper.seed);
    meta["min_freq"] = std::to_string(rc.min_freq);
    std::string names;
    for (std::size_t i = 0; i < corpus.class_names.size(); ++i) {
        if (i) names.push_back(',');
        names += corpus.class_names[i];
    }
    meta["class_names"] = names;
    return meta;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

// ---------------------------------------------------------------- gen-corpus

int cmd_gen_corpus(const std::string& preset, int n, std::uint64_t seed, const std::string& out,
                   double evidence_frac, double tail_frac) {
    GeneratorSpec spec = preset == "dvt" ? default_dvt_spec() : default_pe_spec();
    if (n > 0) spec.n_docs = n;
    spec.seed = seed;
    if (evidence_frac >= 0.0) spec.evidence_frac = evidence_frac;
    if (tail_frac >= 0.0) spec.tail_frac = tail_frac;
    Corpus corpus = preset == "dvt" ? generate_dvt_corpus(spec) : generate_pe_corpus(spec);
    save_corpus(corpus, out);
    std::vector<int> counts(corpus.class_names.size(), 0);
    for (const auto& d : corpus.docs) ++counts[static_cast<std::size_t>(d.label)];
    std::cout << "wrote " << corpus.docs.size() << " documents to " << out << "\n";
    for (std::size_t c = 0; c < counts.size(); ++c)
        std::cout << "  " << corpus.class_names[c] << ": " << counts[c] << "\n";
    return 0;
}

// --------------------------------------------------------------------- train

int cmd_train(const std::string& config_path, const std::string& corpus_flag,
              const std::string& out_flag, std::int64_t seed_flag, int max_len_flag,
              int epochs_flag) {
    RunConfig rc = load_run_config(config_path);
    if (!corpus_flag.empty()) rc.corpus_path = corpus_flag;
    if (!out_flag.empty()) rc.out_dir = out_flag;
    if (seed_flag >= 0) rc.hyper.seed = static_cast<std::uint64_t>(seed_flag);
    if (max_len_flag > 0) rc.max_seq_len = max_len_flag;
    if (epochs_flag > 0) rc.hyper.epochs = epochs_flag;
    rc.out_dir = out_dir_override(rc.out_dir);
    if (rc.corpus_path.empty()) throw ConfigError("no corpus given (flag --corpus or data.corpus)");

    Corpus corpus = load_corpus(rc.corpus_path);
    SplitIndices idx = split(corpus, rc.hyper.seed);
    Vocab vocab = build_vocab(docs_at(corpus, idx.train), rc.min_freq);

    ModelConfig cfg = rc.model;
    cfg.vocab_size = vocab.size();
    cfg.n_classes = corpus.n_classes();
    cfg.max_seq_len = rc.max_seq_len;
    cfg.validate();

    auto train_set = encode_docs(corpus, idx.train, vocab, cfg.max_seq_len);
    auto val_set = encode_docs(corpus, idx.val, vocab, cfg.max_seq_len);

    MambaClassifier<float> model = MambaClassifier<float>::random_init(cfg, rc.hyper.seed);
    TrainResult result = train(model, train_set, val_set, rc.hyper);

    fs::create_directories(rc.out_dir);
    const fs::path dir(rc.out_dir);
    save_checkpoint(model, (dir / "model.ckpt").string(), checkpoint_meta(rc, corpus));
    save_vocab(vocab, (dir / "vocab.tsv").string());

    json splits_j{{"train", idx.train}, {"val", idx.val}, {"test", idx.test}};
    atomic_write_file((dir / "splits.json").string(), splits_j.dump(2) + "\n");

    json hist;
    hist["split_sizes"] = {{"train", idx.train.size()},
                           {"val", idx.val.size()},
                           {"test", idx.test.size()}};
    hist["best_epoch"] = result.best_epoch;
    hist["epochs"] = json::array();
    for (const auto& e : result.history)
        hist["epochs"].push_back({{"epoch", e.epoch},
                                  {"train_loss", e.train_loss},
                                  {"val_loss", e.val_loss},
                                  {"val_accuracy", e.val_accuracy}});
    atomic_write_file((dir / "history.json").string(), hist.dump(2) + "\n");
    atomic_write_file((dir / "config.json").string(), config_echo(rc, cfg).dump(2) + "\n");
    write_run_stamp(dir);

    std::cout << "split sizes: train " << idx.train.size() << ", val " << idx.val.size()
              << ", test " << idx.test.size() << "\n";
    std::cout << "best epoch " << result.best_epoch << " of " << result.history.size()
              << " run\n";
    if (!result.history.empty()) {
        const auto& last = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
        std::cout << "best val loss " << format_sig4(last.val_loss) << ", val accuracy "
                  << format_sig4(last.val_accuracy) << "\n";
    }
    std::cout << "checkpoint: " << (dir / "model.ckpt").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------- eval

struct EvalArtifacts {
    MambaClassifier<float> model;
    MetaMap meta;
    Vocab vocab;
};

EvalArtifacts load_model_and_vocab(const std::string& model_path, std::string vocab_path) {
    LoadedModel lm = load_checkpoint(model_path);
    if (vocab_path.empty())
        vocab_path = (fs::path(model_path).parent_path() / "vocab.tsv").string();
    Vocab vocab = load_vocab(vocab_path);
    if (vocab.size() != lm.model.cfg.vocab_size)
        throw ArtifactMismatch("vocab has " + std::to_string(vocab.size()) +
                               " entries but the model embeds " +
                               std::to_string(lm.model.cfg.vocab_size));
    return {std::move(lm.model), std::move(lm.meta), std::move(vocab)};
}

int cmd_eval(const std::string& model_path, const std::string& vocab_path,
             const std::string& corpus_path, const std::string& split_name,
             const std::string& out_flag, int threads, bool svg, bool inject_true_labels) {
    EvalArtifacts art = load_model_and_vocab(model_path, vocab_path);
    const ModelConfig& cfg = art.model.cfg;

    Corpus corpus = load_corpus(corpus_path);
    if (corpus.n_classes() != cfg.n_classes)
        throw ArtifactMismatch("corpus has " + std::to_string(corpus.n_classes()) +
                               " classes but the model head expects " +
                               std::to_string(cfg.n_classes));
    std::uint64_t seed = 42;
    if (auto it = art.meta.find("seed"); it != art.meta.end()) seed = std::stoull(it->second);

    std::vector<int> chosen;
    if (split_name == "all") {
        chosen.resize(corpus.docs.size());
        for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = static_cast<int>(i);
    } else {
        SplitIndices idx = split(corpus, seed);
        if (split_name == "train")
            chosen = idx.train;
        else if (split_name == "val")
            chosen = idx.val;
        else if (split_name == "test")
            chosen = idx.test;
        else
            throw ConfigError("unknown split \"" + split_name + "\"");
    }

    auto docs = encode_docs(corpus, chosen, art.vocab, cfg.max_seq_len);
    std::vector<int> y_true(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) y_true[i] = docs[i].label;

    std::vector<std::vector<double>> probs(docs.size());
    std::vector<int> y_pred(docs.size());
    if (inject_true_labels) {
        for (std::size_t i = 0; i < docs.size(); ++i) {
            probs[i].assign(static_cast<std::size_t>(cfg.n_classes), 0.0);
            probs[i][static_cast<std::size_t>(y_true[i])] = 1.0;
            y_pred[i] = y_true[i];
        }
    } else {
        auto p = batch_predict(art.model, docs, threads);
        for (std::size_t i = 0; i < docs.size(); ++i) {
            probs[i].assign(p[i].begin(), p[i].end());
            y_pred[i] = static_cast<int>(
                std::distance(p[i].begin(), std::max_element(p[i].begin(), p[i].end())));
        }
    }

    ConfusionMatrix cm = confusion(y_true, y_pred, cfg.n_classes);
    MetricsReport report = metrics_from_confusion(cm);

    const fs::path dir(out_dir_override(
        out_flag.empty() ? fs::path(model_path).parent_path().string() : out_flag));
    fs::create_directories(dir);
    atomic_write_file((dir / "metrics.json").string(), emit_report(report));
    for (int c = 0; c < cfg.n_classes; ++c) {
        try {
            RocCurve curve = roc_ovr(probs, y_true, c);
            const std::string base = "roc_class_" + std::to_string(c);
            atomic_write_file((dir / (base + ".csv")).string(), emit_roc_csv(curve));
            if (svg) atomic_write_file((dir / (base + ".svg")).string(), emit_roc_svg(curve));
            std::cout << "auc[" << corpus.class_names[static_cast<std::size_t>(c)]
                      << "] = " << format_sig4(curve.auc) << "\n";
        } catch (const SingleClassLabels&) {
            std::cout << "auc[" << corpus.class_names[static_cast<std::size_t>(c)]
                      << "] undefined on this split (one class only)\n";
        }
    }

    std::cout << "\nconfusion (rows=true, cols=pred):\n";
    for (int t = 0; t < cm.k; ++t) {
        for (int p = 0; p < cm.k; ++p) std::cout << (p ? " " : "  ") << cm.at(t, p);
        std::cout << "\n";
    }
    std::cout << "\n" << render_report_table(report, corpus.class_names);
    std::cout << "reports written to " << dir.string() << "\n";
    return 0;
}

// ------------------------------------------------------------------- predict

int cmd_predict(const std::string& model_path, const std::string& vocab_path,
                const std::string& text, const std::string& file) {
    EvalArtifacts art = load_model_and_vocab(model_path, vocab_path);
    std::vector<std::string> class_names;
    if (auto it = art.meta.find("class_names"); it != art.meta.end())
        class_names = split_csv(it->second);
    for (int c = static_cast<int>(class_names.size()); c < art.model.cfg.n_classes; ++c)
        class_names.push_back("class_" + std::to_string(c));

    std::vector<std::string> inputs;
    if (!text.empty()) inputs.push_back(text);
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open " + file);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) inputs.push_back(line);
    }
    if (inputs.empty()) throw ConfigError("empty input");

    for (const std::string& input : inputs) {
        auto tokens = tokenize(input);
        if (tokens.empty()) throw ConfigError("empty input");
        Encoded e = encode(tokens, art.vocab, art.model.cfg.max_seq_len);
        EncodedDoc doc{std::move(e.ids), std::move(e.mask), 0};
        auto p = predict_probs(art.model, doc);
        const int arg = static_cast<int>(
            std::distance(p.begin(), std::max_element(p.begin(), p.end())));
        std::cout << class_names[static_cast<std::size_t>(arg)];
        char buf[16];
        for (float v : p) {
            std::snprintf(buf, sizeof(buf), " %.4f", static_cast<double>(v));
            std::cout << buf;
        }
        std::cout << "\n";
    }
    return 0;
}

// ------------------------------------------------------------------ quantize

int cmd_quantize(const std::string& model_path, const std::string& out_path) {
    LoadedModel lm = load_checkpoint(model_path);
    if (lm.was_quantized)
        throw ArtifactMismatch(model_path + " is already an int8 checkpoint");
    QuantizedModel qm = quantize_int8(lm.model);
    save_quantized(qm, out_path, lm.meta);

    const std::uint64_t w = qm.weight_param_count();
    const std::uint64_t b = qm.bias_param_count();
    const double f32_mb = memory_footprint_mb(w, 4);
    const double i8_mb = memory_footprint_mb(w, 1);
    const double reduction = 100.0 * (1.0 - i8_mb / f32_mb);
    char line[160];
    std::snprintf(line, sizeof(line),
                  "weight tensors: %.1f MB (f32) -> %.1f MB (int8), reduction %.1f%%\n", f32_mb,
                  i8_mb, reduction);
    std::cout << line;
    std::snprintf(line, sizeof(line),
                  "whole model:    %.1f MB -> %.1f MB (biases stay f32: %llu of %llu params)\n",
                  memory_footprint_mb(w + b, 4), i8_mb + memory_footprint_mb(b, 4),
                  static_cast<unsigned long long>(b), static_cast<unsigned long long>(w + b));
    std::cout << line;
    std::cout << "int8 checkpoint: " << out_path << "\n";
    return 0;
}

// ----------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& config_path, bool corrupt_backward) {
    RunConfig rc = load_run_config(config_path);
    ModelConfig cfg = rc.model;
    if (config_path.empty()) {
        cfg.d_model = 8;
        cfg.n_layers = 1;
        cfg.d_state = 4;
        cfg.dt_rank = 1;
    }
    if (cfg.d_model > 32)
        throw ConfigError("gradcheck is limited to d_model <= 32 (got " +
                          std::to_string(cfg.d_model) + ")");
    cfg.vocab_size = 16;
    cfg.n_classes = 2;
    cfg.max_seq_len = 16;

    using D = double;
    MambaClassifier<D> model = MambaClassifier<D>::random_init(cfg, rc.hyper.seed);
    // A zero head would zero every upstream gradient; give it mass.
    auto head_rng = make_rng(rc.hyper.seed, "gradcheck.head");
    std::normal_distribution<double> dist(0.0, 0.02);
    for (std::size_t i = 0; i < model.head_w.size(); ++i) model.head_w[i] = dist(head_rng);

    const int L = 12;
    auto doc_rng = make_rng(rc.hyper.seed, "gradcheck.doc");
    std::vector<int> ids(L);
    std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
    for (int& t : ids) t = tok(doc_rng);
    const std::vector<std::uint8_t> mask(L, 1);
    const int label = 1;

    Tape<D> tape;
    ModelVars<D> mv = register_params(tape, model);
    Var loss = softmax_cross_entropy(tape, model_forward(tape, mv, cfg, ids, mask), label);
    tape.backward(loss);

    std::vector<std::string> names;
    std::vector<Tensor<D>*> tensors;
    model.for_each_param([&](const std::string& n, Tensor<D>& t) {
        names.push_back(n);
        tensors.push_back(&t);
    });
    const std::vector<Var> vars = flatten_vars(mv);

    bool all_ok = true;
    std::cout << "tensor                          max_rel_err  status\n";
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        Tensor<D> analytic = tape.grad(vars[t]);
        if (corrupt_backward && t == 0 && analytic.size() > 0) analytic[0] += 1.0;
        const Tensor<D> original = *tensors[t];
        auto f = [&](const Tensor<D>& probe) {
            *tensors[t] = probe;
            Tensor<D> logits = model_forward(model, ids, mask);
            const D value = softmax_cross_entropy(logits, label);
            *tensors[t] = original;
            return value;
        };
        Tensor<D> fd = finite_diff_grad<D>(f, original, 1e-5);
        double max_rel = 0.0;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-3});
            max_rel = std::max(max_rel, std::abs(analytic[i] - fd[i]) / denom);
        }
        const bool ok = max_rel < 1e-4;
        all_ok = all_ok && ok;
        std::string name = names[t];
        if (name.size() < 30) name.append(30 - name.size(), ' ');
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%11.3e", max_rel);
        std::cout << name << "  " << buf << "  " << (ok ? "ok" : "FAIL") << "\n";
    }
    std::cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
    return all_ok ? 0 : 6;
}

int guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidSpec& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DivergedLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const BadMagic& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const VersionMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const ChecksumMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const ArtifactMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective state-space text classifier"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic report corpus");
    std::string gc_preset;
    int gc_n = 0;
    std::int64_t gc_seed = 42;
    std::string gc_out = "corpus.jsonl";
    double gc_evidence = -1.0, gc_tail = -1.0;
    gen->add_option("--preset", gc_preset, "Corpus preset")
        ->required()
        ->check(CLI::IsMember({"dvt", "pe"}));
    gen->add_option("--n", gc_n, "Document count (0 = preset default)");
    gen->add_option("--seed", gc_seed, "Generator seed");
    gen->add_option("--out", gc_out, "Output corpus path (JSON lines)");
    gen->add_option("--evidence-frac", gc_evidence,
                    "Fraction of positives with evidence after the word offset");
    gen->add_option("--tail-frac", gc_tail, "Fraction of documents pushed past 600 words");

    // train
    auto* tr = app.add_subcommand("train", "Train a classifier on a corpus");
    std::string tr_config, tr_corpus, tr_out;
    std::int64_t tr_seed = -1;
    int tr_maxlen = 0, tr_epochs = 0;
    tr->add_option("--config", tr_config, "JSON run config");
    tr->add_option("--corpus", tr_corpus, "Corpus path (overrides config)");
    tr->add_option("--out", tr_out, "Output directory (overrides config)");
    tr->add_option("--seed", tr_seed, "Master seed (overrides config)");
    tr->add_option("--max-seq-len", tr_maxlen, "Token truncation limit (overrides config)");
    tr->add_option("--epochs", tr_epochs, "Epoch count (overrides config)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; emit metrics and ROC files");
    std::string ev_model, ev_vocab, ev_corpus, ev_split = "test", ev_out;
    int ev_threads = 0;
    bool ev_svg = false, ev_inject = false;
    ev->add_option("--model", ev_model, "Checkpoint path")->required();
    ev->add_option("--vocab", ev_vocab, "Vocab path (default: vocab.tsv beside the model)");
    ev->add_option("--corpus", ev_corpus, "Corpus path")->required();
    ev->add_option("--split", ev_split, "Split to score")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    ev->add_option("--out", ev_out, "Report directory (default: model directory)");
    ev->add_option("--threads", ev_threads, "Worker threads (0 = auto)");
    ev->add_flag("--svg", ev_svg, "Also write ROC curves as SVG");
    ev->add_flag("--inject-true-labels", ev_inject)->group("");  // test hook

    // predict
    auto* pr = app.add_subcommand("predict", "Classify raw text");
    std::string pr_model, pr_vocab, pr_text, pr_file;
    pr->add_option("--model", pr_model, "Checkpoint path")->required();
    pr->add_option("--vocab", pr_vocab, "Vocab path (default: vocab.tsv beside the model)");
    pr->add_option("--text", pr_text, "One report as a command-line string");
    pr->add_option("--file", pr_file, "File with one report per line");

    // quantize
    auto* qz = app.add_subcommand("quantize", "Write an int8 checkpoint");
    std::string qz_model, qz_out = "model.int8.ckpt";
    qz->add_option("--model", qz_model, "f32 checkpoint path")->required();
    qz->add_option("--out", qz_out, "int8 checkpoint path");

    // gradcheck
    auto* gck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    std::string gck_config;
    bool gck_corrupt = false;
    gck->add_option("--config", gck_config, "JSON run config (toy sizes only)");
    gck->add_flag("--corrupt-backward", gck_corrupt)->group("");  // negative control

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (gen->parsed())
        return guarded([&] {
            return cmd_gen_corpus(gc_preset, gc_n, static_cast<std::uint64_t>(gc_seed), gc_out,
                                  gc_evidence, gc_tail);
        });
    if (tr->parsed())
        return guarded(
            [&] { return cmd_train(tr_config, tr_corpus, tr_out, tr_seed, tr_maxlen, tr_epochs); });
    if (ev->parsed())
        return guarded([&] {
            return cmd_eval(ev_model, ev_vocab, ev_corpus, ev_split, ev_out, ev_threads, ev_svg,
                            ev_inject);
        });
    if (pr->parsed())
        return guarded([&] { return cmd_predict(pr_model, pr_vocab, pr_text, pr_file); });
    if (qz->parsed()) return guarded([&] { return cmd_quantize(qz_model, qz_out); });
    if (gck->parsed()) return guarded([&] { return cmd_gradcheck(gck_config, gck_corrupt); });
    return 2;
}
