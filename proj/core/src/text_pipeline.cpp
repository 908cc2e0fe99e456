#include "mambatext/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mambatext/checkpoint.hpp"  // atomic_write_file
#include "mambatext/rng.hpp"

namespace mambatext {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    };
    for (char raw : text) {
        const auto u = static_cast<unsigned char>(raw);
        const char c = static_cast<char>(std::tolower(u));
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word.push_back(c);
        } else if (std::isspace(u)) {
            flush();
        } else {
            // Punctuation becomes its own token.
            flush();
            out.emplace_back(1, c);
        }
    }
    flush();
    return out;
}

Vocab build_vocab(const std::vector<const Document*>& train_docs, int min_freq) {
    if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
    if (train_docs.empty()) throw EmptyTrainingSet("build_vocab: no training documents");
    std::map<std::string, std::int64_t> freq;
    for (const Document* d : train_docs)
        for (auto& tok : tokenize(d->text)) ++freq[tok];
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (auto& [tok, n] : freq)
        if (n >= min_freq) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocab v;
    v.id_to_token = {Vocab::kPadToken, Vocab::kUnkToken};
    v.token_to_id = {{Vocab::kPadToken, Vocab::kPad}, {Vocab::kUnkToken, Vocab::kUnk}};
    for (auto& [tok, n] : kept) {
        v.token_to_id.emplace(tok, v.size());
        v.id_to_token.push_back(tok);
    }
    return v;
}

Encoded encode(const std::vector<std::string>& tokens, const Vocab& vocab, int max_len) {
    if (max_len < 1) throw std::invalid_argument("encode: max_len must be >= 1");
    Encoded e;
    const std::size_t keep = std::min(tokens.size(), static_cast<std::size_t>(max_len));
    e.truncated = tokens.size() > keep;
    e.ids.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) e.ids.push_back(vocab.lookup(tokens[i]));
    e.mask.assign(keep, 1);
    return e;
}

SplitIndices split(const Corpus& corpus, std::uint64_t seed) {
    const std::size_t n = corpus.docs.size();
    if (n < 10) throw TooFewSamples("split: need at least 10 documents");
    const int k = corpus.n_classes();
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        const int label = corpus.docs[i].label;
        if (label < 0 || label >= k) throw LabelOutOfRange("split: label outside class range");
        by_class[static_cast<std::size_t>(label)].push_back(static_cast<int>(i));
    }
    SplitIndices out;
    auto rng = make_rng(seed, "split");
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        const auto n_c = static_cast<long>(members.size());
        const long n_test = std::lround(0.2 * static_cast<double>(n_c));
        const long n_val = std::lround(0.1 * static_cast<double>(n_c - n_test));
        for (long i = 0; i < n_c; ++i) {
            if (i < n_test)
                out.test.push_back(members[static_cast<std::size_t>(i)]);
            else if (i < n_test + n_val)
                out.val.push_back(members[static_cast<std::size_t>(i)]);
            else
                out.train.push_back(members[static_cast<std::size_t>(i)]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<EncodedDoc> encode_docs(const Corpus& corpus, const std::vector<int>& indices,
                                    const Vocab& vocab, int max_len) {
    std::vector<EncodedDoc> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        const Document& d = corpus.docs[static_cast<std::size_t>(idx)];
        Encoded e = encode(tokenize(d.text), vocab, max_len);
        out.push_back(EncodedDoc{std::move(e.ids), std::move(e.mask), d.label});
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ostringstream body;
    for (const Document& d : corpus.docs) {
        nlohmann::json j{{"id", d.id}, {"label", d.label}, {"text", d.text}};
        body << j.dump() << "\n";
    }
    atomic_write_file(path, body.str());
    nlohmann::json meta;
    meta["class_names"] = corpus.class_names;
    meta["seed"] = corpus.seed;
    meta["preset"] = corpus.preset;
    if (!corpus.spec_json.empty()) meta["generator"] = nlohmann::json::parse(corpus.spec_json);
    atomic_write_file(path + ".meta.json", meta.dump(2) + "\n");
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus " + path);
    Corpus c;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            Document d;
            d.id = j.at("id").get<std::string>();
            d.label = j.at("label").get<int>();
            d.text = j.at("text").get<std::string>();
            if (d.text.empty()) throw IoError("empty text");
            if (d.label < 0) throw IoError("negative label");
            max_label = std::max(max_label, d.label);
            c.docs.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad corpus record: " +
                          e.what());
        }
    }
    if (c.docs.empty()) throw IoError(path + ": corpus holds no documents");

    std::ifstream meta_in(path + ".meta.json");
    if (meta_in) {
        try {
            nlohmann::json meta = nlohmann::json::parse(meta_in);
            c.class_names = meta.at("class_names").get<std::vector<std::string>>();
            c.seed = meta.value("seed", std::uint64_t{0});
            c.preset = meta.value("preset", std::string{});
            if (meta.contains("generator")) c.spec_json = meta["generator"].dump();
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ".meta.json: bad sidecar: " + e.what());
        }
    } else {
        for (int i = 0; i <= max_label; ++i) c.class_names.push_back("class_" + std::to_string(i));
    }
    if (max_label >= c.n_classes())
        throw IoError(path + ": label " + std::to_string(max_label) +
                      " exceeds declared class count");
    return c;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ostringstream body;
    for (int i = 0; i < vocab.size(); ++i)
        body << vocab.id_to_token[static_cast<std::size_t>(i)] << '\t' << i << "\n";
    atomic_write_file(path, body.str());
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocab " + path);
    Vocab v;
    std::string line;
    int expected = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw IoError(path + ": malformed vocab line");
        const std::string tok = line.substr(0, tab);
        const int id = std::stoi(line.substr(tab + 1));
        if (id != expected++) throw IoError(path + ": vocab ids must be dense and sorted");
        v.token_to_id.emplace(tok, id);
        v.id_to_token.push_back(tok);
    }
    if (v.size() < 2 || v.id_to_token[0] != Vocab::kPadToken ||
        v.id_to_token[1] != Vocab::kUnkToken)
        throw IoError(path + ": vocab must reserve <pad>=0 and <unk>=1");
    return v;
}

}  // namespace mambatext
