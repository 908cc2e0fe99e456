#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mambatext/errors.hpp"

namespace mambatext {

struct Document {
    std::string id;
    std::string text;
    int label = 0;
};

struct Corpus {
    std::vector<Document> docs;
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
    std::string preset;     // "dvt", "pe", or empty for externally supplied data
    std::string spec_json;  // generator echo, written to the sidecar verbatim

    int n_classes() const { return static_cast<int>(class_names.size()); }
};

// Knobs for the synthetic report generators. Lengths are in words;
// evidence_frac is the fraction of positive documents whose first
// class-determining sentence starts after evidence_word_offset words.
struct GeneratorSpec {
    int n_docs = 0;
    std::vector<double> class_probs;
    int min_words = 0;
    int mean_words = 0;
    int max_words = 0;        // cap for ordinary documents
    double tail_frac = 0.0;   // fraction of documents pushed past 600 words
    double evidence_frac = 0.0;
    int evidence_word_offset = 500;
    std::uint64_t seed = 42;

    void validate() const;
};

// 1000 duplex ultrasound reports, 3 classes at 78/11/11, < 170 words each.
GeneratorSpec default_dvt_spec();
// 900 CT angiography reports, 2 classes at 88/12, ~200 words with a long
// tail past 600 and 30% of positives carrying their evidence after word 500.
GeneratorSpec default_pe_spec();

Corpus generate_dvt_corpus(const GeneratorSpec& spec);
Corpus generate_pe_corpus(const GeneratorSpec& spec);

// Word index (0-based) at which the first class-evidence sentence of a
// positive document starts; -1 for documents of the negative class.
int evidence_word_index(const Document& doc, const Corpus& corpus);

// Lowercase, split on whitespace, and peel punctuation into its own tokens.
std::vector<std::string> tokenize(std::string_view text);

inline std::size_t word_count(const std::string& text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!ws && !in_word) ++n;
        in_word = !ws;
    }
    return n;
}

struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr const char* kPadToken = "<pad>";
    static constexpr const char* kUnkToken = "<unk>";

    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;

    int size() const { return static_cast<int>(id_to_token.size()); }
    int lookup(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? kUnk : it->second;
    }
};

// Tokens with frequency >= min_freq over the training documents, ordered by
// (-frequency, token) so ids are deterministic; PAD=0 and UNK=1 reserved.
Vocab build_vocab(const std::vector<const Document*>& train_docs, int min_freq);

struct Encoded {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    bool truncated = false;
};

Encoded encode(const std::vector<std::string>& tokens, const Vocab& vocab, int max_len);

struct EncodedDoc {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    int label = 0;
};

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Stratified 80/20 train/test split, then 90/10 train/val within the
// training portion; per-class rounding, seeded shuffle within each class.
SplitIndices split(const Corpus& corpus, std::uint64_t seed);

std::vector<EncodedDoc> encode_docs(const Corpus& corpus, const std::vector<int>& indices,
                                    const Vocab& vocab, int max_len);

// Corpus file: one JSON record per line with fields "id", "label", "text".
// A sidecar <path>.meta.json carries class names and the generator echo.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// Vocab file: one "token<TAB>id" line per entry, sorted by id.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

}  // namespace mambatext
