#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ifseg/mat.hpp"
#include "ifseg/rng.hpp"

namespace ifseg {

using TokenId = std::uint32_t;

// Lowercase ASCII, collapse whitespace runs to a single space, trim.
std::string normalize_text(const std::string& text);

// Fixed word dictionary. Single-character atoms (lowercase letters, digits,
// ASCII punctuation, and the space) are always present, so any normalized
// ASCII text tokenizes; extra multi-character entries come from a lexicon.
class Vocabulary {
public:
    // Atoms only.
    Vocabulary();
    // Atoms plus the given words (normalized; duplicates ignored).
    explicit Vocabulary(const std::vector<std::string>& lexicon);

    static Vocabulary builtin();                          // atoms + default word list
    static Vocabulary from_file(const std::string& path); // one entry per line, '#' comments

    std::size_t size() const { return entries_.size(); }
    const std::string& entry(TokenId id) const { return entries_[id]; }
    const std::vector<std::string>& entries() const { return entries_; }
    bool has(const std::string& s) const { return index_.count(s) != 0; }
    TokenId id(const std::string& s) const;

    // Greedy longest-match tokenization of the normalized text. Characters
    // with no vocabulary entry are skipped.
    std::vector<TokenId> tokenize(const std::string& text) const;

    // Inverse of tokenize on representable text: concatenated surface forms.
    std::string detokenize(const std::vector<TokenId>& ids) const;

private:
    void add_entry(const std::string& s);

    std::vector<std::string> entries_;
    std::unordered_map<std::string, TokenId> index_;
    std::size_t max_entry_len_ = 0;
};

// Word embedding table: one row per dictionary entry, plus rows appended for
// merged multi-token categories. base_count is the dictionary size N.
struct EmbeddingMatrix {
    MatD rows;  // n_total x dim
    std::size_t base_count = 0;

    std::size_t dim() const { return rows.cols; }
    std::size_t total() const { return rows.rows; }

    // Entries ~ Normal(0, 0.02^2) truncated at 2 sigma.
    static EmbeddingMatrix random(std::size_t count, std::size_t dim, std::uint64_t seed);
};

// The segmentation vocabulary: M category names, each owning exactly one
// embedding row (the base row for single-token names, an appended mean row
// otherwise).
struct SegCategorySet {
    std::vector<std::string> names;                   // normalized, unique
    std::vector<TokenId> merged_ids;                  // rows of the embedding matrix
    std::vector<std::vector<TokenId>> subtoken_ids;   // per category

    std::size_t count() const { return names.size(); }
};

// Registers categories against the vocabulary, appending one averaged row to
// the embedding matrix per multi-token name. Rejects duplicates (after
// normalization) and names that tokenize to nothing.
SegCategorySet register_categories(const std::vector<std::string>& names, const Vocabulary& vocab,
                                   EmbeddingMatrix& emb);

// "what is the segmentation map of the image? object: <name0>, <name1>, ..."
// tokenized; categories appear in registration order.
std::vector<TokenId> build_prompt(const SegCategorySet& cats, const Vocabulary& vocab);
std::string prompt_text(const SegCategorySet& cats);

// One category name per line, '#' comments and blank lines ignored.
std::vector<std::string> load_category_names(const std::string& path);

}  // namespace ifseg
