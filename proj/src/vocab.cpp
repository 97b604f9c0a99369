#include "ifseg/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include "ifseg/error.hpp"

namespace ifseg {

namespace {

constexpr const char* kLetters = "abcdefghijklmnopqrstuvwxyz";
constexpr const char* kDigits = "0123456789";
constexpr const char* kPunct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

const char* kDefaultLexicon[] = {
    "what", "is",    "the",   "segmentation", "map",    "of",     "image",  "object",
    "grass", "giraffe", "cat", "dog",   "sky",   "road",  "tree",   "water",
    "person", "building", "car", "cow", "river", "sand",  "snow",   "rock",
    "field", "play",  "ground", "wall", "house", "cloud", "horse",  "sheep",
    "bird",  "fish",  "plant", "flower", "chair", "table", "floor",  "window",
    "door",  "light", "metal", "wood",  "paper", "food",  "fruit",  "animal",
    "other",
};

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string normalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        out.push_back(c);
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (const char* p = kLetters; *p; ++p) add_entry(std::string(1, *p));
    for (const char* p = kDigits; *p; ++p) add_entry(std::string(1, *p));
    for (const char* p = kPunct; *p; ++p) add_entry(std::string(1, *p));
    add_entry(" ");
}

Vocabulary::Vocabulary(const std::vector<std::string>& lexicon) : Vocabulary() {
    for (const auto& word : lexicon) {
        std::string w = normalize_text(word);
        if (w.empty() || index_.count(w)) continue;
        add_entry(w);
    }
}

Vocabulary Vocabulary::builtin() {
    std::vector<std::string> words(std::begin(kDefaultLexicon), std::end(kDefaultLexicon));
    return Vocabulary(words);
}

Vocabulary Vocabulary::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_data("vocabulary: cannot open '" + path + "'");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(f, line)) {
        std::string t = normalize_text(line);
        if (t.empty() || t[0] == '#') continue;
        words.push_back(t);
    }
    return Vocabulary(words);
}

void Vocabulary::add_entry(const std::string& s) {
    index_.emplace(s, static_cast<TokenId>(entries_.size()));
    entries_.push_back(s);
    max_entry_len_ = std::max(max_entry_len_, s.size());
}

TokenId Vocabulary::id(const std::string& s) const {
    auto it = index_.find(s);
    require_data(it != index_.end(), "vocabulary: no entry '" + s + "'");
    return it->second;
}

std::vector<TokenId> Vocabulary::tokenize(const std::string& text) const {
    const std::string norm = normalize_text(text);
    std::vector<TokenId> out;
    std::size_t pos = 0;
    while (pos < norm.size()) {
        std::size_t best = 0;
        TokenId best_id = 0;
        std::size_t cap = std::min(max_entry_len_, norm.size() - pos);
        for (std::size_t len = cap; len >= 1; --len) {
            auto it = index_.find(norm.substr(pos, len));
            if (it != index_.end()) {
                best = len;
                best_id = it->second;
                break;
            }
        }
        if (best == 0) {
            ++pos;  // character outside the vocabulary
            continue;
        }
        out.push_back(best_id);
        pos += best;
    }
    return out;
}

std::string Vocabulary::detokenize(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
        require_data(id < entries_.size(), "vocabulary: token id out of range");
        out += entries_[id];
    }
    return out;
}

EmbeddingMatrix EmbeddingMatrix::random(std::size_t count, std::size_t dim, std::uint64_t seed) {
    EmbeddingMatrix e;
    e.rows = MatD(count, dim);
    e.base_count = count;
    Rng rng(seed);
    for (double& v : e.rows.data) v = rng.next_trunc_normal(0.02);
    return e;
}

SegCategorySet register_categories(const std::vector<std::string>& names, const Vocabulary& vocab,
                                   EmbeddingMatrix& emb) {
    require_data(!names.empty(), "categories: empty name list");
    SegCategorySet cats;
    std::unordered_set<std::string> seen;
    for (const auto& raw : names) {
        std::string name = normalize_text(raw);
        require_data(!name.empty(), "categories: name '" + raw + "' is empty after normalization");
        require_data(seen.insert(name).second, "categories: duplicate name '" + name + "'");
        std::vector<TokenId> sub = vocab.tokenize(name);
        require_data(!sub.empty(), "categories: name '" + name + "' tokenizes to nothing");
        TokenId merged;
        if (sub.size() == 1) {
            merged = sub[0];
        } else {
            // Append the mean of the sub-token rows as a new word row.
            const std::size_t d = emb.dim();
            MatD grown(emb.rows.rows + 1, d);
            std::copy(emb.rows.data.begin(), emb.rows.data.end(), grown.data.begin());
            double* mean = grown.row(grown.rows - 1);
            for (TokenId tid : sub) {
                const double* r = emb.rows.row(tid);
                for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
            }
            for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(sub.size());
            merged = static_cast<TokenId>(grown.rows - 1);
            emb.rows = std::move(grown);
        }
        cats.names.push_back(name);
        cats.merged_ids.push_back(merged);
        cats.subtoken_ids.push_back(std::move(sub));
    }
    return cats;
}

std::string prompt_text(const SegCategorySet& cats) {
    std::string text = "what is the segmentation map of the image? object:";
    for (std::size_t i = 0; i < cats.names.size(); ++i) {
        text += (i == 0) ? " " : ", ";
        text += cats.names[i];
    }
    return text;
}

std::vector<TokenId> build_prompt(const SegCategorySet& cats, const Vocabulary& vocab) {
    require_data(cats.count() >= 1, "prompt: category set is empty");
    return vocab.tokenize(prompt_text(cats));
}

std::vector<std::string> load_category_names(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_data("categories: cannot open '" + path + "'");
    std::vector<std::string> names;
    std::string line;
    while (std::getline(f, line)) {
        std::string t = normalize_text(line);
        if (t.empty() || t[0] == '#') continue;
        names.push_back(t);
    }
    require_data(!names.empty(), "categories: '" + path + "' lists no names");
    return names;
}

}  // namespace ifseg
