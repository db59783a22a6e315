// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hsmtl/error.hpp"

namespace hsmtl {

/// A labelled text belonging to one task.
struct Example {
    std::string text;
    int label = -1;
    std::string task;

    bool operator==(const Example&) const = default;
};

using Lexicon = std::unordered_set<std::string>;

// ---------------------------------------------------------------------------
// Tweet normalisation
// ---------------------------------------------------------------------------

struct PreprocessOptions {
    // Words used to choose between elongation candidates and to segment
    // hashtags. Without one, elongations collapse to a single letter and
    // hashtag bodies are kept whole.
    const Lexicon* lexicon = nullptr;
    // Drop hashtag bodies entirely. Used when harvesting a lexicon so that
    // unsegmented hashtags do not end up segmenting themselves.
    bool drop_hashtags = false;
};

namespace detail {

inline bool is_alnum_ascii(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& tokens, char sep = ' ') {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

/// Runs of >= 3 identical letters become `keep` letters.
inline std::string collapse_runs(std::string_view word, std::size_t keep) {
    std::string out;
    std::size_t i = 0;
    while (i < word.size()) {
        std::size_t j = i;
        while (j < word.size() && word[j] == word[i]) ++j;
        const std::size_t run = j - i;
        const bool letter = word[i] >= 'a' && word[i] <= 'z';
        out.append(letter && run >= 3 ? keep : run, word[i]);
        i = j;
    }
    return out;
}

inline std::string shorten_elongated(std::string_view word, const Lexicon* lexicon) {
    std::string one = collapse_runs(word, 1);
    if (lexicon && !lexicon->contains(one)) {
        std::string two = collapse_runs(word, 2);
        if (lexicon->contains(two)) return two;
    }
    return one;
}

/// Greedy longest-prefix segmentation; nullopt when some suffix cannot be
/// matched.
inline std::optional<std::vector<std::string>> segment_greedy(std::string_view body,
                                                               const Lexicon& lexicon) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < body.size()) {
        std::size_t best = 0;
        for (std::size_t len = body.size() - i; len >= 1; --len) {
            if (lexicon.contains(std::string(body.substr(i, len)))) {
                best = len;
                break;
            }
        }
        if (best == 0) return std::nullopt;
        parts.emplace_back(body.substr(i, best));
        i += best;
    }
    return parts;
}

}  // namespace detail

/// Token-level normalisation: lowercase, drop URLs/e-mails and @-mentions,
/// shorten elongated words, keep stop words, drop punctuation and non-ASCII
/// symbols (emojis included), unwrap and segment hashtags.
inline std::vector<std::string> normalize_tokens(std::string_view text, const PreprocessOptions& opt = {}) {
    static const std::regex url_re(R"((https?://|www\.)\S*)");
    static const std::regex email_re(R"([^\s@]+@[^\s@]+\.[^\s@]+)");
    static const std::regex mention_re(R"(@\w+)");
    static const std::regex entity_re(R"(&#?[a-z0-9]+;)");

    std::string s(text);
    for (char& c : s) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    s = std::regex_replace(s, url_re, " ");
    s = std::regex_replace(s, email_re, " ");
    s = std::regex_replace(s, mention_re, " ");
    s = std::regex_replace(s, entity_re, " ");

    // Symbols: apostrophes join ("don't" -> "dont"); '#' survives only as a
    // token prefix; everything else outside [a-z0-9] becomes a delimiter.
    std::string cleaned;
    cleaned.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (detail::is_alnum_ascii(c)) {
            cleaned += c;
        } else if (c == '\'') {
            continue;
        } else if (c == '#') {
            const bool at_token_start = cleaned.empty() || cleaned.back() == ' ' || cleaned.back() == '#';
            cleaned += at_token_start ? '#' : ' ';
        } else {
            cleaned += ' ';
        }
    }

    std::vector<std::string> tokens;
    for (auto& raw : detail::split_ws(cleaned)) {
        const std::size_t body_start = raw.find_first_not_of('#');
        if (body_start == std::string::npos) continue;
        const bool hashtag = body_start > 0;
        std::string word = detail::shorten_elongated(std::string_view(raw).substr(body_start), opt.lexicon);
        if (!hashtag) {
            tokens.push_back(std::move(word));
            continue;
        }
        if (opt.drop_hashtags) continue;
        std::optional<std::vector<std::string>> parts;
        if (opt.lexicon) parts = detail::segment_greedy(word, *opt.lexicon);
        if (parts) {
            tokens.insert(tokens.end(), parts->begin(), parts->end());
        } else {
            tokens.push_back(std::move(word));
        }
    }
    return tokens;
}

/// normalize_tokens joined by single spaces, with no length floor.
inline std::string normalize(std::string_view text, const PreprocessOptions& opt = {}) {
    return detail::join(normalize_tokens(text, opt));
}

/// Cleans one tweet for the model. Texts left with fewer than two tokens come
/// back empty. The output is a fixed point of this function.
inline std::string preprocess(std::string_view text, const PreprocessOptions& opt = {}) {
    auto tokens = normalize_tokens(text, opt);
    if (tokens.size() < 2) return {};
    return detail::join(tokens);
}

/// Words of the corpus with hashtag bodies excluded; the reference lexicon
/// for hashtag segmentation and elongation disambiguation.
template <typename Range>
Lexicon harvest_lexicon(const Range& texts) {
    Lexicon lexicon;
    PreprocessOptions opt;
    opt.drop_hashtags = true;
    for (const auto& t : texts) {
        for (auto& tok : normalize_tokens(t, opt)) lexicon.insert(std::move(tok));
    }
    return lexicon;
}

// ---------------------------------------------------------------------------
// Vocabulary and encoding
// ---------------------------------------------------------------------------

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr std::size_t kReserved = 4;

    Vocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[SEP]"} {
        for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
    }

    /// Rebuilds from the id-ordered token list (reserved entries first).
    static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
        Vocabulary v;
        if (tokens.size() < kReserved || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
            throw IngestionError("vocabulary: reserved tokens missing or reordered");
        }
        for (std::size_t i = kReserved; i < tokens.size(); ++i) v.add(tokens[i]);
        return v;
    }

    int add(const std::string& token) {
        auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
        if (!inserted) throw IngestionError("vocabulary: duplicate token '" + token + "'");
        tokens_.push_back(token);
        return it->second;
    }

    int id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }
    bool contains(const std::string& token) const { return index_.contains(token); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Non-reserved entries as a lexicon for preprocessing at inference time.
    Lexicon lexicon() const { return Lexicon(tokens_.begin() + kReserved, tokens_.end()); }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Most frequent whitespace tokens first, ties broken lexicographically.
/// `max_size` bounds the total size including the four reserved entries;
/// zero means unbounded.
template <typename Range>
Vocabulary build_vocab(const Range& texts, std::size_t min_frequency, std::size_t max_size = 0) {
    std::map<std::string, std::size_t> counts;
    std::size_t n = 0;
    for (const auto& t : texts) {
        ++n;
        for (auto& tok : detail::split_ws(t)) ++counts[tok];
    }
    if (n == 0) throw IngestionError("build_vocab: empty corpus");
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary vocab;
    for (const auto& [tok, count] : ranked) {
        if (count < min_frequency) break;
        if (max_size != 0 && vocab.size() >= max_size) break;
        vocab.add(tok);
    }
    return vocab;
}

/// Fixed-length id sequence: CLS, tokens, SEP, then PAD.
struct EncodedExample {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    int label = -1;
    std::string task;

    bool operator==(const EncodedExample&) const = default;
};

inline EncodedExample encode(std::string_view text, const Vocabulary& vocab, std::size_t max_seq_len) {
    if (max_seq_len < 3) {
        throw ConfigError("encode: max_seq_len must be >= 3, got " + std::to_string(max_seq_len));
    }
    auto tokens = detail::split_ws(text);
    const std::size_t keep = std::min(tokens.size(), max_seq_len - 2);
    EncodedExample out;
    out.ids.assign(max_seq_len, Vocabulary::kPad);
    out.mask.assign(max_seq_len, 0);
    out.ids[0] = Vocabulary::kCls;
    for (std::size_t i = 0; i < keep; ++i) out.ids[i + 1] = vocab.id(tokens[i]);
    out.ids[keep + 1] = Vocabulary::kSep;
    std::fill_n(out.mask.begin(), keep + 2, std::uint8_t{1});
    return out;
}

inline EncodedExample encode(const Example& ex, const Vocabulary& vocab, std::size_t max_seq_len) {
    auto out = encode(ex.text, vocab, max_seq_len);
    out.label = ex.label;
    out.task = ex.task;
    return out;
}

/// Tokens between CLS and SEP, mapped back through the vocabulary.
inline std::vector<std::string> decode(const EncodedExample& enc, const Vocabulary& vocab) {
    std::vector<std::string> out;
    for (std::size_t i = 1; i < enc.ids.size() && enc.ids[i] != Vocabulary::kSep; ++i) {
        out.push_back(vocab.token(enc.ids[i]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

using CsvRecord = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and line
/// breaks; CRLF or LF record separators; a leading UTF-8 BOM is skipped.
inline std::vector<CsvRecord> parse_csv(std::string_view content) {
    if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);
    std::vector<CsvRecord> records;
    CsvRecord record;
    std::string field;
    bool quoted = false, field_started = false;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw IngestionError("csv: unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

struct CsvSchema {
    std::string text_column = "text";
    std::string label_column = "label";
};

struct Rejection {
    std::size_t row = 0;  // 1-based data row (header excluded)
    std::string label;
    std::string reason;
};

struct LoadResult {
    std::vector<Example> examples;
    std::vector<Rejection> rejected;
};

/// Resolves a label cell against the ordered label names. Accepts the name
/// itself or its decimal index; a comma-separated multi-label cell is reduced
/// to its first entry.
inline std::optional<int> resolve_label(std::string_view cell, const std::vector<std::string>& label_names) {
    std::string first(cell.substr(0, cell.find(',')));
    auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(first);
    if (first.empty()) return std::nullopt;
    for (std::size_t i = 0; i < label_names.size(); ++i) {
        if (label_names[i] == first) return static_cast<int>(i);
    }
    if (std::all_of(first.begin(), first.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
        first.size() < 10) {
        const int idx = std::stoi(first);
        if (static_cast<std::size_t>(idx) < label_names.size()) return idx;
    }
    return std::nullopt;
}

inline LoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                           const std::vector<std::string>& label_names, const std::string& task = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto records = parse_csv(buffer.str());
    if (records.empty()) throw SchemaError("'" + path.string() + "': missing header row");
    const auto& header = records.front();
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw SchemaError("'" + path.string() + "': missing column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t text_col = column(schema.text_column);
    const std::size_t label_col = column(schema.label_column);

    LoadResult result;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() <= std::max(text_col, label_col)) {
            result.rejected.push_back({r, "", "row has " + std::to_string(rec.size()) + " fields"});
            continue;
        }
        auto label = resolve_label(rec[label_col], label_names);
        if (!label) {
            result.rejected.push_back({r, rec[label_col], "unknown label"});
            continue;
        }
        result.examples.push_back({rec[text_col], *label, task});
    }
    return result;
}

inline void write_rejects(const std::filesystem::path& path, const LoadResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "rejected " << result.rejected.size() << " rows\n";
    for (const auto& r : result.rejected) out << "row " << r.row << "\t" << r.reason << "\t" << r.label << "\n";
}

// ---------------------------------------------------------------------------
// Train / validation split
// ---------------------------------------------------------------------------

/// floor(fraction * n), guarded against representation error just below an
/// integer.
inline std::size_t train_count(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

/// Seeded train/validation partition. Train receives floor(fraction * n)
/// examples (per class when stratified) and validation the rest. Both sides
/// keep the input order.
inline std::pair<std::vector<Example>, std::vector<Example>> split_train_val(
    const std::vector<Example>& examples, double train_fraction, std::uint64_t seed, bool stratified) {
    if (examples.size() < 2) throw SplitError("split: need at least 2 examples, got " + std::to_string(examples.size()));
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw SplitError("split: train_fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> to_train(examples.size(), 0);
    auto assign = [&](std::vector<std::size_t> idx) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t k = train_count(idx.size(), train_fraction);
        for (std::size_t i = 0; i < k; ++i) to_train[idx[i]] = 1;
    };
    if (stratified) {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < examples.size(); ++i) by_class[examples[i].label].push_back(i);
        for (const auto& [label, idx] : by_class) {
            if (idx.size() < 2) {
                throw SplitError("split: class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                 " member(s); stratification needs at least 2");
            }
        }
        for (auto& [label, idx] : by_class) assign(idx);
    } else {
        std::vector<std::size_t> idx(examples.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        assign(std::move(idx));
    }
    std::pair<std::vector<Example>, std::vector<Example>> out;
    for (std::size_t i = 0; i < examples.size(); ++i) (to_train[i] ? out.first : out.second).push_back(examples[i]);
    return out;
}

}  // namespace hsmtl
