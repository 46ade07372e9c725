#include "bibmatch/textnorm.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>

namespace bibmatch {

namespace {

struct FoldEntry {
    std::uint32_t cp;
    const char* replacement;
};

constexpr FoldEntry kFoldTable[] = {
#include "fold_table.inc"
};

struct GreekEntry {
    std::uint32_t cp;
    const char* name;
};

// Greek alphabet, both cases, plus the precomposed tonos/dialytika forms
// and common symbol variants. Final sigma maps to "sigma".
constexpr GreekEntry kGreekTable[] = {
    {0x00B5, "mu"},       // micro sign
    {0x0386, "alpha"},    // Ά
    {0x0388, "epsilon"},  // Έ
    {0x0389, "eta"},      // Ή
    {0x038A, "iota"},     // Ί
    {0x038C, "omicron"},  // Ό
    {0x038E, "upsilon"},  // Ύ
    {0x038F, "omega"},    // Ώ
    {0x0390, "iota"},     // ΐ
    {0x0391, "alpha"},   {0x0392, "beta"},  {0x0393, "gamma"},   {0x0394, "delta"},
    {0x0395, "epsilon"}, {0x0396, "zeta"},  {0x0397, "eta"},     {0x0398, "theta"},
    {0x0399, "iota"},    {0x039A, "kappa"}, {0x039B, "lambda"},  {0x039C, "mu"},
    {0x039D, "nu"},      {0x039E, "xi"},    {0x039F, "omicron"}, {0x03A0, "pi"},
    {0x03A1, "rho"},     {0x03A3, "sigma"}, {0x03A4, "tau"},     {0x03A5, "upsilon"},
    {0x03A6, "phi"},     {0x03A7, "chi"},   {0x03A8, "psi"},     {0x03A9, "omega"},
    {0x03AA, "iota"},    // Ϊ
    {0x03AB, "upsilon"}, // Ϋ
    {0x03AC, "alpha"},   // ά
    {0x03AD, "epsilon"}, // έ
    {0x03AE, "eta"},     // ή
    {0x03AF, "iota"},    // ί
    {0x03B0, "upsilon"}, // ΰ
    {0x03B1, "alpha"},   {0x03B2, "beta"},  {0x03B3, "gamma"},   {0x03B4, "delta"},
    {0x03B5, "epsilon"}, {0x03B6, "zeta"},  {0x03B7, "eta"},     {0x03B8, "theta"},
    {0x03B9, "iota"},    {0x03BA, "kappa"}, {0x03BB, "lambda"},  {0x03BC, "mu"},
    {0x03BD, "nu"},      {0x03BE, "xi"},    {0x03BF, "omicron"}, {0x03C0, "pi"},
    {0x03C1, "rho"},     {0x03C2, "sigma"}, {0x03C3, "sigma"},   {0x03C4, "tau"},
    {0x03C5, "upsilon"}, {0x03C6, "phi"},   {0x03C7, "chi"},     {0x03C8, "psi"},
    {0x03C9, "omega"},
    {0x03CA, "iota"},    // ϊ
    {0x03CB, "upsilon"}, // ϋ
    {0x03CC, "omicron"}, // ό
    {0x03CD, "upsilon"}, // ύ
    {0x03CE, "omega"},   // ώ
    {0x03D0, "beta"},    // ϐ
    {0x03D1, "theta"},   // ϑ
    {0x03D2, "upsilon"}, // ϒ
    {0x03D5, "phi"},     // ϕ
    {0x03D6, "pi"},      // ϖ
    {0x03F0, "kappa"},   // ϰ
    {0x03F1, "rho"},     // ϱ
};

const char* lookup(const FoldEntry* table, std::size_t n, std::uint32_t cp) {
    auto it = std::lower_bound(table, table + n, cp,
                               [](const FoldEntry& e, std::uint32_t c) { return e.cp < c; });
    return (it != table + n && it->cp == cp) ? it->replacement : nullptr;
}

const char* greek_name(std::uint32_t cp) {
    for (const auto& e : kGreekTable)
        if (e.cp == cp)
            return e.name;
    return nullptr;
}

bool is_combining_mark(std::uint32_t cp) {
    return (cp >= 0x0300 && cp <= 0x036F) || (cp >= 0x1AB0 && cp <= 0x1AFF) ||
           (cp >= 0x1DC0 && cp <= 0x1DFF) || (cp >= 0x20D0 && cp <= 0x20FF) ||
           (cp >= 0xFE20 && cp <= 0xFE2F);
}

/// Decodes the next UTF-8 codepoint; malformed bytes yield U+FFFD and
/// advance by one so normalization never fails on bad input.
std::uint32_t next_codepoint(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    std::uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + len > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

std::vector<std::uint32_t> decode_utf8(std::string_view s) {
    std::vector<std::uint32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size())
        out.push_back(next_codepoint(s, i));
    return out;
}

bool ascii_alpha(std::uint32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

/// Removes <sup>/<sub>/<inf> spans (with or without slash, any case).
/// Other angle-bracket content is left alone for the punctuation pass.
std::vector<std::uint32_t> strip_markup_tags(const std::vector<std::uint32_t>& in) {
    std::vector<std::uint32_t> out;
    out.reserve(in.size());
    for (std::size_t i = 0; i < in.size();) {
        if (in[i] != '<') {
            out.push_back(in[i++]);
            continue;
        }
        std::size_t j = i + 1;
        if (j < in.size() && in[j] == '/')
            ++j;
        std::string tag;
        while (j < in.size() && ascii_alpha(in[j]))
            tag += static_cast<char>(std::tolower(static_cast<int>(in[j++])));
        while (j < in.size() && in[j] == ' ')
            ++j;
        if (j < in.size() && in[j] == '>' && (tag == "sup" || tag == "sub" || tag == "inf")) {
            i = j + 1;  // drop the whole span
        } else {
            out.push_back(in[i++]);
        }
    }
    return out;
}

void append_ascii(std::vector<std::uint32_t>& out, const char* s) {
    for (; *s; ++s)
        out.push_back(static_cast<unsigned char>(*s));
}

/// Greek letters become their English names surrounded by spaces, so
/// "1β" ends up as the two words "1 beta".
std::vector<std::uint32_t> spell_out_greek(const std::vector<std::uint32_t>& in) {
    std::vector<std::uint32_t> out;
    out.reserve(in.size());
    for (std::uint32_t cp : in) {
        if (const char* name = greek_name(cp)) {
            out.push_back(' ');
            append_ascii(out, name);
            out.push_back(' ');
        } else {
            out.push_back(cp);
        }
    }
    return out;
}

/// Accent folding: precomposed Latin letters map to their ASCII base
/// letters, combining marks are dropped. Everything the table does not
/// cover passes through for the later punctuation pass to deal with.
std::vector<std::uint32_t> fold_accents(const std::vector<std::uint32_t>& in) {
    std::vector<std::uint32_t> out;
    out.reserve(in.size());
    for (std::uint32_t cp : in) {
        if (const char* repl = lookup(kFoldTable, std::size(kFoldTable), cp)) {
            append_ascii(out, repl);
        } else if (!is_combining_mark(cp)) {
            out.push_back(cp);
        }
    }
    return out;
}

/// Lowercases and replaces every codepoint outside [a-z0-9] with a space,
/// then collapses runs of spaces and trims.
std::string to_word_string(const std::vector<std::uint32_t>& in) {
    std::string out;
    out.reserve(in.size());
    bool pending_space = false;
    for (std::uint32_t cp : in) {
        if (cp >= 'A' && cp <= 'Z')
            cp += 'a' - 'A';
        const bool keep = (cp >= 'a' && cp <= 'z') || (cp >= '0' && cp <= '9');
        if (keep) {
            if (pending_space && !out.empty())
                out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(cp));
        } else {
            pending_space = true;
        }
    }
    return out;
}

std::string fold_to_words(std::string_view raw) {
    return to_word_string(fold_accents(decode_utf8(raw)));
}

}  // namespace

std::optional<NormalizedText> NormalizedText::parse(std::string s) {
    if (!s.empty() && (s.front() == ' ' || s.back() == ' '))
        return std::nullopt;
    char prev = 0;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == ' ';
        if (!ok || (c == ' ' && prev == ' '))
            return std::nullopt;
        prev = c;
    }
    return NormalizedText(std::move(s));
}

NormalizedText NormalizedText::trusted(std::string s) {
    return NormalizedText(std::move(s));
}

std::vector<std::string_view> NormalizedText::words() const {
    std::vector<std::string_view> out;
    std::string_view v = value_;
    std::size_t pos = 0;
    while (pos < v.size()) {
        const std::size_t end = v.find(' ', pos);
        if (end == std::string_view::npos) {
            out.push_back(v.substr(pos));
            break;
        }
        out.push_back(v.substr(pos, end - pos));
        pos = end + 1;
    }
    return out;
}

NormalizedText normalize_title(std::string_view raw) {
    auto cps = decode_utf8(raw);
    cps = strip_markup_tags(cps);
    cps = spell_out_greek(cps);
    cps = fold_accents(cps);
    std::string value = to_word_string(cps);
    if (value.empty())
        throw Error("title vanished: \"" + std::string(raw) + "\"");
    return NormalizedText::trusted(std::move(value));
}

NormalizedText normalize_author(std::string_view surname, std::string_view given) {
    std::string surname_norm = fold_to_words(surname);
    if (surname_norm.empty())
        throw Error("author surname vanished: \"" + std::string(surname) + "\"");
    const std::string given_norm = fold_to_words(given);
    char initial = 0;
    for (char c : given_norm) {
        if (c >= 'a' && c <= 'z') {
            initial = c;
            break;
        }
    }
    if (initial == 0)
        return NormalizedText::trusted(std::move(surname_norm));
    std::string value;
    value.push_back(initial);
    value.push_back(' ');
    value += surname_norm;
    return NormalizedText::trusted(std::move(value));
}

NormalizedText normalize_journal(std::string_view raw) {
    std::string expanded;
    expanded.reserve(raw.size());
    for (char c : raw) {
        if (c == '&')
            expanded += " and ";
        else
            expanded.push_back(c);
    }
    std::string value = fold_to_words(expanded);
    if (value.empty())
        throw Error("journal name vanished: \"" + std::string(raw) + "\"");
    return NormalizedText::trusted(std::move(value));
}

NormalizedDoi normalize_doi(std::string_view raw) {
    std::size_t begin = 0, end = raw.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin])))
        ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1])))
        --end;
    std::string value;
    value.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        char c = raw[i];
        if (c >= 'A' && c <= 'Z')
            c += 'a' - 'A';
        value.push_back(c);
    }
    while (!value.empty() && value.back() == '.')
        value.pop_back();
    if (value.empty())
        throw Error("doi vanished: \"" + std::string(raw) + "\"");
    return NormalizedDoi(std::move(value));
}

}  // namespace bibmatch
