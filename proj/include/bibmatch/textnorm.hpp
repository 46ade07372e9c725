#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bibmatch/error.hpp"

namespace bibmatch {

/// Lowercase query text: only [a-z0-9] and single interior spaces, trimmed.
class NormalizedText {
public:
    NormalizedText() = default;

    /// Validates the invariant; nullopt if `s` is not in normalized form.
    static std::optional<NormalizedText> parse(std::string s);

    /// Wraps a string the caller guarantees is already normalized.
    static NormalizedText trusted(std::string s);

    const std::string& str() const { return value_; }
    bool empty() const { return value_.empty(); }
    std::vector<std::string_view> words() const;

    auto operator<=>(const NormalizedText&) const = default;

private:
    explicit NormalizedText(std::string s) : value_(std::move(s)) {}
    std::string value_;
};

/// Lowercase DOI with trailing dots removed; non-empty.
class NormalizedDoi {
public:
    const std::string& str() const { return value_; }
    auto operator<=>(const NormalizedDoi&) const = default;

private:
    friend NormalizedDoi normalize_doi(std::string_view);
    explicit NormalizedDoi(std::string s) : value_(std::move(s)) {}
    std::string value_;
};

/// Title normalization: strips sub/superscript markup, spells out Greek
/// letters, folds accents, lowercases, and reduces everything else to
/// single-spaced [a-z0-9] words. Throws Error("title vanished") when
/// nothing survives.
NormalizedText normalize_title(std::string_view raw);

/// "<first initial of given> <surname>" with accents folded and hyphens,
/// apostrophes and other punctuation spaced out. The initial is omitted
/// when `given` has no foldable letter. Throws when the surname vanishes.
NormalizedText normalize_author(std::string_view surname, std::string_view given);

/// Journal names additionally spell out "&" as "and".
NormalizedText normalize_journal(std::string_view raw);

/// Trims whitespace, lowercases, strips trailing dots. Throws when empty.
NormalizedDoi normalize_doi(std::string_view raw);

}  // namespace bibmatch
