#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bibmatch/corpus.hpp"
#include "bibmatch/textnorm.hpp"

namespace bibmatch {

/// One entity returned by an index query.
struct CandidateResult {
    std::string entity_id;  // non-empty
    std::string title;
    std::optional<int> pub_year;
    std::optional<std::string> first_author;
    std::optional<std::string> journal_name;
    std::optional<std::string> doi;
    long long citation_count = 0;

    bool operator==(const CandidateResult&) const = default;
};

enum class MetaField { title, year, author, journal };

const char* meta_field_name(MetaField f);

/// How the title-word overlap is computed. set_jaccard is the default;
/// the alternatives exist for sensitivity analysis.
enum class OverlapMode { set_jaccard, multiset_jaccard, query_containment };

struct MatchRules {
    int max_field_differences = 1;
    double title_overlap_min = 0.85;
    OverlapMode overlap_mode = OverlapMode::set_jaccard;
};

struct RejectedCandidate {
    std::string entity_id;
    std::vector<std::string> reasons;  // at least one
};

/// Accepted carries exactly one candidate plus its title overlap;
/// Rejected carries a reason list per candidate.
struct MatchDecision {
    std::optional<CandidateResult> accepted;
    double overlap = 0.0;
    std::vector<RejectedCandidate> rejections;

    bool is_accepted() const { return accepted.has_value(); }
};

/// Jaccard similarity of the two word sets.
double title_word_overlap(const NormalizedText& a, const NormalizedText& b);

/// Overlap under the configured mode (see OverlapMode). query_containment
/// is the asymmetric fraction of `query` words present in `result`.
double title_overlap(const NormalizedText& query, const NormalizedText& result,
                     OverlapMode mode);

/// Which of title/year/author/journal differ between record and candidate.
/// A candidate field that is absent (or that fails normalization) counts
/// as a difference.
std::set<MetaField> field_differences(const BibRecord& record,
                                      const CandidateResult& candidate);

/// Accepts the first candidate whose normalized DOI equals the record's.
/// Requires record.doi (throws otherwise).
MatchDecision doi_filter(const BibRecord& record,
                         const std::vector<CandidateResult>& candidates);

/// A candidate is eligible when it has at most rules.max_field_differences
/// differing fields and title overlap >= rules.title_overlap_min. The
/// eligible candidate with the highest overlap wins; ties go to the
/// earliest position in the returned order.
MatchDecision metadata_filter(const BibRecord& record,
                              const std::vector<CandidateResult>& candidates,
                              const MatchRules& rules);

/// The record's fields normalized once for repeated comparisons. Parts
/// that fail normalization are left unset.
struct NormalizedRecord {
    std::optional<NormalizedText> title;
    std::optional<NormalizedText> author;
    std::optional<NormalizedText> journal;
    std::optional<NormalizedDoi> doi;

    static NormalizedRecord of(const BibRecord& record);
};

/// Normalizes a free-form candidate author string with the author rules:
/// the first whitespace token is treated as the given name, the rest as
/// the surname ("c lin" -> "c lin", "John Smith" -> "j smith").
std::optional<NormalizedText> normalize_candidate_author(const std::string& raw);

}  // namespace bibmatch
