#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "bibmatch/corpus.hpp"
#include "bibmatch/error.hpp"
#include "bibmatch/textnorm.hpp"

namespace bibmatch {

struct TitleEquals {
    NormalizedText title;
    bool operator==(const TitleEquals&) const = default;
};
struct YearEquals {
    int year = 0;
    bool operator==(const YearEquals&) const = default;
};
struct AuthorComposite {
    NormalizedText author;
    bool operator==(const AuthorComposite&) const = default;
};
struct JournalComposite {
    NormalizedText journal;
    bool operator==(const JournalComposite&) const = default;
};

struct QueryExpr;

/// Conjunction of two or more terms. Flattened by construction: operands
/// are terms, never nested And nodes, and each term kind appears at most
/// once.
struct AndExpr {
    std::vector<QueryExpr> operands;
    bool operator==(const AndExpr&) const = default;
};

struct QueryExpr {
    std::variant<TitleEquals, YearEquals, AuthorComposite, JournalComposite, AndExpr> node;
    bool operator==(const QueryExpr&) const = default;
};

/// The five query strategies, in the order of the report columns.
enum class Strategy { full, author_title, journal_title, year_title, title_only };

constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::full, Strategy::author_title, Strategy::journal_title,
    Strategy::year_title, Strategy::title_only};

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);  // throws on unknown name

/// Builds the query for one record under one strategy. Normalization
/// failures propagate as Error labeled with the failing part.
QueryExpr build_query(const BibRecord& record, Strategy strategy);

/// Wire form: Ti='…', Y=NNNN, Composite(AA.AuN='…'), Composite(J.JN='…'),
/// And(e1,e2,…) with no spaces after commas.
std::string serialize_query(const QueryExpr& expr);

/// Syntax error with the byte offset where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Inverse of serialize_query; accepts exactly the wire grammar.
QueryExpr parse_query(const std::string& wire);

}  // namespace bibmatch
