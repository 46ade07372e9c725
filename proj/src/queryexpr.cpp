#include "bibmatch/queryexpr.hpp"

#include <algorithm>

namespace bibmatch {

namespace {

QueryExpr title_term(const BibRecord& rec) {
    try {
        return {TitleEquals{normalize_title(rec.title)}};
    } catch (const Error& e) {
        throw Error(std::string("title: ") + e.what());
    }
}

QueryExpr author_term(const BibRecord& rec) {
    try {
        return {AuthorComposite{
            normalize_author(rec.first_author_surname, rec.first_author_given)}};
    } catch (const Error& e) {
        throw Error(std::string("author: ") + e.what());
    }
}

QueryExpr journal_term(const BibRecord& rec) {
    try {
        return {JournalComposite{normalize_journal(rec.journal_name)}};
    } catch (const Error& e) {
        throw Error(std::string("journal: ") + e.what());
    }
}

QueryExpr conjunction(std::vector<QueryExpr> operands) {
    return {AndExpr{std::move(operands)}};
}

}  // namespace

const char* strategy_name(Strategy s) {
    switch (s) {
    case Strategy::full:
        return "full";
    case Strategy::author_title:
        return "author_title";
    case Strategy::journal_title:
        return "journal_title";
    case Strategy::year_title:
        return "year_title";
    case Strategy::title_only:
        return "title_only";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    for (Strategy s : kAllStrategies) {
        if (name == strategy_name(s))
            return s;
    }
    throw Error("unknown strategy \"" + name + "\"");
}

QueryExpr build_query(const BibRecord& record, Strategy strategy) {
    switch (strategy) {
    case Strategy::title_only:
        return title_term(record);
    case Strategy::year_title:
        return conjunction({title_term(record), {YearEquals{record.pub_year}}});
    case Strategy::author_title:
        return conjunction({author_term(record), title_term(record)});
    case Strategy::journal_title:
        return conjunction({journal_term(record), title_term(record)});
    case Strategy::full:
        return conjunction({author_term(record), journal_term(record),
                            title_term(record), {YearEquals{record.pub_year}}});
    }
    throw Error("unknown strategy");
}

std::string serialize_query(const QueryExpr& expr) {
    struct Visitor {
        std::string operator()(const TitleEquals& t) const {
            return "Ti='" + t.title.str() + "'";
        }
        std::string operator()(const YearEquals& y) const {
            return "Y=" + std::to_string(y.year);
        }
        std::string operator()(const AuthorComposite& a) const {
            return "Composite(AA.AuN='" + a.author.str() + "')";
        }
        std::string operator()(const JournalComposite& j) const {
            return "Composite(J.JN='" + j.journal.str() + "')";
        }
        std::string operator()(const AndExpr& a) const {
            std::string out = "And(";
            for (std::size_t i = 0; i < a.operands.size(); ++i) {
                if (i)
                    out += ',';
                out += std::visit(Visitor{}, a.operands[i].node);
            }
            out += ')';
            return out;
        }
    };
    return std::visit(Visitor{}, expr.node);
}

namespace {

class Parser {
public:
    explicit Parser(const std::string& input) : in_(input) {}

    QueryExpr parse() {
        QueryExpr expr = in_.compare(pos_, 4, "And(") == 0 ? parse_and() : parse_term();
        if (pos_ != in_.size())
            throw ParseError("trailing input after expression", pos_);
        return expr;
    }

private:
    QueryExpr parse_and() {
        expect("And(");
        std::vector<QueryExpr> operands;
        operands.push_back(parse_term());
        while (peek() == ',') {
            ++pos_;
            operands.push_back(parse_term());
        }
        expect(")");
        if (operands.size() < 2)
            throw ParseError("And needs at least two operands", pos_);
        for (std::size_t i = 0; i < operands.size(); ++i) {
            for (std::size_t j = i + 1; j < operands.size(); ++j) {
                if (operands[i].node.index() == operands[j].node.index())
                    throw ParseError("duplicate term kind inside And", pos_);
            }
        }
        return {AndExpr{std::move(operands)}};
    }

    QueryExpr parse_term() {
        if (in_.compare(pos_, 4, "Ti='") == 0) {
            pos_ += 4;
            return {TitleEquals{parse_quoted_text()}};
        }
        if (in_.compare(pos_, 2, "Y=") == 0) {
            pos_ += 2;
            return {YearEquals{parse_year()}};
        }
        if (in_.compare(pos_, 10, "Composite(") == 0) {
            pos_ += 10;
            if (in_.compare(pos_, 8, "AA.AuN='") == 0) {
                pos_ += 8;
                NormalizedText text = parse_quoted_text();
                expect(")");
                return {AuthorComposite{std::move(text)}};
            }
            if (in_.compare(pos_, 6, "J.JN='") == 0) {
                pos_ += 6;
                NormalizedText text = parse_quoted_text();
                expect(")");
                return {JournalComposite{std::move(text)}};
            }
            throw ParseError("unknown composite attribute", pos_);
        }
        throw ParseError("expected Ti=, Y=, or Composite(", pos_);
    }

    NormalizedText parse_quoted_text() {
        const std::size_t start = pos_;
        const std::size_t close = in_.find('\'', pos_);
        if (close == std::string::npos)
            throw ParseError("unterminated quoted text", in_.size());
        std::string raw = in_.substr(start, close - start);
        auto text = NormalizedText::parse(std::move(raw));
        if (!text)
            throw ParseError("quoted text is not in normalized form", start);
        pos_ = close + 1;
        return std::move(*text);
    }

    int parse_year() {
        const std::size_t start = pos_;
        while (pos_ < in_.size() && in_[pos_] >= '0' && in_[pos_] <= '9')
            ++pos_;
        const std::size_t len = pos_ - start;
        if (len == 0)
            throw ParseError("expected digits after Y=", start);
        if (len > 1 && in_[start] == '0')
            throw ParseError("year has a leading zero", start);
        if (len > 9)
            throw ParseError("year too long", start);
        return std::stoi(in_.substr(start, len));
    }

    void expect(const char* token) {
        const std::size_t len = std::char_traits<char>::length(token);
        if (in_.compare(pos_, len, token) != 0)
            throw ParseError(std::string("expected \"") + token + "\"", pos_);
        pos_ += len;
    }

    char peek() const { return pos_ < in_.size() ? in_[pos_] : '\0'; }

    const std::string& in_;
    std::size_t pos_ = 0;
};

}  // namespace

QueryExpr parse_query(const std::string& wire) {
    return Parser(wire).parse();
}

}  // namespace bibmatch
