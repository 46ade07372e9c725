#pragma once

#include <cstdint>
#include <vector>

#include "bibmatch/corpus.hpp"

namespace bibmatch::testsupport {

/// Deterministic corpus for pipeline and simulation tests. Every title
/// carries two record-unique tokens on top of shared vocabulary words,
/// which keeps the word overlap between any two distinct titles at or
/// below 0.6 — safely under the mock index's 0.8 retrieval threshold.
/// DOIs are unique; every record has one.
std::vector<BibRecord> make_synthetic_corpus(std::size_t n_records, std::size_t n_fields,
                                             std::uint64_t seed);

}  // namespace bibmatch::testsupport
