#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpvls/data/record.hpp"

namespace gpvls::bench {

/// NFC, lowercase, Unicode punctuation removed except commas, whitespace runs collapsed to
/// one space and trimmed. Angle brackets are symbols, not punctuation, so they survive.
std::string normalize_text(std::string_view s);

/// True when `needle` occurs in `haystack` delimited by spaces or the string ends. Both
/// arguments are expected to be normalized.
bool contains_phrase(std::string_view haystack, std::string_view needle);

using Options = std::vector<std::pair<std::string, std::string>>;  // (letter, text)

/// Letter cascade: explicit letter ("B", "(b)", "B. ...", "the answer is B"), then a unique
/// option text found in the response. Conflicting or ambiguous evidence yields nullopt.
std::optional<std::string> extract_mc_choice(std::string_view response, const Options& options);

struct ParsedTriplets {
    std::set<data::TripletLabel> triplets;
    std::size_t skipped = 0;  // "<...>" groups without exactly three components
};

/// Every "<a, b, c>" group, each component normalized.
ParsedTriplets parse_triplets(std::string_view response);

/// "<a, b, c>, <d, e, f>" in set order.
std::string format_triplets(const std::set<data::TripletLabel>& triplets);

/// Tool names mentioned in a response. Known vocabulary names are matched longest-first;
/// list segments that mention no known tool count as unrecognized names.
std::set<std::string> parse_tools(std::string_view response, const std::set<std::string>& vocabulary);

}  // namespace gpvls::bench
