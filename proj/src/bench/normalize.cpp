#include "gpvls/bench/normalize.hpp"

#include <algorithm>
#include <map>
#include <regex>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace gpvls::bench {

std::string normalize_text(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    text.toLower(icu::Locale::getRoot());
    if (U_SUCCESS(status)) {
        icu::UnicodeString composed = nfc->normalize(text, status);
        if (U_SUCCESS(status)) text = composed;
    }
    icu::UnicodeString out;
    bool pending_space = false;
    for (int32_t i = 0; i < text.length();) {
        const UChar32 c = text.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            pending_space = !out.isEmpty();
            continue;
        }
        if (u_ispunct(c) && c != ',') continue;
        if (pending_space) out.append(static_cast<UChar>(' '));
        pending_space = false;
        out.append(c);
    }
    std::string result;
    out.toUTF8String(result);
    return result;
}

namespace {

std::size_t find_phrase(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return std::string_view::npos;
    for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + 1)) {
        const bool left = pos == 0 || haystack[pos - 1] == ' ';
        const std::size_t end = pos + needle.size();
        const bool right = end == haystack.size() || haystack[end] == ' ' || haystack[end] == ',';
        if (left && right) return pos;
    }
    return std::string_view::npos;
}

}  // namespace

bool contains_phrase(std::string_view haystack, std::string_view needle) {
    return find_phrase(haystack, needle) != std::string_view::npos;
}

namespace {

std::optional<std::string> letter_if_option(char c, const Options& options) {
    const std::string up(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    for (const auto& [letter, text] : options) {
        if (letter == up) return up;
    }
    return std::nullopt;
}

std::string strip_markup(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c != '*' && c != '_' && c != '`') out.push_back(c);
    }
    const auto b = out.find_first_not_of(" \t\r\n\"'");
    if (b == std::string::npos) return {};
    const auto e = out.find_last_not_of(" \t\r\n\"'");
    return out.substr(b, e - b + 1);
}

std::optional<std::string> explicit_letter(std::string_view response, const Options& options) {
    const std::string s = strip_markup(response);
    std::smatch m;
    // Solitary letter: "B", "B.", "(b)", "b)".
    static const std::regex solitary(R"(^\(?([A-Za-z])\)?[.:]?$)");
    if (std::regex_match(s, m, solitary)) return letter_if_option(m[1].str()[0], options);
    // Leading letter with a delimiter: "B. Appendicitis", "(B) Appendicitis", "B: ...".
    static const std::regex leading(R"(^(?:\(([A-Za-z])\)|([A-Za-z])[.):])(?:\s|$))");
    if (std::regex_search(s, m, leading)) {
        const std::string l = m[1].matched ? m[1].str() : m[2].str();
        if (auto letter = letter_if_option(l[0], options)) return letter;
    }
    // Phrases: "answer is B", "answer: (c)", "option D". A bare lowercase letter followed by
    // a word is read as an article, not a choice.
    static const std::regex phrase(
        R"((?:answer|option|choice)\s*(?:is|:)?\s*(?:option\s+)?(?:\(([A-Za-z])\)|([A-Z])\b|([a-z])(?=[.)]|\s*$)))",
        std::regex::icase);
    std::set<std::string> found;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), phrase); it != std::sregex_iterator(); ++it) {
        const auto& g = *it;
        std::string l;
        if (g[1].matched) l = g[1].str();
        else if (g[2].matched && std::isupper(static_cast<unsigned char>(g[2].str()[0]))) l = g[2].str();
        else if (g[3].matched) l = g[3].str();
        if (l.empty()) continue;
        if (auto letter = letter_if_option(l[0], options)) found.insert(*letter);
    }
    if (found.size() == 1) return *found.begin();
    return std::nullopt;
}

}  // namespace

std::optional<std::string> extract_mc_choice(std::string_view response, const Options& options) {
    if (auto letter = explicit_letter(response, options)) return letter;
    const std::string norm = normalize_text(response);
    std::vector<std::pair<std::string, std::string>> hits;  // (letter, normalized text)
    for (const auto& [letter, text] : options) {
        const std::string t = normalize_text(text);
        if (contains_phrase(norm, t)) hits.emplace_back(letter, t);
    }
    // An option contained in a longer matched option ("appendicitis" in "acute appendicitis")
    // is evidence for the longer one only.
    std::vector<std::string> letters;
    for (const auto& [letter, t] : hits) {
        const bool shadowed = std::any_of(hits.begin(), hits.end(), [&](const auto& other) {
            return other.second != t && other.second.size() > t.size() && contains_phrase(other.second, t);
        });
        if (!shadowed) letters.push_back(letter);
    }
    if (letters.size() == 1) return letters.front();
    return std::nullopt;
}

namespace {

std::vector<std::string> split_components(std::string_view body) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : body) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace

ParsedTriplets parse_triplets(std::string_view response) {
    ParsedTriplets out;
    std::size_t pos = 0;
    while ((pos = response.find('<', pos)) != std::string_view::npos) {
        const std::size_t close = response.find('>', pos + 1);
        if (close == std::string_view::npos) break;
        const std::size_t nested = response.find('<', pos + 1);
        if (nested != std::string_view::npos && nested < close) {
            ++out.skipped;
            pos = nested;
            continue;
        }
        const auto parts = split_components(response.substr(pos + 1, close - pos - 1));
        pos = close + 1;
        std::vector<std::string> norm;
        for (const auto& p : parts) norm.push_back(normalize_text(p));
        if (norm.size() != 3 || std::any_of(norm.begin(), norm.end(), [](const auto& s) { return s.empty(); })) {
            ++out.skipped;
            continue;
        }
        out.triplets.insert({norm[0], norm[1], norm[2]});
    }
    return out;
}

std::string format_triplets(const std::set<data::TripletLabel>& triplets) {
    std::string out;
    for (const auto& t : triplets) {
        if (!out.empty()) out += ", ";
        out += data::format_triplet(t);
    }
    return out;
}

std::set<std::string> parse_tools(std::string_view response, const std::set<std::string>& vocabulary) {
    std::map<std::string, std::string> known;  // normalized -> canonical
    for (const auto& v : vocabulary) known.emplace(normalize_text(v), v);
    std::vector<std::string> by_length;
    for (const auto& [norm, canonical] : known) by_length.push_back(norm);
    std::stable_sort(by_length.begin(), by_length.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });

    std::string text = normalize_text(response);
    static const std::string kLead = "the surgical tools present are ";
    if (text.rfind(kLead, 0) == 0) text = text.substr(kLead.size());
    if (text.rfind("no surgical tools", 0) == 0) return {};

    // Split on ", and ", ", " and " and " into list segments.
    std::vector<std::string> segments;
    std::string cur;
    std::size_t i = 0;
    auto flush = [&] {
        auto b = cur.find_first_not_of(' ');
        if (b != std::string::npos) segments.push_back(cur.substr(b, cur.find_last_not_of(' ') - b + 1));
        cur.clear();
    };
    while (i < text.size()) {
        if (text.compare(i, 6, ", and ") == 0) { flush(); i += 6; continue; }
        if (text[i] == ',') { flush(); ++i; continue; }
        if (text.compare(i, 5, " and ") == 0) { flush(); i += 5; continue; }
        cur.push_back(text[i++]);
    }
    flush();

    std::set<std::string> out;
    for (std::string seg : segments) {
        bool matched = false;
        for (const auto& name : by_length) {
            for (std::size_t p; (p = find_phrase(seg, name)) != std::string::npos;) {
                // Blank out the match so shorter names inside it are not counted again.
                seg.replace(p, name.size(), std::string(name.size(), '#'));
                out.insert(known.at(name));
                matched = true;
            }
        }
        if (!matched && !seg.empty()) out.insert(seg);
    }
    return out;
}

}  // namespace gpvls::bench
