#pragma once

#include <random>
#include <string>
#include <vector>

#include "gpvls/bench/harness.hpp"
#include "gpvls/data/record.hpp"

namespace gpvls::test_support {

/// 1-20 bytes drawn from an alphabet with JSON escapes, markup, accents, CJK and emoji.
inline std::string random_text(std::mt19937_64& rng) {
    static const std::string alphabet = "abc XYZ<>,.\"\\/\n\t'é漢🙂";
    std::string s;
    const std::size_t n = 1 + rng() % 20;
    while (s.size() < n) {
        // Step over whole UTF-8 sequences.
        std::size_t i = rng() % alphabet.size();
        while (i > 0 && (static_cast<unsigned char>(alphabet[i]) & 0xC0) == 0x80) --i;
        std::size_t len = 1;
        while (i + len < alphabet.size() && (static_cast<unsigned char>(alphabet[i + len]) & 0xC0) == 0x80) ++len;
        s += alphabet.substr(i, len);
    }
    return s;
}

inline data::VQARecord random_record(std::mt19937_64& rng) {
    const auto& sources = data::all_sources();
    const data::SourceDataset source = sources[rng() % sources.size()];
    data::VQARecord r;
    r.id = "rec-" + std::to_string(rng());
    if (data::is_vision(source)) r.image_ref = random_text(rng);
    r.source_dataset = source;
    r.split = rng() % 2 ? data::Split::Train : data::Split::Test;
    const std::size_t turns = 1 + rng() % 3;
    for (std::size_t t = 0; t < turns; ++t) {
        r.turns.push_back({data::Role::User, random_text(rng)});
        r.turns.push_back({data::Role::Assistant, random_text(rng)});
    }
    return r;
}

/// Free text with zero to four triplet groups and sometimes a malformed one.
inline std::string random_triplet_text(std::mt19937_64& rng) {
    static const std::vector<std::string> words = {"Hook",    "dissect", "gall bladder", "cystic_duct", "Grasper",
                                                   "clip",    "x",       "  padded  ",   "liver.",      "\xc3\x89tat"};
    std::string text = "prefix ";
    const int n = static_cast<int>(rng() % 5);
    for (int k = 0; k < n; ++k) {
        text += "<" + words[rng() % words.size()] + ", " + words[rng() % words.size()] + ", " +
                words[rng() % words.size()] + "> and ";
    }
    if (rng() % 3 == 0) text += "<broken, group>";
    return text;
}

inline bench::ScoreReport random_report(std::mt19937_64& rng, int index) {
    static const std::vector<std::string> names = {"GP-VLS",      "GPT-4 Omni", "a|b",       "comma, model",
                                                   "quote \"q\"", "back\\slash", "LLaVA-Med", "\xc3\xa9t\xc3\xa9"};
    bench::ScoreReport r;
    r.model = names[rng() % names.size()] + std::to_string(index);
    for (bench::TaskName t : bench::kAllTasks) {
        if (rng() % 4 == 0) continue;
        bench::TaskScore s;
        s.total = rng() % 3000;
        s.correct = s.total ? rng() % (s.total + 1) : 0;
        s.failures = rng() % 3;
        if (bench::is_set_task(t)) s.set = bench::SetDetail{rng() % 50, rng() % 60 + 50, rng() % 60 + 50};
        r.tasks[t] = s;
    }
    return r;
}

}  // namespace gpvls::test_support
