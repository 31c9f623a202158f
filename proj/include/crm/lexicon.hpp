#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crm/model.hpp"

namespace crm {

struct LexiconEntry {
    std::string headword;
    std::vector<std::string> definitions;  // deduplicated, order preserved
};

struct TrainingInstance {
    std::vector<std::string> tokens;  // headword followed by all definitions
};

struct LexiconParse {
    std::vector<LexiconEntry> entries;
    size_t malformed_lines = 0;
};

// Tab-separated UTF-8, one "headword \t definition" record per line.
// Multiple records per headword merge their definitions; malformed lines are
// counted, not fatal. Sense numbers like "1)" are stripped from definitions.
LexiconParse parse_lexicon(const std::string& path);

std::string serialize_lexicon(const std::vector<LexiconEntry>& entries);

// headword + definitions joined with single spaces, tokenized, truncated to
// max_tokens. Increments *truncated per shortened instance when given.
std::vector<TrainingInstance> build_instances(const std::vector<LexiconEntry>& entries,
                                              int max_tokens, size_t* truncated = nullptr);

struct MaskedInstance {
    std::vector<int> ids;                       // corrupted id sequence (CLS ... SEP)
    std::vector<std::pair<int, int>> targets;   // position -> original id
};

// MLM corruption: each content position selected independently with the given
// rate; selected positions become MASK 80% / random non-reserved id 10% /
// unchanged 10%. At least one position is always selected. CLS/SEP/PAD are
// never selected. Deterministic per seed.
MaskedInstance mask_instance(const TrainingInstance& instance, const Vocabulary& vocab,
                             int max_seq_len, double rate, uint64_t seed);

// Line-delimited JSON corpus: {"tokens": [...]} per instance.
void write_corpus(const std::string& path, const std::vector<TrainingInstance>& instances);
std::vector<TrainingInstance> read_corpus(const std::string& path);

}  // namespace crm
