#include "crm/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "crm/checkpoint.hpp"
#include "crm/errors.hpp"
#include "crm/rng.hpp"

namespace crm {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool is_sense_number(const std::string& tok) {
    if (tok.size() < 2 || tok.back() != ')') return false;
    for (size_t i = 0; i + 1 < tok.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
    }
    return true;
}

// Drops sense-number tokens ("1)", "2)") and collapses whitespace.
std::string normalize_definition(const std::string& raw) {
    std::istringstream in(raw);
    std::string tok, out;
    while (in >> tok) {
        if (is_sense_number(tok)) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

}  // namespace

LexiconParse parse_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path);

    LexiconParse result;
    std::unordered_map<std::string, size_t> entry_index;
    std::vector<std::unordered_set<std::string>> seen_defs;

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;  // blank lines are not records
        size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            ++result.malformed_lines;
            continue;
        }
        std::string headword = trim(line.substr(0, tab));
        std::string definition = normalize_definition(line.substr(tab + 1));
        if (headword.empty() || definition.empty()) {
            ++result.malformed_lines;
            continue;
        }
        auto it = entry_index.find(headword);
        size_t idx;
        if (it == entry_index.end()) {
            idx = result.entries.size();
            entry_index[headword] = idx;
            result.entries.push_back({headword, {}});
            seen_defs.emplace_back();
        } else {
            idx = it->second;
        }
        if (seen_defs[idx].insert(definition).second) {
            result.entries[idx].definitions.push_back(definition);
        }
    }

    if (result.entries.empty()) {
        throw DataError("lexicon " + path + " contains no valid entries (" +
                        std::to_string(result.malformed_lines) + " malformed lines)");
    }
    return result;
}

std::string serialize_lexicon(const std::vector<LexiconEntry>& entries) {
    std::string out;
    for (const LexiconEntry& e : entries) {
        for (const std::string& d : e.definitions) {
            out += e.headword;
            out.push_back('\t');
            out += d;
            out.push_back('\n');
        }
    }
    return out;
}

std::vector<TrainingInstance> build_instances(const std::vector<LexiconEntry>& entries,
                                              int max_tokens, size_t* truncated) {
    if (max_tokens <= 0) throw std::invalid_argument("build_instances: max_tokens must be positive");
    std::vector<TrainingInstance> out;
    out.reserve(entries.size());
    for (const LexiconEntry& e : entries) {
        std::string text = e.headword;
        for (const std::string& d : e.definitions) {
            text.push_back(' ');
            text += d;
        }
        TrainingInstance inst{tokenize(text)};
        if (static_cast<int>(inst.tokens.size()) > max_tokens) {
            inst.tokens.resize(static_cast<size_t>(max_tokens));
            if (truncated) ++*truncated;
        }
        out.push_back(std::move(inst));
    }
    return out;
}

MaskedInstance mask_instance(const TrainingInstance& instance, const Vocabulary& vocab,
                             int max_seq_len, double rate, uint64_t seed) {
    if (rate <= 0.0 || rate >= 1.0) {
        throw std::invalid_argument("mask_instance: rate must lie strictly between 0 and 1");
    }
    MaskedInstance masked;
    masked.ids = encode(vocab, instance.tokens, max_seq_len);

    std::vector<size_t> content;
    for (size_t i = 0; i < masked.ids.size(); ++i) {
        int id = masked.ids[i];
        if (id == Vocabulary::kCls || id == Vocabulary::kSep || id == Vocabulary::kPad) continue;
        content.push_back(i);
    }
    if (content.empty()) return masked;

    Rng rng(mix_seed(seed, 0x6d61736bULL));
    std::vector<size_t> selected;
    for (size_t pos : content) {
        if (rng.uniform01() < rate) selected.push_back(pos);
    }
    if (selected.empty()) {
        selected.push_back(content[rng.uniform_below(content.size())]);
    }

    int n_random_ids = vocab.size() - Vocabulary::kReserved;
    for (size_t pos : selected) {
        int original = masked.ids[pos];
        double u = rng.uniform01();
        if (u < 0.8) {
            masked.ids[pos] = Vocabulary::kMask;
        } else if (u < 0.9 && n_random_ids > 0) {
            // replacement ids are drawn from the non-reserved range so a
            // corruption can never introduce PAD/CLS/SEP
            masked.ids[pos] =
                Vocabulary::kReserved + static_cast<int>(rng.uniform_below(
                                            static_cast<uint64_t>(n_random_ids)));
        }
        masked.targets.emplace_back(static_cast<int>(pos), original);
    }
    return masked;
}

void write_corpus(const std::string& path, const std::vector<TrainingInstance>& instances) {
    std::string out;
    for (const TrainingInstance& inst : instances) {
        nlohmann::json rec;
        rec["tokens"] = inst.tokens;
        out += rec.dump();
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

std::vector<TrainingInstance> read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus " + path);
    std::vector<TrainingInstance> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            out.push_back({rec.at("tokens").get<std::vector<std::string>>()});
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corpus " + path + " line " + std::to_string(lineno) +
                            " malformed: " + e.what());
        }
    }
    return out;
}

}  // namespace crm
