#include "crm/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "crm/digest.hpp"
#include "crm/errors.hpp"

namespace crm {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'M', 'W'};
constexpr uint8_t kVersion = 1;

void append_f32_le(std::vector<uint8_t>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    out.push_back(static_cast<uint8_t>(bits & 0xff));
    out.push_back(static_cast<uint8_t>((bits >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((bits >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((bits >> 24) & 0xff));
}

double read_f32_le(const uint8_t* p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                    (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return static_cast<double>(f);
}

void append_tensor(std::vector<uint8_t>& payload, const Matrix2D& m) {
    for (double v : m.data) append_f32_le(payload, static_cast<float>(v));
}

struct ManifestEntry {
    std::string name;
    const Matrix2D* tensor;
};

std::vector<ManifestEntry> manifest_order(const NamedWeights& w, const LoraSet* lora) {
    std::vector<ManifestEntry> entries;
    for (const std::string& name : w.tensors.names()) {
        entries.push_back({name, &w.tensors.at(name)});
    }
    if (lora != nullptr) {
        for (const LoraAdapter& ad : lora->adapters) {
            entries.push_back({ad.target + ".lora.A", &ad.A});
            entries.push_back({ad.target + ".lora.B", &ad.B});
        }
    }
    return entries;
}

}  // namespace

std::vector<uint8_t> tensor_payload(const NamedWeights& w, const LoraSet* lora) {
    std::vector<uint8_t> payload;
    for (const ManifestEntry& e : manifest_order(w, lora)) {
        append_tensor(payload, *e.tensor);
    }
    return payload;
}

std::string payload_digest(const NamedWeights& w, const LoraSet* lora) {
    return sha256_hex(tensor_payload(w, lora));
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw DataError("write failed for " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw DataError("rename to " + path + " failed: " + ec.message());
    }
}

void save_checkpoint(const std::string& path, const NamedWeights& w, const LoraSet* lora,
                     const std::vector<std::string>& provenance) {
    validate_scheme(w);
    nlohmann::json header;
    header["config"] = {{"vocab_size", w.config.vocab_size}, {"d_model", w.config.d_model},
                        {"n_heads", w.config.n_heads},       {"n_layers", w.config.n_layers},
                        {"d_ff", w.config.d_ff},             {"max_seq_len", w.config.max_seq_len},
                        {"seed", w.config.seed}};
    header["vocab"] = w.vocab.tokens;

    nlohmann::json manifest = nlohmann::json::array();
    size_t offset = 0;
    for (const ManifestEntry& e : manifest_order(w, lora)) {
        manifest.push_back({{"name", e.name},
                            {"rows", e.tensor->rows},
                            {"cols", e.tensor->cols},
                            {"offset", offset}});
        offset += e.tensor->size() * 4;
    }
    header["tensors"] = manifest;
    if (lora != nullptr) {
        header["lora"] = {{"alpha", lora->alpha}, {"rank", lora->rank}};
    }
    if (!provenance.empty()) {
        header["provenance"] = provenance;
    }

    std::string header_text = header.dump();
    std::vector<uint8_t> payload = tensor_payload(w, lora);

    std::string blob;
    blob.reserve(9 + header_text.size() + payload.size());
    blob.append(kMagic, 4);
    blob.push_back(static_cast<char>(kVersion));
    uint32_t hlen = static_cast<uint32_t>(header_text.size());
    for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((hlen >> (8 * i)) & 0xff));
    blob.append(header_text);
    blob.append(reinterpret_cast<const char*>(payload.data()), payload.size());

    write_file_atomic(path, blob);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 9) throw DataError("checkpoint " + path + " truncated");
    if (std::memcmp(blob.data(), kMagic, 4) != 0) {
        throw DataError("checkpoint " + path + " has wrong magic bytes");
    }
    uint8_t version = static_cast<uint8_t>(blob[4]);
    if (version != kVersion) {
        throw DataError("checkpoint " + path + " has unsupported version " +
                        std::to_string(version));
    }
    uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) {
        hlen |= static_cast<uint32_t>(static_cast<uint8_t>(blob[5 + i])) << (8 * i);
    }
    if (blob.size() < 9 + static_cast<size_t>(hlen)) {
        throw DataError("checkpoint " + path + " header truncated");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(9, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + " header is not valid JSON: " + e.what());
    }

    CheckpointData data;
    try {
        const auto& cfg = header.at("config");
        data.weights.config.vocab_size = cfg.at("vocab_size").get<int>();
        data.weights.config.d_model = cfg.at("d_model").get<int>();
        data.weights.config.n_heads = cfg.at("n_heads").get<int>();
        data.weights.config.n_layers = cfg.at("n_layers").get<int>();
        data.weights.config.d_ff = cfg.at("d_ff").get<int>();
        data.weights.config.max_seq_len = cfg.at("max_seq_len").get<int>();
        data.weights.config.seed = cfg.at("seed").get<uint64_t>();

        std::vector<std::string> vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
        if (vocab_tokens.size() < Vocabulary::kReserved) {
            throw DataError("checkpoint vocabulary lacks reserved tokens");
        }
        Vocabulary v;
        for (int i = 0; i < Vocabulary::kReserved; ++i) {
            if (vocab_tokens[static_cast<size_t>(i)] != v.tokens[static_cast<size_t>(i)]) {
                throw DataError("checkpoint vocabulary reassigns reserved token id " +
                                std::to_string(i));
            }
        }
        data.weights.vocab = Vocabulary::from_tokens(
            {vocab_tokens.begin() + Vocabulary::kReserved, vocab_tokens.end()});

        const uint8_t* payload = reinterpret_cast<const uint8_t*>(blob.data()) + 9 + hlen;
        size_t payload_size = blob.size() - 9 - hlen;

        std::optional<LoraSet> lora;
        if (header.contains("lora")) {
            lora.emplace();
            lora->alpha = header["lora"].at("alpha").get<double>();
            lora->rank = header["lora"].at("rank").get<int>();
        }

        for (const auto& entry : header.at("tensors")) {
            std::string name = entry.at("name").get<std::string>();
            int rows = entry.at("rows").get<int>();
            int cols = entry.at("cols").get<int>();
            size_t offset = entry.at("offset").get<size_t>();
            size_t count = static_cast<size_t>(rows) * static_cast<size_t>(cols);
            if (offset + count * 4 > payload_size) {
                throw DataError("checkpoint tensor " + name + " exceeds payload size");
            }
            Matrix2D m(rows, cols, 0.0);
            for (size_t i = 0; i < count; ++i) {
                m.data[i] = read_f32_le(payload + offset + i * 4);
            }
            if (!m.all_finite()) {
                throw DataError("checkpoint tensor " + name + " contains non-finite values");
            }
            if (name.ends_with(".lora.A") || name.ends_with(".lora.B")) {
                if (!lora.has_value()) {
                    throw DataError("checkpoint has adapter tensors but no lora header");
                }
                bool is_a = name.ends_with(".lora.A");
                std::string target = name.substr(0, name.size() - 7);
                LoraAdapter* ad = nullptr;
                for (LoraAdapter& cand : lora->adapters) {
                    if (cand.target == target) {
                        ad = &cand;
                        break;
                    }
                }
                if (ad == nullptr) {
                    lora->adapters.push_back({target, Matrix2D(), Matrix2D(), lora->alpha,
                                              lora->rank});
                    ad = &lora->adapters.back();
                }
                (is_a ? ad->A : ad->B) = std::move(m);
            } else {
                data.weights.tensors.add(name, std::move(m));
            }
        }

        if (lora.has_value()) {
            for (const LoraAdapter& ad : lora->adapters) {
                if (ad.A.size() == 0 || ad.B.size() == 0) {
                    throw DataError("checkpoint adapter " + ad.target + " is missing a factor");
                }
                if (ad.A.cols != lora->rank || ad.B.rows != lora->rank) {
                    throw DataError("checkpoint adapter " + ad.target +
                                    " rank does not match header");
                }
            }
            data.lora = std::move(lora);
        }

        if (header.contains("provenance")) {
            data.provenance = header["provenance"].get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + " header malformed: " + std::string(e.what()));
    }

    validate_scheme(data.weights);
    return data;
}

}  // namespace crm
