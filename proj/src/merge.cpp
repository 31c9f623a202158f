#include "crm/merge.hpp"

#include <algorithm>
#include <numeric>

#include "crm/checkpoint.hpp"
#include "crm/rng.hpp"

namespace crm {

NamedWeights average_weights(const std::vector<const NamedWeights*>& models) {
    if (models.empty()) throw std::invalid_argument("average_weights: need at least one model");
    const NamedWeights& first = *models[0];
    for (size_t i = 1; i < models.size(); ++i) {
        const NamedWeights& m = *models[i];
        if (!m.config.same_architecture(first.config)) {
            throw std::invalid_argument("average_weights: operand " + std::to_string(i) +
                                        " has a different architecture");
        }
        if (!(m.vocab == first.vocab)) {
            throw std::invalid_argument("average_weights: operand " + std::to_string(i) +
                                        " has a different vocabulary");
        }
        if (m.tensors.names() != first.tensors.names()) {
            for (const std::string& name : first.tensors.names()) {
                if (!m.tensors.contains(name)) {
                    throw std::invalid_argument("average_weights: operand " + std::to_string(i) +
                                                " is missing tensor " + name);
                }
            }
            for (const std::string& name : m.tensors.names()) {
                if (!first.tensors.contains(name)) {
                    throw std::invalid_argument("average_weights: operand " + std::to_string(i) +
                                                " has extra tensor " + name);
                }
            }
            throw std::invalid_argument("average_weights: operand " + std::to_string(i) +
                                        " orders tensors differently");
        }
        for (const std::string& name : first.tensors.names()) {
            if (!m.tensors.at(name).same_shape(first.tensors.at(name))) {
                throw std::invalid_argument("average_weights: shape mismatch at tensor " + name);
            }
        }
    }

    // fixed summation order: by source digest
    std::vector<size_t> order(models.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<std::string> digests;
    digests.reserve(models.size());
    for (const NamedWeights* m : models) digests.push_back(payload_digest(*m));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return digests[a] < digests[b]; });

    NamedWeights out;
    out.config = first.config;
    out.vocab = first.vocab;
    const double inv_n = 1.0 / static_cast<double>(models.size());
    for (const std::string& name : first.tensors.names()) {
        const Matrix2D& proto = first.tensors.at(name);
        Matrix2D sum(proto.rows, proto.cols, 0.0);
        for (size_t idx : order) add_in_place(sum, models[idx]->tensors.at(name));
        for (double& v : sum.data) v *= inv_n;
        out.tensors.add(name, std::move(sum));
    }
    return out;
}

std::vector<std::string> adapted_tensor_names(const ModelConfig& c) {
    std::vector<std::string> names;
    for (int i = 0; i < c.n_layers; ++i) {
        std::string p = "layers." + std::to_string(i) + ".attn.";
        for (const char* proj : {"q", "k", "v", "o"}) {
            names.push_back(p + proj + ".w");
        }
    }
    return names;
}

MergedModel attach_adapters(const NamedWeights& base, int rank, double alpha, uint64_t seed) {
    validate_scheme(base);
    if (rank < 1) throw std::invalid_argument("attach_adapters: rank must be >= 1");

    MergedModel m;
    m.base = base;
    m.lora.alpha = alpha;
    m.lora.rank = rank;

    Rng rng(mix_seed(seed, 0x6c6f7261ULL));  // "lora" stream
    for (const std::string& name : adapted_tensor_names(base.config)) {
        const Matrix2D& target = base.tensors.at(name);
        int d = target.rows, l = target.cols;
        if (rank > std::min(d, l)) {
            throw std::invalid_argument("attach_adapters: rank " + std::to_string(rank) +
                                        " exceeds min dimension of " + name + " " +
                                        target.shape_str());
        }
        LoraAdapter ad;
        ad.target = name;
        ad.alpha = alpha;
        ad.rank = rank;
        ad.A = Matrix2D(d, rank, 0.0);
        for (double& v : ad.A.data) v = 0.02 * rng.gaussian();
        ad.B = Matrix2D(rank, l, 0.0);
        m.lora.adapters.push_back(std::move(ad));
    }
    return m;
}

Matrix2D effective_weight(const MergedModel& m, const std::string& name) {
    return effective_tensor(m.base, &m.lora, name);
}

NamedWeights fold_adapters(const MergedModel& m) {
    NamedWeights out;
    out.config = m.base.config;
    out.vocab = m.base.vocab;
    for (const std::string& name : m.base.tensors.names()) {
        out.tensors.add(name, effective_weight(m, name));
    }
    return out;
}

int64_t trainable_param_count(const MergedModel& m, bool with_head) {
    int64_t count = 0;
    for (const LoraAdapter& ad : m.lora.adapters) {
        count += static_cast<int64_t>(ad.rank) * (ad.A.rows + ad.B.cols);
    }
    if (with_head && m.base.has_cls_head()) {
        count += static_cast<int64_t>(m.base.tensors.at("cls.w").size());
        count += static_cast<int64_t>(m.base.tensors.at("cls.b").size());
    }
    return count;
}

int64_t total_param_count(const NamedWeights& w) {
    int64_t count = 0;
    for (const std::string& name : w.tensors.names()) {
        count += static_cast<int64_t>(w.tensors.at(name).size());
    }
    return count;
}

}  // namespace crm
