#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crm/matrix.hpp"

namespace crm {

// --- tokens -----------------------------------------------------------------

// Word-level tokenizer: lowercase, split on whitespace, strip leading and
// trailing punctuation per token (interior hyphens/apostrophes survive).
std::vector<std::string> tokenize(const std::string& text);

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kMask = 1;
    static constexpr int kUnk = 2;
    static constexpr int kCls = 3;
    static constexpr int kSep = 4;
    static constexpr int kReserved = 5;

    std::vector<std::string> tokens;  // id -> token; first five are reserved
    std::unordered_map<std::string, int> ids;

    Vocabulary();
    // Reserved tokens first, then unique content tokens in first-appearance order.
    static Vocabulary from_tokens(const std::vector<std::string>& content_tokens);

    int size() const { return static_cast<int>(tokens.size()); }
    bool contains(const std::string& t) const { return ids.count(t) > 0; }
    int id_of(const std::string& t) const;  // UNK for unknown tokens
    const std::string& token_of(int id) const;
    bool operator==(const Vocabulary& o) const { return tokens == o.tokens; }
};

// CLS + content (truncated to max_seq_len - 2) + SEP.
std::vector<int> encode(const Vocabulary& v, const std::vector<std::string>& words,
                        int max_seq_len);
// CLS + a + SEP + b + SEP, truncating b then a to fit max_seq_len.
std::vector<int> encode_pair(const Vocabulary& v, const std::vector<std::string>& a,
                             const std::vector<std::string>& b, int max_seq_len);

// --- configuration and weights ------------------------------------------------

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 0;
    int n_heads = 0;
    int n_layers = 0;
    int d_ff = 0;
    int max_seq_len = 0;
    uint64_t seed = 0;

    bool same_architecture(const ModelConfig& o) const {
        return vocab_size == o.vocab_size && d_model == o.d_model && n_heads == o.n_heads &&
               n_layers == o.n_layers && d_ff == o.d_ff && max_seq_len == o.max_seq_len;
    }
};

void validate_config(const ModelConfig& c);

// Insertion-ordered name -> Matrix2D map.
struct TensorMap {
    void add(const std::string& name, Matrix2D m);
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    Matrix2D& at(const std::string& name);
    const Matrix2D& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }
    size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::vector<Matrix2D> tensors_;
    std::unordered_map<std::string, size_t> index_;
};

struct NamedWeights {
    ModelConfig config;
    Vocabulary vocab;
    TensorMap tensors;

    bool has_cls_head() const { return tensors.contains("cls.w"); }
    int n_labels() const { return has_cls_head() ? tensors.at("cls.w").cols : 0; }
};

// Canonical tensor name scheme: (name, rows, cols) in storage order.
struct TensorSpec {
    std::string name;
    int rows;
    int cols;
};
std::vector<TensorSpec> canonical_tensor_shapes(const ModelConfig& c, int n_labels);

// Deterministic init: weight matrices Gaussian std 0.02, biases zero,
// layer-norm gains one.
NamedWeights init_weights(const ModelConfig& c, const Vocabulary& vocab);

void attach_cls_head(NamedWeights& w, int n_labels, uint64_t seed);

// Verifies the name set is exactly the canonical scheme for w.config.
void validate_scheme(const NamedWeights& w);

TensorMap zero_grads_like(const NamedWeights& w);

// --- low-rank adapters (types; operations live in merge) -----------------------

struct LoraAdapter {
    std::string target;  // adapted tensor name
    Matrix2D A;          // d x r
    Matrix2D B;          // r x l
    double alpha = 16.0;
    int rank = 8;

    double lora_scale() const { return alpha / rank; }
};

struct LoraSet {
    double alpha = 16.0;
    int rank = 8;
    std::vector<LoraAdapter> adapters;  // ordered by target name

    const LoraAdapter* find(const std::string& target) const;
    bool empty() const { return adapters.empty(); }
};

// base[name] + scale * A * B when adapted, base[name] otherwise.
Matrix2D effective_tensor(const NamedWeights& base, const LoraSet* lora, const std::string& name);

// --- forward / backward ---------------------------------------------------------

struct ForwardStats {
    int64_t matmul_calls = 0;
};

struct LnTrace {
    Matrix2D x_hat;
    std::vector<double> inv_sigma;
};

struct LayerTrace {
    Matrix2D x_in;
    LnTrace ln1;
    Matrix2D h1, q, k, v;
    std::vector<Matrix2D> probs;  // per-head attention rows
    Matrix2D context;
    Matrix2D x_mid;
    LnTrace ln2;
    Matrix2D h2, ffn_pre, ffn_act;
};

struct EncoderTrace {
    std::vector<int> ids;
    std::vector<LayerTrace> layers;
    LnTrace lnf;
    Matrix2D hidden;  // final hidden states, n x d_model
};

// Pre-LN encoder stack; returns final hidden states (n x d_model).
Matrix2D encoder_forward(const NamedWeights& w, const std::vector<int>& ids,
                         const LoraSet* lora = nullptr, EncoderTrace* trace = nullptr,
                         ForwardStats* stats = nullptr);

Matrix2D mlm_logits(const NamedWeights& w, const Matrix2D& hidden, ForwardStats* stats = nullptr);
Matrix2D cls_logits(const NamedWeights& w, const Matrix2D& hidden, ForwardStats* stats = nullptr);

// Per-position logits over the vocabulary (n x vocab_size).
Matrix2D forward_mlm(const NamedWeights& w, const std::vector<int>& ids,
                     const LoraSet* lora = nullptr, ForwardStats* stats = nullptr);
// Label logits from the CLS-position representation (1 x n_labels).
Matrix2D forward_cls(const NamedWeights& w, const std::vector<int>& ids,
                     const LoraSet* lora = nullptr, ForwardStats* stats = nullptr);

// Backpropagates d_hidden (n x d_model) through the encoder, accumulating
// parameter gradients into grads. Gradients of adapted projections are
// reported under the target tensor name as d(effective weight).
void encoder_backward(const NamedWeights& w, const EncoderTrace& tr, const Matrix2D& d_hidden,
                      const LoraSet* lora, TensorMap& grads);

// Head backward passes; return the gradient with respect to hidden states.
Matrix2D mlm_head_backward(const NamedWeights& w, const Matrix2D& hidden, const Matrix2D& dlogits,
                           TensorMap& grads);
Matrix2D cls_head_backward(const NamedWeights& w, const Matrix2D& hidden, const Matrix2D& dlogits,
                           TensorMap& grads);

// Maps d(effective weight) onto adapter factors: dA = s*dW*B^T, dB = s*A^T*dW.
void project_adapter_grads(const LoraSet& lora, const TensorMap& weight_grads,
                           std::vector<Matrix2D>& dA, std::vector<Matrix2D>& dB);

}  // namespace crm
