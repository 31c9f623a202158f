#include "crm/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "crm/numerics.hpp"
#include "crm/rng.hpp"

namespace crm {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kMaskScore = -1e9;
constexpr double kInitStd = 0.02;
}  // namespace

// --- tokens -------------------------------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t start = i;
        while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i == start) break;
        std::string tok = text.substr(start, i - start);
        for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        size_t b = 0, e = tok.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
        if (e > b) out.push_back(tok.substr(b, e - b));
    }
    return out;
}

Vocabulary::Vocabulary() {
    tokens = {"<pad>", "<mask>", "<unk>", "<cls>", "<sep>"};
    for (int i = 0; i < kReserved; ++i) ids[tokens[i]] = i;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& content_tokens) {
    Vocabulary v;
    for (const std::string& t : content_tokens) {
        if (t.empty() || v.ids.count(t)) continue;
        v.ids[t] = static_cast<int>(v.tokens.size());
        v.tokens.push_back(t);
    }
    return v;
}

int Vocabulary::id_of(const std::string& t) const {
    auto it = ids.find(t);
    return it == ids.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) {
        throw std::invalid_argument("Vocabulary: id " + std::to_string(id) + " out of range");
    }
    return tokens[static_cast<size_t>(id)];
}

std::vector<int> encode(const Vocabulary& v, const std::vector<std::string>& words,
                        int max_seq_len) {
    if (max_seq_len < 2) throw std::invalid_argument("encode: max_seq_len must be >= 2");
    std::vector<int> ids;
    ids.reserve(words.size() + 2);
    ids.push_back(Vocabulary::kCls);
    size_t budget = static_cast<size_t>(max_seq_len) - 2;
    for (size_t i = 0; i < words.size() && i < budget; ++i) ids.push_back(v.id_of(words[i]));
    ids.push_back(Vocabulary::kSep);
    return ids;
}

std::vector<int> encode_pair(const Vocabulary& v, const std::vector<std::string>& a,
                             const std::vector<std::string>& b, int max_seq_len) {
    if (max_seq_len < 3) throw std::invalid_argument("encode_pair: max_seq_len must be >= 3");
    size_t budget = static_cast<size_t>(max_seq_len) - 3;
    size_t na = std::min(a.size(), budget);
    size_t nb = std::min(b.size(), budget - na);
    std::vector<int> ids;
    ids.reserve(na + nb + 3);
    ids.push_back(Vocabulary::kCls);
    for (size_t i = 0; i < na; ++i) ids.push_back(v.id_of(a[i]));
    ids.push_back(Vocabulary::kSep);
    for (size_t i = 0; i < nb; ++i) ids.push_back(v.id_of(b[i]));
    ids.push_back(Vocabulary::kSep);
    return ids;
}

// --- configuration / scheme ------------------------------------------------------

void validate_config(const ModelConfig& c) {
    if (c.vocab_size <= 0 || c.d_model <= 0 || c.n_heads <= 0 || c.n_layers <= 0 ||
        c.d_ff <= 0 || c.max_seq_len <= 0) {
        throw std::invalid_argument("ModelConfig: all dimensions must be positive");
    }
    if (c.d_model % c.n_heads != 0) {
        throw std::invalid_argument("ModelConfig: d_model " + std::to_string(c.d_model) +
                                    " not divisible by n_heads " + std::to_string(c.n_heads));
    }
    if (c.max_seq_len < 2) {
        throw std::invalid_argument("ModelConfig: max_seq_len must be >= 2");
    }
}

void TensorMap::add(const std::string& name, Matrix2D m) {
    if (index_.count(name)) throw std::invalid_argument("TensorMap: duplicate name " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(m));
}

Matrix2D& TensorMap::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("TensorMap: unknown tensor " + name);
    return tensors_[it->second];
}

const Matrix2D& TensorMap::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("TensorMap: unknown tensor " + name);
    return tensors_[it->second];
}

std::vector<TensorSpec> canonical_tensor_shapes(const ModelConfig& c, int n_labels) {
    std::vector<TensorSpec> out;
    out.push_back({"tok_emb.w", c.vocab_size, c.d_model});
    out.push_back({"pos_emb.w", c.max_seq_len, c.d_model});
    for (int i = 0; i < c.n_layers; ++i) {
        std::string p = "layers." + std::to_string(i) + ".";
        out.push_back({p + "ln1.g", 1, c.d_model});
        out.push_back({p + "ln1.b", 1, c.d_model});
        for (const char* proj : {"q", "k", "v", "o"}) {
            out.push_back({p + "attn." + proj + ".w", c.d_model, c.d_model});
            out.push_back({p + "attn." + proj + ".b", 1, c.d_model});
        }
        out.push_back({p + "ln2.g", 1, c.d_model});
        out.push_back({p + "ln2.b", 1, c.d_model});
        out.push_back({p + "ffn.w1", c.d_model, c.d_ff});
        out.push_back({p + "ffn.b1", 1, c.d_ff});
        out.push_back({p + "ffn.w2", c.d_ff, c.d_model});
        out.push_back({p + "ffn.b2", 1, c.d_model});
    }
    out.push_back({"ln_f.g", 1, c.d_model});
    out.push_back({"ln_f.b", 1, c.d_model});
    out.push_back({"mlm.w", c.d_model, c.vocab_size});
    out.push_back({"mlm.b", 1, c.vocab_size});
    if (n_labels > 0) {
        out.push_back({"cls.w", c.d_model, n_labels});
        out.push_back({"cls.b", 1, n_labels});
    }
    return out;
}

namespace {

bool is_weight_matrix(const std::string& name) {
    // Gaussian init applies to projection/embedding weights; biases are zero
    // and layer-norm gains one.
    if (name.ends_with(".g")) return false;
    if (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")) return false;
    return true;
}

Matrix2D init_tensor(const TensorSpec& spec, Rng& rng) {
    Matrix2D m(spec.rows, spec.cols, 0.0);
    if (spec.name.ends_with(".g")) {
        for (double& v : m.data) v = 1.0;
    } else if (is_weight_matrix(spec.name)) {
        for (double& v : m.data) v = kInitStd * rng.gaussian();
    }
    return m;
}

}  // namespace

NamedWeights init_weights(const ModelConfig& c, const Vocabulary& vocab) {
    validate_config(c);
    if (vocab.size() != c.vocab_size) {
        throw std::invalid_argument("init_weights: vocab size " + std::to_string(vocab.size()) +
                                    " does not match config vocab_size " +
                                    std::to_string(c.vocab_size));
    }
    NamedWeights w;
    w.config = c;
    w.vocab = vocab;
    Rng rng(mix_seed(c.seed, 0x696e6974ULL));  // "init" stream
    for (const TensorSpec& spec : canonical_tensor_shapes(c, 0)) {
        w.tensors.add(spec.name, init_tensor(spec, rng));
    }
    return w;
}

void attach_cls_head(NamedWeights& w, int n_labels, uint64_t seed) {
    if (n_labels <= 0) throw std::invalid_argument("attach_cls_head: n_labels must be positive");
    if (w.has_cls_head()) throw std::invalid_argument("attach_cls_head: head already present");
    Rng rng(mix_seed(seed, 0x68656164ULL));  // "head" stream
    Matrix2D cw(w.config.d_model, n_labels, 0.0);
    for (double& v : cw.data) v = kInitStd * rng.gaussian();
    w.tensors.add("cls.w", std::move(cw));
    w.tensors.add("cls.b", Matrix2D(1, n_labels, 0.0));
}

void validate_scheme(const NamedWeights& w) {
    validate_config(w.config);
    int n_labels = w.n_labels();
    auto expected = canonical_tensor_shapes(w.config, n_labels);
    if (expected.size() != w.tensors.size()) {
        throw std::invalid_argument("validate_scheme: expected " +
                                    std::to_string(expected.size()) + " tensors, found " +
                                    std::to_string(w.tensors.size()));
    }
    for (size_t i = 0; i < expected.size(); ++i) {
        const TensorSpec& spec = expected[i];
        if (w.tensors.names()[i] != spec.name) {
            throw std::invalid_argument("validate_scheme: tensor " + std::to_string(i) +
                                        " is " + w.tensors.names()[i] + ", expected " + spec.name);
        }
        require_shape(w.tensors.at(spec.name), spec.rows, spec.cols, spec.name);
    }
    if (w.vocab.size() != w.config.vocab_size) {
        throw std::invalid_argument("validate_scheme: vocabulary/config size mismatch");
    }
}

TensorMap zero_grads_like(const NamedWeights& w) {
    TensorMap g;
    for (const std::string& name : w.tensors.names()) {
        const Matrix2D& t = w.tensors.at(name);
        g.add(name, Matrix2D(t.rows, t.cols, 0.0));
    }
    return g;
}

// --- adapters ---------------------------------------------------------------------

const LoraAdapter* LoraSet::find(const std::string& target) const {
    for (const LoraAdapter& a : adapters) {
        if (a.target == target) return &a;
    }
    return nullptr;
}

Matrix2D effective_tensor(const NamedWeights& base, const LoraSet* lora, const std::string& name) {
    const Matrix2D& w = base.tensors.at(name);
    if (lora == nullptr) return w;
    const LoraAdapter* ad = lora->find(name);
    if (ad == nullptr) return w;
    Matrix2D delta = matmul(ad->A, ad->B);
    Matrix2D out = w;
    add_scaled_in_place(out, delta, ad->lora_scale());
    return out;
}

// --- forward ----------------------------------------------------------------------

namespace {

Matrix2D mm(const Matrix2D& a, const Matrix2D& b, ForwardStats* stats) {
    if (stats) stats->matmul_calls += 1;
    return matmul(a, b);
}

void add_row_bias(Matrix2D& x, const Matrix2D& b) {
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) x.at(i, j) += b.at(0, j);
}

// x*W + bias, plus scale*(x*A)*B when an adapter targets the projection.
Matrix2D project(const Matrix2D& x, const Matrix2D& w, const Matrix2D& b, const LoraAdapter* ad,
                 ForwardStats* stats) {
    Matrix2D y = mm(x, w, stats);
    if (ad != nullptr) {
        Matrix2D xa = mm(x, ad->A, stats);
        Matrix2D low = mm(xa, ad->B, stats);
        add_scaled_in_place(y, low, ad->lora_scale());
    }
    add_row_bias(y, b);
    return y;
}

Matrix2D ln_forward(const Matrix2D& x, const Matrix2D& g, const Matrix2D& b, LnTrace* trace) {
    Matrix2D y(x.rows, x.cols, 0.0);
    Matrix2D x_hat(x.rows, x.cols, 0.0);
    std::vector<double> inv_sigma(static_cast<size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= x.cols;
        double inv = 1.0 / std::sqrt(var + kLnEps);
        inv_sigma[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < x.cols; ++j) {
            double xh = (x.at(i, j) - mean) * inv;
            x_hat.at(i, j) = xh;
            y.at(i, j) = g.at(0, j) * xh + b.at(0, j);
        }
    }
    if (trace) {
        trace->x_hat = std::move(x_hat);
        trace->inv_sigma = std::move(inv_sigma);
    }
    return y;
}

// dy -> dx; accumulates gain/bias grads.
Matrix2D ln_backward(const Matrix2D& dy, const Matrix2D& g, const LnTrace& tr, Matrix2D& dg,
                     Matrix2D& db) {
    const int rows = dy.rows, cols = dy.cols;
    Matrix2D dx(rows, cols, 0.0);
    for (int i = 0; i < rows; ++i) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < cols; ++j) {
            double dxhat = dy.at(i, j) * g.at(0, j);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * tr.x_hat.at(i, j);
            dg.at(0, j) += dy.at(i, j) * tr.x_hat.at(i, j);
            db.at(0, j) += dy.at(i, j);
        }
        double inv = tr.inv_sigma[static_cast<size_t>(i)];
        for (int j = 0; j < cols; ++j) {
            double dxhat = dy.at(i, j) * g.at(0, j);
            dx.at(i, j) = inv * (dxhat - sum_dxhat / cols -
                                 tr.x_hat.at(i, j) * sum_dxhat_xhat / cols);
        }
    }
    return dx;
}

Matrix2D slice_head(const Matrix2D& x, int head, int head_dim) {
    Matrix2D out(x.rows, head_dim, 0.0);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < head_dim; ++j) out.at(i, j) = x.at(i, head * head_dim + j);
    return out;
}

void place_head(Matrix2D& x, const Matrix2D& part, int head, int head_dim) {
    for (int i = 0; i < part.rows; ++i)
        for (int j = 0; j < head_dim; ++j) x.at(i, head * head_dim + j) = part.at(i, j);
}

void accumulate_head(Matrix2D& x, const Matrix2D& part, int head, int head_dim) {
    for (int i = 0; i < part.rows; ++i)
        for (int j = 0; j < head_dim; ++j) x.at(i, head * head_dim + j) += part.at(i, j);
}

void check_ids(const NamedWeights& w, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("forward: empty id sequence");
    if (static_cast<int>(ids.size()) > w.config.max_seq_len) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(ids.size()) +
                                    " exceeds max_seq_len " +
                                    std::to_string(w.config.max_seq_len));
    }
    for (int id : ids) {
        if (id < 0 || id >= w.config.vocab_size) {
            throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                        " outside vocabulary of size " +
                                        std::to_string(w.config.vocab_size));
        }
    }
}

}  // namespace

Matrix2D encoder_forward(const NamedWeights& w, const std::vector<int>& ids, const LoraSet* lora,
                         EncoderTrace* trace, ForwardStats* stats) {
    check_ids(w, ids);
    const ModelConfig& c = w.config;
    const int n = static_cast<int>(ids.size());
    const int head_dim = c.d_model / c.n_heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(head_dim));

    const Matrix2D& tok = w.tensors.at("tok_emb.w");
    const Matrix2D& pos = w.tensors.at("pos_emb.w");
    Matrix2D x(n, c.d_model, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c.d_model; ++j)
            x.at(i, j) = tok.at(ids[static_cast<size_t>(i)], j) + pos.at(i, j);

    if (trace) {
        trace->ids = ids;
        trace->layers.clear();
        trace->layers.resize(static_cast<size_t>(c.n_layers));
    }

    for (int li = 0; li < c.n_layers; ++li) {
        std::string p = "layers." + std::to_string(li) + ".";
        LayerTrace* lt = trace ? &trace->layers[static_cast<size_t>(li)] : nullptr;
        if (lt) lt->x_in = x;

        Matrix2D h1 = ln_forward(x, w.tensors.at(p + "ln1.g"), w.tensors.at(p + "ln1.b"),
                                 lt ? &lt->ln1 : nullptr);
        const LoraAdapter* adq = lora ? lora->find(p + "attn.q.w") : nullptr;
        const LoraAdapter* adk = lora ? lora->find(p + "attn.k.w") : nullptr;
        const LoraAdapter* adv = lora ? lora->find(p + "attn.v.w") : nullptr;
        const LoraAdapter* ado = lora ? lora->find(p + "attn.o.w") : nullptr;
        Matrix2D q = project(h1, w.tensors.at(p + "attn.q.w"), w.tensors.at(p + "attn.q.b"), adq,
                             stats);
        Matrix2D k = project(h1, w.tensors.at(p + "attn.k.w"), w.tensors.at(p + "attn.k.b"), adk,
                             stats);
        Matrix2D v = project(h1, w.tensors.at(p + "attn.v.w"), w.tensors.at(p + "attn.v.b"), adv,
                             stats);

        Matrix2D context(n, c.d_model, 0.0);
        if (lt) lt->probs.resize(static_cast<size_t>(c.n_heads));
        for (int h = 0; h < c.n_heads; ++h) {
            Matrix2D qh = slice_head(q, h, head_dim);
            Matrix2D kh = slice_head(k, h, head_dim);
            Matrix2D vh = slice_head(v, h, head_dim);
            Matrix2D scores = mm(qh, transpose(kh), stats);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    scores.at(i, j) *= inv_sqrt_hd;
                    if (ids[static_cast<size_t>(j)] == Vocabulary::kPad) {
                        scores.at(i, j) += kMaskScore;
                    }
                }
            }
            Matrix2D probs = softmax_rows(scores);
            Matrix2D ctx = mm(probs, vh, stats);
            place_head(context, ctx, h, head_dim);
            if (lt) lt->probs[static_cast<size_t>(h)] = std::move(probs);
        }

        Matrix2D attn_out = project(context, w.tensors.at(p + "attn.o.w"),
                                    w.tensors.at(p + "attn.o.b"), ado, stats);
        Matrix2D x_mid = add(x, attn_out);

        Matrix2D h2 = ln_forward(x_mid, w.tensors.at(p + "ln2.g"), w.tensors.at(p + "ln2.b"),
                                 lt ? &lt->ln2 : nullptr);
        Matrix2D pre = mm(h2, w.tensors.at(p + "ffn.w1"), stats);
        add_row_bias(pre, w.tensors.at(p + "ffn.b1"));
        Matrix2D act(pre.rows, pre.cols, 0.0);
        for (size_t i = 0; i < pre.data.size(); ++i) act.data[i] = gelu(pre.data[i]);
        Matrix2D ffn_out = mm(act, w.tensors.at(p + "ffn.w2"), stats);
        add_row_bias(ffn_out, w.tensors.at(p + "ffn.b2"));
        Matrix2D x_out = add(x_mid, ffn_out);

        if (lt) {
            lt->h1 = std::move(h1);
            lt->q = std::move(q);
            lt->k = std::move(k);
            lt->v = std::move(v);
            lt->context = std::move(context);
            lt->x_mid = x_mid;
            lt->h2 = std::move(h2);
            lt->ffn_pre = std::move(pre);
            lt->ffn_act = std::move(act);
        }
        x = std::move(x_out);
    }

    Matrix2D hidden = ln_forward(x, w.tensors.at("ln_f.g"), w.tensors.at("ln_f.b"),
                                 trace ? &trace->lnf : nullptr);
    if (trace) trace->hidden = hidden;
    return hidden;
}

Matrix2D mlm_logits(const NamedWeights& w, const Matrix2D& hidden, ForwardStats* stats) {
    Matrix2D logits = mm(hidden, w.tensors.at("mlm.w"), stats);
    add_row_bias(logits, w.tensors.at("mlm.b"));
    return logits;
}

Matrix2D cls_logits(const NamedWeights& w, const Matrix2D& hidden, ForwardStats* stats) {
    if (!w.has_cls_head()) {
        throw std::invalid_argument("forward_cls: classification head missing");
    }
    Matrix2D cls_row(1, hidden.cols, 0.0);
    for (int j = 0; j < hidden.cols; ++j) cls_row.at(0, j) = hidden.at(0, j);
    Matrix2D logits = mm(cls_row, w.tensors.at("cls.w"), stats);
    add_row_bias(logits, w.tensors.at("cls.b"));
    return logits;
}

Matrix2D forward_mlm(const NamedWeights& w, const std::vector<int>& ids, const LoraSet* lora,
                     ForwardStats* stats) {
    Matrix2D hidden = encoder_forward(w, ids, lora, nullptr, stats);
    return mlm_logits(w, hidden, stats);
}

Matrix2D forward_cls(const NamedWeights& w, const std::vector<int>& ids, const LoraSet* lora,
                     ForwardStats* stats) {
    if (!w.has_cls_head()) {
        throw std::invalid_argument("forward_cls: classification head missing");
    }
    Matrix2D hidden = encoder_forward(w, ids, lora, nullptr, stats);
    return cls_logits(w, hidden, stats);
}

// --- backward -----------------------------------------------------------------------

void encoder_backward(const NamedWeights& w, const EncoderTrace& tr, const Matrix2D& d_hidden,
                      const LoraSet* lora, TensorMap& grads) {
    const ModelConfig& c = w.config;
    const int n = static_cast<int>(tr.ids.size());
    const int head_dim = c.d_model / c.n_heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(head_dim));

    // final layer norm
    Matrix2D dx = ln_backward(d_hidden, w.tensors.at("ln_f.g"), tr.lnf, grads.at("ln_f.g"),
                              grads.at("ln_f.b"));

    for (int li = c.n_layers - 1; li >= 0; --li) {
        std::string p = "layers." + std::to_string(li) + ".";
        const LayerTrace& lt = tr.layers[static_cast<size_t>(li)];

        // FFN block: x_out = x_mid + ffn_out
        Matrix2D d_ffn_out = dx;  // residual branch
        // dW2, db2
        add_in_place(grads.at(p + "ffn.w2"), matmul(transpose(lt.ffn_act), d_ffn_out));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c.d_model; ++j) grads.at(p + "ffn.b2").at(0, j) += d_ffn_out.at(i, j);
        Matrix2D d_act = matmul(d_ffn_out, transpose(w.tensors.at(p + "ffn.w2")));
        Matrix2D d_pre(d_act.rows, d_act.cols, 0.0);
        for (size_t i = 0; i < d_act.data.size(); ++i)
            d_pre.data[i] = d_act.data[i] * gelu_deriv(lt.ffn_pre.data[i]);
        add_in_place(grads.at(p + "ffn.w1"), matmul(transpose(lt.h2), d_pre));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c.d_ff; ++j) grads.at(p + "ffn.b1").at(0, j) += d_pre.at(i, j);
        Matrix2D d_h2 = matmul(d_pre, transpose(w.tensors.at(p + "ffn.w1")));
        Matrix2D d_x_mid = ln_backward(d_h2, w.tensors.at(p + "ln2.g"), lt.ln2,
                                       grads.at(p + "ln2.g"), grads.at(p + "ln2.b"));
        add_in_place(d_x_mid, dx);  // residual

        // attention block: x_mid = x_in + attn_out
        const Matrix2D& d_attn_out = d_x_mid;
        add_in_place(grads.at(p + "attn.o.w"), matmul(transpose(lt.context), d_attn_out));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c.d_model; ++j)
                grads.at(p + "attn.o.b").at(0, j) += d_attn_out.at(i, j);
        Matrix2D wo_eff = effective_tensor(w, lora, p + "attn.o.w");
        Matrix2D d_context = matmul(d_attn_out, transpose(wo_eff));

        Matrix2D dq(n, c.d_model, 0.0), dk(n, c.d_model, 0.0), dv(n, c.d_model, 0.0);
        for (int h = 0; h < c.n_heads; ++h) {
            Matrix2D d_ctx = slice_head(d_context, h, head_dim);
            const Matrix2D& probs = lt.probs[static_cast<size_t>(h)];
            Matrix2D vh = slice_head(lt.v, h, head_dim);
            Matrix2D d_probs = matmul(d_ctx, transpose(vh));
            Matrix2D d_vh = matmul(transpose(probs), d_ctx);
            // softmax backward, rows
            Matrix2D d_scores(n, n, 0.0);
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += d_probs.at(i, j) * probs.at(i, j);
                for (int j = 0; j < n; ++j)
                    d_scores.at(i, j) = probs.at(i, j) * (d_probs.at(i, j) - dot);
            }
            Matrix2D qh = slice_head(lt.q, h, head_dim);
            Matrix2D kh = slice_head(lt.k, h, head_dim);
            Matrix2D d_qh = scale(matmul(d_scores, kh), inv_sqrt_hd);
            Matrix2D d_kh = scale(matmul(transpose(d_scores), qh), inv_sqrt_hd);
            accumulate_head(dq, d_qh, h, head_dim);
            accumulate_head(dk, d_kh, h, head_dim);
            accumulate_head(dv, d_vh, h, head_dim);
        }

        Matrix2D d_h1(n, c.d_model, 0.0);
        struct Proj {
            const char* key;
            const Matrix2D* dmat;
        };
        for (const Proj& pr : {Proj{"q", &dq}, Proj{"k", &dk}, Proj{"v", &dv}}) {
            std::string wname = p + "attn." + pr.key + ".w";
            std::string bname = p + "attn." + pr.key + ".b";
            add_in_place(grads.at(wname), matmul(transpose(lt.h1), *pr.dmat));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c.d_model; ++j) grads.at(bname).at(0, j) += pr.dmat->at(i, j);
            Matrix2D w_eff = effective_tensor(w, lora, wname);
            add_in_place(d_h1, matmul(*pr.dmat, transpose(w_eff)));
        }
        Matrix2D d_x_in = ln_backward(d_h1, w.tensors.at(p + "ln1.g"), lt.ln1,
                                      grads.at(p + "ln1.g"), grads.at(p + "ln1.b"));
        add_in_place(d_x_in, d_x_mid);  // residual
        dx = std::move(d_x_in);
    }

    // embeddings
    Matrix2D& d_tok = grads.at("tok_emb.w");
    Matrix2D& d_pos = grads.at("pos_emb.w");
    for (int i = 0; i < n; ++i) {
        int id = tr.ids[static_cast<size_t>(i)];
        for (int j = 0; j < c.d_model; ++j) {
            d_tok.at(id, j) += dx.at(i, j);
            d_pos.at(i, j) += dx.at(i, j);
        }
    }
}

Matrix2D mlm_head_backward(const NamedWeights& w, const Matrix2D& hidden, const Matrix2D& dlogits,
                           TensorMap& grads) {
    add_in_place(grads.at("mlm.w"), matmul(transpose(hidden), dlogits));
    Matrix2D& db = grads.at("mlm.b");
    for (int i = 0; i < dlogits.rows; ++i)
        for (int j = 0; j < dlogits.cols; ++j) db.at(0, j) += dlogits.at(i, j);
    return matmul(dlogits, transpose(w.tensors.at("mlm.w")));
}

Matrix2D cls_head_backward(const NamedWeights& w, const Matrix2D& hidden, const Matrix2D& dlogits,
                           TensorMap& grads) {
    Matrix2D cls_row(1, hidden.cols, 0.0);
    for (int j = 0; j < hidden.cols; ++j) cls_row.at(0, j) = hidden.at(0, j);
    add_in_place(grads.at("cls.w"), matmul(transpose(cls_row), dlogits));
    Matrix2D& db = grads.at("cls.b");
    for (int j = 0; j < dlogits.cols; ++j) db.at(0, j) += dlogits.at(0, j);
    Matrix2D d_row = matmul(dlogits, transpose(w.tensors.at("cls.w")));
    Matrix2D d_hidden(hidden.rows, hidden.cols, 0.0);
    for (int j = 0; j < hidden.cols; ++j) d_hidden.at(0, j) = d_row.at(0, j);
    return d_hidden;
}

void project_adapter_grads(const LoraSet& lora, const TensorMap& weight_grads,
                           std::vector<Matrix2D>& dA, std::vector<Matrix2D>& dB) {
    dA.clear();
    dB.clear();
    for (const LoraAdapter& ad : lora.adapters) {
        const Matrix2D& dw = weight_grads.at(ad.target);
        double s = ad.lora_scale();
        dA.push_back(scale(matmul(dw, transpose(ad.B)), s));
        dB.push_back(scale(matmul(transpose(ad.A), dw), s));
    }
}

}  // namespace crm
