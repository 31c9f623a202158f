#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crm/lexicon.hpp"
#include "crm/merge.hpp"
#include "crm/model.hpp"
#include "crm/numerics.hpp"

namespace crm {

enum class TrainMode { MLM, FT, PI, SemCR, SemAug };

std::string mode_name(TrainMode m);
TrainMode mode_from_name(const std::string& name);

struct TrainSpec {
    TrainMode mode = TrainMode::MLM;
    int64_t steps = 0;   // MLM / skip-gram: optimizer steps
    int epochs = 15;     // fine-tuning: epochs over the training set
    int batch_size = 32;
    double peak_lr = 2e-5;  // 0 disables updates (lr identically zero)
    double warmup_ratio = 0.06;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-6;
    double weight_decay = 0.01;
    double mask_rate = 0.15;  // MLM corruption rate
    uint64_t seed = 0;
    std::optional<double> lambda;             // SemCR only
    std::optional<double> augmentation_rate;  // SemAug only
};

void validate_spec(const TrainSpec& spec);

struct TrainReport {
    std::string mode;
    int64_t steps = 0;
    std::vector<double> loss;  // one entry per executed optimizer step
    std::map<std::string, double> metrics;
    uint64_t seed = 0;
    std::string config_digest;
    double wall_clock_seconds = 0.0;  // log-channel only, kept out of the file
};

// Deterministic JSON rendering (wall clock excluded so reruns are
// byte-identical).
std::string report_to_json(const TrainReport& report);

// --- task data -----------------------------------------------------------------

struct TaskExample {
    std::string id;  // optional; needed only by the evaluation harness
    std::vector<std::string> tokens_a;
    std::vector<std::string> tokens_b;
    bool has_b = false;
    int label = 0;
};

struct TaskDataset {
    std::vector<TaskExample> train;
    std::vector<TaskExample> val;
};

void write_task_examples(const std::string& path, const std::vector<TaskExample>& examples);
std::vector<TaskExample> read_task_examples(const std::string& path);

std::vector<int> encode_example(const Vocabulary& v, const TaskExample& ex, int max_seq_len);

// --- paraphrasing ----------------------------------------------------------------

using SynonymTable = std::unordered_map<std::string, std::vector<std::string>>;
using Paraphraser = std::function<std::vector<std::string>(const std::vector<std::string>&,
                                                           uint64_t seed)>;

// Each token with table entries is independently replaced with a uniformly
// drawn synonym with the given probability; deterministic per seed.
std::vector<std::string> paraphrase_substitute(const std::vector<std::string>& tokens, double rate,
                                               const SynonymTable& table, uint64_t seed);

Paraphraser make_table_paraphraser(SynonymTable table, double rate);

SynonymTable read_synonym_table(const std::string& path);
void write_synonym_table(const std::string& path, const SynonymTable& table);

// --- MLM intermediate training -------------------------------------------------------

struct MlmResult {
    NamedWeights weights;
    TrainReport report;
};

// Cross-entropy over masked targets only; deterministic for a fixed seed.
MlmResult train_mlm(const NamedWeights& init, const std::vector<TrainingInstance>& corpus,
                    const TrainSpec& spec);

// masked-token accuracy of the model over a deterministically masked corpus
double masked_token_accuracy(const NamedWeights& w, const std::vector<TrainingInstance>& corpus,
                             double mask_rate, uint64_t seed);

// --- fine-tuning -----------------------------------------------------------------------

struct FinetuneResult {
    NamedWeights weights;
    TrainReport report;
};

struct PiResult {
    MergedModel model;
    TrainReport report;
};

// FT / SemCR / SemAug: updates all tensors. SemAug doubles the training set
// with paraphrased copies carrying original labels; SemCR adds
// lambda * JS(original || paraphrase) per pair. Mode PI is rejected here.
FinetuneResult finetune(const NamedWeights& model, const TaskDataset& data, const TrainSpec& spec,
                        const Paraphraser* paraphraser = nullptr);

// PI: adapters and classification head are the only trainable tensors.
PiResult finetune(const MergedModel& model, const TaskDataset& data, const TrainSpec& spec,
                  const Paraphraser* paraphraser = nullptr);

double classification_accuracy(const NamedWeights& w, const LoraSet* lora,
                               const std::vector<TaskExample>& examples);

// --- skip-gram baseline -----------------------------------------------------------------

struct SkipGramSpec {
    int k_win = 2;   // window half-width
    int k_neg = 5;   // negatives per positive
    int dim = 16;    // embedding dimension
    std::vector<double> noise;  // unigram noise distribution over vocabulary ids
};

// -log sigma(w.t) - sum_j log sigma(-w.t'_j)
double skipgram_loss(const std::vector<double>& center, const std::vector<double>& target,
                     const std::vector<std::vector<double>>& negatives);

void skipgram_loss_grad(const std::vector<double>& center, const std::vector<double>& target,
                        const std::vector<std::vector<double>>& negatives,
                        std::vector<double>& d_center, std::vector<double>& d_target,
                        std::vector<std::vector<double>>& d_negatives);

// (center_position, context_position) pairs within the window
std::vector<std::pair<int, int>> window_pairs(int sentence_len, int k_win);

std::vector<double> make_unigram_noise(const std::vector<std::vector<int>>& corpus, int vocab_size,
                                       double power = 0.75);

struct SkipGramResult {
    Matrix2D center;   // vocab x dim
    Matrix2D context;  // vocab x dim
    TrainReport report;
};

SkipGramResult train_skipgram(const std::vector<std::vector<int>>& corpus, const SkipGramSpec& sg,
                              const TrainSpec& spec);

}  // namespace crm
