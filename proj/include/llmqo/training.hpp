#pragma once

#include <cstdint>
#include <llmqo/common.hpp>
#include <llmqo/optimizers.hpp>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>


namespace llmqo {

/*======================================================================================================================
 * Vocabulary and tokenizer
 *====================================================================================================================*/

using TokenId = uint32_t;

/** Word-level vocabulary.  Ids are dense; 0..2 are reserved for BOS, EOS and UNK. */
class Vocabulary
{
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;

    public:
    static constexpr TokenId BOS = 0;
    static constexpr TokenId EOS = 1;
    static constexpr TokenId UNK = 2;

    Vocabulary();
    /** `tokens` must start with the reserved tokens and contain no duplicates. */
    explicit Vocabulary(std::vector<std::string> tokens);

    /** Reserved tokens, then the sorted union of the response grammar, the prompt markers and every token of
     * `texts`. */
    static Vocabulary build(std::span<const std::string> texts);

    std::size_t size() const { return tokens_.size(); }
    TokenId id(std::string_view token) const; ///< UNK if unknown
    bool contains(std::string_view token) const;
    const std::string & token(TokenId id) const { return tokens_.at(id); }
    const std::vector<std::string> & tokens() const { return tokens_; }

    friend bool operator==(const Vocabulary &a, const Vocabulary &b) { return a.tokens_ == b.tokens_; }
};

/** Splits on whitespace; `(`, `)`, `,`, `[`, `]`, `:` and line breaks are tokens of their own. */
std::vector<std::string> split_tokens(std::string_view text);

inline constexpr std::string_view NEWLINE_TOKEN = "\n";

std::vector<TokenId> tokenize_prompt(std::string_view text, const Vocabulary &vocab);
/** Like `tokenize_prompt`, with EOS appended. */
std::vector<TokenId> tokenize_response(std::string_view text, const Vocabulary &vocab);
/** Inverse of `tokenize_response` on canonical responses; stops at EOS. */
std::string detokenize(std::span<const TokenId> ids, const Vocabulary &vocab);

/*======================================================================================================================
 * Token model
 *====================================================================================================================*/

/** Tabular softmax model: one row of logits per context bucket.  The context of step t hashes the prompt key (the
 * FROM list of the prompt's INPUT query), the previous token and t into one of `buckets` rows, so
 * p(y_t | x, y_<t) = softmax(theta[context(x, y_{t-1}, t)])[y_t]. */
class TokenModel
{
    Vocabulary vocab_;
    uint32_t buckets_;
    std::vector<double> logits_; ///< buckets x |V|, row-major

    public:
    static constexpr uint32_t DEFAULT_BUCKETS = 4096;

    explicit TokenModel(Vocabulary vocab, uint32_t buckets = DEFAULT_BUCKETS);

    const Vocabulary & vocab() const { return vocab_; }
    uint32_t buckets() const { return buckets_; }
    std::size_t num_params() const { return logits_.size(); }
    std::span<const double> params() const { return logits_; }
    std::span<double> params() { return logits_; }

    std::span<const double> row(uint32_t context) const {
        return std::span<const double>(logits_).subspan(std::size_t(context) * vocab_.size(), vocab_.size());
    }
    std::span<double> row(uint32_t context) {
        return std::span<double>(logits_).subspan(std::size_t(context) * vocab_.size(), vocab_.size());
    }

    uint64_t prompt_key(std::span<const TokenId> prompt) const;
    uint32_t context(uint64_t prompt_key, TokenId previous, std::size_t position) const;

    /** Uniform init in [-scale, scale], reproducible from `seed`. */
    void randomize(uint64_t seed, double scale);

    friend bool operator==(const TokenModel&, const TokenModel&) = default;
};

/** Sparse gradient over model rows; rows are kept in ascending order so that reductions are deterministic. */
struct Gradient
{
    std::map<uint32_t, std::vector<double>> rows;

    void add_row(uint32_t context, std::size_t width, std::span<const double> values, double scale);
    std::vector<double> &row(uint32_t context, std::size_t width);
    void add(const Gradient &other, double scale = 1.0);
    double at(std::size_t param, std::size_t width) const;
};

struct SftSample
{
    std::vector<TokenId> prompt;
    std::vector<TokenId> response; ///< ends with EOS
};

struct DpoSample
{
    std::vector<TokenId> prompt;
    std::vector<TokenId> chosen;
    std::vector<TokenId> rejected;
};

/** log p(y | x) = sum_t log softmax(row)[y_t], stabilized by log-sum-exp. */
double sequence_log_prob(const TokenModel &model, std::span<const TokenId> x, std::span<const TokenId> y);
/** Same value; additionally accumulates `scale * d log p(y|x) / d theta` into `grad`. */
double sequence_log_prob_grad(const TokenModel &model, std::span<const TokenId> x, std::span<const TokenId> y,
                              Gradient &grad, double scale);

/** Mean negative log-likelihood over the batch. */
double sft_loss(const TokenModel &model, std::span<const SftSample> batch);

/** u = beta * [(log pi(y_w|x) - log ref(y_w|x)) - (log pi(y_l|x) - log ref(y_l|x))] */
double dpo_reward_diff(const TokenModel &policy, const TokenModel &reference, const DpoSample &sample, double beta);
/** -log sigmoid(u) */
double dpo_loss(const TokenModel &policy, const TokenModel &reference, const DpoSample &sample, double beta);
double dpo_loss(const TokenModel &policy, const TokenModel &reference, std::span<const DpoSample> batch, double beta);

/** -log sigmoid(u), computed without overflow. */
double neg_log_sigmoid(double u);

struct LossAndGradient
{
    double loss = 0.0;  ///< batch mean
    Gradient gradient;  ///< of the batch mean
};

/** Per-sample gradients reduced in sample order: the parallel variant is bit-identical to the serial one. */
LossAndGradient sft_loss_grad(const TokenModel &model, std::span<const SftSample> batch, Exec exec = Exec::Parallel);
/** Gradient w.r.t. the policy only; the reference is frozen. */
LossAndGradient dpo_loss_grad(const TokenModel &policy, const TokenModel &reference, std::span<const DpoSample> batch,
                              double beta, Exec exec = Exec::Parallel);

/*======================================================================================================================
 * Training
 *====================================================================================================================*/

struct TrainConfig
{
    double learning_rate;
    std::size_t steps;
    std::size_t batch_size = 8;
    double beta = 0.1;
    uint64_t seed = 0;
    std::size_t trace_every = 10; ///< record a trace point every this many steps (and after the last)

    /** Learning rates for the tabular model: 2e-4 and 5e-6 scaled by 2500. */
    static TrainConfig qit_defaults() { return {0.5, 600}; }
    static TrainConfig qdpo_defaults() { return {0.0125, 200}; }

    /** Throws `Error` unless learning rate, steps, batch size and beta are positive (steps may be 0). */
    void validate() const;
};

struct TracePoint
{
    std::size_t step;
    double loss;   ///< over the whole dataset
    double margin; ///< QDPO: mean of log pi(y_w|x) - log pi(y_l|x) over the dataset; QIT: 0
};

struct TrainResult
{
    TokenModel model;
    std::vector<TracePoint> trace;
};

/** Minibatch gradient descent on the SFT loss; the sample order is reshuffled every epoch. */
TrainResult train_qit(TokenModel model, std::span<const SftSample> dataset, const TrainConfig &config,
                      Exec exec = Exec::Parallel);

/** QDPO: the policy starts as a copy of `reference`; the dataset is shuffled once and batches are taken cyclically;
 * one descent step on the batch-mean loss per training step. */
TrainResult train_qdpo(const TokenModel &reference, std::span<const DpoSample> dataset, const TrainConfig &config,
                       Exec exec = Exec::Parallel);

double mean_margin(const TokenModel &model, std::span<const DpoSample> dataset);

/** L2 distance between the parameters of two models of equal shape. */
double param_distance(const TokenModel &a, const TokenModel &b);

/*======================================================================================================================
 * Verification and inference
 *====================================================================================================================*/

enum class LossKind { Sft, Dpo };

struct GradCheckReport
{
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0; ///< raw |a - n|, before the rounding allowance
    bool passed = true;
};

/** Central differences over up to `max_params` parameters drawn from the rows the sample touches.  Relative error
 * is (|a - n| - r) / max(|a|, |n|, 1e-8), where r = 16 eps max(1, |L|) / h is the rounding resolution of the
 * difference quotient. */
GradCheckReport grad_check(LossKind kind, const TokenModel &model, const TokenModel *reference,
                           const SftSample *sft, const DpoSample *dpo, double beta, double h, double tolerance,
                           std::size_t max_params, uint64_t seed);

enum class DecodeMode { Greedy, Temperature };

std::vector<TokenId> generate(const TokenModel &model, std::span<const TokenId> prompt, std::size_t max_len,
                              DecodeMode mode = DecodeMode::Greedy, double temperature = 1.0, uint64_t seed = 0);
std::string infer(const TokenModel &model, std::string_view prompt, std::size_t max_len,
                  DecodeMode mode = DecodeMode::Greedy, double temperature = 1.0, uint64_t seed = 0);

/*======================================================================================================================
 * Checkpoints and samples
 *====================================================================================================================*/

/** Binary checkpoint: magic, version, buckets, vocabulary, logits (little-endian IEEE doubles). */
std::string serialize_model(const TokenModel &model);
/** Throws `Error` on a malformed file or non-finite logits. */
TokenModel deserialize_model(std::string_view bytes);
void save_model(const TokenModel &model, const std::string &path);
TokenModel load_model(const std::string &path);

}
