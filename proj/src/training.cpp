#include <llmqo/training.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <llmqo/plan.hpp>
#include <numeric>
#include <set>


namespace llmqo {

/*======================================================================================================================
 * Vocabulary and tokenizer
 *====================================================================================================================*/

namespace {

constexpr std::string_view RESERVED[] = {"<bos>", "<eos>", "<unk>"};

/** Punctuation that always forms a token of its own. */
bool is_standalone(char c)
{
    return c == '(' or c == ')' or c == ',' or c == '[' or c == ']' or c == ':';
}

std::vector<std::string> grammar_tokens()
{
    std::vector<std::string> g = {"(", ")", ",", "[", "]", ":", ".", std::string(NEWLINE_TOKEN),
                                  "Therefore", "the", "final", "answer", "is",
                                  "INPUT", "FROM", "WHERE", "<Statistics>"};
    for (auto op : ALL_JOIN_OPS) g.emplace_back(to_string(op));
    for (std::size_t i = 1; i < DP_MAX_TABLES; ++i) g.push_back("Step" + std::to_string(i));
    return g;
}

}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>(std::begin(RESERVED), std::end(RESERVED))) { }

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens))
{
    if (tokens_.size() < std::size(RESERVED) or not std::equal(std::begin(RESERVED), std::end(RESERVED), tokens_.begin()))
        throw Error("vocabulary must start with the reserved tokens <bos>, <eos>, <unk>");
    for (std::size_t i = 0; i != tokens_.size(); ++i) {
        if (tokens_[i].empty())
            throw Error("vocabulary contains an empty token");
        if (not ids_.emplace(tokens_[i], TokenId(i)).second)
            throw Error("vocabulary contains duplicate token '" + tokens_[i] + "'");
    }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts)
{
    std::set<std::string> all;
    for (auto &g : grammar_tokens()) all.insert(g);
    for (auto &t : texts)
        for (auto &tok : split_tokens(t)) all.insert(tok);
    for (auto r : RESERVED) all.erase(std::string(r));
    std::vector<std::string> tokens(std::begin(RESERVED), std::end(RESERVED));
    tokens.insert(tokens.end(), all.begin(), all.end());
    return Vocabulary(std::move(tokens));
}

TokenId Vocabulary::id(std::string_view token) const
{
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? UNK : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

std::vector<std::string> split_tokens(std::string_view text)
{
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (not word.empty()) out.push_back(std::move(word));
        word.clear();
    };
    for (char c : text) {
        if (c == '\n') {
            flush();
            out.emplace_back(NEWLINE_TOKEN);
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_standalone(c)) {
            flush();
            out.emplace_back(1, c);
        } else {
            word += c;
        }
    }
    flush();
    return out;
}

std::vector<TokenId> tokenize_prompt(std::string_view text, const Vocabulary &vocab)
{
    std::vector<TokenId> ids;
    for (auto &t : split_tokens(text)) ids.push_back(vocab.id(t));
    return ids;
}

std::vector<TokenId> tokenize_response(std::string_view text, const Vocabulary &vocab)
{
    auto ids = tokenize_prompt(text, vocab);
    ids.push_back(Vocabulary::EOS);
    return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary &vocab)
{
    auto no_space_after = [](std::string_view t) { return t == NEWLINE_TOKEN or t == "(" or t == "["; };
    auto no_space_before = [](std::string_view t) {
        return t == NEWLINE_TOKEN or t == ")" or t == "]" or t == "," or t == ":" or t == "." or t == "(";
    };
    std::string out;
    std::string_view prev;
    for (auto id : ids) {
        if (id == Vocabulary::EOS) break;
        if (id == Vocabulary::BOS) continue;
        const std::string_view t = vocab.token(id);
        if (not prev.empty() and not no_space_after(prev) and not no_space_before(t))
            out += ' ';
        out += t;
        prev = t;
    }
    return out;
}


/*======================================================================================================================
 * Token model
 *====================================================================================================================*/

TokenModel::TokenModel(Vocabulary vocab, uint32_t buckets)
    : vocab_(std::move(vocab))
    , buckets_(buckets)
{
    if (buckets_ == 0)
        throw Error("model needs at least one context bucket");
    logits_.assign(std::size_t(buckets_) * vocab_.size(), 0.0);
}

uint64_t TokenModel::prompt_key(std::span<const TokenId> prompt) const
{
    const auto input = vocab_.id("INPUT"), from = vocab_.id("FROM");
    const auto where = vocab_.id("WHERE"), stats = vocab_.id("<Statistics>");

    std::size_t begin = 0, end = prompt.size();
    auto last_input = std::find(prompt.rbegin(), prompt.rend(), input);
    if (last_input != prompt.rend()) {
        const auto after = std::size_t(prompt.rend() - last_input);
        auto f = std::find(prompt.begin() + after, prompt.end(), from);
        if (f != prompt.end()) {
            begin = std::size_t(f - prompt.begin()) + 1;
            auto stop = std::find_if(prompt.begin() + begin, prompt.end(),
                                     [&](TokenId t) { return t == where or t == stats; });
            end = std::size_t(stop - prompt.begin());
        }
    }
    Fnv1a h;
    for (std::size_t i = begin; i != end; ++i) h.u64(prompt[i]);
    return h.digest();
}

uint32_t TokenModel::context(uint64_t prompt_key, TokenId previous, std::size_t position) const
{
    return uint32_t(Fnv1a{}.u64(prompt_key).u64(previous).u64(position).digest() % buckets_);
}

void TokenModel::randomize(uint64_t seed, double scale)
{
    Rng rng(seed);
    for (auto &v : logits_) v = scale * (2.0 * rng.unit() - 1.0);
}

void Gradient::add_row(uint32_t context, std::size_t width, std::span<const double> values, double scale)
{
    auto &r = row(context, width);
    for (std::size_t i = 0; i != width; ++i) r[i] += scale * values[i];
}

std::vector<double> & Gradient::row(uint32_t context, std::size_t width)
{
    auto &r = rows[context];
    if (r.empty()) r.assign(width, 0.0);
    return r;
}

void Gradient::add(const Gradient &other, double scale)
{
    for (auto &[c, values] : other.rows)
        add_row(c, values.size(), values, scale);
}

double Gradient::at(std::size_t param, std::size_t width) const
{
    auto it = rows.find(uint32_t(param / width));
    return it == rows.end() ? 0.0 : it->second[param % width];
}


/*======================================================================================================================
 * Objectives
 *====================================================================================================================*/

namespace {

double log_sum_exp(std::span<const double> row)
{
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    return m + std::log(s);
}

/** Visits (context, target) for every step of y. */
template<typename F>
void for_each_step(const TokenModel &model, std::span<const TokenId> x, std::span<const TokenId> y, F &&f)
{
    const auto key = model.prompt_key(x);
    TokenId prev = Vocabulary::BOS;
    for (std::size_t t = 0; t != y.size(); ++t) {
        if (y[t] >= model.vocab().size())
            throw Error("token id " + std::to_string(y[t]) + " is outside the vocabulary");
        f(model.context(key, prev, t), y[t]);
        prev = y[t];
    }
}

double sigmoid(double u)
{
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

template<typename Sample, typename F>
LossAndGradient reduce_batch(std::span<const Sample> batch, Exec exec, F &&per_sample)
{
    if (batch.empty())
        throw Error("empty batch");
    const auto n = std::ptrdiff_t(batch.size());
    std::vector<double> losses(batch.size());
    std::vector<Gradient> grads(batch.size());
    const double scale = 1.0 / double(batch.size());
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            losses[i] = per_sample(batch[i], grads[i], scale);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            losses[i] = per_sample(batch[i], grads[i], scale);
    }
    LossAndGradient out;
    for (std::size_t i = 0; i != batch.size(); ++i) {
        out.loss += losses[i];
        out.gradient.add(grads[i]);
    }
    out.loss *= scale;
    return out;
}

}

double sequence_log_prob(const TokenModel &model, std::span<const TokenId> x, std::span<const TokenId> y)
{
    double lp = 0.0;
    for_each_step(model, x, y, [&](uint32_t c, TokenId target) {
        const auto row = model.row(c);
        lp += row[target] - log_sum_exp(row);
    });
    return lp;
}

double sequence_log_prob_grad(const TokenModel &model, std::span<const TokenId> x, std::span<const TokenId> y,
                              Gradient &grad, double scale)
{
    const auto width = model.vocab().size();
    double lp = 0.0;
    for_each_step(model, x, y, [&](uint32_t c, TokenId target) {
        const auto row = model.row(c);
        const double lse = log_sum_exp(row);
        lp += row[target] - lse;
        auto &g = grad.row(c, width);
        for (std::size_t v = 0; v != width; ++v)
            g[v] -= scale * std::exp(row[v] - lse);
        g[target] += scale;
    });
    return lp;
}

double sft_loss(const TokenModel &model, std::span<const SftSample> batch)
{
    if (batch.empty())
        throw Error("empty batch");
    double sum = 0.0;
    for (auto &s : batch) sum -= sequence_log_prob(model, s.prompt, s.response);
    return sum / double(batch.size());
}

double neg_log_sigmoid(double u)
{
    return u > 0 ? std::log1p(std::exp(-u)) : -u + std::log1p(std::exp(u));
}

double dpo_reward_diff(const TokenModel &policy, const TokenModel &reference, const DpoSample &s, double beta)
{
    const double w = sequence_log_prob(policy, s.prompt, s.chosen) - sequence_log_prob(reference, s.prompt, s.chosen);
    const double l = sequence_log_prob(policy, s.prompt, s.rejected) -
                     sequence_log_prob(reference, s.prompt, s.rejected);
    return beta * (w - l);
}

double dpo_loss(const TokenModel &policy, const TokenModel &reference, const DpoSample &sample, double beta)
{
    return neg_log_sigmoid(dpo_reward_diff(policy, reference, sample, beta));
}

double dpo_loss(const TokenModel &policy, const TokenModel &reference, std::span<const DpoSample> batch, double beta)
{
    if (batch.empty())
        throw Error("empty batch");
    double sum = 0.0;
    for (auto &s : batch) sum += dpo_loss(policy, reference, s, beta);
    return sum / double(batch.size());
}

LossAndGradient sft_loss_grad(const TokenModel &model, std::span<const SftSample> batch, Exec exec)
{
    return reduce_batch(batch, exec, [&](const SftSample &s, Gradient &g, double scale) {
        return -sequence_log_prob_grad(model, s.prompt, s.response, g, -scale);
    });
}

LossAndGradient dpo_loss_grad(const TokenModel &policy, const TokenModel &reference, std::span<const DpoSample> batch,
                              double beta, Exec exec)
{
    if (policy.vocab() != reference.vocab() or policy.buckets() != reference.buckets())
        throw Error("policy and reference models differ in shape");
    return reduce_batch(batch, exec, [&](const DpoSample &s, Gradient &g, double scale) {
        Gradient gw, gl;
        const double lw = sequence_log_prob_grad(policy, s.prompt, s.chosen, gw, 1.0);
        const double ll = sequence_log_prob_grad(policy, s.prompt, s.rejected, gl, 1.0);
        const double u = beta * ((lw - sequence_log_prob(reference, s.prompt, s.chosen)) -
                                 (ll - sequence_log_prob(reference, s.prompt, s.rejected)));
        // dL/du = -sigmoid(-u); du/dtheta = beta * (grad log pi(y_w) - grad log pi(y_l))
        const double c = -sigmoid(-u) * beta * scale;
        g.add(gw, c);
        g.add(gl, -c);
        return neg_log_sigmoid(u);
    });
}


/*======================================================================================================================
 * Training
 *====================================================================================================================*/

void TrainConfig::validate() const
{
    if (not (learning_rate > 0.0) or not std::isfinite(learning_rate))
        throw Error("learning rate must be positive");
    if (batch_size == 0)
        throw Error("batch size must be positive");
    if (not (beta > 0.0) or not std::isfinite(beta))
        throw Error("beta must be positive");
    if (trace_every == 0)
        throw Error("trace interval must be positive");
}

namespace {

void descend(TokenModel &model, const Gradient &g, double lr)
{
    for (auto &[c, values] : g.rows) {
        auto row = model.row(c);
        for (std::size_t v = 0; v != values.size(); ++v) row[v] -= lr * values[v];
    }
}

template<typename Sample>
std::vector<Sample> gather(std::span<const Sample> dataset, const std::vector<std::size_t> &order, std::size_t &next,
                           std::size_t n)
{
    std::vector<Sample> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i != n; ++i) {
        batch.push_back(dataset[order[next]]);
        next = (next + 1) % order.size();
    }
    return batch;
}

bool record_at(std::size_t step, const TrainConfig &config)
{
    return step % config.trace_every == 0 or step == config.steps;
}

}

TrainResult train_qit(TokenModel model, std::span<const SftSample> dataset, const TrainConfig &config, Exec exec)
{
    config.validate();
    if (dataset.empty())
        throw Error("training dataset is empty");
    Rng rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto batch_size = std::min(config.batch_size, dataset.size());

    TrainResult result{std::move(model), {}};
    std::size_t next = 0;
    for (std::size_t step = 0;; ++step) {
        if (record_at(step, config))
            result.trace.push_back({step, sft_loss(result.model, dataset), 0.0});
        if (step == config.steps) break;
        if (next + batch_size > order.size()) { // new epoch
            rng.shuffle(order);
            next = 0;
        }
        const auto batch = gather(dataset, order, next, batch_size);
        const auto lg = sft_loss_grad(result.model, batch, exec);
        descend(result.model, lg.gradient, config.learning_rate);
    }
    return result;
}

double mean_margin(const TokenModel &model, std::span<const DpoSample> dataset)
{
    if (dataset.empty()) return 0.0;
    double sum = 0.0;
    for (auto &s : dataset)
        sum += sequence_log_prob(model, s.prompt, s.chosen) - sequence_log_prob(model, s.prompt, s.rejected);
    return sum / double(dataset.size());
}

TrainResult train_qdpo(const TokenModel &reference, std::span<const DpoSample> dataset, const TrainConfig &config,
                       Exec exec)
{
    config.validate();
    if (dataset.empty())
        throw Error("preference dataset is empty");
    Rng rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto batch_size = std::min(config.batch_size, dataset.size());

    TrainResult result{reference, {}};
    std::size_t next = 0;
    for (std::size_t step = 0;; ++step) {
        if (record_at(step, config))
            result.trace.push_back({step, dpo_loss(result.model, reference, dataset, config.beta),
                                    mean_margin(result.model, dataset)});
        if (step == config.steps) break;
        const auto batch = gather(dataset, order, next, batch_size);
        const auto lg = dpo_loss_grad(result.model, reference, batch, config.beta, exec);
        descend(result.model, lg.gradient, config.learning_rate);
    }
    return result;
}

double param_distance(const TokenModel &a, const TokenModel &b)
{
    if (a.num_params() != b.num_params())
        throw Error("models differ in shape");
    double s = 0.0;
    for (std::size_t i = 0; i != a.num_params(); ++i) {
        const double d = a.params()[i] - b.params()[i];
        s += d * d;
    }
    return std::sqrt(s);
}


/*======================================================================================================================
 * Gradient check
 *====================================================================================================================*/

GradCheckReport grad_check(LossKind kind, const TokenModel &model, const TokenModel *reference,
                           const SftSample *sft, const DpoSample *dpo, double beta, double h, double tolerance,
                           std::size_t max_params, uint64_t seed)
{
    if (kind == LossKind::Sft and not sft)
        throw Error("SFT gradient check needs a sample");
    if (kind == LossKind::Dpo and (not dpo or not reference))
        throw Error("DPO gradient check needs a sample and a reference model");
    if (not (h > 0.0))
        throw Error("finite-difference step must be positive");

    TokenModel probe = model;
    auto loss = [&] {
        return kind == LossKind::Sft ? sft_loss(probe, std::span(sft, 1)) : dpo_loss(probe, *reference, *dpo, beta);
    };
    const auto analytic = kind == LossKind::Sft ? sft_loss_grad(model, std::span(sft, 1), Exec::Serial)
                                                : dpo_loss_grad(model, *reference, std::span(dpo, 1), beta,
                                                                Exec::Serial);

    std::set<uint32_t> touched;
    auto touch = [&](std::span<const TokenId> x, std::span<const TokenId> y) {
        for_each_step(model, x, y, [&](uint32_t c, TokenId) { touched.insert(c); });
    };
    if (kind == LossKind::Sft) {
        touch(sft->prompt, sft->response);
    } else {
        touch(dpo->prompt, dpo->chosen);
        touch(dpo->prompt, dpo->rejected);
    }
    const auto width = model.vocab().size();
    std::vector<std::size_t> candidates;
    for (auto c : touched)
        for (std::size_t v = 0; v != width; ++v) candidates.push_back(std::size_t(c) * width + v);
    Rng rng(seed);
    rng.shuffle(candidates);
    if (candidates.size() > max_params) candidates.resize(max_params);
    std::sort(candidates.begin(), candidates.end());

    // Differences below the rounding resolution of the difference quotient are not measurable.
    const double resolution = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss())) / h;

    GradCheckReport report;
    for (auto p : candidates) {
        auto &theta = probe.params()[p];
        const double saved = theta;
        theta = saved + h;
        const double up = loss();
        theta = saved - h;
        const double down = loss();
        theta = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.gradient.at(p, width);
        const double diff = std::max(0.0, std::abs(a - numeric) - resolution);
        const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-8});
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
        ++report.checked;
    }
    report.passed = report.max_rel_error <= tolerance;
    return report;
}


/*======================================================================================================================
 * Inference
 *====================================================================================================================*/

std::vector<TokenId> generate(const TokenModel &model, std::span<const TokenId> prompt, std::size_t max_len,
                              DecodeMode mode, double temperature, uint64_t seed)
{
    if (mode == DecodeMode::Temperature and not (temperature > 0.0))
        throw Error("temperature must be positive");
    Rng rng(seed);
    const auto key = model.prompt_key(prompt);
    std::vector<TokenId> out;
    TokenId prev = Vocabulary::BOS;
    std::vector<double> p(model.vocab().size());
    for (std::size_t t = 0; t != max_len; ++t) {
        const auto row = model.row(model.context(key, prev, t));
        TokenId next;
        if (mode == DecodeMode::Greedy) {
            next = TokenId(std::max_element(row.begin(), row.end()) - row.begin()); // first maximum
        } else {
            const double m = *std::max_element(row.begin(), row.end());
            double total = 0.0;
            for (std::size_t v = 0; v != row.size(); ++v) total += p[v] = std::exp((row[v] - m) / temperature);
            double r = rng.unit() * total;
            next = TokenId(row.size() - 1);
            for (std::size_t v = 0; v != row.size(); ++v) {
                if (r < p[v]) { next = TokenId(v); break; }
                r -= p[v];
            }
        }
        out.push_back(next);
        if (next == Vocabulary::EOS) break;
        prev = next;
    }
    return out;
}

std::string infer(const TokenModel &model, std::string_view prompt, std::size_t max_len, DecodeMode mode,
                  double temperature, uint64_t seed)
{
    const auto x = tokenize_prompt(prompt, model.vocab());
    return detokenize(generate(model, x, max_len, mode, temperature, seed), model.vocab());
}


/*======================================================================================================================
 * Checkpoints
 *====================================================================================================================*/

namespace {

constexpr std::string_view MAGIC = "LQOCKPT1";
constexpr uint32_t VERSION = 1;

void put_u32(std::string &out, uint32_t v)
{
    for (int i = 0; i != 4; ++i) out += char((v >> (8 * i)) & 0xff);
}

void put_u64(std::string &out, uint64_t v)
{
    for (int i = 0; i != 8; ++i) out += char((v >> (8 * i)) & 0xff);
}

struct Reader
{
    std::string_view in;
    std::size_t pos = 0;

    std::string_view take(std::size_t n) {
        if (in.size() - pos < n)
            throw Error("checkpoint is truncated");
        auto s = in.substr(pos, n);
        pos += n;
        return s;
    }
    uint64_t uint(int bytes) {
        const auto s = take(std::size_t(bytes));
        uint64_t v = 0;
        for (int i = 0; i != bytes; ++i) v |= uint64_t(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
};

}

std::string serialize_model(const TokenModel &model)
{
    std::string out(MAGIC);
    put_u32(out, VERSION);
    put_u32(out, model.buckets());
    put_u32(out, uint32_t(model.vocab().size()));
    for (auto &t : model.vocab().tokens()) {
        put_u32(out, uint32_t(t.size()));
        out += t;
    }
    put_u64(out, model.num_params());
    for (double v : model.params()) put_u64(out, std::bit_cast<uint64_t>(v));
    return out;
}

TokenModel deserialize_model(std::string_view bytes)
{
    Reader r{bytes};
    if (r.take(MAGIC.size()) != MAGIC)
        throw Error("not a model checkpoint (bad magic)");
    if (const auto v = r.uint(4); v != VERSION)
        throw Error("unsupported checkpoint version " + std::to_string(v));
    const auto buckets = uint32_t(r.uint(4));
    const auto vocab_size = r.uint(4);
    std::vector<std::string> tokens;
    for (uint64_t i = 0; i != vocab_size; ++i) {
        const auto len = r.uint(4);
        tokens.emplace_back(r.take(len));
    }
    TokenModel model(Vocabulary(std::move(tokens)), buckets);
    if (r.uint(8) != model.num_params())
        throw Error("checkpoint parameter count does not match its shape");
    for (auto &v : model.params()) {
        v = std::bit_cast<double>(r.uint(8));
        if (not std::isfinite(v))
            throw Error("checkpoint contains a non-finite parameter");
    }
    if (r.pos != bytes.size())
        throw Error("checkpoint has trailing bytes");
    return model;
}

void save_model(const TokenModel &model, const std::string &path) { write_file(path, serialize_model(model)); }

TokenModel load_model(const std::string &path) { return deserialize_model(read_file(path)); }

}
