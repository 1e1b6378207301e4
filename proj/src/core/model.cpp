#include "gpvls/core/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "gpvls/errors.hpp"

namespace gpvls::core {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

double gelu(double u) {
    const double t = std::tanh(kGeluScale * (u + kGeluCubic * u * u * u));
    return 0.5 * u * (1.0 + t);
}

double gelu_grad(double u) {
    const double t = std::tanh(kGeluScale * (u + kGeluCubic * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * u * u);
}

double positional(std::size_t pos, std::size_t dim, std::size_t d) {
    const double exponent = static_cast<double>(dim - dim % 2) / static_cast<double>(d);
    const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
    return dim % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

void add_into(Matrix& dst, const Matrix& src) {
    auto& d = dst.values();
    const auto& s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void add_row_bias(Matrix& m, const Matrix& bias) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
    }
}

void add_column_sums(Matrix& bias_grad, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) bias_grad(0, j) += r[j];
    }
}

const Matrix& tensor(const ModelParams& p, const char* name) {
    auto it = p.decoder.find(name);
    if (it == p.decoder.end()) throw ValidationError(fmt::format("decoder tensor '{}' missing", name));
    return it->second;
}

/// Activations of one forward pass, kept for the backward pass.
struct Activations {
    Matrix x, q, k, v;
    std::vector<Matrix> attn;  // per head, [L x L], lower triangle used
    Matrix mixed;              // concatenated head outputs
    Matrix h, u, g, y;
};

void check_slots(const ModelParams& p, const Matrix& visual, const InstructionSequence& seq) {
    if (seq.slots.empty()) throw ValidationError("sequence is empty");
    if (seq.slots.size() != seq.loss_mask.size()) {
        throw ValidationError("sequence: slots and loss_mask lengths differ");
    }
    if (visual.rows() > 0 && visual.cols() != p.config.d_t) {
        throw DimensionError(fmt::format("visual tokens have dim {}, model expects {}", visual.cols(),
                                         p.config.d_t));
    }
    for (std::size_t i = 0; i < seq.slots.size(); ++i) {
        const Slot& s = seq.slots[i];
        if (s.kind == SlotKind::Text) {
            if (s.index < 0 || static_cast<std::size_t>(s.index) >= p.config.vocab_size) {
                throw ValidationError(fmt::format("token id {} at position {} outside vocabulary of {}",
                                                  s.index, i, p.config.vocab_size));
            }
        } else {
            if (s.index < 0 || static_cast<std::size_t>(s.index) >= visual.rows()) {
                throw ValidationError(fmt::format("visual slot {} at position {} but only {} visual tokens",
                                                  s.index, i, visual.rows()));
            }
            if (seq.loss_mask[i]) {
                throw ValidationError(fmt::format("loss mask selects visual position {}", i));
            }
        }
    }
    if (seq.loss_mask.front()) {
        throw ValidationError("loss mask selects position 0, which has no context to predict from");
    }
}

Activations forward(const ModelParams& p, const Matrix& visual, const InstructionSequence& seq) {
    const std::size_t L = seq.slots.size();
    const std::size_t d = p.config.d_t;
    const std::size_t heads = p.config.n_heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Activations a;
    a.x = Matrix(L, d);
    for (std::size_t i = 0; i < L; ++i) {
        const Slot& s = seq.slots[i];
        auto src = s.kind == SlotKind::Text ? p.token_embedding.row(static_cast<std::size_t>(s.index))
                                            : visual.row(static_cast<std::size_t>(s.index));
        auto dst = a.x.row(i);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] + positional(i, j, d);
    }

    a.q = matmul(a.x, tensor(p, "attn.wq"));
    a.k = matmul(a.x, tensor(p, "attn.wk"));
    a.v = matmul(a.x, tensor(p, "attn.wv"));
    a.mixed = Matrix(L, d);
    a.attn.assign(heads, Matrix(L, L));
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        Matrix& w = a.attn[h];
        for (std::size_t i = 0; i < L; ++i) {
            auto qi = a.q.row(i);
            double mx = -INFINITY;
            for (std::size_t j = 0; j <= i; ++j) {
                auto kj = a.k.row(j);
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += qi[off + c] * kj[off + c];
                w(i, j) = s * scale;
                mx = std::max(mx, w(i, j));
            }
            double sum = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                w(i, j) = std::exp(w(i, j) - mx);
                sum += w(i, j);
            }
            auto out = a.mixed.row(i);
            for (std::size_t j = 0; j <= i; ++j) {
                w(i, j) /= sum;
                auto vj = a.v.row(j);
                for (std::size_t c = 0; c < dh; ++c) out[off + c] += w(i, j) * vj[off + c];
            }
        }
    }

    a.h = matmul(a.mixed, tensor(p, "attn.wo"));
    add_into(a.h, a.x);
    a.u = matmul(a.h, tensor(p, "mlp.w1"));
    add_row_bias(a.u, tensor(p, "mlp.b1"));
    a.g = a.u;
    for (double& val : a.g.values()) val = gelu(val);
    a.y = matmul(a.g, tensor(p, "mlp.w2"));
    add_row_bias(a.y, tensor(p, "mlp.b2"));
    add_into(a.y, a.h);
    return a;
}

/// Output logits for hidden row r.
std::vector<double> logits_at(const ModelParams& p, const Activations& a, std::size_t r) {
    const Matrix& w = tensor(p, "head.w");
    const Matrix& b = tensor(p, "head.b");
    std::vector<double> z(b.values());
    auto y = a.y.row(r);
    for (std::size_t c = 0; c < y.size(); ++c) {
        auto wr = w.row(c);
        for (std::size_t t = 0; t < z.size(); ++t) z[t] += y[c] * wr[t];
    }
    return z;
}

double log_sum_exp(const std::vector<double>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    return mx + std::log(sum);
}

Gradients zero_gradients(const ModelParams& p) {
    Gradients g;
    for (const auto& [name, t] : named_tensors(p)) g.emplace(name, Matrix(t->rows(), t->cols()));
    return g;
}

/// Accumulates d(loss)/d(theta) for one sequence, where loss = -sum(masked log p) * weight.
double accumulate_sequence(const ModelParams& p, const TrainingExample& ex, double weight, Gradients& grads) {
    const VisualTokens visual = project_visual(p.projection, ex.visual);
    const InstructionSequence& seq = ex.sequence;
    check_slots(p, visual.tokens, seq);
    const Activations a = forward(p, visual.tokens, seq);

    const std::size_t L = seq.slots.size();
    const std::size_t d = p.config.d_t;
    const std::size_t heads = p.config.n_heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Matrix& head_w = tensor(p, "head.w");

    double nll = 0.0;
    Matrix dy(L, d);
    Matrix& g_head_w = grads.at("decoder.head.w");
    Matrix& g_head_b = grads.at("decoder.head.b");
    for (std::size_t i = 1; i < L; ++i) {
        if (!seq.loss_mask[i]) continue;
        const std::size_t r = i - 1;
        std::vector<double> z = logits_at(p, a, r);
        const double lse = log_sum_exp(z);
        const auto target = static_cast<std::size_t>(seq.slots[i].index);
        nll -= z[target] - lse;
        for (double& val : z) val = std::exp(val - lse) * weight;
        z[target] -= weight;
        auto yr = a.y.row(r);
        auto dyr = dy.row(r);
        for (std::size_t c = 0; c < d; ++c) {
            auto wr = head_w.row(c);
            auto gr = g_head_w.row(c);
            double acc = 0.0;
            for (std::size_t t = 0; t < z.size(); ++t) {
                gr[t] += yr[c] * z[t];
                acc += wr[t] * z[t];
            }
            dyr[c] += acc;
        }
        for (std::size_t t = 0; t < z.size(); ++t) g_head_b(0, t) += z[t];
    }

    // MLP block: y = h + gelu(h W1 + b1) W2 + b2
    add_into(grads.at("decoder.mlp.w2"), matmul_at(a.g, dy));
    add_column_sums(grads.at("decoder.mlp.b2"), dy);
    Matrix du = matmul_bt(dy, tensor(p, "mlp.w2"));
    for (std::size_t i = 0; i < du.size(); ++i) du.values()[i] *= gelu_grad(a.u.values()[i]);
    add_into(grads.at("decoder.mlp.w1"), matmul_at(a.h, du));
    add_column_sums(grads.at("decoder.mlp.b1"), du);
    Matrix dh_total = matmul_bt(du, tensor(p, "mlp.w1"));
    add_into(dh_total, dy);

    // Attention block: h = x + mixed Wo
    add_into(grads.at("decoder.attn.wo"), matmul_at(a.mixed, dh_total));
    const Matrix dmixed = matmul_bt(dh_total, tensor(p, "attn.wo"));
    Matrix dq(L, d), dk(L, d), dv(L, d);
    std::vector<double> da(L);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const Matrix& w = a.attn[h];
        for (std::size_t i = 0; i < L; ++i) {
            auto go = dmixed.row(i);
            double weighted = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                auto vj = a.v.row(j);
                auto dvj = dv.row(j);
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                    s += go[off + c] * vj[off + c];
                    dvj[off + c] += w(i, j) * go[off + c];
                }
                da[j] = s;
                weighted += w(i, j) * s;
            }
            auto qi = a.q.row(i);
            auto dqi = dq.row(i);
            for (std::size_t j = 0; j <= i; ++j) {
                const double ds = w(i, j) * (da[j] - weighted) * scale;
                auto kj = a.k.row(j);
                auto dkj = dk.row(j);
                for (std::size_t c = 0; c < dh; ++c) {
                    dqi[off + c] += ds * kj[off + c];
                    dkj[off + c] += ds * qi[off + c];
                }
            }
        }
    }
    add_into(grads.at("decoder.attn.wq"), matmul_at(a.x, dq));
    add_into(grads.at("decoder.attn.wk"), matmul_at(a.x, dk));
    add_into(grads.at("decoder.attn.wv"), matmul_at(a.x, dv));
    Matrix dx = dh_total;
    add_into(dx, matmul_bt(dq, tensor(p, "attn.wq")));
    add_into(dx, matmul_bt(dk, tensor(p, "attn.wk")));
    add_into(dx, matmul_bt(dv, tensor(p, "attn.wv")));

    // Inputs: token embeddings, or H_v = W Z_v for visual slots.
    Matrix& g_emb = grads.at("token_embedding");
    Matrix& g_proj = grads.at("projection");
    const Matrix& z = ex.visual.features;
    for (std::size_t i = 0; i < L; ++i) {
        const Slot& s = seq.slots[i];
        auto dxi = dx.row(i);
        if (s.kind == SlotKind::Text) {
            auto ge = g_emb.row(static_cast<std::size_t>(s.index));
            for (std::size_t c = 0; c < d; ++c) ge[c] += dxi[c];
        } else {
            auto zk = z.row(static_cast<std::size_t>(s.index));
            for (std::size_t r = 0; r < d; ++r) {
                auto gp = g_proj.row(r);
                for (std::size_t c = 0; c < zk.size(); ++c) gp[c] += dxi[r] * zk[c];
            }
        }
    }
    return nll;
}

std::size_t total_masked(std::span<const TrainingExample> batch) {
    std::size_t n = 0;
    for (const auto& ex : batch) {
        for (std::size_t i = 1; i < ex.sequence.loss_mask.size(); ++i) n += ex.sequence.loss_mask[i] ? 1 : 0;
    }
    return n;
}

void check_batch(std::span<const TrainingExample> batch) {
    if (batch.empty()) throw ValidationError("training batch is empty");
    if (total_masked(batch) == 0) throw ValidationError("training batch has no answer tokens");
}

void check_finite(double loss, const Gradients& grads) {
    if (!std::isfinite(loss)) throw TrainingError("loss", "training loss is not finite");
    for (const auto& [name, g] : grads) {
        if (!g.all_finite()) {
            throw TrainingError(name, fmt::format("gradient of '{}' is not finite", name));
        }
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (patch_size == 0 || d_v == 0 || d_t == 0 || vocab_size == 0 || n_heads == 0 || d_ff == 0) {
        throw ValidationError("model config: dimensions must be positive");
    }
    if (channels != 1 && channels != 3) throw ValidationError("model config: channels must be 1 or 3");
    if (d_t % n_heads != 0) {
        throw ValidationError(fmt::format("model config: d_t {} not divisible by {} heads", d_t, n_heads));
    }
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const double d = static_cast<double>(config.d_t);
    ModelParams p;
    p.config = config;
    p.rng_seed = seed;
    p.token_embedding = uniform_matrix(config.vocab_size, config.d_t, 0.5, rng);
    p.projection.weights =
        uniform_matrix(config.d_t, config.d_v, 1.0 / std::sqrt(static_cast<double>(config.d_v)), rng);
    for (const char* name : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
        p.decoder[name] = uniform_matrix(config.d_t, config.d_t, 1.0 / std::sqrt(d), rng);
    }
    p.decoder["mlp.w1"] = uniform_matrix(config.d_t, config.d_ff, 1.0 / std::sqrt(d), rng);
    p.decoder["mlp.b1"] = Matrix(1, config.d_ff);
    p.decoder["mlp.w2"] =
        uniform_matrix(config.d_ff, config.d_t, 1.0 / std::sqrt(static_cast<double>(config.d_ff)), rng);
    p.decoder["mlp.b2"] = Matrix(1, config.d_t);
    p.decoder["head.w"] = uniform_matrix(config.d_t, config.vocab_size, 1.0 / std::sqrt(d), rng);
    p.decoder["head.b"] = Matrix(1, config.vocab_size);
    return p;
}

std::vector<std::pair<std::string, Matrix*>> named_tensors(ModelParams& params) {
    std::vector<std::pair<std::string, Matrix*>> out;
    out.emplace_back("token_embedding", &params.token_embedding);
    out.emplace_back("projection", &params.projection.weights);
    for (auto& [name, m] : params.decoder) out.emplace_back("decoder." + name, &m);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(const ModelParams& params) {
    std::vector<std::pair<std::string, const Matrix*>> out;
    out.emplace_back("token_embedding", &params.token_embedding);
    out.emplace_back("projection", &params.projection.weights);
    for (const auto& [name, m] : params.decoder) out.emplace_back("decoder." + name, &m);
    return out;
}

void validate_params(const ModelParams& params) {
    const ModelConfig& c = params.config;
    c.validate();
    auto expect = [](const std::string& name, const Matrix& m, std::size_t r, std::size_t cols) {
        if (m.rows() != r || m.cols() != cols) {
            throw DimensionError(fmt::format("tensor '{}' is {}x{}, expected {}x{}", name, m.rows(),
                                             m.cols(), r, cols));
        }
        if (!m.all_finite()) throw ValidationError(fmt::format("tensor '{}' has non-finite entries", name));
    };
    expect("token_embedding", params.token_embedding, c.vocab_size, c.d_t);
    expect("projection", params.projection.weights, c.d_t, c.d_v);
    const std::map<std::string, std::pair<std::size_t, std::size_t>> shapes = {
        {"attn.wq", {c.d_t, c.d_t}},     {"attn.wk", {c.d_t, c.d_t}},
        {"attn.wv", {c.d_t, c.d_t}},     {"attn.wo", {c.d_t, c.d_t}},
        {"mlp.w1", {c.d_t, c.d_ff}},     {"mlp.b1", {1, c.d_ff}},
        {"mlp.w2", {c.d_ff, c.d_t}},     {"mlp.b2", {1, c.d_t}},
        {"head.w", {c.d_t, c.vocab_size}}, {"head.b", {1, c.vocab_size}},
    };
    if (params.decoder.size() != shapes.size()) {
        throw ValidationError(fmt::format("decoder has {} tensors, expected {}", params.decoder.size(),
                                          shapes.size()));
    }
    for (const auto& [name, shape] : shapes) {
        expect("decoder." + name, tensor(params, name.c_str()), shape.first, shape.second);
    }
}

std::vector<double> position_log_probs(const ModelParams& params, const VisualTokens& visual,
                                       const InstructionSequence& sequence) {
    InstructionSequence unmasked = sequence;
    std::fill(unmasked.loss_mask.begin(), unmasked.loss_mask.end(), false);
    check_slots(params, visual.tokens, unmasked);
    const Activations a = forward(params, visual.tokens, sequence);
    std::vector<double> out(sequence.size(), 0.0);
    for (std::size_t i = 1; i < sequence.size(); ++i) {
        if (sequence.slots[i].kind != SlotKind::Text) continue;
        const std::vector<double> z = logits_at(params, a, i - 1);
        out[i] = z[static_cast<std::size_t>(sequence.slots[i].index)] - log_sum_exp(z);
    }
    return out;
}

LogLikelihood sequence_log_likelihood(const ModelParams& params, const VisualTokens& visual,
                                      const InstructionSequence& sequence) {
    check_slots(params, visual.tokens, sequence);
    LogLikelihood ll;
    ll.masked_positions = sequence.masked_count();
    if (ll.masked_positions == 0) {
        ll.empty_mask = true;
        return ll;
    }
    const std::vector<double> per_position = position_log_probs(params, visual, sequence);
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        if (sequence.loss_mask[i]) ll.value += per_position[i];
    }
    return ll;
}

LogLikelihood sequence_log_likelihood(const ModelParams& params, const VisualTokens& visual,
                                      const TextSequence& sequence) {
    sequence.validate(params.config.vocab_size);
    return sequence_log_likelihood(params, visual, prefix_layout(sequence, visual.tokens.rows()));
}

double batch_loss(const ModelParams& params, std::span<const TrainingExample> batch) {
    check_batch(batch);
    double nll = 0.0;
    for (const auto& ex : batch) {
        const VisualTokens visual = project_visual(params.projection, ex.visual);
        nll -= sequence_log_likelihood(params, visual, ex.sequence).value;
    }
    return nll / static_cast<double>(total_masked(batch));
}

LossAndGradients loss_and_gradients(const ModelParams& params, std::span<const TrainingExample> batch) {
    check_batch(batch);
    LossAndGradients out;
    out.tokens = total_masked(batch);
    out.gradients = zero_gradients(params);
    const double weight = 1.0 / static_cast<double>(out.tokens);
    double nll = 0.0;
    for (const auto& ex : batch) nll += accumulate_sequence(params, ex, weight, out.gradients);
    out.loss = nll * weight;
    return out;
}

StepResult training_step(const ModelParams& params, std::span<const TrainingExample> batch,
                         double learning_rate) {
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        throw ValidationError("learning rate must be finite and non-negative");
    }
    LossAndGradients lg = loss_and_gradients(params, batch);
    check_finite(lg.loss, lg.gradients);
    StepResult result{params, lg.loss};
    if (learning_rate == 0.0) return result;
    for (auto& [name, t] : named_tensors(result.params)) {
        const Matrix& g = lg.gradients.at(name);
        auto& vals = t->values();
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= learning_rate * g.values()[i];
    }
    return result;
}

StepResult AdamOptimizer::step(const ModelParams& params, std::span<const TrainingExample> batch,
                               double learning_rate) {
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        throw ValidationError("learning rate must be finite and non-negative");
    }
    LossAndGradients lg = loss_and_gradients(params, batch);
    check_finite(lg.loss, lg.gradients);
    if (m_.empty()) {
        m_ = zero_gradients(params);
        v_ = zero_gradients(params);
    }
    ++steps_;
    StepResult result{params, lg.loss};
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (auto& [name, tensor_ptr] : named_tensors(result.params)) {
        const auto& g = lg.gradients.at(name).values();
        auto& m = m_.at(name).values();
        auto& v = v_.at(name).values();
        auto& p = tensor_ptr->values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
            if (learning_rate != 0.0) {
                p[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
            }
        }
    }
    return result;
}

void AdamOptimizer::restore(std::uint64_t steps, Gradients m, Gradients v) {
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

std::vector<int> greedy_decode(const ModelParams& params, const VisualTokens& visual,
                               const InstructionSequence& prompt, std::size_t max_tokens) {
    InstructionSequence seq = prompt;
    std::fill(seq.loss_mask.begin(), seq.loss_mask.end(), false);
    check_slots(params, visual.tokens, seq);
    std::vector<int> out;
    while (out.size() < max_tokens) {
        const Activations a = forward(params, visual.tokens, seq);
        const std::vector<double> z = logits_at(params, a, seq.size() - 1);
        const int next = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
        if (next == kEndOfAnswer) break;
        out.push_back(next);
        seq.slots.push_back({SlotKind::Text, next});
        seq.loss_mask.push_back(false);
    }
    return out;
}

}  // namespace gpvls::core
