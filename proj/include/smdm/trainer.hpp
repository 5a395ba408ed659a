#pragma once

// Training with the step-causal mask: random block assignment, merged
// sequences with per-block register duplicates, the masked-diffusion loss,
// optimizers, and a toy run on a synthetic grid-pattern task.

#include "smdm/samplers.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace smdm {

// Prompt block 0; each clean response token uniform over [1, M]; each masked
// one uniform over [M+1, M+N].
inline BlockAssignment assign_blocks(const MaskedSequence& xt, int prompt_len, int M, int N, const Vocabulary& vocab,
                                     Rng& rng) {
    require(prompt_len >= 0 && M >= 0 && N >= 0, "assign_blocks: negative argument");
    const auto n_masked = xt.count_masked(vocab);
    require(n_masked == 0 || N >= 1, "assign_blocks: masked tokens present but N = 0");
    require(n_masked == xt.size() || M >= 1, "assign_blocks: clean tokens present but M = 0");
    BlockAssignment a;
    a.prompt_len = prompt_len;
    a.M = M;
    a.N = N;
    a.block_of.assign(static_cast<std::size_t>(prompt_len), 0);
    for (auto tok : xt.tokens) {
        a.block_of.push_back(tok == vocab.mask_id ? uniform_int(rng, M + 1, M + N) : uniform_int(rng, 1, M));
    }
    return a;
}

// One merged training sequence, sorted by block.
struct TrainingBatchItem {
    std::vector<TokenId> tokens;
    std::vector<Position> positions;
    std::vector<LayoutToken> layout;  // parallel to tokens
    BlockAssignment assignment;       // natural order, registers included
    AttentionMask mask;
    std::vector<std::size_t> target_rows;
    std::vector<TokenId> targets;
    double t = 1.0;
    double weight = 1.0;  // 1/t
    double scale = 1.0;   // multiplies mdm_loss in the training objective
};

// Build the merged sequence for a given assignment (registers already
// attached). x0 is the clean response, xt its masked version.
inline TrainingBatchItem build_item_from_assignment(const MaskedSequence& x0, const MaskedSequence& xt,
                                                    const std::vector<TokenId>& prompt, const BlockAssignment& a,
                                                    double t, const Vocabulary& vocab) {
    a.validate();
    const int S = static_cast<int>(prompt.size());
    require(a.prompt_len == S && a.response_len() == static_cast<int>(x0.size()) && xt.size() == x0.size(),
            "build_training_item: lengths disagree with the assignment");
    const auto natural = layout_tokens(a);
    const auto order = block_sorted_order(natural);

    TrainingBatchItem item;
    item.assignment = a;
    item.t = t;
    item.weight = 1.0 / t;
    for (int i : order) {
        const auto& lt = natural[static_cast<std::size_t>(i)];
        item.layout.push_back(lt);
        item.positions.push_back(lt.position);
        TokenId tok = vocab.reg_id;
        if (lt.kind == TokenKind::prompt) {
            tok = prompt[static_cast<std::size_t>(lt.position)];
        } else if (lt.kind != TokenKind::reg) {
            tok = xt.tokens[static_cast<std::size_t>(lt.position - S)];
            require((tok == vocab.mask_id) == (lt.kind == TokenKind::masked),
                    "build_training_item: block split disagrees with the mask pattern");
        }
        if (lt.kind == TokenKind::masked) {
            item.target_rows.push_back(item.tokens.size());
            item.targets.push_back(x0.tokens[static_cast<std::size_t>(lt.position - S)]);
        }
        item.tokens.push_back(tok);
    }
    item.mask = step_causal_mask(item.layout, a.M, a.N);
    return item;
}

// masked_mean: mdm_loss as is. sequence_sum: (1/(t L)) times the summed
// cross-entropy, i.e. mdm_loss scaled by the masked fraction; keeps items
// with tiny t and few masked tokens from dominating a batch.
enum class LossReduction { masked_mean, sequence_sum };

inline ModelConfig default_toy_model() {
    ModelConfig m;
    m.n_layers = 2;
    m.n_heads = 4;
    m.d_model = 64;
    m.d_ff = 128;
    m.rope_base = 10.0;
    return m;
}

struct TrainConfig {
    int M_min = 1, M_max = 8;
    int N_min = 1, N_max = 8;
    int reg_count = 4;
    int batch_size = 16;
    int steps = 2000;
    double lr = 2e-3;
    int warmup_steps = 100;
    double min_lr_ratio = 0.1;  // cosine decay floor
    enum class Optimizer { sgd, adam } optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double t_eps = 1e-3;
    LossReduction reduction = LossReduction::sequence_sum;
    std::uint64_t seed = 0;
    // Task and model.
    int grid_h = 8, grid_w = 8;
    ModelConfig model = default_toy_model();
    int eval_items = 64;
    int val_prompts = 50;
    int sample_steps = 8;

    // Linear warmup, then cosine decay to lr * min_lr_ratio.
    double lr_at(int step) const {
        if (step < warmup_steps) {
            return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        }
        const int span = std::max(1, steps - warmup_steps);
        const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
        const double cosine = 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
        return lr * (min_lr_ratio + (1.0 - min_lr_ratio) * cosine);
    }

    void validate() const {
        require(M_min >= 1 && M_min <= M_max, "train config: bad M range");
        require(N_min >= 1 && N_min <= N_max, "train config: bad N range");
        require(reg_count >= 0, "train config: negative register count");
        require(batch_size >= 1 && steps >= 0, "train config: bad batch size or step count");
        require(lr > 0.0, "train config: learning rate must be positive");
        require(warmup_steps >= 0 && min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0, "train config: bad lr schedule");
        model.validate();
    }
};

// Draws xt = forward_mask(x0, t), block counts from the configured ranges,
// and appends reg_count registers per masked block. With no masked tokens
// there are no masked blocks and no registers.
inline TrainingBatchItem build_training_item(const MaskedSequence& x0, const std::vector<TokenId>& prompt, double t,
                                             const TrainConfig& cfg, const Vocabulary& vocab, Rng& rng) {
    const auto xt = forward_mask(x0, t, vocab, rng);
    const int M = uniform_int(rng, cfg.M_min, cfg.M_max);
    int N = uniform_int(rng, cfg.N_min, cfg.N_max);
    if (xt.count_masked(vocab) == 0) {
        N = 0;
    }
    const auto a = assign_blocks(xt, static_cast<int>(prompt.size()), M, N, vocab, rng).with_registers(cfg.reg_count);
    auto item = build_item_from_assignment(x0, xt, prompt, a, t, vocab);
    if (cfg.reduction == LossReduction::sequence_sum && !x0.tokens.empty()) {
        item.scale = static_cast<double>(item.targets.size()) / static_cast<double>(x0.size());
    }
    return item;
}

template <typename T>
Matrix<T> target_logits(const Matrix<T>& logits, const TrainingBatchItem& item) {
    Matrix<T> out(static_cast<Eigen::Index>(item.target_rows.size()), logits.cols());
    for (std::size_t i = 0; i < item.target_rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = logits.row(static_cast<Eigen::Index>(item.target_rows[i]));
    }
    return out;
}

template <typename T>
double item_loss(const Model<T>& model, const TrainingBatchItem& item) {
    const auto logits = forward_full(model, item.tokens, item.positions, item.mask);
    return item.scale * mdm_loss(target_logits(logits, item), item.targets, item.t).value;
}

// Loss and parameter gradient of one item.
template <typename T>
double item_loss_and_grad(const Model<T>& model, const TrainingBatchItem& item, Params<T>& grad) {
    ForwardTape<T> tape;
    const auto logits = forward_full(model, item.tokens, item.positions, item.mask, &tape);
    const auto sel = target_logits(logits, item);
    const auto loss = mdm_loss(sel, item.targets, item.t);
    Matrix<T> dsel = mdm_loss_grad<T>(sel, item.targets, item.t) * static_cast<T>(item.scale);
    Matrix<T> dlogits = Matrix<T>::Zero(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < item.target_rows.size(); ++i) {
        dlogits.row(static_cast<Eigen::Index>(item.target_rows[i])) = dsel.row(static_cast<Eigen::Index>(i));
    }
    grad = backward(model, tape, dlogits);
    return item.scale * loss.value;
}

template <typename T>
class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const Params<T>& like)
        : cfg_(cfg), m_(Params<T>::zeros_like(like)), v_(Params<T>::zeros_like(like)) {}

    void step(Params<T>& params, Params<T>& grad, double lr_now) {
        ++t_;
        std::vector<Matrix<T>*> ps, gs, ms, vs;
        params.for_each([&](const std::string&, Matrix<T>& m) { ps.push_back(&m); });
        grad.for_each([&](const std::string&, Matrix<T>& m) { gs.push_back(&m); });
        m_.for_each([&](const std::string&, Matrix<T>& m) { ms.push_back(&m); });
        v_.for_each([&](const std::string&, Matrix<T>& m) { vs.push_back(&m); });
        const auto lr = static_cast<T>(lr_now);
        if (cfg_.optimizer == TrainConfig::Optimizer::sgd) {
            for (std::size_t i = 0; i < ps.size(); ++i) {
                *ps[i] -= lr * *gs[i];
            }
            return;
        }
        const auto b1 = static_cast<T>(cfg_.beta1);
        const auto b2 = static_cast<T>(cfg_.beta2);
        const auto c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, t_));
        const auto c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, t_));
        const auto eps = static_cast<T>(cfg_.adam_eps);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            *ms[i] = b1 * *ms[i] + (T(1) - b1) * *gs[i];
            *vs[i] = b2 * *vs[i] + (T(1) - b2) * gs[i]->cwiseProduct(*gs[i]);
            ps[i]->array() -= lr * (ms[i]->array() / c1) / ((vs[i]->array() / c2).sqrt() + eps);
        }
    }

private:
    TrainConfig cfg_;
    Params<T> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic task: one prompt token selects one of 16 parameterized 8x8
// patterns (shape and two colors from a 16-color vocabulary).

struct GridPatternTask {
    static constexpr int kColors = 16;
    static constexpr int kPatterns = 16;
    int H = 8;
    int W = 8;

    static Vocabulary vocabulary() { return Vocabulary::with_specials(kColors + kPatterns); }

    std::vector<TokenId> random_prompt(Rng& rng) const { return {kColors + uniform_int(rng, 0, kPatterns - 1)}; }

    // Pattern p: shape p % 4 (checkerboard of 4x4 tiles, row stripes, column
    // runs of width 4, frame), colors p and (p + 7) % 16.
    MaskedSequence render(const std::vector<TokenId>& prompt) const {
        require(prompt.size() == 1 && prompt[0] >= kColors && prompt[0] < kColors + kPatterns,
                "grid task: malformed prompt");
        const int p = prompt[0] - kColors;
        const TokenId a = p;
        const TokenId b = (p + 7) % kColors;
        MaskedSequence g;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                bool first = false;
                switch (p % 4) {
                    case 0: first = (i / 4 + j / 4) % 2 == 0; break;
                    case 1: first = i % 2 == 0; break;
                    case 2: first = (j / 4) % 2 == 0; break;
                    default: first = i == 0 || j == 0 || i == H - 1 || j == W - 1; break;
                }
                g.tokens.push_back(first ? a : b);
            }
        }
        return g;
    }

    bool valid(const std::vector<TokenId>& prompt, const MaskedSequence& grid) const { return render(prompt) == grid; }
};

struct TrainReport {
    std::vector<double> losses;        // per optimization step (batch mean)
    double initial_eval_loss = 0.0;    // fixed evaluation items, before training
    double final_eval_loss = 0.0;
    double validity = 0.0;             // fraction of sampled grids matching the prompt
    bool diverged = false;
    std::uint64_t checksum = 0;
};

struct TrainStepInfo {
    int step;
    double loss;
    double lr;
};

template <typename T>
double eval_loss(const Model<T>& model, const std::vector<TrainingBatchItem>& items) {
    double s = 0.0;
    for (const auto& it : items) {
        s += item_loss(model, it);
    }
    return items.empty() ? 0.0 : s / static_cast<double>(items.size());
}

// Greedy sparse sampling on fresh prompts; fraction of exactly valid grids.
template <typename T>
double pattern_validity(const Model<T>& model, const GridPatternTask& task, const TrainConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    int ok = 0;
    for (int i = 0; i < cfg.val_prompts; ++i) {
        const auto prompt = task.random_prompt(rng);
        const auto order = pregen_order_2d(task.H, task.W, cfg.sample_steps, rng());
        const auto out = sample_pregen(model, prompt, task.H * task.W, order, discretize_schedule(cfg.sample_steps),
                                       cfg.reg_count, rng, DecodeRule::greedy);
        ok += task.valid(prompt, out.response) ? 1 : 0;
    }
    return cfg.val_prompts > 0 ? static_cast<double>(ok) / cfg.val_prompts : 0.0;
}

inline ModelConfig grid_model_config(const TrainConfig& cfg) {
    ModelConfig m = cfg.model;
    m.vocab = GridPatternTask::vocabulary();
    m.max_position = std::max(m.max_position, 1 + cfg.grid_h * cfg.grid_w + cfg.reg_count);
    return m;
}

template <typename T = float>
TrainReport train_toy(const TrainConfig& cfg, Model<T>& model,
                      const std::function<void(const TrainStepInfo&)>& on_step = {}) {
    cfg.validate();
    const GridPatternTask task{cfg.grid_h, cfg.grid_w};
    const auto vocab = GridPatternTask::vocabulary();
    model = Model<T>(grid_model_config(cfg));

    std::vector<TrainingBatchItem> eval;
    {
        Rng rng(cfg.seed ^ 0x5eed0e7a1ULL);
        for (int i = 0; i < cfg.eval_items; ++i) {
            const auto prompt = task.random_prompt(rng);
            const double t = sample_time(rng, cfg.t_eps);
            eval.push_back(build_training_item(task.render(prompt), prompt, t, cfg, vocab, rng));
        }
    }

    TrainReport report;
    report.initial_eval_loss = eval_loss(model, eval);
    Optimizer<T> opt(cfg, model.params());
    Rng rng(cfg.seed);
    for (int step = 0; step < cfg.steps; ++step) {
        Params<T> total = Params<T>::zeros_like(model.params());
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto prompt = task.random_prompt(rng);
            const double t = sample_time(rng, cfg.t_eps);
            const auto item = build_training_item(task.render(prompt), prompt, t, cfg, vocab, rng);
            Params<T> g;
            loss += item_loss_and_grad(model, item, g);
            std::vector<Matrix<T>*> acc;
            total.for_each([&](const std::string&, Matrix<T>& m) { acc.push_back(&m); });
            std::size_t i = 0;
            g.for_each([&](const std::string&, Matrix<T>& m) { *acc[i++] += m; });
        }
        loss /= cfg.batch_size;
        total.for_each([&](const std::string&, Matrix<T>& m) { m /= static_cast<T>(cfg.batch_size); });
        report.losses.push_back(loss);
        if (!std::isfinite(loss)) {
            report.diverged = true;
            break;
        }
        const double lr = cfg.lr_at(step);
        opt.step(model.mutable_params(), total, lr);
        if (on_step) {
            on_step({step, loss, lr});
        }
    }
    if (cfg.steps == 0) {
        report.final_eval_loss = report.initial_eval_loss;
        report.checksum = model.checksum();
        return report;
    }
    report.final_eval_loss = eval_loss(model, eval);
    if (!report.diverged) {
        report.validity = pattern_validity(model, task, cfg, cfg.seed ^ 0x7a11dULL);
    }
    report.checksum = model.checksum();
    return report;
}

}  // namespace smdm
