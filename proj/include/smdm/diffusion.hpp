#pragma once

// Continuous-time absorbing-state (masked) diffusion: forward masking, the
// reverse posterior used for sampling, the discretized time grid and the
// masked-diffusion training loss.

#include "smdm/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace smdm {

struct Vocabulary {
    int size = 0;        // ordinary ids are [0, size)
    TokenId mask_id = 0;
    TokenId reg_id = 0;

    // Ordinary ids followed by [M] and [reg].
    static Vocabulary with_specials(int size) {
        Vocabulary v{size, size, size + 1};
        v.validate();
        return v;
    }

    void validate() const {
        require(size > 0, "vocabulary: size must be positive");
        require(mask_id != reg_id, "vocabulary: mask_id and reg_id must differ");
        require(mask_id >= size && reg_id >= size, "vocabulary: special ids collide with ordinary ids");
    }

    bool is_ordinary(TokenId id) const { return id >= 0 && id < size; }

    // Rows needed in an embedding table covering every id.
    int table_size() const { return std::max({size, mask_id + 1, reg_id + 1}); }

    bool operator==(const Vocabulary&) const = default;
};

struct MaskedSequence {
    std::vector<TokenId> tokens;

    std::size_t size() const { return tokens.size(); }
    bool operator==(const MaskedSequence&) const = default;

    std::size_t count_masked(const Vocabulary& vocab) const {
        return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), vocab.mask_id));
    }
};

// Timesteps t_K = 1 > ... > t_0 = 0, stored in sampling order.
struct DiffusionSchedule {
    std::vector<double> steps;

    int num_steps() const { return static_cast<int>(steps.size()) - 1; }

    void validate() const {
        require(steps.size() >= 2, "schedule: need at least one step");
        require(steps.front() == 1.0 && steps.back() == 0.0, "schedule: endpoints must be 1 and 0");
        for (std::size_t i = 1; i < steps.size(); ++i) {
            require(steps[i] < steps[i - 1], "schedule: timesteps must strictly decrease");
        }
    }
};

enum class ScheduleShape { linear };

inline DiffusionSchedule discretize_schedule(int num_steps, ScheduleShape shape = ScheduleShape::linear) {
    require(num_steps >= 1, "discretize_schedule: K must be >= 1");
    DiffusionSchedule s;
    s.steps.resize(static_cast<std::size_t>(num_steps) + 1);
    switch (shape) {
        case ScheduleShape::linear:
            for (int i = 0; i <= num_steps; ++i) {
                s.steps[static_cast<std::size_t>(i)] = static_cast<double>(num_steps - i) / num_steps;
            }
            break;
    }
    return s;
}

// Number of positions resolved at each step when a length-L sequence follows
// the schedule: cumulative unmasked count after step k is round(L * (1 - t)).
inline std::vector<int> step_sizes_from_schedule(const DiffusionSchedule& schedule, int length) {
    schedule.validate();
    std::vector<int> sizes;
    int done = 0;
    for (std::size_t i = 1; i < schedule.steps.size(); ++i) {
        const int target = static_cast<int>(std::lround(length * (1.0 - schedule.steps[i])));
        sizes.push_back(target - done);
        done = target;
    }
    return sizes;
}

// Each position independently becomes [M] with probability t.
inline MaskedSequence forward_mask(const MaskedSequence& x0, double t, const Vocabulary& vocab, Rng& rng) {
    require(t >= 0.0 && t <= 1.0, "forward_mask: t must lie in [0, 1]");
    MaskedSequence xt = x0;
    for (auto& tok : xt.tokens) {
        require(tok != vocab.mask_id, "forward_mask: input already contains masks");
        // Draw for every position so the stream advances identically for any t.
        const double u = uniform01(rng);
        if (u < t) {
            tok = vocab.mask_id;
        }
    }
    return xt;
}

struct UnmaskDistribution {
    std::vector<double> token_probs;
    double mask_prob = 0.0;

    double total() const {
        double s = mask_prob;
        for (double p : token_probs) {
            s += p;
        }
        return s;
    }
};

// Reverse step from time t to s < t for a masked position, with the clean
// token replaced by the model prediction.
inline UnmaskDistribution posterior_unmask_dist(const std::vector<double>& pred, double t, double s) {
    require(t > 0.0 && t <= 1.0, "posterior_unmask_dist: t must lie in (0, 1]");
    require(s >= 0.0 && s < t, "posterior_unmask_dist: need 0 <= s < t");
    UnmaskDistribution d;
    const double keep = s / t;
    const double unmask = (t - s) / t;
    d.token_probs.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred[i] >= 0.0, "posterior_unmask_dist: negative probability");
        d.token_probs[i] = unmask * pred[i];
    }
    d.mask_prob = keep;
    return d;
}

inline TokenId reverse_step_token(TokenId current, const UnmaskDistribution& dist, const Vocabulary& vocab, Rng& rng) {
    if (current != vocab.mask_id) {
        return current;
    }
    double u = uniform01(rng) * dist.total();
    for (std::size_t i = 0; i < dist.token_probs.size(); ++i) {
        u -= dist.token_probs[i];
        if (u < 0.0) {
            return static_cast<TokenId>(i);
        }
    }
    if (dist.mask_prob > 0.0) {
        return vocab.mask_id;
    }
    // Rounding left u marginally positive: fall back to the last supported token.
    for (std::size_t i = dist.token_probs.size(); i-- > 0;) {
        if (dist.token_probs[i] > 0.0) {
            return static_cast<TokenId>(i);
        }
    }
    return vocab.mask_id;
}

template <typename Derived>
std::vector<double> softmax_row(const Eigen::MatrixBase<Derived>& row) {
    const auto n = static_cast<std::size_t>(row.size());
    std::vector<double> p(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        mx = std::max(mx, static_cast<double>(row(static_cast<Eigen::Index>(i))));
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::exp(static_cast<double>(row(static_cast<Eigen::Index>(i))) - mx);
        z += p[i];
    }
    for (auto& v : p) {
        v /= z;
    }
    return p;
}

struct LossResult {
    double value = 0.0;
    bool empty = false;  // no decode positions were supplied
};

// (1/t) * mean negative log-likelihood of the targets at the supplied
// (masked) positions.
template <typename Derived>
LossResult mdm_loss(const Eigen::MatrixBase<Derived>& logits, const std::vector<TokenId>& targets, double t) {
    require(t > 0.0, "mdm_loss: t must be positive");
    require(static_cast<std::size_t>(logits.rows()) == targets.size(), "mdm_loss: row/target count mismatch");
    if (targets.empty()) {
        return {0.0, true};
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const auto tgt = targets[static_cast<std::size_t>(r)];
        require(tgt >= 0 && tgt < logits.cols(), "mdm_loss: target outside vocabulary");
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            mx = std::max(mx, static_cast<double>(logits(r, c)));
        }
        double z = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            z += std::exp(static_cast<double>(logits(r, c)) - mx);
        }
        total += mx + std::log(z) - static_cast<double>(logits(r, tgt));
    }
    return {total / static_cast<double>(targets.size()) / t, false};
}

// d mdm_loss / d logits, same shape as logits.
template <typename T>
Matrix<T> mdm_loss_grad(const Matrix<T>& logits, const std::vector<TokenId>& targets, double t) {
    require(t > 0.0, "mdm_loss_grad: t must be positive");
    require(static_cast<std::size_t>(logits.rows()) == targets.size(), "mdm_loss_grad: row/target count mismatch");
    Matrix<T> g = Matrix<T>::Zero(logits.rows(), logits.cols());
    if (targets.empty()) {
        return g;
    }
    const double scale = 1.0 / (t * static_cast<double>(targets.size()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const auto p = softmax_row(logits.row(r));
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            g(r, c) = static_cast<T>(scale * p[static_cast<std::size_t>(c)]);
        }
        g(r, targets[static_cast<std::size_t>(r)]) -= static_cast<T>(scale);
    }
    return g;
}

// Training time draw, uniform on (eps, 1].
inline double sample_time(Rng& rng, double eps = 1e-3) {
    return eps + (1.0 - eps) * (1.0 - uniform01(rng));
}

}  // namespace smdm
