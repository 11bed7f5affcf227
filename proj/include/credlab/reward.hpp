// Per-candidate reward fields.
//
// Everything here is a positions x vocabulary matrix of log-ratio advantages:
//   sd          log teacher(v | x, y_<t, z) - log student(v | x, y_<t)
//   credit      sd minus lambda times a contrastive estimate of the
//               input-generic teacher log-probability
//   full-ratio  sd minus lambda times the mean of full sd fields computed
//               under contrastive inputs
// Teacher probabilities pass through one shared floored log (entries of an
// exact posterior can be hard zeros), so every downstream identity sees the
// same finite numbers. The matched-input teacher pass is strict: conditioning
// on a feedback that is unreachable at the prefix throws. Contrastive passes
// instead fall back to the unconditioned reference row, the zero-information
// limit, because a mismatched input may make the observed feedback impossible.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "credlab/common.hpp"
#include "credlab/policy.hpp"
#include "credlab/world.hpp"

namespace credlab {

inline double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

enum class Engine { sd, credit, full_ratio };

inline const char* engine_name(Engine e) {
    switch (e) {
        case Engine::sd: return "sd";
        case Engine::credit: return "credit";
        default: return "full-ratio";
    }
}

struct RewardField {
    int horizon = 0;
    int vocab = 0;
    std::vector<double> values;  // [T * V], nats
    std::vector<char> mask;      // [T * V], 1 = inside the top-k support
    Engine engine = Engine::sd;
    double lambda = 0.0;
    int contrast_count = 0;
    std::vector<int> contrastive_ids;

    RewardField() = default;
    RewardField(int t, int v, Engine e)
        : horizon(t), vocab(v), values(static_cast<std::size_t>(t) * v, 0.0),
          mask(static_cast<std::size_t>(t) * v, 1), engine(e) {}

    double& at(int t, int v) { return values[static_cast<std::size_t>(t) * vocab + v]; }
    double at(int t, int v) const { return values[static_cast<std::size_t>(t) * vocab + v]; }
    bool masked_in(int t, int v) const { return mask[static_cast<std::size_t>(t) * vocab + v] != 0; }
};

// log of the feedback-conditioned reference row, floored elementwise.
// Strict: propagates the null-event error of the matched pass.
inline std::vector<double> teacher_log_row(const ReferenceState& ref, const WorldSpec& w, int x,
                                           const std::vector<int>& prefix, int z, TeacherMode mode) {
    TeacherContext ctx{x, prefix, z, mode};
    auto row = teacher_next(ref, w, ctx);
    for (auto& p : row) p = floored_log(p);
    return row;
}

// Contrastive variant: a zero-probability feedback under the mismatched input
// yields the unconditioned reference row instead of an error.
inline std::vector<double> teacher_log_row_contrastive(const ReferenceState& ref, const WorldSpec& w,
                                                       int x, const std::vector<int>& prefix, int z,
                                                       TeacherMode mode) {
    try {
        return teacher_log_row(ref, w, x, prefix, z, mode);
    } catch (const NullEventError&) {
        auto row = reference_student_row(ref, x, prefix);
        for (auto& p : row) p = floored_log(p);
        return row;
    }
}

inline void write_realized(const RewardField& f, Trajectory& traj) {
    traj.realized_rewards.resize(traj.tokens.size());
    for (std::size_t t = 0; t < traj.tokens.size(); ++t)
        traj.realized_rewards[t] = f.at(static_cast<int>(t), traj.tokens[t]);
}

// Raw self-distillation field: teacher and student evaluated at every prefix
// of the trajectory, conditioned on its realized feedback.
inline RewardField sd_reward(const ReferenceState& ref, const PolicyParams& params,
                             const WorldSpec& w, Trajectory& traj,
                             TeacherMode mode = TeacherMode::exact_posterior) {
    check_trajectory(w, traj);
    RewardField f(w.horizon, w.vocab_size, Engine::sd);
    std::vector<int> prefix;
    for (int t = 0; t < w.horizon; ++t) {
        const auto tlog = teacher_log_row(ref, w, traj.input_id, prefix, traj.feedback_id, mode);
        const auto stud = student_next(params, traj.input_id, prefix);
        for (int v = 0; v < w.vocab_size; ++v) f.at(t, v) = tlog[v] - std::log(stud[v]);
        prefix.push_back(traj.tokens[t]);
    }
    write_realized(f, traj);
    return f;
}

// (1/C) sum_k log teacher(v | x'_k, y_<t, z): the estimated input-generic
// baseline at one position.
inline std::vector<double> generic_baseline(const ReferenceState& ref, const WorldSpec& w,
                                            const std::vector<int>& contrastive_ids, int matched_x,
                                            const std::vector<int>& prefix, int z, TeacherMode mode) {
    if (contrastive_ids.empty()) throw Error("generic_baseline: empty contrastive list");
    std::vector<double> acc(w.vocab_size, 0.0);
    for (int xc : contrastive_ids) {
        if (xc == matched_x) throw Error("generic_baseline: contrastive id equals matched input");
        const auto tlog = teacher_log_row_contrastive(ref, w, xc, prefix, z, mode);
        for (int v = 0; v < w.vocab_size; ++v) acc[v] += tlog[v];
    }
    for (auto& g : acc) g /= static_cast<double>(contrastive_ids.size());
    return acc;
}

// sd minus lambda times the estimated generic baseline. lambda = 0 skips the
// baseline entirely and reproduces the sd field bit for bit.
inline RewardField credit_reward(const ReferenceState& ref, const PolicyParams& params,
                                 const WorldSpec& w, Trajectory& traj,
                                 const std::vector<int>& contrastive_ids, double lambda,
                                 TeacherMode mode = TeacherMode::exact_posterior) {
    RewardField f = sd_reward(ref, params, w, traj, mode);
    f.engine = Engine::credit;
    f.lambda = lambda;
    if (lambda != 0.0) {
        f.contrastive_ids = contrastive_ids;
        f.contrast_count = static_cast<int>(contrastive_ids.size());
        std::vector<int> prefix;
        for (int t = 0; t < w.horizon; ++t) {
            const auto g = generic_baseline(ref, w, contrastive_ids, traj.input_id, prefix,
                                            traj.feedback_id, mode);
            for (int v = 0; v < w.vocab_size; ++v) f.at(t, v) -= lambda * g[v];
            prefix.push_back(traj.tokens[t]);
        }
        write_realized(f, traj);
    }
    return f;
}

// sd minus lambda times the mean of complete sd fields evaluated under each
// contrastive input (teacher and student both swapped to x').
inline RewardField full_ratio_contrastive(const ReferenceState& ref, const PolicyParams& params,
                                          const WorldSpec& w, Trajectory& traj,
                                          const std::vector<int>& contrastive_ids, double lambda,
                                          TeacherMode mode = TeacherMode::exact_posterior) {
    RewardField f = sd_reward(ref, params, w, traj, mode);
    f.engine = Engine::full_ratio;
    f.lambda = lambda;
    if (lambda != 0.0) {
        if (contrastive_ids.empty()) throw Error("full_ratio_contrastive: empty contrastive list");
        f.contrastive_ids = contrastive_ids;
        f.contrast_count = static_cast<int>(contrastive_ids.size());
        std::vector<int> prefix;
        for (int t = 0; t < w.horizon; ++t) {
            std::vector<double> mean(w.vocab_size, 0.0);
            for (int xc : contrastive_ids) {
                if (xc == traj.input_id)
                    throw Error("full_ratio_contrastive: contrastive id equals matched input");
                const auto tlog =
                    teacher_log_row_contrastive(ref, w, xc, prefix, traj.feedback_id, mode);
                const auto stud = student_next(params, xc, prefix);
                for (int v = 0; v < w.vocab_size; ++v) mean[v] += tlog[v] - std::log(stud[v]);
            }
            for (int v = 0; v < w.vocab_size; ++v)
                f.at(t, v) -= lambda * mean[v] / static_cast<double>(contrastive_ids.size());
            prefix.push_back(traj.tokens[t]);
        }
        write_realized(f, traj);
    }
    return f;
}

// Exact input-generic component over the data prior (including the matched
// input): G(v) = sum_x' D(x') log teacher(v | x', prefix, z).
inline std::vector<double> exact_generic_baseline(const ReferenceState& ref, const WorldSpec& w,
                                                  const std::vector<int>& prefix, int z,
                                                  TeacherMode mode) {
    std::vector<double> g(w.vocab_size, 0.0);
    for (int xp = 0; xp < w.num_inputs; ++xp) {
        if (w.input_prior[xp] == 0.0) continue;
        const auto tlog = teacher_log_row(ref, w, xp, prefix, z, mode);
        for (int v = 0; v < w.vocab_size; ++v) g[v] += w.input_prior[xp] * tlog[v];
    }
    return g;
}

// Same expectation with the estimator's null-event fallback per input, for
// display and metrics paths where a strict error would only be noise.
inline std::vector<double> exact_generic_baseline_lenient(const ReferenceState& ref,
                                                          const WorldSpec& w,
                                                          const std::vector<int>& prefix, int z,
                                                          TeacherMode mode) {
    std::vector<double> g(w.vocab_size, 0.0);
    for (int xp = 0; xp < w.num_inputs; ++xp) {
        if (w.input_prior[xp] == 0.0) continue;
        const auto tlog = teacher_log_row_contrastive(ref, w, xp, prefix, z, mode);
        for (int v = 0; v < w.vocab_size; ++v) g[v] += w.input_prior[xp] * tlog[v];
    }
    return g;
}

// Same expectation restricted to x' != x, weights renormalized. This is what
// the batch estimator is unbiased for.
inline std::vector<double> exact_restricted_baseline(const ReferenceState& ref, const WorldSpec& w,
                                                     int matched_x, const std::vector<int>& prefix,
                                                     int z, TeacherMode mode) {
    double total = 0.0;
    for (int xp = 0; xp < w.num_inputs; ++xp)
        if (xp != matched_x) total += w.input_prior[xp];
    if (total <= 0.0) throw Error("restricted baseline needs at least two inputs with prior mass");
    std::vector<double> g(w.vocab_size, 0.0);
    for (int xp = 0; xp < w.num_inputs; ++xp) {
        if (xp == matched_x || w.input_prior[xp] == 0.0) continue;
        const auto tlog = teacher_log_row(ref, w, xp, prefix, z, mode);
        for (int v = 0; v < w.vocab_size; ++v) g[v] += w.input_prior[xp] / total * tlog[v];
    }
    return g;
}

// credit with the exact full-prior baseline instead of the sampled estimate.
inline RewardField credit_reward_exact(const ReferenceState& ref, const PolicyParams& params,
                                       const WorldSpec& w, Trajectory& traj, double lambda,
                                       TeacherMode mode = TeacherMode::exact_posterior) {
    RewardField f = sd_reward(ref, params, w, traj, mode);
    f.engine = Engine::credit;
    f.lambda = lambda;
    if (lambda != 0.0) {
        std::vector<int> prefix;
        for (int t = 0; t < w.horizon; ++t) {
            const auto g = exact_generic_baseline(ref, w, prefix, traj.feedback_id, mode);
            for (int v = 0; v < w.vocab_size; ++v) f.at(t, v) -= lambda * g[v];
            prefix.push_back(traj.tokens[t]);
        }
        write_realized(f, traj);
    }
    return f;
}

// Split of the matched teacher log-probability into input-specific and
// input-generic parts: S = log teacher(x) - G, with G the exact prior
// expectation of log teacher(x'). S + G reconstructs the teacher log-prob.
inline std::pair<double, double> decompose_S_G(const ReferenceState& ref, const WorldSpec& w, int x,
                                               const std::vector<int>& prefix, int z, int candidate,
                                               TeacherMode mode = TeacherMode::exact_posterior) {
    if (candidate < 0 || candidate >= w.vocab_size) throw Error("candidate token out of range");
    const double matched = teacher_log_row(ref, w, x, prefix, z, mode)[candidate];
    const double g = exact_generic_baseline(ref, w, prefix, z, mode)[candidate];
    return {matched - g, g};
}

// Prior-contrastive pointwise value: expectation inside the log, in contrast
// with decompose_S_G where the log is inside the expectation.
inline double pcmi(const ReferenceState& ref, const WorldSpec& w, int x,
                   const std::vector<int>& prefix, int z, int candidate,
                   TeacherMode mode = TeacherMode::exact_posterior) {
    if (candidate < 0 || candidate >= w.vocab_size) throw Error("candidate token out of range");
    const double matched = teacher_log_row(ref, w, x, prefix, z, mode)[candidate];
    double mean_prob = 0.0;
    for (int xp = 0; xp < w.num_inputs; ++xp) {
        if (w.input_prior[xp] == 0.0) continue;
        TeacherContext ctx{xp, prefix, z, mode};
        const double p = teacher_next(ref, w, ctx)[candidate];
        mean_prob += w.input_prior[xp] * std::max(p, kProbFloor);
    }
    return matched - std::log(mean_prob);
}

// Restrict the field to the k most probable tokens of the matched teacher at
// each position. Ties break toward the lower token index; k saturates at V.
inline RewardField topk_mask(RewardField f, const std::vector<std::vector<double>>& teacher_rows,
                             int k) {
    if (k <= 0) throw Error("topk_mask: k must be positive");
    k = std::min(k, f.vocab);
    if (static_cast<int>(teacher_rows.size()) != f.horizon)
        throw Error("topk_mask: one teacher row per position required");
    for (int t = 0; t < f.horizon; ++t) {
        const auto& row = teacher_rows[t];
        std::vector<int> order(f.vocab);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&row](int a, int b) { return row[a] > row[b]; });
        for (int v = 0; v < f.vocab; ++v) f.mask[static_cast<std::size_t>(t) * f.vocab + v] = 0;
        for (int i = 0; i < k; ++i) f.mask[static_cast<std::size_t>(t) * f.vocab + order[i]] = 1;
    }
    return f;
}

// Matched teacher distributions along a trajectory (used for masking and for
// the mixture divergence in the trainer). Same strictness as sd_reward.
inline std::vector<std::vector<double>> matched_teacher_rows(const ReferenceState& ref,
                                                             const WorldSpec& w,
                                                             const Trajectory& traj,
                                                             TeacherMode mode) {
    std::vector<std::vector<double>> rows;
    std::vector<int> prefix;
    for (int t = 0; t < w.horizon; ++t) {
        TeacherContext ctx{traj.input_id, prefix, traj.feedback_id, mode};
        rows.push_back(teacher_next(ref, w, ctx));
        prefix.push_back(traj.tokens[t]);
    }
    return rows;
}

}  // namespace credlab
