// Trainable tabular softmax policies and the lagged reference.
//
// The student is one logit row per (input, prefix). The reference keeps an
// exponential moving average of all logit tables; its feedback-conditioned
// pass ("teacher") is either the exact Bayes posterior of the reference's own
// rollout distribution combined with the world's feedback channel, or a
// separately stored learned table.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "credlab/common.hpp"
#include "credlab/world.hpp"

namespace credlab {

inline std::vector<double> softmax(const double* logits, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    std::vector<double> p(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (int i = 0; i < n; ++i) p[i] /= sum;
    return p;
}

struct PolicyParams {
    int num_inputs = 0;
    int vocab_size = 0;
    int horizon = 0;
    int num_feedback = 0;
    std::vector<double> student_logits;  // [X * S * V]
    std::vector<double> teacher_logits;  // [X * S * Z * V], empty unless learned-table mode
    std::int64_t version = 0;

    PrefixIndexer indexer() const { return PrefixIndexer(vocab_size, horizon); }

    long long student_row_offset(const PrefixIndexer& ix, int x, const std::vector<int>& prefix) const {
        if (x < 0 || x >= num_inputs) throw Error("input id out of range");
        return (static_cast<long long>(x) * ix.slots() + ix.index(prefix)) * vocab_size;
    }
    long long teacher_row_offset(const PrefixIndexer& ix, int x, const std::vector<int>& prefix,
                                 int z) const {
        if (z < 0 || z >= num_feedback) throw Error("feedback id out of range");
        return ((static_cast<long long>(x) * ix.slots() + ix.index(prefix)) * num_feedback + z) *
               vocab_size;
    }
    bool has_learned_teacher() const { return !teacher_logits.empty(); }
};

// Student initialized at the world's rollout policy (logits = log p).
inline PolicyParams params_from_world(const WorldSpec& w) {
    PolicyParams p;
    p.num_inputs = w.num_inputs;
    p.vocab_size = w.vocab_size;
    p.horizon = w.horizon;
    p.num_feedback = w.num_feedback;
    p.student_logits.resize(w.policy_table.size());
    for (std::size_t i = 0; i < w.policy_table.size(); ++i)
        p.student_logits[i] = std::log(std::max(w.policy_table[i], kProbFloor));
    return p;
}

inline std::vector<double> student_next(const PolicyParams& p, int x, const std::vector<int>& prefix) {
    const auto ix = p.indexer();
    return softmax(p.student_logits.data() + p.student_row_offset(ix, x, prefix), p.vocab_size);
}

// Callable usable wherever world.hpp expects a rollout-policy row provider.
inline RowFn student_rows(const PolicyParams& p) {
    return [&p](int x, const std::vector<int>& prefix) { return student_next(p, x, prefix); };
}

struct ReferenceState {
    int num_inputs = 0;
    int vocab_size = 0;
    int horizon = 0;
    int num_feedback = 0;
    std::vector<double> ema_student;
    std::vector<double> ema_teacher;
    double decay_rate = 1.0;  // in (0, 1]; 1 means the reference tracks exactly

    PrefixIndexer indexer() const { return PrefixIndexer(vocab_size, horizon); }
};

inline ReferenceState make_reference(const PolicyParams& p, double decay_rate) {
    if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw Error("decay rate must be in (0, 1]");
    ReferenceState r;
    r.num_inputs = p.num_inputs;
    r.vocab_size = p.vocab_size;
    r.horizon = p.horizon;
    r.num_feedback = p.num_feedback;
    r.ema_student = p.student_logits;
    r.ema_teacher = p.teacher_logits;
    r.decay_rate = decay_rate;
    return r;
}

// ema <- (1 - rate) * ema + rate * params, elementwise over every table.
inline void ema_update(ReferenceState& ref, const PolicyParams& p) {
    if (ref.ema_student.size() != p.student_logits.size() ||
        ref.ema_teacher.size() != p.teacher_logits.size())
        throw Error("ema_update: shape mismatch");
    const double a = ref.decay_rate;
    for (std::size_t i = 0; i < ref.ema_student.size(); ++i)
        ref.ema_student[i] = (1.0 - a) * ref.ema_student[i] + a * p.student_logits[i];
    for (std::size_t i = 0; i < ref.ema_teacher.size(); ++i)
        ref.ema_teacher[i] = (1.0 - a) * ref.ema_teacher[i] + a * p.teacher_logits[i];
}

// Keeps every logit row inside [-50, 50] without moving any argmax: first a
// shared shift (softmax-invariant), then, only if still out of range, a shared
// positive scaling. Returns true when any row was touched.
inline bool clip_logit_rows(std::vector<double>& logits, int row_len, double bound = 50.0) {
    bool touched = false;
    for (std::size_t off = 0; off + row_len <= logits.size(); off += row_len) {
        double lo = logits[off], hi = logits[off];
        for (int i = 1; i < row_len; ++i) {
            lo = std::min(lo, logits[off + i]);
            hi = std::max(hi, logits[off + i]);
        }
        if (hi <= bound && lo >= -bound) continue;
        touched = true;
        const double shift = 0.5 * (hi + lo);
        double maxabs = 0.0;
        for (int i = 0; i < row_len; ++i) {
            logits[off + i] -= shift;
            maxabs = std::max(maxabs, std::abs(logits[off + i]));
        }
        if (maxabs > bound) {
            const double scale = bound / maxabs;
            for (int i = 0; i < row_len; ++i) logits[off + i] *= scale;
        }
    }
    return touched;
}

inline void clip_params(PolicyParams& p, double bound = 50.0) {
    clip_logit_rows(p.student_logits, p.vocab_size, bound);
    clip_logit_rows(p.teacher_logits, p.vocab_size, bound);
}

enum class TeacherMode { exact_posterior, learned_table };

struct TeacherContext {
    int input_id = 0;
    std::vector<int> prefix;
    std::optional<int> feedback_id;  // absent -> unconditioned pass
    TeacherMode mode = TeacherMode::exact_posterior;
};

inline std::vector<double> reference_student_row(const ReferenceState& ref, int x,
                                                 const std::vector<int>& prefix) {
    if (x < 0 || x >= ref.num_inputs) throw Error("input id out of range");
    const auto ix = ref.indexer();
    return softmax(ref.ema_student.data() +
                       (static_cast<long long>(x) * ix.slots() + ix.index(prefix)) * ref.vocab_size,
                   ref.vocab_size);
}

inline RowFn reference_rows(const ReferenceState& ref) {
    return [&ref](int x, const std::vector<int>& prefix) {
        return reference_student_row(ref, x, prefix);
    };
}

// Feedback-conditioned (or unconditioned) reference pass.
//  - exact-posterior: one-step Bayes of (reference rollout policy, world
//    channel); entries can be exactly zero; a null conditioning event throws.
//  - learned-table: softmax of the reference's teacher table.
//  - no feedback id: softmax of the reference's student-shaped table.
inline std::vector<double> teacher_next(const ReferenceState& ref, const WorldSpec& w,
                                        const TeacherContext& ctx) {
    if (!ctx.feedback_id.has_value()) return reference_student_row(ref, ctx.input_id, ctx.prefix);
    if (ctx.mode == TeacherMode::learned_table) {
        if (ref.ema_teacher.empty()) throw Error("learned-table teacher requested but absent");
        const auto ix = ref.indexer();
        if (*ctx.feedback_id < 0 || *ctx.feedback_id >= ref.num_feedback)
            throw Error("feedback id out of range");
        const long long off =
            ((static_cast<long long>(ctx.input_id) * ix.slots() + ix.index(ctx.prefix)) *
                 ref.num_feedback +
             *ctx.feedback_id) *
            ref.vocab_size;
        return softmax(ref.ema_teacher.data() + off, ref.vocab_size);
    }
    return posterior_next_token_under(w, reference_rows(ref), ctx.input_id, ctx.prefix,
                                      *ctx.feedback_id);
}

// Largest deviation between the reference's softmax rows and the world's
// policy table. Identity checks that assume the reference rolls out the world
// assert this is ~0 before trusting their preconditions.
inline double reference_world_divergence(const ReferenceState& ref, const WorldSpec& w) {
    const auto ix = w.indexer();
    double worst = 0.0;
    for (int x = 0; x < w.num_inputs; ++x)
        for (long long s = 0; s < ix.slots(); ++s) {
            const auto row =
                softmax(ref.ema_student.data() + (x * ix.slots() + s) * w.vocab_size, w.vocab_size);
            const double* truth = w.policy_table.data() + (x * ix.slots() + s) * w.vocab_size;
            for (int v = 0; v < w.vocab_size; ++v) worst = std::max(worst, std::abs(row[v] - truth[v]));
        }
    return worst;
}

// Temperature-scaled ancestral sampling plus one feedback draw. Temperatures
// below 1e-6 mean greedy decoding (lowest index wins ties).
template <class RngT>
Trajectory sample_rollout(const PolicyParams& p, const WorldSpec& w, int x, RngT& rng,
                          double temperature = 1.0) {
    if (!(temperature > 0.0)) throw Error("temperature must be positive");
    w.check_input(x);
    const auto ix = p.indexer();
    Trajectory traj;
    traj.input_id = x;
    for (int t = 0; t < w.horizon; ++t) {
        const double* row = p.student_logits.data() + p.student_row_offset(ix, x, traj.tokens);
        int tok;
        if (temperature < 1e-6) {
            tok = 0;
            for (int v = 1; v < p.vocab_size; ++v)
                if (row[v] > row[tok]) tok = v;
        } else {
            std::vector<double> scaled(p.vocab_size);
            for (int v = 0; v < p.vocab_size; ++v) scaled[v] = row[v] / temperature;
            tok = rng.categorical(softmax(scaled.data(), p.vocab_size));
        }
        traj.tokens.push_back(tok);
    }
    const double* ch = w.channel_row(x, encode_response(traj.tokens, w.vocab_size));
    traj.feedback_id = rng.categorical(std::vector<double>(ch, ch + w.num_feedback));
    return traj;
}

}  // namespace credlab
