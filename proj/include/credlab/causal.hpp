// Interventional token scores and outcome-supported-feedback diagnostics.
//
// In worlds with a ground-truth outcome map, the counterfactual score of a
// candidate token is the log-lift in success probability from committing to
// it:  r_cf(v) = log P(O=1 | h, do(v)) - log P(O=1 | h).  Forcing a token in
// these worlds is the same operation as conditioning on it, since nothing
// upstream of the response depends on the choice.
//
// A feedback channel that depends on the trajectory only through the outcome
// bit ("outcome-supported") makes every channel marginal an affine function
// of the success probability, which yields three testable facts:
//   - the affine identity P(z | h.v) = q0[z] + (q1[z]-q0[z]) p(v;h),
//   - rank preservation of filtering scores vs counterfactual scores when
//     q1[z] > q0[z],
//   - exact equality (not just rank) when additionally q0[z] = 0.
// The filtering/counterfactual gap equals a difference of two pointwise
// log-lifts, checked here as well.
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "credlab/common.hpp"
#include "credlab/identities.hpp"
#include "credlab/policy.hpp"
#include "credlab/world.hpp"

namespace credlab {

// Feedback law of an outcome-supported channel: emission row per outcome bit.
struct OSFChannel {
    std::vector<double> q1;  // P(z | O=1)
    std::vector<double> q0;  // P(z | O=0)
};

inline void check_channel(const OSFChannel& ch) {
    if (ch.q1.size() != ch.q0.size() || ch.q1.empty())
        throw Error("osf channel: emission rows must be nonempty and equal length");
    for (const auto* row : {&ch.q1, &ch.q0}) {
        double sum = 0.0;
        for (double p : *row) {
            if (p < 0.0 || p > 1.0) throw Error("osf channel: entry outside [0,1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw Error("osf channel: row does not sum to 1");
    }
}

// The binary verifier viewed as an outcome-supported channel (z == O).
inline OSFChannel identity_channel() { return OSFChannel{{0.0, 1.0}, {1.0, 0.0}}; }

// Rebuild the world's feedback channel as z ~ q_{O(x,y)}. Policy, prior and
// outcome map are untouched.
inline WorldSpec attach_osf_feedback(const WorldSpec& base, const OSFChannel& ch) {
    check_channel(ch);
    if (!base.has_outcomes()) throw Error("attach_osf_feedback: world has no outcome map");
    WorldSpec w = base;
    w.name = base.name + "+osf";
    w.num_feedback = static_cast<int>(ch.q1.size());
    const int R = w.num_responses();
    w.feedback_channel.assign(static_cast<std::size_t>(w.num_inputs) * R * w.num_feedback, 0.0);
    for (int x = 0; x < w.num_inputs; ++x)
        for (int r = 0; r < R; ++r) {
            const auto& q = base.outcome(x, r) > 0.5 ? ch.q1 : ch.q0;
            for (int z = 0; z < w.num_feedback; ++z)
                w.feedback_channel[(static_cast<std::size_t>(x) * R + r) * w.num_feedback + z] =
                    q[z];
        }
    w.binary_verifier = false;
    w.success_feedback = -1;
    return w;
}

// P(O=1 | x, prefix, do(candidate)): commit to the candidate and marginalize
// the remaining continuations under the world policy.
inline double success_prob_do(const WorldSpec& w, int x, const std::vector<int>& prefix,
                              int candidate) {
    auto extended = prefix;
    extended.push_back(candidate);
    return success_probability(w, x, extended);
}

// Counterfactual log-lift of one candidate. Zero-probability lifts come back
// as -inf (no flooring -- downstream comparisons want the honest value).
// Contexts that cannot succeed at all have no defined score.
inline double rcf(const WorldSpec& w, int x, const std::vector<int>& prefix, int candidate) {
    const double base = success_probability(w, x, prefix);
    if (base <= 0.0) throw NullEventError("counterfactual score at a context with P(O=1) = 0");
    return std::log(success_prob_do(w, x, prefix, candidate)) - std::log(base);
}

inline std::vector<double> rcf_vector(const WorldSpec& w, int x, const std::vector<int>& prefix) {
    std::vector<double> out(w.vocab_size);
    for (int v = 0; v < w.vocab_size; ++v) out[v] = rcf(w, x, prefix, v);
    return out;
}

// Success-filtered policy pi+(v|h) = pi(v|h) p(v;h) / P(O=1|h).
inline std::vector<double> success_teacher(const WorldSpec& w, int x,
                                           const std::vector<int>& prefix) {
    const double base = success_probability(w, x, prefix);
    if (base <= 0.0) throw NullEventError("success teacher at a context with P(O=1) = 0");
    const auto ix = w.indexer();
    const double* row = w.policy_row(ix, x, prefix);
    std::vector<double> out(w.vocab_size, 0.0);
    for (int v = 0; v < w.vocab_size; ++v) {
        if (row[v] <= 0.0) continue;
        out[v] = row[v] * success_prob_do(w, x, prefix, v) / base;
    }
    return out;
}

// Filtering score under feedback z: log-lift of the channel marginal,
// computed through the posterior path (log posterior - log policy) so it is
// bit-compatible with the reward engines. -inf where the posterior dies.
inline std::vector<double> rz_vector(const WorldSpec& w, int x, const std::vector<int>& prefix,
                                     int z) {
    const auto post = posterior_next_token(w, x, prefix, z);
    const auto ix = w.indexer();
    const double* row = w.policy_row(ix, x, prefix);
    std::vector<double> out(w.vocab_size, -std::numeric_limits<double>::infinity());
    for (int v = 0; v < w.vocab_size; ++v)
        if (row[v] > 0.0 && post[v] > 0.0) out[v] = std::log(post[v]) - std::log(row[v]);
    return out;
}

enum class CheckStatus { pass, fail, precondition_not_met };

inline const char* check_status_name(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        default: return "precondition-not-met";
    }
}

struct CausalReport {
    std::string family;
    std::string world;
    std::string context;
    CheckStatus status = CheckStatus::pass;
    double value = 0.0;      // max residual, or disagreement count for ranks
    double tolerance = 0.0;  // 0 when the check is not a numeric comparison
};

namespace detail {
inline std::string causal_ctx(int x, const std::vector<int>& prefix) {
    return "x=" + std::to_string(x) + " h=[" + join_ints(prefix) + "]";
}
}  // namespace detail

// max_v,z | P(z | h.v) - (q0[z] + (q1[z]-q0[z]) p(v;h)) | at one context.
inline CausalReport check_affine_identity(const WorldSpec& base, const OSFChannel& ch,
                                          const WorldSpec& osf, int x,
                                          const std::vector<int>& prefix, double tol = 1e-12) {
    CausalReport rep{"affine-identity", osf.name, detail::causal_ctx(x, prefix),
                     CheckStatus::pass, 0.0, tol};
    for (int v = 0; v < base.vocab_size; ++v) {
        auto ext = prefix;
        ext.push_back(v);
        const auto marg = feedback_marginal(osf, x, ext);
        const double p = success_probability(base, x, ext);
        for (int z = 0; z < osf.num_feedback; ++z) {
            const double predicted = ch.q0[z] + (ch.q1[z] - ch.q0[z]) * p;
            rep.value = std::max(rep.value, std::abs(marg[z] - predicted));
        }
    }
    rep.status = rep.value <= tol ? CheckStatus::pass : CheckStatus::fail;
    return rep;
}

namespace detail {

// Three-way comparison with a tie band; -inf compares below any finite value
// and ties with itself.
inline int cmp3(double a, double b, double band) {
    const bool ia = std::isinf(a) && a < 0.0, ib = std::isinf(b) && b < 0.0;
    if (ia && ib) return 0;
    if (ia) return -1;
    if (ib) return 1;
    if (std::abs(a - b) <= band) return 0;
    return a < b ? -1 : 1;
}

}  // namespace detail

// Ordering agreement between filtering and counterfactual scores at one
// (context, feedback). Requires q1[z] > q0[z] and a reachable outcome; pairs
// tied within the band on either side are not counted.
inline CausalReport check_rank_preservation(const WorldSpec& base, const OSFChannel& ch,
                                            const WorldSpec& osf, int x,
                                            const std::vector<int>& prefix, int z,
                                            double tie_band = 1e-12) {
    CausalReport rep{"rank-preservation", osf.name,
                     detail::causal_ctx(x, prefix) + " z=" + std::to_string(z), CheckStatus::pass,
                     0.0, 0.0};
    if (ch.q1[z] <= ch.q0[z] || success_probability(base, x, prefix) <= 0.0) {
        rep.status = CheckStatus::precondition_not_met;
        return rep;
    }
    const auto marg = feedback_marginal(osf, x, prefix);
    if (marg[z] <= 0.0) {
        rep.status = CheckStatus::precondition_not_met;
        return rep;
    }
    const auto rz = rz_vector(osf, x, prefix, z);
    const auto rc = rcf_vector(base, x, prefix);
    const auto ix = base.indexer();
    const double* row = base.policy_row(ix, x, prefix);
    std::vector<int> support;
    for (int v = 0; v < base.vocab_size; ++v)
        if (row[v] > 0.0) support.push_back(v);
    int disagreements = 0;
    for (std::size_t i = 0; i < support.size(); ++i)
        for (std::size_t j = i + 1; j < support.size(); ++j) {
            const int a = detail::cmp3(rz[support[i]], rz[support[j]], tie_band);
            const int b = detail::cmp3(rc[support[i]], rc[support[j]], tie_band);
            if (a * b == -1) ++disagreements;
        }
    rep.value = static_cast<double>(disagreements);
    rep.status = disagreements == 0 ? CheckStatus::pass : CheckStatus::fail;
    return rep;
}

// With q0[z] = 0 the filtering score collapses onto the counterfactual score
// exactly. Verifies max |r_z - r_cf| over candidates that can succeed, and
// that the two scores share one zero set.
inline CausalReport check_one_sided_witness(const WorldSpec& base, const OSFChannel& ch, int x,
                                            const std::vector<int>& prefix, int z,
                                            double tol = 1e-10) {
    const WorldSpec osf = attach_osf_feedback(base, ch);
    CausalReport rep{"one-sided-witness", base.name,
                     detail::causal_ctx(x, prefix) + " z=" + std::to_string(z), CheckStatus::pass,
                     0.0, tol};
    if (ch.q0[z] != 0.0 || ch.q1[z] <= 0.0 || success_probability(base, x, prefix) <= 0.0) {
        rep.status = CheckStatus::precondition_not_met;
        return rep;
    }
    const auto rz = rz_vector(osf, x, prefix, z);
    const auto rc = rcf_vector(base, x, prefix);
    const auto ix = base.indexer();
    const double* row = base.policy_row(ix, x, prefix);
    for (int v = 0; v < base.vocab_size; ++v) {
        if (row[v] <= 0.0) continue;
        const bool dead_z = std::isinf(rz[v]), dead_c = std::isinf(rc[v]);
        if (dead_z != dead_c) {
            rep.status = CheckStatus::fail;
            rep.value = std::numeric_limits<double>::infinity();
            return rep;
        }
        if (!dead_z) rep.value = std::max(rep.value, std::abs(rz[v] - rc[v]));
    }
    rep.status = rep.value <= tol ? CheckStatus::pass : CheckStatus::fail;
    return rep;
}

// The filtering-vs-counterfactual gap equals the difference of two log-lifts:
//   r_z(v) - r_cf(v) = [log P(z|h.v) - log P(z|h)] - [log p(v;h) - log P(O=1|h)].
// Left side via the posterior path, right side via channel marginals.
inline CausalReport check_gap_identity(const WorldSpec& base, const WorldSpec& osf, int x,
                                       const std::vector<int>& prefix, int z, double tol = 1e-12) {
    CausalReport rep{"gap-identity", osf.name,
                     detail::causal_ctx(x, prefix) + " z=" + std::to_string(z), CheckStatus::pass,
                     0.0, tol};
    const double psucc = success_probability(base, x, prefix);
    const auto marg = feedback_marginal(osf, x, prefix);
    if (psucc <= 0.0 || marg[z] <= 0.0) {
        rep.status = CheckStatus::precondition_not_met;
        return rep;
    }
    const auto rz = rz_vector(osf, x, prefix, z);
    const auto ix = base.indexer();
    const double* row = base.policy_row(ix, x, prefix);
    for (int v = 0; v < base.vocab_size; ++v) {
        if (row[v] <= 0.0) continue;
        const double p = success_prob_do(base, x, prefix, v);
        auto ext = prefix;
        ext.push_back(v);
        const auto marg_ext = feedback_marginal(osf, x, ext);
        if (p <= 0.0 || marg_ext[z] <= 0.0) continue;  // both lifts must be finite
        const double lhs = rz[v] - (std::log(p) - std::log(psucc));
        const double rhs = (std::log(marg_ext[z]) - std::log(marg[z])) -
                           (std::log(p) - std::log(psucc));
        rep.value = std::max(rep.value, std::abs(lhs - rhs));
    }
    rep.status = rep.value <= tol ? CheckStatus::pass : CheckStatus::fail;
    return rep;
}

// --- world sweeps -----------------------------------------------------------

inline std::vector<CausalReport> sweep_affine(const WorldSpec& base, const OSFChannel& ch,
                                              double tol = 1e-12) {
    const WorldSpec osf = attach_osf_feedback(base, ch);
    std::vector<CausalReport> out;
    detail::for_each_prefix(base, [&](int x, const std::vector<int>& prefix) {
        out.push_back(check_affine_identity(base, ch, osf, x, prefix, tol));
    });
    return out;
}

inline std::vector<CausalReport> sweep_rank(const WorldSpec& base, const OSFChannel& ch,
                                            double tie_band = 1e-12) {
    const WorldSpec osf = attach_osf_feedback(base, ch);
    std::vector<CausalReport> out;
    detail::for_each_prefix(base, [&](int x, const std::vector<int>& prefix) {
        for (int z = 0; z < osf.num_feedback; ++z)
            out.push_back(check_rank_preservation(base, ch, osf, x, prefix, z, tie_band));
    });
    return out;
}

inline std::vector<CausalReport> sweep_witness(const WorldSpec& base, const OSFChannel& ch, int z,
                                               double tol = 1e-10) {
    std::vector<CausalReport> out;
    detail::for_each_prefix(base, [&](int x, const std::vector<int>& prefix) {
        out.push_back(check_one_sided_witness(base, ch, x, prefix, z, tol));
    });
    return out;
}

inline std::vector<CausalReport> sweep_gap_identity(const WorldSpec& base, const OSFChannel& ch,
                                                    double tol = 1e-12) {
    const WorldSpec osf = attach_osf_feedback(base, ch);
    std::vector<CausalReport> out;
    detail::for_each_prefix(base, [&](int x, const std::vector<int>& prefix) {
        for (int z = 0; z < osf.num_feedback; ++z)
            out.push_back(check_gap_identity(base, osf, x, prefix, z, tol));
    });
    return out;
}

}  // namespace credlab
