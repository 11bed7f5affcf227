// Executable identity checks.
//
// Each check computes a left side and a right side through different code
// paths and reports the residual; sweep drivers run a check over every
// in-support context of a world so acceptance can bind the maximum residual,
// not a sample. Expectations over the input prior are exact weighted sums.
//
// Tolerance convention: 1e-12 for algebraic rearrangements of the same
// floating-point quantities, 1e-9 / 1e-10 for quantities that accumulate
// enumeration sums.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "credlab/common.hpp"
#include "credlab/policy.hpp"
#include "credlab/reward.hpp"
#include "credlab/rng.hpp"
#include "credlab/world.hpp"

namespace credlab {

struct CheckReport {
    std::string name;
    std::string world;
    std::string context;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct FamilySummary {
    std::string family;
    long long count = 0;
    double max_abs_residual = 0.0;
    bool all_passed = true;
};

inline std::vector<FamilySummary> summarize_reports(const std::vector<CheckReport>& reports) {
    std::vector<FamilySummary> out;
    for (const auto& r : reports) {
        FamilySummary* s = nullptr;
        for (auto& cand : out)
            if (cand.family == r.name) s = &cand;
        if (!s) {
            out.push_back({r.name, 0, 0.0, true});
            s = &out.back();
        }
        ++s->count;
        s->max_abs_residual = std::max(s->max_abs_residual, std::abs(r.residual));
        s->all_passed = s->all_passed && r.passed;
    }
    return out;
}

// Reference + matching student that reproduce the world's rollout policy
// (decay 1, so teacher and student coincide). The softmax of log-probability
// logits reproduces each row to ~1e-16; checks that require the rolled-out
// policy to equal the reference assert this stays below 1e-9.
struct WorldPolicyBundle {
    PolicyParams params;
    ReferenceState ref;
};

inline WorldPolicyBundle world_bundle(const WorldSpec& w) {
    WorldPolicyBundle b;
    b.params = params_from_world(w);
    b.ref = make_reference(b.params, 1.0);
    if (reference_world_divergence(b.ref, w) > 1e-9)
        throw Error("reference does not reproduce the world policy");
    return b;
}

namespace detail {
// KL(a || b); the floored variant guards b against hard zeros the same way
// reward engines do, the plain variant requires b > 0 on a's support.
inline double kl_floored(const std::vector<double>& a, const std::vector<double>& b) {
    double kl = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > 0.0) kl += a[i] * (std::log(a[i]) - floored_log(b[i]));
    return kl;
}

inline double kl_plain(const std::vector<double>& a, const std::vector<double>& b) {
    double kl = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > 0.0) kl += a[i] * (std::log(a[i]) - std::log(b[i]));
    return kl;
}

template <class Fn>
void for_each_prefix(const WorldSpec& w, Fn&& fn) {
    for (int x = 0; x < w.num_inputs; ++x)
        for (int len = 0; len < w.horizon; ++len) {
            long long level = 1;
            for (int i = 0; i < len; ++i) level *= w.vocab_size;
            for (long long code = 0; code < level; ++code)
                fn(x, decode_response(code, w.vocab_size, len));
        }
}

inline std::string ctx_string(const WorldSpec&, int x, const std::vector<int>& toks, int z) {
    return "x=" + std::to_string(x) + " y=[" + join_ints(toks) + "] z=" + std::to_string(z);
}
}  // namespace detail

// Realized rewards telescope to the response/feedback pointwise mutual
// information. lhs: engine sum. rhs: one-shot log-ratio of channel vs
// marginal, both under the reference's rollout rows.
inline std::vector<CheckReport> sweep_telescoping(const WorldSpec& w, const WorldPolicyBundle& b,
                                                  TeacherMode mode = TeacherMode::exact_posterior,
                                                  double tol = 1e-9) {
    std::vector<CheckReport> out;
    auto rows = reference_rows(b.ref);
    for (int x = 0; x < w.num_inputs; ++x)
        for (long long code = 0; code < w.num_responses(); ++code) {
            const auto y = decode_response(code, w.vocab_size, w.horizon);
            for (int z = 0; z < w.num_feedback; ++z) {
                if (w.channel_row(x, code)[z] <= 0.0) continue;  // unrealizable feedback
                Trajectory traj{x, y, z, {}};
                sd_reward(b.ref, b.params, w, traj, mode);
                double lhs = 0.0;
                for (double r : traj.realized_rewards) lhs += r;
                const double rhs = pmi_under(w, rows, x, y, z);
                CheckReport rep{"telescoping", w.name, detail::ctx_string(w, x, y, z),
                                lhs,           rhs,    lhs - rhs,
                                tol,           false};
                rep.passed = std::abs(rep.residual) <= tol;
                out.push_back(std::move(rep));
            }
        }
    return out;
}

// Fixed observed z: the student-expected reward is -KL(student || posterior),
// the posterior-expected reward is +KL(posterior || student).
inline std::vector<CheckReport> sweep_sign_expectations(const WorldSpec& w,
                                                        const WorldPolicyBundle& b,
                                                        double tol = 1e-10) {
    std::vector<CheckReport> out;
    auto rows = reference_rows(b.ref);
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        const auto marg = feedback_marginal_under(w, rows, x, prefix);
        for (int z = 0; z < w.num_feedback; ++z) {
            if (marg[z] <= 0.0) continue;
            const auto tlog = teacher_log_row(b.ref, w, x, prefix, z, TeacherMode::exact_posterior);
            const auto post = posterior_next_token_under(w, rows, x, prefix, z);
            const auto stud = student_next(b.params, x, prefix);
            double e_prior = 0.0, e_post = 0.0;
            for (int v = 0; v < w.vocab_size; ++v) {
                const double r = tlog[v] - std::log(stud[v]);
                e_prior += stud[v] * r;
                e_post += post[v] * r;
            }
            const std::string ctx = detail::ctx_string(w, x, prefix, z);
            CheckReport prior{"sign-prior", w.name, ctx, e_prior, -detail::kl_floored(stud, post),
                              0.0,          tol,    false};
            prior.residual = prior.lhs - prior.rhs;
            prior.passed = std::abs(prior.residual) <= tol && prior.lhs <= tol;
            out.push_back(std::move(prior));
            CheckReport posterior{"sign-posterior", w.name, ctx, e_post,
                                  detail::kl_plain(post, stud), 0.0, tol, false};
            posterior.residual = posterior.lhs - posterior.rhs;
            posterior.passed = std::abs(posterior.residual) <= tol && posterior.lhs >= -tol;
            out.push_back(std::move(posterior));
        }
    });
    return out;
}

// Expected telescoped reward equals the conditional mutual information
// I(Y; Z | X = x); per-prefix expected reward equals the chain-rule increment
// I(Y_t; Z | x, y_<t).
inline std::vector<CheckReport> sweep_mi_expectation(const WorldSpec& w, const WorldPolicyBundle& b,
                                                     double tol = 1e-9) {
    std::vector<CheckReport> out;
    auto rows = reference_rows(b.ref);
    for (int x = 0; x < w.num_inputs; ++x) {
        const auto responses = enumerate_responses_under(w, rows, x);
        const auto marg = feedback_marginal_under(w, rows, x, {});
        double lhs = 0.0, rhs = 0.0;
        for (long long code = 0; code < w.num_responses(); ++code) {
            const auto& [y, py] = responses[code];
            if (py == 0.0) continue;
            for (int z = 0; z < w.num_feedback; ++z) {
                const double pz = w.channel_row(x, code)[z];
                if (pz <= 0.0) continue;
                Trajectory traj{x, y, z, {}};
                sd_reward(b.ref, b.params, w, traj);
                double sum = 0.0;
                for (double r : traj.realized_rewards) sum += r;
                lhs += py * pz * sum;
                rhs += py * pz * (std::log(pz) - std::log(marg[z]));
            }
        }
        CheckReport rep{"mi-sequence", w.name, "x=" + std::to_string(x), lhs, rhs, lhs - rhs, tol,
                        false};
        rep.passed = std::abs(rep.residual) <= tol;
        out.push_back(std::move(rep));
    }
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        const auto marg = feedback_marginal_under(w, rows, x, prefix);
        const auto stud = student_next(b.params, x, prefix);
        double lhs = 0.0, rhs = 0.0;
        std::vector<int> ext = prefix;
        for (int z = 0; z < w.num_feedback; ++z) {
            if (marg[z] <= 0.0) continue;
            const auto tlog = teacher_log_row(b.ref, w, x, prefix, z, TeacherMode::exact_posterior);
            for (int v = 0; v < w.vocab_size; ++v) {
                ext.push_back(v);
                const double joint = stud[v] * feedback_marginal_under(w, rows, x, ext)[z];
                ext.pop_back();
                if (joint <= 0.0) continue;
                lhs += joint * (tlog[v] - std::log(stud[v]));
                rhs += joint * (std::log(joint) - std::log(stud[v]) - std::log(marg[z]));
            }
        }
        CheckReport rep{"mi-chain", w.name,
                        "x=" + std::to_string(x) + " prefix=[" + join_ints(prefix) + "]",
                        lhs,        rhs,
                        lhs - rhs,  tol,
                        false};
        rep.passed = std::abs(rep.residual) <= tol;
        out.push_back(std::move(rep));
    });
    return out;
}

// Expected sampled contrast dominates the prior-contrastive value:
// E[log-prob difference] >= log of the probability-ratio with the expectation
// inside. One-sided; residual is the slack.
inline std::vector<CheckReport> sweep_jensen(const WorldSpec& w, const WorldPolicyBundle& b,
                                             TeacherMode mode = TeacherMode::exact_posterior,
                                             double tol = 1e-12) {
    std::vector<CheckReport> out;
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        for (int z = 0; z < w.num_feedback; ++z)
            for (int v = 0; v < w.vocab_size; ++v) {
                double lhs, rhs;
                try {
                    lhs = decompose_S_G(b.ref, w, x, prefix, z, v, mode).first;
                    rhs = pcmi(b.ref, w, x, prefix, z, v, mode);
                } catch (const NullEventError&) {
                    continue;  // feedback unreachable under some prior input
                }
                CheckReport rep{"jensen", w.name,
                                detail::ctx_string(w, x, prefix, z) + " v=" + std::to_string(v),
                                lhs,      rhs,
                                lhs - rhs, tol,
                                false};
                rep.passed = rep.residual >= -tol;
                out.push_back(std::move(rep));
            }
    });
    return out;
}

// Per-candidate reconstruction of the raw reward from its split parts:
//   r(v) = S(v) + G(v) - log student(v)
// where S is the input-specific and G the input-generic teacher component.
inline std::vector<CheckReport> sweep_decomposition(const WorldSpec& w, const WorldPolicyBundle& b,
                                                    TeacherMode mode = TeacherMode::exact_posterior,
                                                    double tol = 1e-12) {
    std::vector<CheckReport> out;
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        for (int z = 0; z < w.num_feedback; ++z) {
            double worst = 0.0;
            try {
                const auto tlog = teacher_log_row(b.ref, w, x, prefix, z, mode);
                const auto stud = student_next(b.params, x, prefix);
                for (int v = 0; v < w.vocab_size; ++v) {
                    const double r = tlog[v] - std::log(stud[v]);
                    const auto [sv, gv] = decompose_S_G(b.ref, w, x, prefix, z, v, mode);
                    worst = std::max(worst, std::abs(r - (sv + gv - std::log(stud[v]))));
                }
            } catch (const NullEventError&) {
                continue;  // feedback unreachable under some prior input
            }
            CheckReport rep{"s-plus-g", w.name, detail::ctx_string(w, x, prefix, z),
                            worst,      0.0,    worst,
                            tol,        false};
            rep.passed = worst <= tol;
            out.push_back(std::move(rep));
        }
    });
    return out;
}

// Telescoped reward with the exact-prior generic baseline:
//   sum_t R_t(y_t) = pmi(x) - lambda E[pmi(x')] + lambda E[-log pi(y | x')],
// and the last term (the anti-genericity bonus) is nonnegative.
inline std::vector<CheckReport> sweep_credit_sequence(const WorldSpec& w, const WorldPolicyBundle& b,
                                                      double lambda, double tol = 1e-9) {
    std::vector<CheckReport> out;
    auto rows = reference_rows(b.ref);
    for (int x = 0; x < w.num_inputs; ++x)
        for (long long code = 0; code < w.num_responses(); ++code) {
            const auto y = decode_response(code, w.vocab_size, w.horizon);
            for (int z = 0; z < w.num_feedback; ++z) {
                if (w.channel_row(x, code)[z] <= 0.0) continue;
                double rhs, bonus;
                try {
                    rhs = pmi_under(w, rows, x, y, z);
                    bonus = 0.0;
                    for (int xp = 0; xp < w.num_inputs; ++xp) {
                        if (w.input_prior[xp] == 0.0) continue;
                        double logpy = 0.0;
                        std::vector<int> prefix;
                        for (int t = 0; t < w.horizon; ++t) {
                            logpy += std::log(rows(xp, prefix)[y[t]]);
                            prefix.push_back(y[t]);
                        }
                        rhs -= lambda * w.input_prior[xp] * pmi_under(w, rows, xp, y, z);
                        bonus += lambda * w.input_prior[xp] * (-logpy);
                    }
                    rhs += bonus;
                } catch (const NullEventError&) {
                    continue;  // some prior input cannot produce this feedback
                }
                Trajectory traj{x, y, z, {}};
                credit_reward_exact(b.ref, b.params, w, traj, lambda);
                double lhs = 0.0;
                for (double r : traj.realized_rewards) lhs += r;
                CheckReport rep{"credit-seq", w.name,
                                detail::ctx_string(w, x, y, z) + " lambda=" + fmt_g17(lambda),
                                lhs,          rhs,
                                lhs - rhs,    tol,
                                false};
                rep.passed = std::abs(rep.residual) <= tol && bonus >= -tol;
                out.push_back(std::move(rep));
            }
        }
    return out;
}

// When the reference lags the student, the reward splits into a reference-
// internal log-ratio plus a reference/student mismatch term, and the mismatch
// is bounded by the larger one-sided max-log-ratio divergence of the
// unconditioned rows.
inline std::vector<CheckReport> sweep_gap_decomposition(const WorldSpec& w,
                                                        const PolicyParams& params,
                                                        const ReferenceState& ref,
                                                        double tol = 1e-12) {
    std::vector<CheckReport> out;
    auto rows = reference_rows(ref);
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        const auto marg = feedback_marginal_under(w, rows, x, prefix);
        const auto ref_row = reference_student_row(ref, x, prefix);
        const auto stud = student_next(params, x, prefix);
        double dinf_fwd = -1e300, dinf_bwd = -1e300;  // max log(ref/stud), max log(stud/ref)
        for (int v = 0; v < w.vocab_size; ++v) {
            const double d = std::log(ref_row[v]) - std::log(stud[v]);
            dinf_fwd = std::max(dinf_fwd, d);
            dinf_bwd = std::max(dinf_bwd, -d);
        }
        const double bound = std::max(dinf_fwd, dinf_bwd);
        for (int z = 0; z < w.num_feedback; ++z) {
            if (marg[z] <= 0.0) continue;
            const auto tlog = teacher_log_row(ref, w, x, prefix, z, TeacherMode::exact_posterior);
            double worst_add = 0.0, worst_ii = 0.0;
            for (int v = 0; v < w.vocab_size; ++v) {
                const double r = tlog[v] - std::log(stud[v]);
                const double term_i = tlog[v] - std::log(ref_row[v]);
                const double term_ii = std::log(ref_row[v]) - std::log(stud[v]);
                worst_add = std::max(worst_add, std::abs(r - term_i - term_ii));
                worst_ii = std::max(worst_ii, std::abs(term_ii));
            }
            const std::string ctx = detail::ctx_string(w, x, prefix, z);
            CheckReport add{"gap-additivity", w.name, ctx, worst_add, 0.0, worst_add, tol, false};
            add.passed = worst_add <= tol;
            out.push_back(std::move(add));
            CheckReport bnd{"gap-bound", w.name, ctx, worst_ii, bound, worst_ii - bound, tol, false};
            bnd.passed = bnd.residual <= tol;
            out.push_back(std::move(bnd));
        }
    });
    return out;
}

// Standard lagged-reference setup for the gap sweep: student perturbed away
// from the world policy, reference tracking it with the given rate for the
// given number of updates.
inline std::vector<CheckReport> sweep_gap_after_ema(const WorldSpec& w, double ema_rate,
                                                    int updates, std::uint64_t perturb_seed = 13,
                                                    double tol = 1e-12) {
    PolicyParams params = params_from_world(w);
    Rng rng(perturb_seed);
    auto stream = rng.split("logit-perturbation");
    for (auto& l : params.student_logits) l += stream.uniform() - 0.5;
    ReferenceState ref = make_reference(params_from_world(w), ema_rate);
    for (int i = 0; i < updates; ++i) ema_update(ref, params);
    return sweep_gap_decomposition(w, params, ref, tol);
}

// The prior-weighted average of single-contrast baselines over all admissible
// contrastive inputs equals the exact leave-one-out generic component.
inline std::vector<CheckReport> sweep_g_estimator(const WorldSpec& w, const WorldPolicyBundle& b,
                                                  TeacherMode mode = TeacherMode::exact_posterior,
                                                  double tol = 1e-12) {
    if (w.num_inputs < 2) throw Error("estimator check needs at least two inputs");
    std::vector<CheckReport> out;
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        double total = 0.0;
        for (int xp = 0; xp < w.num_inputs; ++xp)
            if (xp != x) total += w.input_prior[xp];
        if (total <= 0.0) return;
        for (int z = 0; z < w.num_feedback; ++z) {
            std::vector<double> mean(w.vocab_size, 0.0), exact;
            try {
                for (int xp = 0; xp < w.num_inputs; ++xp) {
                    if (xp == x || w.input_prior[xp] == 0.0) continue;
                    const auto ghat = generic_baseline(b.ref, w, {xp}, x, prefix, z, mode);
                    for (int v = 0; v < w.vocab_size; ++v)
                        mean[v] += w.input_prior[xp] / total * ghat[v];
                }
                exact = exact_restricted_baseline(b.ref, w, x, prefix, z, mode);
            } catch (const NullEventError&) {
                continue;
            }
            double worst = 0.0;
            for (int v = 0; v < w.vocab_size; ++v)
                worst = std::max(worst, std::abs(mean[v] - exact[v]));
            CheckReport rep{"g-unbiased", w.name, detail::ctx_string(w, x, prefix, z),
                            worst,        0.0,    worst,
                            tol,          false};
            rep.passed = worst <= tol;
            out.push_back(std::move(rep));
        }
    });
    return out;
}

}  // namespace credlab
