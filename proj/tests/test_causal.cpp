#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "credlab/builtin_worlds.hpp"
#include "credlab/causal.hpp"
#include "support/oracles.hpp"

using namespace credlab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// w-rand-1 with an outcome attached: success iff the first token hits x mod 3
// or the second token hits (x+1) mod 3. Every context keeps 0 < P(O=1) < 1.
WorldSpec outcome_world() {
    WorldSpec w = make_w_rand(1);
    w.outcome_map.assign(w.num_inputs * w.num_responses(), 0);
    for (int x = 0; x < w.num_inputs; ++x)
        for (long long r = 0; r < w.num_responses(); ++r) {
            const auto y = decode_response(r, w.vocab_size, w.horizon);
            w.outcome_map[x * w.num_responses() + r] =
                (y[0] == x % 3 || y[1] == (x + 1) % 3) ? 1 : 0;
        }
    return w;
}

void require_all(const std::vector<CausalReport>& reports, CheckStatus allow_skip_or_pass) {
    REQUIRE_FALSE(reports.empty());
    for (const auto& r : reports) {
        CAPTURE(r.family, r.context, r.value, check_status_name(r.status));
        REQUIRE((r.status == CheckStatus::pass || r.status == allow_skip_or_pass));
    }
}

int count_status(const std::vector<CausalReport>& reports, CheckStatus s) {
    int n = 0;
    for (const auto& r : reports) n += r.status == s;
    return n;
}

}  // namespace

TEST_CASE("emission channels are validated") {
    REQUIRE_NOTHROW(check_channel(identity_channel()));
    REQUIRE_NOTHROW(check_channel(OSFChannel{{0.2, 0.8}, {0.7, 0.3}}));
    REQUIRE_THROWS_AS(check_channel(OSFChannel{{1.0}, {0.5, 0.5}}), Error);
    REQUIRE_THROWS_AS(check_channel(OSFChannel{{0.6, 0.6}, {0.5, 0.5}}), Error);
    REQUIRE_THROWS_AS(check_channel(OSFChannel{{-0.1, 1.1}, {0.5, 0.5}}), Error);
}

TEST_CASE("attaching an outcome-supported channel rewrites only the feedback law") {
    const auto base = make_w_verify();
    const auto noisy = attach_osf_feedback(base, OSFChannel{{0.2, 0.8}, {0.7, 0.3}});
    REQUIRE(noisy.name == "w-verify+osf");
    REQUIRE(noisy.policy_table == base.policy_table);
    REQUIRE(noisy.outcome_map == base.outcome_map);
    REQUIRE_FALSE(noisy.binary_verifier);
    for (int x = 0; x < base.num_inputs; ++x)
        for (long long r = 0; r < base.num_responses(); ++r) {
            const double want1 = base.outcome(x, r) ? 0.8 : 0.3;
            REQUIRE(noisy.channel_row(x, r)[1] == want1);
        }
    REQUIRE(validate_world(noisy).empty());

    // The identity emission reproduces the verifier channel bit for bit.
    const auto ident = attach_osf_feedback(base, identity_channel());
    REQUIRE(ident.feedback_channel == base.feedback_channel);

    REQUIRE_THROWS_AS(attach_osf_feedback(make_w_ind(), identity_channel()), Error);
}

TEST_CASE("committing to a token is conditioning on it in these worlds") {
    const auto w = outcome_world();
    for (int x = 0; x < w.num_inputs; ++x)
        for (int v = 0; v < w.vocab_size; ++v) {
            const double lib = success_prob_do(w, x, {}, v);
            const double flat = static_cast<double>(oracle::success_prob(w, x, {v}));
            REQUIRE(std::abs(lib - flat) < 1e-12);
        }
}

TEST_CASE("counterfactual scores are log-lifts with honest minus infinities") {
    const auto w = make_w_verify();
    // x = 0, root: only token 0 keeps the target (0,0) reachable.
    const auto rc = rcf_vector(w, 0, {});
    REQUIRE(std::abs(rc[0] - (std::log(0.55) - std::log(0.33))) < 1e-12);
    REQUIRE(rc[1] == -kInf);
    // Context that can no longer succeed has no defined score.
    REQUIRE_THROWS_AS(rcf(w, 0, {1}, 0), NullEventError);

    const auto ow = outcome_world();
    for (int x = 0; x < ow.num_inputs; ++x) {
        const double base = static_cast<double>(oracle::success_prob(ow, x, {}));
        for (int v = 0; v < ow.vocab_size; ++v) {
            const double want =
                std::log(static_cast<double>(oracle::success_prob(ow, x, {v}))) - std::log(base);
            REQUIRE(std::abs(rcf(ow, x, {}, v) - want) < 1e-10);
        }
    }
}

TEST_CASE("success-filtered policy is the identity-channel posterior") {
    const auto base = outcome_world();
    const auto osf = attach_osf_feedback(base, identity_channel());
    for (int x = 0; x < base.num_inputs; ++x) {
        const auto plus = success_teacher(base, x, {});
        const auto post = posterior_next_token(osf, x, {}, 1);
        double sum = 0.0;
        for (int v = 0; v < base.vocab_size; ++v) {
            REQUIRE(std::abs(plus[v] - post[v]) < 1e-12);
            sum += plus[v];
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
    REQUIRE_THROWS_AS(success_teacher(make_w_verify(), 0, {1}), NullEventError);
}

TEST_CASE("filtering scores follow the posterior-over-policy ratio") {
    const auto w = make_w_verify();
    const auto rz = rz_vector(w, 0, {}, 1);
    const auto ix = w.indexer();
    const double* row = w.policy_row(ix, 0, {});
    for (int v = 0; v < w.vocab_size; ++v) {
        const double post = static_cast<double>(oracle::posterior_next(w, 0, {}, 1, v));
        if (post > 0.0)
            REQUIRE(std::abs(rz[v] - (std::log(post) - std::log(row[v]))) < 1e-12);
        else
            REQUIRE(rz[v] == -kInf);
    }
}

TEST_CASE("three-way comparison treats minus infinity as a value") {
    REQUIRE(detail::cmp3(-kInf, -kInf, 1e-12) == 0);
    REQUIRE(detail::cmp3(-kInf, -5.0, 1e-12) == -1);
    REQUIRE(detail::cmp3(3.0, -kInf, 1e-12) == 1);
    REQUIRE(detail::cmp3(1.0, 1.0 + 1e-13, 1e-12) == 0);
    REQUIRE(detail::cmp3(1.0, 2.0, 1e-12) == -1);
}

TEST_CASE("channel marginals are affine in the success probability") {
    for (const auto& ch : {identity_channel(), OSFChannel{{0.2, 0.8}, {0.7, 0.3}},
                           OSFChannel{{0.3, 0.7}, {1.0, 0.0}}}) {
        const auto reports = sweep_affine(make_w_verify(), ch);
        require_all(reports, CheckStatus::pass);
        REQUIRE(reports.size() == 6);  // 2 inputs x (1 root + 2 length-1 prefixes)
    }
    require_all(sweep_affine(outcome_world(), OSFChannel{{0.2, 0.8}, {0.7, 0.3}}),
                CheckStatus::pass);
}

TEST_CASE("a channel that peeks past the outcome bit breaks the affine identity") {
    const auto base = make_w_verify();
    const auto ch = identity_channel();
    auto osf = attach_osf_feedback(base, ch);
    // Leak: one response emits feedback by its first token, not its outcome.
    const long long leak = encode_response({1, 0}, 2);
    osf.feedback_channel[(0 * osf.num_responses() + leak) * 2 + 0] = 0.1;
    osf.feedback_channel[(0 * osf.num_responses() + leak) * 2 + 1] = 0.9;
    bool any_failed = false;
    detail::for_each_prefix(base, [&](int x, const std::vector<int>& prefix) {
        const auto rep = check_affine_identity(base, ch, osf, x, prefix);
        any_failed = any_failed || rep.status == CheckStatus::fail;
    });
    REQUIRE(any_failed);
}

TEST_CASE("informative feedback preserves the counterfactual ranking") {
    for (const std::string which : {"identity", "noisy", "one-sided"}) {
        const OSFChannel ch = which == "identity" ? identity_channel()
                              : which == "noisy"  ? OSFChannel{{0.2, 0.8}, {0.7, 0.3}}
                                                  : OSFChannel{{0.3, 0.7}, {1.0, 0.0}};
        CAPTURE(which);
        require_all(sweep_rank(make_w_verify(), ch), CheckStatus::precondition_not_met);
        require_all(sweep_rank(outcome_world(), ch), CheckStatus::precondition_not_met);
    }
}

TEST_CASE("rank preconditions are reported, not silently passed") {
    // For z = 0 the noisy channel is anti-informative (q1 < q0): every report
    // for that feedback must be a precondition skip.
    const auto reports = sweep_rank(make_w_verify(), OSFChannel{{0.2, 0.8}, {0.7, 0.3}});
    int skips = 0, passes = 0;
    for (const auto& r : reports) {
        const bool z0 = r.context.find("z=0") != std::string::npos;
        if (z0) REQUIRE(r.status == CheckStatus::precondition_not_met);
        skips += r.status == CheckStatus::precondition_not_met;
        passes += r.status == CheckStatus::pass;
    }
    REQUIRE(skips >= 6);
    REQUIRE(passes > 0);
}

TEST_CASE("a leaky channel reverses ranks and the check reports it") {
    const auto base = make_w_verify();
    const auto ch = identity_channel();
    auto osf = attach_osf_feedback(base, ch);
    // x = 0: reward feedback 1 for the failing response (1,0) and feedback 0
    // for the true target (0,0).
    const long long good = encode_response({0, 0}, 2), bad = encode_response({1, 0}, 2);
    auto set_row = [&](long long r, double z1) {
        osf.feedback_channel[(0 * osf.num_responses() + r) * 2 + 0] = 1.0 - z1;
        osf.feedback_channel[(0 * osf.num_responses() + r) * 2 + 1] = z1;
    };
    set_row(good, 0.0);
    set_row(bad, 1.0);
    const auto rep = check_rank_preservation(base, ch, osf, 0, {}, 1);
    REQUIRE(rep.status == CheckStatus::fail);
    REQUIRE(rep.value >= 1.0);
}

TEST_CASE("zero-false-positive feedback equals the counterfactual score exactly") {
    const auto base = make_w_verify();
    for (const auto& ch : {identity_channel(), OSFChannel{{0.3, 0.7}, {1.0, 0.0}}}) {
        const auto reports = sweep_witness(base, ch, 1);
        require_all(reports, CheckStatus::precondition_not_met);
        REQUIRE(count_status(reports, CheckStatus::pass) == 4);  // alive contexts
        REQUIRE(count_status(reports, CheckStatus::precondition_not_met) == 2);
    }
    require_all(sweep_witness(outcome_world(), identity_channel(), 1),
                CheckStatus::precondition_not_met);
}

TEST_CASE("a nonzero false-positive rate is a precondition miss for the witness") {
    const auto reports = sweep_witness(make_w_verify(), OSFChannel{{0.2, 0.8}, {0.7, 0.3}}, 1);
    for (const auto& r : reports) REQUIRE(r.status == CheckStatus::precondition_not_met);
}

TEST_CASE("score gap equals the difference of the two log-lifts") {
    for (const auto& ch : {identity_channel(), OSFChannel{{0.2, 0.8}, {0.7, 0.3}}}) {
        require_all(sweep_gap_identity(make_w_verify(), ch), CheckStatus::precondition_not_met);
        require_all(sweep_gap_identity(outcome_world(), ch), CheckStatus::precondition_not_met);
    }
    // The noisy channel keeps every context and feedback alive on the random
    // outcome world, so nothing may be skipped there.
    const auto alive = sweep_gap_identity(outcome_world(), OSFChannel{{0.2, 0.8}, {0.7, 0.3}});
    REQUIRE(count_status(alive, CheckStatus::precondition_not_met) == 0);
}
