// Canonical fixture worlds used by tests, examples, and the CLI.
#pragma once

#include <string>
#include <vector>

#include "credlab/rng.hpp"
#include "credlab/world.hpp"

namespace credlab {

namespace detail {
inline void set_policy_row(WorldSpec& w, const PrefixIndexer& ix, int x,
                           const std::vector<int>& prefix, std::initializer_list<double> row) {
    double* dst = w.policy_table.data() + (x * ix.slots() + ix.index(prefix)) * w.vocab_size;
    int i = 0;
    for (double p : row) dst[i++] = p;
}
}  // namespace detail

// Feedback independent of both input and response: every identity involving
// information content degenerates to zero.
inline WorldSpec make_w_ind() {
    WorldSpec w;
    w.name = "w-ind";
    w.num_inputs = 2;
    w.vocab_size = 3;
    w.horizon = 2;
    w.num_feedback = 2;
    w.input_prior = {0.6, 0.4};
    const auto ix = w.indexer();
    w.policy_table.assign(w.num_inputs * ix.slots() * w.vocab_size, 0.0);
    detail::set_policy_row(w, ix, 0, {}, {0.5, 0.3, 0.2});
    detail::set_policy_row(w, ix, 0, {0}, {0.6, 0.3, 0.1});
    detail::set_policy_row(w, ix, 0, {1}, {0.2, 0.5, 0.3});
    detail::set_policy_row(w, ix, 0, {2}, {0.3, 0.3, 0.4});
    detail::set_policy_row(w, ix, 1, {}, {0.2, 0.45, 0.35});
    detail::set_policy_row(w, ix, 1, {0}, {0.4, 0.4, 0.2});
    detail::set_policy_row(w, ix, 1, {1}, {0.25, 0.25, 0.5});
    detail::set_policy_row(w, ix, 1, {2}, {0.5, 0.2, 0.3});
    w.feedback_channel.assign(w.num_inputs * w.num_responses() * w.num_feedback, 0.0);
    for (long long r = 0; r < w.num_inputs * w.num_responses(); ++r) {
        w.feedback_channel[r * 2 + 0] = 0.7;
        w.feedback_channel[r * 2 + 1] = 0.3;
    }
    w.success_feedback = 1;
    finalize_world(w, /*floor_policy=*/false, /*floor_channel=*/false);
    return w;
}

// Feedback is a deterministic copy of the last token.
inline WorldSpec make_w_last() {
    WorldSpec w;
    w.name = "w-last";
    w.num_inputs = 2;
    w.vocab_size = 2;
    w.horizon = 3;
    w.num_feedback = 2;
    w.input_prior = {0.5, 0.5};
    const auto ix = w.indexer();
    w.policy_table.assign(w.num_inputs * ix.slots() * w.vocab_size, 0.0);
    // P(token = 1) per node, level order: {}, (0), (1), (00), (01), (10), (11).
    const double p1[2][7] = {{0.3, 0.4, 0.6, 0.2, 0.7, 0.55, 0.35},
                             {0.65, 0.5, 0.25, 0.45, 0.3, 0.8, 0.6}};
    for (int x = 0; x < 2; ++x)
        for (long long s = 0; s < ix.slots(); ++s) {
            w.policy_table[(x * ix.slots() + s) * 2 + 0] = 1.0 - p1[x][s];
            w.policy_table[(x * ix.slots() + s) * 2 + 1] = p1[x][s];
        }
    w.feedback_channel.assign(w.num_inputs * w.num_responses() * w.num_feedback, 0.0);
    for (int x = 0; x < 2; ++x)
        for (long long r = 0; r < w.num_responses(); ++r) {
            const int last = static_cast<int>(r % 2);
            w.feedback_channel[((x * w.num_responses()) + r) * 2 + last] = 1.0;
        }
    w.success_feedback = 1;
    finalize_world(w, /*floor_policy=*/false, /*floor_channel=*/false);
    return w;
}

// Binary verifier: success iff the response equals a per-input target.
// Policy rows are strictly positive, so every response stays reachable.
inline WorldSpec make_w_verify() {
    WorldSpec w;
    w.name = "w-verify";
    w.num_inputs = 2;
    w.vocab_size = 2;
    w.horizon = 2;
    w.num_feedback = 2;
    w.input_prior = {0.5, 0.5};
    const auto ix = w.indexer();
    w.policy_table.assign(w.num_inputs * ix.slots() * w.vocab_size, 0.0);
    detail::set_policy_row(w, ix, 0, {}, {0.6, 0.4});
    detail::set_policy_row(w, ix, 0, {0}, {0.55, 0.45});
    detail::set_policy_row(w, ix, 0, {1}, {0.5, 0.5});
    detail::set_policy_row(w, ix, 1, {}, {0.4, 0.6});
    detail::set_policy_row(w, ix, 1, {0}, {0.5, 0.5});
    detail::set_policy_row(w, ix, 1, {1}, {0.45, 0.55});
    const long long target[2] = {encode_response({0, 0}, 2), encode_response({1, 1}, 2)};
    w.outcome_map.assign(w.num_inputs * w.num_responses(), 0);
    w.feedback_channel.assign(w.num_inputs * w.num_responses() * w.num_feedback, 0.0);
    for (int x = 0; x < 2; ++x)
        for (long long r = 0; r < w.num_responses(); ++r) {
            const int o = (r == target[x]) ? 1 : 0;
            w.outcome_map[x * w.num_responses() + r] = o;
            w.feedback_channel[(x * w.num_responses() + r) * 2 + o] = 1.0;
        }
    w.binary_verifier = true;
    w.success_feedback = 1;
    finalize_world(w, /*floor_policy=*/false, /*floor_channel=*/false);
    return w;
}

// Two-position world where the feedback decomposes as
//   P(z=1 | x, y1, y2) = A(y1) * B(x, y2):
// position 1 influences feedback through A alone (input-generic), position 2
// through B (input-specific). The second-position rows are solved so that
// sum_u q(x,v)(u) * B(x,u) is the same for both inputs, which makes every
// position-1 statistic of the feedback exactly independent of x while
// position-2 statistics differ strongly.
inline WorldSpec make_w_shortcut() {
    WorldSpec w;
    w.name = "w-shortcut";
    w.num_inputs = 2;
    w.vocab_size = 3;
    w.horizon = 2;
    w.num_feedback = 2;
    w.input_prior = {0.5, 0.5};
    const auto ix = w.indexer();
    w.policy_table.assign(w.num_inputs * ix.slots() * w.vocab_size, 0.0);
    detail::set_policy_row(w, ix, 0, {}, {0.5, 0.3, 0.2});
    detail::set_policy_row(w, ix, 1, {}, {0.5, 0.3, 0.2});
    detail::set_policy_row(w, ix, 0, {0}, {0.6, 0.2, 0.2});
    detail::set_policy_row(w, ix, 0, {1}, {0.2, 0.6, 0.2});
    detail::set_policy_row(w, ix, 0, {2}, {0.1, 0.7, 0.2});
    detail::set_policy_row(w, ix, 1, {0}, {0.1, 0.7, 0.2});
    detail::set_policy_row(w, ix, 1, {1}, {0.5, 0.3, 0.2});
    detail::set_policy_row(w, ix, 1, {2}, {0.6, 0.2, 0.2});
    const double A[3] = {0.9, 0.5, 0.2};
    const double B[2][3] = {{0.9, 0.3, 0.5}, {0.2, 0.8, 0.6}};
    w.feedback_channel.assign(w.num_inputs * w.num_responses() * w.num_feedback, 0.0);
    for (int x = 0; x < 2; ++x)
        for (long long r = 0; r < w.num_responses(); ++r) {
            const auto y = decode_response(r, 3, 2);
            const double p1 = A[y[0]] * B[x][y[1]];
            w.feedback_channel[(x * w.num_responses() + r) * 2 + 0] = 1.0 - p1;
            w.feedback_channel[(x * w.num_responses() + r) * 2 + 1] = p1;
        }
    w.success_feedback = 1;
    finalize_world(w, /*floor_policy=*/false, /*floor_channel=*/false);
    return w;
}

// All tables drawn from symmetric Dirichlet(1); floored, so every event is
// in support.
inline WorldSpec make_w_rand(std::uint64_t seed) {
    WorldSpec w;
    w.name = "w-rand-" + std::to_string(seed);
    w.num_inputs = 3;
    w.vocab_size = 3;
    w.horizon = 2;
    w.num_feedback = 2;
    Rng root(seed);
    auto prior_rng = root.split("prior");
    auto policy_rng = root.split("policy");
    auto channel_rng = root.split("channel");
    w.input_prior = prior_rng.dirichlet(w.num_inputs);
    const auto ix = w.indexer();
    w.policy_table.clear();
    for (long long r = 0; r < w.num_inputs * ix.slots(); ++r) {
        auto row = policy_rng.dirichlet(w.vocab_size);
        w.policy_table.insert(w.policy_table.end(), row.begin(), row.end());
    }
    w.feedback_channel.clear();
    for (long long r = 0; r < w.num_inputs * w.num_responses(); ++r) {
        auto row = channel_rng.dirichlet(w.num_feedback);
        w.feedback_channel.insert(w.feedback_channel.end(), row.begin(), row.end());
    }
    w.success_feedback = 1;
    finalize_world(w, /*floor_policy=*/true, /*floor_channel=*/true);
    return w;
}

// Name lookup: w-ind, w-last, w-verify, w-shortcut, w-rand-<seed>.
inline WorldSpec make_builtin(const std::string& name) {
    if (name == "w-ind") return make_w_ind();
    if (name == "w-last") return make_w_last();
    if (name == "w-verify") return make_w_verify();
    if (name == "w-shortcut") return make_w_shortcut();
    if (name.rfind("w-rand-", 0) == 0) {
        try {
            return make_w_rand(std::stoull(name.substr(7)));
        } catch (const std::invalid_argument&) {
        } catch (const std::out_of_range&) {
        }
    }
    throw Error("unknown builtin world: " + name);
}

inline bool is_builtin_name(const std::string& name) {
    if (name == "w-ind" || name == "w-last" || name == "w-verify" || name == "w-shortcut") return true;
    if (name.rfind("w-rand-", 0) == 0 && name.size() > 7)
        return name.find_first_not_of("0123456789", 7) == std::string::npos;
    return false;
}

}  // namespace credlab
