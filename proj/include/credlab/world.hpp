// Exactly enumerable tabular autoregressive worlds.
//
// A world is a joint over (input x, response y of fixed length T, feedback z):
//   x ~ input_prior, y_t ~ policy_table(. | x, y_<t), z ~ feedback_channel(. | x, y).
// Everything downstream (marginals, posteriors, mutual informations) is computed
// by exact summation, so identity checks carry no Monte Carlo noise.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "credlab/common.hpp"

namespace credlab {

// Dense prefix addressing: prefixes of length 0..T-1 are laid out level by
// level; within a level a prefix is its base-V code read left to right.
//   prefix_index(p) = offsets[len(p)] + sum_t p_t * V^(len-1-t)
// where offsets[L] = 1 + V + ... + V^(L-1).
struct PrefixIndexer {
    int vocab = 0;
    int horizon = 0;
    std::vector<long long> offsets;  // offsets[L], L = 0..T; offsets[T] = slot count

    PrefixIndexer() = default;
    PrefixIndexer(int v, int t) : vocab(v), horizon(t), offsets(t + 1) {
        long long acc = 0, level = 1;
        for (int len = 0; len <= t; ++len) {
            offsets[len] = acc;
            acc += level;
            level *= v;
        }
    }

    long long slots() const { return offsets[horizon]; }

    long long index(const std::vector<int>& prefix) const {
        if (static_cast<int>(prefix.size()) >= horizon + 1)
            throw Error("prefix longer than horizon");
        long long code = 0;
        for (int tok : prefix) {
            if (tok < 0 || tok >= vocab) throw Error("token out of range");
            code = code * vocab + tok;
        }
        return offsets[prefix.size()] + code;
    }
};

struct WorldSpec {
    std::string name;
    int num_inputs = 0;    // X
    int vocab_size = 0;    // V
    int horizon = 0;       // T
    int num_feedback = 0;  // Z
    std::vector<double> input_prior;       // [X]
    std::vector<double> policy_table;      // [X * prefix_slots * V]
    std::vector<double> feedback_channel;  // [X * V^T * Z]
    std::vector<int> outcome_map;          // [X * V^T] of {0,1}, empty when absent
    bool binary_verifier = false;
    // Feedback id counted as "success" for scalar-reward baselines when no
    // outcome map exists; -1 when not designated.
    int success_feedback = -1;
    std::uint64_t enum_cap = 1000000;

    PrefixIndexer indexer() const { return PrefixIndexer(vocab_size, horizon); }

    long long num_responses() const {
        long long n = 1;
        for (int t = 0; t < horizon; ++t) n *= vocab_size;
        return n;
    }

    bool has_outcomes() const { return !outcome_map.empty(); }

    const double* policy_row(const PrefixIndexer& ix, int x, const std::vector<int>& prefix) const {
        check_input(x);
        return policy_table.data() + (static_cast<long long>(x) * ix.slots() + ix.index(prefix)) * vocab_size;
    }

    const double* channel_row(int x, long long response_code) const {
        check_input(x);
        return feedback_channel.data() + (static_cast<long long>(x) * num_responses() + response_code) * num_feedback;
    }

    int outcome(int x, long long response_code) const {
        if (!has_outcomes()) throw Error("world '" + name + "' has no outcome map");
        return outcome_map[static_cast<long long>(x) * num_responses() + response_code];
    }

    void check_input(int x) const {
        if (x < 0 || x >= num_inputs) throw Error("input id out of range: " + std::to_string(x));
    }
};

struct Trajectory {
    int input_id = 0;
    std::vector<int> tokens;
    int feedback_id = 0;
    std::vector<double> realized_rewards;  // filled by reward engines
};

inline long long encode_response(const std::vector<int>& tokens, int vocab) {
    long long code = 0;
    for (int t : tokens) {
        if (t < 0 || t >= vocab) throw Error("token out of range");
        code = code * vocab + t;
    }
    return code;
}

inline std::vector<int> decode_response(long long code, int vocab, int horizon) {
    std::vector<int> tokens(horizon);
    for (int t = horizon - 1; t >= 0; --t) {
        tokens[t] = static_cast<int>(code % vocab);
        code /= vocab;
    }
    return tokens;
}

inline void check_trajectory(const WorldSpec& w, const Trajectory& traj) {
    w.check_input(traj.input_id);
    if (static_cast<int>(traj.tokens.size()) != w.horizon)
        throw Error("trajectory length != horizon");
    for (int t : traj.tokens)
        if (t < 0 || t >= w.vocab_size) throw Error("trajectory token out of range");
    if (traj.feedback_id < 0 || traj.feedback_id >= w.num_feedback)
        throw Error("trajectory feedback out of range");
}

// --- validation -------------------------------------------------------------

inline void check_enum_cap(const WorldSpec& w) {
    long double joint = 1.0L;
    for (int t = 0; t < w.horizon; ++t) joint *= w.vocab_size;
    joint *= w.num_inputs;
    joint *= w.num_feedback;
    if (joint > static_cast<long double>(w.enum_cap))
        throw CapExceededError("world '" + w.name + "' exceeds enumeration cap: V^T*X*Z > " +
                               std::to_string(w.enum_cap));
}

// Returns a list of human-readable invariant violations; empty means valid.
inline std::vector<std::string> validate_world(const WorldSpec& w) {
    std::vector<std::string> bad;
    auto fail = [&](const std::string& s) { bad.push_back(s); };
    if (w.num_inputs <= 0 || w.vocab_size <= 0 || w.horizon <= 0 || w.num_feedback <= 0) {
        fail("dimensions must be positive");
        return bad;
    }
    try {
        check_enum_cap(w);
    } catch (const CapExceededError& e) {
        fail(e.what());
        return bad;
    }
    const auto ix = w.indexer();
    const long long R = w.num_responses();
    if (static_cast<long long>(w.input_prior.size()) != w.num_inputs)
        fail("input_prior has wrong length");
    if (static_cast<long long>(w.policy_table.size()) != w.num_inputs * ix.slots() * w.vocab_size)
        fail("policy_table has wrong length");
    if (static_cast<long long>(w.feedback_channel.size()) != w.num_inputs * R * w.num_feedback)
        fail("feedback_channel has wrong length");
    if (!w.outcome_map.empty() && static_cast<long long>(w.outcome_map.size()) != w.num_inputs * R)
        fail("outcome_map has wrong length");
    if (!bad.empty()) return bad;

    auto check_row = [&](const double* row, int n, const std::string& what) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (!(row[i] >= 0.0 && row[i] <= 1.0 + 1e-12)) {
                fail(what + ": entry " + std::to_string(i) + " outside [0,1]");
                return;
            }
            sum += row[i];
        }
        if (std::abs(sum - 1.0) > 1e-12)
            fail(what + ": sums to " + fmt_g17(sum) + ", expected 1");
    };

    check_row(w.input_prior.data(), w.num_inputs, "input_prior");
    for (int x = 0; x < w.num_inputs; ++x)
        for (long long s = 0; s < ix.slots(); ++s) {
            int len = 0;
            while (len < w.horizon && s >= ix.offsets[len + 1]) ++len;
            auto prefix = decode_response(s - ix.offsets[len], w.vocab_size, len);
            check_row(w.policy_table.data() + (x * ix.slots() + s) * w.vocab_size, w.vocab_size,
                      "policy row (x=" + std::to_string(x) + ", prefix=[" + join_ints(prefix) + "])");
        }
    for (int x = 0; x < w.num_inputs; ++x)
        for (long long r = 0; r < R; ++r)
            check_row(w.channel_row(x, r), w.num_feedback,
                      "feedback row (x=" + std::to_string(x) + ", y=[" +
                          join_ints(decode_response(r, w.vocab_size, w.horizon)) + "])");
    for (int v : w.outcome_map)
        if (v != 0 && v != 1) {
            fail("outcome_map entries must be 0 or 1");
            break;
        }
    if (w.binary_verifier) {
        if (w.num_feedback != 2) fail("binary-verifier world must have Z = 2");
        if (w.outcome_map.empty()) fail("binary-verifier world must carry an outcome map");
        if (w.num_feedback == 2 && !w.outcome_map.empty())
            for (int x = 0; x < w.num_inputs; ++x)
                for (long long r = 0; r < R; ++r)
                    if (w.channel_row(x, r)[1] != static_cast<double>(w.outcome(x, r))) {
                        fail("binary-verifier channel disagrees with outcome map at x=" +
                             std::to_string(x) + ", y=[" +
                             join_ints(decode_response(r, w.vocab_size, w.horizon)) + "]");
                        x = w.num_inputs;
                        break;
                    }
    }
    if (w.success_feedback != -1 && (w.success_feedback < 0 || w.success_feedback >= w.num_feedback))
        fail("success_feedback out of range");
    return bad;
}

inline void floor_and_renormalize_row(double* row, int n, double floor = kProbFloor) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        row[i] = std::max(row[i], floor);
        sum += row[i];
    }
    for (int i = 0; i < n; ++i) row[i] /= sum;
}

// Construction-time clamp: every stored probability becomes >= the floor so
// logs stay finite. Deterministic channels opt out and rely on strict
// null-event errors instead.
inline void apply_probability_floor(WorldSpec& w, bool floor_policy, bool floor_channel) {
    const auto ix = w.indexer();
    if (floor_policy) {
        floor_and_renormalize_row(w.input_prior.data(), w.num_inputs);
        for (long long r = 0; r < static_cast<long long>(w.num_inputs) * ix.slots(); ++r)
            floor_and_renormalize_row(w.policy_table.data() + r * w.vocab_size, w.vocab_size);
    }
    if (floor_channel)
        for (long long r = 0; r < static_cast<long long>(w.num_inputs) * w.num_responses(); ++r)
            floor_and_renormalize_row(w.feedback_channel.data() + r * w.num_feedback, w.num_feedback);
}

inline void finalize_world(WorldSpec& w, bool floor_policy = true, bool floor_channel = true) {
    apply_probability_floor(w, floor_policy, floor_channel);
    auto bad = validate_world(w);
    if (!bad.empty()) throw Error("invalid world '" + w.name + "': " + bad.front());
}

// --- exact computations -----------------------------------------------------

// Policy row provider: anything callable as (x, prefix) -> std::vector<double>.
// World operations use the world's own table; the policy module substitutes
// softmax rows of a trainable table to evaluate the same functionals under a
// different rollout distribution.
using RowFn = std::function<std::vector<double>(int, const std::vector<int>&)>;

inline RowFn world_rows(const WorldSpec& w) {
    auto ix = w.indexer();
    return [&w, ix](int x, const std::vector<int>& prefix) {
        const double* r = w.policy_row(ix, x, prefix);
        return std::vector<double>(r, r + w.vocab_size);
    };
}

namespace detail {
template <class Rows>
void marginal_rec(const WorldSpec& w, Rows&& rows, int x, std::vector<int>& prefix, double weight,
                  std::vector<double>& out) {
    if (static_cast<int>(prefix.size()) == w.horizon) {
        const double* ch = w.channel_row(x, encode_response(prefix, w.vocab_size));
        for (int z = 0; z < w.num_feedback; ++z) out[z] += weight * ch[z];
        return;
    }
    const auto row = rows(x, prefix);
    for (int v = 0; v < w.vocab_size; ++v) {
        if (row[v] == 0.0) continue;
        prefix.push_back(v);
        marginal_rec(w, rows, x, prefix, weight * row[v], out);
        prefix.pop_back();
    }
}

template <class Rows>
double success_rec(const WorldSpec& w, Rows&& rows, int x, std::vector<int>& prefix, double weight) {
    if (static_cast<int>(prefix.size()) == w.horizon)
        return weight * w.outcome(x, encode_response(prefix, w.vocab_size));
    const auto row = rows(x, prefix);
    double acc = 0.0;
    for (int v = 0; v < w.vocab_size; ++v) {
        if (row[v] == 0.0) continue;
        prefix.push_back(v);
        acc += success_rec(w, rows, x, prefix, weight * row[v]);
        prefix.pop_back();
    }
    return acc;
}
}  // namespace detail

// P(z | x, y_<t) under the given rollout policy: exact sum over continuations.
template <class Rows>
std::vector<double> feedback_marginal_under(const WorldSpec& w, Rows&& rows, int x,
                                            const std::vector<int>& prefix) {
    w.check_input(x);
    if (static_cast<int>(prefix.size()) > w.horizon) throw Error("prefix longer than horizon");
    std::vector<double> out(w.num_feedback, 0.0);
    std::vector<int> p = prefix;
    detail::marginal_rec(w, rows, x, p, 1.0, out);
    return out;
}

inline std::vector<double> feedback_marginal(const WorldSpec& w, int x, const std::vector<int>& prefix) {
    return feedback_marginal_under(w, world_rows(w), x, prefix);
}

// One-step Bayes: P(next = v | x, y_<t, z) for every candidate v. Entries may
// be exactly zero; conditioning on a zero-probability z throws.
template <class Rows>
std::vector<double> posterior_next_token_under(const WorldSpec& w, Rows&& rows, int x,
                                               const std::vector<int>& prefix, int z) {
    if (z < 0 || z >= w.num_feedback) throw Error("feedback id out of range");
    const auto marg = feedback_marginal_under(w, rows, x, prefix);
    if (marg[z] <= 0.0)
        throw NullEventError("feedback " + std::to_string(z) + " has probability 0 at (x=" +
                             std::to_string(x) + ", prefix=[" + join_ints(prefix) + "])");
    const auto row = rows(x, prefix);
    std::vector<double> post(w.vocab_size, 0.0);
    std::vector<int> ext = prefix;
    for (int v = 0; v < w.vocab_size; ++v) {
        if (row[v] == 0.0) continue;
        ext.push_back(v);
        post[v] = row[v] * feedback_marginal_under(w, rows, x, ext)[z] / marg[z];
        ext.pop_back();
    }
    return post;
}

inline std::vector<double> posterior_next_token(const WorldSpec& w, int x,
                                                const std::vector<int>& prefix, int z) {
    return posterior_next_token_under(w, world_rows(w), x, prefix, z);
}

// log P(z | x, y) - log P(z | x): pointwise mutual information between a full
// response and the feedback, given the input.
template <class Rows>
double pmi_under(const WorldSpec& w, Rows&& rows, int x, const std::vector<int>& response, int z) {
    if (static_cast<int>(response.size()) != w.horizon) throw Error("pmi needs a full response");
    if (z < 0 || z >= w.num_feedback) throw Error("feedback id out of range");
    const double cond = w.channel_row(x, encode_response(response, w.vocab_size))[z];
    const double marg = feedback_marginal_under(w, rows, x, {})[z];
    if (cond <= 0.0 || marg <= 0.0)
        throw NullEventError("pmi undefined: P(z|x,y) or P(z|x) is 0");
    return std::log(cond) - std::log(marg);
}

inline double pmi(const WorldSpec& w, int x, const std::vector<int>& response, int z) {
    return pmi_under(w, world_rows(w), x, response, z);
}

// P(O = 1 | x, y_<t): expected outcome over policy continuations.
template <class Rows>
double success_probability_under(const WorldSpec& w, Rows&& rows, int x,
                                 const std::vector<int>& prefix) {
    w.check_input(x);
    if (!w.has_outcomes()) throw Error("world '" + w.name + "' has no outcome map");
    if (static_cast<int>(prefix.size()) > w.horizon) throw Error("prefix longer than horizon");
    std::vector<int> p = prefix;
    return detail::success_rec(w, rows, x, p, 1.0);
}

inline double success_probability(const WorldSpec& w, int x, const std::vector<int>& prefix) {
    return success_probability_under(w, world_rows(w), x, prefix);
}

// All V^T responses with their policy probabilities.
template <class Rows>
std::vector<std::pair<std::vector<int>, double>> enumerate_responses_under(const WorldSpec& w,
                                                                           Rows&& rows, int x) {
    w.check_input(x);
    check_enum_cap(w);
    const long long R = w.num_responses();
    std::vector<std::pair<std::vector<int>, double>> out;
    out.reserve(R);
    for (long long code = 0; code < R; ++code) {
        auto tokens = decode_response(code, w.vocab_size, w.horizon);
        double p = 1.0;
        std::vector<int> prefix;
        for (int t = 0; t < w.horizon; ++t) {
            p *= rows(x, prefix)[tokens[t]];
            prefix.push_back(tokens[t]);
        }
        out.emplace_back(std::move(tokens), p);
    }
    return out;
}

inline std::vector<std::pair<std::vector<int>, double>> enumerate_responses(const WorldSpec& w, int x) {
    return enumerate_responses_under(w, world_rows(w), x);
}

}  // namespace credlab
