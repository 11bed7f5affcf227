// Acceptance gate over the library's numerical guarantees.
//
// Each criterion prints exactly one [PASS]/[FAIL] line; the exit code is 1 if
// any criterion fails. Everything runs in-process against the shipped worlds,
// with independent oracles (exhaustive grid search, central differences) where
// a second opinion is the point of the check.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "credlab/builtin_worlds.hpp"
#include "credlab/causal.hpp"
#include "credlab/cli.hpp"
#include "credlab/compat.hpp"
#include "credlab/identities.hpp"
#include "credlab/reward.hpp"
#include "credlab/trainer.hpp"
#include "support/oracles.hpp"

using namespace credlab;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int n, bool ok, const std::string& what) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n, what.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct SweepStats {
    long long count = 0;
    long long failed = 0;
    double max_abs = 0.0;
    std::string first_fail;

    void add(const std::vector<CheckReport>& reps) {
        for (const auto& r : reps) {
            ++count;
            max_abs = std::max(max_abs, std::abs(r.residual));
            if (!r.passed) {
                ++failed;
                if (first_fail.empty())
                    first_fail = r.name + " " + r.world + " " + r.context + " residual " +
                                 num(r.residual);
            }
        }
    }
    std::string detail() const {
        if (failed == 0) return std::to_string(count) + " checks, max |residual| " + num(max_abs);
        return std::to_string(failed) + "/" + std::to_string(count) + " failed; first: " +
               first_fail;
    }
};

std::vector<WorldSpec> all_worlds() {
    std::vector<WorldSpec> out;
    for (const char* n : {"w-ind", "w-last", "w-verify", "w-shortcut"})
        out.push_back(make_builtin(n));
    for (std::uint64_t s = 1; s <= 5; ++s) out.push_back(make_w_rand(s));
    return out;
}

std::vector<WorldSpec> rand_worlds() {
    std::vector<WorldSpec> out;
    for (std::uint64_t s = 1; s <= 5; ++s) out.push_back(make_w_rand(s));
    return out;
}

// Swallows everything a cmd_* helper prints so the gate output stays one line
// per criterion.
class StdoutSilencer {
  public:
    StdoutSilencer() {
        std::fflush(stdout);
        saved_ = dup(1);
        const int devnull = open("/dev/null", O_WRONLY);
        dup2(devnull, 1);
        close(devnull);
    }
    ~StdoutSilencer() {
        std::fflush(stdout);
        dup2(saved_, 1);
        close(saved_);
    }

  private:
    int saved_;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

double worst_rel_grad_error(const PolicyParams& params, int x, const std::vector<int>& tokens,
                            const RewardField& field) {
    std::vector<double> grad(params.student_logits.size(), 0.0);
    accumulate_distill_gradient(params, x, tokens, field, grad);
    const auto objective = [&](const std::vector<double>& theta) {
        PolicyParams p = params;
        p.student_logits = theta;
        return distill_surrogate(p, x, tokens, field);
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double fd = oracle::central_diff(objective, params.student_logits, i);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
    return worst;
}

void criterion_1() {
    cli::Stopwatch timer;
    SweepStats stats;
    for (const auto& w : all_worlds()) {
        const auto b = world_bundle(w);
        stats.add(sweep_telescoping(w, b, TeacherMode::exact_posterior, 1e-9));
    }
    const double elapsed = timer.seconds();
    const bool ok = stats.failed == 0 && elapsed < 30.0;
    report(1, ok,
           "realized rewards telescope to the feedback log-ratio on every in-support "
           "trajectory of all 9 worlds (" +
               stats.detail() + ", " + num(elapsed) + "s)");
}

void criterion_2() {
    SweepStats mi, sign;
    for (const auto& w : all_worlds()) {
        const auto b = world_bundle(w);
        mi.add(sweep_mi_expectation(w, b, 1e-9));
        sign.add(sweep_sign_expectations(w, b, 1e-10));
    }
    const bool ok = mi.failed == 0 && sign.failed == 0;
    report(2, ok,
           "reward expectations equal the mutual-information terms and the signed KL pair "
           "at every prefix (" +
               mi.detail() + "; signs " + sign.detail() + ")");
}

void criterion_3() {
    SweepStats stats;
    for (const auto& w : rand_worlds()) {
        const auto b = world_bundle(w);
        stats.add(sweep_decomposition(w, b, TeacherMode::exact_posterior, 1e-12));
    }

    // The shortcut world separates the split: the first token carries no
    // input-specific credit, the second carries a visible amount.
    const auto w = make_builtin("w-shortcut");
    const auto b = world_bundle(w);
    double max_first = 0.0, max_second = 0.0;
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        for (int z = 0; z < w.num_feedback; ++z)
            for (int v = 0; v < w.vocab_size; ++v) {
                double s = 0.0;
                try {
                    s = decompose_S_G(b.ref, w, x, prefix, z, v).first;
                } catch (const NullEventError&) {
                    continue;
                }
                (prefix.empty() ? max_first : max_second) =
                    std::max(prefix.empty() ? max_first : max_second, std::abs(s));
            }
    });
    const bool ok = stats.failed == 0 && max_first < 1e-10 && max_second > 0.01;
    report(3, ok,
           "teacher log-probabilities reconstruct from specific + generic parts (" +
               stats.detail() + "); shortcut world splits them (first-token max |S| " +
               num(max_first) + ", second-token " + num(max_second) + ")");
}

void criterion_4() {
    SweepStats stats;
    bool strict = true;
    for (const auto& w : rand_worlds()) {
        const auto b = world_bundle(w);
        const auto reps = sweep_jensen(w, b, TeacherMode::exact_posterior, 1e-12);
        double best = 0.0;
        for (const auto& r : reps) best = std::max(best, r.residual);
        strict = strict && best > 1e-12;
        stats.add(reps);
    }
    report(4, stats.failed == 0 && strict,
           "prior-contrast slack stays above -1e-12 with strictly positive slack in each "
           "world (" +
               stats.detail() + ")");
}

void criterion_5() {
    SweepStats stats;
    for (const auto& w : rand_worlds()) {
        const auto b = world_bundle(w);
        for (double lambda : {0.0, 0.1, 1.0})
            stats.add(sweep_credit_sequence(w, b, lambda, 1e-9));
    }

    // The bonus term is a prior-weighted sum of response surprisals, each
    // nonnegative on its own; check the aggregate stays >= 0 exactly.
    double min_bonus = 1e300;
    for (const auto& w : rand_worlds()) {
        const auto b = world_bundle(w);
        auto rows = reference_rows(b.ref);
        for (int x = 0; x < w.num_inputs; ++x)
            for (long long code = 0; code < w.num_responses(); ++code) {
                const auto y = decode_response(code, w.vocab_size, w.horizon);
                double bonus = 0.0;
                for (int xp = 0; xp < w.num_inputs; ++xp) {
                    double logpy = 0.0;
                    std::vector<int> prefix;
                    for (int t = 0; t < w.horizon; ++t) {
                        logpy += std::log(rows(xp, prefix)[y[t]]);
                        prefix.push_back(y[t]);
                    }
                    bonus += w.input_prior[xp] * (-logpy);
                }
                min_bonus = std::min(min_bonus, bonus);
            }
    }
    report(5, stats.failed == 0 && min_bonus >= 0.0,
           "credit sequences telescope for lambda in {0, 0.1, 1} and the anti-genericity "
           "bonus is nonnegative (" +
               stats.detail() + ", min bonus " + num(min_bonus) + ")");
}

void criterion_6() {
    SweepStats stats;
    for (const auto& w : all_worlds()) stats.add(sweep_gap_after_ema(w, 0.01, 100, 1e-12));
    report(6, stats.failed == 0,
           "after 100 EMA reference updates the reward gap splits additively and obeys the "
           "max-log-ratio bound (" +
               stats.detail() + ")");
}

void criterion_7() {
    // Exact world instances recover their mixture to solver precision.
    double max_exact = 0.0;
    bool baseline_ok = true;
    for (const auto& w : all_worlds()) {
        const auto b = world_bundle(w);
        detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
            CompatInstance inst = make_exact_instance(w, b.ref, x, prefix);
            solve_instance(inst);
            max_exact = std::max(max_exact, inst.solution->residual);
            baseline_ok =
                baseline_ok && inst.solution->residual <= inst.uniform_baseline_value + 1e-9;
        });
    }

    // Random instances: the solver may never lose to an exhaustive simplex
    // grid (the grid can only overshoot the true optimum).
    double worst_vs_grid = -1e300;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        CompatInstance inst = make_random_instance(4, 4, seed);
        solve_instance(inst);
        const double grid =
            oracle::grid_min_residual(inst.student_projected, inst.teacher_matrix, 0.005);
        worst_vs_grid = std::max(worst_vs_grid, inst.solution->residual - grid);
        baseline_ok = baseline_ok && inst.solution->residual <= inst.uniform_baseline_value + 1e-9;
    }

    const bool ok = max_exact < 1e-8 && worst_vs_grid <= 1e-6 && baseline_ok;
    report(7, ok,
           "mixture solver: exact instances reach residual " + num(max_exact) +
               ", never worse than the 0.005 grid by more than " + num(worst_vs_grid) +
               " on 100 random 4x4 instances, and never exceeds the uniform baseline");
}

void criterion_8() {
    const auto w = make_builtin("w-verify");
    const std::vector<std::pair<std::string, OSFChannel>> channels = {
        {"identity", identity_channel()},
        {"noisy", OSFChannel{{0.2, 0.8}, {0.7, 0.3}}},
        {"one-sided", OSFChannel{{0.3, 0.7}, {1.0, 0.0}}},
    };

    long long witness_pass = 0, witness_fail = 0;
    long long rank_pass = 0, rank_fail = 0;
    long long gap_pass = 0, gap_fail = 0;
    for (const auto& [label, ch] : channels) {
        for (int z = 0; z < 2; ++z) {
            if (ch.q0[z] == 0.0 && ch.q1[z] > 0.0)
                for (const auto& r : sweep_witness(w, ch, z, 1e-10)) {
                    if (r.status == CheckStatus::pass) ++witness_pass;
                    if (r.status == CheckStatus::fail) ++witness_fail;
                }
            if (ch.q1[z] - ch.q0[z] >= 0.1) {
                const WorldSpec osf = attach_osf_feedback(w, ch);
                detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
                    const auto r = check_rank_preservation(w, ch, osf, x, prefix, z);
                    if (r.status == CheckStatus::pass) ++rank_pass;
                    if (r.status == CheckStatus::fail) ++rank_fail;
                });
            }
        }
        for (const auto& r : sweep_gap_identity(w, ch, 1e-12)) {
            if (r.status == CheckStatus::pass) ++gap_pass;
            if (r.status == CheckStatus::fail) ++gap_fail;
        }
    }

    const bool ok = witness_fail == 0 && witness_pass > 0 && rank_fail == 0 && rank_pass > 0 &&
                    gap_fail == 0 && gap_pass > 0;
    report(8, ok,
           "success-only feedback matches interventional credit (" +
               std::to_string(witness_pass) + " witness checks), token ranks are preserved "
               "on well-separated channels (" +
               std::to_string(rank_pass) + "), and the reward gap equals the two-lift "
               "difference (" +
               std::to_string(gap_pass) + "); failures " +
               std::to_string(witness_fail + rank_fail + gap_fail));
}

void criterion_9() {
    // Finite-difference agreement across all four update styles.
    double worst_fd = 0.0;
    {
        const auto w = make_builtin("w-verify");
        const auto params = params_from_world(w);
        const auto ref = make_reference(params, 1.0);
        Trajectory traj{0, {0, 1}, 0, {}};
        worst_fd = std::max(worst_fd,
                            worst_rel_grad_error(params, 0, traj.tokens,
                                                 sd_reward(ref, params, w, traj)));
        worst_fd = std::max(worst_fd,
                            worst_rel_grad_error(params, 0, traj.tokens,
                                                 credit_reward(ref, params, w, traj, {1}, 0.4)));
        worst_fd = std::max(
            worst_fd, worst_rel_grad_error(params, 0, traj.tokens,
                                           full_ratio_contrastive(ref, params, w, traj, {1}, 0.4)));
        auto jsd = sd_reward(ref, params, w, traj);
        apply_divergence_transform(params, 0, traj.tokens, jsd, DivergenceKind::jsd, 0.5);
        worst_fd = std::max(worst_fd, worst_rel_grad_error(params, 0, traj.tokens, jsd));
    }
    {
        const auto w = make_w_rand(2);
        const auto params = params_from_world(w);
        const auto ref = make_reference(params, 1.0);
        Trajectory traj{1, {2, 0}, 1, {}};
        worst_fd = std::max(worst_fd,
                            worst_rel_grad_error(params, 1, traj.tokens,
                                                 sd_reward(ref, params, w, traj)));
        worst_fd = std::max(
            worst_fd, worst_rel_grad_error(params, 1, traj.tokens,
                                           credit_reward(ref, params, w, traj, {0, 2}, 0.4)));
        worst_fd = std::max(
            worst_fd,
            worst_rel_grad_error(params, 1, traj.tokens,
                                 full_ratio_contrastive(ref, params, w, traj, {0, 2}, 0.4)));
        auto jsd = sd_reward(ref, params, w, traj);
        apply_divergence_transform(params, 1, traj.tokens, jsd, DivergenceKind::jsd, 0.5);
        worst_fd = std::max(worst_fd, worst_rel_grad_error(params, 1, traj.tokens, jsd));
    }

    // With no contrastive subtraction the credit engine must be the plain
    // distillation engine, down to the last bit, over a whole run.
    const auto w = make_builtin("w-verify");
    TrainConfig credit_cfg;
    credit_cfg.engine = TrainEngine::credit;
    credit_cfg.lambda = 0.0;
    credit_cfg.steps = 100;
    credit_cfg.seed = 7;
    TrainConfig sd_cfg = credit_cfg;
    sd_cfg.engine = TrainEngine::sd;
    const auto credit_run = run_training(w, credit_cfg);
    const auto sd_run = run_training(w, sd_cfg);
    bool bitwise = credit_run.params.student_logits == sd_run.params.student_logits &&
                   credit_run.ref.ema_student == sd_run.ref.ema_student &&
                   credit_run.ref.ema_teacher == sd_run.ref.ema_teacher &&
                   credit_run.metrics.size() == sd_run.metrics.size();
    for (std::size_t i = 0; bitwise && i < credit_run.metrics.size(); ++i)
        bitwise = credit_run.metrics[i].train_success_rate == sd_run.metrics[i].train_success_rate &&
                  credit_run.metrics[i].mean_realized_advantage ==
                      sd_run.metrics[i].mean_realized_advantage;

    // Constant rewards carry no ranking information; the grouped policy
    // update must leave the parameters untouched.
    WorldSpec flat = make_builtin("w-verify");
    flat.outcome_map.assign(flat.outcome_map.size(), 1);
    TrainConfig grpo_cfg;
    grpo_cfg.engine = TrainEngine::grpo;
    grpo_cfg.steps = 5;
    grpo_cfg.seed = 1;
    const auto grpo_run = run_training(flat, grpo_cfg);
    const bool noop = grpo_run.params.student_logits == params_from_world(flat).student_logits;

    report(9, worst_fd < 1e-5 && bitwise && noop,
           "update gradients match central differences (worst rel err " + num(worst_fd) +
               "), zero-contrast credit is bitwise the distillation run, and constant-reward "
               "groups leave the policy untouched");
}

void criterion_10() {
    const auto w = make_builtin("w-verify");
    const double initial = train_success_rate(w, params_from_world(w));

    TrainConfig credit_cfg;  // defaults: credit engine, lambda 0.1, lr 0.05, 200 steps, seed 0
    cli::Stopwatch t1;
    const auto credit_run = run_training(w, credit_cfg);
    const double credit_time = t1.seconds();
    const double credit_final = credit_run.metrics.back().train_success_rate;

    TrainConfig sd_cfg;
    sd_cfg.engine = TrainEngine::sd;
    cli::Stopwatch t2;
    const auto sd_run = run_training(w, sd_cfg);
    const double sd_time = t2.seconds();
    const double sd_final = sd_run.metrics.back().train_success_rate;

    const bool ok = credit_final >= 0.9 && credit_final > initial && credit_time < 60.0 &&
                    sd_final >= 0.9 && sd_time < 60.0;
    report(10, ok,
           "default 200-step runs reach success >= 0.9 from " + num(initial) + " (credit " +
               num(credit_final) + " in " + num(credit_time) + "s, sd " + num(sd_final) +
               " in " + num(sd_time) + "s)");
}

void criterion_11() {
    const std::string root = "/tmp/credlab-acceptance";
    fs::remove_all(root);
    const auto run_all = [&](const std::string& tag) {
        StdoutSilencer quiet;
        cli::VerifyOpts v;
        v.world = "w-rand-1";
        v.out_dir = root + "/" + tag + "/verify";
        cli::cmd_verify(v);
        cli::TrainOpts t;
        t.world = "w-verify";
        t.train.steps = 10;
        t.train.checkpoint_every = 5;
        t.out_dir = root + "/" + tag + "/train";
        cli::cmd_train(t);
        cli::CompatOpts c;
        c.world = "w-rand-1";
        c.noise = 0.5;
        c.seed = 4;
        c.out_dir = root + "/" + tag + "/compat";
        cli::cmd_compat(c);
        cli::CausalOpts ca;
        ca.world = "w-verify";
        ca.out_dir = root + "/" + tag + "/causal";
        cli::cmd_causal(ca);
    };
    run_all("r1");
    run_all("r2");

    static const char* files[] = {
        "verify/checks.csv", "verify/summary.csv",          "train/metrics.csv",
        "train/checkpoint.json", "train/checkpoint_step000005.json",
        "compat/compat.csv", "compat/summary.csv",          "causal/causal.csv",
        "causal/summary.csv",
    };
    int mismatched = 0;
    std::string first_bad;
    for (const char* f : files) {
        const auto a = slurp(root + "/r1/" + f), b = slurp(root + "/r2/" + f);
        if (a.empty() || a != b) {
            ++mismatched;
            if (first_bad.empty()) first_bad = f;
        }
    }
    report(11, mismatched == 0,
           mismatched == 0
               ? "repeated runs with identical seeds produce byte-identical output tables (" +
                     std::to_string(std::size(files)) + " files compared)"
               : "output files differ between identical runs; first: " + first_bad);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    return failures == 0 ? 0 : 1;
}
