// Subcommand implementations behind the command-line driver.
//
// Each cmd_* function takes a plain options struct and returns a process exit
// code, so tests can run the command in-process. Exit convention:
//   0  success
//   1  a check failed or an invariant was violated
//   2  unusable input (bad flags, malformed files) -- signalled by ParseError
//      and translated by the driver.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "credlab/builtin_worlds.hpp"
#include "credlab/causal.hpp"
#include "credlab/compat.hpp"
#include "credlab/config.hpp"
#include "credlab/csvio.hpp"
#include "credlab/heatmap.hpp"
#include "credlab/identities.hpp"
#include "credlab/manifest.hpp"
#include "credlab/policy_io.hpp"
#include "credlab/trainer.hpp"
#include "credlab/world_io.hpp"

namespace credlab {
namespace cli {

// Builtin name or a path to a world file; files are validated on load.
inline WorldSpec resolve_world(const std::string& spec) {
    if (spec.empty()) throw ParseError("no world given (--world <builtin-or-path>)");
    if (is_builtin_name(spec)) return make_builtin(spec);
    WorldSpec w = load_world(spec);
    const auto violations = validate_world(w);
    if (!violations.empty()) {
        std::string msg = "world file " + spec + " is invalid:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw Error(msg);
    }
    return w;
}

inline void ensure_dir(const std::string& dir) {
    if (dir.empty()) throw ParseError("an output directory is required (--out)");
    std::filesystem::create_directories(dir);
}

inline std::string ctx_hash(const std::string& context) { return hex64(fnv1a64(context)); }

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

// --- world gen / validate ---------------------------------------------------

struct WorldGenOpts {
    std::string builtin;  // one of the named worlds
    bool rand = false;    // draw a seeded random world instead
    std::uint64_t seed = 0;
    std::string out;  // .json file, or a directory to place <name>.json in
};

inline int cmd_world_gen(const WorldGenOpts& o) {
    if (o.rand == !o.builtin.empty())
        throw ParseError("world gen: pass exactly one of --builtin <name> or --rand");
    const WorldSpec w = o.rand ? make_w_rand(o.seed) : make_builtin(o.builtin);
    const auto violations = validate_world(w);
    if (!violations.empty()) {
        for (const auto& v : violations) std::fprintf(stderr, "invalid: %s\n", v.c_str());
        return 1;
    }
    std::string path = o.out.empty() ? w.name + ".json" : o.out;
    if (path.size() < 5 || path.substr(path.size() - 5) != ".json") {
        std::filesystem::create_directories(path);
        path += "/" + w.name + ".json";
    } else if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
        std::filesystem::create_directories(parent);
    }
    save_world(w, path);
    std::printf("wrote %s (hash %s)\n", path.c_str(), hex64(world_hash(w)).c_str());
    return 0;
}

inline int cmd_world_validate(const std::string& path) {
    if (path.empty()) throw ParseError("world validate: a world file path is required");
    const WorldSpec w = load_world(path);
    const auto violations = validate_world(w);
    if (!violations.empty()) {
        for (const auto& v : violations) std::fprintf(stderr, "invalid: %s\n", v.c_str());
        return 1;
    }
    std::printf("%s: ok (hash %s)\n", w.name.c_str(), hex64(world_hash(w)).c_str());
    return 0;
}

// --- verify -----------------------------------------------------------------

struct VerifyOpts {
    std::string world;
    std::vector<std::string> families;  // empty = all
    std::string out_dir;
    bool inject_incompat = false;
    std::uint64_t seed = 0;
    nlohmann::json config_echo = nlohmann::json::object();
};

// Replace the exact-posterior teacher with a learned table tilted by seeded
// log-space noise. The conservation checks are then measurably violated,
// which is the point: verify must notice.
inline void inject_incompatible_teacher(WorldPolicyBundle& b, const WorldSpec& w,
                                        std::uint64_t seed, double noise_scale = 0.5) {
    const auto ix = b.params.indexer();
    b.params.teacher_logits.assign(
        static_cast<std::size_t>(w.num_inputs) * ix.slots() * w.num_feedback * w.vocab_size, 0.0);
    Rng rng(seed);
    auto noise = rng.split("teacher-noise");
    auto rows = reference_rows(b.ref);
    detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
        for (int z = 0; z < w.num_feedback; ++z) {
            std::vector<double> row;
            try {
                row = posterior_next_token_under(w, rows, x, prefix, z);
            } catch (const NullEventError&) {
                row = reference_student_row(b.ref, x, prefix);
            }
            const long long off = b.params.teacher_row_offset(ix, x, prefix, z);
            for (int v = 0; v < w.vocab_size; ++v)
                b.params.teacher_logits[off + v] =
                    floored_log(row[v]) + noise_scale * (2.0 * noise.uniform() - 1.0);
        }
    });
    b.ref = make_reference(b.params, 1.0);
}

inline int cmd_verify(const VerifyOpts& o) {
    Stopwatch timer;
    const WorldSpec w = resolve_world(o.world);
    WorldPolicyBundle b = world_bundle(w);
    TeacherMode mode = TeacherMode::exact_posterior;
    if (o.inject_incompat) {
        inject_incompatible_teacher(b, w, o.seed);
        mode = TeacherMode::learned_table;
    }

    static const std::vector<std::string> kAll = {"telescoping", "sign",       "mi",
                                                  "s-plus-g",    "jensen",     "credit-seq",
                                                  "g-unbiased",  "gap"};
    std::vector<std::string> families = o.families.empty() ? kAll : o.families;
    std::vector<CheckReport> reports;
    for (const auto& fam : families) {
        if (fam == "telescoping") {
            auto r = sweep_telescoping(w, b, mode);
            reports.insert(reports.end(), r.begin(), r.end());
        } else if (fam == "sign") {
            auto r = sweep_sign_expectations(w, b);
            reports.insert(reports.end(), r.begin(), r.end());
        } else if (fam == "mi") {
            auto r = sweep_mi_expectation(w, b);
            reports.insert(reports.end(), r.begin(), r.end());
        } else if (fam == "s-plus-g") {
            auto r = sweep_decomposition(w, b, mode);
            reports.insert(reports.end(), r.begin(), r.end());
        } else if (fam == "jensen") {
            auto r = sweep_jensen(w, b, mode);
            reports.insert(reports.end(), r.begin(), r.end());
        } else if (fam == "credit-seq") {
            for (double lambda : {0.0, 0.1, 1.0}) {
                auto r = sweep_credit_sequence(w, b, lambda);
                reports.insert(reports.end(), r.begin(), r.end());
            }
        } else if (fam == "g-unbiased") {
            if (w.num_inputs >= 2) {
                auto r = sweep_g_estimator(w, b, mode);
                reports.insert(reports.end(), r.begin(), r.end());
            }
        } else if (fam == "gap") {
            auto r = sweep_gap_after_ema(w, 0.01, 100);
            reports.insert(reports.end(), r.begin(), r.end());
        } else {
            throw ParseError("unknown check family '" + fam + "'");
        }
    }

    ensure_dir(o.out_dir);
    {
        CsvWriter csv(o.out_dir + "/checks.csv");
        csv.row({"name", "world", "context_hash", "lhs", "rhs", "residual", "pass"});
        for (const auto& r : reports)
            csv.row({r.name, r.world, ctx_hash(r.context), fmt_g17(r.lhs), fmt_g17(r.rhs),
                     fmt_g17(r.residual), csv_bool(r.passed)});
    }
    const auto summary = summarize_reports(reports);
    {
        CsvWriter csv(o.out_dir + "/summary.csv");
        csv.row({"family", "count", "max_abs_residual", "all_passed"});
        for (const auto& s : summary)
            csv.row({s.family, std::to_string(s.count), fmt_g17(s.max_abs_residual),
                     csv_bool(s.all_passed)});
    }

    bool ok = true;
    for (const auto& s : summary) {
        ok = ok && s.all_passed;
        std::printf("%-16s %6lld checks  max|residual| %-12g %s\n", s.family.c_str(), s.count,
                    s.max_abs_residual, s.all_passed ? "ok" : "FAILED");
    }
    if (!ok) {
        for (const auto& r : reports)
            if (!r.passed) {
                std::fprintf(stderr, "first failure: %s %s %s residual %s\n", r.name.c_str(),
                             r.world.c_str(), r.context.c_str(), fmt_g17(r.residual).c_str());
                break;
            }
    }

    Manifest m;
    m.command = "verify";
    m.config = o.config_echo;
    m.world_name = w.name;
    m.world_hash = hex64(world_hash(w));
    m.seed = o.seed;
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, o.out_dir + "/manifest.json");
    return ok ? 0 : 1;
}

// --- train ------------------------------------------------------------------

struct TrainOpts {
    std::string world;
    TrainConfig train;
    std::string out_dir;
    nlohmann::json config_echo = nlohmann::json::object();
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["engine"] = train_engine_name(c.engine);
    j["lambda"] = c.lambda;
    j["contrast_count"] = c.contrast_count;
    j["topk"] = c.topk;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["group_size"] = c.group_size;
    j["steps"] = c.steps;
    j["ema_rate"] = c.ema_rate;
    j["divergence"] = divergence_name(c.divergence);
    j["jsd_alpha"] = c.jsd_alpha;
    j["temperature"] = c.temperature;
    j["clip_ratio"] = c.clip_ratio;
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    j["teacher"] = c.teacher_mode == TeacherMode::learned_table ? "learned" : "exact";
    return j;
}

inline const std::vector<std::string>& metrics_header() {
    static const std::vector<std::string> h = {
        "step",   "train_success_rate", "mean_entropy", "mean_realized_advantage",
        "advantage_std", "mean_S",      "mean_G",       "mean_pmi",
        "wall_time"};
    return h;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    CsvWriter csv(path);
    csv.row(metrics_header());
    for (const auto& r : rows)
        csv.row({std::to_string(r.step), fmt_g17(r.train_success_rate), fmt_g17(r.mean_entropy),
                 fmt_g17(r.mean_realized_advantage), fmt_g17(r.advantage_std), fmt_g17(r.mean_S),
                 fmt_g17(r.mean_G), fmt_g17(r.mean_pmi), fmt_g17(r.wall_time)});
}

inline int cmd_train(const TrainOpts& o) {
    Stopwatch timer;
    const WorldSpec w = resolve_world(o.world);
    ensure_dir(o.out_dir);
    CheckpointSink sink = [&](int step, const PolicyParams& p, const ReferenceState& ref) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_step%06d.json", step);
        save_checkpoint(Checkpoint{p, ref}, o.out_dir + "/" + name);
    };
    TrainResult result = run_training(w, o.train, sink);
    write_metrics_csv(o.out_dir + "/metrics.csv", result.metrics);
    save_checkpoint(Checkpoint{result.params, result.ref}, o.out_dir + "/checkpoint.json");

    Manifest m;
    m.command = "train";
    m.config = o.config_echo;
    m.world_name = w.name;
    m.world_hash = hex64(world_hash(w));
    m.seed = o.train.seed;
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, o.out_dir + "/manifest.json");

    const double final_success =
        result.metrics.empty() ? train_success_rate(w, result.params)
                               : result.metrics.back().train_success_rate;
    std::printf("engine %s  steps %d  final success %.4f\n", train_engine_name(o.train.engine),
                o.train.steps, final_success);
    return 0;
}

// --- compat -----------------------------------------------------------------

struct CompatOpts {
    std::string world;          // derive instances from a world's contexts
    std::string instances_csv;  // or read prepared instances from a file
    double noise = 0.0;         // >0 adds tilted copies of the world instances
    std::uint64_t seed = 0;
    std::string out_dir;
    nlohmann::json config_echo = nlohmann::json::object();
};

// File format, one instance per line after the header `id,L,Z,values`:
// id, L, Z, then L student entries, then Z rows of L teacher entries.
inline std::vector<CompatInstance> parse_instances_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open instances file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "id,L,Z,values")
        throw ParseError(path + ": expected header 'id,L,Z,values'");
    std::vector<CompatInstance> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        const auto fail = [&](const std::string& why) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + why);
        };
        if (fields.size() < 3) fail("need id,L,Z");
        CompatInstance inst;
        inst.id = fields[0];
        int L = 0, Z = 0;
        try {
            L = std::stoi(fields[1]);
            Z = std::stoi(fields[2]);
        } catch (const std::exception&) {
            fail("L and Z must be integers");
        }
        if (L < 1 || Z < 1) fail("L and Z must be positive");
        if (static_cast<int>(fields.size()) != 3 + L + Z * L)
            fail("expected " + std::to_string(3 + L + Z * L) + " fields, got " +
                 std::to_string(fields.size()));
        try {
            std::size_t k = 3;
            for (int l = 0; l < L; ++l) inst.student_projected.push_back(std::stod(fields[k++]));
            for (int z = 0; z < Z; ++z) {
                std::vector<double> row(L);
                for (int l = 0; l < L; ++l) row[l] = std::stod(fields[k++]);
                inst.teacher_matrix.push_back(std::move(row));
                inst.row_feedback_ids.push_back(z);
            }
        } catch (const std::exception&) {
            fail("non-numeric entry");
        }
        out.push_back(std::move(inst));
    }
    return out;
}

inline std::string join_doubles(const std::vector<double>& v, char sep = ';') {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += fmt_g17(v[i]);
    }
    return s;
}

inline int cmd_compat(const CompatOpts& o) {
    Stopwatch timer;
    std::vector<CompatInstance> instances;
    std::string world_name = "-", world_hash_hex = "-";
    if (!o.world.empty()) {
        const WorldSpec w = resolve_world(o.world);
        world_name = w.name;
        world_hash_hex = hex64(world_hash(w));
        const WorldPolicyBundle b = world_bundle(w);
        detail::for_each_prefix(w, [&](int x, const std::vector<int>& prefix) {
            instances.push_back(make_exact_instance(w, b.ref, x, prefix));
            if (o.noise > 0.0) {
                const std::uint64_t s =
                    o.seed ^ fnv1a64(instances.back().id);  // stable per-context stream
                instances.push_back(make_perturbed_instance(w, b.ref, x, prefix, o.noise, s));
            }
        });
    } else if (!o.instances_csv.empty()) {
        instances = parse_instances_csv(o.instances_csv);
    } else {
        throw ParseError("compat: need --world or --instances <csv>");
    }

    ensure_dir(o.out_dir);
    bool ok = true;
    std::vector<double> residuals;
    {
        CsvWriter csv(o.out_dir + "/compat.csv");
        csv.row({"id", "L", "Z", "residual", "uniform_baseline", "letter_mass", "non_unique",
                 "self_consistent", "prerequisite_failed", "min_fidelity", "mixture", "fidelity"});
        for (auto& inst : instances) {
            solve_instance(inst);
            const auto& sol = *inst.solution;
            // A feasible mixture can never beat the optimum; the uniform
            // mixture is feasible, so solver > uniform is a solver bug.
            if (sol.residual > inst.uniform_baseline_value + 1e-9 || sol.residual < -1e-12)
                ok = false;
            residuals.push_back(sol.residual);
            double min_fid = 1.0;
            for (double f : inst.fidelity) min_fid = std::min(min_fid, f);
            csv.row({inst.id, std::to_string(inst.student_projected.size()),
                     std::to_string(inst.teacher_matrix.size()), fmt_g17(sol.residual),
                     fmt_g17(inst.uniform_baseline_value), fmt_g17(inst.letter_mass),
                     csv_bool(sol.non_unique), self_consistency_name(inst.self_consistent),
                     csv_bool(inst.prerequisite_failed),
                     inst.fidelity.empty() ? "-" : fmt_g17(min_fid), join_doubles(sol.p_hat),
                     inst.fidelity.empty() ? "-" : join_doubles(inst.fidelity)});
        }
    }
    {
        std::sort(residuals.begin(), residuals.end());
        CsvWriter csv(o.out_dir + "/summary.csv");
        csv.row({"fraction", "residual"});
        for (std::size_t i = 0; i < residuals.size(); ++i)
            csv.row({fmt_g17(static_cast<double>(i + 1) / static_cast<double>(residuals.size())),
                     fmt_g17(residuals[i])});
    }
    std::printf("%zu instances, residual median %s max %s\n", residuals.size(),
                residuals.empty() ? "-" : fmt_g17(residuals[residuals.size() / 2]).c_str(),
                residuals.empty() ? "-" : fmt_g17(residuals.back()).c_str());

    Manifest m;
    m.command = "compat";
    m.config = o.config_echo;
    m.world_name = world_name;
    m.world_hash = world_hash_hex;
    m.seed = o.seed;
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, o.out_dir + "/manifest.json");
    return ok ? 0 : 1;
}

// --- causal -----------------------------------------------------------------

struct CausalOpts {
    std::string world;
    std::vector<double> q1, q0;  // optional custom channel
    std::string out_dir;
    nlohmann::json config_echo = nlohmann::json::object();
};

inline int cmd_causal(const CausalOpts& o) {
    Stopwatch timer;
    const WorldSpec w = resolve_world(o.world);
    if (!w.has_outcomes())
        throw ParseError("causal: world '" + w.name + "' has no outcome map");
    if (o.q1.size() != o.q0.size()) throw ParseError("causal: q1 and q0 must have equal length");

    std::vector<std::pair<std::string, OSFChannel>> channels;
    if (!o.q1.empty()) {
        channels.emplace_back("custom", OSFChannel{o.q1, o.q0});
    } else {
        channels.emplace_back("identity", identity_channel());
        channels.emplace_back("noisy", OSFChannel{{0.2, 0.8}, {0.7, 0.3}});
        channels.emplace_back("one-sided", OSFChannel{{0.3, 0.7}, {1.0, 0.0}});
    }

    std::vector<CausalReport> reports;
    for (const auto& [label, ch] : channels) {
        auto add = [&](std::vector<CausalReport> r) {
            for (auto& rep : r) {
                rep.context = label + " " + rep.context;
                reports.push_back(std::move(rep));
            }
        };
        add(sweep_affine(w, ch));
        add(sweep_rank(w, ch));
        add(sweep_gap_identity(w, ch));
        for (int z = 0; z < static_cast<int>(ch.q1.size()); ++z)
            if (ch.q0[z] == 0.0 && ch.q1[z] > 0.0) add(sweep_witness(w, ch, z));
    }

    ensure_dir(o.out_dir);
    {
        CsvWriter csv(o.out_dir + "/causal.csv");
        csv.row({"family", "world", "context_hash", "status", "value", "tolerance"});
        for (const auto& r : reports)
            csv.row({r.family, r.world, ctx_hash(r.context), check_status_name(r.status),
                     fmt_g17(r.value), fmt_g17(r.tolerance)});
    }
    struct Tally {
        std::string family;
        long long pass = 0, fail = 0, skipped = 0;
        double max_value = 0.0;
    };
    std::vector<Tally> tallies;
    for (const auto& r : reports) {
        Tally* t = nullptr;
        for (auto& cand : tallies)
            if (cand.family == r.family) t = &cand;
        if (!t) {
            tallies.push_back({r.family, 0, 0, 0, 0.0});
            t = &tallies.back();
        }
        if (r.status == CheckStatus::pass) {
            ++t->pass;
            t->max_value = std::max(t->max_value, r.value);
        } else if (r.status == CheckStatus::fail) {
            ++t->fail;
        } else {
            ++t->skipped;
        }
    }
    bool ok = true;
    {
        CsvWriter csv(o.out_dir + "/summary.csv");
        csv.row({"family", "pass", "fail", "precondition_not_met", "max_value"});
        for (const auto& t : tallies) {
            csv.row({t.family, std::to_string(t.pass), std::to_string(t.fail),
                     std::to_string(t.skipped), fmt_g17(t.max_value)});
            ok = ok && t.fail == 0;
            std::printf("%-20s pass %-5lld fail %-5lld skipped %-5lld max %s\n", t.family.c_str(),
                        t.pass, t.fail, t.skipped, fmt_g17(t.max_value).c_str());
        }
    }

    Manifest m;
    m.command = "causal";
    m.config = o.config_echo;
    m.world_name = w.name;
    m.world_hash = hex64(world_hash(w));
    m.seed = 0;
    m.elapsed_seconds = timer.seconds();
    write_manifest(m, o.out_dir + "/manifest.json");
    return ok ? 0 : 1;
}

// --- heatmap ----------------------------------------------------------------

struct HeatmapOpts {
    std::string world;
    int input_id = 0;
    std::vector<int> tokens;
    int feedback_id = 0;
    std::vector<std::string> kinds = {"dv", "s"};
    double lambda = 0.1;
    std::string out;  // .svg path
};

inline int cmd_heatmap(const HeatmapOpts& o) {
    const WorldSpec w = resolve_world(o.world);
    Trajectory traj{o.input_id, o.tokens, o.feedback_id, {}};
    try {
        check_trajectory(w, traj);
    } catch (const Error& e) {
        throw ParseError(std::string("heatmap: ") + e.what());
    }
    if (o.out.empty()) throw ParseError("heatmap: an output .svg path is required (--out)");
    const auto rows = trajectory_score_rows(w, traj, o.kinds, o.lambda);
    const std::string title = w.name + "  x=" + std::to_string(o.input_id) + " y=[" +
                              join_ints(o.tokens, ' ') + "] z=" + std::to_string(o.feedback_id);
    if (const auto parent = std::filesystem::path(o.out).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    write_text_file(o.out, render_heatmap_svg(title, rows));
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

}  // namespace cli
}  // namespace credlab
