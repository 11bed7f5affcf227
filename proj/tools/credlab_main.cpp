// Command-line driver. Flag wiring only; the commands live in cli.hpp.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 unusable input
// (bad flags, malformed config/world files).

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "credlab/cli.hpp"

namespace {

using credlab::StrictConfig;
using credlab::TeacherMode;
using credlab::TrainConfig;

TeacherMode parse_teacher(const std::string& s) {
    if (s == "exact") return TeacherMode::exact_posterior;
    if (s == "learned") return TeacherMode::learned_table;
    throw credlab::ParseError("unknown teacher mode '" + s + "' (exact|learned)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exact conservation checks and tabular training for "
                 "feedback-distillation token scores"};
    app.require_subcommand(1);
    std::function<int()> runner;

    // ---- world gen / validate ----
    auto* world_cmd = app.add_subcommand("world", "generate or validate world files");
    world_cmd->require_subcommand(1);

    credlab::cli::WorldGenOpts gen_opts;
    auto* gen = world_cmd->add_subcommand("gen", "write a canonical world file");
    gen->add_option("--builtin", gen_opts.builtin,
                    "named world: w-ind, w-last, w-verify, w-shortcut, w-rand-<seed>");
    gen->add_flag("--rand", gen_opts.rand, "generate a seeded random world");
    gen->add_option("--seed", gen_opts.seed, "seed for --rand");
    gen->add_option("--out", gen_opts.out, "output .json file, or directory for <name>.json");
    gen->callback([&] { runner = [&] { return credlab::cli::cmd_world_gen(gen_opts); }; });

    std::string validate_path;
    auto* val = world_cmd->add_subcommand("validate", "check a world file's invariants");
    val->add_option("path", validate_path, "world .json file")->required();
    val->callback([&] { runner = [&] { return credlab::cli::cmd_world_validate(validate_path); }; });

    // ---- verify ----
    auto* verify = app.add_subcommand("verify", "run identity-check sweeps over a world");
    std::string verify_world, verify_config, verify_out;
    std::vector<std::string> verify_families;
    bool inject = false;
    std::uint64_t verify_seed = 0;
    verify->add_option("--world", verify_world, "builtin name or world file");
    verify->add_option("--config", verify_config, "JSON config file");
    verify->add_option("--families", verify_families, "subset of check families")->delimiter(',');
    verify->add_option("--out", verify_out, "output directory");
    verify->add_flag("--inject-incompat", inject,
                     "replace the teacher with a noisy learned table (checks must fail)");
    verify->add_option("--seed", verify_seed, "seed for the injected noise");
    verify->callback([&] {
        runner = [&] {
            StrictConfig cfg =
                verify_config.empty() ? StrictConfig() : StrictConfig(verify_config);
            credlab::cli::VerifyOpts o;
            o.world = verify->count("--world") ? verify_world
                                               : cfg.get<std::string>("world", verify_world);
            o.families = verify->count("--families")
                             ? verify_families
                             : cfg.get<std::vector<std::string>>("families", {});
            o.inject_incompat =
                inject || cfg.get<bool>("inject_incompat", false);
            o.seed = verify->count("--seed") ? verify_seed
                                             : cfg.get<std::uint64_t>("seed", verify_seed);
            o.out_dir = verify_out;
            cfg.finish();
            o.config_echo = {{"world", o.world},
                             {"families", o.families},
                             {"inject_incompat", o.inject_incompat},
                             {"seed", o.seed}};
            return credlab::cli::cmd_verify(o);
        };
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "run the tabular training loop");
    std::string train_world, train_config, train_out;
    std::string engine_s = "credit", divergence_s = "reverse-kl", teacher_s = "exact";
    TrainConfig tdef;  // flag defaults mirror the struct defaults
    double lambda = tdef.lambda, lr = tdef.learning_rate, ema = tdef.ema_rate;
    double jsd_alpha = tdef.jsd_alpha, temperature = tdef.temperature, clip = tdef.clip_ratio;
    int contrast = tdef.contrast_count, topk = tdef.topk, batch = tdef.batch_size;
    int group = tdef.group_size, steps = tdef.steps, ckpt_every = tdef.checkpoint_every;
    std::uint64_t train_seed = tdef.seed;
    train->add_option("--world", train_world, "builtin name or world file");
    train->add_option("--config", train_config, "JSON config file");
    train->add_option("--out", train_out, "output directory");
    train->add_option("--engine", engine_s, "grpo|sd|credit|full-ratio");
    train->add_option("--lambda", lambda, "contrastive subtraction weight");
    train->add_option("--contrast-count", contrast, "contrastive inputs per estimate");
    train->add_option("--topk", topk, "teacher top-k support for the update");
    train->add_option("--learning-rate", lr, "ascent step size");
    train->add_option("--batch-size", batch, "inputs per step");
    train->add_option("--group-size", group, "rollouts per input");
    train->add_option("--steps", steps, "training steps");
    train->add_option("--ema-rate", ema, "reference update rate");
    train->add_option("--divergence", divergence_s, "reverse-kl|jsd");
    train->add_option("--jsd-alpha", jsd_alpha, "teacher share of the jsd mixture");
    train->add_option("--temperature", temperature, "sampling temperature");
    train->add_option("--clip-ratio", clip, "ratio clip (inert at one update per batch)");
    train->add_option("--seed", train_seed, "run seed");
    train->add_option("--checkpoint-every", ckpt_every, "steps between checkpoints (0 = none)");
    train->add_option("--teacher", teacher_s, "exact|learned");
    train->callback([&] {
        runner = [&] {
            StrictConfig cfg = train_config.empty() ? StrictConfig() : StrictConfig(train_config);
            auto flag_or = [&](const char* flag, auto flag_value, const char* key, auto dflt) {
                using T = decltype(dflt);
                return train->count(flag) ? static_cast<T>(flag_value) : cfg.get<T>(key, dflt);
            };
            credlab::cli::TrainOpts o;
            o.world = train->count("--world") ? train_world
                                              : cfg.get<std::string>("world", train_world);
            o.out_dir = train_out;
            TrainConfig d;
            TrainConfig& t = o.train;
            t.engine = credlab::parse_train_engine(
                flag_or("--engine", engine_s, "engine", std::string("credit")));
            t.lambda = flag_or("--lambda", lambda, "lambda", d.lambda);
            t.contrast_count = flag_or("--contrast-count", contrast, "contrast_count",
                                       d.contrast_count);
            t.topk = flag_or("--topk", topk, "topk", d.topk);
            t.learning_rate = flag_or("--learning-rate", lr, "learning_rate", d.learning_rate);
            t.batch_size = flag_or("--batch-size", batch, "batch_size", d.batch_size);
            t.group_size = flag_or("--group-size", group, "group_size", d.group_size);
            t.steps = flag_or("--steps", steps, "steps", d.steps);
            t.ema_rate = flag_or("--ema-rate", ema, "ema_rate", d.ema_rate);
            t.divergence = credlab::parse_divergence(
                flag_or("--divergence", divergence_s, "divergence", std::string("reverse-kl")));
            t.jsd_alpha = flag_or("--jsd-alpha", jsd_alpha, "jsd_alpha", d.jsd_alpha);
            t.temperature = flag_or("--temperature", temperature, "temperature", d.temperature);
            t.clip_ratio = flag_or("--clip-ratio", clip, "clip_ratio", d.clip_ratio);
            t.seed = flag_or("--seed", train_seed, "seed", d.seed);
            t.checkpoint_every = flag_or("--checkpoint-every", ckpt_every, "checkpoint_every",
                                         d.checkpoint_every);
            t.teacher_mode =
                parse_teacher(flag_or("--teacher", teacher_s, "teacher", std::string("exact")));
            cfg.finish();
            o.config_echo = credlab::cli::train_config_to_json(t);
            o.config_echo["world"] = o.world;
            return credlab::cli::cmd_train(o);
        };
    });

    // ---- compat ----
    auto* compat = app.add_subcommand("compat", "posterior-compatibility diagnostics");
    std::string compat_world, compat_config, compat_instances, compat_out;
    double compat_noise = 0.0;
    std::uint64_t compat_seed = 0;
    compat->add_option("--world", compat_world, "derive instances from this world");
    compat->add_option("--instances", compat_instances, "read instances from a csv file");
    compat->add_option("--config", compat_config, "JSON config file");
    compat->add_option("--noise", compat_noise, "also emit noise-tilted (incompatible) copies");
    compat->add_option("--seed", compat_seed, "seed for the tilt noise");
    compat->add_option("--out", compat_out, "output directory");
    compat->callback([&] {
        runner = [&] {
            StrictConfig cfg =
                compat_config.empty() ? StrictConfig() : StrictConfig(compat_config);
            credlab::cli::CompatOpts o;
            o.world = compat->count("--world") ? compat_world
                                               : cfg.get<std::string>("world", compat_world);
            o.instances_csv = compat_instances;
            o.noise = compat->count("--noise") ? compat_noise
                                               : cfg.get<double>("noise", compat_noise);
            o.seed = compat->count("--seed") ? compat_seed
                                             : cfg.get<std::uint64_t>("seed", compat_seed);
            o.out_dir = compat_out;
            cfg.finish();
            o.config_echo = {{"world", o.world},
                             {"instances", o.instances_csv},
                             {"noise", o.noise},
                             {"seed", o.seed}};
            return credlab::cli::cmd_compat(o);
        };
    });

    // ---- causal ----
    auto* causal = app.add_subcommand("causal", "interventional-score diagnostics");
    std::string causal_world, causal_config, causal_out;
    std::vector<double> q1, q0;
    causal->add_option("--world", causal_world, "world with an outcome map");
    causal->add_option("--config", causal_config, "JSON config file");
    causal->add_option("--q1", q1, "feedback emission row given success")->delimiter(',');
    causal->add_option("--q0", q0, "feedback emission row given failure")->delimiter(',');
    causal->add_option("--out", causal_out, "output directory");
    causal->callback([&] {
        runner = [&] {
            StrictConfig cfg =
                causal_config.empty() ? StrictConfig() : StrictConfig(causal_config);
            credlab::cli::CausalOpts o;
            o.world = causal->count("--world") ? causal_world
                                               : cfg.get<std::string>("world", causal_world);
            o.q1 = causal->count("--q1") ? q1 : cfg.get<std::vector<double>>("q1", {});
            o.q0 = causal->count("--q0") ? q0 : cfg.get<std::vector<double>>("q0", {});
            o.out_dir = causal_out;
            cfg.finish();
            o.config_echo = {{"world", o.world}, {"q1", o.q1}, {"q0", o.q0}};
            return credlab::cli::cmd_causal(o);
        };
    });

    // ---- heatmap ----
    auto* heatmap = app.add_subcommand("heatmap", "render realized score strips as svg");
    credlab::cli::HeatmapOpts hopts;
    heatmap->add_option("--world", hopts.world, "builtin name or world file");
    heatmap->add_option("--input", hopts.input_id, "input id");
    heatmap->add_option("--tokens", hopts.tokens, "response tokens")->delimiter(',')->required();
    heatmap->add_option("--feedback", hopts.feedback_id, "observed feedback id");
    heatmap->add_option("--kinds", hopts.kinds, "score kinds: dv,s,g,credit")->delimiter(',');
    heatmap->add_option("--lambda", hopts.lambda, "weight for the credit kind");
    heatmap->add_option("--out", hopts.out, "output .svg path");
    heatmap->callback([&] { runner = [&] { return credlab::cli::cmd_heatmap(hopts); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return runner ? runner() : 2;
    } catch (const credlab::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
