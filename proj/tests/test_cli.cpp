#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "credlab/cli.hpp"
#include "credlab/config.hpp"
#include "credlab/csvio.hpp"
#include "credlab/policy_io.hpp"

using namespace credlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) out.push_back(line);
    return out;
}

std::string fresh_dir(const std::string& stem) {
    const std::string d = "/tmp/credlab-test-" + stem;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

}  // namespace

TEST_CASE("strict config reads values once and rejects leftovers") {
    const auto dir = fresh_dir("config");
    const auto path = dir + "/c.json";
    {
        std::ofstream f(path);
        f << R"({"steps": 7, "engine": "sd"})";
    }
    StrictConfig cfg(path);
    REQUIRE(cfg.has("steps"));
    REQUIRE(cfg.get<int>("steps", 0) == 7);
    REQUIRE(cfg.get<std::string>("engine", "credit") == "sd");
    REQUIRE(cfg.get<double>("lambda", 0.25) == 0.25);  // fallback path
    REQUIRE_NOTHROW(cfg.finish());

    StrictConfig partial(path);
    REQUIRE(partial.get<int>("steps", 0) == 7);
    REQUIRE_THROWS_AS(partial.finish(), ParseError);  // "engine" unread

    {
        std::ofstream f(path);
        f << "[1,2]";
    }
    REQUIRE_THROWS_AS(StrictConfig(path), ParseError);
    {
        std::ofstream f(path);
        f << "{ bad";
    }
    REQUIRE_THROWS_AS(StrictConfig(path), ParseError);
    REQUIRE_THROWS_AS(StrictConfig(dir + "/missing.json"), ParseError);
}

TEST_CASE("csv writer emits comma-joined rows with unix newlines") {
    const auto dir = fresh_dir("csv");
    const auto path = dir + "/t.csv";
    {
        CsvWriter csv(path);
        csv.row({"a", "b"});
        csv.row({"1", "2"});
    }
    REQUIRE(slurp(path) == "a,b\n1,2\n");
    REQUIRE(csv_bool(true) == "1");
    REQUIRE(csv_bool(false) == "0");
}

TEST_CASE("printed doubles round-trip exactly") {
    for (double v : {1.0 / 3.0, 0.1, -2.5e-14, 1e300, 0.0, 13.815510557964274}) {
        const std::string s = fmt_g17(v);
        REQUIRE(std::stod(s) == v);
    }
    REQUIRE(hex64(fnv1a64("")) == "cbf29ce484222325");
}

TEST_CASE("world generation writes a loadable, validated file") {
    const auto dir = fresh_dir("worldgen");
    cli::WorldGenOpts o;
    o.builtin = "w-verify";
    o.out = dir + "/w.json";
    REQUIRE(cli::cmd_world_gen(o) == 0);
    REQUIRE(cli::cmd_world_validate(dir + "/w.json") == 0);
    REQUIRE(load_world(dir + "/w.json").name == "w-verify");

    // Directory target: the file is named after the world.
    cli::WorldGenOpts d;
    d.rand = true;
    d.seed = 9;
    d.out = dir + "/sub";
    REQUIRE(cli::cmd_world_gen(d) == 0);
    REQUIRE(fs::exists(dir + "/sub/w-rand-9.json"));

    // Exactly one source must be chosen.
    cli::WorldGenOpts both;
    both.builtin = "w-ind";
    both.rand = true;
    REQUIRE_THROWS_AS(cli::cmd_world_gen(both), ParseError);
    cli::WorldGenOpts neither;
    REQUIRE_THROWS_AS(cli::cmd_world_gen(neither), ParseError);

    // Same seed, same bytes.
    cli::WorldGenOpts r1;
    r1.rand = true;
    r1.seed = 7;
    r1.out = dir + "/a.json";
    cli::WorldGenOpts r2 = r1;
    r2.out = dir + "/b.json";
    REQUIRE(cli::cmd_world_gen(r1) == 0);
    REQUIRE(cli::cmd_world_gen(r2) == 0);
    REQUIRE(slurp(dir + "/a.json") == slurp(dir + "/b.json"));
}

TEST_CASE("validation command flags a corrupted world file") {
    const auto dir = fresh_dir("worldbad");
    auto w = make_w_verify();
    w.policy_table[2] += 0.4;
    save_world(w, dir + "/bad.json");
    REQUIRE(cli::cmd_world_validate(dir + "/bad.json") == 1);
    REQUIRE_THROWS_AS(cli::cmd_world_validate(dir + "/nothere.json"), Error);
}

TEST_CASE("resolve accepts builtin names and validated files only") {
    REQUIRE(cli::resolve_world("w-ind").name == "w-ind");
    const auto dir = fresh_dir("resolve");
    auto w = make_w_ind();
    w.input_prior = {0.9, 0.2};
    save_world(w, dir + "/broken.json");
    REQUIRE_THROWS_AS(cli::resolve_world(dir + "/broken.json"), Error);
    REQUIRE_THROWS_AS(cli::resolve_world(""), ParseError);
}

TEST_CASE("verify writes per-check and per-family tables and passes clean worlds") {
    const auto dir = fresh_dir("verify");
    cli::VerifyOpts o;
    o.world = "w-ind";
    o.out_dir = dir;
    REQUIRE(cli::cmd_verify(o) == 0);

    const auto checks = lines_of(dir + "/checks.csv");
    REQUIRE(checks.front() == "name,world,context_hash,lhs,rhs,residual,pass");
    REQUIRE(checks.size() > 100);
    for (std::size_t i = 1; i < checks.size(); ++i)
        REQUIRE(split_csv(checks[i]).back() == "1");

    const auto summary = lines_of(dir + "/summary.csv");
    REQUIRE(summary.front() == "family,count,max_abs_residual,all_passed");
    REQUIRE(summary.size() >= 7);  // one row per family that produced checks
    for (std::size_t i = 1; i < summary.size(); ++i)
        REQUIRE(split_csv(summary[i]).back() == "1");

    const auto manifest = nlohmann::json::parse(slurp(dir + "/manifest.json"));
    REQUIRE(manifest.at("command") == "verify");
    REQUIRE(manifest.at("world_name") == "w-ind");
    REQUIRE(manifest.contains("elapsed_seconds"));
    REQUIRE(manifest.at("version") == "0.1.0");

    // Byte-level reproducibility of everything except the timing manifest.
    const auto dir2 = fresh_dir("verify2");
    cli::VerifyOpts o2 = o;
    o2.out_dir = dir2;
    REQUIRE(cli::cmd_verify(o2) == 0);
    REQUIRE(slurp(dir + "/checks.csv") == slurp(dir2 + "/checks.csv"));
    REQUIRE(slurp(dir + "/summary.csv") == slurp(dir2 + "/summary.csv"));
}

TEST_CASE("verify narrows to requested families") {
    const auto dir = fresh_dir("verifyfam");
    cli::VerifyOpts o;
    o.world = "w-verify";
    o.families = {"telescoping", "jensen"};
    o.out_dir = dir;
    REQUIRE(cli::cmd_verify(o) == 0);
    const auto summary = lines_of(dir + "/summary.csv");
    REQUIRE(summary.size() == 3);  // header + 2 families
    REQUIRE(split_csv(summary[1]).front() == "telescoping");
    REQUIRE(split_csv(summary[2]).front() == "jensen");

    cli::VerifyOpts bad = o;
    bad.families = {"unknown-family"};
    REQUIRE_THROWS_AS(cli::cmd_verify(bad), ParseError);
}

TEST_CASE("verify detects an injected incompatible teacher") {
    const auto dir = fresh_dir("verifybad");
    cli::VerifyOpts o;
    o.world = "w-verify";
    o.families = {"telescoping"};
    o.inject_incompat = true;
    o.seed = 3;
    o.out_dir = dir;
    REQUIRE(cli::cmd_verify(o) == 1);
    const auto summary = lines_of(dir + "/summary.csv");
    REQUIRE(split_csv(summary[1]).back() == "0");
}

TEST_CASE("train writes metrics, checkpoints, and a manifest deterministically") {
    const auto dir = fresh_dir("train");
    cli::TrainOpts o;
    o.world = "w-verify";
    o.out_dir = dir;
    o.train.engine = TrainEngine::credit;
    o.train.lambda = 0.1;
    o.train.steps = 6;
    o.train.checkpoint_every = 3;
    o.train.seed = 2;
    o.config_echo = cli::train_config_to_json(o.train);
    REQUIRE(cli::cmd_train(o) == 0);

    const auto metrics = lines_of(dir + "/metrics.csv");
    REQUIRE(metrics.front() ==
            "step,train_success_rate,mean_entropy,mean_realized_advantage,advantage_std,"
            "mean_S,mean_G,mean_pmi,wall_time");
    REQUIRE(metrics.size() == 7);  // header + one row per step
    for (std::size_t i = 1; i < metrics.size(); ++i) {
        const auto fields = split_csv(metrics[i]);
        REQUIRE(fields.front() == std::to_string(i));
        REQUIRE(fields.back() == "0");  // wall time pinned for reproducibility
    }

    REQUIRE(fs::exists(dir + "/checkpoint_step000003.json"));
    REQUIRE(fs::exists(dir + "/checkpoint_step000006.json"));
    const auto final_ck = load_checkpoint(dir + "/checkpoint.json");
    REQUIRE(final_ck.params.version == 6);

    const auto manifest = nlohmann::json::parse(slurp(dir + "/manifest.json"));
    REQUIRE(manifest.at("command") == "train");
    REQUIRE(manifest.at("config").at("engine") == "credit");
    REQUIRE(manifest.at("config").at("steps") == 6);

    const auto dir2 = fresh_dir("train2");
    cli::TrainOpts o2 = o;
    o2.out_dir = dir2;
    REQUIRE(cli::cmd_train(o2) == 0);
    REQUIRE(slurp(dir + "/metrics.csv") == slurp(dir2 + "/metrics.csv"));
    REQUIRE(slurp(dir + "/checkpoint.json") == slurp(dir2 + "/checkpoint.json"));
}

TEST_CASE("compat over a world emits residual tables obeying the baseline bound") {
    const auto dir = fresh_dir("compat");
    cli::CompatOpts o;
    o.world = "w-rand-1";
    o.noise = 0.5;
    o.seed = 4;
    o.out_dir = dir;
    REQUIRE(cli::cmd_compat(o) == 0);

    const auto rows = lines_of(dir + "/compat.csv");
    REQUIRE(split_csv(rows.front()) ==
            std::vector<std::string>{"id", "L", "Z", "residual", "uniform_baseline", "letter_mass",
                                     "non_unique", "self_consistent", "prerequisite_failed",
                                     "min_fidelity", "mixture", "fidelity"});
    // 3 inputs x 4 prefixes, exact + perturbed each.
    REQUIRE(rows.size() == 1 + 24);
    int perturbed = 0;
    double max_perturbed = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto f = split_csv(rows[i]);
        const double residual = std::stod(f[3]);
        const double uniform = std::stod(f[4]);
        REQUIRE(residual >= -1e-12);
        REQUIRE(residual <= uniform + 1e-9);
        if (f[0].find("perturbed") != std::string::npos) {
            ++perturbed;
            max_perturbed = std::max(max_perturbed, residual);
        } else {
            REQUIRE(residual < 1e-8);
        }
    }
    REQUIRE(perturbed == 12);
    REQUIRE(max_perturbed > 1e-3);  // the tilt pushes at least some instances off-manifold

    const auto cdf = lines_of(dir + "/summary.csv");
    REQUIRE(cdf.front() == "fraction,residual");
    double prev = -1.0;
    for (std::size_t i = 1; i < cdf.size(); ++i) {
        const double r = std::stod(split_csv(cdf[i])[1]);
        REQUIRE(r >= prev);  // sorted ascending
        prev = r;
    }

    const auto dir2 = fresh_dir("compat2");
    cli::CompatOpts o2 = o;
    o2.out_dir = dir2;
    REQUIRE(cli::cmd_compat(o2) == 0);
    REQUIRE(slurp(dir + "/compat.csv") == slurp(dir2 + "/compat.csv"));
}

TEST_CASE("compat reads prepared instance files and rejects malformed ones") {
    const auto dir = fresh_dir("compatcsv");
    const auto path = dir + "/inst.csv";
    {
        std::ofstream f(path);
        f << "id,L,Z,values\n";
        f << "pair,2,2,0.5,0.5,0.9,0.1,0.1,0.9\n";
        f << "skew,2,2,0.7,0.3,0.6,0.4,0.2,0.8\n";
    }
    const auto instances = cli::parse_instances_csv(path);
    REQUIRE(instances.size() == 2);
    REQUIRE(instances[0].id == "pair");
    REQUIRE(instances[0].student_projected == std::vector<double>{0.5, 0.5});
    REQUIRE(instances[1].teacher_matrix[1] == std::vector<double>{0.2, 0.8});

    cli::CompatOpts o;
    o.instances_csv = path;
    o.out_dir = dir;
    REQUIRE(cli::cmd_compat(o) == 0);
    REQUIRE(lines_of(dir + "/compat.csv").size() == 3);

    {
        std::ofstream f(path);
        f << "wrong,header\n";
    }
    REQUIRE_THROWS_AS(cli::parse_instances_csv(path), ParseError);
    {
        std::ofstream f(path);
        f << "id,L,Z,values\n";
        f << "short,2,2,0.5,0.5,0.9\n";
    }
    try {
        cli::parse_instances_csv(path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);  // names the bad line
    }
}

TEST_CASE("causal sweeps write status tables for outcome worlds only") {
    const auto dir = fresh_dir("causal");
    cli::CausalOpts o;
    o.world = "w-verify";
    o.out_dir = dir;
    REQUIRE(cli::cmd_causal(o) == 0);

    const auto rows = lines_of(dir + "/causal.csv");
    REQUIRE(rows.front() == "family,world,context_hash,status,value,tolerance");
    bool saw_witness = false, saw_skip = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto f = split_csv(rows[i]);
        REQUIRE(f[3] != "fail");
        saw_witness = saw_witness || f[0] == "one-sided-witness";
        saw_skip = saw_skip || f[3] == "precondition-not-met";
    }
    REQUIRE(saw_witness);
    REQUIRE(saw_skip);

    const auto summary = lines_of(dir + "/summary.csv");
    REQUIRE(summary.front() == "family,pass,fail,precondition_not_met,max_value");
    for (std::size_t i = 1; i < summary.size(); ++i)
        REQUIRE(split_csv(summary[i])[2] == "0");  // no failures anywhere

    cli::CausalOpts bad;
    bad.world = "w-ind";
    bad.out_dir = dir;
    REQUIRE_THROWS_AS(cli::cmd_causal(bad), ParseError);

    cli::CausalOpts custom = o;
    custom.q1 = {0.1, 0.9};
    custom.q0 = {0.8, 0.2};
    custom.out_dir = fresh_dir("causal-custom");
    REQUIRE(cli::cmd_causal(custom) == 0);
    const auto crows = lines_of(custom.out_dir + "/causal.csv");
    REQUIRE(crows.size() > 1);

    cli::CausalOpts mismatched = custom;
    mismatched.q0 = {1.0};
    REQUIRE_THROWS_AS(cli::cmd_causal(mismatched), ParseError);
}

TEST_CASE("heatmap renders deterministic svg score strips") {
    const auto dir = fresh_dir("heatmap");
    cli::HeatmapOpts o;
    o.world = "w-verify";
    o.input_id = 0;
    o.tokens = {0, 0};
    o.feedback_id = 1;
    o.kinds = {"dv", "s", "g", "credit"};
    o.out = dir + "/h.svg";
    REQUIRE(cli::cmd_heatmap(o) == 0);
    const auto svg = slurp(dir + "/h.svg");
    REQUIRE(svg.rfind("<svg", 0) == 0);
    REQUIRE(svg.find("<rect") != std::string::npos);
    REQUIRE(svg.find("dv") != std::string::npos);
    REQUIRE(svg.find("credit") != std::string::npos);

    cli::HeatmapOpts o2 = o;
    o2.out = dir + "/h2.svg";
    REQUIRE(cli::cmd_heatmap(o2) == 0);
    REQUIRE(svg == slurp(dir + "/h2.svg"));

    cli::HeatmapOpts bad = o;
    bad.tokens = {0, 9};
    bad.out = dir + "/bad.svg";
    REQUIRE_THROWS_AS(cli::cmd_heatmap(bad), ParseError);
    cli::HeatmapOpts unknown = o;
    unknown.kinds = {"mystery"};
    unknown.out = dir + "/u.svg";
    REQUIRE_THROWS_AS(cli::cmd_heatmap(unknown), ParseError);
}
