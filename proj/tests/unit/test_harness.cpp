#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rampmerge/harness.hpp"

using namespace rampmerge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rampmerge_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream is(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(RAMPMERGE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ------------------------------------------------------------------ config

TEST(Config, DefaultsRoundTripThroughJson) {
    const config::RunConfig c;
    const config::RunConfig back = config::from_json(config::to_json(c));
    EXPECT_EQ(config::to_json(back), config::to_json(c));
    EXPECT_EQ(config::config_hash(back), config::config_hash(c));
    EXPECT_EQ(config::config_hash(c).size(), 16u);
}

TEST(Config, EmptyFileMeansDefaults) {
    const fs::path dir = scratch("empty_cfg");
    std::ofstream(dir / "empty.json") << "  \n";
    const config::RunConfig c = config::load_config((dir / "empty.json").string());
    EXPECT_EQ(config::to_json(c), config::to_json(config::RunConfig{}));
}

TEST(Config, OverridesApplyAndChangeHash) {
    const config::RunConfig base;
    const config::RunConfig c = config::load_config("", {"reward.w_j=0", "hidden=32"});
    EXPECT_EQ(c.env.reward.w_j, 0.0);
    EXPECT_EQ(c.sac.hidden, 32);
    EXPECT_NE(config::config_hash(c), config::config_hash(base));
    // Learner settings do not change the world hash.
    const config::RunConfig s = config::load_config("", {"sac.lr_actor=0.001"});
    EXPECT_EQ(config::config_hash(s), config::config_hash(base));
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(config::load_config("", {"phev.q_max=-5"}), ConfigError);
    EXPECT_THROW(config::load_config("", {"reward.w_z=1"}), ConfigError);
    EXPECT_THROW(config::load_config("", {"nosuchkey=1"}), ConfigError);
    EXPECT_THROW(config::load_config("", {"noequals"}), ConfigError);
    EXPECT_THROW(config::load_config("", {"reward.w_j=\"high\""}), ConfigError);
    EXPECT_THROW(config::load_config("/nonexistent/cfg.json"), ConfigError);
    EXPECT_THROW(config::from_json(fields::json{{"turbo", {{"x", 1}}}}), ConfigError);
    EXPECT_THROW(config::from_json(fields::json{{"schema_version", 99}}), ConfigError);
    const fs::path dir = scratch("bad_cfg");
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(config::load_config((dir / "bad.json").string()), ConfigError);
}

TEST(Config, ShippedVehicleFileMatchesDefaults) {
    const fields::json j = config::read_json_file(std::string(RAMPMERGE_CONFIG_DIR) + "/prius_plugin_2015.json");
    config::RunConfig c;
    config::apply_json(c, fields::json{{"phev", j}});
    EXPECT_EQ(config::config_hash(c), config::config_hash(config::RunConfig{}));
}

// -------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsBitwise) {
    const fs::path dir = scratch("ckpt");
    config::RunConfig cfg;
    cfg.sac.hidden = 16;
    sac::SacAgent<harness::Real> agent(12, 2, cfg.sac, 5);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<double>> probes;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> o(12);
        for (auto& x : o) x = n(rng);
        agent.policy().norm().update(o);
        probes.push_back(o);
    }
    agent.policy().actor().init(rng, 1.0);
    const std::string path = (dir / "p.ckpt").string();
    checkpoint::save_policy(path, agent.policy(), checkpoint::make_header(env::Approach::coop, cfg, 5));
    const auto lp = checkpoint::load_policy<harness::Real>(path);
    EXPECT_EQ(lp.header.config_hash, config::config_hash(cfg));
    EXPECT_EQ(lp.policy.norm().mean(), agent.policy().norm().mean());
    EXPECT_EQ(lp.policy.norm().m2(), agent.policy().norm().m2());
    for (const auto& o : probes) {
        std::mt19937_64 r1(9), r2(9);
        EXPECT_EQ(agent.policy().act(o, true, r1), lp.policy.act(o, true, r2));
        EXPECT_EQ(agent.policy().act(o, false, r1), lp.policy.act(o, false, r2));
    }
}

TEST(Checkpoint, RefusesMismatchesAndCorruption) {
    const fs::path dir = scratch("ckpt_bad");
    config::RunConfig cfg;
    cfg.sac.hidden = 8;
    sac::Policy<harness::Real> pol(11, 1, 8, -20, 2);
    const std::string path = (dir / "s2.ckpt").string();
    checkpoint::save_policy(path, pol, checkpoint::make_header(env::Approach::seq_accel, cfg, 1));
    EXPECT_NO_THROW(checkpoint::load_policy_for<harness::Real>(path, env::Approach::seq_accel));
    EXPECT_THROW(checkpoint::load_policy_for<harness::Real>(path, env::Approach::coop), CheckpointError);
    EXPECT_THROW(checkpoint::load_policy<double>(path), CheckpointError);
    EXPECT_THROW(checkpoint::save_policy(path, pol, checkpoint::make_header(env::Approach::coop, cfg, 1)), UsageError);

    std::string bytes = slurp(path);
    const std::size_t brace = bytes.find('{');
    std::string corrupt = bytes;
    corrupt[brace] = '#';
    std::ofstream(dir / "corrupt.ckpt", std::ios::binary) << corrupt;
    EXPECT_THROW(checkpoint::load_policy<harness::Real>((dir / "corrupt.ckpt").string()), CheckpointError);
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
    EXPECT_THROW(checkpoint::load_policy<harness::Real>((dir / "short.ckpt").string()), CheckpointError);
    std::ofstream(dir / "junk.ckpt", std::ios::binary) << "hello world";
    EXPECT_THROW(checkpoint::load_policy<harness::Real>((dir / "junk.ckpt").string()), CheckpointError);
    EXPECT_THROW(checkpoint::load_policy<harness::Real>((dir / "missing.ckpt").string()), CheckpointError);
}

// -------------------------------------------------------------- evaluation

TEST(Evaluation, SameSeedSameEpisodesAcrossThreads) {
    const env::EnvConfig cfg = harness::env_config(config::RunConfig{}, env::Approach::seq_accel);
    const auto act = harness::random_policy(1);
    const auto a = harness::evaluate_episodes(cfg, act, 40, 7, 1);
    const auto b = harness::evaluate_episodes(cfg, act, 40, 7, 3);
    std::ostringstream sa, sb;
    harness::write_episodes_csv(sa, a);
    harness::write_episodes_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    const auto c = harness::evaluate_episodes(cfg, act, 40, 8, 1);
    std::ostringstream sc;
    harness::write_episodes_csv(sc, c);
    EXPECT_NE(sa.str(), sc.str());
}

TEST(Evaluation, EpisodeOutcomesArePartitioned) {
    const env::EnvConfig cfg = harness::env_config(config::RunConfig{}, env::Approach::seq_accel);
    for (const auto& e : harness::evaluate_episodes(cfg, harness::random_policy(1), 200, 3)) {
        EXPECT_EQ(int(e.collided) + int(e.stopped) + int(e.succeeded), 1);
        EXPECT_NEAR(e.combined_cost, e.fuel_cost + e.electricity_cost, 1e-15);
        EXPECT_GT(e.episode_steps, 0);
    }
}

TEST(Evaluation, SummaryAggregatesEpisodes) {
    std::vector<harness::EpisodeMetrics> eps(4);
    eps[0].collided = true;
    eps[0].mean_abs_jerk = 2.0;
    eps[1].stopped = eps[1].timed_out = true;
    eps[1].mean_abs_jerk = 4.0;
    eps[2].succeeded = eps[2].saturated = true;
    eps[2].electricity_cost = -0.01;
    eps[3].succeeded = true;
    eps[3].fuel_cost = 0.04;
    const harness::RunSummary s = harness::summarize(eps);
    EXPECT_EQ(s.n_episodes, 4);
    EXPECT_EQ(s.collision_rate, 0.25);
    EXPECT_EQ(s.stop_rate, 0.25);
    EXPECT_EQ(s.success_rate, 0.5);
    EXPECT_EQ(s.saturation_rate, 0.25);
    EXPECT_EQ(s.avg_jerk, 1.5);
    EXPECT_EQ(s.negative_electricity_episodes, 1);
    EXPECT_EQ(s.timeouts, 1);
    EXPECT_DOUBLE_EQ(s.avg_fuel_cost, 0.01);
    const harness::RunSummary back = harness::summary_from_json(harness::summary_to_json(s));
    EXPECT_EQ(harness::summary_to_json(back), harness::summary_to_json(s));
    EXPECT_THROW(harness::summary_from_json(fields::json{{"schema_version", 1}}), ConfigError);
}

TEST(Selection, PrefersCleanThenCheaperRuns) {
    harness::RunSummary clean_costly, dirty_cheap, clean_cheap;
    clean_costly.avg_combined_cost = 0.2;
    dirty_cheap.collision_rate = 0.01;
    dirty_cheap.avg_combined_cost = 0.01;
    clean_cheap.avg_combined_cost = 0.1;
    EXPECT_EQ(harness::select_best({dirty_cheap, clean_costly, clean_cheap}), 2u);
    EXPECT_EQ(harness::select_best({dirty_cheap}), 0u);
    EXPECT_THROW(harness::select_best({}), UsageError);
    EXPECT_EQ(harness::repeat_seed(5, 0), 5u);
    EXPECT_NE(harness::repeat_seed(5, 1), harness::repeat_seed(5, 2));
    EXPECT_NE(harness::selection_seed(5), 5u);
}

TEST(LearningProgress, SplitsByEnvironmentStep) {
    std::vector<sac::EpisodeLog> log;
    for (int i = 0; i < 100; ++i) {
        sac::EpisodeLog e;
        e.env_step = (i + 1) * 10;
        e.undiscounted_return = i < 50 ? -1.0 : 1.0;
        log.push_back(e);
    }
    const auto ma = harness::moving_average(log, 4);
    EXPECT_EQ(ma[0], -1.0);
    EXPECT_EQ(ma[51], 0.0);
    const auto p = harness::learning_progress(log, 1000, 0.1, 1);
    EXPECT_EQ(p.first_count, 10u);
    EXPECT_EQ(p.last_count, 10u);
    EXPECT_EQ(p.first, -1.0);
    EXPECT_EQ(p.last, 1.0);
}

// -------------------------------------------------------------- comparison

TEST(Comparison, IdenticalRunsGiveZeroDeltas) {
    harness::RunSummary s;
    s.n_episodes = 10;
    s.avg_combined_cost = 0.05;
    s.avg_jerk = 1.2;
    s.config_hash = "abc";
    std::vector<harness::RunSummary> rows;
    for (const char* a : {"coop", "seq1", "seq2"}) {
        s.approach = a;
        rows.push_back(s);
    }
    const auto c = harness::compare_runs(rows);
    EXPECT_EQ(c.baseline, 1u);
    EXPECT_TRUE(c.baseline_is_seq1);
    EXPECT_FALSE(c.mixed_configs);
    std::ostringstream csv, md;
    harness::write_comparison_csv(csv, c);
    harness::write_comparison_markdown(md, c);
    std::istringstream lines(csv.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
        ++n;
    }
    EXPECT_EQ(n, 4);
    EXPECT_EQ(harness::relative_delta(0.05, 0.05), 0.0);
    EXPECT_NE(md.str().find("(+0%)"), std::string::npos);
    EXPECT_EQ(md.str().find("WARNING"), std::string::npos);

    rows[2].config_hash = "def";
    std::ostringstream md2;
    harness::write_comparison_markdown(md2, harness::compare_runs(rows));
    EXPECT_NE(md2.str().find("WARNING"), std::string::npos);
    EXPECT_THROW(harness::compare_runs({s}), UsageError);
}

// ------------------------------------------------------------------- trace

TEST(Trace, JerkIsFiniteDifferenceOfAcceleration) {
    const env::EnvConfig cfg = harness::env_config(config::RunConfig{}, env::Approach::coop);
    std::ostringstream os, traffic;
    traffic::TrajectoryLog tlog(traffic);
    harness::run_episode(cfg, harness::random_policy(2), 4, 0, harness::trace_writer(os, cfg.road.dt, &tlog));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, harness::kTraceHeader);
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
        ASSERT_EQ(r.size(), 26u);
        rows.push_back(r);
    }
    ASSERT_GT(rows.size(), 2u);
    EXPECT_EQ(rows[0][0], 0.0);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k][0], double(k));
        EXPECT_NEAR(rows[k][14], (rows[k][12] - rows[k - 1][12]) / cfg.road.dt, 1e-9);
        EXPECT_NEAR(rows[k][21], rows[k][22] + rows[k][23], 1e-15);
    }
    EXPECT_NE(traffic.str().find("ramp"), std::string::npos);
}

// --------------------------------------------------------------------- CLI

TEST(Cli, TrainEvalCompareTrace) {
    const fs::path dir = scratch("cli");
    const fs::path log = dir / "log.txt";
    ASSERT_EQ(run_cli("train --approach seq2 --steps 1000 --seed 3 --out " + (dir / "s2").string(), log), 0)
        << slurp(log);
    for (const char* f : {"config.json", "training_log.csv", "policy.ckpt"}) EXPECT_TRUE(fs::exists(dir / "s2" / f)) << f;
    const auto lp = checkpoint::load_policy<harness::Real>((dir / "s2" / "policy.ckpt").string());
    EXPECT_EQ(lp.header.obs_dim, 11u);
    EXPECT_EQ(lp.policy.obs_dim(), 11u);
    const auto tlog = read_csv(dir / "s2" / "training_log.csv");
    ASSERT_GT(tlog.size(), 1u);
    EXPECT_EQ(tlog[0].size(), 8u);

    ASSERT_EQ(run_cli("eval --policy " + (dir / "s2" / "policy.ckpt").string() + " --episodes 30 --seed 4 --out " +
                          (dir / "e2").string(),
                      log),
              0)
        << slurp(log);
    ASSERT_EQ(run_cli("eval --random seq1 --episodes 30 --seed 4 --out " + (dir / "e1").string(), log), 0) << slurp(log);
    ASSERT_EQ(run_cli("eval --random coop --episodes 30 --seed 4 --threads 2 --out " + (dir / "e0").string(), log), 0)
        << slurp(log);

    // summary.json equals an aggregation of episodes.csv
    const auto eps = read_csv(dir / "e2" / "episodes.csv");
    ASSERT_EQ(eps.size(), 31u);
    double collisions = 0, jerk = 0;
    for (std::size_t i = 1; i < eps.size(); ++i) {
        collisions += std::stod(eps[i][2]);
        jerk += std::stod(eps[i][9]);
    }
    const harness::RunSummary s = harness::summary_from_json(harness::read_json(dir / "e2" / "summary.json"));
    EXPECT_EQ(s.n_episodes, 30);
    EXPECT_NEAR(s.collision_rate, collisions / 30.0, 1e-15);
    EXPECT_NEAR(s.avg_jerk, jerk / 30.0, 1e-12);
    EXPECT_EQ(s.approach, "seq2");

    ASSERT_EQ(run_cli("compare --runs " + (dir / "e0").string() + " " + (dir / "e1").string() + " " +
                          (dir / "e2" / "summary.json").string() + " --out " + (dir / "cmp").string(),
                      log),
              0)
        << slurp(log);
    const auto cmp = read_csv(dir / "cmp" / "comparison.csv");
    ASSERT_EQ(cmp.size(), 4u);
    for (const auto& r : cmp) EXPECT_EQ(r.size(), 9u);
    EXPECT_TRUE(fs::exists(dir / "cmp" / "comparison.md"));

    ASSERT_EQ(run_cli("trace --policy " + (dir / "s2" / "policy.ckpt").string() + " --out " +
                          (dir / "trace.csv").string() + " --traffic-log " + (dir / "traffic.csv").string(),
                      log),
              0)
        << slurp(log);
    EXPECT_EQ(read_csv(dir / "trace.csv")[0].size(), 26u);
    EXPECT_TRUE(fs::exists(dir / "traffic.csv"));
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli_codes");
    const fs::path log = dir / "log.txt";
    EXPECT_EQ(run_cli("", log), 2);
    EXPECT_EQ(run_cli("train --approach seq3 --steps 10 --out " + (dir / "x").string(), log), 2);
    EXPECT_EQ(run_cli("train --approach coop --steps 10 --set reward.w_j=-1 --out " + (dir / "x").string(), log), 3);
    EXPECT_EQ(run_cli("eval --random coop --episodes 2 --set nosuch=1", log), 3);
    EXPECT_EQ(run_cli("eval --policy " + (dir / "missing.ckpt").string(), log), 4);
    EXPECT_EQ(run_cli("--help", log), 0);
}
