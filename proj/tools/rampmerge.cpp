// Command-line front end: train, eval, compare and trace.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 invalid
// configuration, 4 checkpoint refused. Set RAMPMERGE_LOG=quiet|info|debug
// to control progress output on stderr.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "rampmerge/checkpoint.hpp"
#include "rampmerge/config.hpp"
#include "rampmerge/harness.hpp"

namespace fs = std::filesystem;
using namespace rampmerge;
using harness::Real;

namespace {

enum class Verbosity { quiet, info, debug };

Verbosity verbosity() {
    const char* v = std::getenv("RAMPMERGE_LOG");
    if (!v) return Verbosity::info;
    const std::string s = v;
    if (s == "quiet") return Verbosity::quiet;
    if (s == "debug") return Verbosity::debug;
    return Verbosity::info;
}

void log_info(const std::string& msg) {
    if (verbosity() != Verbosity::quiet) std::cerr << msg << '\n';
}

struct TrainOptions {
    std::string approach;
    long steps = 200000;
    std::uint64_t seed = 1;
    std::string config_path;
    std::string out;
    int repeats = 1;
    long select_episodes = 200;
    int threads = 1;
    std::vector<std::string> overrides;
};

struct EvalOptions {
    std::string policy;
    std::string random_approach;
    long episodes = 500;
    std::uint64_t seed = 1;
    std::string out;
    int threads = 1;
    bool stochastic = false;
    std::string config_path;
    std::vector<std::string> overrides;
};

struct CompareOptions {
    std::vector<std::string> runs;
    std::string out;
};

struct TraceOptions {
    std::string policy;
    std::uint64_t seed = 1;
    long episode = 0;
    std::string out;
    std::string traffic_log;
    bool stochastic = false;
};

env::Approach approach_arg(const std::string& name) {
    try {
        return env::parse_approach(name);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
}

harness::RunSummary evaluate_policy(const env::EnvConfig& cfg, const harness::ActionFn& act, long n,
                                    std::uint64_t seed, int threads, std::vector<harness::EpisodeMetrics>* episodes) {
    auto eps = harness::evaluate_episodes(cfg, act, n, seed, threads);
    harness::RunSummary s = harness::summarize(eps);
    s.approach = env::to_string(cfg.approach);
    s.seed = seed;
    if (episodes) *episodes = std::move(eps);
    return s;
}

int cmd_train(const TrainOptions& o) {
    const env::Approach approach = approach_arg(o.approach);
    const config::RunConfig cfg = config::load_config(o.config_path, o.overrides);
    if (o.steps < 1) throw UsageError("--steps must be positive");
    if (o.repeats < 1) throw UsageError("--repeats must be >= 1");
    const fs::path out(o.out);
    fs::create_directories(out);

    fields::json snapshot = config::to_json(cfg);
    snapshot["run"] = {{"command", "train"}, {"approach", env::to_string(approach)}, {"steps", o.steps},
                       {"seed", o.seed},     {"repeats", o.repeats},                 {"config_hash", config::config_hash(cfg)}};
    harness::write_text(out / "config.json", snapshot.dump(2) + "\n");

    std::vector<harness::RunSummary> selection;
    for (int k = 0; k < o.repeats; ++k) {
        const std::uint64_t seed = harness::repeat_seed(o.seed, k);
        const fs::path dir = o.repeats == 1 ? out : out / ("repeat_" + std::to_string(k));
        fs::create_directories(dir);
        const auto t0 = std::chrono::steady_clock::now();
        sac::TrainCallbacks cb;
        cb.on_episode = [&](const sac::EpisodeLog& e) {
            if (verbosity() == Verbosity::debug || (verbosity() == Verbosity::info && e.episode % 500 == 0))
                std::cerr << "[train " << env::to_string(approach) << " repeat " << k << "] step " << e.env_step
                          << " episode " << e.episode << " return " << e.undiscounted_return << " alpha " << e.alpha
                          << '\n';
        };
        sac::TrainResult<Real> res = harness::train_approach(cfg, approach, o.steps, seed, cb);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log_info("trained " + env::to_string(approach) + " repeat " + std::to_string(k) + " in " +
                 std::to_string(secs) + " s, " + std::to_string(res.log.size()) + " episodes");
        {
            std::ofstream os(dir / "training_log.csv");
            harness::write_training_log(os, res.log);
        }
        checkpoint::save_policy((dir / "policy.ckpt").string(), res.agent->policy(),
                                checkpoint::make_header(approach, cfg, seed));
        if (o.repeats > 1) {
            auto policy = std::make_shared<const sac::Policy<Real>>(res.agent->policy());
            harness::RunSummary s = evaluate_policy(harness::env_config(cfg, approach), harness::policy_fn(policy, true),
                                                    o.select_episodes, harness::selection_seed(o.seed), o.threads, nullptr);
            s.config_hash = config::config_hash(cfg);
            s.policy = (dir / "policy.ckpt").string();
            harness::write_text(dir / "selection_summary.json", harness::summary_to_json(s).dump(2) + "\n");
            selection.push_back(s);
        }
    }
    if (o.repeats > 1) {
        const std::size_t best = harness::select_best(selection);
        const fs::path dir = out / ("repeat_" + std::to_string(best));
        fs::copy_file(dir / "policy.ckpt", out / "policy.ckpt", fs::copy_options::overwrite_existing);
        fs::copy_file(dir / "training_log.csv", out / "training_log.csv", fs::copy_options::overwrite_existing);
        fields::json sel = {{"selected_repeat", best},
                            {"rule", "zero collisions and stops first, then combined energy cost, then jerk"},
                            {"selection_episodes", o.select_episodes},
                            {"candidates", fields::json::array()}};
        for (const auto& s : selection) sel["candidates"].push_back(harness::summary_to_json(s));
        harness::write_text(out / "selection.json", sel.dump(2) + "\n");
        log_info("selected repeat " + std::to_string(best));
    }
    std::cout << (out / "policy.ckpt").string() << '\n';
    return 0;
}

int cmd_eval(const EvalOptions& o) {
    if (o.policy.empty() == o.random_approach.empty()) throw UsageError("give exactly one of --policy or --random");
    if (o.episodes < 1) throw UsageError("--episodes must be positive");
    env::EnvConfig ecfg;
    harness::ActionFn act;
    std::string hash, label;
    if (!o.policy.empty()) {
        if (!o.config_path.empty() || !o.overrides.empty())
            throw UsageError("--config/--set apply to --random only; a checkpoint carries its own configuration");
        auto lp = checkpoint::load_policy<Real>(o.policy);
        const config::RunConfig cfg = config::from_json(lp.header.config);
        if (config::config_hash(cfg) != lp.header.config_hash) throw CheckpointError("checkpoint configuration hash mismatch");
        ecfg = harness::env_config(cfg, lp.header.approach);
        act = harness::policy_fn(std::make_shared<const sac::Policy<Real>>(std::move(lp.policy)), !o.stochastic);
        hash = lp.header.config_hash;
        label = o.policy;
    } else {
        const env::Approach approach = approach_arg(o.random_approach);
        const config::RunConfig cfg = config::load_config(o.config_path, o.overrides);
        ecfg = harness::env_config(cfg, approach);
        act = harness::random_policy(env::action_dim(approach));
        hash = config::config_hash(cfg);
        label = "random";
    }
    std::vector<harness::EpisodeMetrics> eps;
    harness::RunSummary s = evaluate_policy(ecfg, act, o.episodes, o.seed, o.threads, &eps);
    s.config_hash = hash;
    s.policy = label;
    const fields::json j = harness::summary_to_json(s);
    if (!o.out.empty()) {
        const fs::path out(o.out);
        fs::create_directories(out);
        std::ofstream os(out / "episodes.csv");
        harness::write_episodes_csv(os, eps);
        harness::write_text(out / "summary.json", j.dump(2) + "\n");
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_compare(const CompareOptions& o) {
    std::vector<harness::RunSummary> rows;
    for (const auto& r : o.runs) {
        fs::path p(r);
        if (fs::is_directory(p)) p /= "summary.json";
        rows.push_back(harness::summary_from_json(harness::read_json(p)));
    }
    const harness::Comparison c = harness::compare_runs(rows);
    if (c.mixed_configs) std::cerr << "warning: summaries come from different world configurations\n";
    if (!o.out.empty()) {
        const fs::path out(o.out);
        fs::create_directories(out);
        std::ofstream csv(out / "comparison.csv");
        harness::write_comparison_csv(csv, c);
        std::ofstream md(out / "comparison.md");
        harness::write_comparison_markdown(md, c);
    }
    harness::write_comparison_markdown(std::cout, c);
    return 0;
}

int cmd_trace(const TraceOptions& o) {
    auto lp = checkpoint::load_policy<Real>(o.policy);
    const config::RunConfig cfg = config::from_json(lp.header.config);
    const env::EnvConfig ecfg = harness::env_config(cfg, lp.header.approach);
    const auto act = harness::policy_fn(std::make_shared<const sac::Policy<Real>>(std::move(lp.policy)), !o.stochastic);
    const fs::path out(o.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write '" + o.out + "'");
    std::unique_ptr<std::ofstream> tos;
    std::unique_ptr<traffic::TrajectoryLog> tlog;
    if (!o.traffic_log.empty()) {
        tos = std::make_unique<std::ofstream>(o.traffic_log);
        if (!*tos) throw std::runtime_error("cannot write '" + o.traffic_log + "'");
        tlog = std::make_unique<traffic::TrajectoryLog>(*tos);
    }
    const harness::EpisodeMetrics m =
        harness::run_episode(ecfg, act, o.seed, o.episode, harness::trace_writer(os, cfg.env.road.dt, tlog.get()));
    std::cout << "steps " << m.episode_steps << " collided " << m.collided << " stopped " << m.stopped << " succeeded "
              << m.succeeded << " cost " << m.combined_cost << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"On-ramp merging with plug-in hybrid power split: train, evaluate and compare policies"};
    app.require_subcommand(1);

    TrainOptions to;
    auto* train = app.add_subcommand("train", "train a policy for one approach");
    train->add_option("--approach", to.approach, "coop, seq1 or seq2")->required();
    train->add_option("--steps", to.steps, "environment steps per repeat")->capture_default_str();
    train->add_option("--seed", to.seed, "master seed")->capture_default_str();
    train->add_option("--config", to.config_path, "JSON configuration file");
    train->add_option("--out", to.out, "output directory")->required();
    train->add_option("--repeats", to.repeats, "independent training runs; the best is selected")->capture_default_str();
    train->add_option("--select-episodes", to.select_episodes, "episodes used to rank repeats")->capture_default_str();
    train->add_option("--threads", to.threads, "worker threads for repeat ranking")->capture_default_str();
    train->add_option("--set", to.overrides, "override, e.g. reward.w_j=0 (repeatable)");

    EvalOptions eo;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a random policy");
    eval->add_option("--policy", eo.policy, "checkpoint path");
    eval->add_option("--random", eo.random_approach, "evaluate a uniform random policy for this approach");
    eval->add_option("--episodes", eo.episodes, "number of test episodes")->capture_default_str();
    eval->add_option("--seed", eo.seed, "seed of the test episodes")->capture_default_str();
    eval->add_option("--out", eo.out, "output directory for episodes.csv and summary.json");
    eval->add_option("--threads", eo.threads, "worker threads")->capture_default_str();
    eval->add_flag("--stochastic", eo.stochastic, "sample actions instead of using the mean");
    eval->add_option("--config", eo.config_path, "JSON configuration file (with --random)");
    eval->add_option("--set", eo.overrides, "override (with --random)");

    CompareOptions co;
    auto* compare = app.add_subcommand("compare", "tabulate evaluation summaries side by side");
    compare->add_option("--runs", co.runs, "evaluation directories or summary.json files")->required();
    compare->add_option("--out", co.out, "output directory for comparison.csv and comparison.md");

    TraceOptions tro;
    auto* trace = app.add_subcommand("trace", "log one episode step by step");
    trace->add_option("--policy", tro.policy, "checkpoint path")->required();
    trace->add_option("--seed", tro.seed, "seed of the episode stream")->capture_default_str();
    trace->add_option("--episode", tro.episode, "episode id within the stream")->capture_default_str();
    trace->add_option("--out", tro.out, "trace CSV path")->required();
    trace->add_option("--traffic-log", tro.traffic_log, "optional per-vehicle trajectory CSV");
    trace->add_flag("--stochastic", tro.stochastic, "sample actions instead of using the mean");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(to);
        if (*eval) return cmd_eval(eo);
        if (*compare) return cmd_compare(co);
        if (*trace) return cmd_trace(tro);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 3;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
