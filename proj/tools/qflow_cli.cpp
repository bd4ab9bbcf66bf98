// Command-line front end: artifact builders (fit-kernel, solve-mdp,
// solve-auction, build-index, train-dqn), the experiment runner, metric
// comparison, and the split environment/controller processes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "qflow/harness.hpp"
#include "qflow/protocol.hpp"

namespace {

using namespace qflow;

struct Options {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;

    // run
    std::string scenario = "static6";
    std::string policy = "round_robin";
    long episodes = 20;
    long dps = 200;
    bool via_protocol = false;
    long pop_period_dps = 180;

    // artifacts
    std::string kernel_path;
    std::string traces_path;
    std::string system_path;
    std::string values_path;
    std::string mfg_path;
    std::string index_path;
    std::vector<std::string> checkpoint_paths;

    // model pipeline
    long trace_dps_per_policy = 4000;
    int k_top_states = 1000;
    int samples_per = 100;
    double gamma = 0.95;

    // dqn
    long budget_steps = 200000;
    int clients = 6;
    int n_hi = 2;
    bool full_scale = false;

    // auction
    int bid_points = 51;
    double bid_lo = 0.0;
    double bid_hi = 5.0;
    double damping = 0.3;
    int outer_iters = 30;
    long burn_in_dps = 300;
    std::string index_from = "bid";

    // protocol endpoints
    int port = 45321;
    std::string host = "127.0.0.1";
};

// --config file: one `key = value` per line, mirroring the option names;
// '#' starts a comment.
void apply_config_file(Options& o, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "scenario") o.scenario = val;
        else if (key == "policy") o.policy = val;
        else if (key == "episodes") o.episodes = std::stol(val);
        else if (key == "dps_per_episode") o.dps = std::stol(val);
        else if (key == "seed") o.seed = std::stoull(val);
        else if (key == "via_protocol") o.via_protocol = (val == "true" || val == "1");
        else if (key == "pop_period_dps") o.pop_period_dps = std::stol(val);
        else if (key == "kernel") o.kernel_path = val;
        else if (key == "traces") o.traces_path = val;
        else if (key == "system") o.system_path = val;
        else if (key == "values") o.values_path = val;
        else if (key == "mfg") o.mfg_path = val;
        else if (key == "index") o.index_path = val;
        else if (key == "checkpoint") {
            std::istringstream ss(val);
            std::string item;
            while (std::getline(ss, item, ',')) o.checkpoint_paths.push_back(item);
        } else if (key == "gamma") o.gamma = std::stod(val);
        else if (key == "k_top_states") o.k_top_states = std::stoi(val);
        else if (key == "samples_per") o.samples_per = std::stoi(val);
        else if (key == "trace_dps_per_policy") o.trace_dps_per_policy = std::stol(val);
        else if (key == "budget_steps") o.budget_steps = std::stol(val);
        else if (key == "clients") o.clients = std::stoi(val);
        else if (key == "n_hi") o.n_hi = std::stoi(val);
        else if (key == "bid_points") o.bid_points = std::stoi(val);
        else if (key == "damping") o.damping = std::stod(val);
        else if (key == "outer_iters") o.outer_iters = std::stoi(val);
        else if (key == "burn_in_dps") o.burn_in_dps = std::stol(val);
        else if (key == "port") o.port = std::stoi(val);
        else if (key == "host") o.host = val;
        else throw std::runtime_error(path + ": unknown config key '" + key + "'");
    }
}

harness::Artifacts load_artifacts(const Options& o, harness::PolicyKind kind) {
    harness::Artifacts a;
    using PK = harness::PolicyKind;
    if (kind == PK::RewardGreedy && !o.kernel_path.empty())
        a.kernel = std::make_shared<model::ClientKernel>(io::load_client_kernel(o.kernel_path));
    if (kind == PK::ModelBased) {
        a.system = std::make_shared<io::SystemArtifacts>(io::load_system(o.system_path));
        a.values = std::make_shared<model::ValueSolution>(io::load_values(o.values_path));
    }
    if (kind == PK::Auction)
        a.mfg = std::make_shared<io::MfgArtifacts>(io::load_mfg(o.mfg_path));
    if (kind == PK::Index)
        a.index = std::make_shared<indexing::IndexTable>(io::load_index(o.index_path));
    if (kind == PK::ModelFree)
        for (const auto& p : o.checkpoint_paths)
            a.checkpoints.push_back(std::make_shared<rl::Checkpoint>(rl::load_checkpoint(p)));
    return a;
}

harness::ExperimentConfig experiment_config(const Options& o) {
    harness::ExperimentConfig cfg;
    cfg.scenario = harness::scenario_from_string(o.scenario);
    cfg.policy = harness::policy_from_string(o.policy);
    cfg.episodes = o.episodes;
    cfg.dps_per_episode = o.dps;
    cfg.seed = o.seed;
    cfg.via_protocol = o.via_protocol;
    cfg.pop_period_dps = o.pop_period_dps;
    return cfg;
}

int cmd_fit_kernel(const Options& o) {
    std::filesystem::create_directories(o.out_dir);
    harness::TraceGenConfig tg;
    tg.dps_per_policy = o.trace_dps_per_policy;
    tg.seed = o.seed;
    std::printf("generating traces: 5 policies x %ld DPs...\n", tg.dps_per_policy);
    const model::TraceLog log = harness::generate_traces(tg);
    const model::ClientKernel kernel = model::ClientKernel::fit(log);
    io::save_client_kernel(o.out_dir + "/kernel.txt", kernel, o.gamma);
    io::save_traces(o.out_dir + "/traces.txt", log);
    std::printf("fit-kernel: %zu tuples, %zu joint states -> %s/{kernel.txt,traces.txt}\n",
                log.client_tuples.size(), log.system_states.size(), o.out_dir.c_str());
    return 0;
}

int cmd_solve_mdp(const Options& o) {
    std::filesystem::create_directories(o.out_dir);
    const model::ClientKernel kernel = io::load_client_kernel(o.kernel_path);
    const model::TraceLog traces = io::load_traces(o.traces_path);
    std::map<std::vector<std::uint16_t>, long> freq;
    for (const auto& s : traces.system_states) ++freq[s];
    const int k = std::min<int>(o.k_top_states, static_cast<int>(freq.size()));
    std::printf("solve-mdp: %zu distinct joint states, keeping top %d\n", freq.size(), k);
    const model::FrequentStateSet sp = model::top_states(traces.system_states, k);
    const int slots = sp.slots;
    io::SystemArtifacts sys;
    sys.actions = mdp::enumerate_actions(slots, o.n_hi);
    sys.gamma = o.gamma;
    sys.sp = sp;
    sys.kernel = model::synthesize_system_kernel(kernel, sys.sp, sys.actions, o.samples_per,
                                                 derive_seed(o.seed, 0x5F5), 0, true);
    const model::ValueSolution sol = model::value_iteration(sys.kernel, o.gamma);
    std::printf("value iteration: %ld iterations, residual %.3e, converged=%d\n", sol.iterations,
                sol.residual, sol.converged ? 1 : 0);
    io::save_system(o.out_dir + "/system.txt", sys);
    io::save_values(o.out_dir + "/values.txt", sol, static_cast<int>(sys.actions.size()), o.gamma);
    return sol.converged ? 0 : 1;
}

int cmd_solve_auction(const Options& o) {
    std::filesystem::create_directories(o.out_dir);
    const model::ClientKernel kernel = io::load_client_kernel(o.kernel_path);
    const auction::BidSet bids = auction::BidSet::linspace(o.bid_lo, o.bid_hi, o.bid_points);
    auction::FixedPointConfig fp;
    fp.damping = o.damping;
    fp.outer_iters = o.outer_iters;
    fp.burn_in_dps = o.burn_in_dps;
    fp.mdp.gamma = o.gamma;
    fp.seed = o.seed;
    sim::SimConfig env_cfg;
    env_cfg.n_clients = o.clients;
    env_cfg.max_clients = std::max(o.clients, env_cfg.max_clients);
    env_cfg.bins.front().n_hi = o.n_hi;
    const auto res =
        auction::mfg_fixed_point(kernel, bids, auction::BidDistribution::uniform(bids), env_cfg, fp);
    std::printf("mfg fixed point: %zu outer iterations, last L1=%.4f, converged=%d\n",
                res.l1_trace.size(), res.l1_trace.empty() ? 0.0 : res.l1_trace.back(),
                res.converged ? 1 : 0);
    io::MfgArtifacts art{bids, res.rho, res.solution, o.gamma};
    io::save_mfg(o.out_dir + "/mfg.txt", art);
    return 0;
}

int cmd_build_index(const Options& o) {
    std::filesystem::create_directories(o.out_dir);
    const io::MfgArtifacts mfg = io::load_mfg(o.mfg_path);
    // "bid" ranks states by the truthful valuation of priority service (the
    // equilibrium bid); "value" ranks by the continuation value itself.
    const std::vector<double>& v = (o.index_from == "value") ? mfg.solution.v : mfg.solution.bid;
    const indexing::IndexTable table = indexing::build_index(v);
    io::save_index(o.out_dir + "/index.csv", table);
    std::printf("build-index: %d non-minimal states -> %s/index.csv\n", table.max_index(),
                o.out_dir.c_str());
    return 0;
}

int cmd_train_dqn(const Options& o) {
    std::filesystem::create_directories(o.out_dir);
    sim::SimConfig env_cfg;
    env_cfg.n_clients = o.clients;
    env_cfg.max_clients = std::max(o.clients, env_cfg.max_clients);
    env_cfg.bins.front().n_hi = o.n_hi;
    harness::SimDqnEnv env(env_cfg, o.n_hi, derive_seed(o.seed, 0xE0));
    rl::TrainConfig tc;
    tc.seed = o.seed;
    if (!o.full_scale) tc = tc.scaled_to(o.budget_steps);
    std::printf("train-dqn: %d clients, %ld episodes x %ld DPs (eps decay %ld, sync %ld)\n",
                o.clients, tc.episodes, tc.steps_per_episode, tc.eps_decay_steps, tc.target_sync);
    std::ofstream curve(o.out_dir + "/training_curve.csv");
    curve << "episode,mean_qoe\n";
    const rl::TrainResult result = rl::train(env, tc, [&](long ep, double mean) {
        curve << ep << ',' << mean << '\n';
        if (ep % 50 == 0) std::printf("  episode %ld: mean QoE %.3f\n", ep, mean);
    });
    rl::save_checkpoint(o.out_dir + "/checkpoint.txt", result.net, result.steps, tc);
    std::printf("saved %s/checkpoint.txt after %ld steps\n", o.out_dir.c_str(), result.steps);
    return 0;
}

int cmd_run(const Options& o) {
    const harness::ExperimentConfig cfg = experiment_config(o);
    const harness::Artifacts artifacts = load_artifacts(o, cfg.policy);
    const harness::MetricsBundle bundle = harness::run_experiment(cfg, artifacts, o.out_dir);
    std::cout << harness::summary_line(bundle.summary) << '\n';
    return 0;
}

int cmd_compare(const Options& o, const std::vector<std::string>& files) {
    const auto summaries = harness::load_summaries(files);
    const auto rows = harness::compare(summaries);
    std::printf("%-14s %5s %10s %10s %12s %14s\n", "policy", "runs", "mean_qoe", "p_qoe5",
                "mean_stall", "delta_vs_top");
    for (const auto& r : rows)
        std::printf("%-14s %5d %10.4f %10.4f %12.3f %14.4f\n", r.policy.c_str(), r.runs, r.mean_qoe,
                    r.p_qoe5, r.mean_stall, r.delta_vs_top);
    return 0;
}

int cmd_serve_env(const Options& o) {
    harness::ExperimentConfig cfg = experiment_config(o);
    const sim::SimConfig sim_cfg = harness::scenario_sim_config(cfg);
    sim::Simulation env(sim_cfg, derive_seed(o.seed, 0xE9, 0));
    std::filesystem::create_directories(o.out_dir);
    std::ofstream transcript(o.out_dir + "/transcript.csv");
    transcript << "dp_index,client_id,buffer,stall_count,qoe,queue,bin,served_mbits\n";
    proto::DpSink sink = [&](const sim::DpResult& res) {
        char buf[256];
        for (const auto& r : res.rows) {
            std::snprintf(buf, sizeof(buf), "%ld,%d,%.6f,%d,%.6f,%d,%d,%.6f\n", r.dp_index,
                          r.client_id, r.buffer, r.stall_count, r.qoe, r.queue_id, r.bin,
                          r.served_mbits);
            transcript << buf;
        }
    };
    std::printf("serve-env: waiting for controller on port %d (%ld DPs)\n", o.port, o.dps);
    auto t = proto::listen_tcp(o.port);
    proto::serve_environment(env, *t, {o.dps, 30.0}, sink);
    std::printf("serve-env: done, transcript in %s/transcript.csv\n", o.out_dir.c_str());
    return 0;
}

int cmd_run_controller(const Options& o) {
    const harness::ExperimentConfig cfg = experiment_config(o);
    const sim::SimConfig sim_cfg = harness::scenario_sim_config(cfg);
    const harness::Artifacts artifacts = load_artifacts(o, cfg.policy);
    auto engine = harness::make_engine(cfg.policy, artifacts, derive_seed(o.seed, 0x9E));
    engine->reset(derive_seed(o.seed, 0x9E, 0));

    std::vector<int> client_bins(static_cast<std::size_t>(sim_cfg.n_clients), 0);
    proto::ControllerConfig ccfg{o.dps, client_bins, static_cast<int>(sim_cfg.bins.size()),
                                 sim_cfg.dp_seconds, 60.0};
    proto::DecideFn decide = [&](const proto::ControllerView& cv) {
        harness::EnvView view;
        view.dp_index = cv.dp_index;
        for (int b = 0; b < static_cast<int>(sim_cfg.bins.size()); ++b) {
            const auto& bc = sim_cfg.bins[static_cast<std::size_t>(b)];
            view.bins.push_back({b, bc.n_hi, bc.single_queue, {}});
        }
        for (const auto& s : cv.clients) {
            const int bin = s.client_id < static_cast<int>(client_bins.size())
                                ? client_bins[static_cast<std::size_t>(s.client_id)]
                                : 0;
            view.bins[static_cast<std::size_t>(bin)].clients.push_back(
                {s.client_id, s.buffer, s.stall_count, s.qoe});
        }
        return engine->decide(view);
    };
    std::printf("run-controller: connecting to %s:%d\n", o.host.c_str(), o.port);
    auto t = proto::connect_tcp(o.host, o.port);
    proto::run_controller(*t, decide, ccfg);
    std::printf("run-controller: done\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"qflow: bandwidth-constrained streaming simulator and policy suite"};
    app.require_subcommand(1);

    app.add_option("--config", o.config_path, "key = value config file");
    app.add_option("--seed", o.seed, "master RNG seed");
    app.add_option("--out-dir", o.out_dir, "output directory");

    auto* fit = app.add_subcommand("fit-kernel", "generate traces and fit the client kernel");
    fit->add_option("--trace-dps", o.trace_dps_per_policy, "DPs per trace policy");

    auto* mdp_cmd = app.add_subcommand("solve-mdp", "frequent states + joint kernel + value iteration");
    mdp_cmd->add_option("--kernel", o.kernel_path, "client kernel file")->required();
    mdp_cmd->add_option("--traces", o.traces_path, "trace file")->required();
    mdp_cmd->add_option("--k", o.k_top_states, "frequent-state count");
    mdp_cmd->add_option("--samples-per", o.samples_per, "samples per (state, action)");
    mdp_cmd->add_option("--gamma", o.gamma, "discount");

    auto* auc = app.add_subcommand("solve-auction", "mean-field bid fixed point");
    auc->add_option("--kernel", o.kernel_path, "client kernel file")->required();
    auc->add_option("--clients", o.clients, "population size");
    auc->add_option("--gamma", o.gamma, "discount");
    auc->add_option("--damping", o.damping, "rho damping");
    auc->add_option("--outer-iters", o.outer_iters, "fixed-point iterations");
    auc->add_option("--burn-in", o.burn_in_dps, "burn-in DPs per iteration");
    auc->add_option("--bid-points", o.bid_points, "bid grid size");

    auto* idx = app.add_subcommand("build-index", "value-rank index table from an auction solution");
    idx->add_option("--mfg", o.mfg_path, "mfg solution file")->required();
    idx->add_option("--from", o.index_from, "bid|value")->check(CLI::IsMember({"bid", "value"}));

    auto* tr = app.add_subcommand("train-dqn", "double-DQN training on the simulator");
    tr->add_option("--budget", o.budget_steps, "environment steps");
    tr->add_option("--clients", o.clients, "client count (net capacity)");
    tr->add_flag("--full-scale", o.full_scale, "paper-scale schedule instead of the budget");

    auto* run = app.add_subcommand("run", "run an experiment and write transcripts/metrics");
    run->add_option("--scenario", o.scenario, "static6|dynamic4to6|vanilla|channel_bins");
    run->add_option("--policy", o.policy, "policy name");
    run->add_option("--episodes", o.episodes, "episodes");
    run->add_option("--dps", o.dps, "DPs per episode");
    run->add_flag("--protocol", o.via_protocol, "route decisions through the control protocol");
    run->add_option("--kernel", o.kernel_path, "client kernel (reward_greedy)");
    run->add_option("--system", o.system_path, "system kernel (model_based)");
    run->add_option("--values", o.values_path, "value table (model_based)");
    run->add_option("--mfg", o.mfg_path, "auction solution (auction)");
    run->add_option("--index", o.index_path, "index table (index)");
    run->add_option("--checkpoint", o.checkpoint_paths, "DQN checkpoint(s) (model_free)");

    std::vector<std::string> compare_files;
    auto* cmp = app.add_subcommand("compare", "rank summary records");
    cmp->add_option("files", compare_files, "summary files")->required();

    auto* srv = app.add_subcommand("serve-env", "serve the environment over TCP");
    srv->add_option("--scenario", o.scenario, "scenario");
    srv->add_option("--port", o.port, "listen port");
    srv->add_option("--dps", o.dps, "decision periods to serve");

    auto* ctl = app.add_subcommand("run-controller", "drive a served environment over TCP");
    ctl->add_option("--scenario", o.scenario, "scenario (must match serve-env)");
    ctl->add_option("--policy", o.policy, "policy name");
    ctl->add_option("--host", o.host, "environment host");
    ctl->add_option("--port", o.port, "environment port");
    ctl->add_option("--dps", o.dps, "decision periods to run");
    ctl->add_option("--kernel", o.kernel_path, "client kernel (reward_greedy)");
    ctl->add_option("--system", o.system_path, "system kernel (model_based)");
    ctl->add_option("--values", o.values_path, "value table (model_based)");
    ctl->add_option("--mfg", o.mfg_path, "auction solution (auction)");
    ctl->add_option("--index", o.index_path, "index table (index)");
    ctl->add_option("--checkpoint", o.checkpoint_paths, "DQN checkpoint(s) (model_free)");

    // --seed/--out-dir/--config live on the parent; let subcommands pass them up
    for (auto* sc : app.get_subcommands(nullptr)) sc->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (!o.config_path.empty()) apply_config_file(o, o.config_path);
        if (fit->parsed()) return cmd_fit_kernel(o);
        if (mdp_cmd->parsed()) return cmd_solve_mdp(o);
        if (auc->parsed()) return cmd_solve_auction(o);
        if (idx->parsed()) return cmd_build_index(o);
        if (tr->parsed()) return cmd_train_dqn(o);
        if (run->parsed()) return cmd_run(o);
        if (cmp->parsed()) return cmd_compare(o, compare_files);
        if (srv->parsed()) return cmd_serve_env(o);
        if (ctl->parsed()) return cmd_run_controller(o);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
