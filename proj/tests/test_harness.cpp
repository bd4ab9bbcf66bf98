#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "qflow/harness.hpp"

using namespace qflow;

TEST_CASE("compute_cdf: right-continuous over sorted unique values") {
    const auto all5 = harness::compute_cdf({5.0, 5.0, 5.0});
    REQUIRE(all5.size() == 1);
    CHECK(all5[0].first == 5.0);
    CHECK(all5[0].second == 1.0);

    const auto two = harness::compute_cdf({3.0, 1.0});
    REQUIRE(two.size() == 2);
    CHECK(two[0] == std::pair<double, double>{1.0, 0.5});
    CHECK(two[1] == std::pair<double, double>{3.0, 1.0});

    const auto mixed = harness::compute_cdf({2.0, 1.0, 2.0, 4.0});
    CHECK(mixed.back().second == doctest::Approx(1.0));
    for (std::size_t i = 1; i < mixed.size(); ++i) {
        CHECK(mixed[i].first > mixed[i - 1].first);
        CHECK(mixed[i].second >= mixed[i - 1].second);
    }
    CHECK_THROWS_AS(harness::compute_cdf({}), std::invalid_argument);
}

TEST_CASE("run_experiment: sample counts, summary fields, determinism") {
    harness::ExperimentConfig cfg;
    cfg.policy = harness::PolicyKind::RoundRobin;
    cfg.episodes = 5;
    cfg.dps_per_episode = 50;
    cfg.seed = 2024;
    const auto a = harness::run_experiment(cfg, {}, "/tmp/qflow_h1");
    CHECK(a.summary.samples == 6 * 5 * 50);
    CHECK(a.qoe_samples.size() == 1500);
    CHECK(a.per_client_avg_qoe.size() == 6 * 5);
    CHECK(a.summary.policy == "round_robin");
    CHECK(a.summary.scenario == "static6");
    CHECK(a.summary.mean_qoe > 1.0);
    CHECK(a.summary.mean_qoe <= 5.0);
    CHECK(a.summary.p_qoe5 >= 0.0);
    CHECK(a.summary.p_qoe5 <= 1.0);

    const auto b = harness::run_experiment(cfg, {}, "/tmp/qflow_h2");
    CHECK(harness::summary_line(a.summary) == harness::summary_line(b.summary));
}

TEST_CASE("metric recomputation from the exported files reproduces the summary exactly") {
    harness::ExperimentConfig cfg;
    cfg.policy = harness::PolicyKind::GreedyBuffer;
    cfg.episodes = 3;
    cfg.dps_per_episode = 40;
    cfg.seed = 7;
    const auto bundle = harness::run_experiment(cfg, {}, "/tmp/qflow_h3");

    harness::Summary meta;
    meta.policy = bundle.summary.policy;
    meta.scenario = bundle.summary.scenario;
    meta.seed = bundle.summary.seed;
    meta.episodes = bundle.summary.episodes;
    meta.dps = bundle.summary.dps;
    const auto re = harness::compute_metrics_from_files("/tmp/qflow_h3/transcript.csv",
                                                        "/tmp/qflow_h3/stalls.csv", meta);
    CHECK(re.summary.mean_qoe == bundle.summary.mean_qoe);
    CHECK(re.summary.p_qoe5 == bundle.summary.p_qoe5);
    CHECK(re.summary.mean_stall == bundle.summary.mean_stall);
    CHECK(re.summary.mean_buffer == bundle.summary.mean_buffer);
    CHECK(re.summary.samples == bundle.summary.samples);
    CHECK(re.qoe_samples == bundle.qoe_samples);
    CHECK(re.stall_durations == bundle.stall_durations);

    // summary line round-trips through the parser
    const auto parsed = harness::parse_summary_line(harness::summary_line(bundle.summary));
    CHECK(parsed.policy == "greedy_buffer");
    CHECK(parsed.samples == bundle.summary.samples);
}

TEST_CASE("vanilla scenario ignores the policy: any policy yields the same transcript") {
    auto run = [](harness::PolicyKind kind, const char* dir) {
        harness::ExperimentConfig cfg;
        cfg.scenario = harness::Scenario::Vanilla;
        cfg.policy = kind;
        cfg.episodes = 2;
        cfg.dps_per_episode = 30;
        cfg.seed = 5;
        harness::run_experiment(cfg, {}, dir);
        std::ifstream f(std::string(dir) + "/transcript.csv");
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const auto vanilla = run(harness::PolicyKind::Vanilla, "/tmp/qflow_v1");
    const auto rr = run(harness::PolicyKind::RoundRobin, "/tmp/qflow_v2");
    const auto gb = run(harness::PolicyKind::GreedyBuffer, "/tmp/qflow_v3");
    CHECK(vanilla == rr);
    CHECK(vanilla == gb);
    // and the vanilla policy is rejected outside its scenario
    harness::ExperimentConfig bad;
    bad.scenario = harness::Scenario::Static6;
    bad.policy = harness::PolicyKind::Vanilla;
    bad.episodes = 1;
    bad.dps_per_episode = 2;
    CHECK_THROWS_AS(harness::run_experiment(bad, {}, "/tmp/qflow_v4"), std::invalid_argument);
}

TEST_CASE("missing artifacts are rejected up front") {
    harness::ExperimentConfig cfg;
    cfg.policy = harness::PolicyKind::ModelBased;
    CHECK_THROWS_AS(harness::run_experiment(cfg, {}, "/tmp/qflow_h4"), std::invalid_argument);
    cfg.policy = harness::PolicyKind::Auction;
    CHECK_THROWS_AS(harness::run_experiment(cfg, {}, "/tmp/qflow_h4"), std::invalid_argument);
    cfg.policy = harness::PolicyKind::Index;
    CHECK_THROWS_AS(harness::run_experiment(cfg, {}, "/tmp/qflow_h4"), std::invalid_argument);
    cfg.policy = harness::PolicyKind::ModelFree;
    CHECK_THROWS_AS(harness::run_experiment(cfg, {}, "/tmp/qflow_h4"), std::invalid_argument);
    cfg.policy = harness::PolicyKind::RewardGreedy;
    CHECK_THROWS_AS(harness::run_experiment(cfg, {}, "/tmp/qflow_h4"), std::invalid_argument);
}

TEST_CASE("dynamic scenario cycles the population 6 -> 5 -> 4") {
    harness::ExperimentConfig cfg;
    cfg.scenario = harness::Scenario::Dynamic4to6;
    cfg.policy = harness::PolicyKind::GreedyBuffer;
    cfg.episodes = 1;
    cfg.dps_per_episode = 30;
    cfg.pop_period_dps = 10;
    cfg.seed = 44;
    const auto bundle = harness::run_experiment(cfg, {}, "/tmp/qflow_dyn");
    // sample counts: 10 DPs x 6 + 10 x 5 + 10 x 4
    CHECK(bundle.summary.samples == 10 * 6 + 10 * 5 + 10 * 4);
}

TEST_CASE("channel_bins scenario walks clients between good and bad bins") {
    harness::ExperimentConfig cfg;
    cfg.scenario = harness::Scenario::ChannelBins;
    cfg.policy = harness::PolicyKind::RoundRobin;
    cfg.episodes = 1;
    cfg.dps_per_episode = 20;
    cfg.pop_period_dps = 10;
    cfg.seed = 45;
    const auto bundle = harness::run_experiment(cfg, {}, "/tmp/qflow_cb");
    CHECK(bundle.summary.samples == 20 * 9);
    // transcript shows both bins in use
    std::ifstream f("/tmp/qflow_cb/transcript.csv");
    std::string line;
    std::getline(f, line);
    std::set<int> bins_seen;
    while (std::getline(f, line)) {
        int dp, id, stalls, queue, bin;
        double buf, qoe, served;
        REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf,%d,%lf,%d,%d,%lf", &dp, &id, &buf, &stalls,
                            &qoe, &queue, &bin, &served) == 8);
        bins_seen.insert(bin);
    }
    CHECK(bins_seen == std::set<int>{0, 1});
}

TEST_CASE("compare ranks policies and pairs deltas by seed") {
    std::vector<harness::Summary> summaries;
    auto mk = [](const char* policy, std::uint64_t seed, double mean) {
        harness::Summary s;
        s.policy = policy;
        s.scenario = "static6";
        s.seed = seed;
        s.mean_qoe = mean;
        s.p_qoe5 = mean / 5.0;
        return s;
    };
    summaries.push_back(mk("a", 1, 4.0));
    summaries.push_back(mk("a", 2, 4.2));
    summaries.push_back(mk("b", 1, 3.5));
    summaries.push_back(mk("b", 2, 3.9));
    const auto rows = harness::compare(summaries);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].policy == "a");
    CHECK(rows[0].delta_vs_top == doctest::Approx(0.0));
    CHECK(rows[1].policy == "b");
    CHECK(rows[1].delta_vs_top == doctest::Approx(((4.0 - 3.5) + (4.2 - 3.9)) / 2.0));

    // identical policies -> zero deltas
    const auto same = harness::compare({mk("x", 1, 4.0), mk("y", 1, 4.0)});
    CHECK(same[0].delta_vs_top == doctest::Approx(0.0));
    CHECK(same[1].delta_vs_top == doctest::Approx(0.0));

    auto other = mk("c", 1, 4.0);
    other.scenario = "vanilla";
    summaries.push_back(other);
    CHECK_THROWS_AS(harness::compare(summaries), std::invalid_argument);
}

TEST_CASE("trace generation logs canonical joint states and both action bits") {
    harness::TraceGenConfig cfg;
    cfg.dps_per_policy = 30;
    cfg.seed = 10;
    const auto log = harness::generate_traces(cfg);
    CHECK(log.system_states.size() == 5 * 30);
    CHECK(log.client_tuples.size() == 5 * 30 * 6);
    for (const auto& s : log.system_states) {
        REQUIRE(s.size() == 6);
        CHECK(std::is_sorted(s.begin(), s.end()));
    }
    std::set<int> bits;
    for (const auto& t : log.client_tuples) bits.insert(t.a);
    CHECK(bits == std::set<int>{0, 1});
    // labels in range
    for (const auto& t : log.client_tuples) {
        CHECK(t.s < mdp::kNumLabels);
        CHECK(t.s2 < mdp::kNumLabels);
    }
}

TEST_CASE("feature vectors normalize to [0,1] with well-served padding") {
    std::vector<policy::ClientView> clients{{0, 10.0, 2, 3.0}, {1, 0.0, 7, 1.0}};
    const auto x = harness::features_from_views(clients, 4);
    REQUIRE(x.size() == 12);
    CHECK(x[0] == doctest::Approx(0.5));
    CHECK(x[1] == doctest::Approx(0.5));
    CHECK(x[2] == doctest::Approx(0.5));
    CHECK(x[3] == doctest::Approx(0.0));
    CHECK(x[4] == doctest::Approx(1.0));  // stalls clamp at 4
    CHECK(x[5] == doctest::Approx(0.0));
    for (std::size_t i = 6; i < 12; i += 3) {
        CHECK(x[i] == 1.0);
        CHECK(x[i + 1] == 0.0);
        CHECK(x[i + 2] == 1.0);
    }
    for (double v : x) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(harness::features_from_views(clients, 1), std::invalid_argument);
}

TEST_CASE("SimDqnEnv: 15 actions for 6 choose 2, rewards are mean QoE") {
    sim::SimConfig sc;
    harness::SimDqnEnv env(sc, 2, 3);
    CHECK(env.feature_dim() == 18);
    CHECK(env.n_actions() == 15);
    auto x = env.reset();
    REQUIRE(x.size() == 18);
    const auto [x2, r] = env.step(0);
    CHECK(x2.size() == 18);
    CHECK(r > 1.0);
    CHECK(r <= 5.0);
}

TEST_CASE("quantize6 matches the wire rounding") {
    CHECK(harness::quantize6(1.23456789) == doctest::Approx(1.234568).epsilon(1e-12));
    CHECK(harness::quantize6(5.0) == 5.0);
    CHECK(harness::quantize6(0.0000004) == 0.0);
}

TEST_CASE("artifact files round-trip: kernel, traces, system, values, mfg, index") {
    // build small artifacts through the real pipeline
    harness::TraceGenConfig tg;
    tg.dps_per_policy = 25;
    tg.seed = 91;
    const auto log = harness::generate_traces(tg);
    const auto kernel = model::ClientKernel::fit(log);

    io::save_client_kernel("/tmp/qflow_k.txt", kernel, 0.95);
    const auto k2 = io::load_client_kernel("/tmp/qflow_k.txt");
    for (int s = 0; s < mdp::kNumLabels; s += 97)
        for (int a = 0; a < 2; ++a) {
            const auto& r1 = kernel.row(s, a);
            const auto& r2 = k2.row(s, a);
            REQUIRE(r1.size() == r2.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < r1.size(); ++i) {
                CHECK(r1[i].first == r2[i].first);
                CHECK(std::abs(r1[i].second - r2[i].second) < 1e-8);
                sum += r2[i].second;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));  // renormalized on load
            CHECK(kernel.seen(s, a) == k2.seen(s, a));
        }

    io::save_traces("/tmp/qflow_t.txt", log);
    const auto t2 = io::load_traces("/tmp/qflow_t.txt");
    CHECK(t2.client_tuples.size() == log.client_tuples.size());
    CHECK(t2.system_states == log.system_states);

    const auto sp = model::top_states(log.system_states, 20);
    io::SystemArtifacts sys;
    sys.sp = sp;
    sys.actions = mdp::enumerate_actions(6, 2);
    sys.gamma = 0.9;
    sys.kernel = model::synthesize_system_kernel(kernel, sp, sys.actions, 30, 5, 0, true);
    io::save_system("/tmp/qflow_sys.txt", sys);
    const auto sys2 = io::load_system("/tmp/qflow_sys.txt");
    CHECK(sys2.sp.states == sys.sp.states);
    CHECK(sys2.actions == sys.actions);
    CHECK(sys2.gamma == doctest::Approx(0.9));
    for (int s = 0; s < sys.kernel.n_states; s += 7)
        for (int a = 0; a < sys.kernel.n_actions; a += 4) {
            const auto& r1 = sys.kernel.row(s, a);
            const auto& r2 = sys2.kernel.row(s, a);
            REQUIRE(r1.size() == r2.size());
            for (std::size_t i = 0; i < r1.size(); ++i) {
                CHECK(r1[i].first == r2[i].first);
                CHECK(std::abs(r1[i].second - r2[i].second) < 1e-8);
            }
            CHECK(std::abs(sys.kernel.reward_at(s, a) - sys2.kernel.reward_at(s, a)) < 1e-8);
        }

    const auto sol = model::value_iteration(sys.kernel, 0.9);
    io::save_values("/tmp/qflow_vals.txt", sol, sys.kernel.n_actions, 0.9);
    const auto sol2 = io::load_values("/tmp/qflow_vals.txt");
    REQUIRE(sol2.v.size() == sol.v.size());
    for (std::size_t i = 0; i < sol.v.size(); ++i) {
        CHECK(std::abs(sol2.v[i] - sol.v[i]) < 1e-8);
        CHECK(sol2.policy[i] == sol.policy[i]);
    }

    io::MfgArtifacts mfg;
    mfg.bids = auction::BidSet::linspace(0.0, 5.0, 11);
    mfg.rho = auction::BidDistribution::uniform(mfg.bids);
    auction::BidMdpConfig bcfg;
    bcfg.gamma = 0.9;
    mfg.solution = auction::solve_bid_mdp(kernel, mfg.bids, mfg.rho, 5, 2, bcfg);
    mfg.gamma = 0.9;
    io::save_mfg("/tmp/qflow_mfg.txt", mfg);
    const auto mfg2 = io::load_mfg("/tmp/qflow_mfg.txt");
    CHECK(mfg2.bids.grid.size() == 11);
    for (int s = 0; s < mdp::kNumLabels; s += 53) {
        CHECK(std::abs(mfg2.solution.v[static_cast<std::size_t>(s)] -
                       mfg.solution.v[static_cast<std::size_t>(s)]) < 1e-8);
        CHECK(mfg2.solution.bid[static_cast<std::size_t>(s)] ==
              doctest::Approx(mfg.solution.bid[static_cast<std::size_t>(s)]));
    }

    const auto table = indexing::build_index(mfg.solution.bid);
    io::save_index("/tmp/qflow_idx.csv", table);
    const auto table2 = io::load_index("/tmp/qflow_idx.csv");
    CHECK(table2.index == table.index);
}
