#include "qflow/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "qflow/protocol.hpp"

namespace qflow::harness {

double quantize6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return std::strtod(buf, nullptr);
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::Static6: return "static6";
        case Scenario::Dynamic4to6: return "dynamic4to6";
        case Scenario::Vanilla: return "vanilla";
        case Scenario::ChannelBins: return "channel_bins";
    }
    return "?";
}

std::string to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::Vanilla: return "vanilla";
        case PolicyKind::RoundRobin: return "round_robin";
        case PolicyKind::Random: return "random";
        case PolicyKind::GreedyBuffer: return "greedy_buffer";
        case PolicyKind::RewardGreedy: return "reward_greedy";
        case PolicyKind::ModelBased: return "model_based";
        case PolicyKind::ModelFree: return "model_free";
        case PolicyKind::Auction: return "auction";
        case PolicyKind::Index: return "index";
    }
    return "?";
}

Scenario scenario_from_string(const std::string& s) {
    for (Scenario v : {Scenario::Static6, Scenario::Dynamic4to6, Scenario::Vanilla,
                       Scenario::ChannelBins})
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown scenario: " + s);
}

PolicyKind policy_from_string(const std::string& s) {
    for (PolicyKind v :
         {PolicyKind::Vanilla, PolicyKind::RoundRobin, PolicyKind::Random, PolicyKind::GreedyBuffer,
          PolicyKind::RewardGreedy, PolicyKind::ModelBased, PolicyKind::ModelFree,
          PolicyKind::Auction, PolicyKind::Index})
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown policy: " + s);
}

namespace {

EnvView make_env_view(const sim::Simulation& env, long dp_in_episode) {
    EnvView view;
    view.dp_index = dp_in_episode;
    const auto obs = env.observe();
    for (int b = 0; b < static_cast<int>(env.config().bins.size()); ++b) {
        const auto& bc = env.config().bins[static_cast<std::size_t>(b)];
        BinView bv;
        bv.bin = b;
        bv.n_hi = bc.n_hi;
        bv.single_queue = bc.single_queue;
        for (int id : env.client_ids_in_bin(b)) {
            const auto& o = obs[static_cast<std::size_t>(id)];
            bv.clients.push_back({id, quantize6(o.buffer), o.stalls, quantize6(o.qoe)});
        }
        view.bins.push_back(std::move(bv));
    }
    return view;
}

int want_hi(const BinView& bv) { return std::min<int>(bv.n_hi, static_cast<int>(bv.clients.size())); }

std::vector<int> all_ids(const BinView& bv) {
    std::vector<int> ids;
    ids.reserve(bv.clients.size());
    for (const auto& c : bv.clients) ids.push_back(c.id);
    return ids;
}

// ---- engines ----

class VanillaEngine final : public PolicyEngine {
  public:
    sim::Action decide(const EnvView& view) override {
        sim::Action a;
        for (const auto& bv : view.bins) {
            if (!bv.single_queue)
                throw std::invalid_argument("vanilla policy requires the vanilla scenario");
            a.hi.emplace_back();
        }
        return a;
    }
};

class RoundRobinEngine final : public PolicyEngine {
  public:
    sim::Action decide(const EnvView& view) override {
        sim::Action a;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                a.hi.emplace_back();
                continue;
            }
            const auto ids = all_ids(bv);
            a.hi.push_back(policy::round_robin(ids, view.dp_index, want_hi(bv)));
        }
        return a;
    }
};

class GreedyBufferEngine final : public PolicyEngine {
  public:
    sim::Action decide(const EnvView& view) override {
        sim::Action a;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                a.hi.emplace_back();
                continue;
            }
            a.hi.push_back(policy::greedy_buffer(bv.clients, want_hi(bv)));
        }
        return a;
    }
};

class RandomEngine final : public PolicyEngine {
  public:
    explicit RandomEngine(std::uint64_t seed) : rng_(seed) {}
    void reset(std::uint64_t seed) override { rng_.seed(seed); }
    sim::Action decide(const EnvView& view) override {
        sim::Action a;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                a.hi.emplace_back();
                continue;
            }
            const auto ids = all_ids(bv);
            a.hi.push_back(policy::random_policy(ids, rng_, want_hi(bv)));
        }
        return a;
    }

  private:
    Rng rng_;
};

class RewardGreedyEngine final : public PolicyEngine {
  public:
    explicit RewardGreedyEngine(std::shared_ptr<model::ClientKernel> kernel)
        : kernel_(std::move(kernel)) {}
    sim::Action decide(const EnvView& view) override {
        sim::Action a;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                a.hi.emplace_back();
                continue;
            }
            a.hi.push_back(policy::reward_greedy(bv.clients, *kernel_, want_hi(bv)));
        }
        return a;
    }

  private:
    std::shared_ptr<model::ClientKernel> kernel_;
};

class ModelBasedEngine final : public PolicyEngine {
  public:
    ModelBasedEngine(std::shared_ptr<io::SystemArtifacts> sys,
                     std::shared_ptr<model::ValueSolution> values)
        : sys_(std::move(sys)), values_(std::move(values)) {
        if (sys_->kernel.n_states != static_cast<int>(values_->v.size()))
            throw std::invalid_argument("model_based: kernel/value size mismatch");
    }

    sim::Action decide(const EnvView& view) override {
        sim::Action out;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                out.hi.emplace_back();
                continue;
            }
            out.hi.push_back(decide_bin(bv));
        }
        return out;
    }

  private:
    std::vector<int> decide_bin(const BinView& bv) {
        const int n_act = static_cast<int>(bv.clients.size());
        if (n_act < bv.n_hi) return all_ids(bv);
        const int slots = sys_->sp.slots;
        if (n_act > slots)
            throw std::invalid_argument("model_based: more clients than the model's slot count");

        // pad, then canonicalize by ascending label; perm maps canonical slot
        // back to the original position
        std::vector<std::pair<std::uint16_t, int>> tagged;
        for (int i = 0; i < n_act; ++i)
            tagged.emplace_back(static_cast<std::uint16_t>(mdp::encode(mdp::discretize(
                                    bv.clients[static_cast<std::size_t>(i)].buffer,
                                    bv.clients[static_cast<std::size_t>(i)].stalls,
                                    bv.clients[static_cast<std::size_t>(i)].qoe))),
                                i);
        for (int i = n_act; i < slots; ++i)
            tagged.emplace_back(static_cast<std::uint16_t>(mdp::encode(mdp::kPaddingState)), i);
        std::stable_sort(tagged.begin(), tagged.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::uint16_t> canon(static_cast<std::size_t>(slots));
        std::vector<int> perm(static_cast<std::size_t>(slots));
        for (int i = 0; i < slots; ++i) {
            canon[static_cast<std::size_t>(i)] = tagged[static_cast<std::size_t>(i)].first;
            perm[static_cast<std::size_t>(i)] = tagged[static_cast<std::size_t>(i)].second;
        }

        const int s = sys_->sp.project(canon);
        const auto& kernel = sys_->kernel;
        double best = -std::numeric_limits<double>::infinity();
        int best_a = -1;
        for (int a = 0; a < kernel.n_actions; ++a) {
            bool valid = true;
            for (int slot : sys_->actions[static_cast<std::size_t>(a)])
                if (perm[static_cast<std::size_t>(slot)] >= n_act) {
                    valid = false;
                    break;
                }
            if (!valid) continue;
            double q = kernel.reward_at(s, a);
            for (const auto& [s2, p] : kernel.row(s, a))
                q += sys_->gamma * p * values_->v[static_cast<std::size_t>(s2)];
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        std::vector<int> ids;
        for (int slot : sys_->actions[static_cast<std::size_t>(best_a)])
            ids.push_back(bv.clients[static_cast<std::size_t>(perm[static_cast<std::size_t>(slot)])].id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    std::shared_ptr<io::SystemArtifacts> sys_;
    std::shared_ptr<model::ValueSolution> values_;
};

class ModelFreeEngine final : public PolicyEngine {
  public:
    explicit ModelFreeEngine(std::vector<std::shared_ptr<rl::Checkpoint>> checkpoints)
        : checkpoints_(std::move(checkpoints)) {
        if (checkpoints_.empty()) throw std::invalid_argument("model_free: no checkpoint");
        std::sort(checkpoints_.begin(), checkpoints_.end(),
                  [](const auto& a, const auto& b) { return a->net.input_dim() < b->net.input_dim(); });
    }

    sim::Action decide(const EnvView& view) override {
        sim::Action out;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                out.hi.emplace_back();
                continue;
            }
            out.hi.push_back(decide_bin(bv));
        }
        return out;
    }

  private:
    std::vector<int> decide_bin(const BinView& bv) {
        const int n_act = static_cast<int>(bv.clients.size());
        if (n_act < bv.n_hi) return all_ids(bv);

        // exact-capacity net if trained, otherwise the smallest larger one
        // with the absent slots padded to well-served states
        const rl::Checkpoint* cp = nullptr;
        for (const auto& c : checkpoints_)
            if (c->net.input_dim() / 3 >= n_act) {
                cp = c.get();
                break;
            }
        if (!cp) throw std::invalid_argument("model_free: no checkpoint large enough");
        const int capacity = cp->net.input_dim() / 3;

        const auto actions = mdp::enumerate_actions(capacity, bv.n_hi);
        if (static_cast<int>(actions.size()) != cp->net.output_dim())
            throw std::invalid_argument("model_free: checkpoint action space mismatch");

        const auto x = features_from_views(bv.clients, capacity);
        const auto q = cp->net.forward(x);
        double best = -std::numeric_limits<double>::infinity();
        int best_a = -1;
        for (int a = 0; a < static_cast<int>(actions.size()); ++a) {
            bool valid = true;
            for (int slot : actions[static_cast<std::size_t>(a)])
                if (slot >= n_act) {
                    valid = false;
                    break;
                }
            if (!valid) continue;
            if (q[static_cast<std::size_t>(a)] > best) {
                best = q[static_cast<std::size_t>(a)];
                best_a = a;
            }
        }
        std::vector<int> ids;
        for (int slot : actions[static_cast<std::size_t>(best_a)])
            ids.push_back(bv.clients[static_cast<std::size_t>(slot)].id);
        return ids;
    }

    std::vector<std::shared_ptr<rl::Checkpoint>> checkpoints_;
};

class AuctionEngine final : public PolicyEngine {
  public:
    AuctionEngine(std::shared_ptr<io::MfgArtifacts> mfg, std::uint64_t seed)
        : mfg_(std::move(mfg)), rng_(seed) {}
    void reset(std::uint64_t seed) override { rng_.seed(seed); }

    sim::Action decide(const EnvView& view) override {
        sim::Action out;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                out.hi.emplace_back();
                continue;
            }
            if (bv.clients.empty()) {
                out.hi.emplace_back();
                continue;
            }
            std::vector<std::pair<int, double>> bids;
            for (const auto& c : bv.clients) {
                const int label = mdp::encode(mdp::discretize(c.buffer, c.stalls, c.qoe));
                bids.emplace_back(c.id, mfg_->solution.bid[static_cast<std::size_t>(label)]);
            }
            auto res = auction::run_auction(bids, want_hi(bv), rng_);
            std::sort(res.winners.begin(), res.winners.end());
            out.hi.push_back(std::move(res.winners));
        }
        return out;
    }

  private:
    std::shared_ptr<io::MfgArtifacts> mfg_;
    Rng rng_;
};

class IndexEngine final : public PolicyEngine {
  public:
    explicit IndexEngine(std::shared_ptr<indexing::IndexTable> table) : table_(std::move(table)) {}

    sim::Action decide(const EnvView& view) override {
        sim::Action out;
        for (const auto& bv : view.bins) {
            if (bv.single_queue) {
                out.hi.emplace_back();
                continue;
            }
            out.hi.push_back(indexing::index_policy(bv.clients, *table_, want_hi(bv)));
        }
        return out;
    }

  private:
    std::shared_ptr<indexing::IndexTable> table_;
};

}  // namespace

std::unique_ptr<PolicyEngine> make_engine(PolicyKind kind, const Artifacts& artifacts,
                                          std::uint64_t seed) {
    switch (kind) {
        case PolicyKind::Vanilla: return std::make_unique<VanillaEngine>();
        case PolicyKind::RoundRobin: return std::make_unique<RoundRobinEngine>();
        case PolicyKind::Random: return std::make_unique<RandomEngine>(seed);
        case PolicyKind::GreedyBuffer: return std::make_unique<GreedyBufferEngine>();
        case PolicyKind::RewardGreedy:
            if (!artifacts.kernel) throw std::invalid_argument("reward_greedy: kernel artifact required");
            return std::make_unique<RewardGreedyEngine>(artifacts.kernel);
        case PolicyKind::ModelBased:
            if (!artifacts.system || !artifacts.values)
                throw std::invalid_argument("model_based: system kernel and values required");
            return std::make_unique<ModelBasedEngine>(artifacts.system, artifacts.values);
        case PolicyKind::ModelFree:
            if (artifacts.checkpoints.empty())
                throw std::invalid_argument("model_free: checkpoint required");
            return std::make_unique<ModelFreeEngine>(artifacts.checkpoints);
        case PolicyKind::Auction:
            if (!artifacts.mfg) throw std::invalid_argument("auction: mfg solution required");
            return std::make_unique<AuctionEngine>(artifacts.mfg, seed);
        case PolicyKind::Index:
            if (!artifacts.index) throw std::invalid_argument("index: index table required");
            return std::make_unique<IndexEngine>(artifacts.index);
    }
    throw std::invalid_argument("unknown policy kind");
}

sim::SimConfig scenario_sim_config(const ExperimentConfig& cfg) {
    sim::SimConfig sc = cfg.base_sim;
    switch (cfg.scenario) {
        case Scenario::Static6:
            break;
        case Scenario::Dynamic4to6:
            break;
        case Scenario::Vanilla: {
            // one queue carrying the sum of the two-queue bandwidths
            sim::BinConfig b;
            const sim::BinConfig two = sc.bins.empty() ? sim::BinConfig{} : sc.bins.front();
            b.single_queue = true;
            b.hi_bw = two.hi_bw + two.lo_bw;
            b.lo_bw = 0.1;  // unused
            b.n_hi = two.n_hi;
            sc.bins = {b};
            break;
        }
        case Scenario::ChannelBins: {
            sim::BinConfig good;  // 11 / 4.3
            sim::BinConfig bad = good;
            bad.hi_bw = good.hi_bw * sc.bad_bin_scale;
            bad.lo_bw = good.lo_bw * sc.bad_bin_scale;
            sc.bins = {good, bad};
            sc.n_clients = 9;
            sc.max_clients = std::max(sc.max_clients, 9);
            break;
        }
    }
    return sc;
}

namespace {

// population schedules, applied at pop_period boundaries within an episode
void apply_schedule(const ExperimentConfig& cfg, sim::Simulation& env, long dp) {
    if (cfg.pop_period_dps <= 0) return;
    if (cfg.scenario == Scenario::Dynamic4to6) {
        static constexpr int kSizes[] = {6, 5, 4};
        const long phase = (dp / cfg.pop_period_dps) % 3;
        const int want = kSizes[phase];
        if (static_cast<int>(env.clients().size()) != want) env.set_population(want);
    } else if (cfg.scenario == Scenario::ChannelBins) {
        // (good, bad) split walks 6/3 -> 5/4 -> 4/5 -> 3/6 and wraps
        const long phase = (dp / cfg.pop_period_dps) % 4;
        const int good = 6 - static_cast<int>(phase);
        for (int id = 0; id < static_cast<int>(env.clients().size()); ++id) {
            const int bin = id < good ? 0 : 1;
            if (env.clients()[static_cast<std::size_t>(id)].bin != bin) env.set_client_bin(id, bin);
        }
    }
}

struct TranscriptWriter {
    std::ofstream rows;
    std::ofstream stalls;

    TranscriptWriter(const std::string& dir) {
        std::filesystem::create_directories(dir);
        rows.open(dir + "/transcript.csv");
        stalls.open(dir + "/stalls.csv");
        if (!rows || !stalls) throw std::runtime_error("cannot write transcripts under " + dir);
        rows << "dp_index,client_id,buffer,stall_count,qoe,queue,bin,served_mbits\n";
        stalls << "dp_index,client_id,start_s,end_s\n";
    }

    void add(const sim::DpResult& res, long global_dp) {
        char buf[256];
        for (const auto& r : res.rows) {
            std::snprintf(buf, sizeof(buf), "%ld,%d,%.6f,%d,%.6f,%d,%d,%.6f\n", global_dp,
                          r.client_id, r.buffer, r.stall_count, r.qoe, r.queue_id, r.bin,
                          r.served_mbits);
            rows << buf;
        }
        for (const auto& s : res.completed_stalls) {
            std::snprintf(buf, sizeof(buf), "%ld,%d,%.6f,%.6f\n", global_dp, s.client_id, s.start_s,
                          s.end_s);
            stalls << buf;
        }
    }
};

}  // namespace

std::vector<std::pair<double, double>> compute_cdf(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("compute_cdf: empty input");
    std::sort(samples.begin(), samples.end());
    std::vector<std::pair<double, double>> cdf;
    const double n = static_cast<double>(samples.size());
    std::size_t i = 0;
    while (i < samples.size()) {
        std::size_t j = i;
        while (j + 1 < samples.size() && samples[j + 1] == samples[i]) ++j;
        cdf.emplace_back(samples[i], static_cast<double>(j + 1) / n);
        i = j + 1;
    }
    return cdf;
}

MetricsBundle compute_metrics_from_files(const std::string& transcript_path,
                                         const std::string& stalls_path, Summary meta) {
    MetricsBundle out;
    std::ifstream f(transcript_path);
    if (!f) throw std::runtime_error("cannot read " + transcript_path);
    std::string line;
    std::getline(f, line);  // header
    std::map<std::pair<long, int>, std::pair<double, long>> per_client;  // (episode, id) -> (sum, n)
    double qoe_sum = 0.0, buf_sum = 0.0;
    long n5 = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        long dp = 0;
        int id = 0, stall_count = 0, queue = 0, bin = 0;
        double buffer = 0, qoe = 0, served = 0;
        if (std::sscanf(line.c_str(), "%ld,%d,%lf,%d,%lf,%d,%d,%lf", &dp, &id, &buffer, &stall_count,
                        &qoe, &queue, &bin, &served) != 8)
            throw std::runtime_error("bad transcript row: " + line);
        out.qoe_samples.push_back(qoe);
        out.buffer_samples.push_back(buffer);
        qoe_sum += qoe;
        buf_sum += buffer;
        if (qoe >= 5.0 - 1e-6) ++n5;
        const long episode = meta.dps > 0 ? dp / meta.dps : 0;
        auto& [sum, n] = per_client[{episode, id}];
        sum += qoe;
        ++n;
    }
    for (const auto& [_, v] : per_client) out.per_client_avg_qoe.push_back(v.first / v.second);

    std::ifstream fs(stalls_path);
    if (!fs) throw std::runtime_error("cannot read " + stalls_path);
    std::getline(fs, line);
    double stall_sum = 0.0;
    while (std::getline(fs, line)) {
        if (line.empty()) continue;
        long dp = 0;
        int id = 0;
        double start = 0, end = 0;
        if (std::sscanf(line.c_str(), "%ld,%d,%lf,%lf", &dp, &id, &start, &end) != 4)
            throw std::runtime_error("bad stall row: " + line);
        out.stall_durations.push_back(end - start);
        stall_sum += end - start;
    }

    meta.samples = static_cast<long>(out.qoe_samples.size());
    meta.mean_qoe = meta.samples ? qoe_sum / meta.samples : 0.0;
    meta.mean_buffer = meta.samples ? buf_sum / meta.samples : 0.0;
    meta.p_qoe5 = meta.samples ? static_cast<double>(n5) / meta.samples : 0.0;
    meta.mean_stall =
        out.stall_durations.empty() ? 0.0 : stall_sum / static_cast<double>(out.stall_durations.size());
    out.summary = std::move(meta);
    return out;
}

MetricsBundle run_experiment(const ExperimentConfig& cfg, const Artifacts& artifacts,
                             const std::string& out_dir) {
    if (cfg.episodes < 1 || cfg.dps_per_episode < 1)
        throw std::invalid_argument("run_experiment: episodes and dps must be positive");
    if (cfg.via_protocol &&
        (cfg.scenario == Scenario::Dynamic4to6 || cfg.scenario == Scenario::ChannelBins))
        throw std::invalid_argument("run_experiment: protocol mode supports static scenarios only");

    auto engine = make_engine(cfg.policy, artifacts, derive_seed(cfg.seed, 0x9E));
    const sim::SimConfig sim_cfg = scenario_sim_config(cfg);

    TranscriptWriter writer(out_dir);

    for (long ep = 0; ep < cfg.episodes; ++ep) {
        sim::Simulation env(sim_cfg, derive_seed(cfg.seed, 0xE9, static_cast<std::uint64_t>(ep)));
        engine->reset(derive_seed(cfg.seed, 0x9E, static_cast<std::uint64_t>(ep)));
        const long dp0 = ep * cfg.dps_per_episode;

        if (cfg.via_protocol) {
            auto [t_env, t_ctrl] = proto::make_pipe_pair();
            std::exception_ptr env_err;
            long local_dp = 0;
            proto::DpSink sink = [&](const sim::DpResult& res) { writer.add(res, dp0 + local_dp++); };
            std::thread env_thread([&] {
                try {
                    proto::serve_environment(env, *t_env, {cfg.dps_per_episode, 30.0}, sink);
                } catch (...) {
                    env_err = std::current_exception();
                    t_env->close();
                }
            });
            std::vector<int> client_bins(static_cast<std::size_t>(sim_cfg.n_clients), 0);
            proto::ControllerConfig ccfg{cfg.dps_per_episode, client_bins,
                                         static_cast<int>(sim_cfg.bins.size()), sim_cfg.dp_seconds,
                                         30.0};
            proto::DecideFn decide = [&](const proto::ControllerView& cv) {
                EnvView view;
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
            try {
                proto::run_controller(*t_ctrl, decide, ccfg);
            } catch (...) {
                t_ctrl->close();
                env_thread.join();
                throw;
            }
            env_thread.join();
            if (env_err) std::rethrow_exception(env_err);
        } else {
            for (long dp = 0; dp < cfg.dps_per_episode; ++dp) {
                apply_schedule(cfg, env, dp);
                const EnvView view = make_env_view(env, dp);
                const sim::Action action = engine->decide(view);
                const sim::DpResult res = env.step_dp(action);
                writer.add(res, dp0 + dp);
            }
        }
    }
    writer.rows.flush();
    writer.stalls.flush();

    Summary meta;
    meta.policy = to_string(cfg.policy);
    meta.scenario = to_string(cfg.scenario);
    meta.seed = cfg.seed;
    meta.episodes = cfg.episodes;
    meta.dps = cfg.dps_per_episode;
    MetricsBundle bundle =
        compute_metrics_from_files(out_dir + "/transcript.csv", out_dir + "/stalls.csv", meta);

    // CDF exports
    std::ofstream mf(out_dir + "/metrics.csv");
    mf << "metric,value,cum_frac\n";
    auto dump_cdf = [&](const char* name, const std::vector<double>& samples) {
        if (samples.empty()) return;
        for (const auto& [v, c] : compute_cdf(samples)) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", name, v, c);
            mf << buf;
        }
    };
    dump_cdf("qoe", bundle.qoe_samples);
    dump_cdf("avg_qoe", bundle.per_client_avg_qoe);
    dump_cdf("buffer", bundle.buffer_samples);
    dump_cdf("stall_duration", bundle.stall_durations);

    std::ofstream sf(out_dir + "/summary.txt");
    sf << summary_line(bundle.summary) << '\n';
    return bundle;
}

std::string summary_line(const Summary& s) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "policy=%s scenario=%s seed=%llu episodes=%ld dps=%ld samples=%ld "
                  "mean_qoe=%.6f p_qoe5=%.6f mean_stall=%.6f mean_buffer=%.6f",
                  s.policy.c_str(), s.scenario.c_str(),
                  static_cast<unsigned long long>(s.seed), s.episodes, s.dps, s.samples, s.mean_qoe,
                  s.p_qoe5, s.mean_stall, s.mean_buffer);
    return buf;
}

Summary parse_summary_line(const std::string& line) {
    Summary s;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad summary token: " + tok);
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "policy") s.policy = val;
        else if (key == "scenario") s.scenario = val;
        else if (key == "seed") s.seed = std::stoull(val);
        else if (key == "episodes") s.episodes = std::stol(val);
        else if (key == "dps") s.dps = std::stol(val);
        else if (key == "samples") s.samples = std::stol(val);
        else if (key == "mean_qoe") s.mean_qoe = std::stod(val);
        else if (key == "p_qoe5") s.p_qoe5 = std::stod(val);
        else if (key == "mean_stall") s.mean_stall = std::stod(val);
        else if (key == "mean_buffer") s.mean_buffer = std::stod(val);
        else throw std::invalid_argument("unknown summary key: " + key);
    }
    if (s.policy.empty() || s.scenario.empty()) throw std::invalid_argument("incomplete summary line");
    return s;
}

std::vector<Summary> load_summaries(const std::vector<std::string>& paths) {
    std::vector<Summary> out;
    for (const auto& p : paths) {
        std::ifstream f(p);
        if (!f) throw std::runtime_error("cannot read " + p);
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) out.push_back(parse_summary_line(line));
    }
    return out;
}

std::vector<CompareRow> compare(const std::vector<Summary>& summaries) {
    if (summaries.size() < 2) throw std::invalid_argument("compare: need at least 2 summaries");
    const std::string scenario = summaries.front().scenario;
    for (const auto& s : summaries)
        if (s.scenario != scenario) throw std::invalid_argument("compare: scenario mismatch");

    std::map<std::string, std::vector<const Summary*>> by_policy;
    for (const auto& s : summaries) by_policy[s.policy].push_back(&s);

    std::vector<CompareRow> rows;
    for (const auto& [policy, runs] : by_policy) {
        CompareRow r;
        r.policy = policy;
        r.runs = static_cast<int>(runs.size());
        for (const auto* s : runs) {
            r.mean_qoe += s->mean_qoe;
            r.p_qoe5 += s->p_qoe5;
            r.mean_stall += s->mean_stall;
        }
        r.mean_qoe /= r.runs;
        r.p_qoe5 /= r.runs;
        r.mean_stall /= r.runs;
        rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end(),
              [](const CompareRow& a, const CompareRow& b) { return a.mean_qoe > b.mean_qoe; });

    // paired-seed deltas against the top policy
    const auto& top_runs = by_policy[rows.front().policy];
    std::map<std::uint64_t, double> top_by_seed;
    for (const auto* s : top_runs) top_by_seed[s->seed] = s->mean_qoe;
    for (auto& r : rows) {
        double acc = 0.0;
        int n = 0;
        for (const auto* s : by_policy[r.policy]) {
            const auto it = top_by_seed.find(s->seed);
            if (it != top_by_seed.end()) {
                acc += it->second - s->mean_qoe;
                ++n;
            }
        }
        r.delta_vs_top = n ? acc / n : rows.front().mean_qoe - r.mean_qoe;
    }
    return rows;
}

// ---- model pipeline ----

std::vector<std::uint16_t> canonical_state(std::vector<std::uint16_t> labels) {
    std::sort(labels.begin(), labels.end());
    return labels;
}

namespace {

std::vector<std::uint16_t> view_labels(const EnvView& view) {
    std::vector<std::uint16_t> labels;
    for (const auto& bv : view.bins)
        for (const auto& c : bv.clients)
            labels.push_back(
                static_cast<std::uint16_t>(mdp::encode(mdp::discretize(c.buffer, c.stalls, c.qoe))));
    return labels;
}

void run_trace_policy(model::TraceLog& log, PolicyKind kind, const Artifacts& arts,
                      const sim::SimConfig& sim_cfg, long dps, std::uint64_t seed) {
    auto engine = make_engine(kind, arts, seed);
    engine->reset(derive_seed(seed, 0x7C));
    sim::Simulation env(sim_cfg, derive_seed(seed, 0xE7));
    EnvView view = make_env_view(env, 0);
    std::vector<std::uint16_t> labels = view_labels(view);
    for (long dp = 0; dp < dps; ++dp) {
        log.system_states.push_back(canonical_state(labels));
        const sim::Action action = engine->decide(view);
        env.step_dp(action);
        view = make_env_view(env, dp + 1);
        const std::vector<std::uint16_t> next = view_labels(view);
        for (std::size_t i = 0; i < labels.size() && i < next.size(); ++i) {
            std::uint8_t a_bit = 0;
            for (const auto& hi : action.hi)
                for (int id : hi)
                    if (id == static_cast<int>(i)) a_bit = 1;
            log.client_tuples.push_back({labels[i], a_bit, next[i]});
        }
        labels = next;
    }
}

}  // namespace

model::TraceLog generate_traces(const TraceGenConfig& cfg) {
    model::TraceLog log;
    Artifacts none;

    ExperimentConfig vanilla_cfg;
    vanilla_cfg.scenario = Scenario::Vanilla;
    vanilla_cfg.base_sim = cfg.sim_cfg;
    const sim::SimConfig vanilla_sim = scenario_sim_config(vanilla_cfg);

    run_trace_policy(log, PolicyKind::RoundRobin, none, cfg.sim_cfg, cfg.dps_per_policy,
                     derive_seed(cfg.seed, 1));
    run_trace_policy(log, PolicyKind::GreedyBuffer, none, cfg.sim_cfg, cfg.dps_per_policy,
                     derive_seed(cfg.seed, 2));
    run_trace_policy(log, PolicyKind::Random, none, cfg.sim_cfg, cfg.dps_per_policy,
                     derive_seed(cfg.seed, 3));
    run_trace_policy(log, PolicyKind::Vanilla, none, vanilla_sim, cfg.dps_per_policy,
                     derive_seed(cfg.seed, 4));

    if (cfg.model_free_checkpoint) {
        Artifacts mf;
        mf.checkpoints.push_back(cfg.model_free_checkpoint);
        run_trace_policy(log, PolicyKind::ModelFree, mf, cfg.sim_cfg, cfg.dps_per_policy,
                         derive_seed(cfg.seed, 5));
    } else {
        // reward-greedy needs a kernel; bootstrap it from the first four runs
        Artifacts boot;
        boot.kernel = std::make_shared<model::ClientKernel>(model::ClientKernel::fit(log));
        run_trace_policy(log, PolicyKind::RewardGreedy, boot, cfg.sim_cfg, cfg.dps_per_policy,
                         derive_seed(cfg.seed, 5));
    }
    return log;
}

// ---- DQN adapter ----

std::vector<double> features_from_views(const std::vector<policy::ClientView>& clients,
                                        int capacity) {
    if (static_cast<int>(clients.size()) > capacity)
        throw std::invalid_argument("features: more clients than capacity");
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(3 * capacity));
    for (const auto& c : clients) {
        x.push_back(std::clamp(c.buffer / 20.0, 0.0, 1.0));
        x.push_back(std::min(c.stalls, 4) / 4.0);
        x.push_back(std::clamp((c.qoe - 1.0) / 4.0, 0.0, 1.0));
    }
    for (int i = static_cast<int>(clients.size()); i < capacity; ++i) {
        x.push_back(1.0);  // full buffer
        x.push_back(0.0);  // no stalls
        x.push_back(1.0);  // top QoE
    }
    return x;
}

SimDqnEnv::SimDqnEnv(sim::SimConfig cfg, int n_hi, std::uint64_t seed)
    : cfg_(std::move(cfg)), capacity_(cfg_.n_clients),
      actions_(mdp::enumerate_actions(cfg_.n_clients, n_hi)), seed_(seed) {
    if (cfg_.bins.size() != 1) throw std::invalid_argument("SimDqnEnv: single-bin training only");
}

std::vector<double> SimDqnEnv::features() const {
    const EnvView view = make_env_view(*env_, 0);
    return features_from_views(view.bins.front().clients, capacity_);
}

std::vector<double> SimDqnEnv::reset() {
    env_ = std::make_unique<sim::Simulation>(
        cfg_, derive_seed(seed_, 0x5E, static_cast<std::uint64_t>(episode_++)));
    return features();
}

std::pair<std::vector<double>, double> SimDqnEnv::step(int action) {
    if (!env_) throw std::logic_error("SimDqnEnv: step before reset");
    const auto res = env_->step_dp(sim::Action::single_bin(actions_.at(static_cast<std::size_t>(action))));
    const double r = mdp::reward(std::span<const double>(res.qoe));
    return {features(), r};
}

}  // namespace qflow::harness
