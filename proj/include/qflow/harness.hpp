#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qflow/auction.hpp"
#include "qflow/dqn.hpp"
#include "qflow/index_policy.hpp"
#include "qflow/model_based.hpp"
#include "qflow/policies.hpp"
#include "qflow/serialize.hpp"
#include "qflow/sim.hpp"

// Experiment runner: scenario setup, policy engines (shared by in-process and
// protocol runs), transcript/metrics/summary outputs, and the model-fitting
// trace pipeline.

namespace qflow::harness {

// Policies consume stats-grade observations: the same 6-decimal precision the
// wire format carries, so in-process and protocol runs decide identically.
double quantize6(double x);

enum class Scenario { Static6, Dynamic4to6, Vanilla, ChannelBins };
enum class PolicyKind {
    Vanilla,
    RoundRobin,
    Random,
    GreedyBuffer,
    RewardGreedy,
    ModelBased,
    ModelFree,
    Auction,
    Index
};

std::string to_string(Scenario s);
std::string to_string(PolicyKind p);
Scenario scenario_from_string(const std::string& s);
PolicyKind policy_from_string(const std::string& s);

struct BinView {
    int bin = 0;
    int n_hi = 2;
    bool single_queue = false;
    std::vector<policy::ClientView> clients;  // ascending id
};

struct EnvView {
    long dp_index = 0;  // within the episode
    std::vector<BinView> bins;
};

class PolicyEngine {
  public:
    virtual ~PolicyEngine() = default;
    virtual sim::Action decide(const EnvView& view) = 0;
    virtual void reset(std::uint64_t /*seed*/) {}
};

struct Artifacts {
    std::shared_ptr<model::ClientKernel> kernel;
    std::shared_ptr<io::SystemArtifacts> system;
    std::shared_ptr<model::ValueSolution> values;
    std::shared_ptr<io::MfgArtifacts> mfg;
    std::shared_ptr<indexing::IndexTable> index;
    std::vector<std::shared_ptr<rl::Checkpoint>> checkpoints;
};

std::unique_ptr<PolicyEngine> make_engine(PolicyKind kind, const Artifacts& artifacts,
                                          std::uint64_t seed);

struct ExperimentConfig {
    Scenario scenario = Scenario::Static6;
    PolicyKind policy = PolicyKind::RoundRobin;
    long episodes = 20;
    long dps_per_episode = 200;
    std::uint64_t seed = 1;
    bool via_protocol = false;
    long pop_period_dps = 180;  // dynamic scenarios: 30 simulated minutes
    sim::SimConfig base_sim{};
};

sim::SimConfig scenario_sim_config(const ExperimentConfig& cfg);

struct Summary {
    std::string policy;
    std::string scenario;
    std::uint64_t seed = 0;
    long episodes = 0;
    long dps = 0;
    long samples = 0;
    double mean_qoe = 0.0;
    double p_qoe5 = 0.0;
    double mean_stall = 0.0;
    double mean_buffer = 0.0;
};

struct MetricsBundle {
    std::vector<double> qoe_samples;
    std::vector<double> buffer_samples;
    std::vector<double> stall_durations;
    std::vector<double> per_client_avg_qoe;  // one per (episode, client)
    Summary summary;
};

// right-continuous empirical CDF over sorted unique values
std::vector<std::pair<double, double>> compute_cdf(std::vector<double> samples);

MetricsBundle run_experiment(const ExperimentConfig& cfg, const Artifacts& artifacts,
                             const std::string& out_dir);

// The summary is always recomputed from the exported files, so recomputation
// reproduces it exactly.
MetricsBundle compute_metrics_from_files(const std::string& transcript_path,
                                         const std::string& stalls_path, Summary meta);

std::string summary_line(const Summary& s);
Summary parse_summary_line(const std::string& line);
std::vector<Summary> load_summaries(const std::vector<std::string>& paths);

struct CompareRow {
    std::string policy;
    int runs = 0;
    double mean_qoe = 0.0;
    double p_qoe5 = 0.0;
    double mean_stall = 0.0;
    double delta_vs_top = 0.0;  // mean over paired seeds of (top - this)
};

std::vector<CompareRow> compare(const std::vector<Summary>& summaries);

// ---- model pipeline ----

std::vector<std::uint16_t> canonical_state(std::vector<std::uint16_t> labels);

struct TraceGenConfig {
    long dps_per_policy = 4000;
    std::uint64_t seed = 1;
    sim::SimConfig sim_cfg{};
    // when set, the fifth trace block runs the trained model-free policy;
    // otherwise reward-greedy bootstrapped from the first four blocks
    std::shared_ptr<rl::Checkpoint> model_free_checkpoint;
};

// Runs round robin, greedy buffer, random, vanilla, then a fifth policy (see
// TraceGenConfig), and returns the merged log. Joint states are
// canonicalized (sorted labels).
model::TraceLog generate_traces(const TraceGenConfig& cfg);

// ---- DQN adapter ----

std::vector<double> features_from_views(const std::vector<policy::ClientView>& clients,
                                        int capacity);

class SimDqnEnv final : public rl::Env {
  public:
    SimDqnEnv(sim::SimConfig cfg, int n_hi, std::uint64_t seed);

    int feature_dim() const override { return 3 * capacity_; }
    int n_actions() const override { return static_cast<int>(actions_.size()); }
    std::vector<double> reset() override;
    std::pair<std::vector<double>, double> step(int action) override;

  private:
    std::vector<double> features() const;

    sim::SimConfig cfg_;
    int capacity_;
    std::vector<std::vector<int>> actions_;
    std::uint64_t seed_;
    long episode_ = 0;
    std::unique_ptr<sim::Simulation> env_;
};

}  // namespace qflow::harness
