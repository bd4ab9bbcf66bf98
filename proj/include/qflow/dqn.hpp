#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qflow/mlp.hpp"
#include "qflow/rng.hpp"

// Double DQN with uniform experience replay and a periodically synchronized
// target network. The task is continuing: episode ends are truncations, so
// no terminal masking anywhere.

namespace qflow::rl {

struct Transition {
    std::vector<double> s;
    int action = 0;
    double reward = 0.0;
    std::vector<double> s2;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return data_[i]; }
    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

  private:
    std::size_t capacity_;
    std::size_t next_ = 0;  // FIFO eviction cursor
    std::vector<Transition> data_;
};

struct TrainConfig {
    double gamma = 0.9999;
    double lr = 0.001;
    int batch = 32;
    long target_sync = 100000;
    double huber_delta = 1.0;
    double eps_start = 1.0;
    double eps_end = 0.01;
    long eps_decay_steps = 1000000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    long steps_per_episode = 200;
    long episodes = 1000;
    std::size_t replay_capacity = 500000;
    std::vector<int> hidden{64, 32};
    std::uint64_t seed = 1;

    long total_steps() const { return steps_per_episode * episodes; }

    // Compress the step-denominated schedule proportionally to a reduced
    // budget, keeping the full-scale ratios.
    TrainConfig scaled_to(long budget_steps) const;
};

double epsilon_at(long step, const TrainConfig& cfg);

// y = r + gamma * Q_target(s', argmax_b Q_online(s', b))
double double_dqn_target(const nn::Mlp& online, const nn::Mlp& target, double reward,
                         std::span<const double> s2, double gamma);

int act_epsilon_greedy(const nn::Mlp& net, std::span<const double> x, long step,
                       const TrainConfig& cfg, Rng& rng);

// Environment interface for the trainer; continuing task, reset() starts a
// fresh episode.
class Env {
  public:
    virtual ~Env() = default;
    virtual int feature_dim() const = 0;
    virtual int n_actions() const = 0;
    virtual std::vector<double> reset() = 0;
    virtual std::pair<std::vector<double>, double> step(int action) = 0;
};

struct TrainResult {
    nn::Mlp net;
    std::vector<double> episode_mean_reward;
    long steps = 0;
};

using EpisodeCallback = std::function<void(long episode, double mean_reward)>;
using StepProbe = std::function<void(long step, const nn::Mlp& online, const nn::Mlp& target)>;

TrainResult train(Env& env, const TrainConfig& cfg, const EpisodeCallback& on_episode = {},
                  const StepProbe& probe = {});

// Checkpoint: text header (sizes, steps, config hash) + full-precision weights.
void save_checkpoint(const std::string& path, const nn::Mlp& net, long steps,
                     const TrainConfig& cfg);
struct Checkpoint {
    nn::Mlp net;
    long steps = 0;
    std::uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::string& path);
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace qflow::rl
