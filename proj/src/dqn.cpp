#include "qflow/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qflow::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
    if (data_.empty()) throw std::logic_error("replay: sampling from empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> out(batch);
    for (auto& i : out) i = pick(rng);
    return out;
}

TrainConfig TrainConfig::scaled_to(long budget_steps) const {
    TrainConfig c = *this;
    const double ratio = static_cast<double>(budget_steps) /
                         static_cast<double>(eps_decay_steps > 0 ? eps_decay_steps : 1);
    c.eps_decay_steps = budget_steps;
    c.target_sync = std::max<long>(1, std::lround(static_cast<double>(target_sync) * ratio));
    c.replay_capacity = std::max<std::size_t>(
        static_cast<std::size_t>(batch),
        static_cast<std::size_t>(std::llround(static_cast<double>(replay_capacity) * ratio)));
    c.episodes = std::max<long>(1, budget_steps / steps_per_episode);
    return c;
}

double epsilon_at(long step, const TrainConfig& cfg) {
    if (cfg.eps_decay_steps <= 0) return cfg.eps_end;
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.eps_decay_steps);
    return std::max(cfg.eps_end, cfg.eps_start - (cfg.eps_start - cfg.eps_end) * frac);
}

double double_dqn_target(const nn::Mlp& online, const nn::Mlp& target, double reward,
                         std::span<const double> s2, double gamma) {
    const int best = online.argmax(s2);
    const auto q = target.forward(s2);
    return reward + gamma * q[static_cast<std::size_t>(best)];
}

int act_epsilon_greedy(const nn::Mlp& net, std::span<const double> x, long step,
                       const TrainConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < epsilon_at(step, cfg)) {
        std::uniform_int_distribution<int> a(0, net.output_dim() - 1);
        return a(rng);
    }
    return net.argmax(x);
}

TrainResult train(Env& env, const TrainConfig& cfg, const EpisodeCallback& on_episode,
                  const StepProbe& probe) {
    std::vector<int> sizes;
    sizes.push_back(env.feature_dim());
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(env.n_actions());

    nn::Mlp online = nn::Mlp::create(sizes, derive_seed(cfg.seed, 0xD09));
    nn::Mlp target = online;
    nn::AdamState adam = nn::AdamState::zeros_like(online);
    const nn::AdamConfig adam_cfg{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
    ReplayBuffer replay(cfg.replay_capacity);
    Rng rng(derive_seed(cfg.seed, 0xAC7));

    TrainResult result;
    nn::Grad grad = nn::Grad::zeros_like(online);
    long global_step = 0;

    for (long ep = 0; ep < cfg.episodes; ++ep) {
        std::vector<double> state = env.reset();
        double reward_sum = 0.0;
        for (long t = 0; t < cfg.steps_per_episode; ++t) {
            const int action = act_epsilon_greedy(online, state, global_step, cfg, rng);
            auto [next_state, reward] = env.step(action);
            reward_sum += reward;
            replay.push({state, action, reward, next_state});
            state = std::move(next_state);

            if (replay.size() >= static_cast<std::size_t>(cfg.batch)) {
                grad = nn::Grad::zeros_like(online);
                double loss = 0.0;
                for (std::size_t idx : replay.sample_indices(static_cast<std::size_t>(cfg.batch), rng)) {
                    const Transition& tr = replay.at(idx);
                    const double y = double_dqn_target(online, target, tr.reward, tr.s2, cfg.gamma);
                    loss += nn::mlp_gradient(online, tr.s, tr.action, y, cfg.huber_delta, grad);
                }
                loss /= cfg.batch;
                if (!std::isfinite(loss))
                    throw std::runtime_error("dqn: non-finite loss at step " + std::to_string(global_step));
                grad.scale(1.0 / cfg.batch);
                nn::adam_step(online, grad, adam, adam_cfg);
            }

            ++global_step;
            if (global_step % cfg.target_sync == 0) target = online;
            if (probe) probe(global_step, online, target);
        }
        result.episode_mean_reward.push_back(reward_sum / static_cast<double>(cfg.steps_per_episode));
        if (on_episode) on_episode(ep, result.episode_mean_reward.back());
    }
    result.net = std::move(online);
    result.steps = global_step;
    return result;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
    std::ostringstream os;
    os << cfg.gamma << ' ' << cfg.lr << ' ' << cfg.batch << ' ' << cfg.target_sync << ' '
       << cfg.huber_delta << ' ' << cfg.eps_start << ' ' << cfg.eps_end << ' '
       << cfg.eps_decay_steps << ' ' << cfg.steps_per_episode << ' ' << cfg.episodes << ' '
       << cfg.replay_capacity;
    for (int h : cfg.hidden) os << ' ' << h;
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : os.str()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

void save_checkpoint(const std::string& path, const nn::Mlp& net, long steps,
                     const TrainConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "qflow-checkpoint 1\n";
    f << "layers";
    for (int s : net.sizes) f << ' ' << s;
    f << "\nsteps " << steps << "\nconfig_hash " << config_hash(cfg) << "\nweights\n";
    f.precision(17);
    const auto flat = flatten(net);
    for (std::size_t i = 0; i < flat.size(); ++i) f << flat[i] << (i + 1 == flat.size() ? '\n' : ' ');
    if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string tag;
    int version = 0;
    f >> tag >> version;
    if (tag != "qflow-checkpoint" || version != 1)
        throw std::runtime_error("bad checkpoint header: " + path);
    f >> tag;
    if (tag != "layers") throw std::runtime_error("bad checkpoint: expected layers");
    std::vector<int> sizes;
    std::string line;
    std::getline(f, line);
    std::istringstream ls(line);
    for (int s; ls >> s;) sizes.push_back(s);
    Checkpoint cp;
    f >> tag >> cp.steps;
    if (tag != "steps") throw std::runtime_error("bad checkpoint: expected steps");
    f >> tag >> cp.config_hash;
    if (tag != "config_hash") throw std::runtime_error("bad checkpoint: expected config_hash");
    f >> tag;
    if (tag != "weights") throw std::runtime_error("bad checkpoint: expected weights");
    cp.net = nn::Mlp::create(sizes, 0);
    std::vector<double> flat(cp.net.n_params());
    for (auto& x : flat)
        if (!(f >> x)) throw std::runtime_error("truncated checkpoint: " + path);
    nn::unflatten(cp.net, flat);
    return cp;
}

}  // namespace qflow::rl
