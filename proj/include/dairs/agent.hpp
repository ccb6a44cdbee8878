#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "dairs/core.hpp"
#include "dairs/nn.hpp"

namespace dairs {

/// What one agent sees: the pooled state grid plus its scan-cursor encoding.
struct Observation {
  Matrix grid;
  std::vector<double> cursor;

  bool operator==(const Observation&) const = default;
};

struct Transition {
  Observation state;
  int action = 0;
  double reward = 0.0;
  Observation next_state;
};

/// Bounded FIFO of transitions; the oldest entry is evicted first.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 300) : capacity_(capacity) {
    if (capacity == 0) throw Error("replay memory capacity must be positive");
  }

  void push(Transition t) {
    if (buffer_.size() == capacity_) buffer_.pop_front();
    buffer_.push_back(std::move(t));
  }

  /// `batch` distinct indices drawn uniformly, or nullopt while the memory
  /// holds fewer than `batch` transitions.
  template <class Rng>
  std::optional<std::vector<std::size_t>> sample_indices(std::size_t batch,
                                                         Rng& rng) const {
    if (batch == 0 || buffer_.size() < batch) return std::nullopt;
    std::vector<std::size_t> idx(buffer_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(batch);
    return idx;
  }

  template <class Rng>
  std::optional<std::vector<const Transition*>> sample_batch(std::size_t batch,
                                                             Rng& rng) const {
    auto idx = sample_indices(batch, rng);
    if (!idx) return std::nullopt;
    std::vector<const Transition*> out;
    for (auto i : *idx) out.push_back(&buffer_[i]);
    return out;
  }

  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return buffer_[i]; }

 private:
  std::size_t capacity_;
  std::deque<Transition> buffer_;
};

inline double td_target(double reward, double gamma, std::span<const double> next_q) {
  return reward + gamma * *std::max_element(next_q.begin(), next_q.end());
}

/// Ties go to action 1 (select).
inline int greedy_action(std::span<const double> q) {
  return q[1] >= q[0] ? 1 : 0;
}

struct DqnConfig {
  double gamma = 0.9;
  /// Probability of taking the greedy action.
  double epsilon = 0.8;
  double learning_rate = 0.01;
  std::size_t batch = 32;
  std::size_t capacity = 300;
  std::size_t target_sync_every = 50;
  nn::QNetworkShape network;
};

class DqnAgent {
 public:
  template <class Rng>
  DqnAgent(const DqnConfig& config, Rng& init_rng)
      : config_(config),
        online_(nn::make_qnetwork(config.network, init_rng)),
        target_(online_),
        memory_(config.capacity),
        gradient_(online_) {
    if (!(config.gamma > 0.0 && config.gamma < 1.0)) {
      throw Error("discount factor must lie in (0, 1)");
    }
    if (!(config.learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (config.epsilon < 0.0 || config.epsilon > 1.0) {
      throw Error("epsilon must lie in [0, 1]");
    }
  }

  std::vector<double> q_values(const Observation& obs) const {
    return nn::q_forward(online_, obs.grid, obs.cursor);
  }

  /// Advice, when present, overrides the policy. Otherwise greedy with
  /// probability epsilon, uniformly random otherwise.
  template <class Rng>
  int select_action(const Observation& obs, Rng& rng,
                    std::optional<int> advised = std::nullopt) const {
    if (advised) return *advised;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < config_.epsilon) return greedy_action(q_values(obs));
    return std::uniform_int_distribution<int>(0, 1)(rng);
  }

  void remember(Transition t) { memory_.push(std::move(t)); }

  /// One gradient-descent step on the mean squared TD error of a sampled
  /// batch; the target network is synced every `target_sync_every` steps.
  template <class Rng>
  std::optional<double> train_step(Rng& rng) {
    const auto batch = memory_.sample_batch(config_.batch, rng);
    if (!batch) return std::nullopt;
    gradient_.zero();
    const double scale = 1.0 / static_cast<double>(batch->size());
    double loss = 0.0;
    nn::QTrace trace;
    std::vector<double> grad_q(online_.num_actions());
    for (const Transition* t : *batch) {
      const auto next_q = nn::q_forward(target_, t->next_state.grid, t->next_state.cursor);
      const double target = td_target(t->reward, config_.gamma, next_q);
      const auto q = nn::q_forward(online_, t->state.grid, t->state.cursor, trace);
      const double err = target - q[t->action];
      loss += err * err * scale;
      std::fill(grad_q.begin(), grad_q.end(), 0.0);
      grad_q[t->action] = -2.0 * err * scale;
      nn::q_backward(online_, trace, grad_q, gradient_);
    }
    if (!std::isfinite(loss)) throw Error("non-finite TD loss");
    nn::sgd_step(online_, gradient_, config_.learning_rate);
    if (++train_steps_ % config_.target_sync_every == 0) sync_target();
    return loss;
  }

  void sync_target() { target_ = online_; }

  const nn::QNetwork& online() const { return online_; }
  const nn::QNetwork& target() const { return target_; }
  nn::QNetwork& online() { return online_; }
  const ReplayMemory& memory() const { return memory_; }
  const DqnConfig& config() const { return config_; }
  std::size_t train_steps() const { return train_steps_; }

  /// Both networks and, optionally, the replay memory in the array format.
  std::vector<nn::NamedArray> checkpoint(bool with_memory) const {
    std::vector<nn::NamedArray> arrays;
    nn::append_network(arrays, online_, "online");
    nn::append_network(arrays, target_, "target");
    arrays.push_back({"train_steps", {1}, {static_cast<double>(train_steps_)}});
    if (with_memory && memory_.size() > 0) {
      const auto& first = memory_[0];
      const std::size_t g = first.state.grid.rows;
      const std::size_t c = first.state.cursor.size();
      const std::size_t n = memory_.size();
      nn::NamedArray states{"memory.states", {n, g, g}, {}};
      nn::NamedArray next{"memory.next_states", {n, g, g}, {}};
      nn::NamedArray cursors{"memory.cursors", {n, c}, {}};
      nn::NamedArray next_cursors{"memory.next_cursors", {n, c}, {}};
      nn::NamedArray actions{"memory.actions", {n}, {}};
      nn::NamedArray rewards{"memory.rewards", {n}, {}};
      for (std::size_t i = 0; i < n; ++i) {
        const auto& t = memory_[i];
        auto add = [](std::vector<double>& dst, const std::vector<double>& src) {
          dst.insert(dst.end(), src.begin(), src.end());
        };
        add(states.values, t.state.grid.data);
        add(next.values, t.next_state.grid.data);
        add(cursors.values, t.state.cursor);
        add(next_cursors.values, t.next_state.cursor);
        actions.values.push_back(t.action);
        rewards.values.push_back(t.reward);
      }
      for (auto* a : {&states, &next, &cursors, &next_cursors, &actions, &rewards}) {
        arrays.push_back(std::move(*a));
      }
    }
    return arrays;
  }

  void restore(const std::vector<nn::NamedArray>& arrays) {
    online_ = nn::extract_network(arrays, "online");
    target_ = nn::extract_network(arrays, "target");
    gradient_ = nn::QGradient(online_);
    memory_ = ReplayMemory(config_.capacity);
    train_steps_ = 0;
    const nn::NamedArray* states = nullptr;
    std::vector<const nn::NamedArray*> rest(5, nullptr);
    const char* names[] = {"memory.next_states", "memory.cursors", "memory.next_cursors",
                           "memory.actions", "memory.rewards"};
    for (const auto& a : arrays) {
      if (a.name == "train_steps") train_steps_ = static_cast<std::size_t>(a.values.at(0));
      if (a.name == "memory.states") states = &a;
      for (std::size_t k = 0; k < rest.size(); ++k) {
        if (a.name == names[k]) rest[k] = &a;
      }
    }
    if (!states) return;
    for (auto* r : rest) {
      if (!r) throw Error("checkpoint has a partial replay memory");
    }
    const std::size_t n = states->shape[0];
    const std::size_t g = states->shape[1];
    const std::size_t c = rest[1]->shape[1];
    for (std::size_t i = 0; i < n; ++i) {
      Transition t;
      auto grid = [&](const nn::NamedArray& a) {
        Matrix m(g, g);
        std::copy_n(a.values.begin() + static_cast<long>(i * g * g), g * g, m.data.begin());
        return m;
      };
      auto vec = [&](const nn::NamedArray& a) {
        return std::vector<double>(a.values.begin() + static_cast<long>(i * c),
                                   a.values.begin() + static_cast<long>((i + 1) * c));
      };
      t.state = {grid(*states), vec(*rest[1])};
      t.next_state = {grid(*rest[0]), vec(*rest[2])};
      t.action = static_cast<int>(rest[3]->values[i]);
      t.reward = rest[4]->values[i];
      memory_.push(std::move(t));
    }
  }

 private:
  DqnConfig config_;
  nn::QNetwork online_;
  nn::QNetwork target_;
  ReplayMemory memory_;
  nn::QGradient gradient_;
  std::size_t train_steps_ = 0;
};

}  // namespace dairs
