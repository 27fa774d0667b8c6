#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drs/error.hpp"
#include "drs/random.hpp"
#include "drs/stages.hpp"

namespace drs {

/// Flat FIFO store of transitions for off-policy updates.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;

  explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
  }

  void push(Transition t) {
    if (data_.size() == capacity_) data_.pop_front();
    data_.push_back(std::move(t));
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  /// Uniform with replacement; nullopt when the buffer is empty.
  std::optional<std::vector<const Transition*>> sample(std::size_t n, Rng& rng) const {
    if (data_.empty()) return std::nullopt;
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&data_[uniform_index(rng, data_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> data_;
};

inline std::optional<std::vector<const Transition*>> replay_sample(const ReplayBuffer& buffer, std::size_t n, Rng& rng) {
  return buffer.sample(n, rng);
}

/// A sampled transition together with the trajectory it came from.
struct TransitionRef {
  const Trajectory* trajectory = nullptr;
  const Transition* transition = nullptr;
};

struct DiscriminatorBatch {
  std::vector<TransitionRef> positives;
  std::vector<TransitionRef> negatives;
};

/// Stage buffers B_0..B_N. A trajectory lives in exactly the buffer matching
/// its trajectory stage index. Demonstrations go to B_N and are never evicted.
class StageBuffers {
 public:
  static constexpr std::size_t kDefaultCapacity = 2000;

  explicit StageBuffers(int num_stages, std::size_t capacity_per_buffer = kDefaultCapacity)
      : num_stages_(num_stages), capacity_(capacity_per_buffer), stores_(static_cast<std::size_t>(num_stages + 1)) {
    if (num_stages < 1) throw ConfigError("stage buffers need at least one stage");
    if (capacity_per_buffer == 0) throw ConfigError("stage buffer capacity must be positive");
  }

  int num_stages() const { return num_stages_; }

  void seed_demos(std::vector<Trajectory> demos) {
    for (auto& d : demos) {
      if (d.stage_index() != num_stages_)
        throw UsageError("demonstrations must be success trajectories (stage index " + std::to_string(num_stages_) +
                         "), got stage " + std::to_string(d.stage_index()));
      auto ptr = std::make_shared<const Trajectory>(std::move(d));
      auto& store = stores_.back();
      for (const auto& t : ptr->transitions()) store.demo_flat.push_back({ptr.get(), &t});
      store.demos.push_back(std::move(ptr));
    }
  }

  /// Appends to B_{stage index}; the oldest non-demo trajectory there is
  /// evicted when the buffer is full. Returns the buffer index.
  int route(Trajectory traj) {
    const int j = traj.stage_index();
    if (j < 0 || j > num_stages_)
      throw UsageError("trajectory stage index " + std::to_string(j) + " outside [0, " + std::to_string(num_stages_) + "]");
    auto& store = stores_[static_cast<std::size_t>(j)];
    if (store.trajectories.size() + store.demos.size() >= capacity_ && !store.trajectories.empty()) {
      const std::size_t len = store.trajectories.front()->size();
      store.flat.erase(store.flat.begin(), store.flat.begin() + static_cast<std::ptrdiff_t>(len));
      store.trajectories.pop_front();
    }
    auto ptr = std::make_shared<const Trajectory>(std::move(traj));
    for (const auto& t : ptr->transitions()) store.flat.push_back({ptr.get(), &t});
    store.trajectories.push_back(std::move(ptr));
    return j;
  }

  /// Trajectories (demos first) currently in B_k.
  std::vector<const Trajectory*> buffer(int k) const {
    const auto& store = stores_.at(static_cast<std::size_t>(k));
    std::vector<const Trajectory*> out;
    for (const auto& d : store.demos) out.push_back(d.get());
    for (const auto& t : store.trajectories) out.push_back(t.get());
    return out;
  }
  std::size_t trajectory_count(int k) const {
    const auto& store = stores_.at(static_cast<std::size_t>(k));
    return store.demos.size() + store.trajectories.size();
  }
  std::size_t transition_count(int k) const {
    const auto& store = stores_.at(static_cast<std::size_t>(k));
    return store.demo_flat.size() + store.flat.size();
  }
  std::size_t total_trajectories() const {
    std::size_t n = 0;
    for (int k = 0; k <= num_stages_; ++k) n += trajectory_count(k);
    return n;
  }
  std::size_t demo_transition_count() const { return stores_.back().demo_flat.size(); }

  /// n transitions drawn uniformly from the union of B_lo..B_hi; nullopt if empty.
  std::optional<std::vector<TransitionRef>> sample_range(int lo, int hi, std::size_t n, Rng& rng) const {
    std::size_t total = 0;
    for (int k = lo; k <= hi; ++k) total += transition_count(k);
    if (total == 0) return std::nullopt;
    std::vector<TransitionRef> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t u = uniform_index(rng, total);
      for (int k = lo; k <= hi; ++k) {
        const auto& store = stores_[static_cast<std::size_t>(k)];
        if (u < store.demo_flat.size()) {
          out.push_back(store.demo_flat[u]);
          break;
        }
        u -= store.demo_flat.size();
        if (u < store.flat.size()) {
          out.push_back(store.flat[u]);
          break;
        }
        u -= store.flat.size();
      }
    }
    return out;
  }

  /// Positives from B_{k+1}..B_N, negatives from B_0..B_k; nullopt when
  /// either side has no data (the caller skips f_k this round).
  std::optional<DiscriminatorBatch> sample_discriminator_batch(int k, std::size_t n, Rng& rng) const {
    if (k < 0 || k >= num_stages_)
      throw UsageError("discriminator index " + std::to_string(k) + " outside [0, " + std::to_string(num_stages_) + ")");
    std::size_t pos_total = 0;
    std::size_t neg_total = 0;
    for (int i = 0; i <= k; ++i) neg_total += transition_count(i);
    for (int i = k + 1; i <= num_stages_; ++i) pos_total += transition_count(i);
    if (pos_total == 0 || neg_total == 0) return std::nullopt;
    DiscriminatorBatch batch;
    batch.positives = *sample_range(k + 1, num_stages_, n, rng);
    batch.negatives = *sample_range(0, k, n, rng);
    return batch;
  }

  /// Uniform over demonstration transitions only.
  std::optional<std::vector<TransitionRef>> sample_demos(std::size_t n, Rng& rng) const {
    const auto& flat = stores_.back().demo_flat;
    if (flat.empty()) return std::nullopt;
    std::vector<TransitionRef> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(flat[uniform_index(rng, flat.size())]);
    return out;
  }

 private:
  struct Store {
    std::vector<std::shared_ptr<const Trajectory>> demos;
    std::vector<TransitionRef> demo_flat;
    std::deque<std::shared_ptr<const Trajectory>> trajectories;
    std::deque<TransitionRef> flat;
  };

  int num_stages_;
  std::size_t capacity_;
  std::vector<Store> stores_;
};

inline int route_trajectory(StageBuffers& buffers, Trajectory traj) { return buffers.route(std::move(traj)); }

inline std::optional<DiscriminatorBatch> sample_discriminator_batch(const StageBuffers& buffers, int k, std::size_t n, Rng& rng) {
  return buffers.sample_discriminator_batch(k, n, rng);
}

}  // namespace drs
