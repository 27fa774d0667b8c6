#pragma once

#include <memory>
#include <string>
#include <vector>

#include "drs/error.hpp"
#include "drs/stages.hpp"

namespace drs {

/// Groups of original stage numbers (1-based), e.g. {{1, 2}, {3}}.
using MergeSpec = std::vector<std::vector<int>>;

/// Checks that `groups` splits 1..num_stages into consecutive runs, in order.
inline void validate_merge_spec(const MergeSpec& groups, int num_stages) {
  if (groups.empty()) throw ConfigError("stage merge: no groups");
  int expected = 1;
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("stage merge: empty group");
    for (int s : g) {
      if (s != expected)
        throw ConfigError("stage merge: groups must be contiguous and ordered; expected stage " +
                          std::to_string(expected) + ", got " + std::to_string(s));
      ++expected;
    }
  }
  if (expected != num_stages + 1)
    throw ConfigError("stage merge: groups cover " + std::to_string(expected - 1) + " of " +
                      std::to_string(num_stages) + " stages");
}

/// Merged flag j is the (closed) original flag of the last stage in group j,
/// so the success flag is carried through unchanged.
inline StageVector merge_stages(const StageVector& raw, const MergeSpec& groups) {
  const StageVector closed = raw.closed();
  StageVector out(static_cast<int>(groups.size()));
  for (std::size_t j = 0; j < groups.size(); ++j) out.set(static_cast<int>(j), closed[groups[j].back() - 1]);
  return out;
}

inline MergeSpec merge_all(int num_stages) {
  std::vector<int> all;
  for (int s = 1; s <= num_stages; ++s) all.push_back(s);
  return {all};
}

inline MergeSpec identity_merge(int num_stages) {
  MergeSpec spec;
  for (int s = 1; s <= num_stages; ++s) spec.push_back({s});
  return spec;
}

/// Env wrapper exposing merged stage vectors.
class StageMergeEnv final : public Env {
 public:
  StageMergeEnv(std::unique_ptr<Env> inner, MergeSpec groups) : inner_(std::move(inner)), groups_(std::move(groups)) {
    if (!inner_) throw ConfigError("stage merge: no environment to wrap");
    validate_merge_spec(groups_, inner_->spec().num_stages);
  }
  StageMergeEnv(const StageMergeEnv& o) : inner_(o.inner_->clone()), groups_(o.groups_) {}

  EnvSpec spec() const override {
    EnvSpec s = inner_->spec();
    s.num_stages = static_cast<int>(groups_.size());
    return s;
  }
  std::string id() const override { return inner_->id() + "+merged"; }
  std::vector<double> reset() override { return inner_->reset(); }
  StepResult step(int action) override {
    StepResult r = inner_->step(action);
    r.transition.next_stages = merge_stages(r.transition.next_stages, groups_);
    return r;
  }
  std::vector<double> observation() const override { return inner_->observation(); }
  StageVector stages() const override { return merge_stages(inner_->stages(), groups_); }
  void reseed(std::uint64_t seed) override { inner_->reseed(seed); }
  std::unique_ptr<Env> clone() const override { return std::make_unique<StageMergeEnv>(*this); }
  std::vector<int> plan_actions() const override { return inner_->plan_actions(); }

  const Env& inner() const { return *inner_; }
  const MergeSpec& groups() const { return groups_; }

 private:
  std::unique_ptr<Env> inner_;
  MergeSpec groups_;
};

inline std::unique_ptr<Env> stage_merge(std::unique_ptr<Env> env, MergeSpec groups) {
  return std::make_unique<StageMergeEnv>(std::move(env), std::move(groups));
}

}  // namespace drs
