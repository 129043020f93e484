#pragma once

#include <array>
#include <span>
#include <vector>

#include "infom/random.hpp"

namespace infom {

using Vec2 = std::array<double, 2>;

/// 2-D point in the unit box. Actions are clipped to [-1, 1]^2 and scaled by
/// `step_size`; Gaussian noise is added and the result is clipped to the box.
struct PointMassConfig {
  double step_size = 0.1;
  double noise_scale = 0.01;
  /// Goal position per intention.
  std::vector<Vec2> goals{{0.9, 0.9}, {0.1, 0.1}};
  /// Index into `goals` that defines the fine-tuning reward.
  std::size_t reward_goal = 0;
  double goal_radius = 0.15;
  std::size_t horizon = 40;

  void validate() const;
};

/// Noisy proportional controller toward the intention's goal:
/// a = clip(gain * (goal - s)) + N(0, action_noise^2), then clipped.
struct PointMassController {
  double gain = 2.0;
  double action_noise = 0.1;

  Vec2 mean_action(const Vec2& state, const Vec2& goal) const;
};

class PointMassEnv {
 public:
  explicit PointMassEnv(PointMassConfig config);

  const PointMassConfig& config() const { return config_; }
  Vec2 reset(Rng& rng) const;
  Vec2 step(const Vec2& state, std::span<const double> action, Rng& rng) const;
  /// 1 inside the reward goal's radius, else 0.
  double reward(const Vec2& state) const;

 private:
  PointMassConfig config_;
};

}  // namespace infom
