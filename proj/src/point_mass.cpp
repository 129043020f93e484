#include "infom/point_mass.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace infom {

void PointMassConfig::validate() const {
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("point mass: noise_scale must be >= 0");
  if (!(step_size > 0.0)) throw std::invalid_argument("point mass: step_size must be > 0");
  if (goals.empty()) throw std::invalid_argument("point mass: need at least one goal");
  if (reward_goal >= goals.size()) throw std::invalid_argument("point mass: reward_goal out of range");
  if (horizon < 2) throw std::invalid_argument("point mass: horizon must be >= 2");
}

Vec2 PointMassController::mean_action(const Vec2& state, const Vec2& goal) const {
  Vec2 a;
  for (int i = 0; i < 2; ++i) a[i] = std::clamp(gain * (goal[i] - state[i]), -1.0, 1.0);
  return a;
}

PointMassEnv::PointMassEnv(PointMassConfig config) : config_(std::move(config)) {
  config_.validate();
}

Vec2 PointMassEnv::reset(Rng& rng) const { return {rng.uniform(), rng.uniform()}; }

Vec2 PointMassEnv::step(const Vec2& state, std::span<const double> action, Rng& rng) const {
  if (action.size() != 2) throw std::invalid_argument("point mass: action must be 2-D");
  Vec2 next;
  for (int i = 0; i < 2; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    next[i] = std::clamp(state[i] + config_.step_size * a + config_.noise_scale * rng.normal(), 0.0, 1.0);
  }
  return next;
}

double PointMassEnv::reward(const Vec2& state) const {
  const Vec2& g = config_.goals[config_.reward_goal];
  return std::hypot(state[0] - g[0], state[1] - g[1]) <= config_.goal_radius ? 1.0 : 0.0;
}

}  // namespace infom
