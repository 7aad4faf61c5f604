#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "darc/mdp.hpp"
#include "darc/rng.hpp"

namespace darc {

enum class Domain { source, target };

const char* to_string(Domain d);

struct Cell {
  int x = 0;  // column, 0 is the left edge
  int y = 0;  // row, 0 is the top edge
  auto operator<=>(const Cell&) const = default;
};

// Action order used by both gridworld builders.
enum GridAction : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr std::size_t kNumGridActions = 5;

struct GridworldSpec {
  int width = 6;
  int height = 6;
  Cell start{0, 0};
  Cell goal{0, 5};
  // Wall gridworld: obstacle present only in the target.
  // Action-flip gridworld: static obstacle present in both domains.
  std::set<Cell> wall_cells{{0, 2}, {1, 2}, {2, 2}, {3, 2}};
  std::optional<Cell> flip_cell;
  double slip_prob = 0.1;
  double goal_reward = 1.0;
  double step_reward = 0.0;
  std::size_t horizon = 30;
};

// Throws std::invalid_argument naming the first broken invariant.
void validate_gridworld_spec(const GridworldSpec& spec);

// State layout: cell (x, y) is y * width + x; one extra absorbing sink state
// follows the last cell. Acting in the goal pays goal_reward once and moves to
// the sink.
std::size_t cell_state(const GridworldSpec& spec, Cell c);
std::size_t sink_state(const GridworldSpec& spec);
std::size_t goal_state(const GridworldSpec& spec);
std::size_t num_grid_states(const GridworldSpec& spec);
std::optional<Cell> state_cell(const GridworldSpec& spec, std::size_t s);

DomainPair build_wall_gridworld(const GridworldSpec& spec);
DomainPair build_action_flip_gridworld(const GridworldSpec& spec);

// ASCII layout: 'S' start, 'G' goal, '#' wall, 'F' flip cell, '.' empty; one
// text line per row. Other fields keep their defaults.
GridworldSpec parse_gridworld_map(const std::string& text);
std::string gridworld_map(const GridworldSpec& spec);

// Canonical action-flip layout: a one-cell corridor entered through the flip
// cell, and an open two-column detour around a static obstacle.
GridworldSpec default_flip_gridworld_spec();

struct ArcherySpec {
  double target_distance = 70.0;  // meters
  double source_wind_mean = 1.0;
  double source_wind_std = 1.0;
  double target_wind_mean = 0.0;
  double target_wind_std = 0.3;
  double angle_lo_deg = -2.0;
  double angle_hi_deg = 2.0;
};

void validate_archery_spec(const ArcherySpec& spec);

double deg_to_rad(double deg);

// Landing offset for a given wind force.
double archery_landing(double theta_deg, double wind, const ArcherySpec& spec);

double archery_sample(double theta_deg, Domain domain, const ArcherySpec& spec, Rng& rng);

double archery_log_density(double theta_deg, double s_prime, Domain domain,
                           const ArcherySpec& spec);

double archery_reward(double s_prime);

// Reward of one landing; may depend on the aiming angle (e.g. reward + delta r).
using ArcheryRewardFn = std::function<double(double theta_deg, double s_prime)>;

// log mean exp(reward_fn) over n_samples landings drawn from the domain.
double archery_objective(double theta_deg, Domain domain, const ArcheryRewardFn& reward_fn,
                         const ArcherySpec& spec, std::size_t n_samples, Rng& rng);

std::vector<double> archery_theta_grid(const ArcherySpec& spec, std::size_t points = 81);

struct ArcheryCurve {
  std::vector<double> theta_deg;
  std::vector<double> objective;
  double argmax_deg = 0.0;
};

// Evaluates the objective on a grid. Every grid point reuses the same stream
// (common random numbers), so the curve is smooth in theta.
ArcheryCurve archery_sweep(Domain domain, const ArcheryRewardFn& reward_fn,
                           const ArcherySpec& spec, std::size_t n_samples, const Rng& rng,
                           std::size_t points = 81);

}  // namespace darc
