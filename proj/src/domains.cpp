#include "darc/domains.hpp"

#include <fmt/format.h>

#include <cmath>
#include <algorithm>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace darc {

const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

namespace {

bool in_bounds(const GridworldSpec& spec, Cell c) {
  return c.x >= 0 && c.y >= 0 && c.x < spec.width && c.y < spec.height;
}

Cell apply_effect(Cell c, std::size_t effect) {
  switch (effect) {
    case kUp: return {c.x, c.y - 1};
    case kDown: return {c.x, c.y + 1};
    case kLeft: return {c.x - 1, c.y};
    case kRight: return {c.x + 1, c.y};
    default: return c;
  }
}

enum class WallMode { ignore, block };

// Fills one domain. flip_at, when set, swaps the up and down effects there.
TabularMDP build_grid(const GridworldSpec& spec, WallMode walls, std::optional<Cell> flip_at) {
  const std::size_t S = num_grid_states(spec);
  const std::size_t A = kNumGridActions;
  const std::size_t sink = sink_state(spec);
  const std::size_t goal = goal_state(spec);
  TabularMDP m = TabularMDP::zeros(S, A, spec.horizon);
  const double slip_each = spec.slip_prob / static_cast<double>(kNumGridActions);

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      Cell c{x, y};
      std::size_t s = cell_state(spec, c);
      for (std::size_t a = 0; a < A; ++a) {
        if (s == goal) {
          m.p(s, a, sink) = 1.0;
          m.r(s, a) = spec.goal_reward;
          continue;
        }
        m.r(s, a) = spec.step_reward;
        std::size_t intended = a;
        if (flip_at && *flip_at == c && (a == kUp || a == kDown)) {
          intended = a == kUp ? kDown : kUp;
        }
        for (std::size_t effect = 0; effect < kNumGridActions; ++effect) {
          double w = slip_each + (effect == intended ? 1.0 - spec.slip_prob : 0.0);
          Cell dest = apply_effect(c, effect);
          if (!in_bounds(spec, dest)) dest = c;
          if (walls == WallMode::block && spec.wall_cells.count(dest)) dest = c;
          m.p(s, a, cell_state(spec, dest)) += w;
        }
      }
    }
  }
  // Wall states are unreachable when walls block. Their rows keep the unblocked
  // outcomes restricted to open cells, so no row ever leads into a wall.
  if (walls == WallMode::block) {
    for (const Cell& w : spec.wall_cells) {
      const std::size_t s = cell_state(spec, w);
      for (std::size_t a = 0; a < A; ++a) {
        auto row = m.row(s, a);
        std::fill(row.begin(), row.end(), 0.0);
        double open = 0.0;
        for (std::size_t effect = 0; effect < kNumGridActions; ++effect) {
          double wgt = slip_each + (effect == a ? 1.0 - spec.slip_prob : 0.0);
          Cell dest = apply_effect(w, effect);
          if (!in_bounds(spec, dest)) dest = w;
          if (spec.wall_cells.count(dest)) continue;
          row[cell_state(spec, dest)] += wgt;
          open += wgt;
        }
        if (open > 0.0) {
          for (double& v : row) v /= open;
        } else {
          row[s] = 1.0;  // boxed in by walls; nothing else is reachable
        }
      }
    }
  }
  for (std::size_t a = 0; a < A; ++a) m.p(sink, a, sink) = 1.0;
  m.initial_dist[cell_state(spec, spec.start)] = 1.0;
  return m;
}

}  // namespace

void validate_gridworld_spec(const GridworldSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) {
    throw std::invalid_argument("gridworld: width and height must be positive");
  }
  if (!in_bounds(spec, spec.start)) throw std::invalid_argument("gridworld: start out of bounds");
  if (!in_bounds(spec, spec.goal)) throw std::invalid_argument("gridworld: goal out of bounds");
  for (const Cell& w : spec.wall_cells) {
    if (!in_bounds(spec, w)) {
      throw std::invalid_argument(fmt::format("gridworld: wall cell ({}, {}) out of bounds", w.x, w.y));
    }
  }
  if (spec.wall_cells.count(spec.start)) throw std::invalid_argument("gridworld: start is a wall");
  if (spec.wall_cells.count(spec.goal)) throw std::invalid_argument("gridworld: goal is a wall");
  if (spec.start == spec.goal) throw std::invalid_argument("gridworld: start equals goal");
  if (spec.flip_cell && !in_bounds(spec, *spec.flip_cell)) {
    throw std::invalid_argument("gridworld: flip cell out of bounds");
  }
  if (!(spec.slip_prob >= 0.0 && spec.slip_prob < 1.0)) {
    throw std::invalid_argument("gridworld: slip_prob must lie in [0, 1)");
  }
  if (!std::isfinite(spec.goal_reward) || !std::isfinite(spec.step_reward)) {
    throw std::invalid_argument("gridworld: rewards must be finite");
  }
  if (spec.horizon == 0) throw std::invalid_argument("gridworld: horizon must be positive");
}

std::size_t cell_state(const GridworldSpec& spec, Cell c) {
  return static_cast<std::size_t>(c.y * spec.width + c.x);
}
std::size_t num_grid_states(const GridworldSpec& spec) {
  return static_cast<std::size_t>(spec.width * spec.height) + 1;
}
std::size_t sink_state(const GridworldSpec& spec) { return num_grid_states(spec) - 1; }
std::size_t goal_state(const GridworldSpec& spec) { return cell_state(spec, spec.goal); }

std::optional<Cell> state_cell(const GridworldSpec& spec, std::size_t s) {
  if (s >= sink_state(spec)) return std::nullopt;
  int i = static_cast<int>(s);
  return Cell{i % spec.width, i / spec.width};
}

DomainPair build_wall_gridworld(const GridworldSpec& spec) {
  validate_gridworld_spec(spec);
  if (spec.flip_cell) throw std::invalid_argument("wall gridworld: flip_cell must be absent");
  return make_domain_pair(build_grid(spec, WallMode::ignore, std::nullopt),
                          build_grid(spec, WallMode::block, std::nullopt));
}

DomainPair build_action_flip_gridworld(const GridworldSpec& spec) {
  validate_gridworld_spec(spec);
  if (!spec.flip_cell) throw std::invalid_argument("action-flip gridworld: flip_cell required");
  if (spec.wall_cells.count(*spec.flip_cell)) {
    throw std::invalid_argument("action-flip gridworld: flip cell is a wall");
  }
  return make_domain_pair(build_grid(spec, WallMode::block, std::nullopt),
                          build_grid(spec, WallMode::block, spec.flip_cell));
}

GridworldSpec parse_gridworld_map(const std::string& text) {
  GridworldSpec spec;
  spec.wall_cells.clear();
  std::istringstream in(text);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  if (rows.empty()) throw std::invalid_argument("gridworld map: empty");
  spec.height = static_cast<int>(rows.size());
  spec.width = static_cast<int>(rows.front().size());
  bool has_start = false, has_goal = false;
  for (int y = 0; y < spec.height; ++y) {
    if (static_cast<int>(rows[y].size()) != spec.width) {
      throw std::invalid_argument(fmt::format("gridworld map: row {} has a different width", y));
    }
    for (int x = 0; x < spec.width; ++x) {
      Cell c{x, y};
      switch (rows[y][x]) {
        case '.': break;
        case '#': spec.wall_cells.insert(c); break;
        case 'S':
          if (has_start) throw std::invalid_argument("gridworld map: more than one 'S'");
          spec.start = c, has_start = true;
          break;
        case 'G':
          if (has_goal) throw std::invalid_argument("gridworld map: more than one 'G'");
          spec.goal = c, has_goal = true;
          break;
        case 'F':
          if (spec.flip_cell) throw std::invalid_argument("gridworld map: more than one 'F'");
          spec.flip_cell = c;
          break;
        default:
          throw std::invalid_argument(
              fmt::format("gridworld map: unknown symbol '{}' at row {}, column {}", rows[y][x], y, x));
      }
    }
  }
  if (!has_start || !has_goal) throw std::invalid_argument("gridworld map: needs 'S' and 'G'");
  return spec;
}

std::string gridworld_map(const GridworldSpec& spec) {
  std::string out;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      Cell c{x, y};
      char ch = '.';
      if (spec.wall_cells.count(c)) ch = '#';
      if (spec.flip_cell && *spec.flip_cell == c) ch = 'F';
      if (c == spec.start) ch = 'S';
      if (c == spec.goal) ch = 'G';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

GridworldSpec default_flip_gridworld_spec() {
  GridworldSpec spec = parse_gridworld_map(
      "S....\n"
      ".F...\n"
      "#.#..\n"
      "#.#..\n"
      "G....\n");
  spec.horizon = 20;
  return spec;
}

void validate_archery_spec(const ArcherySpec& spec) {
  if (!(spec.source_wind_std > 0.0) || !(spec.target_wind_std > 0.0)) {
    throw std::invalid_argument("archery: wind standard deviations must be positive");
  }
  if (!(spec.angle_lo_deg < spec.angle_hi_deg)) {
    throw std::invalid_argument("archery: empty angle range");
  }
  if (spec.angle_lo_deg <= -90.0 || spec.angle_hi_deg >= 90.0) {
    throw std::invalid_argument("archery: angle range must exclude +-90 degrees");
  }
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

double archery_landing(double theta_deg, double wind, const ArcherySpec& spec) {
  const double th = deg_to_rad(theta_deg);
  const double c = std::cos(th);
  return spec.target_distance * std::sin(th) + wind / (c * c);
}

namespace {

struct Wind {
  double mean, std;
};

Wind wind_of(Domain d, const ArcherySpec& spec) {
  return d == Domain::source ? Wind{spec.source_wind_mean, spec.source_wind_std}
                             : Wind{spec.target_wind_mean, spec.target_wind_std};
}

}  // namespace

double archery_sample(double theta_deg, Domain domain, const ArcherySpec& spec, Rng& rng) {
  Wind w = wind_of(domain, spec);
  return archery_landing(theta_deg, rng.normal(w.mean, w.std), spec);
}

double archery_log_density(double theta_deg, double s_prime, Domain domain,
                           const ArcherySpec& spec) {
  Wind w = wind_of(domain, spec);
  const double c = std::cos(deg_to_rad(theta_deg));
  const double scale = 1.0 / (c * c);
  const double mean = archery_landing(theta_deg, w.mean, spec);
  const double sd = w.std * scale;
  const double z = (s_prime - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double archery_reward(double s_prime) { return -std::abs(s_prime); }

double archery_objective(double theta_deg, Domain domain, const ArcheryRewardFn& reward_fn,
                         const ArcherySpec& spec, std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw std::invalid_argument("archery_objective: n_samples must be >= 1");
  std::vector<double> values(n_samples);
  for (auto& v : values) v = reward_fn(theta_deg, archery_sample(theta_deg, domain, spec, rng));
  return log_sum_exp(values) - std::log(static_cast<double>(n_samples));
}

std::vector<double> archery_theta_grid(const ArcherySpec& spec, std::size_t points) {
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    double frac = points == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = spec.angle_lo_deg + frac * (spec.angle_hi_deg - spec.angle_lo_deg);
  }
  return grid;
}

ArcheryCurve archery_sweep(Domain domain, const ArcheryRewardFn& reward_fn,
                           const ArcherySpec& spec, std::size_t n_samples, const Rng& rng,
                           std::size_t points) {
  ArcheryCurve curve;
  curve.theta_deg = archery_theta_grid(spec, points);
  double best = kNegInf;
  for (double th : curve.theta_deg) {
    Rng stream = rng;
    double j = archery_objective(th, domain, reward_fn, spec, n_samples, stream);
    curve.objective.push_back(j);
    if (j > best) best = j, curve.argmax_deg = th;
  }
  return curve;
}

}  // namespace darc
