#pragma once

// Richmond-style water network: six tanks, six pump stations, ten demands,
// one-hour steps over a 24-hour period.

#include "empc/model.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace empc::wdn {

inline constexpr int kTanks = 6;
inline constexpr int kPumps = 6;
inline constexpr int kDemands = 10;
inline constexpr int kHours = 24;

class InstanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tank and pump sign pattern. Row = tank A..F, entry = +1 inflow, -1 outflow.
inline const int kPumpPattern[kTanks][kPumps] = {
    {1, -1, -1, -1, 0, 0},  //
    {0, 1, 0, 0, 0, 0},     //
    {0, 0, 1, 0, 0, 0},     //
    {0, 0, 0, 1, -1, 0},    //
    {0, 0, 0, 0, 1, -1},    //
    {0, 0, 0, 0, 0, 1}};
/// Tank served by each demand.
inline const int kDemandTank[kDemands] = {0, 0, 0, 1, 2, 3, 3, 3, 4, 5};

struct ProfileShape {
  double amplitude = 0.3;      // relative size of the diurnal bump
  double peak_hour = 12.0;     // hour of maximum demand
  double noise = 0.0;          // optional seeded jitter on the multiplier
  double offpeak_price = 0.5;  // cost per m3 pumped, hours 0-6 and 22-23
  double peak_price = 1.5;
};

struct Profiles {
  std::vector<double> demand_multiplier;  // mean exactly 1
  std::vector<double> tariff;
  double max_deviation = 0.0;  // max |m_t - 1|
};

inline Profiles synthesize_profiles(unsigned long long seed, const ProfileShape& shape = {}) {
  if (std::abs(shape.amplitude) + shape.noise >= 1.0)
    throw InstanceError("amplitude + noise must stay below 1 to keep demand positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  Profiles p;
  double mean = 0.0;
  for (int h = 0; h < kHours; ++h) {
    const double phase = 2.0 * std::numbers::pi * (h - shape.peak_hour) / kHours;
    double m = 1.0 + shape.amplitude * std::cos(phase);
    if (shape.noise > 0.0) m += shape.noise * jitter(rng);
    p.demand_multiplier.push_back(m);
    mean += m;
  }
  mean /= kHours;
  for (double& m : p.demand_multiplier) {
    m /= mean;
    p.max_deviation = std::max(p.max_deviation, std::abs(m - 1.0));
  }
  for (int h = 0; h < kHours; ++h)
    p.tariff.push_back((h <= 6 || h >= 22) ? shape.offpeak_price : shape.peak_price);
  return p;
}

struct WdnInstance {
  std::vector<double> tank_areas_m2 = {30, 20, 10, 15, 25, 12};
  double dt_hours = 1.0;
  std::vector<double> demand_base_m3_per_h = {1.2, 0.8, 1.0, 1.5, 0.6, 0.9, 1.1, 0.7, 1.3, 0.9};
  std::vector<double> demand_multiplier;
  std::vector<double> tariff;
  std::vector<double> level_max_m = {1.011, 1.095, 0.6, 0.633, 0.807, 0.657};
  double pump_max_m3_per_h = 50.0;
  double input_change_weight = 0.1;

  Matrix B_u() const {
    Matrix B = Matrix::Zero(kTanks, kPumps);
    for (int i = 0; i < kTanks; ++i)
      for (int j = 0; j < kPumps; ++j)
        if (kPumpPattern[i][j] != 0) B(i, j) = kPumpPattern[i][j] * dt_hours / tank_areas_m2[i];
    return B;
  }

  Matrix B_d() const {
    Matrix B = Matrix::Zero(kTanks, kDemands);
    for (int k = 0; k < kDemands; ++k) {
      const int i = kDemandTank[k];
      B(i, k) = -dt_hours / tank_areas_m2[i];
    }
    return B;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& field, const std::string& why) {
      if (!ok) throw InstanceError(field + ": " + why);
    };
    need(tank_areas_m2.size() == kTanks, "tank_areas_m2", "expected 6 entries");
    for (double s : tank_areas_m2) need(s > 0.0, "tank_areas_m2", "areas must be positive");
    need(dt_hours > 0.0, "dt_hours", "must be positive");
    need(demand_base_m3_per_h.size() == kDemands, "demand_base_m3_per_h", "expected 10 entries");
    for (double d : demand_base_m3_per_h)
      need(d >= 0.0, "demand_base_m3_per_h", "demands must be nonnegative");
    need(demand_multiplier.size() == kHours, "demand_multiplier", "expected 24 entries");
    double mean = 0.0;
    for (double m : demand_multiplier) mean += m;
    mean /= kHours;
    need(std::abs(mean - 1.0) <= 1e-9, "demand_multiplier", "mean must be 1");
    need(tariff.size() == kHours, "tariff", "expected 24 entries");
    need(level_max_m.size() == kTanks, "level_max_m", "expected 6 entries");
    for (double x : level_max_m) need(x > 0.0, "level_max_m", "must be positive");
    need(pump_max_m3_per_h > 0.0, "pump_max_m3_per_h", "must be positive");
    need(input_change_weight >= 0.0, "input_change_weight", "must be nonnegative");
  }
};

/// Optional overrides applied to the default instance.
struct RichmondOverrides {
  std::optional<std::vector<double>> tank_areas_m2;
  std::optional<double> dt_hours;
  std::optional<std::vector<double>> demand_base_m3_per_h;
  std::optional<std::vector<double>> demand_multiplier;
  std::optional<std::vector<double>> tariff;
  std::optional<double> input_change_weight;
  ProfileShape shape;
  unsigned long long seed = 0;
};

struct RichmondBundle {
  WdnInstance instance;
  LinearPeriodicSystem system;
  LiftedSystem lifted;
  AugmentedSystem augmented;
  StageCostSpec cost;
  BoxConstraints box;

  /// Prediction model with the input-change penalty (augmented state).
  PredictionModel model(double epsilon = 0.0) const {
    StageCostSpec c = cost;
    c.epsilon = epsilon;
    return make_model(lifted, c, box, &augmented);
  }

  /// Augmented state with every tank level at its lower bound and the given
  /// previous pump flows.
  Vector initial_state_at_minimum(const Vector& v0) const {
    Vector x(augmented.state_dim());
    x << box.x_lb.replicate(kHours, 1), v0;
    return x;
  }
};

inline RichmondBundle build_richmond(const RichmondOverrides& o = {}) {
  RichmondBundle b;
  WdnInstance& w = b.instance;
  const Profiles prof = synthesize_profiles(o.seed, o.shape);
  w.demand_multiplier = prof.demand_multiplier;
  w.tariff = prof.tariff;
  if (o.tank_areas_m2) w.tank_areas_m2 = *o.tank_areas_m2;
  if (o.dt_hours) w.dt_hours = *o.dt_hours;
  if (o.demand_base_m3_per_h) w.demand_base_m3_per_h = *o.demand_base_m3_per_h;
  if (o.demand_multiplier) w.demand_multiplier = *o.demand_multiplier;
  if (o.tariff) w.tariff = *o.tariff;
  if (o.input_change_weight) w.input_change_weight = *o.input_change_weight;
  w.validate();

  LinearPeriodicSystem& s = b.system;
  s.A = Matrix::Identity(kTanks, kTanks);
  s.B_u = w.B_u();
  s.B_d = w.B_d();
  s.T = kHours;
  const Vector dbar = Eigen::Map<const Vector>(w.demand_base_m3_per_h.data(), kDemands);
  for (int h = 0; h < kHours; ++h) s.d_seq.push_back(w.demand_multiplier[h] * dbar);

  b.lifted = lift(s);
  b.augmented = augment(b.lifted);

  b.cost.alpha_seq.clear();
  for (int h = 0; h < kHours; ++h) b.cost.alpha_seq.push_back(Vector::Constant(kPumps, w.tariff[h]));
  b.cost.input_weight = Matrix::Zero(kPumps, kPumps);
  b.cost.W = w.input_change_weight * Matrix::Identity(kPumps, kPumps);

  b.box.x_ub = Eigen::Map<const Vector>(w.level_max_m.data(), kTanks);
  b.box.x_lb = -b.box.x_ub;
  b.box.u_lb = Vector::Zero(kPumps);
  b.box.u_ub = Vector::Constant(kPumps, w.pump_max_m3_per_h);
  return b;
}

struct UnitsAudit {
  bool ok = true;
  std::string detail;
};

/// Every B_u / B_d entry must be exactly 0 or +-dt/S for its row's tank.
inline UnitsAudit audit_units(const WdnInstance& w, const Matrix& B_u, const Matrix& B_d) {
  UnitsAudit a;
  for (int i = 0; i < kTanks; ++i) {
    const double unit = w.dt_hours / w.tank_areas_m2[i];
    for (int j = 0; j < kPumps; ++j) {
      const double want = kPumpPattern[i][j] * unit;
      if (B_u(i, j) != (kPumpPattern[i][j] ? want : 0.0)) {
        a.ok = false;
        a.detail += "B_u(" + std::to_string(i) + "," + std::to_string(j) + ") ";
      }
    }
    for (int k = 0; k < kDemands; ++k) {
      const double want = kDemandTank[k] == i ? -unit : 0.0;
      if (B_d(i, k) != want) {
        a.ok = false;
        a.detail += "B_d(" + std::to_string(i) + "," + std::to_string(k) + ") ";
      }
    }
  }
  return a;
}

}  // namespace empc::wdn
