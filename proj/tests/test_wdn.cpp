#include "empc/empc.hpp"

#include <gtest/gtest.h>

#include <numeric>

namespace empc::wdn {
namespace {

TEST(Richmond, DefaultBounds) {
  const auto b = build_richmond();
  const double xbar[] = {1.011, 1.095, 0.6, 0.633, 0.807, 0.657};
  for (int i = 0; i < kTanks; ++i) {
    EXPECT_EQ(b.box.x_ub(i), xbar[i]);
    EXPECT_EQ(b.box.x_lb(i), -xbar[i]);
  }
  EXPECT_EQ(b.box.u_lb, Vector::Zero(kPumps));
  EXPECT_EQ(b.box.u_ub, Vector::Constant(kPumps, 50.0));
}

TEST(Richmond, InputChangeWeight) {
  const auto b = build_richmond();
  EXPECT_EQ(b.cost.W, 0.1 * Matrix::Identity(6, 6));
}

TEST(Richmond, Dimensions) {
  const auto b = build_richmond();
  EXPECT_EQ(b.lifted.state_dim(), 144);
  EXPECT_EQ(b.lifted.input_dim(), 144);
  EXPECT_EQ(b.augmented.state_dim(), 150);
  EXPECT_EQ(b.system.A, Matrix::Identity(6, 6));
  EXPECT_EQ(b.system.d_seq.size(), 24u);
}

TEST(Richmond, UnitsAuditPassesAndCatchesEdits) {
  const auto b = build_richmond();
  const auto a = audit_units(b.instance, b.system.B_u, b.system.B_d);
  EXPECT_TRUE(a.ok) << a.detail;
  // Tank A row: +, -, -, -, 0, 0 scaled by dt / S_A.
  const double unit = b.instance.dt_hours / b.instance.tank_areas_m2[0];
  const double row[] = {unit, -unit, -unit, -unit, 0, 0};
  for (int j = 0; j < kPumps; ++j) EXPECT_EQ(b.system.B_u(0, j), row[j]);
  Matrix Bu = b.system.B_u;
  Bu(2, 2) *= 1.0 + 1e-12;
  EXPECT_FALSE(audit_units(b.instance, Bu, b.system.B_d).ok);
}

TEST(Richmond, OverridesValidated) {
  RichmondOverrides o;
  o.tank_areas_m2 = std::vector<double>{30, 20, 10, 15, 25, -1};
  try {
    build_richmond(o);
    FAIL() << "expected InstanceError";
  } catch (const InstanceError& e) {
    EXPECT_NE(std::string(e.what()).find("tank_areas_m2"), std::string::npos);
  }
  RichmondOverrides m;
  m.demand_multiplier = std::vector<double>(24, 1.1);
  EXPECT_THROW(build_richmond(m), InstanceError);
  RichmondOverrides t;
  t.tariff = std::vector<double>(12, 1.0);
  EXPECT_THROW(build_richmond(t), InstanceError);
}

TEST(Profiles, FlatWhenAmplitudeZero) {
  ProfileShape s;
  s.amplitude = 0.0;
  const auto p = synthesize_profiles(0, s);
  for (double m : p.demand_multiplier) EXPECT_DOUBLE_EQ(m, 1.0);
  EXPECT_EQ(p.max_deviation, 0.0);
}

TEST(Profiles, DefaultTariff) {
  const auto p = synthesize_profiles(0);
  for (int h = 0; h < kHours; ++h) {
    const bool off = h <= 6 || h >= 22;
    EXPECT_EQ(p.tariff[h], off ? 0.5 : 1.5) << "hour " << h;
  }
}

TEST(Profiles, MeanIsOneForAnySeed) {
  ProfileShape s;
  s.noise = 0.2;
  for (unsigned long long seed : {1ULL, 7ULL, 99ULL}) {
    const auto p = synthesize_profiles(seed, s);
    const double mean = std::accumulate(p.demand_multiplier.begin(), p.demand_multiplier.end(), 0.0) / kHours;
    EXPECT_NEAR(mean, 1.0, 1e-12);
    double dev = 0.0;
    for (double m : p.demand_multiplier) dev = std::max(dev, std::abs(m - 1.0));
    EXPECT_EQ(dev, p.max_deviation);
  }
  s.noise = 0.8;
  EXPECT_THROW(synthesize_profiles(0, s), InstanceError);
}

TEST(Richmond, LevelsConstantWithoutFlows) {
  RichmondOverrides o;
  o.demand_base_m3_per_h = std::vector<double>(kDemands, 0.0);
  const auto b = build_richmond(o);
  Vector x(6);
  x << 0.1, -0.2, 0.3, 0.0, 0.5, -0.6;
  for (int h = 0; h < kHours; ++h) EXPECT_EQ(step(b.system, x, Vector::Zero(6), h), x);
}

TEST(Richmond, SteadyStateNullspace) {
  const auto b = build_richmond();
  const auto plain = solve_steady_state(b.model(0.0));
  EXPECT_EQ(plain.nullspace_dim(), 6);
  const auto reg = solve_steady_state(b.model(0.001));
  EXPECT_EQ(reg.nullspace_dim(), 0);
  // Carried-input block of the steady state is the last hour's pump flows.
  EXPECT_LE((plain.x_s.tail(6) - plain.u_s.tail(6)).cwiseAbs().maxCoeff(), 1e-6);
}

}  // namespace
}  // namespace empc::wdn
