#pragma once

#include "passivity/network.hpp"
#include "passivity/stability.hpp"

namespace passivity::testing {

inline constexpr double kOmegaB = 2.0 * kPi * 60.0;

// Triangle of identical lines, two VSM units and one grid-following unit.
// GFM-2 carries a larger virtual resistance than GFM-1.
inline Network three_bus(double kp_pll = 0.66, double r_shunt = 50.0, double gfm2_rv = 0.3) {
  Network net({"B1", "B2", "B3"});
  net.add_branch("B1", "B2", make_rl_branch(0.086, 0.69, kOmegaB));
  net.add_branch("B1", "B3", make_rl_branch(0.086, 0.69, kOmegaB));
  net.add_branch("B2", "B3", make_rl_branch(0.086, 0.69, kOmegaB));
  if (r_shunt > 0.0) {
    for (const char* b : {"B1", "B2", "B3"}) net.add_shunt(b, make_rl_branch(r_shunt, 0.0, kOmegaB));
  }
  const auto op_gfm = OperatingPoint::from_terminal(-0.35, 0.1, 1.0, kOmegaB);
  net.add_device("B1", make_gfm({}, op_gfm), "GFM-1");
  net.add_device("B2", make_gfm({{"R_v", gfm2_rv}}, op_gfm), "GFM-2");
  net.add_device("B3",
                 make_gfl({{"L_c", 0.1}, {"R_c", 0.02}, {"K_p_i", 0.5}, {"K_p_pll", kp_pll}},
                          OperatingPoint::from_terminal(0.7, 0.0, 1.0, kOmegaB)),
                 "GFL-1");
  return net;
}

inline OperatingPoint single_gfl_operating_point() { return OperatingPoint::from_terminal(0.7, 0.2, 1.0, kOmegaB); }

// One grid-following unit behind a Thevenin grid with X/R = 6.
inline Network single_gfl(double scr, double kp_pll) {
  Network net({"PCC"});
  net.add_shunt("PCC", make_thevenin(scr, 6.0, kOmegaB));
  net.add_device("PCC", make_gfl({{"K_p_pll", kp_pll}}, single_gfl_operating_point()), "GFL");
  return net;
}

// Search box that covers every closed-loop mode of the single-GFL fixture.
inline const Region kGflRegion{-600.0, 300.0, 0.0, 2.0 * kPi * 600.0};

// Bus A: shunt RL and shunt C; branch RL to bus B; RL load at B.
inline Network two_bus_rlc() {
  Network n({"A", "B"});
  n.add_branch("A", "B", make_rl_branch(0.02, 0.3, kOmegaB));
  n.add_shunt("A", make_rl_branch(0.05, 0.2, kOmegaB));
  n.add_shunt("A", make_shunt_c(0.5, kOmegaB));
  n.add_shunt("B", make_rl_branch(0.1, 0.4, kOmegaB));
  return n;
}

}  // namespace passivity::testing
