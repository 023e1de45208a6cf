// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bff/network.hpp"

namespace bff::flow {

struct FlowError : std::runtime_error {
    explicit FlowError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FluidParams {
    double viscosity = 3.5e-3;  // dynamic, Pa*s
    double density = 1060.0;    // kg/m^3, for Reynolds checks
};

/// Known pressure at every hanging node, Pa.
struct BoundaryConditions {
    std::map<int, double> pressure;
};

struct FlowSolution {
    std::vector<double> node_pressure;   // per network node index, Pa
    std::vector<double> edge_dp;         // per edge index, P(src) - P(dst), Pa
    std::vector<double> edge_flow;       // per edge index, m^3/s, signed src->dst
    std::vector<double> edge_umax;       // per edge index, centreline speed, m/s
    double conservation_residual = 0.0;  // max node imbalance / max |Q|
};

/// Hydrodynamic resistance of a cylindrical segment: 8*mu*l / (pi*r^4).
double edge_resistance(double radius, double length, double mu);

/// Laminar profile u_max * (1 - r_frac^2); r_frac in [0, 1].
double velocity_profile(double u_max, double r_frac);

/// Reynolds number u*D/nu (nu kinematic). Laminar below 2300.
double reynolds(double u, double diameter, double nu);

struct SolveOptions {
    // Direct sparse Cholesky up to this many interior nodes, then CG.
    int direct_limit = 20000;
    double cg_tolerance = 1e-12;
};

/// Solves interior pressures from the hanging-node boundary pressures and
/// reconstructs per-edge pressure drops, volumetric flows and centreline
/// velocities.
FlowSolution solve_flow(const net::VesselNetwork& net, const BoundaryConditions& bc,
                        const FluidParams& fluid, const SolveOptions& opts = {});

void write_csv(const net::VesselNetwork& net, const FlowSolution& sol,
               const std::filesystem::path& edges_path,
               const std::filesystem::path& nodes_path);

FlowSolution read_csv(const net::VesselNetwork& net,
                      const std::filesystem::path& edges_path,
                      const std::filesystem::path& nodes_path);

}  // namespace bff::flow
