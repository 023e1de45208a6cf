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
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bff/toml.hpp"

namespace bff::bubble {

struct BubbleError : std::runtime_error {
    explicit BubbleError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shelled-microbubble constants. The loss terms (mu_l, kappa_s) may be zero
/// and c may be infinite, which disables the corresponding damping channels.
struct BubbleParams {
    double rho_l = 1e3;         // liquid density, kg/m^3
    double sigma_water = 0.073; // clean-interface surface tension, N/m
    double mu_l = 2.0e-3;       // liquid dynamic viscosity, Pa*s
    double kappa = 1.095;       // gas polytropic exponent
    double kappa_s = 7.2e-9;    // shell dilatational viscosity, N*s/m
    double chi = 1.0;           // shell elastic modulus, N/m
    double R0 = 0.975e-6;       // equilibrium radius, m
    double R_buckle = 0.975e-6; // below this the shell buckles (sigma = 0)
    double R_break = 0.0;       // rupture latch threshold; 0 = derive
    double R_ruptured = 0.0;    // post-rupture clean-interface onset; 0 = derive
    double P0_ambient = 101325; // Pa
    double c = 1540.0;          // sound speed in the liquid, m/s

    /// Fills R_break (sigma reaches sigma_water on the elastic branch) and
    /// R_ruptured (= R_break) when left at 0, then checks invariants.
    void finalize();
    toml::Table to_toml() const;
    static BubbleParams from_toml(const toml::Table& t);
};

/// Radius solution sampled on the uniform ODE grid.
struct BubbleTrace {
    double dt = 0.0;
    std::vector<double> t;
    std::vector<double> R;
    std::vector<double> Rdot;
    std::vector<double> Rddot;
    std::vector<char> ruptured;
};

/// Incident pressure sampled uniformly at rate fs.
struct DriveSignal {
    double fs = 0.0;
    std::vector<double> p;
};

enum class Method { RK4, Euler };

/// Shell surface tension: 0 when buckled, chi*(R^2/Rb^2 - 1) on the elastic
/// branch capped at sigma_water, and after rupture sigma_water above
/// R_ruptured / 0 below it.
double surface_tension(double R, bool ruptured, const BubbleParams& p);

/// Radial acceleration solved from the pressure balance
/// rho(R R'' + 3/2 R'^2) = [P0 + 2 sigma(R0)/R0] (R/R0)^(-3 kappa)
///   * (1 - 3 kappa R'/c) - P0 - 2 sigma(R)/R - 4 mu R'/R
///   - 4 kappa_s R'/R^2 - p_ac.
double marmottant_rhs(double R, double Rdot, double p_ac, bool ruptured,
                      const BubbleParams& p);

/// Fixed-step integration against an analytic drive (no resampling error).
/// Rupture latches permanently when R first exceeds R_break. A step landing
/// below 0.05*R0 is retried once at dt/10; if it stays below, integration
/// aborts with the failure time.
BubbleTrace integrate_radius_fn(const std::function<double(double)>& p_ac,
                                double duration, double dt,
                                const BubbleParams& p,
                                Method method = Method::RK4);

/// Sampled-drive front end: the drive is linearly interpolated onto the grid
/// refined `oversample` times, and the trace is returned at that rate.
BubbleTrace integrate_radius(const DriveSignal& drive, const BubbleParams& p,
                             Method method = Method::RK4, int oversample = 20);

/// Far-field scattered pressure (rho/d) * (R^2 R'' + 2 R R'^2) per sample.
std::vector<double> scattered_pressure(const BubbleTrace& trace, double d,
                                       double rho_l);

/// SonoVue-fitted shell constants.
BubbleParams sonovue_preset();

/// Binary trace: float64 columns t, R, Rdot, Rddot back to back, with a JSON
/// sidecar carrying the sample count, dt and the parameter set.
void write_trace(const std::filesystem::path& bin_path,
                 const std::filesystem::path& json_path,
                 const BubbleTrace& trace, const BubbleParams& params);
BubbleTrace read_trace(const std::filesystem::path& bin_path,
                       const std::filesystem::path& json_path);

}  // namespace bff::bubble
